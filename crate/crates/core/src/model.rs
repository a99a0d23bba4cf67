//! Radar physics and Bayesian information for one scheduling instant.
//!
//! State ordering throughout is `(x, ẋ, y, ẏ)`. Measurement information only
//! touches the position entries `0` and `2`; the velocity rows and columns of
//! every normalized measurement information matrix are exactly zero.

use nalgebra::{Matrix2, Matrix2x4, Matrix4};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure_finite, Error, Result};

pub(crate) const POS: [usize; 2] = [0, 2];
pub(crate) const VEL: [usize; 2] = [1, 3];

/// Fixed radar and physical constants shared by all targets in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarSystemParams {
    pub total_power_w: f64,
    pub min_power_w: f64,
    pub gain: f64,
    pub wavelength_m: f64,
    pub antenna_size_m: f64,
    pub bandwidth_hz: f64,
    pub noise_bandwidth_hz: f64,
    pub noise_temp_k: f64,
    pub noise_figure: f64,
    pub boltzmann_j_per_k: f64,
    pub light_speed_mps: f64,
    pub scan_period_s: f64,
    /// Denominator `k` of the range accuracy model `σ_r² = c² / (k·B²·SNR)`.
    #[serde(default = "default_range_noise_factor")]
    pub range_noise_factor: f64,
    /// Denominator `k` of the azimuth accuracy model `σ_θ² = λ² / (k·D²·SNR)`.
    #[serde(default = "default_angle_noise_factor")]
    pub angle_noise_factor: f64,
}

fn default_range_noise_factor() -> f64 {
    8.0
}

fn default_angle_noise_factor() -> f64 {
    2.0
}

impl RadarSystemParams {
    /// Reference surveillance radar. `min_power_w` is left at zero; scenario
    /// generation resolves it per target count.
    pub fn reference() -> Self {
        Self {
            total_power_w: 2.0e6,
            min_power_w: 0.0,
            gain: 1000.0,
            wavelength_m: 1.0,
            antenna_size_m: 5.0,
            bandwidth_hz: 1.0e6,
            noise_bandwidth_hz: 1.1e6,
            noise_temp_k: 290.0,
            noise_figure: 10f64.powf(0.2),
            boltzmann_j_per_k: 1.38e-23,
            light_speed_mps: 3.0e8,
            scan_period_s: 1.0,
            range_noise_factor: default_range_noise_factor(),
            angle_noise_factor: default_angle_noise_factor(),
        }
    }

    pub fn with_min_power(mut self, min_power_w: f64) -> Self {
        self.min_power_w = min_power_w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let strictly_positive = [
            ("total_power_w", self.total_power_w),
            ("gain", self.gain),
            ("wavelength_m", self.wavelength_m),
            ("antenna_size_m", self.antenna_size_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_bandwidth_hz", self.noise_bandwidth_hz),
            ("noise_temp_k", self.noise_temp_k),
            ("noise_figure", self.noise_figure),
            ("boltzmann_j_per_k", self.boltzmann_j_per_k),
            ("light_speed_mps", self.light_speed_mps),
            ("scan_period_s", self.scan_period_s),
            ("range_noise_factor", self.range_noise_factor),
            ("angle_noise_factor", self.angle_noise_factor),
        ];
        for (name, v) in strictly_positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.min_power_w.is_finite() && self.min_power_w >= 0.0) {
            return Err(Error::Domain(format!(
                "min_power_w must be non-negative, got {}",
                self.min_power_w
            )));
        }
        Ok(())
    }

    /// Checks the budget `N·p_min ≤ P` for `n` targets.
    pub fn check_feasible(&self, n: usize) -> Result<()> {
        if !floors_fit(n, self.min_power_w, self.total_power_w) {
            return Err(Error::Infeasible {
                n,
                min_power: self.min_power_w,
                total_power: self.total_power_w,
            });
        }
        Ok(())
    }
}

/// `N·p_min ≤ P`, allowing one part in 1e12 so that `p_min = P/N` itself
/// is accepted despite rounding.
pub fn floors_fit(n: usize, min_power: f64, total_power: f64) -> bool {
    n as f64 * min_power <= total_power * (1.0 + 1e-12)
}

impl Default for RadarSystemParams {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPhysics {
    pub range: f64,
    pub azimuth: f64,
    pub rcs: f64,
    pub weight: f64,
    pub x: f64,
    pub y: f64,
}

impl TargetPhysics {
    pub fn new(range: f64, azimuth: f64, rcs: f64, weight: f64) -> Result<Self> {
        for (name, v) in [("range", range), ("rcs", rcs), ("weight", weight)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        ensure_finite(azimuth, "azimuth")?;
        Ok(Self {
            range,
            azimuth,
            rcs,
            weight,
            x: range * azimuth.cos(),
            y: range * azimuth.sin(),
        })
    }

    /// Builds physics from a Cartesian position, with `θ = atan2(y, x)`.
    pub fn from_position(x: f64, y: f64, rcs: f64, weight: f64) -> Result<Self> {
        let range = x.hypot(y);
        if range == 0.0 {
            return Err(Error::SingularGeometry);
        }
        let mut phys = Self::new(range, y.atan2(x), rcs, weight)?;
        phys.x = x;
        phys.y = y;
        Ok(phys)
    }
}

/// Per-target constants of the power-scaled noise model `σ² = γ / p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoiseCoeffs {
    pub gamma_r: f64,
    pub gamma_theta: f64,
}

impl MeasurementNoiseCoeffs {
    pub fn new(gamma_r: f64, gamma_theta: f64) -> Result<Self> {
        if !(gamma_r.is_finite() && gamma_r > 0.0 && gamma_theta.is_finite() && gamma_theta > 0.0) {
            return Err(Error::Domain(format!(
                "noise coefficients must be positive, got ({gamma_r}, {gamma_theta})"
            )));
        }
        Ok(Self { gamma_r, gamma_theta })
    }

    /// Measurement covariance `diag(γ_r/p, γ_θ/p)` at transmit power `p`.
    pub fn covariance(&self, power: f64) -> Matrix2<f64> {
        Matrix2::new(self.gamma_r / power, 0.0, 0.0, self.gamma_theta / power)
    }
}

/// Symmetric 4×4 information matrix in `(x, ẋ, y, ẏ)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoMatrix4(pub Matrix4<f64>);

impl InfoMatrix4 {
    pub fn zeros() -> Self {
        Self(Matrix4::zeros())
    }

    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_diagonal(d: [f64; 4]) -> Self {
        Self(Matrix4::from_diagonal(&d.into()))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn trace_p(&self) -> f64 {
        trace_p(&self.0)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.0.amax().max(f64::MIN_POSITIVE);
        (self.0 - self.0.transpose()).amax() <= rel_tol * scale
    }

    pub fn position_block(&self) -> Matrix2<f64> {
        sub2(&self.0, POS, POS)
    }

    /// Schur complement of the velocity block: the information about position
    /// once velocity is marginalized out. Equals the inverse of the position
    /// block of `self⁻¹`.
    pub fn position_schur(&self) -> Result<Matrix2<f64>> {
        let a = sub2(&self.0, POS, POS);
        let b = sub2(&self.0, POS, VEL);
        let c = sub2(&self.0, VEL, VEL);
        let c_inv =
            inv2(&c).ok_or_else(|| Error::Numerical("velocity block of information matrix is singular".into()))?;
        Ok(symmetrize2(a - b * c_inv * b.transpose()))
    }

    /// Closed-form inverse via 2×2 position/velocity blocks, falling back to
    /// LU when the velocity block is singular.
    pub fn inverse(&self) -> Result<Matrix4<f64>> {
        match block_inverse(&self.0) {
            Some(inv) => Ok(inv),
            None => self.lu_inverse(),
        }
    }

    /// Generic LU inverse; used as the independent reference for `inverse`.
    pub fn lu_inverse(&self) -> Result<Matrix4<f64>> {
        self.0
            .lu()
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Numerical("information matrix is singular".into()))
    }
}

pub(crate) fn sub2(m: &Matrix4<f64>, rows: [usize; 2], cols: [usize; 2]) -> Matrix2<f64> {
    Matrix2::new(
        m[(rows[0], cols[0])],
        m[(rows[0], cols[1])],
        m[(rows[1], cols[0])],
        m[(rows[1], cols[1])],
    )
}

fn put2(m: &mut Matrix4<f64>, rows: [usize; 2], cols: [usize; 2], block: &Matrix2<f64>) {
    for (bi, &r) in rows.iter().enumerate() {
        for (bj, &c) in cols.iter().enumerate() {
            m[(r, c)] = block[(bi, bj)];
        }
    }
}

fn symmetrize2(m: Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Matrix2::new(m[(0, 0)], off, off, m[(1, 1)])
}

pub(crate) fn inv2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let det = a * d - b * c;
    let scale = (a * d).abs() + (b * c).abs();
    if !(det.is_finite() && det.abs() > 1e-15 * scale && det != 0.0) {
        return None;
    }
    Some(Matrix2::new(d / det, -b / det, -c / det, a / det))
}

fn block_inverse(m: &Matrix4<f64>) -> Option<Matrix4<f64>> {
    let a = sub2(m, POS, POS);
    let b = sub2(m, POS, VEL);
    let c = sub2(m, VEL, VEL);
    let c_inv = inv2(&c)?;
    let s_inv = inv2(&(a - b * c_inv * b.transpose()))?;
    let upper_right = -s_inv * b * c_inv;
    let lower_right = c_inv + c_inv * b.transpose() * s_inv * b * c_inv;
    let mut out = Matrix4::zeros();
    put2(&mut out, POS, POS, &s_inv);
    put2(&mut out, POS, VEL, &upper_right);
    put2(&mut out, VEL, POS, &upper_right.transpose());
    put2(&mut out, VEL, VEL, &lower_right);
    Some(out)
}

/// Received SNR per watt of transmit power, `G²λ²σ / ((4π)³ R⁴ F k T₀ Bₙ)`.
pub fn snr_per_watt(phys: &TargetPhysics, sys: &RadarSystemParams) -> Result<f64> {
    let numerator = sys.gain * sys.gain * sys.wavelength_m * sys.wavelength_m * phys.rcs;
    let denominator = (4.0 * PI).powi(3)
        * phys.range.powi(4)
        * sys.noise_figure
        * sys.boltzmann_j_per_k
        * sys.noise_temp_k
        * sys.noise_bandwidth_hz;
    let v = numerator / denominator;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Domain(format!(
            "SNR per watt is not a positive finite number ({v}) at range {} m",
            phys.range
        )));
    }
    Ok(v)
}

pub fn noise_coeffs(phys: &TargetPhysics, sys: &RadarSystemParams) -> Result<MeasurementNoiseCoeffs> {
    noise_coeffs_from_snr(snr_per_watt(phys, sys)?, sys)
}

pub fn noise_coeffs_from_snr(snr_per_watt: f64, sys: &RadarSystemParams) -> Result<MeasurementNoiseCoeffs> {
    let c = sys.light_speed_mps;
    let b = sys.bandwidth_hz;
    let range_term = c * c / (sys.range_noise_factor * b * b);
    let angle_term =
        sys.wavelength_m * sys.wavelength_m / (sys.angle_noise_factor * sys.antenna_size_m * sys.antenna_size_m);
    MeasurementNoiseCoeffs::new(range_term / snr_per_watt, angle_term / snr_per_watt)
}

/// Jacobian of `(r, θ)` with respect to the state.
pub fn measurement_jacobian(x: f64, y: f64) -> Result<Matrix2x4<f64>> {
    let r2 = x * x + y * y;
    if !(r2 > 0.0) || !r2.is_finite() {
        return Err(Error::SingularGeometry);
    }
    let r = r2.sqrt();
    #[rustfmt::skip]
    let h = Matrix2x4::new(
        x / r,   0.0, y / r,  0.0,
        -y / r2, 0.0, x / r2, 0.0,
    );
    Ok(h)
}

/// Unit-power measurement information `Hᵀ diag(γ_r, γ_θ)⁻¹ H` at `(x, y)`.
pub fn normalized_meas_info(x: f64, y: f64, coeffs: &MeasurementNoiseCoeffs) -> Result<InfoMatrix4> {
    let r2 = x * x + y * y;
    if !(r2 > 0.0) || !r2.is_finite() {
        return Err(Error::SingularGeometry);
    }
    let r4 = r2 * r2;
    let (gr, gt) = (coeffs.gamma_r, coeffs.gamma_theta);
    let xi11 = x * x / (gr * r2) + y * y / (gt * r4);
    let xi33 = y * y / (gr * r2) + x * x / (gt * r4);
    let xi13 = x * y / (gr * r2) - x * y / (gt * r4);
    let mut m = Matrix4::zeros();
    m[(0, 0)] = xi11;
    m[(2, 2)] = xi33;
    m[(0, 2)] = xi13;
    m[(2, 0)] = xi13;
    Ok(InfoMatrix4(m))
}

pub fn normalized_meas_info_for(phys: &TargetPhysics, coeffs: &MeasurementNoiseCoeffs) -> Result<InfoMatrix4> {
    normalized_meas_info(phys.x, phys.y, coeffs)
}

/// Diagonal prior information `diag(σ_p⁻², σ_v⁻², σ_p⁻², σ_v⁻²)`.
pub fn prior_info(sigma_p: f64, sigma_v: f64) -> Result<InfoMatrix4> {
    if !(sigma_p.is_finite() && sigma_p > 0.0 && sigma_v.is_finite() && sigma_v > 0.0) {
        return Err(Error::Domain(format!(
            "prior standard deviations must be positive, got ({sigma_p}, {sigma_v})"
        )));
    }
    let ip = 1.0 / (sigma_p * sigma_p);
    let iv = 1.0 / (sigma_v * sigma_v);
    Ok(InfoMatrix4::from_diagonal([ip, iv, ip, iv]))
}

pub fn posterior_info(j_prior: &InfoMatrix4, j_d: &InfoMatrix4, power: f64) -> InfoMatrix4 {
    InfoMatrix4(j_prior.0 + j_d.0 * power)
}

/// Sum of the x and y diagonal entries.
pub fn trace_p(m: &Matrix4<f64>) -> f64 {
    m[(0, 0)] + m[(2, 2)]
}

/// Weighted BCRLB `w·√Tr_p(J(p)⁻¹)` through the full 4×4 inverse.
pub fn bcrlb(j_prior: &InfoMatrix4, j_d: &InfoMatrix4, power: f64, weight: f64) -> Result<f64> {
    let inv = posterior_info(j_prior, j_d, power).inverse()?;
    let t = trace_p(&inv);
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Numerical(format!("position trace of inverse is {t}")));
    }
    Ok(weight * t.sqrt())
}

/// `∂/∂p` of the weighted BCRLB through the full 4×4 inverse:
/// `−w·Tr_p(J⁻¹ J̃_d J⁻¹) / (2√Tr_p(J⁻¹))`.
pub fn bcrlb_derivative(j_prior: &InfoMatrix4, j_d: &InfoMatrix4, power: f64, weight: f64) -> Result<f64> {
    let inv = posterior_info(j_prior, j_d, power).inverse()?;
    let t = trace_p(&inv);
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Numerical(format!("position trace of inverse is {t}")));
    }
    let sandwich = inv * j_d.0 * inv;
    Ok(-weight * trace_p(&sandwich) / (2.0 * t.sqrt()))
}

/// Position-marginal form of one target's information: `J(p)⁻¹` restricted to
/// position equals `(S + p·K)⁻¹` with `S` the prior Schur complement and `K`
/// the position block of `J̃_d`. Every quantity below is an exact 2×2
/// evaluation of the corresponding 4×4 expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedInfo {
    prior: [f64; 3],
    meas: [f64; 3],
    weight: f64,
}

impl ReducedInfo {
    pub fn new(j_prior: &InfoMatrix4, j_d: &InfoMatrix4, weight: f64) -> Result<Self> {
        let s = j_prior.position_schur()?;
        let (a, b, c) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
        if !(a > 0.0 && c > 0.0 && a * c - b * b > 0.0) {
            return Err(Error::Numerical("prior information is not positive definite".into()));
        }
        let k = j_d.position_block();
        Ok(Self {
            prior: [a, b, c],
            meas: [k[(0, 0)], 0.5 * (k[(0, 1)] + k[(1, 0)]), k[(1, 1)]],
            weight,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    #[inline]
    fn posterior(&self, power: f64) -> (f64, f64, f64, f64) {
        let a = self.prior[0] + power * self.meas[0];
        let b = self.prior[1] + power * self.meas[1];
        let c = self.prior[2] + power * self.meas[2];
        (a, b, c, a * c - b * b)
    }

    /// `Tr_p(J(p)⁻¹)`.
    #[inline]
    pub fn trace_inv(&self, power: f64) -> f64 {
        let (a, _, c, det) = self.posterior(power);
        (a + c) / det
    }

    /// `w·√Tr_p(J(p)⁻¹)`.
    #[inline]
    pub fn weighted_bcrlb(&self, power: f64) -> f64 {
        self.weight * self.trace_inv(power).sqrt()
    }

    /// Magnitude of the weighted BCRLB slope, `w·Tr_p(J⁻¹J̃_dJ⁻¹)/(2√Tr_p(J⁻¹))`.
    #[inline]
    pub fn marginal_benefit(&self, power: f64) -> f64 {
        self.bcrlb_and_benefit(power).1
    }

    #[inline]
    pub fn bcrlb_and_benefit(&self, power: f64) -> (f64, f64) {
        let (a, b, c, det) = self.posterior(power);
        let [k11, k13, k33] = self.meas;
        // Tr(K·adj(M)²) / det², adj(M) = [[c, -b], [-b, a]]
        let sandwich = (k11 * (c * c + b * b) + k33 * (a * a + b * b) - 2.0 * k13 * b * (a + c)) / (det * det);
        let root = ((a + c) / det).sqrt();
        (self.weight * root, self.weight * sandwich / (2.0 * root))
    }

    /// `Tr_p(J_prior⁻¹)`.
    pub fn prior_trace_inv(&self) -> f64 {
        self.trace_inv(0.0)
    }

    /// `Tr_p(J̃_d⁻¹)` for the position block alone; `None` when singular.
    pub fn meas_trace_inv(&self) -> Option<f64> {
        let [k11, k13, k33] = self.meas;
        let det = k11 * k33 - k13 * k13;
        if !(det > 1e-15 * (k11 * k33).abs()) {
            return None;
        }
        Some((k11 + k33) / det)
    }
}
