//! Closed-loop tracking: constant-velocity truths, per-step power
//! allocation from the predicted information, range/azimuth measurements,
//! EKF updates and the information recursion behind the dynamic bound.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::Allocator;
use crate::error::{Error, Result};
use crate::model::{
    measurement_jacobian, noise_coeffs, normalized_meas_info, InfoMatrix4, MeasurementNoiseCoeffs, TargetPhysics,
};
use crate::problem::{AllocationProblem, TargetInfo};
use crate::rng::{child_key, stream};
use crate::scenario::ScenarioInstance;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub estimate: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl TrackState {
    pub fn position(&self) -> (f64, f64) {
        (self.estimate[0], self.estimate[2])
    }
}

/// Block CV transition in `(x, ẋ, y, ẏ)` order.
pub fn cv_transition(t: f64) -> Matrix4<f64> {
    let mut phi = Matrix4::identity();
    phi[(0, 1)] = t;
    phi[(2, 3)] = t;
    phi
}

/// White-noise-acceleration covariance, `q·[[T³/3, T²/2], [T²/2, T]]` per axis.
pub fn process_noise(t: f64, q: f64) -> Matrix4<f64> {
    let (a, b, c) = (q * t * t * t / 3.0, q * t * t / 2.0, q * t);
    let mut m = Matrix4::zeros();
    for k in [0, 2] {
        m[(k, k)] = a;
        m[(k, k + 1)] = b;
        m[(k + 1, k)] = b;
        m[(k + 1, k + 1)] = c;
    }
    m
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

fn is_spd(m: &Matrix4<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && m.cholesky().is_some()
}

pub fn cv_predict(state: &TrackState, t: f64, q: f64) -> Result<TrackState> {
    let phi = cv_transition(t);
    let estimate = phi * state.estimate;
    let mut cov = symmetrize(&(phi * state.covariance * phi.transpose() + process_noise(t, q)));
    if !is_spd(&cov) {
        let load = 1e-9 * cov.diagonal().amax().max(1.0);
        cov += Matrix4::identity() * load;
        if !is_spd(&cov) {
            return Err(Error::Numerical("predicted covariance is not positive definite".into()));
        }
    }
    Ok(TrackState {
        estimate,
        covariance: cov,
    })
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a - TAU * ((a + PI) / TAU).floor();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

struct Gain {
    h: nalgebra::Matrix2x4<f64>,
    k: nalgebra::Matrix4x2<f64>,
    r: Matrix2<f64>,
    innovation: Vector2<f64>,
}

fn gain(state: &TrackState, measurement: (f64, f64), power: f64, coeffs: &MeasurementNoiseCoeffs) -> Result<Gain> {
    if !(power > 0.0) {
        return Err(Error::Domain(format!(
            "measurement power must be positive, got {power}"
        )));
    }
    let (x, y) = state.position();
    let h = measurement_jacobian(x, y)?;
    let predicted = Vector2::new(x.hypot(y), y.atan2(x));
    let innovation = Vector2::new(measurement.0 - predicted[0], wrap_angle(measurement.1 - predicted[1]));
    let r = coeffs.covariance(power);
    let s = h * state.covariance * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
    let k = state.covariance * h.transpose() * s_inv;
    Ok(Gain { h, k, r, innovation })
}

/// EKF update with the Joseph-form covariance.
pub fn ekf_update(
    state: &TrackState,
    measurement: (f64, f64),
    power: f64,
    coeffs: &MeasurementNoiseCoeffs,
) -> Result<TrackState> {
    let g = gain(state, measurement, power, coeffs)?;
    let ikh = Matrix4::identity() - g.k * g.h;
    let cov = ikh * state.covariance * ikh.transpose() + g.k * g.r * g.k.transpose();
    Ok(TrackState {
        estimate: state.estimate + g.k * g.innovation,
        covariance: symmetrize(&cov),
    })
}

/// EKF update with the short `(I − KH)P` covariance form.
pub fn ekf_update_simple(
    state: &TrackState,
    measurement: (f64, f64),
    power: f64,
    coeffs: &MeasurementNoiseCoeffs,
) -> Result<TrackState> {
    let g = gain(state, measurement, power, coeffs)?;
    let cov = (Matrix4::identity() - g.k * g.h) * state.covariance;
    Ok(TrackState {
        estimate: state.estimate + g.k * g.innovation,
        covariance: symmetrize(&cov),
    })
}

/// Iterated EKF update: Gauss-Newton relinearization of the measurement
/// around the current iterate, then a Joseph-form covariance at the final
/// Jacobian. With one iteration this is [`ekf_update`].
pub fn iterated_ekf_update(
    state: &TrackState,
    measurement: (f64, f64),
    power: f64,
    coeffs: &MeasurementNoiseCoeffs,
    max_iter: usize,
) -> Result<TrackState> {
    if !(power > 0.0) {
        return Err(Error::Domain(format!(
            "measurement power must be positive, got {power}"
        )));
    }
    let r = coeffs.covariance(power);
    let prior = state.estimate;
    let mut iterate = prior;
    let mut last = None;
    for _ in 0..max_iter.max(1) {
        let (x, y) = (iterate[0], iterate[2]);
        let h = measurement_jacobian(x, y)?;
        let residual = Vector2::new(measurement.0 - x.hypot(y), wrap_angle(measurement.1 - y.atan2(x)));
        let innovation = residual - h * (prior - iterate);
        let s = h * state.covariance * h.transpose() + r;
        let s_inv = s
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
        let k = state.covariance * h.transpose() * s_inv;
        let next = prior + k * innovation;
        let step = (next - iterate).amax();
        iterate = next;
        last = Some((h, k));
        if step <= 1e-9 * iterate.amax().max(1.0) {
            break;
        }
    }
    let (h, k) = last.expect("at least one iteration");
    let ikh = Matrix4::identity() - k * h;
    let cov = ikh * state.covariance * ikh.transpose() + k * r * k.transpose();
    Ok(TrackState {
        estimate: iterate,
        covariance: symmetrize(&cov),
    })
}

/// Predicted information `(Q + Φ J⁻¹ Φᵀ)⁻¹`.
pub fn predict_info(bim: &InfoMatrix4, phi: &Matrix4<f64>, q: &Matrix4<f64>) -> Result<InfoMatrix4> {
    let cov = q + phi * bim.inverse()? * phi.transpose();
    Ok(InfoMatrix4(symmetrize(&InfoMatrix4(symmetrize(&cov)).inverse()?)))
}

/// `J_next = (Q + Φ J⁻¹ Φᵀ)⁻¹ + p·J̃_d`.
pub fn bim_recursion(
    bim: &InfoMatrix4,
    phi: &Matrix4<f64>,
    q: &Matrix4<f64>,
    j_d: &InfoMatrix4,
    power: f64,
) -> Result<InfoMatrix4> {
    let prior = predict_info(bim, phi, q)?;
    Ok(InfoMatrix4(prior.0 + j_d.0 * power))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingRunConfig {
    pub steps: usize,
    pub n_targets: usize,
    pub monte_carlo: usize,
    pub allocator_name: String,
    /// Process noise intensity `q` (m²/s³).
    pub process_noise_intensity: f64,
    pub seed: u64,
    /// When false, measurements equal the true range and azimuth.
    pub measurement_noise: bool,
    /// Position error above this multiple of the initial range marks a track diverged.
    pub divergence_factor: f64,
    /// Gauss-Newton iterations per measurement update; 1 is the plain EKF.
    pub update_iterations: usize,
}

impl Default for TrackingRunConfig {
    fn default() -> Self {
        Self {
            steps: 80,
            n_targets: 10,
            monte_carlo: 500,
            allocator_name: "discovered".into(),
            process_noise_intensity: 1.0,
            seed: 2024,
            measurement_noise: true,
            divergence_factor: 10.0,
            update_iterations: 10,
        }
    }
}

impl TrackingRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.monte_carlo == 0 {
            return Err(Error::Domain("steps and monte_carlo must be at least 1".into()));
        }
        if !(self.process_noise_intensity.is_finite() && self.process_noise_intensity >= 0.0) {
            return Err(Error::Domain("process noise intensity must be non-negative".into()));
        }
        Ok(())
    }
}

/// Aggregated statistics of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub step: usize,
    /// Mean over runs of `Σ w_i·√Tr_p(J_i⁻¹) / Σ w_i`.
    pub bcrlb: f64,
    /// `Σ w_i·RMSE_i / Σ w_i`, RMSE over runs per target.
    pub rmse: f64,
    /// Tracks flagged diverged at this step, summed over runs.
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingSeries {
    pub steps: Vec<StepStats>,
}

impl TrackingSeries {
    pub fn mean_rmse(&self) -> f64 {
        self.steps.iter().map(|s| s.rmse).sum::<f64>() / self.steps.len() as f64
    }

    pub fn mean_bcrlb(&self) -> f64 {
        self.steps.iter().map(|s| s.bcrlb).sum::<f64>() / self.steps.len() as f64
    }
}

struct RunTrace {
    /// `[step][target]` squared position error.
    sq_err: Vec<Vec<f64>>,
    /// `[step]` weighted mean bound.
    bound: Vec<f64>,
    /// `[step][target]` diverged flag.
    diverged: Vec<Vec<bool>>,
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn run_once(cfg: &TrackingRunConfig, scen: &ScenarioInstance, allocator: &Allocator, run: usize) -> Result<RunTrace> {
    let n = scen.len();
    let sys = &scen.sys;
    let t = sys.scan_period_s;
    let phi = cv_transition(t);
    let q = process_noise(t, cfg.process_noise_intensity);
    let q_chol = if cfg.process_noise_intensity > 0.0 {
        Some(
            q.cholesky()
                .ok_or_else(|| Error::Numerical("process noise is not positive definite".into()))?
                .l(),
        )
    } else {
        None
    };

    // Draws depend only on (seed, run) and a fixed per-step order, so every
    // allocator sees the same truths and the same standard-normal noise.
    let run_key = child_key(cfg.seed, run as u64);
    let mut world = stream(run_key, 0);
    let mut sensor = stream(run_key, 1);

    let weights: Vec<f64> = scen.targets.iter().map(|t| t.phys.weight).collect();
    let w_sum: f64 = weights.iter().sum();
    let mut truth: Vec<Vector4<f64>> = Vec::with_capacity(n);
    let mut tracks: Vec<TrackState> = Vec::with_capacity(n);
    let mut bims: Vec<InfoMatrix4> = Vec::with_capacity(n);
    let mut limits = Vec::with_capacity(n);
    for target in &scen.targets {
        let x0 = Vector4::from(target.initial_state());
        let (sp, sv) = (target.record.sigma_p_m, target.record.sigma_v_mps);
        let err = Vector4::new(
            sp * normal(&mut world),
            sv * normal(&mut world),
            sp * normal(&mut world),
            sv * normal(&mut world),
        );
        truth.push(x0);
        tracks.push(TrackState {
            estimate: x0 + err,
            covariance: Matrix4::from_diagonal(&Vector4::new(sp * sp, sv * sv, sp * sp, sv * sv)),
        });
        bims.push(target.j_prior);
        limits.push(cfg.divergence_factor * target.phys.range);
    }

    let mut trace = RunTrace {
        sq_err: Vec::with_capacity(cfg.steps),
        bound: Vec::with_capacity(cfg.steps),
        diverged: Vec::with_capacity(cfg.steps),
    };
    for _ in 0..cfg.steps {
        // truths move first
        for x in truth.iter_mut() {
            let z = Vector4::new(
                normal(&mut world),
                normal(&mut world),
                normal(&mut world),
                normal(&mut world),
            );
            *x = phi * *x + q_chol.map_or(Vector4::zeros(), |l| l * z);
        }

        // prediction and the allocation problem it induces
        let mut infos = Vec::with_capacity(n);
        let mut models = Vec::with_capacity(n);
        for i in 0..n {
            tracks[i] = cv_predict(&tracks[i], t, cfg.process_noise_intensity)?;
            let prior = predict_info(&bims[i], &phi, &q)?;
            let (x, y) = tracks[i].position();
            let target = &scen.targets[i];
            let phys = TargetPhysics::from_position(x, y, target.phys.rcs, target.phys.weight)?;
            let coeffs = noise_coeffs(&phys, sys)?;
            let j_d = normalized_meas_info(x, y, &coeffs)?;
            infos.push(TargetInfo::new(phys.range, phys.rcs, phys.weight, 0.0, prior, j_d)?);
            models.push((coeffs, prior, j_d));
        }
        let problem = AllocationProblem::new(sys.total_power_w, sys.min_power_w, infos)?;
        let power = allocator.allocate(&problem)?;

        let mut sq = Vec::with_capacity(n);
        let mut div = Vec::with_capacity(n);
        let mut bound = 0.0;
        for i in 0..n {
            let (coeffs, prior, j_d) = &models[i];
            let p = power[i];
            let (tx, ty) = (truth[i][0], truth[i][2]);
            let true_phys = TargetPhysics::from_position(tx, ty, scen.targets[i].phys.rcs, weights[i])?;
            let true_coeffs = noise_coeffs(&true_phys, sys)?;
            let (zr, zt) = (normal(&mut sensor), normal(&mut sensor));
            let mut meas = (true_phys.range, true_phys.azimuth);
            if cfg.measurement_noise {
                meas.0 += zr * (true_coeffs.gamma_r / p).sqrt();
                meas.1 = wrap_angle(meas.1 + zt * (true_coeffs.gamma_theta / p).sqrt());
            }
            tracks[i] = iterated_ekf_update(&tracks[i], meas, p, coeffs, cfg.update_iterations)?;
            bims[i] = InfoMatrix4(prior.0 + j_d.0 * p);
            bound += weights[i] * trace_p_inv(&bims[i])?.sqrt();

            let (ex, ey) = (tracks[i].estimate[0] - tx, tracks[i].estimate[2] - ty);
            let e2 = ex * ex + ey * ey;
            div.push(e2.sqrt() > limits[i]);
            sq.push(e2);
        }
        trace.sq_err.push(sq);
        trace.bound.push(bound / w_sum);
        trace.diverged.push(div);
    }
    Ok(trace)
}

fn trace_p_inv(j: &InfoMatrix4) -> Result<f64> {
    let t = crate::model::trace_p(&j.inverse()?);
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Numerical(format!("bound trace is {t}")));
    }
    Ok(t)
}

/// Monte Carlo closed loop for one allocator on one scenario.
pub fn run_closed_loop(
    cfg: &TrackingRunConfig,
    scen: &ScenarioInstance,
    allocator: &Allocator,
) -> Result<TrackingSeries> {
    cfg.validate()?;
    let runs: Vec<RunTrace> = (0..cfg.monte_carlo)
        .into_par_iter()
        .map(|r| run_once(cfg, scen, allocator, r))
        .collect::<Result<Vec<_>>>()?;

    let n = scen.len();
    let weights: Vec<f64> = scen.targets.iter().map(|t| t.phys.weight).collect();
    let w_sum: f64 = weights.iter().sum();
    let m = cfg.monte_carlo as f64;
    let mut steps = Vec::with_capacity(cfg.steps);
    for k in 0..cfg.steps {
        let mut bound = 0.0;
        let mut sq = vec![0.0; n];
        let mut diverged = 0;
        for run in &runs {
            bound += run.bound[k];
            for ((acc, e), d) in sq.iter_mut().zip(&run.sq_err[k]).zip(&run.diverged[k]) {
                *acc += e;
                diverged += *d as usize;
            }
        }
        let rmse = (0..n).map(|i| weights[i] * (sq[i] / m).sqrt()).sum::<f64>() / w_sum;
        steps.push(StepStats {
            step: k + 1,
            bcrlb: bound / m,
            rmse,
            diverged,
        });
    }
    Ok(TrackingSeries { steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: [f64; 4], var: f64) -> TrackState {
        TrackState {
            estimate: Vector4::from(x),
            covariance: Matrix4::identity() * var,
        }
    }

    fn coeffs() -> MeasurementNoiseCoeffs {
        MeasurementNoiseCoeffs::new(1e4, 1e-4).unwrap()
    }

    #[test]
    fn predict_without_noise() {
        let s = state([100.0, 0.0, 50.0, 0.0], 4.0);
        let p = cv_predict(&s, 1.0, 0.0).unwrap();
        assert_eq!(p.estimate, s.estimate);
        let phi = cv_transition(1.0);
        assert_eq!(p.covariance, symmetrize(&(phi * s.covariance * phi.transpose())));
        let moving = cv_predict(&state([0.0, 1.0, 0.0, 0.0], 1.0), 1.0, 0.0).unwrap();
        assert_eq!(moving.estimate[0], 1.0);
        let noisy = cv_predict(&s, 1.0, 2.0).unwrap();
        assert!(noisy.covariance.trace() > p.covariance.trace());
    }

    #[test]
    fn zero_innovation_keeps_estimate() {
        let s = state([3000.0, 10.0, 4000.0, -5.0], 100.0);
        let u = ekf_update(&s, (5000.0, (4000.0f64).atan2(3000.0)), 10.0, &coeffs()).unwrap();
        for k in 0..4 {
            assert!((u.estimate[k] - s.estimate[k]).abs() <= 1e-12 * s.estimate[k].abs().max(1.0));
        }
    }

    #[test]
    fn joseph_and_simple_forms_agree() {
        let s = state([3000.0, 10.0, 4000.0, -5.0], 100.0);
        let a = ekf_update(&s, (5010.0, 0.93), 10.0, &coeffs()).unwrap();
        let b = ekf_update_simple(&s, (5010.0, 0.93), 10.0, &coeffs()).unwrap();
        let scale = a.covariance.amax();
        assert!((a.covariance - b.covariance).amax() <= 1e-8 * scale);
        assert!((a.estimate - b.estimate).amax() <= 1e-9 * a.estimate.amax());
    }

    #[test]
    fn single_iteration_is_plain_ekf() {
        let s = state([3000.0, 10.0, 4000.0, -5.0], 1e4);
        let a = ekf_update(&s, (5030.0, 0.93), 10.0, &coeffs()).unwrap();
        let b = iterated_ekf_update(&s, (5030.0, 0.93), 10.0, &coeffs(), 1).unwrap();
        assert!((a.estimate - b.estimate).amax() <= 1e-9 * a.estimate.amax());
        assert!((a.covariance - b.covariance).amax() <= 1e-9 * a.covariance.amax());
    }

    #[test]
    fn iterated_update_handles_wide_priors() {
        // 5 km cross-range prior error at 80 km, metre-level range noise
        let truth = (80_000.0f64, 0.0f64);
        let s = state([80_000.0, 0.0, 5_000.0, 0.0], 1e8);
        let c = MeasurementNoiseCoeffs::new(2.0, 4e-6).unwrap();
        let meas = (truth.0.hypot(truth.1), truth.1.atan2(truth.0));
        let plain = ekf_update(&s, meas, 1.0, &c).unwrap();
        let iter = iterated_ekf_update(&s, meas, 1.0, &c, 20).unwrap();
        let err = |t: &TrackState| (t.estimate[0] - truth.0).hypot(t.estimate[2] - truth.1);
        assert!(err(&iter) < 5.0, "{}", err(&iter));
        assert!(err(&plain) > 50.0, "{}", err(&plain));
    }

    #[test]
    fn more_power_shrinks_position_covariance() {
        let s = state([3000.0, 10.0, 4000.0, -5.0], 100.0);
        let mut last = f64::INFINITY;
        for p in [0.1, 1.0, 10.0, 100.0, 1000.0] {
            let u = ekf_update(&s, (5000.0, 0.9), p, &coeffs()).unwrap();
            let tr = u.covariance[(0, 0)] + u.covariance[(2, 2)];
            assert!(tr < last);
            last = tr;
        }
    }

    #[test]
    fn angle_wrap_across_the_cut() {
        use std::f64::consts::PI;
        assert!((wrap_angle(PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(-3.0 * PI + 0.2) - (-PI + 0.2)).abs() < 1e-12);
        // a track just behind the cut measured just in front of it
        let s = state([-5000.0, 0.0, -1.0, 0.0], 100.0);
        let u = ekf_update(&s, (5000.0, PI - 1e-4), 10.0, &coeffs()).unwrap();
        assert!(u.estimate[2] > s.estimate[2]);
    }

    #[test]
    fn bim_identity_step() {
        let j = InfoMatrix4::from_diagonal([2.0, 3.0, 4.0, 5.0]);
        let out = bim_recursion(&j, &Matrix4::identity(), &Matrix4::zeros(), &InfoMatrix4::zeros(), 0.0).unwrap();
        assert!((out.0 - j.0).amax() < 1e-12);
    }

    #[test]
    fn bim_matches_kalman_information_for_linear_measurement() {
        // linear measurement of position: the EKF with a fixed H is a Kalman filter
        let s = state([3000.0, 10.0, 4000.0, -5.0], 100.0);
        let c = coeffs();
        let (t, q) = (1.0, 0.5);
        let pred = cv_predict(&s, t, q).unwrap();
        let upd = ekf_update(&pred, (5000.0, 0.9), 7.0, &c).unwrap();
        let (x, y) = pred.position();
        let j_d = normalized_meas_info(x, y, &c).unwrap();
        let j0 = InfoMatrix4(s.covariance.try_inverse().unwrap());
        let j1 = bim_recursion(&j0, &cv_transition(t), &process_noise(t, q), &j_d, 7.0).unwrap();
        let cov = j1.inverse().unwrap();
        assert!((cov - upd.covariance).amax() <= 1e-8 * cov.amax());
    }

    #[test]
    fn bound_falls_with_power() {
        let j = InfoMatrix4::from_diagonal([1e-4, 1e-2, 1e-4, 1e-2]);
        let j_d = normalized_meas_info(3000.0, 4000.0, &coeffs()).unwrap();
        let phi = cv_transition(1.0);
        let q = process_noise(1.0, 1.0);
        let a = bim_recursion(&j, &phi, &q, &j_d, 1.0).unwrap();
        let b = bim_recursion(&j, &phi, &q, &j_d, 2.0).unwrap();
        assert!(trace_p_inv(&b).unwrap() < trace_p_inv(&a).unwrap());
    }

    fn small_scenario() -> ScenarioInstance {
        let sys = crate::scenario::GeneratorConfig::default().system_for(3);
        crate::scenario::generate(77, 3, &sys, crate::scenario::Label::Eval).unwrap()
    }

    #[test]
    fn closed_loop_is_reproducible() {
        let cfg = TrackingRunConfig {
            steps: 5,
            monte_carlo: 6,
            ..Default::default()
        };
        let scen = small_scenario();
        let alloc = Allocator::from_name("discovered").unwrap();
        let a = run_closed_loop(&cfg, &scen, &alloc).unwrap();
        let b = run_closed_loop(&cfg, &scen, &alloc).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 5);
    }

    #[test]
    fn noiseless_loop_converges() {
        let cfg = TrackingRunConfig {
            steps: 120,
            monte_carlo: 4,
            process_noise_intensity: 0.0,
            measurement_noise: false,
            ..Default::default()
        };
        let scen = small_scenario();
        let s = run_closed_loop(&cfg, &scen, &Allocator::Uniform).unwrap();
        // the velocity error is learned slowly, then the position error decays
        let peak = s.steps.iter().map(|st| st.rmse).fold(0.0, f64::max);
        let last = s.steps.last().unwrap();
        assert!(last.rmse < 0.25 * peak, "{peak} -> {}", last.rmse);
        assert!(last.rmse < last.bcrlb);
        let tail: Vec<f64> = s.steps[s.steps.len() - 30..].iter().map(|st| st.rmse).collect();
        assert!(tail.windows(2).all(|w| w[1] < w[0]));
    }
}
