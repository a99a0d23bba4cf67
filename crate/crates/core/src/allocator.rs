//! Closed-form scoring rules, baselines, and the score-to-power transform.

use std::path::Path;

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::features::{feature_matrix, FeatureMatrix};
use crate::problem::AllocationProblem;
use crate::solvers::{self, SolverOptions};

/// Floor applied by the evolved scorers.
pub const SCORE_FLOOR: f64 = 1e-6;
pub const DISCOVERED_EXPONENT: f64 = 0.495;
pub const SUBOPTIMAL_EXPONENT: f64 = 0.493;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation(pub Vec<f64>);

impl PowerAllocation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Checks `|Σp − P| ≤ 1e-9·P` and `p_i ≥ p_min − 1e-12·P`.
    pub fn validate(&self, total_power: f64, min_power: f64) -> Result<()> {
        let sum = self.total();
        if !((sum - total_power).abs() <= 1e-9 * total_power) {
            return Err(Error::Domain(format!(
                "allocation sums to {sum}, budget is {total_power}"
            )));
        }
        if let Some((i, p)) = self
            .0
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p >= min_power - 1e-12 * total_power))
        {
            return Err(Error::Domain(format!(
                "target {i} gets {p} W, below the floor {min_power} W"
            )));
        }
        Ok(())
    }
}

impl std::ops::Deref for PowerAllocation {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `S⁽⁰⁾_i = D_i^{2/3}`.
pub fn score_seed(features: &FeatureMatrix) -> ScoreVector {
    ScoreVector(features.rows.iter().map(|r| r.demand().powf(2.0 / 3.0)).collect())
}

fn check_means(features: &FeatureMatrix, indices: &[usize]) -> Result<()> {
    let first = features
        .rows
        .first()
        .ok_or_else(|| Error::Degenerate("empty feature matrix".into()))?;
    for &i in indices {
        let m = first.x(i);
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Degenerate(format!("scenario mean X{i} is {m}")));
        }
    }
    Ok(())
}

/// `S_i = max((η_i ζ_i)^0.495, 1e-6)`, `η = D/D̄`, `ζ = M_base/M̄_base`.
pub fn score_discovered(features: &FeatureMatrix) -> Result<ScoreVector> {
    check_means(features, &[10, 14])?;
    Ok(ScoreVector(
        features
            .rows
            .iter()
            .map(|r| {
                let eta = r.x(9) / r.x(10);
                let zeta = r.x(13) / r.x(14);
                (eta * zeta).powf(DISCOVERED_EXPONENT).max(SCORE_FLOOR)
            })
            .collect(),
    ))
}

/// `S_i = max((μ_i β_i A_i)^0.493, 1e-6)` with
/// `β = M_base/M̄_base + 0.35·M_cliff/M̄_cliff`, `A = 1 + 0.082·tanh(X8/D̄)`.
pub fn score_suboptimal(features: &FeatureMatrix) -> Result<ScoreVector> {
    check_means(features, &[10, 14, 18])?;
    Ok(ScoreVector(
        features
            .rows
            .iter()
            .map(|r| {
                let mu = r.x(9) / r.x(10);
                let beta = r.x(13) / r.x(14) + 0.35 * r.x(17) / r.x(18);
                let a = 1.0 + 0.082 * (r.x(8) / r.x(10)).tanh();
                (mu * beta * a).powf(SUBOPTIMAL_EXPONENT).max(SCORE_FLOOR)
            })
            .collect(),
    ))
}

pub fn allocate_uniform(problem: &AllocationProblem) -> Result<PowerAllocation> {
    let share = problem.equal_share();
    if share < problem.min_power {
        return Err(Error::Infeasible {
            n: problem.len(),
            min_power: problem.min_power,
            total_power: problem.total_power,
        });
    }
    Ok(PowerAllocation(vec![share; problem.len()]))
}

/// Prior-free proportional rule `p_i ∝ (w_i √Tr_p(J̃_d⁻¹))^{2/3}`, then
/// the floor transform.
pub fn allocate_high_snr(problem: &AllocationProblem) -> Result<PowerAllocation> {
    let scores = problem
        .targets
        .iter()
        .map(|t| {
            let tr = t.reduced().meas_trace_inv().ok_or(Error::SingularGeometry)?;
            Ok((t.weight * tr.sqrt()).powf(2.0 / 3.0))
        })
        .collect::<Result<Vec<_>>>()?;
    transform(&ScoreVector(scores), problem.total_power, problem.min_power)
}

/// Maps positive scores to a feasible allocation. Targets whose proportional
/// share falls strictly below `p_min` are pinned there and the remainder is
/// redistributed over the others; this repeats until no new target drops
/// below the floor.
pub fn transform(scores: &ScoreVector, total_power: f64, min_power: f64) -> Result<PowerAllocation> {
    let s = scores.as_slice();
    let n = s.len();
    if n == 0 {
        return Err(Error::InvalidScores("empty score vector".into()));
    }
    if let Some((i, v)) = s.iter().enumerate().find(|(_, &v)| !(v.is_finite() && v > 0.0)) {
        return Err(Error::InvalidScores(format!("score {i} is {v}")));
    }
    if !crate::model::floors_fit(n, min_power, total_power) {
        return Err(Error::Infeasible {
            n,
            min_power,
            total_power,
        });
    }

    let mut clamped = vec![false; n];
    let mut n_clamped = 0usize;
    let mut out = vec![0.0; n];
    loop {
        let residual = total_power - n_clamped as f64 * min_power;
        let free_sum: f64 = s.iter().zip(&clamped).filter(|(_, &c)| !c).map(|(v, _)| v).sum();
        if n_clamped == n || free_sum <= 0.0 {
            return Ok(PowerAllocation(vec![min_power; n]));
        }
        let mut changed = false;
        for i in 0..n {
            if clamped[i] {
                out[i] = min_power;
                continue;
            }
            let share = residual * s[i] / free_sum;
            if share < min_power {
                clamped[i] = true;
                n_clamped += 1;
                changed = true;
            }
            out[i] = share;
        }
        if !changed {
            return Ok(PowerAllocation(out));
        }
    }
}

/// Scoring rule for the closed-form pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Seed,
    Discovered,
    Suboptimal,
    Expression(Box<Expr>),
}

impl Scorer {
    pub fn score(&self, features: &FeatureMatrix) -> Result<ScoreVector> {
        match self {
            Scorer::Seed => Ok(score_seed(features)),
            Scorer::Discovered => score_discovered(features),
            Scorer::Suboptimal => score_suboptimal(features),
            Scorer::Expression(e) => Ok(ScoreVector(
                features.rows.iter().map(|r| expr::evaluate(e, r)).collect(),
            )),
        }
    }
}

/// Feature extraction, scoring and the floor transform; linear in `N`.
pub fn allocate_closed_form(problem: &AllocationProblem, scorer: &Scorer) -> Result<PowerAllocation> {
    let features = feature_matrix(problem)?;
    let scores = scorer.score(&features)?;
    transform(&scores, problem.total_power, problem.min_power)
}

/// Any allocation strategy selectable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Allocator {
    ClosedForm(Scorer),
    Uniform,
    HighSnr,
    Bisection,
    ProjectedGradient,
}

impl Allocator {
    /// Accepts `seed`, `discovered`, `suboptimal`, `uniform`, `high-snr`,
    /// `bisection` (alias `oracle`), `projgrad`, or `expr:<file>`.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "seed" => Allocator::ClosedForm(Scorer::Seed),
            "discovered" => Allocator::ClosedForm(Scorer::Discovered),
            "suboptimal" => Allocator::ClosedForm(Scorer::Suboptimal),
            "uniform" => Allocator::Uniform,
            "high-snr" => Allocator::HighSnr,
            "bisection" | "oracle" => Allocator::Bisection,
            "projgrad" => Allocator::ProjectedGradient,
            other => match other.strip_prefix("expr:") {
                Some(path) => Allocator::ClosedForm(Scorer::Expression(Box::new(load_expr(path)?))),
                None => return Err(Error::Domain(format!("unknown allocator `{other}`"))),
            },
        })
    }

    pub fn allocate(&self, problem: &AllocationProblem) -> Result<PowerAllocation> {
        match self {
            Allocator::ClosedForm(s) => allocate_closed_form(problem, s),
            Allocator::Uniform => allocate_uniform(problem),
            Allocator::HighSnr => allocate_high_snr(problem),
            Allocator::Bisection => Ok(PowerAllocation(
                solvers::solve_bisection(problem, &SolverOptions::default())?.allocation,
            )),
            Allocator::ProjectedGradient => {
                let report = solvers::solve_projgrad(problem, &SolverOptions::default())?;
                Ok(PowerAllocation(report.allocation))
            }
        }
    }
}

fn load_expr(path: impl AsRef<Path>) -> Result<Expr> {
    let text = std::fs::read_to_string(path.as_ref())?;
    expr::parse(text.trim()).map_err(|e| Error::Domain(format!("{}: {e}", path.as_ref().display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    fn rows(demand: &[f64], base: &[f64]) -> FeatureMatrix {
        let n = demand.len() as f64;
        let md = demand.iter().sum::<f64>() / n;
        let mb = base.iter().sum::<f64>() / n;
        FeatureMatrix {
            rows: demand
                .iter()
                .zip(base)
                .map(|(&d, &b)| {
                    let mut x = [1.0; 20];
                    x[8] = d;
                    x[9] = md;
                    x[12] = b;
                    x[13] = mb;
                    FeatureVector(x)
                })
                .collect(),
        }
    }

    #[test]
    fn seed_scores() {
        let s = score_seed(&rows(&[1.0, 8.0, 27.0], &[1.0, 1.0, 1.0]));
        let expect = [1.0, 4.0, 9.0];
        for (a, b) in s.0.iter().zip(expect) {
            assert!((a - b).abs() < 1e-13);
        }
        let equal = score_seed(&rows(&[2.0; 4], &[1.0; 4]));
        assert!(equal.0.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn discovered_at_mean_is_one() {
        let s = score_discovered(&rows(&[3.0; 5], &[0.2; 5])).unwrap();
        assert!(s.0.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn discovered_floor_and_power() {
        // η·ζ = 0 ⇒ floor
        let s = score_discovered(&rows(&[0.0, 2.0], &[1.0, 1.0])).unwrap();
        assert_eq!(s.0[0], SCORE_FLOOR);
        // η = 2, ζ = 2 ⇒ 4^0.495
        let mut m = rows(&[1.0, 1.0], &[1.0, 1.0]);
        m.rows[0].0[8] = 2.0;
        m.rows[0].0[12] = 2.0;
        let s = score_discovered(&m).unwrap();
        assert!((s.0[0] - 4f64.powf(0.495)).abs() < 1e-15);
        assert!((s.0[0] - 1.98618).abs() < 1e-5, "{}", s.0[0]);
    }

    #[test]
    fn discovered_zero_mean_is_degenerate() {
        let r = score_discovered(&rows(&[0.0, 0.0], &[1.0, 1.0]));
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn suboptimal_identical_targets_small_ratio() {
        let mut m = rows(&[2.0; 3], &[0.5; 3]);
        for r in &mut m.rows {
            r.0[16] = 0.7;
            r.0[17] = 0.7;
            r.0[7] = 0.0;
        }
        let s = score_suboptimal(&m).unwrap();
        for v in s.0 {
            assert!((v - 1.35f64.powf(0.493)).abs() < 1e-15);
        }
    }

    #[test]
    fn suboptimal_tanh_saturates() {
        let mut m = rows(&[2.0; 2], &[0.5; 2]);
        for r in &mut m.rows {
            r.0[16] = 0.7;
            r.0[17] = 0.7;
            r.0[7] = 1e300;
        }
        let s = score_suboptimal(&m).unwrap();
        assert!((s.0[0] - (1.35f64 * 1.082).powf(0.493)).abs() < 1e-15);
    }

    #[test]
    fn transform_no_clamping() {
        let p = transform(&ScoreVector(vec![9.0, 1.0]), 10.0, 1.0).unwrap();
        assert_eq!(p.0, vec![9.0, 1.0]);
    }

    #[test]
    fn transform_clamps_small_share() {
        let p = transform(&ScoreVector(vec![99.0, 1.0]), 10.0, 1.0).unwrap();
        assert_eq!(p.0, vec![9.0, 1.0]);
    }

    #[test]
    fn transform_iterates_to_fixed_point() {
        // single pass clamps only target 3; redistribution pushes target 2 under the floor
        let s = ScoreVector(vec![100.0, 11.0, 1.0]);
        let p = transform(&s, 12.0, 1.2).unwrap();
        p.validate(12.0, 1.2).unwrap();
        assert_eq!(p.0[1], 1.2);
        assert_eq!(p.0[2], 1.2);
        assert!((p.0[0] - 9.6).abs() < 1e-12);
    }

    #[test]
    fn transform_uniform_scores() {
        for &pmin in &[0.0, 0.1, 2.5] {
            let p = transform(&ScoreVector(vec![1.0; 4]), 10.0, pmin).unwrap();
            assert!(p.0.iter().all(|&v| v == 2.5));
        }
    }

    #[test]
    fn transform_errors() {
        assert!(matches!(
            transform(&ScoreVector(vec![1.0, 1.0]), 1.0, 0.6),
            Err(Error::Infeasible { .. })
        ));
        assert!(transform(&ScoreVector(vec![1.0, 0.0]), 1.0, 0.1).is_err());
        assert!(transform(&ScoreVector(vec![1.0, f64::NAN]), 1.0, 0.1).is_err());
        assert!(transform(&ScoreVector(vec![]), 1.0, 0.1).is_err());
    }

    #[test]
    fn transform_tight_budget() {
        let p = transform(&ScoreVector(vec![5.0, 1.0, 1.0]), 3.0, 1.0).unwrap();
        assert_eq!(p.0, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn allocator_names() {
        for name in [
            "seed",
            "discovered",
            "suboptimal",
            "uniform",
            "high-snr",
            "oracle",
            "projgrad",
        ] {
            Allocator::from_name(name).unwrap();
        }
        assert!(Allocator::from_name("greedy").is_err());
        assert!(Allocator::from_name("expr:/no/such/file").is_err());
    }
}
