//! The static allocation problem: minimize `Σ w_i·BCRLB_i(p_i)` subject to
//! `Σ p_i = P` and `p_i ≥ p_min`.

use crate::error::{Error, Result};
use crate::model::{InfoMatrix4, ReducedInfo};

/// Everything the allocators need to know about one target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetInfo {
    pub range: f64,
    pub rcs: f64,
    pub weight: f64,
    pub snr_per_watt: f64,
    pub j_prior: InfoMatrix4,
    pub j_d: InfoMatrix4,
    reduced: ReducedInfo,
}

impl TargetInfo {
    pub fn new(
        range: f64,
        rcs: f64,
        weight: f64,
        snr_per_watt: f64,
        j_prior: InfoMatrix4,
        j_d: InfoMatrix4,
    ) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Domain(format!("weight must be positive, got {weight}")));
        }
        let reduced = ReducedInfo::new(&j_prior, &j_d, weight)?;
        Ok(Self {
            range,
            rcs,
            weight,
            snr_per_watt,
            j_prior,
            j_d,
            reduced,
        })
    }

    pub fn reduced(&self) -> &ReducedInfo {
        &self.reduced
    }

    pub fn weighted_bcrlb(&self, power: f64) -> f64 {
        self.reduced.weighted_bcrlb(power)
    }

    pub fn marginal_benefit(&self, power: f64) -> f64 {
        self.reduced.marginal_benefit(power)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub total_power: f64,
    pub min_power: f64,
    pub targets: Vec<TargetInfo>,
}

impl AllocationProblem {
    pub fn new(total_power: f64, min_power: f64, targets: Vec<TargetInfo>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Degenerate("no targets".into()));
        }
        if !(total_power.is_finite() && total_power > 0.0) {
            return Err(Error::Domain(format!(
                "total power must be positive, got {total_power}"
            )));
        }
        if !(min_power.is_finite() && min_power >= 0.0) {
            return Err(Error::Domain(format!(
                "min power must be non-negative, got {min_power}"
            )));
        }
        if targets.len() as f64 * min_power > total_power {
            return Err(Error::Infeasible {
                n: targets.len(),
                min_power,
                total_power,
            });
        }
        Ok(Self {
            total_power,
            min_power,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Equal-share operating point `P/N`.
    pub fn equal_share(&self) -> f64 {
        self.total_power / self.len() as f64
    }

    fn check_len(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.len() {
            return Err(Error::Domain(format!(
                "allocation has {} entries for {} targets",
                p.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// `F(p) = Σ w_i·BCRLB_i(p_i)`.
pub fn objective(problem: &AllocationProblem, p: &[f64]) -> Result<f64> {
    problem.check_len(p)?;
    let f: f64 = problem.targets.iter().zip(p).map(|(t, &pi)| t.weighted_bcrlb(pi)).sum();
    if !f.is_finite() {
        return Err(Error::Numerical(format!("objective is not finite ({f})")));
    }
    Ok(f)
}

/// `∂F/∂p_i`, all strictly negative.
pub fn objective_gradient(problem: &AllocationProblem, p: &[f64]) -> Result<Vec<f64>> {
    problem.check_len(p)?;
    Ok(problem
        .targets
        .iter()
        .zip(p)
        .map(|(t, &pi)| -t.marginal_benefit(pi))
        .collect())
}
