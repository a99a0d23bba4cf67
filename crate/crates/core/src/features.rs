//! The twenty per-target features fed to scoring functions.
//!
//! | index | meaning |
//! |-------|---------|
//! | X1  | target count `N` |
//! | X2  | range `R_i` |
//! | X3  | weight `w_i` |
//! | X4  | RCS `σ_i` |
//! | X5  | full-power SNR `P·SNR₁(R_i, σ_i)` |
//! | X6  | `Tr_p(J_prior⁻¹)` |
//! | X7  | `P·Tr_p(J̃_d)` |
//! | X8  | `Tr_p(J_prior) / Tr_p(J̃_d)` |
//! | X9  | demand factor `D_i` (weighted BCRLB at `P/N`) |
//! | X10–X12 | mean, max, std of X9 |
//! | X13 | baseline marginal benefit at `P/N` |
//! | X14–X16 | mean, max, std of X13 |
//! | X17 | cliff marginal benefit at `p_min` |
//! | X18–X20 | mean, max, std of X17 |

use std::io::Write;

use crate::error::{Error, Result};
use crate::problem::{AllocationProblem, TargetInfo};

pub const FEATURE_COUNT: usize = 20;

/// Power at which the cliff benefit is evaluated: `max(p_min, 1e-6·P)`.
pub fn cliff_power(total_power: f64, min_power: f64) -> f64 {
    min_power.max(1e-6 * total_power)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    /// One-based feature access, `x(9)` is the demand factor.
    #[inline]
    pub fn x(&self, index: usize) -> f64 {
        self.0[index - 1]
    }

    pub fn demand(&self) -> f64 {
        self.x(9)
    }

    pub fn base_benefit(&self) -> f64 {
        self.x(13)
    }

    pub fn cliff_benefit(&self) -> f64 {
        self.x(17)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let header: Vec<String> = (1..=FEATURE_COUNT).map(|i| format!("X{i}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.0.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// `D_i = w_i·√Tr_p(J_i⁻¹(P/N))`.
pub fn demand_factor(target: &TargetInfo, total_power: f64, n: usize) -> f64 {
    target.weighted_bcrlb(total_power / n as f64)
}

/// `|∂(w_i·BCRLB_i)/∂p|` at power `at`.
pub fn marginal_benefit(target: &TargetInfo, at: f64) -> f64 {
    target.marginal_benefit(at)
}

/// Mean, max and population standard deviation.
fn stats(values: &[f64]) -> [f64; 3] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    [mean, max, var.sqrt()]
}

pub fn feature_matrix(problem: &AllocationProblem) -> Result<FeatureMatrix> {
    let n = problem.len();
    let total = problem.total_power;
    let share = problem.equal_share();
    let cliff = cliff_power(total, problem.min_power);

    let mut rows: Vec<[f64; FEATURE_COUNT]> = Vec::with_capacity(n);
    let mut demand = Vec::with_capacity(n);
    let mut base = Vec::with_capacity(n);
    let mut cliff_mb = Vec::with_capacity(n);
    for t in &problem.targets {
        let reduced = t.reduced();
        let (d, mb) = reduced.bcrlb_and_benefit(share);
        let mc = reduced.marginal_benefit(cliff);
        let jd_trace = t.j_d.trace_p();
        let mut x = [0.0; FEATURE_COUNT];
        x[0] = n as f64;
        x[1] = t.range;
        x[2] = t.weight;
        x[3] = t.rcs;
        x[4] = total * t.snr_per_watt;
        x[5] = reduced.prior_trace_inv();
        x[6] = total * jd_trace;
        x[7] = t.j_prior.trace_p() / jd_trace;
        x[8] = d;
        x[12] = mb;
        x[16] = mc;
        demand.push(d);
        base.push(mb);
        cliff_mb.push(mc);
        rows.push(x);
    }

    let [sd, sb, sc] = [stats(&demand), stats(&base), stats(&cliff_mb)];
    let mut out = Vec::with_capacity(n);
    for (i, mut x) in rows.into_iter().enumerate() {
        x[9..12].copy_from_slice(&sd);
        x[13..16].copy_from_slice(&sb);
        x[17..20].copy_from_slice(&sc);
        if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                target: i,
                feature: bad + 1,
            });
        }
        out.push(FeatureVector(x));
    }
    Ok(FeatureMatrix { rows: out })
}
