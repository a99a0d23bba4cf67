//! Reference optimizers for the static problem: dual bisection
//! (water-filling) and spectral projected gradient on the floored simplex.

use serde::Serialize;

use crate::allocator::PowerAllocation;
use crate::error::{Error, Result};
use crate::problem::{objective, AllocationProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Outer dual tolerance on `|Σp − P|`, relative to `P`.
    pub balance_tol: f64,
    /// Inner per-target bisection tolerance on `p`, relative to `P`.
    pub inner_tol: f64,
    /// Stationarity tolerance for the projected gradient stop test.
    pub kkt_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            balance_tol: 1e-10,
            inner_tol: 1e-12,
            kkt_tol: 1e-8,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub allocation: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Dual level (common marginal benefit of the unclamped targets).
    pub lambda: f64,
}

impl SolverReport {
    pub fn power(&self) -> PowerAllocation {
        PowerAllocation(self.allocation.clone())
    }
}

fn clamp_threshold(problem: &AllocationProblem) -> f64 {
    problem.min_power + 1e-12 * problem.total_power
}

fn benefits(problem: &AllocationProblem, p: &[f64]) -> Vec<f64> {
    problem
        .targets
        .iter()
        .zip(p)
        .map(|(t, &pi)| t.marginal_benefit(pi))
        .collect()
}

/// Estimated dual level: mean marginal benefit over unclamped targets.
fn dual_estimate(problem: &AllocationProblem, p: &[f64], m: &[f64]) -> Option<f64> {
    let thr = clamp_threshold(problem);
    let free: Vec<f64> = p.iter().zip(m).filter(|(&pi, _)| pi > thr).map(|(_, &mi)| mi).collect();
    if free.is_empty() {
        None
    } else {
        Some(free.iter().sum::<f64>() / free.len() as f64)
    }
}

/// Relative KKT stationarity residual. Unclamped targets contribute
/// `|m_i − λ̂|/λ̂`; clamped targets contribute `max(0, m_i − λ̂)/λ̂`, since at
/// the optimum a target held at the floor cannot have a larger marginal
/// benefit than the dual level.
pub fn kkt_residual(problem: &AllocationProblem, p: &[f64]) -> Result<f64> {
    if p.len() != problem.len() {
        return Err(Error::Domain("allocation length does not match target count".into()));
    }
    let m = benefits(problem, p);
    let Some(lambda) = dual_estimate(problem, p, &m) else {
        return Ok(0.0);
    };
    let thr = clamp_threshold(problem);
    let mut worst = 0.0f64;
    for (&pi, &mi) in p.iter().zip(&m) {
        let r = if pi > thr {
            (mi - lambda).abs() / lambda
        } else {
            (mi - lambda).max(0.0) / lambda
        };
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Power at which target `idx` reaches marginal benefit `lambda`.
fn power_at_level(problem: &AllocationProblem, idx: usize, lambda: f64, tol: f64) -> f64 {
    let t = &problem.targets[idx];
    let (lo0, hi0) = (problem.min_power, problem.total_power);
    if t.marginal_benefit(lo0) <= lambda {
        return lo0;
    }
    if t.marginal_benefit(hi0) >= lambda {
        return hi0;
    }
    let (mut lo, mut hi) = (lo0, hi0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if t.marginal_benefit(mid) > lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn finish(problem: &AllocationProblem, p: Vec<f64>, iterations: usize, tol: f64) -> Result<SolverReport> {
    let f = objective(problem, &p)?;
    let kkt = kkt_residual(problem, &p)?;
    let m = benefits(problem, &p);
    let lambda = dual_estimate(problem, &p, &m).unwrap_or(0.0);
    Ok(SolverReport {
        allocation: p,
        objective: f,
        iterations,
        kkt_residual: kkt,
        converged: kkt <= tol,
        lambda,
    })
}

/// Water-filling: bisect the dual level on a log scale until the induced
/// powers balance the budget, then spread the leftover over free targets.
pub fn solve_bisection(problem: &AllocationProblem, opts: &SolverOptions) -> Result<SolverReport> {
    let n = problem.len();
    let total = problem.total_power;
    let pmin = problem.min_power;
    if n == 1 {
        return finish(problem, vec![total], 0, opts.kkt_tol);
    }
    if total - n as f64 * pmin <= 1e-15 * total {
        return finish(problem, vec![pmin; n], 0, opts.kkt_tol);
    }

    let m_floor: Vec<f64> = problem.targets.iter().map(|t| t.marginal_benefit(pmin)).collect();
    let m_top: Vec<f64> = problem.targets.iter().map(|t| t.marginal_benefit(total)).collect();
    let mut log_hi = m_floor.iter().copied().fold(f64::NEG_INFINITY, f64::max).ln();
    let mut log_lo = m_top.iter().copied().fold(f64::INFINITY, f64::min).ln();
    if !(log_lo.is_finite() && log_hi.is_finite() && log_lo <= log_hi) {
        return Err(Error::SolverFailure(format!(
            "dual level not bracketed: [{}, {}]",
            log_lo.exp(),
            log_hi.exp()
        )));
    }

    let inner_tol = opts.inner_tol * total;
    let allocate =
        |lambda: f64| -> Vec<f64> { (0..n).map(|i| power_at_level(problem, i, lambda, inner_tol)).collect() };

    let mut iterations = 0;
    let mut p;
    loop {
        let mid = 0.5 * (log_lo + log_hi);
        let candidate = allocate(mid.exp());
        let excess = candidate.iter().sum::<f64>() - total;
        iterations += 1;
        p = candidate;
        if excess.abs() <= opts.balance_tol * total {
            break;
        }
        if excess > 0.0 {
            log_lo = mid;
        } else {
            log_hi = mid;
        }
        if log_hi - log_lo <= 4.0 * f64::EPSILON * log_hi.abs().max(1.0) || iterations >= opts.max_iter {
            break;
        }
    }

    // Spread the leftover over targets above the floor (all are free if none is).
    let thr = clamp_threshold(problem);
    let residual = total - p.iter().sum::<f64>();
    let free: Vec<usize> = (0..n).filter(|&i| p[i] > thr).collect();
    let free = if free.is_empty() { (0..n).collect() } else { free };
    let share = residual / free.len() as f64;
    for &i in &free {
        p[i] = (p[i] + share).max(pmin);
    }
    finish(problem, p, iterations, opts.kkt_tol)
}

/// Euclidean projection onto `{Σp = P, p ≥ p_min}`, sort-based.
pub fn project_simplex_floor(v: &[f64], total_power: f64, min_power: f64) -> Vec<f64> {
    let n = v.len();
    let budget = total_power - n as f64 * min_power;
    let mut u: Vec<f64> = v.iter().map(|x| x - min_power).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - budget) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| min_power + (x - min_power - tau).max(0.0)).collect()
}

/// Spectral projected gradient: Barzilai-Borwein steps with a nonmonotone
/// Armijo test, started from the uniform allocation.
pub fn solve_projgrad(problem: &AllocationProblem, opts: &SolverOptions) -> Result<SolverReport> {
    const MEMORY: usize = 10;
    const ARMIJO: f64 = 1e-4;
    let n = problem.len();
    let total = problem.total_power;
    let pmin = problem.min_power;
    if n == 1 {
        return finish(problem, vec![total], 0, opts.kkt_tol);
    }

    let grad = |p: &[f64]| -> Vec<f64> { benefits(problem, p).into_iter().map(|m| -m).collect() };
    let mut p = vec![problem.equal_share(); n];
    let mut f = objective(problem, &p)?;
    let mut g = grad(&p);
    let gmax = g.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let mut alpha = 1e-2 * total / gmax.max(f64::MIN_POSITIVE);
    let mut history = vec![f];

    for iter in 0..opts.max_iter {
        if kkt_residual(problem, &p)? <= opts.kkt_tol {
            return finish(problem, p, iter, opts.kkt_tol);
        }
        let trial: Vec<f64> = p.iter().zip(&g).map(|(pi, gi)| pi - alpha * gi).collect();
        let target = project_simplex_floor(&trial, total, pmin);
        let d: Vec<f64> = target.iter().zip(&p).map(|(a, b)| a - b).collect();
        // Σd = 0 on the feasible set, so shifting g by the free-target mean
        // (≈ −λ) removes the cancellation that otherwise swamps the slope
        // near the optimum
        let g_mean = {
            let thr = clamp_threshold(problem);
            let free: Vec<f64> = p
                .iter()
                .zip(&g)
                .filter(|(&pi, _)| pi > thr)
                .map(|(_, &gi)| gi)
                .collect();
            if free.is_empty() {
                0.0
            } else {
                free.iter().sum::<f64>() / free.len() as f64
            }
        };
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * (b - g_mean)).sum();
        if !(slope < 0.0) {
            // not a descent direction: stationary to rounding
            return finish(problem, p, iter, opts.kkt_tol);
        }
        let f_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-14 * f.abs();
        let mut t = 1.0;
        let (p_new, f_new) = loop {
            let cand: Vec<f64> = p.iter().zip(&d).map(|(a, b)| (a + t * b).max(pmin)).collect();
            let fc = objective(problem, &cand)?;
            if fc <= f_ref + ARMIJO * t * slope + slack || t < 1e-12 {
                break (cand, fc);
            }
            t *= 0.5;
        };
        let g_new = grad(&p_new);
        let s: Vec<f64> = p_new.iter().zip(&p).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        alpha = if sy > 0.0 {
            (ss / sy).clamp(1e-30, 1e30)
        } else {
            alpha * 2.0
        };
        p = p_new;
        f = f_new;
        g = g_new;
        history.push(f);
        if history.len() > MEMORY {
            history.remove(0);
        }
    }
    finish(problem, p, opts.max_iter, opts.kkt_tol)
}
