//! The four experiments: static accuracy, scale sweep, timing and the
//! closed tracking loop.

use std::hint::black_box;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context, Result};
use log::{debug, warn};
use radalloc::rng::child_key;
use radalloc::scenario::{derive_seed, generate, generate_batch};
use radalloc::solvers::solve_bisection;
use radalloc::tracking::{run_closed_loop, TrackingSeries};
use radalloc::{objective, AllocationProblem, Allocator, Label, ScenarioInstance, SolverOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::BenchConfig;
use crate::stats::{spearman, Summary};

/// Excess losses below this (percent) count as an oracle optimality violation.
pub const NEGATIVE_LOSS_SLACK_PCT: f64 = -1e-7;

/// Timing columns that hold wall-clock measurements.
pub const TIMING_WALL_TIME_COLUMNS: &[&str] = &[
    "batch_size",
    "median_us",
    "p10_us",
    "p90_us",
    "speedup_vs_bisection",
    "speedup_vs_projgrad",
];

// sub-streams of the bench seed
const ACCURACY_STREAM: u64 = 1;
const SCALE_STREAM: u64 = 2;
const TIMING_STREAM: u64 = 3;
const TRACKING_SCENARIO_STREAM: u64 = 4;
const TRACKING_NOISE_STREAM: u64 = 5;

fn named_allocators(names: &[String]) -> Result<Vec<(String, Allocator)>> {
    names
        .iter()
        .map(|n| {
            Ok((
                n.clone(),
                Allocator::from_name(n).with_context(|| format!("allocator `{n}`"))?,
            ))
        })
        .collect()
}

/// Per-scenario excess losses, in allocator order.
enum ScenarioOutcome {
    Losses(Vec<f64>),
    Excluded(String),
}

fn excess_losses(inst: &ScenarioInstance, allocators: &[(String, Allocator)]) -> Result<ScenarioOutcome> {
    let problem = inst.problem()?;
    let oracle = solve_bisection(&problem, &SolverOptions::default())?;
    if !oracle.converged {
        return Ok(ScenarioOutcome::Excluded(format!(
            "oracle did not converge (KKT residual {:.3e})",
            oracle.kkt_residual
        )));
    }
    let mut losses = Vec::with_capacity(allocators.len());
    for (name, a) in allocators {
        let p = a
            .allocate(&problem)
            .with_context(|| format!("allocator {name} on scenario {}", inst.seed))?;
        p.validate(problem.total_power, problem.min_power)
            .with_context(|| format!("allocator {name} on scenario {}", inst.seed))?;
        let f = objective(&problem, &p)?;
        losses.push(100.0 * (f / oracle.objective - 1.0));
    }
    Ok(ScenarioOutcome::Losses(losses))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    pub scenario: usize,
    pub seed: u64,
    pub n: usize,
    pub allocator: String,
    pub excess_loss_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: Option<usize>,
    pub allocator: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    pub max: f64,
    pub stderr: f64,
}

impl SummaryRow {
    fn new(n: Option<usize>, allocator: &str, s: Summary) -> Self {
        Self {
            n,
            allocator: allocator.to_string(),
            count: s.count,
            mean: s.mean,
            median: s.median,
            p10: s.p10,
            p90: s.p90,
            max: s.max,
            stderr: s.stderr,
        }
    }
}

/// Scenarios dropped from the statistics, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub n: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossTable {
    pub rows: Vec<LossRow>,
    pub summary: Vec<SummaryRow>,
    pub excluded: Vec<Exclusion>,
    pub violations: Vec<String>,
}

fn loss_table(
    instances: &[ScenarioInstance],
    allocators: &[(String, Allocator)],
    n_key: Option<usize>,
) -> Result<LossTable> {
    let outcomes: Vec<Result<ScenarioOutcome>> = instances
        .par_iter()
        .map(|inst| excess_losses(inst, allocators))
        .collect();
    let mut table = LossTable {
        rows: Vec::new(),
        summary: Vec::new(),
        excluded: Vec::new(),
        violations: Vec::new(),
    };
    let mut per_alloc: Vec<Vec<f64>> = vec![Vec::new(); allocators.len()];
    for (k, (inst, outcome)) in instances.iter().zip(outcomes).enumerate() {
        let reason = match outcome {
            Ok(ScenarioOutcome::Losses(losses)) => {
                for (j, ((name, _), loss)) in allocators.iter().zip(losses).enumerate() {
                    // NaN counts as a violation too
                    #[allow(clippy::neg_cmp_op_on_partial_ord)]
                    if !(loss >= NEGATIVE_LOSS_SLACK_PCT) {
                        table
                            .violations
                            .push(format!("{name} beats the oracle on scenario {}: {loss:e}%", inst.seed));
                    }
                    per_alloc[j].push(loss);
                    table.rows.push(LossRow {
                        scenario: k,
                        seed: inst.seed,
                        n: inst.len(),
                        allocator: name.clone(),
                        excess_loss_pct: loss,
                    });
                }
                continue;
            }
            Ok(ScenarioOutcome::Excluded(reason)) => reason,
            Err(e) => format!("{e:#}"),
        };
        warn!("excluding scenario {} (N={}): {reason}", inst.seed, inst.len());
        table.excluded.push(Exclusion {
            n: inst.len(),
            seed: inst.seed,
            reason,
        });
    }
    for ((name, _), losses) in allocators.iter().zip(&per_alloc) {
        table.summary.push(SummaryRow::new(n_key, name, Summary::of(losses)));
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub table: LossTable,
    pub wall_time_s: f64,
}

impl AccuracyReport {
    pub fn summary_for(&self, allocator: &str) -> Option<&SummaryRow> {
        self.table.summary.iter().find(|r| r.allocator == allocator)
    }
}

/// Excess loss of every configured allocator on eval scenarios with N in
/// `[n_min, n_max]`.
pub fn bench_accuracy(cfg: &BenchConfig) -> Result<AccuracyReport> {
    let start = Instant::now();
    let allocators = named_allocators(&cfg.allocators)?;
    let a = &cfg.accuracy;
    let batch = generate_batch(
        child_key(cfg.seed, ACCURACY_STREAM),
        a.scenarios,
        (a.n_min, a.n_max),
        &cfg.generator,
        Label::Eval,
    )?;
    let table = loss_table(&batch.instances, &allocators, None)?;
    Ok(AccuracyReport {
        table,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub allocator: String,
    /// Spearman correlation of the mean loss with N.
    pub spearman_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleReport {
    /// One row per (N, allocator), in grid order.
    pub summary: Vec<SummaryRow>,
    pub trends: Vec<Trend>,
    pub excluded: Vec<Exclusion>,
    pub violations: Vec<String>,
}

impl ScaleReport {
    pub fn row(&self, n: usize, allocator: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.n == Some(n) && r.allocator == allocator)
    }
}

pub fn bench_scale(cfg: &BenchConfig) -> Result<ScaleReport> {
    let allocators = named_allocators(&cfg.allocators)?;
    let base = child_key(cfg.seed, SCALE_STREAM);
    let mut report = ScaleReport {
        summary: Vec::new(),
        trends: Vec::new(),
        excluded: Vec::new(),
        violations: Vec::new(),
    };
    for &n in &cfg.scale.n_grid {
        let batch = generate_batch(
            child_key(base, n as u64),
            cfg.scale.scenarios_per_n,
            (n, n),
            &cfg.generator,
            Label::Eval,
        )?;
        let table = loss_table(&batch.instances, &allocators, Some(n))?;
        debug!("scale N={n}: {} rows", table.rows.len());
        report.summary.extend(table.summary);
        report.excluded.extend(table.excluded);
        report.violations.extend(table.violations);
    }
    let grid: Vec<f64> = cfg.scale.n_grid.iter().map(|&n| n as f64).collect();
    for (name, _) in &allocators {
        let means: Vec<f64> = cfg
            .scale
            .n_grid
            .iter()
            .map(|&n| report.row(n, name).map_or(f64::NAN, |r| r.mean))
            .collect();
        report.trends.push(Trend {
            allocator: name.clone(),
            spearman_rho: if grid.len() > 1 {
                spearman(&grid, &means)
            } else {
                f64::NAN
            },
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub allocator: String,
    pub repetitions: usize,
    pub batch_size: usize,
    pub median_us: f64,
    pub p10_us: f64,
    pub p90_us: f64,
    pub speedup_vs_bisection: Option<f64>,
    pub speedup_vs_projgrad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub violations: Vec<String>,
}

impl TimingReport {
    pub fn row(&self, n: usize, allocator: &str) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.n == n && r.allocator == allocator)
    }
}

/// Per-call wall times of one allocator, batched so that one sample spans
/// at least `min_batch`.
fn time_calls(
    a: &Allocator,
    problem: &AllocationProblem,
    warmup: usize,
    repetitions: usize,
    min_batch: Duration,
) -> Result<(usize, Vec<f64>)> {
    for _ in 0..warmup {
        black_box(a.allocate(black_box(problem))?);
    }
    let mut batch = 1usize;
    loop {
        let t = Instant::now();
        for _ in 0..batch {
            black_box(a.allocate(black_box(problem))?);
        }
        if t.elapsed() >= min_batch || batch >= 1 << 20 {
            break;
        }
        batch *= 2;
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        for _ in 0..batch {
            black_box(a.allocate(black_box(problem))?);
        }
        samples.push(t.elapsed().as_secs_f64() * 1e6 / batch as f64);
    }
    Ok((batch, samples))
}

/// Median-of-repetitions allocation time per (N, allocator). Runs on the
/// calling thread only.
pub fn bench_timing(cfg: &BenchConfig) -> Result<TimingReport> {
    let t = &cfg.timing;
    let allocators = named_allocators(&t.allocators)?;
    let base = child_key(cfg.seed, TIMING_STREAM);
    let mut report = TimingReport {
        rows: Vec::new(),
        violations: Vec::new(),
    };
    for &n in &t.n_grid {
        let seed = derive_seed(base, Label::Eval, n as u64);
        let problem = generate(seed, n, &cfg.generator.system_for(n), Label::Eval)?.problem()?;
        let mut rows = Vec::with_capacity(allocators.len());
        for (name, a) in &allocators {
            let p = a.allocate(&problem)?;
            if let Err(e) = p.validate(problem.total_power, problem.min_power) {
                report.violations.push(format!("{name} at N={n}: {e}"));
            }
            let (batch, samples) = time_calls(
                a,
                &problem,
                t.warmup,
                t.repetitions,
                Duration::from_nanos(t.min_batch_ns),
            )?;
            let s = Summary::of(&samples);
            rows.push(TimingRow {
                n,
                allocator: name.clone(),
                repetitions: t.repetitions,
                batch_size: batch,
                median_us: s.median,
                p10_us: s.p10,
                p90_us: s.p90,
                speedup_vs_bisection: None,
                speedup_vs_projgrad: None,
            });
        }
        let median_of = |name: &str| rows.iter().find(|r| r.allocator == name).map(|r| r.median_us);
        let (bis, pg) = (median_of("bisection"), median_of("projgrad"));
        for r in &mut rows {
            r.speedup_vs_bisection = bis.map(|b| b / r.median_us);
            r.speedup_vs_projgrad = pg.map(|g| g / r.median_us);
        }
        report.rows.extend(rows);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingRow {
    pub step: usize,
    pub bcrlb_formula: f64,
    pub bcrlb_oracle: f64,
    pub rmse_formula: f64,
    pub rmse_oracle: f64,
    /// Diverged formula-driven tracks, summed over runs.
    pub diverged_count: usize,
    pub diverged_count_oracle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingLongRow {
    pub allocator: String,
    pub step: usize,
    pub bcrlb: f64,
    pub rmse: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingReport {
    pub formula_name: String,
    pub oracle_name: String,
    pub scenario_seed: u64,
    pub formula: TrackingSeries,
    pub oracle: TrackingSeries,
    /// `mean RMSE(formula) / mean RMSE(oracle) − 1`.
    pub rmse_gap: f64,
    /// Steps where the formula's bound is below the oracle's by more than
    /// a relative 1e-9.
    pub dominance_violations: Vec<usize>,
    pub wall_time_s: f64,
}

impl TrackingReport {
    pub fn rows(&self) -> Vec<TrackingRow> {
        self.formula
            .steps
            .iter()
            .zip(&self.oracle.steps)
            .map(|(f, o)| TrackingRow {
                step: f.step,
                bcrlb_formula: f.bcrlb,
                bcrlb_oracle: o.bcrlb,
                rmse_formula: f.rmse,
                rmse_oracle: o.rmse,
                diverged_count: f.diverged,
                diverged_count_oracle: o.diverged,
            })
            .collect()
    }

    pub fn long_rows(&self) -> Vec<TrackingLongRow> {
        [(&self.formula_name, &self.formula), (&self.oracle_name, &self.oracle)]
            .into_iter()
            .flat_map(|(name, series)| {
                series.steps.iter().map(move |s| TrackingLongRow {
                    allocator: name.clone(),
                    step: s.step,
                    bcrlb: s.bcrlb,
                    rmse: s.rmse,
                    diverged: s.diverged,
                })
            })
            .collect()
    }

    pub fn worst_dominance_gap(&self) -> f64 {
        self.formula
            .steps
            .iter()
            .zip(&self.oracle.steps)
            .map(|(f, o)| (o.bcrlb - f.bcrlb) / o.bcrlb)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub const DOMINANCE_SLACK: f64 = 1e-9;

/// Runs the closed loop for the formula and the oracle allocator on one
/// eval scenario, with shared truths and noise.
pub fn bench_tracking(cfg: &BenchConfig) -> Result<TrackingReport> {
    let start = Instant::now();
    let tc = &cfg.tracking;
    let mut run = tc.run.clone();
    run.seed = child_key(cfg.seed, TRACKING_NOISE_STREAM);
    let n = run.n_targets;
    let seed = derive_seed(child_key(cfg.seed, TRACKING_SCENARIO_STREAM), Label::Eval, 0);
    let scen = generate(seed, n, &cfg.generator.system_for(n), Label::Eval)?;
    let formula = Allocator::from_name(&run.allocator_name)?;
    let oracle = Allocator::from_name(&tc.oracle)?;
    let f = run_closed_loop(&run, &scen, &formula).map_err(|e| anyhow!("{} loop: {e}", run.allocator_name))?;
    let o = run_closed_loop(&run, &scen, &oracle).map_err(|e| anyhow!("{} loop: {e}", tc.oracle))?;
    let dominance_violations = f
        .steps
        .iter()
        .zip(&o.steps)
        .filter(|(a, b)| a.bcrlb < b.bcrlb * (1.0 - DOMINANCE_SLACK))
        .map(|(a, _)| a.step)
        .collect();
    Ok(TrackingReport {
        formula_name: run.allocator_name.clone(),
        oracle_name: tc.oracle.clone(),
        scenario_seed: seed,
        rmse_gap: f.mean_rmse() / o.mean_rmse() - 1.0,
        formula: f,
        oracle: o,
        dominance_violations,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
