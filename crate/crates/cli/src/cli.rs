//! Argument parsing and subcommand dispatch.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use radalloc::expr::{cascade_evaluate_text, eval_set_scenarios, feedback_render, EvalSets};
use radalloc::scenario::{self, derive_seed, generate, generate_batch};
use radalloc::solvers::{solve_bisection, solve_projgrad};
use radalloc::{objective, Allocator, Label, ScenarioInstance, SolverOptions};
use serde_json::json;

use crate::bench;
use crate::config::{ensure_writable, BenchConfig};
use crate::output;
use crate::plots::{emit_plots, Experiment};

#[derive(Debug, Parser)]
#[command(name = "radalloc", version, about = "Radar transmit-power allocation experiments")]
pub struct Cli {
    /// Base seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Bench configuration (.toml or .json).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for scenario-level parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scenario JSON files.
    Gen(GenArgs),
    /// Solve one scenario with a reference optimizer.
    Solve(SolveArgs),
    /// Allocate power for one scenario with a named allocator.
    Alloc(AllocArgs),
    /// Run one experiment and write its CSVs.
    Bench(BenchArgs),
    /// Score candidate expressions with the fitness cascade.
    #[command(subcommand)]
    Evolve(EvolveCommand),
    /// Write plot scripts next to existing result CSVs.
    Plots(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of targets per scenario.
    #[arg(long, default_value_t = 20, conflicts_with = "n_range")]
    pub n: usize,
    /// Inclusive target-count range, as `lo..hi`.
    #[arg(long, value_parser = parse_range)]
    pub n_range: Option<(usize, usize)>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value = "eval")]
    pub label: String,
    /// Write the fitness-cascade sets (fast/train/general) instead.
    #[arg(long)]
    pub eval_sets: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverKind {
    Bisection,
    Projgrad,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "bisection")]
    pub solver: SolverKind,
}

#[derive(Debug, Args)]
pub struct AllocArgs {
    pub scenario: PathBuf,
    /// seed|discovered|suboptimal|uniform|high-snr|bisection|projgrad|expr:<file>
    #[arg(long, default_value = "discovered")]
    pub allocator: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BenchKind {
    Accuracy,
    Scale,
    Timing,
    Tracking,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub kind: BenchKind,
    /// Scenario count (accuracy) or scenarios per N (scale).
    #[arg(long)]
    pub scenarios: Option<usize>,
    /// Comma-separated N grid (scale, timing).
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    /// Timing repetitions.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Monte Carlo runs (tracking).
    #[arg(long)]
    pub monte_carlo: Option<usize>,
    /// Time steps (tracking).
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum EvolveCommand {
    /// Evaluate one expression file and print its fitness report.
    Eval(EvalArgs),
    /// Read one expression per line on stdin, answer one JSON line each.
    ServeStdio(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SetArgs {
    /// Directory written by `gen --eval-sets`; built from the seed when absent.
    #[arg(long)]
    pub sets: Option<PathBuf>,
    /// Loss weights `alpha,beta,gamma`.
    #[arg(long, value_parser = parse_weights)]
    pub weights: Option<(f64, f64, f64)>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub expr_file: PathBuf,
    #[command(flatten)]
    pub sets: SetArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub sets: SetArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Only these experiments; default is every one with a CSV present.
    #[arg(long = "experiment", value_parser = parse_experiment)]
    pub experiments: Vec<Experiment>,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected lo..hi, got `{s}`"))?;
    let lo = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = b.trim().trim_start_matches('=').parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

fn parse_weights(s: &str) -> Result<(f64, f64, f64), String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, g] if v.iter().all(|x| x.is_finite() && *x >= 0.0) => Ok((a, b, g)),
        _ => Err(format!("expected three non-negative weights a,b,g, got `{s}`")),
    }
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

/// `println!` that treats a closed stdout (e.g. piped into `head`) as done.
macro_rules! emit {
    ($($arg:tt)*) => {{
        let mut out = std::io::stdout().lock();
        match writeln!(out, $($arg)*) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            r => r?,
        }
    }};
}

/// What a successful command observed.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Invariant violations and skipped scenarios; any entry means exit code 1.
    pub problems: Vec<String>,
}

impl Outcome {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

fn resolve_config(cli: &Cli) -> Result<BenchConfig> {
    let mut cfg = match &cli.config {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Gen(args) => gen(&cfg, &args),
        Command::Solve(args) => solve(&args),
        Command::Alloc(args) => alloc(&args),
        Command::Bench(args) => {
            apply_overrides(&mut cfg, &args);
            run_bench(&cfg, args.kind)
        }
        Command::Evolve(EvolveCommand::Eval(args)) => evolve_eval(&cfg, &args),
        Command::Evolve(EvolveCommand::ServeStdio(args)) => serve_stdio(&cfg, &args.sets),
        Command::Plots(args) => {
            for path in emit_plots(&cfg.out_dir, &args.experiments)? {
                emit!("{}", path.display());
            }
            Ok(Outcome::default())
        }
    }
}

fn gen(cfg: &BenchConfig, args: &GenArgs) -> Result<Outcome> {
    ensure_writable(&cfg.out_dir)?;
    if args.eval_sets {
        let sets = eval_set_scenarios(cfg.seed, cfg.eval_sets, &cfg.generator)?;
        for (name, instances) in ["fast", "train", "general"].into_iter().zip(&sets) {
            let dir = cfg.out_dir.join(name);
            std::fs::create_dir_all(&dir)?;
            write_scenarios(&dir, instances)?;
            info!("wrote {} scenarios to {}", instances.len(), dir.display());
        }
        return Ok(Outcome::default());
    }
    let label: Label = args.label.parse()?;
    let range = args.n_range.unwrap_or((args.n, args.n));
    let instances = if args.count == 1 && args.n_range.is_none() {
        let seed = derive_seed(cfg.seed, label, 0);
        vec![generate(seed, args.n, &cfg.generator.system_for(args.n), label)?]
    } else {
        generate_batch(cfg.seed, args.count, range, &cfg.generator, label)?.instances
    };
    write_scenarios(&cfg.out_dir, &instances)?;
    Ok(Outcome::default())
}

fn write_scenarios(dir: &Path, instances: &[ScenarioInstance]) -> Result<()> {
    for (i, inst) in instances.iter().enumerate() {
        let path = dir.join(format!("scenario_{i:05}.json"));
        scenario::save(inst, &path).with_context(|| format!("writing {}", path.display()))?;
        emit!("{}", path.display());
    }
    Ok(())
}

fn load_scenario(path: &Path) -> Result<ScenarioInstance> {
    scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn solve(args: &SolveArgs) -> Result<Outcome> {
    let problem = load_scenario(&args.scenario)?.problem()?;
    let opts = SolverOptions::default();
    let report = match args.solver {
        SolverKind::Bisection => solve_bisection(&problem, &opts)?,
        SolverKind::Projgrad => solve_projgrad(&problem, &opts)?,
    };
    emit!("{}", serde_json::to_string_pretty(&report)?);
    let mut out = Outcome::default();
    if !report.converged {
        out.problems.push(format!(
            "solver did not converge (KKT residual {:e})",
            report.kkt_residual
        ));
    }
    Ok(out)
}

fn alloc(args: &AllocArgs) -> Result<Outcome> {
    let problem = load_scenario(&args.scenario)?.problem()?;
    let allocator = Allocator::from_name(&args.allocator)?;
    let p = allocator.allocate(&problem)?;
    let oracle = solve_bisection(&problem, &SolverOptions::default())?;
    let f = objective(&problem, &p)?;
    let mut out = Outcome::default();
    if let Err(e) = p.validate(problem.total_power, problem.min_power) {
        out.problems.push(e.to_string());
    }
    if !oracle.converged {
        out.problems.push("oracle did not converge".into());
    }
    let report = json!({
        "allocator": args.allocator,
        "allocation": p.as_slice(),
        "objective": f,
        "oracle_objective": oracle.objective,
        "excess_loss_pct": 100.0 * (f / oracle.objective - 1.0),
    });
    emit!("{}", serde_json::to_string_pretty(&report)?);
    Ok(out)
}

fn apply_overrides(cfg: &mut BenchConfig, args: &BenchArgs) {
    if let Some(s) = args.scenarios {
        cfg.accuracy.scenarios = s;
        cfg.scale.scenarios_per_n = s;
    }
    if let Some(g) = &args.n_grid {
        cfg.scale.n_grid = g.clone();
        cfg.timing.n_grid = g.clone();
    }
    if let Some(r) = args.repetitions {
        cfg.timing.repetitions = r;
    }
    if let Some(m) = args.monte_carlo {
        cfg.tracking.run.monte_carlo = m;
    }
    if let Some(s) = args.steps {
        cfg.tracking.run.steps = s;
    }
}

/// Runs one bench, writes its artifacts and reports anything that must
/// turn the exit code non-zero.
pub fn run_bench(cfg: &BenchConfig, kind: BenchKind) -> Result<Outcome> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    ensure_writable(dir)?;
    let mut out = Outcome::default();
    let files = match kind {
        BenchKind::Accuracy => {
            let r = bench::bench_accuracy(cfg)?;
            out.problems.extend(r.table.violations.iter().cloned());
            out.problems.extend(
                r.table
                    .excluded
                    .iter()
                    .map(|e| format!("scenario {} excluded: {}", e.seed, e.reason)),
            );
            output::write_accuracy(dir, &r)?
        }
        BenchKind::Scale => {
            let r = bench::bench_scale(cfg)?;
            out.problems.extend(r.violations.iter().cloned());
            out.problems.extend(
                r.excluded
                    .iter()
                    .map(|e| format!("scenario {} excluded: {}", e.seed, e.reason)),
            );
            output::write_scale(dir, &r)?
        }
        BenchKind::Timing => {
            let r = bench::bench_timing(cfg)?;
            out.problems.extend(r.violations.iter().cloned());
            output::write_timing(dir, &r)?
        }
        BenchKind::Tracking => {
            let r = bench::bench_tracking(cfg)?;
            output::write_tracking(dir, &r)?
        }
    };
    for f in files {
        emit!("{}", f.display());
    }
    Ok(out)
}

fn load_sets(cfg: &BenchConfig, args: &SetArgs) -> Result<EvalSets> {
    match &args.sets {
        None => Ok(EvalSets::build(cfg.seed, cfg.eval_sets, &cfg.generator)?),
        Some(dir) => {
            let read = |name: &str| -> Result<Vec<radalloc::expr::EvalInstance>> {
                let sub = dir.join(name);
                let mut paths: Vec<PathBuf> = std::fs::read_dir(&sub)
                    .with_context(|| format!("reading set folder {}", sub.display()))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                paths.sort();
                if paths.is_empty() {
                    bail!("set folder {} has no scenario files", sub.display());
                }
                let scenarios = paths.iter().map(|p| load_scenario(p)).collect::<Result<Vec<_>>>()?;
                Ok(EvalSets::prepare(&scenarios)?)
            };
            Ok(EvalSets {
                fast: read("fast")?,
                train: read("train")?,
                general: read("general")?,
            })
        }
    }
}

fn cascade_config(cfg: &BenchConfig, args: &SetArgs) -> radalloc::expr::CascadeConfig {
    let mut c = cfg.cascade;
    if let Some((a, b, g)) = args.weights {
        c.alpha = a;
        c.beta = b;
        c.gamma = g;
    }
    c
}

fn evolve_eval(cfg: &BenchConfig, args: &EvalArgs) -> Result<Outcome> {
    let text =
        std::fs::read_to_string(&args.expr_file).with_context(|| format!("reading {}", args.expr_file.display()))?;
    let sets = load_sets(cfg, &args.sets)?;
    let report = cascade_evaluate_text(text.trim(), &sets, &cascade_config(cfg, &args.sets));
    emit!("{}", serde_json::to_string_pretty(&report)?);
    Ok(Outcome::default())
}

fn serve_stdio(cfg: &BenchConfig, args: &SetArgs) -> Result<Outcome> {
    let sets = load_sets(cfg, args)?;
    let ccfg = cascade_config(cfg, args);
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let report = cascade_evaluate_text(text, &sets, &ccfg);
        let sent = writeln!(stdout, "{}", feedback_render(&report)).and_then(|_| stdout.flush());
        match sent {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => break,
            r => r?,
        }
    }
    Ok(Outcome::default())
}

/// Parses arguments, runs, and maps the result to an exit code: 0 clean,
/// 1 for invariant violations or skipped scenarios, 2 for errors.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> std::process::ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return std::process::ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) if out.is_clean() => std::process::ExitCode::SUCCESS,
        Ok(out) => {
            for p in &out.problems {
                error!("{p}");
            }
            eprintln!("{} problem(s) observed", out.problems.len());
            std::process::ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::from(2)
        }
    }
}
