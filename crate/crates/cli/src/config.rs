//! Benchmark configuration, loadable from TOML or JSON.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use radalloc::expr::{CascadeConfig, EvalSetSizes};
use radalloc::tracking::TrackingRunConfig;
use radalloc::{Allocator, GeneratorConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub generator: GeneratorConfig,
    /// Allocators compared in the accuracy and scale benches.
    pub allocators: Vec<String>,
    pub accuracy: AccuracyConfig,
    pub scale: ScaleConfig,
    pub timing: TimingConfig,
    pub tracking: TrackingBenchConfig,
    pub cascade: CascadeConfig,
    pub eval_sets: EvalSetSizes,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("results"),
            generator: GeneratorConfig::default(),
            allocators: ["discovered", "suboptimal", "seed", "high-snr", "uniform"]
                .map(String::from)
                .to_vec(),
            accuracy: AccuracyConfig::default(),
            scale: ScaleConfig::default(),
            timing: TimingConfig::default(),
            tracking: TrackingBenchConfig::default(),
            cascade: CascadeConfig::default(),
            eval_sets: EvalSetSizes::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccuracyConfig {
    pub scenarios: usize,
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        Self {
            scenarios: 500,
            n_min: 10,
            n_max: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleConfig {
    pub n_grid: Vec<usize>,
    pub scenarios_per_n: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![10, 25, 50, 100, 150, 200],
            scenarios_per_n: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    /// Calls are batched until one batch lasts at least this long.
    pub min_batch_ns: u64,
    pub allocators: Vec<String>,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![10, 25, 50, 100, 200],
            repetitions: 100,
            warmup: 10,
            min_batch_ns: 20_000,
            allocators: [
                "discovered",
                "suboptimal",
                "seed",
                "high-snr",
                "uniform",
                "bisection",
                "projgrad",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingBenchConfig {
    /// `allocator_name` is the formula side; `seed` is overridden by the bench seed.
    pub run: TrackingRunConfig,
    pub oracle: String,
}

impl Default for TrackingBenchConfig {
    fn default() -> Self {
        Self {
            run: TrackingRunConfig::default(),
            oracle: "bisection".into(),
        }
    }
}

impl BenchConfig {
    /// Reads `.toml` or `.json` by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => bail!("config {} must end in .toml or .json", path.display()),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let names = self
            .allocators
            .iter()
            .chain(&self.timing.allocators)
            .chain([&self.tracking.run.allocator_name, &self.tracking.oracle]);
        for name in names {
            Allocator::from_name(name).with_context(|| format!("allocator `{name}`"))?;
        }
        let a = &self.accuracy;
        if a.scenarios == 0 || a.n_min == 0 || a.n_min > a.n_max {
            bail!("accuracy needs scenarios ≥ 1 and 1 ≤ n_min ≤ n_max");
        }
        if self.scale.n_grid.is_empty() || self.scale.n_grid.contains(&0) || self.scale.scenarios_per_n == 0 {
            bail!("scale needs a non-empty grid of positive N and scenarios_per_n ≥ 1");
        }
        if self.timing.n_grid.is_empty() || self.timing.n_grid.contains(&0) || self.timing.repetitions == 0 {
            bail!("timing needs a non-empty grid of positive N and repetitions ≥ 1");
        }
        self.generator.system.validate()?;
        self.tracking.run.validate()?;
        Ok(())
    }
}

/// Creates `dir` if needed and checks it accepts files.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let probe = dir.join(".write_probe");
    std::fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", dir.display()))?;
    std::fs::remove_file(&probe)?;
    Ok(())
}
