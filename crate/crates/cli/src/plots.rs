//! Standalone matplotlib scripts, one per experiment. Nothing is drawn
//! in-process; each script reads its CSV from its own directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

use crate::output::{ACCURACY_CSV, SCALE_CSV, TIMING_CSV, TRACKING_CSV};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Accuracy,
    Scale,
    Timing,
    Tracking,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::Accuracy,
        Experiment::Scale,
        Experiment::Timing,
        Experiment::Tracking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Accuracy => "accuracy",
            Experiment::Scale => "scale",
            Experiment::Timing => "timing",
            Experiment::Tracking => "tracking",
        }
    }

    pub fn csv(self) -> &'static str {
        match self {
            Experiment::Accuracy => ACCURACY_CSV,
            Experiment::Scale => SCALE_CSV,
            Experiment::Timing => TIMING_CSV,
            Experiment::Tracking => TRACKING_CSV,
        }
    }

    fn body(self) -> &'static str {
        match self {
            Experiment::Accuracy => ACCURACY_PY,
            Experiment::Scale => SCALE_PY,
            Experiment::Timing => TIMING_PY,
            Experiment::Tracking => TRACKING_PY,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match Experiment::ALL.into_iter().find(|e| e.name() == s) {
            Some(e) => Ok(e),
            None => bail!("unknown experiment `{s}` (accuracy|scale|timing|tracking)"),
        }
    }
}

const HEADER: &str = r#"import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def rows(name):
    with open(os.path.join(HERE, name), newline="") as f:
        return list(csv.DictReader(f))

"#;

const ACCURACY_PY: &str = r#"
data = rows("accuracy.csv")
names = list(dict.fromkeys(r["allocator"] for r in data))
losses = [[float(r["excess_loss_pct"]) for r in data if r["allocator"] == n] for n in names]
fig, ax = plt.subplots(figsize=(7, 4))
ax.boxplot(losses, showfliers=False)
ax.set_xticks(range(1, len(names) + 1), names)
ax.set_ylabel("excess loss (%)")
ax.set_title("Static allocation accuracy")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "accuracy.png"), dpi=150)
"#;

const SCALE_PY: &str = r#"
data = rows("scale.csv")
fig, ax = plt.subplots(figsize=(7, 4))
for name in dict.fromkeys(r["allocator"] for r in data):
    sel = [r for r in data if r["allocator"] == name]
    n = [int(r["n"]) for r in sel]
    ax.plot(n, [float(r["mean"]) for r in sel], marker="o", label=name)
    ax.fill_between(n, [float(r["p10"]) for r in sel], [float(r["p90"]) for r in sel], alpha=0.2)
ax.set_xlabel("number of targets N")
ax.set_ylabel("excess loss (%)")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, "scale.png"), dpi=150)
"#;

const TIMING_PY: &str = r#"
data = rows("timing.csv")
fig, ax = plt.subplots(figsize=(7, 4))
for name in dict.fromkeys(r["allocator"] for r in data):
    sel = [r for r in data if r["allocator"] == name]
    ax.plot([int(r["n"]) for r in sel], [float(r["median_us"]) for r in sel], marker="o", label=name)
ax.set_xlabel("number of targets N")
ax.set_ylabel("median time per allocation (us)")
ax.set_yscale("log")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, "timing.png"), dpi=150)
"#;

const TRACKING_PY: &str = r#"
data = rows("tracking.csv")
step = [int(r["step"]) for r in data]
fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
for key, label in [("bcrlb_formula", "formula"), ("bcrlb_oracle", "oracle")]:
    top.plot(step, [float(r[key]) for r in data], label=label)
for key, label in [("rmse_formula", "formula"), ("rmse_oracle", "oracle")]:
    bottom.plot(step, [float(r[key]) for r in data], label=label)
top.set_ylabel("weighted BCRLB (m)")
bottom.set_ylabel("weighted RMSE (m)")
bottom.set_xlabel("step")
for ax in (top, bottom):
    ax.set_yscale("log")
    ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, "tracking.png"), dpi=150)
"#;

pub fn script_name(e: Experiment) -> String {
    format!("plot_{}.py", e.name())
}

pub fn script_text(e: Experiment) -> String {
    format!("{HEADER}{}", e.body().trim_start())
}

/// Writes plot scripts for `which`, or for every experiment whose CSV is
/// present when `which` is empty.
pub fn emit_plots(dir: &Path, which: &[Experiment]) -> Result<Vec<PathBuf>> {
    let selected: Vec<Experiment> = if which.is_empty() {
        let present: Vec<Experiment> = Experiment::ALL
            .into_iter()
            .filter(|e| dir.join(e.csv()).is_file())
            .collect();
        if present.is_empty() {
            bail!(
                "no result CSVs in {}; run `radalloc bench <accuracy|scale|timing|tracking> --out {}` first",
                dir.display(),
                dir.display()
            );
        }
        present
    } else {
        which.to_vec()
    };
    let mut written = Vec::new();
    for e in selected {
        if !dir.join(e.csv()).is_file() {
            bail!(
                "{} not found in {}; run `radalloc bench {e} --out {}` first",
                e.csv(),
                dir.display(),
                dir.display()
            );
        }
        let path = dir.join(script_name(e));
        std::fs::write(&path, script_text(e)).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
