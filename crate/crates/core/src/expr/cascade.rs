//! Four-layer fitness cascade for candidate scoring expressions.
//!
//! 1. parse and node-count gate;
//! 2. mean objective ratio `100·F(p)/F(p*)` on a small fast set, reject above 300;
//! 3. training loss `L1` (excess %), early stop above ratio 250 with a fixed `L2`;
//! 4. generalization loss `L2` on large-N scenarios.
//!
//! `L = α·L1 + β·L2 + γ·complexity` and fitness is `1/(1+L)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{complexity, evaluate, parse, Expr};
use crate::allocator::{transform, ScoreVector};
use crate::error::Result;
use crate::features::{feature_matrix, FeatureMatrix};
use crate::problem::{objective, AllocationProblem};
use crate::rng::child_key;
use crate::scenario::{generate_batch, GeneratorConfig, Label, ScenarioInstance};
use crate::solvers::{solve_bisection, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Loss per AST node.
    pub gamma: f64,
    pub max_nodes: usize,
    /// Layer 2 rejects when the fast-set mean ratio exceeds this (percent).
    pub fast_reject_ratio: f64,
    /// Layer 3 stops early when the training mean ratio exceeds this (percent).
    pub early_stop_ratio: f64,
    /// `L2` assigned on early stop, and the excess charged for an instance
    /// whose scores are invalid in layers 3 and 4 (percent).
    pub penalty: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
            max_nodes: 80,
            fast_reject_ratio: 300.0,
            early_stop_ratio: 250.0,
            penalty: 1000.0,
        }
    }
}

/// A scenario with its features and optimal objective precomputed.
#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub problem: AllocationProblem,
    pub features: FeatureMatrix,
    pub oracle_objective: f64,
}

impl EvalInstance {
    pub fn new(scenario: &ScenarioInstance) -> Result<Self> {
        let problem = scenario.problem()?;
        let features = feature_matrix(&problem)?;
        let oracle = solve_bisection(&problem, &SolverOptions::default())?;
        Ok(Self {
            problem,
            features,
            oracle_objective: oracle.objective,
        })
    }

    /// `100·F(p)/F(p*)` for the allocation induced by `e`, or a reason why
    /// the scores cannot be transformed.
    pub fn ratio(&self, e: &Expr) -> std::result::Result<f64, String> {
        let scores: Vec<f64> = self.features.rows.iter().map(|r| evaluate(e, r)).collect();
        if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
            return Err(format!("score {s} for target {i}"));
        }
        let p = transform(&ScoreVector(scores), self.problem.total_power, self.problem.min_power)
            .map_err(|e| e.to_string())?;
        let f = objective(&self.problem, &p).map_err(|e| e.to_string())?;
        Ok(100.0 * f / self.oracle_objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSetSizes {
    pub fast: usize,
    pub train: usize,
    pub general: usize,
}

impl Default for EvalSetSizes {
    fn default() -> Self {
        Self {
            fast: 30,
            train: 200,
            general: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalSets {
    pub fast: Vec<EvalInstance>,
    pub train: Vec<EvalInstance>,
    pub general: Vec<EvalInstance>,
}

pub const TRAIN_N_RANGE: (usize, usize) = (10, 30);
pub const GENERAL_N_RANGE: (usize, usize) = (80, 100);

/// The scenarios behind [`EvalSets::build`]: Train-labeled, `train` with N in
/// 10..=30, `general` with N in 80..=100 from a separate base seed, `fast`
/// the first instances of `train`.
pub fn eval_set_scenarios(
    base_seed: u64,
    sizes: EvalSetSizes,
    cfg: &GeneratorConfig,
) -> Result<[Vec<ScenarioInstance>; 3]> {
    let mut train = generate_batch(base_seed, sizes.train.max(sizes.fast), TRAIN_N_RANGE, cfg, Label::Train)?.instances;
    let general = generate_batch(
        child_key(base_seed, 1),
        sizes.general,
        GENERAL_N_RANGE,
        cfg,
        Label::Train,
    )?;
    let fast = train[..sizes.fast].to_vec();
    train.truncate(sizes.train);
    Ok([fast, train, general.instances])
}

impl EvalSets {
    pub fn build(base_seed: u64, sizes: EvalSetSizes, cfg: &GeneratorConfig) -> Result<Self> {
        let [fast, train, general] = eval_set_scenarios(base_seed, sizes, cfg)?;
        let train = Self::prepare(&train)?;
        // fast is a prefix of train; reuse the solved instances
        let fast = train[..fast.len()].to_vec();
        Ok(Self {
            fast,
            train,
            general: Self::prepare(&general)?,
        })
    }

    pub fn prepare(scenarios: &[ScenarioInstance]) -> Result<Vec<EvalInstance>> {
        scenarios.par_iter().map(EvalInstance::new).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    #[serde(rename = "L1", skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(rename = "L2", skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    pub complexity: usize,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitness: Option<f64>,
    pub layer_reached: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<String>,
    pub errors: Vec<String>,
}

impl FitnessReport {
    fn rejected(layer: u8, complexity: usize, reason: String, errors: Vec<String>) -> Self {
        Self {
            l1: None,
            l2: None,
            complexity,
            loss: None,
            fitness: None,
            layer_reached: layer,
            rejection_reason: Some(reason),
            errors,
        }
    }

    pub fn is_rejected(&self) -> bool {
        self.fitness.is_none()
    }
}

/// Mean ratio over a set; invalid instances add `100 + penalty` and an error line.
fn penalized_mean(set: &[EvalInstance], e: &Expr, penalty: f64, name: &str, errors: &mut Vec<String>) -> f64 {
    let ratios: Vec<std::result::Result<f64, String>> = set.par_iter().map(|inst| inst.ratio(e)).collect();
    let mut sum = 0.0;
    for (k, r) in ratios.into_iter().enumerate() {
        sum += match r {
            Ok(v) => v,
            Err(msg) => {
                errors.push(format!("{name} instance {k}: {msg}"));
                100.0 + penalty
            }
        };
    }
    sum / set.len() as f64
}

pub fn cascade_evaluate(e: &Expr, sets: &EvalSets, cfg: &CascadeConfig) -> FitnessReport {
    let size = complexity(e);
    // Layer 1
    if size > cfg.max_nodes {
        return FitnessReport::rejected(
            1,
            size,
            format!("AST has {size} nodes, limit is {}", cfg.max_nodes),
            Vec::new(),
        );
    }

    // Layer 2
    let fast: Vec<std::result::Result<f64, String>> = sets.fast.par_iter().map(|inst| inst.ratio(e)).collect();
    let mut errors = Vec::new();
    let mut sum = 0.0;
    for (k, r) in fast.into_iter().enumerate() {
        match r {
            Ok(v) => sum += v,
            Err(msg) => errors.push(format!("fast instance {k}: {msg}")),
        }
    }
    if !errors.is_empty() {
        let reason = format!("invalid scores on {} fast-set instance(s)", errors.len());
        return FitnessReport::rejected(2, size, reason, errors);
    }
    let fast_ratio = sum / sets.fast.len().max(1) as f64;
    if !(fast_ratio <= cfg.fast_reject_ratio) {
        let reason = format!(
            "fast-set mean ratio {fast_ratio:.3}% exceeds {}%",
            cfg.fast_reject_ratio
        );
        return FitnessReport::rejected(2, size, reason, errors);
    }

    // Layer 3
    let train_ratio = penalized_mean(&sets.train, e, cfg.penalty, "train", &mut errors);
    let l1 = train_ratio - 100.0;
    let (l2, layer) = if train_ratio > cfg.early_stop_ratio {
        (cfg.penalty, 3)
    } else {
        // Layer 4
        let general_ratio = penalized_mean(&sets.general, e, cfg.penalty, "general", &mut errors);
        (general_ratio - 100.0, 4)
    };
    let loss = cfg.alpha * l1 + cfg.beta * l2 + cfg.gamma * size as f64;
    FitnessReport {
        l1: Some(l1),
        l2: Some(l2),
        complexity: size,
        loss: Some(loss),
        fitness: Some(1.0 / (1.0 + loss)),
        layer_reached: layer,
        rejection_reason: None,
        errors,
    }
}

/// Like [`cascade_evaluate`], with parse failures rejected at layer 1.
pub fn cascade_evaluate_text(text: &str, sets: &EvalSets, cfg: &CascadeConfig) -> FitnessReport {
    match parse(text) {
        Ok(e) => cascade_evaluate(&e, sets, cfg),
        Err(err) => FitnessReport::rejected(1, 0, err.to_string(), vec![err.to_string()]),
    }
}

#[derive(Serialize)]
struct Feedback<'a> {
    #[serde(rename = "L1")]
    l1: Option<f64>,
    #[serde(rename = "L2")]
    l2: Option<f64>,
    complexity: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    fitness: Option<f64>,
    errors: &'a [String],
    layer_reached: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    rejection_reason: Option<&'a str>,
}

/// One-line JSON block for an external candidate generator.
pub fn feedback_render(report: &FitnessReport) -> String {
    let fb = Feedback {
        l1: report.l1,
        l2: report.l2,
        complexity: report.complexity,
        fitness: report.fitness,
        errors: &report.errors,
        layer_reached: report.layer_reached,
        rejection_reason: report.rejection_reason.as_deref(),
    };
    serde_json::to_string(&fb).expect("feedback is always serializable")
}
