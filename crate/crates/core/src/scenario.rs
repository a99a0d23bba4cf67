//! Random scenario generation, validation and the JSON scenario format.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    noise_coeffs_from_snr, normalized_meas_info_for, prior_info, snr_per_watt, InfoMatrix4, MeasurementNoiseCoeffs,
    RadarSystemParams, TargetPhysics,
};
use crate::problem::{AllocationProblem, TargetInfo};
use crate::rng::{child_key, mix64, stream};

pub const SCHEMA_VERSION: &str = "1";

pub const RANGE_M: (f64, f64) = (10e3, 150e3);
pub const AZIMUTH_DEG: (f64, f64) = (10.0, 170.0);
pub const RCS_M2: (f64, f64) = (0.5, 10.0);
pub const WEIGHT: (f64, f64) = (1.0, 10.0);
pub const SIGMA_P_M: (f64, f64) = (10.0, 1e4);
pub const SIGMA_V_MPS: (f64, f64) = (1.0, 100.0);
pub const SPEED_MPS: (f64, f64) = (50.0, 300.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Train,
    Eval,
}

impl Label {
    fn tag(self) -> u64 {
        match self {
            Label::Train => 0x7472_6169_6e5f_7365,
            Label::Eval => 0x6576_616c_5f73_6565,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Train => "train",
            Label::Eval => "eval",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Label::Train),
            "eval" => Ok(Label::Eval),
            other => Err(Error::Domain(format!("unknown label `{other}` (train|eval)"))),
        }
    }
}

/// How `p_min` is chosen for a scenario of `N` targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinPowerRule {
    /// `p_min = f·P/N`.
    ShareFraction(f64),
    Watts(f64),
}

impl Default for MinPowerRule {
    fn default() -> Self {
        MinPowerRule::ShareFraction(0.05)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GeneratorConfig {
    #[serde(default)]
    pub system: RadarSystemParams,
    #[serde(default)]
    pub min_power: MinPowerRule,
}

impl GeneratorConfig {
    pub fn system_for(&self, n: usize) -> RadarSystemParams {
        let p_min = match self.min_power {
            MinPowerRule::ShareFraction(f) => f * self.system.total_power_w / n.max(1) as f64,
            MinPowerRule::Watts(w) => w,
        };
        self.system.with_min_power(p_min)
    }
}

/// Serialized per-target parameters; the matrices are recomputed on load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    #[serde(rename = "R_m")]
    pub range_m: f64,
    pub theta_rad: f64,
    pub rcs_m2: f64,
    pub w: f64,
    pub sigma_p_m: f64,
    pub sigma_v_mps: f64,
    pub speed_mps: f64,
    pub heading_rad: f64,
}

impl TargetRecord {
    fn fields(&self) -> [f64; 8] {
        [
            self.range_m,
            self.theta_rad,
            self.rcs_m2,
            self.w,
            self.sigma_p_m,
            self.sigma_v_mps,
            self.speed_mps,
            self.heading_rad,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTarget {
    pub record: TargetRecord,
    pub phys: TargetPhysics,
    pub snr_per_watt: f64,
    pub coeffs: MeasurementNoiseCoeffs,
    pub j_prior: InfoMatrix4,
    pub j_d: InfoMatrix4,
}

impl ScenarioTarget {
    pub fn from_record(record: TargetRecord, sys: &RadarSystemParams) -> Result<Self> {
        let phys = TargetPhysics::new(record.range_m, record.theta_rad, record.rcs_m2, record.w)?;
        let snr = snr_per_watt(&phys, sys)?;
        let coeffs = noise_coeffs_from_snr(snr, sys)?;
        let j_prior = prior_info(record.sigma_p_m, record.sigma_v_mps)?;
        let j_d = normalized_meas_info_for(&phys, &coeffs)?;
        Ok(Self {
            record,
            phys,
            snr_per_watt: snr,
            coeffs,
            j_prior,
            j_d,
        })
    }

    /// Initial kinematic state `(x, ẋ, y, ẏ)`.
    pub fn initial_state(&self) -> [f64; 4] {
        let (s, h) = (self.record.speed_mps, self.record.heading_rad);
        [self.phys.x, s * h.cos(), self.phys.y, s * h.sin()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInstance {
    pub sys: RadarSystemParams,
    pub targets: Vec<ScenarioTarget>,
    pub seed: u64,
    pub label: Label,
}

impl ScenarioInstance {
    pub fn from_records(sys: RadarSystemParams, records: &[TargetRecord], seed: u64, label: Label) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Degenerate("scenario has no targets".into()));
        }
        sys.validate()?;
        sys.check_feasible(records.len())?;
        let targets = records
            .iter()
            .map(|r| ScenarioTarget::from_record(*r, &sys))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sys,
            targets,
            seed,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn records(&self) -> Vec<TargetRecord> {
        self.targets.iter().map(|t| t.record).collect()
    }

    pub fn problem(&self) -> Result<AllocationProblem> {
        let targets = self
            .targets
            .iter()
            .map(|t| {
                TargetInfo::new(
                    t.phys.range,
                    t.phys.rcs,
                    t.phys.weight,
                    t.snr_per_watt,
                    t.j_prior,
                    t.j_d,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        AllocationProblem::new(self.sys.total_power_w, self.sys.min_power_w, targets)
    }

    pub fn to_json(&self) -> Result<String> {
        let records = self.records();
        let file = ScenarioFile {
            version: SCHEMA_VERSION.to_string(),
            seed: self.seed,
            label: self.label,
            sys: self.sys,
            checksum: checksum(&records),
            targets: records,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version") {
            Some(serde_json::Value::String(v)) if v == SCHEMA_VERSION => {}
            Some(v) => {
                return Err(Error::Schema(format!(
                    "unsupported scenario version {v}, expected \"{SCHEMA_VERSION}\""
                )))
            }
            None => return Err(Error::Schema("missing `version` field".into())),
        }
        let file: ScenarioFile = serde_json::from_value(value)?;
        let sum = checksum(&file.targets);
        if sum.to_bits() != file.checksum.to_bits() {
            return Err(Error::Integrity(format!(
                "checksum mismatch: file says {}, contents sum to {sum}",
                file.checksum
            )));
        }
        Self::from_records(file.sys, &file.targets, file.seed, file.label)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    version: String,
    seed: u64,
    label: Label,
    sys: RadarSystemParams,
    targets: Vec<TargetRecord>,
    checksum: f64,
}

/// Sum of every serialized target field, in file order.
fn checksum(records: &[TargetRecord]) -> f64 {
    records.iter().flat_map(|r| r.fields()).sum()
}

pub fn save(instance: &ScenarioInstance, path: impl AsRef<Path>) -> Result<()> {
    let mut text = instance.to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ScenarioInstance> {
    ScenarioInstance::from_json(&std::fs::read_to_string(path)?)
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    (lo + (hi - lo) * u).clamp(lo, hi)
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    let (a, b) = (lo.log10(), hi.log10());
    10f64.powf(a + (b - a) * u).clamp(lo, hi)
}

/// Draws one target's parameters from its own stream keyed by `(seed, index)`.
pub fn sample_target(seed: u64, index: usize) -> TargetRecord {
    let mut rng = stream(seed, index as u64);
    let az = AZIMUTH_DEG;
    let record = TargetRecord {
        range_m: uniform(&mut rng, RANGE_M),
        theta_rad: uniform(&mut rng, (az.0.to_radians(), az.1.to_radians())),
        rcs_m2: uniform(&mut rng, RCS_M2),
        w: uniform(&mut rng, WEIGHT),
        sigma_p_m: log_uniform(&mut rng, SIGMA_P_M),
        sigma_v_mps: log_uniform(&mut rng, SIGMA_V_MPS),
        speed_mps: uniform(&mut rng, SPEED_MPS),
        heading_rad: uniform(&mut rng, (0.0, std::f64::consts::TAU)),
    };
    assert_in_support(&record);
    record
}

fn assert_in_support(r: &TargetRecord) {
    let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    let az = (AZIMUTH_DEG.0.to_radians(), AZIMUTH_DEG.1.to_radians());
    assert!(within(r.range_m, RANGE_M), "range {} outside support", r.range_m);
    assert!(within(r.theta_rad, az), "azimuth {} outside support", r.theta_rad);
    assert!(within(r.rcs_m2, RCS_M2), "rcs {} outside support", r.rcs_m2);
    assert!(within(r.w, WEIGHT), "weight {} outside support", r.w);
    assert!(
        within(r.sigma_p_m, SIGMA_P_M),
        "sigma_p {} outside support",
        r.sigma_p_m
    );
    assert!(
        within(r.sigma_v_mps, SIGMA_V_MPS),
        "sigma_v {} outside support",
        r.sigma_v_mps
    );
    assert!(within(r.speed_mps, SPEED_MPS), "speed {} outside support", r.speed_mps);
    assert!(within(r.heading_rad, (0.0, std::f64::consts::TAU)));
}

pub fn generate(seed: u64, n: usize, sys: &RadarSystemParams, label: Label) -> Result<ScenarioInstance> {
    if n == 0 {
        return Err(Error::Degenerate("scenario needs at least one target".into()));
    }
    sys.validate()?;
    sys.check_feasible(n)?;
    let records: Vec<TargetRecord> = (0..n).map(|i| sample_target(seed, i)).collect();
    ScenarioInstance::from_records(*sys, &records, seed, label)
}

/// Seed of instance `index` in the stream `(base_seed, label)`. Within one
/// stream this is a bijection of `index`; the two labels start at unrelated
/// offsets, so train and eval streams do not meet.
pub fn derive_seed(base_seed: u64, label: Label, index: u64) -> u64 {
    let offset = mix64(base_seed ^ label.tag());
    mix64(offset.wrapping_add(index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBatch {
    pub instances: Vec<ScenarioInstance>,
    pub n_range: (usize, usize),
}

pub fn generate_batch(
    base_seed: u64,
    count: usize,
    n_range: (usize, usize),
    cfg: &GeneratorConfig,
    label: Label,
) -> Result<ScenarioBatch> {
    if count == 0 {
        return Err(Error::Degenerate("batch count must be at least 1".into()));
    }
    let (lo, hi) = n_range;
    if lo == 0 || lo > hi {
        return Err(Error::Domain(format!("invalid target-count range [{lo}, {hi}]")));
    }
    let instances = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(base_seed, label, i as u64);
            let mut rng = stream(child_key(seed, u64::MAX), 0);
            let n = rng.random_range(lo..=hi);
            generate(seed, n, &cfg.system_for(n), label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioBatch { instances, n_range })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys_for(n: usize) -> RadarSystemParams {
        GeneratorConfig::default().system_for(n)
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let a = generate(42, 17, &sys_for(17), Label::Eval).unwrap();
        let b = generate(42, 17, &sys_for(17), Label::Eval).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn prefix_targets_do_not_depend_on_n() {
        let a = generate(5, 3, &sys_for(10), Label::Train).unwrap();
        let b = generate(5, 10, &sys_for(10), Label::Train).unwrap();
        assert_eq!(a.records()[..], b.records()[..3]);
    }

    #[test]
    fn json_round_trip() {
        let a = generate(9, 12, &sys_for(12), Label::Train).unwrap();
        let b = ScenarioInstance::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let a = generate(11, 4, &sys_for(4), Label::Eval).unwrap();
        save(&a, &path).unwrap();
        assert_eq!(load(&path).unwrap(), a);
    }

    #[test]
    fn checksum_mismatch_is_integrity_error() {
        let a = generate(3, 5, &sys_for(5), Label::Eval).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        v["targets"][2]["w"] = serde_json::json!(9.5);
        let err = ScenarioInstance::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn version_field_required() {
        let a = generate(3, 5, &sys_for(5), Label::Eval).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        v["version"] = serde_json::json!("2");
        assert!(matches!(
            ScenarioInstance::from_json(&v.to_string()),
            Err(Error::Schema(_))
        ));
        v.as_object_mut().unwrap().remove("version");
        assert!(matches!(
            ScenarioInstance::from_json(&v.to_string()),
            Err(Error::Schema(_))
        ));
        assert!(matches!(ScenarioInstance::from_json("{not json"), Err(Error::Json(_))));
    }

    #[test]
    fn infeasible_min_power_rejected() {
        let sys = RadarSystemParams::reference().with_min_power(1e6);
        assert!(matches!(
            generate(1, 3, &sys, Label::Eval),
            Err(Error::Infeasible { .. })
        ));
        assert!(generate(1, 0, &sys, Label::Eval).is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        let cfg = GeneratorConfig::default();
        assert!(generate_batch(1, 0, (10, 30), &cfg, Label::Eval).is_err());
        assert!(generate_batch(1, 3, (30, 10), &cfg, Label::Eval).is_err());
    }

    #[test]
    fn batch_respects_range_and_validates() {
        let cfg = GeneratorConfig::default();
        let batch = generate_batch(77, 40, (10, 30), &cfg, Label::Eval).unwrap();
        assert_eq!(batch.instances.len(), 40);
        for inst in &batch.instances {
            assert!((10..=30).contains(&inst.len()));
            assert!(inst.len() as f64 * inst.sys.min_power_w <= inst.sys.total_power_w);
            inst.problem().unwrap();
        }
        let again = generate_batch(77, 40, (10, 30), &cfg, Label::Eval).unwrap();
        assert_eq!(batch, again);
    }

    #[test]
    fn default_min_power_is_five_percent_of_share() {
        let s = sys_for(20);
        assert!((s.min_power_w - 0.05 * 2e6 / 20.0).abs() < 1e-9);
    }
}
