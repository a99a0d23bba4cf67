use std::collections::HashSet;

use radalloc::scenario::{self, derive_seed, generate, generate_batch, sample_target, RANGE_M, SIGMA_P_M};
use radalloc::{Error, GeneratorConfig, Label, ScenarioInstance};

#[test]
fn log_sigma_p_is_uniform() {
    // one-sample Kolmogorov-Smirnov test against U(log10 10, log10 1e4)
    let n = 20_000;
    let (lo, hi) = (SIGMA_P_M.0.log10(), SIGMA_P_M.1.log10());
    let mut u: Vec<f64> = (0..n)
        .map(|i| (sample_target(31, i).sigma_p_m.log10() - lo) / (hi - lo))
        .collect();
    u.sort_by(f64::total_cmp);
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
        .fold(0.0f64, f64::max);
    // critical value at the 0.1% level
    let critical = 1.95 / (n as f64).sqrt();
    assert!(d < critical, "KS statistic {d} exceeds {critical}");
}

#[test]
fn range_mean_is_central() {
    let n = 100_000;
    let mean = (0..n).map(|i| sample_target(8, i).range_m).sum::<f64>() / n as f64;
    let mid = 0.5 * (RANGE_M.0 + RANGE_M.1);
    assert!((mean - mid).abs() < 2e3, "mean range {mean}");
}

#[test]
fn train_and_eval_seeds_are_disjoint() {
    let n = 1_000_000u64;
    for base in [0u64, 42] {
        let train: HashSet<u64> = (0..n).map(|i| derive_seed(base, Label::Train, i)).collect();
        assert_eq!(train.len() as u64, n, "train seeds collide");
        assert!((0..n).all(|i| !train.contains(&derive_seed(base, Label::Eval, i))));
    }
}

fn instance() -> ScenarioInstance {
    let cfg = GeneratorConfig::default();
    generate(derive_seed(5, Label::Eval, 3), 12, &cfg.system_for(12), Label::Eval).unwrap()
}

#[test]
fn json_round_trip_is_exact() {
    let inst = instance();
    let back = ScenarioInstance::from_json(&inst.to_json().unwrap()).unwrap();
    assert_eq!(back, inst);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    scenario::save(&inst, &path).unwrap();
    assert_eq!(scenario::load(&path).unwrap(), inst);
}

#[test]
fn tampered_files_are_rejected() {
    let text = instance().to_json().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["targets"][0]["w"] = serde_json::json!(9.5);
    assert!(matches!(
        ScenarioInstance::from_json(&v.to_string()),
        Err(Error::Integrity(_))
    ));
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["version"] = serde_json::json!("0");
    assert!(matches!(
        ScenarioInstance::from_json(&v.to_string()),
        Err(Error::Schema(_))
    ));
}

#[test]
fn batches_do_not_depend_on_thread_count() {
    let cfg = GeneratorConfig::default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| generate_batch(9, 64, (5, 40), &cfg, Label::Train).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn samples_stay_in_support() {
    for i in 0..10_000 {
        let r = sample_target(123, i);
        assert!(r.range_m >= RANGE_M.0 && r.range_m <= RANGE_M.1);
        assert!(r.sigma_p_m >= SIGMA_P_M.0 && r.sigma_p_m <= SIGMA_P_M.1);
    }
}
