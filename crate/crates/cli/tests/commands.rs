use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn radalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radalloc"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn gen_one(dir: &Path, n: usize) -> String {
    let out = radalloc(&[
        "--seed",
        "3",
        "--out",
        dir.to_str().unwrap(),
        "gen",
        "--n",
        &n.to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    stdout(&out).trim().to_string()
}

#[test]
fn gen_solve_alloc_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_one(dir.path(), 12);
    assert!(path.ends_with("scenario_00000.json"));

    let mut objectives = Vec::new();
    for solver in ["bisection", "projgrad"] {
        let out = radalloc(&["solve", &path, "--solver", solver]);
        assert_eq!(out.status.code(), Some(0));
        let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(v["allocation"].as_array().unwrap().len(), 12);
        assert!(v["converged"].as_bool().unwrap());
        objectives.push(v["objective"].as_f64().unwrap());
    }
    assert!((objectives[0] - objectives[1]).abs() <= 1e-6 * objectives[0]);

    let out = radalloc(&["alloc", &path, "--allocator", "discovered"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let loss = v["excess_loss_pct"].as_f64().unwrap();
    assert!((0.0..20.0).contains(&loss), "excess loss {loss}");
    assert!((v["oracle_objective"].as_f64().unwrap() - objectives[0]).abs() <= 1e-12 * objectives[0]);
}

#[test]
fn gen_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (pa, pb) = (gen_one(a.path(), 7), gen_one(b.path(), 7));
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn expression_allocator_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_one(dir.path(), 6);
    let expr = dir.path().join("f.txt");
    std::fs::write(&expr, "max(pow(X9/X10 * X13/X14, 0.495), 0.000001)\n").unwrap();
    let via_file = radalloc(&["alloc", &path, "--allocator", &format!("expr:{}", expr.display())]);
    let coded = radalloc(&["alloc", &path, "--allocator", "discovered"]);
    assert!(via_file.status.success());
    let (a, b): (Value, Value) = (
        serde_json::from_str(&stdout(&via_file)).unwrap(),
        serde_json::from_str(&stdout(&coded)).unwrap(),
    );
    let (a, b) = (a["allocation"].as_array().unwrap(), b["allocation"].as_array().unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
        assert!((x - y).abs() <= 1e-12 * y, "{x} vs {y}");
    }
}

#[test]
fn exit_codes() {
    // clap usage error
    assert_eq!(radalloc(&["bench", "nonsense"]).status.code(), Some(2));
    // missing input file
    assert_eq!(radalloc(&["solve", "/nonexistent/s.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let path = gen_one(dir.path(), 4);
    assert_eq!(
        radalloc(&["alloc", &path, "--allocator", "bogus"]).status.code(),
        Some(2)
    );
    // tampered scenario
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["targets"][0]["w"] = serde_json::json!(7.0);
    std::fs::write(&path, v.to_string()).unwrap();
    let out = radalloc(&["solve", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn small_bench_writes_csv_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let missing = radalloc(&["--out", d, "plots", "--experiment", "accuracy"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("bench accuracy"));

    let out = radalloc(&["--out", d, "bench", "accuracy", "--scenarios", "12"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("accuracy.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "excess_loss_pct"));
    // five default allocators per scenario
    assert_eq!(rdr.records().count(), 60);

    let plots = radalloc(&["--out", d, "plots"]);
    assert!(plots.status.success());
    assert!(dir.path().join("plot_accuracy.py").exists());
}

#[test]
fn config_file_sets_the_bench() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    let out_dir = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "seed = 9\nout_dir = {:?}\nallocators = [\"discovered\", \"uniform\"]\n\n[scale]\nn_grid = [5, 8]\nscenarios_per_n = 4\n",
            out_dir.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = radalloc(&["--config", cfg.to_str().unwrap(), "bench", "scale"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(out_dir.join("scale.csv")).unwrap();
    let count = rdr.headers().unwrap().iter().position(|h| h == "count").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    // one summary row per (N, allocator)
    assert_eq!(rows.len(), 2 * 2);
    assert!(rows.iter().all(|r| &r[count] == "4"));

    std::fs::write(&cfg, "allocators = [\"nope\"]\n").unwrap();
    assert_eq!(
        radalloc(&["--config", cfg.to_str().unwrap(), "bench", "scale"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn serve_stdio_answers_each_line() {
    let dir = tempfile::tempdir().unwrap();
    let sets = dir.path().join("sets");
    let out = radalloc(&["--out", sets.to_str().unwrap(), "gen", "--eval-sets"]);
    assert!(out.status.success());
    for name in ["fast", "train", "general"] {
        assert!(sets.join(name).is_dir());
    }
    let mut child = Command::new(env!("CARGO_BIN_EXE_radalloc"))
        .args(["evolve", "serve-stdio", "--sets", sets.to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"X9^(2/3)\n\n# comment\nX9 +\nmax(pow(X9/X10 * X13/X14, 0.495), 0.000001)\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    let fitness = |v: &Value| v["fitness"].as_f64();
    assert!(fitness(&lines[0]).is_some());
    assert!(fitness(&lines[1]).is_none());
    assert!(lines[1]["rejection_reason"].is_string());
    assert!(fitness(&lines[2]).unwrap() > fitness(&lines[0]).unwrap());
}
