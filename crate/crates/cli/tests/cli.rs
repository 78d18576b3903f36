use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn relu_scl(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relu-scl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RELU_SCL_OUT")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn unknown_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = relu_scl(dir.path(), &["build", "--set", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "N = 8\nwidht = 3\n").unwrap();
    let o = relu_scl(dir.path(), &["build", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = relu_scl(dir.path(), &["build", "--set", "N=eight"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn build_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(relu_scl(d.path(), &["build", "--set", "N=6"]).status.success());
    }
    for f in ["emulator.json", "metrics.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn kle_depth_is_n_plus_one() {
    let dir = tempfile::tempdir().unwrap();
    assert!(relu_scl(dir.path(), &["build", "--set", "N=8"]).status.success());
    let rows = csv_rows(&dir.path().join("metrics.csv"));
    let depth = rows.iter().find(|r| r[0] == "depth").unwrap();
    let measured: f64 = depth[1].parse().unwrap();
    assert!(measured <= 9.0);
    assert_eq!(depth[2].parse::<f64>().unwrap(), 9.0);
    assert!(rows.iter().filter(|r| r[3] != "n/a").all(|r| r[3] == "true"));
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nN = 5\nd = 2\n").unwrap();
    let o = relu_scl(dir.path(), &["build", "--config", cfg.to_str().unwrap(), "--set", "N=4", "--seed", "9"]);
    assert!(o.status.success());
    let m = manifest(dir.path());
    assert_eq!(m["config"]["N"], "4");
    assert_eq!(m["config"]["d"], "2");
    assert_eq!(m["config"]["seed"], "9");
    assert_eq!(m["subcommand"], "build");
    assert!(m["versions"]["relu-scl"].is_string());
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_relu-scl"))
        .args(["bounds"])
        .env("RELU_SCL_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("bounds.json").exists());
}

#[test]
fn default_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = relu_scl(dir.path(), &["verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("verify.csv"));
    assert!(rows.iter().all(|r| r[3] == "true"));
    for check in ["equivalence", "max_principle", "tvd", "conservation", "convergence_rate"] {
        assert!(rows.iter().any(|r| r[0] == check), "{check}");
    }
    let errs: Vec<f64> = rows
        .iter()
        .filter(|r| r[0].starts_with("convergence_N"))
        .map(|r| r[1].parse().unwrap())
        .collect();
    assert_eq!(errs.len(), 3);
    assert!(errs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn corrupted_network_fails_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let built = dir.path().join("built");
    assert!(relu_scl(&built, &["build", "--set", "N=6"]).status.success());
    let mut net: Value = serde_json::from_str(&std::fs::read_to_string(built.join("emulator.json")).unwrap()).unwrap();
    let w = &mut net["layers"][1]["triplets"][0][2];
    *w = Value::from(w.as_f64().unwrap() * 1.01);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, net.to_string()).unwrap();

    let good_arg = format!("network={}", built.join("emulator.json").display());
    let o = relu_scl(&dir.path().join("good"), &["verify", "--set", "N=6", "--set", &good_arg, "--set", "verify.n_list="]);
    assert!(o.status.success());

    let bad_arg = format!("network={}", bad.display());
    let out = dir.path().join("bad");
    let o = relu_scl(&out, &["verify", "--set", "N=6", "--set", &bad_arg, "--set", "verify.n_list="]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("equivalence"));
    assert_eq!(manifest(&out)["status"], "check_failed");
}

#[test]
fn bounds_json_matches_table() {
    let dir = tempfile::tempdir().unwrap();
    assert!(relu_scl(dir.path(), &["bounds"]).status.success());
    let reports: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bounds.json")).unwrap()).unwrap();
    let table = std::fs::read_to_string(dir.path().join("bounds.txt")).unwrap();
    assert_eq!(reports.len(), 6);
    for r in &reports {
        let name = r["name"].as_str().unwrap();
        let line = table.lines().find(|l| l.split_whitespace().next() == Some(name)).unwrap();
        let shown: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        let value = r["value"].as_f64().unwrap();
        assert!((shown - value).abs() <= 1e-6 * value.abs(), "{name}");
        for (k, c) in r["constants"].as_object().unwrap() {
            let prov = c["provenance"].as_str().unwrap();
            assert!(table.contains(&format!("({prov})")), "{name}.{k}");
        }
    }
}

#[test]
fn decay_failure_is_a_check_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert!(relu_scl(dir.path(), &["kl-modes"]).status.success());
    assert!(dir.path().join("modes.csv").exists());
    let o = relu_scl(dir.path(), &["kl-modes", "--set", "pflux.c_f=1.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fv_solve_writes_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = relu_scl(dir.path(), &["fv-solve", "--set", "fv.cells=64", "--set", "fv.y=0,1,0.5"]);
    assert!(o.status.success());
    assert_eq!(csv_rows(&dir.path().join("solution.csv")).len(), 64);
    let o = relu_scl(dir.path(), &["fv-solve", "--set", "fv.y=0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_dry_run_plans_without_training() {
    let dir = tempfile::tempdir().unwrap();
    let o = relu_scl(dir.path(), &["experiment", "--dry-run", "--seed", "3"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("plan for m_sweep"));
    assert!(!dir.path().join("m_sweep.csv").exists());
    assert_eq!(csv_rows(&dir.path().join("plan.csv")).len(), 4 * 5);
    let m = manifest(dir.path());
    assert_eq!(m["seeds"]["seed"], 3);
    assert!(m["seeds"]["d8_M25_r0.init"].is_u64());
}

#[test]
fn train_records_seeds_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["train", "--seed", "4", "--set", "train.epochs=20", "--set", "train.M=12", "--set", "data.cells=128"];
    assert!(relu_scl(dir.path(), &args).status.success());
    assert_eq!(csv_rows(&dir.path().join("history.csv")).len(), 20);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let m = manifest(dir.path());
    assert_eq!(m["seeds"]["d4_M12_r0.init"], report["run"]["init_seed"]);
    assert_eq!(m["seeds"]["d4_M12_r0.data"], report["run"]["data_seed"]);

    let again = tempfile::tempdir().unwrap();
    assert!(relu_scl(again.path(), &args).status.success());
    for f in ["history.csv", "report.json", "params.json", "manifest.json"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn small_m_sweep_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "experiment", "--set", "experiment.M_list=10,20", "--set", "experiment.repeats=2", "--set", "train.epochs=20", "--set", "data.cells=128", "--set",
        "train.width=6",
    ];
    assert!(relu_scl(dir.path(), &args).status.success());
    let text = std::fs::read_to_string(dir.path().join("m_sweep.csv")).unwrap();
    assert!(text.starts_with("# "));
    assert_eq!(csv_rows(&dir.path().join("m_sweep.csv")).len(), 2);
    assert_eq!(csv_rows(&dir.path().join("runs.csv")).len(), 4);
}
