use std::path::Path;
use std::process::{Command, Output};

fn lgk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgk")).args(args).env_remove("LGK_THREADS").output().expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("exp.json");
    std::fs::write(
        &path,
        r#"{
            "velocity": {"preset": "model_one:1"},
            "a": 0.1,
            "n_list": [8, 12],
            "T": 0.005,
            "snapshots": [0.0, 0.005],
            "replicas": 6,
            "phi": {"modes": [{"k": [1], "re": [0.0, 0.2], "im": [0.8, 0.0]}]},
            "functionals": [
                {"id": "mass_sin", "modes": [{"k": [1], "re": [0.0, 0.0], "im": [1.0, 0.0]}]},
                {"id": "mom_cos", "modes": [{"k": [1], "re": [0.0, 1.0]}]}
            ],
            "grid": 32,
            "seed": 99
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn version_and_check() {
    let out = lgk(&["version"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("lgk "));
    let out = lgk(&["check", "--velocity", "root_two"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("integer independent: true") && text.contains("kappa: 7"));
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dimension": 1, "velocities": [["1"], ["1"]]}"#).unwrap();
    assert_eq!(lgk(&["check", "--velocity", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(lgk(&["check", "--velocity", "no_such_preset"]).status.code(), Some(1));
    assert_eq!(lgk(&["compare"]).status.code(), Some(1));
}

#[test]
fn exact_residuals_and_tolerance_exit() {
    let out = lgk(&["exact", "--velocity", "model_one:1", "--N", "3", "--samples", "3"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 4);
    let out = lgk(&["exact", "--velocity", "model_one:1", "--N", "3", "--samples", "3", "--tol", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gap_and_chain_tables() {
    let dir = tempfile::tempdir().unwrap();
    let gaps = dir.path().join("gaps.csv");
    let out = lgk(&["gap", "--velocity", "root_two", "--M-list", "1", "--out", gaps.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&gaps).unwrap();
    assert!(text.starts_with("M,i,size,zero_multiplicity,gap,gap_scaled\n"));
    assert_eq!(text.lines().count(), 1 + 175);
    let out = lgk(&["chain", "--velocity", "root_two", "--M-list", "1"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).lines().skip(1).all(|l| l.contains(",true,")));
    // 36 occupation bits: too large to enumerate.
    let out = lgk(&["gap", "--velocity", "model_one:2", "--M-list", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds the limit"));
}

#[test]
fn compare_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = |threads: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = Command::new(env!("CARGO_BIN_EXE_lgk"))
            .args(["compare", "--svg", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .env("LGK_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("1", "one");
    let b = run("3", "three");
    let csv_a = std::fs::read(a.join("comparison.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("comparison.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&csv_a).lines().count(), 1 + 2 * 2 * 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 99);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(a.join("gap_mass_sin.svg").is_file());
}

#[test]
fn pde_and_simulate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let pde = dir.path().join("pde.csv");
    let out = lgk(&["pde", "--config", cfg.to_str().unwrap(), "--grid", "16", "--Tend", "0.01", "--out", pde.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&pde).unwrap();
    assert!(text.starts_with("t,functional_id,value\n"));
    // Report times 0 and 0.005 plus the end time, two functionals each.
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    let sim = dir.path().join("sim");
    let out = lgk(&["simulate", "--config", cfg.to_str().unwrap(), "--N", "8", "--seed", "5", "--out", sim.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = std::fs::File::open(sim.join("snapshot_0001.lgkc")).unwrap();
    let (cfg, labels) = lgk_core::lattice::read_snapshot(std::io::BufReader::new(file)).unwrap();
    assert_eq!(cfg.torus().side(), 8);
    assert_eq!(labels.len(), 2);
}
