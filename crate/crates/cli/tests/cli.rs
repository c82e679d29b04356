use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use equirl::envs::build_gridworld;
use equirl::envs::trading::EpisodeRecord;
use equirl::fit::TrainLog;
use equirl::mdp::MdpFile;
use equirl_cli::report::{read_rows, ErrorRow, WeightRow};
use equirl_cli::{read_key_values, run};

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn core_fixture(name: &str) -> PathBuf {
    manifest().join("../core/tests/fixtures").join(name)
}

fn bundled_mdp() -> PathBuf {
    manifest().join("data/symmetric_gridworld.json")
}

fn bundled_config() -> PathBuf {
    manifest().join("configs/broken_gridworld.toml")
}

fn eq(args: &[&str]) -> i32 {
    let mut v = vec!["equirl"];
    v.extend_from_slice(args);
    run(v)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn kv(path: &Path) -> Vec<(String, String)> {
    read_key_values(fs::File::open(path).unwrap()).unwrap()
}

fn get<'a>(rows: &'a [(String, String)], key: &str) -> &'a str {
    &rows.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no {key}")).1
}

#[test]
fn bundled_mdp_is_the_default_gridworld() {
    let (m, sym) = build_gridworld::<f64>(&Default::default()).unwrap();
    let file = MdpFile::read(&bundled_mdp()).unwrap();
    assert_eq!(file, MdpFile::from_parts(&m, &sym));
}

#[test]
fn verify_bound_on_symmetric_gridworld() {
    let dir = tempfile::tempdir().unwrap();
    for ipm in ["tv", "kantorovich"] {
        let a = dir.path().join(format!("{ipm}_a.csv"));
        let b = dir.path().join(format!("{ipm}_b.csv"));
        for out in [&a, &b] {
            let code = eq(&[
                "verify-bound",
                "--mdp",
                p(&bundled_mdp()),
                "--ipm",
                ipm,
                "--report",
                p(out),
                "--no-timestamp",
                "--quiet",
            ]);
            assert_eq!(code, 0);
        }
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let rows = kv(&a);
        assert_eq!(get(&rows, "alpha").parse::<f64>().unwrap(), 0.0);
        assert_eq!(get(&rows, "epsilon_r").parse::<f64>().unwrap(), 0.0);
        assert_eq!(get(&rows, "epsilon_p").parse::<f64>().unwrap(), 0.0);
        assert!(get(&rows, "max_q_gap").parse::<f64>().unwrap() <= 1e-8);
        assert_eq!(get(&rows, "holds"), "true");
        assert_eq!(get(&rows, "finite_horizon_holds"), "true");
        assert_eq!(get(&rows, "ipm"), ipm);
        assert_eq!(get(&rows, "seed"), "0");
        assert_eq!(get(&rows, "config_hash").len(), 64);
        assert!(rows.iter().all(|(k, _)| k != "generated_at_unix"));
    }
    let stamped = dir.path().join("stamped.csv");
    let json = dir.path().join("stamped.json");
    let code =
        eq(&["verify-bound", "--mdp", p(&bundled_mdp()), "--report", p(&stamped), "--json", p(&json), "--quiet"]);
    assert_eq!(code, 0);
    assert!(get(&kv(&stamped), "generated_at_unix").parse::<u64>().is_ok());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["holds"], "true");
}

#[test]
fn trade_sim_zero_uniform_and_scripted() {
    let dir = tempfile::tempdir().unwrap();
    let prices = core_fixture("prices_30.csv");
    let zero = dir.path().join("zero.csv");
    assert_eq!(eq(&["trade-sim", "--prices", p(&prices), "--policy", "zero", "--out", p(&zero), "--quiet"]), 0);
    let rec = EpisodeRecord::read_csv(fs::File::open(&zero).unwrap()).unwrap();
    assert_eq!(rec.final_value(), 1_000_000.0);
    assert_eq!(rec.tickers.len(), 30);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(zero.with_extension("json")).unwrap()).unwrap();
    assert_eq!(summary["final_value"], 1_000_000.0);
    assert!(summary["sharpe_ratio"].is_null());
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);

    let small = core_fixture("prices_small.csv");
    let uni = dir.path().join("uniform.csv");
    let sum = dir.path().join("uniform_summary.json");
    let args =
        ["trade-sim", "--prices", p(&small), "--policy", "uniform", "--out", p(&uni), "--summary", p(&sum), "--quiet"];
    assert_eq!(eq(&args), 0);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sum).unwrap()).unwrap();
    assert!((summary["final_value"].as_f64().unwrap() - 976357.22845).abs() < 1e-6);

    let scripted = dir.path().join("scripted.csv");
    let policy = format!("file:{}", p(&core_fixture("actions_small.csv")));
    assert_eq!(eq(&["trade-sim", "--prices", p(&small), "--policy", &policy, "--out", p(&scripted), "--quiet"]), 0);
    assert_eq!(fs::read(&scripted).unwrap(), fs::read(core_fixture("golden_episode.csv")).unwrap());
}

#[test]
fn make_fixture_reproduces_the_thirty_ticker_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let code = eq(&["make-fixture", "--seed", "7", "--tickers", "30", "--days", "60", "--out", p(&out), "--quiet"]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(core_fixture("prices_30.csv")).unwrap());
    assert_eq!(eq(&["make-fixture", "--seed", "7", "--tickers", "0", "--days", "60"]), 1);
}

#[test]
fn equiv_report_random_layers() {
    let dir = tempfile::tempdir().unwrap();
    let exact = dir.path().join("exact");
    let code =
        eq(&["equiv-report", "--group", "d4", "--kernels", "2", "--seed", "3", "--out-dir", p(&exact), "--quiet"]);
    assert_eq!(code, 0);
    let errors: Vec<ErrorRow> = read_rows(fs::File::open(exact.join("errors.csv")).unwrap()).unwrap();
    assert_eq!(errors.len(), 8);
    assert!(errors.iter().all(|e| e.max_ee <= 1e-9));
    let weights: Vec<WeightRow> = read_rows(fs::File::open(exact.join("weights.csv")).unwrap()).unwrap();
    assert_eq!(weights.len(), 16);
    assert!(weights.iter().all(|w| w.weight == 0.5 && w.spread == 0.0 && w.variance == 0.0));

    let broken = dir.path().join("broken");
    let code = eq(&[
        "equiv-report",
        "--group",
        "c4",
        "--perturb",
        "0.2",
        "--out-dir",
        p(&broken),
        "--no-timestamp",
        "--quiet",
    ]);
    assert_eq!(code, 0);
    let errors: Vec<ErrorRow> = read_rows(fs::File::open(broken.join("errors.csv")).unwrap()).unwrap();
    assert_eq!(errors[0].max_ee, 0.0);
    assert!(errors[1..].iter().all(|e| e.max_ee > 1e-6));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(broken.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["layers"][0]["stabilizer"], serde_json::json!(["e"]));
    assert!(report.get("generated_at_unix").is_none());
}

fn small_config(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(bundled_config())
        .unwrap()
        .replace("replicas = 8", "replicas = 2")
        .replace("steps = 10000", "steps = 300")
        .replace("episodes = 2000", "episodes = 100");
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn gridworld_fit_outputs_are_reproducible_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(eq(&["gridworld-fit", "--config", p(&cfg), "--out-dir", p(&a), "--no-timestamp", "--quiet"]), 0);
    assert_eq!(
        eq(&["gridworld-fit", "--config", p(&cfg), "--out-dir", p(&b), "--no-timestamp", "--quiet", "--jobs", "3"]),
        0
    );
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());

    let mut n = 0;
    for entry in fs::read_dir(a.join("logs")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().unwrap() == "csv" {
            let (losses, _) = TrainLog::read_csv(fs::File::open(&path).unwrap()).unwrap();
            assert_eq!(losses.len(), 301);
            assert_eq!(fs::read(&path).unwrap(), fs::read(b.join("logs").join(path.file_name().unwrap())).unwrap());
            n += 1;
        }
    }
    assert_eq!(n, 12);

    // relaxed weights of a trained run through equiv-report
    let run_file = a.join("logs/configured_relaxed_seed0.json");
    let out = dir.path().join("eq");
    assert_eq!(eq(&["equiv-report", "--train-log", p(&run_file), "--out-dir", p(&out), "--quiet"]), 0);
    let weights: Vec<WeightRow> = read_rows(fs::File::open(out.join("weights.csv")).unwrap()).unwrap();
    assert_eq!(weights.len(), 4); // two layers, two elements of d1
    assert!(weights[0].spread > 0.0);
}

#[test]
fn gridworld_fit_bundled_config_orders_spreads() {
    let dir = tempfile::tempdir().unwrap();
    let code =
        eq(&["gridworld-fit", "--config", p(&bundled_config()), "--out-dir", p(dir.path()), "--jobs", "4", "--quiet"]);
    assert_eq!(code, 0);
    let s: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["config_version"], 1);
    assert_eq!(s["seed"], 0);
    assert!(s["generated_at_unix"].is_u64());
    let checks = s["summary"]["checks"].as_array().unwrap();
    for name in ["symmetric_spread", "spread_ratio"] {
        let c = checks.iter().find(|c| c["name"] == name).unwrap();
        assert_eq!(c["passed"], true, "{c}");
    }
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    assert_eq!(eq(&["verify-bound", "--mdp", p(&bundled_mdp()), "--report", p(&out), "--frobnicate"]), 1);
    assert_eq!(eq(&["no-such-command"]), 1);
    assert_eq!(eq(&["verify-bound", "--mdp", "missing.json", "--report", p(&out)]), 1);
    assert_eq!(eq(&["verify-bound", "--mdp", p(&bundled_mdp()), "--ipm", "hellinger", "--report", p(&out)]), 1);
    assert_eq!(eq(&["--jobs", "0", "make-fixture", "--seed", "1", "--tickers", "2", "--days", "5"]), 1);

    let cfg = dir.path().join("v2.toml");
    fs::write(&cfg, fs::read_to_string(bundled_config()).unwrap().replace("config_version = 1", "config_version = 2"))
        .unwrap();
    assert_eq!(eq(&["gridworld-fit", "--config", p(&cfg), "--out-dir", p(dir.path())]), 1);
    let typo = dir.path().join("typo.toml");
    fs::write(&typo, fs::read_to_string(bundled_config()).unwrap().replace("replicas", "replicaz")).unwrap();
    assert_eq!(eq(&["gridworld-fit", "--config", p(&typo), "--out-dir", p(dir.path())]), 1);

    let prices = core_fixture("prices_small.csv");
    assert_eq!(eq(&["trade-sim", "--prices", p(&prices), "--policy", "yolo", "--out", p(&out)]), 1);
    assert_eq!(eq(&["trade-sim", "--prices", p(&prices), "--policy", "zero", "--window", "500", "--out", p(&out)]), 1);
}

#[test]
fn output_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // the report path is an existing directory
    let code = eq(&["verify-bound", "--mdp", p(&bundled_mdp()), "--report", p(dir.path()), "--quiet"]);
    assert_eq!(code, 2);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_equirl");
    let status = Command::new(bin).arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    assert!(!status.stderr.is_empty());
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    let ok =
        Command::new(bin).args(["make-fixture", "--seed", "11", "--tickers", "3", "--days", "20"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(ok.stdout, fs::read(core_fixture("prices_small.csv")).unwrap());
}
