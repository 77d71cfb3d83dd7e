use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sbilab(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbilab")).args(args).env("SBILAB_OUTPUT", root).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stdout: {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
}

const QUICK: &str = r#"
name = "quick"
model = "toy"
n = [100]
rules = ["n", "nlogn"]
replications = 3
draws = 300
metrics = ["coverage", "bias"]

[fit]
max_epochs = 10
"#;

#[test]
fn flags_override_the_config_file_and_outputs_land_under_the_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quick.toml");
    fs::write(&cfg, QUICK).unwrap();
    let out = sbilab(dir.path(), &["--config", cfg.to_str().unwrap(), "experiment", "--replications", "1", "--rules", "n"]);
    ok(&out);
    let run = dir.path().join("quick");
    for f in ["results.csv", "timings.csv", "config.toml", "manifest.json", "aggregates.csv"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let saved = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(saved.contains("replications = 1"));
    let results = fs::read_to_string(run.join("results.csv")).unwrap();
    assert!(results.lines().skip(1).all(|l| l.contains(",n,100,0,")), "{results}");

    let table = sbilab(dir.path(), &["coverage-table", run.join("results.csv").to_str().unwrap(), "--parameter", "theta"]);
    ok(&table);
    assert!(String::from_utf8_lossy(&table.stdout).starts_with("n,N=n\n100,"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quick.toml");
    fs::write(&cfg, QUICK).unwrap();
    let c = cfg.to_str().unwrap();
    ok(&sbilab(dir.path(), &["-c", c, "experiment", "--out", "a"]));
    ok(&sbilab(dir.path(), &["-c", c, "experiment", "--out", "b"]));
    assert_eq!(fs::read(dir.path().join("a/results.csv")).unwrap(), fs::read(dir.path().join("b/results.csv")).unwrap());
}

#[test]
fn error_rows_make_the_exit_code_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stereo.toml");
    // no reference posterior exists for the stereological model
    fs::write(&cfg, "model = \"stereo\"\nn = [100]\nrules = [\"n\"]\nreplications = 1\ndraws = 200\nmetrics = [\"kld\"]\n[fit]\nmax_epochs = 5\n").unwrap();
    let out = sbilab(dir.path(), &["-c", cfg.to_str().unwrap(), "experiment"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("experiment/results.csv").exists());
}

#[test]
fn zero_replications_succeed_with_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbilab(dir.path(), &["--preset", "toy-conjugate", "experiment", "--replications", "0"]);
    ok(&out);
    let results = fs::read_to_string(dir.path().join("toy-conjugate/results.csv")).unwrap();
    assert!(results.lines().count() <= 1);
}

#[test]
fn single_runs_write_draws_that_kld_can_compare() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sbilab(dir.path(), &["fit-npe", "--model", "toy", "--n", "50", "-N", "1000", "--draws", "2000", "--out", "npe"]));
    ok(&sbilab(dir.path(), &["oracle-sample", "--model", "toy", "--n", "50", "--out", "oracle"]));
    assert!(dir.path().join("npe/model.json").exists());
    let kld = sbilab(dir.path(), &["kld", dir.path().join("oracle/draws.csv").to_str().unwrap(), dir.path().join("npe/draws.csv").to_str().unwrap()]);
    ok(&kld);
    let v: serde_json::Value = serde_json::from_slice(&kld.stdout).unwrap();
    assert!(v["kld"].as_f64().unwrap() < 0.2, "{v}");
    assert_eq!(v["m_q"].as_u64(), Some(2000));
}

#[test]
fn simulate_abc_and_nle_run_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sbilab(dir.path(), &["simulate", "--model", "gk", "--n", "200", "--count", "4", "--from-prior"]));
    let sims = fs::read_to_string(dir.path().join("simulate/simulations.csv")).unwrap();
    assert_eq!(sims.lines().next().unwrap(), "A,B,g,k,s0,s1,s2,s3,s4,s5,s6");
    assert_eq!(sims.lines().count(), 5);
    ok(&sbilab(dir.path(), &["abc", "--model", "toy", "--n", "50", "--particles", "200", "--max-simulations", "2000"]));
    ok(&sbilab(dir.path(), &["fit-nle", "--model", "toy", "--n", "50", "-N", "1000", "--components", "2", "--chain-length", "20000"]));
    assert!(dir.path().join("nle/draws.csv").exists());
}

#[test]
fn incompatibility_study_accepts_no_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbilab(dir.path(), &["incompat", "--delta0", "none", "--replications", "1", "--rules", "n", "--draws", "500"]);
    ok(&out);
    assert!(dir.path().join("ma2-incompat-delta0-none/results.csv").exists());
    let bad = sbilab(dir.path(), &["incompat", "--delta0", "lots"]);
    assert!(!bad.status.success());
}

#[test]
fn invalid_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!sbilab(dir.path(), &["experiment", "--rules", "n3"]).status.success());
    assert!(!sbilab(dir.path(), &["--preset", "nope", "experiment"]).status.success());
    let out = sbilab(dir.path(), &["fit-npe", "--model", "ma2", "--obs", "1.0,0.5", "-N", "1000"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("summary"));
}
