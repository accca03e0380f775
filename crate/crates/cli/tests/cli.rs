use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_statgames"));
    cmd.env_remove("STATGAMES_REPORT_DIR");
    cmd
}

fn model(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name);
    root.to_str().unwrap().to_string()
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (status.code().unwrap(), String::from_utf8(stdout).unwrap(), String::from_utf8(stderr).unwrap())
}

#[test]
fn verify_passes_and_exits_zero() {
    let (code, out, _) = run(bin().args(["verify", "--suite", "buco", "--suite", "fe-sum", "--trials", "10", "--sections"]));
    assert_eq!(code, 0);
    assert!(out.contains("PASS buco/discrete"));
    assert!(out.contains("PASS fe-sum/gaussian"));
    assert!(out.contains("SECTION KL/discrete: STRICT"));
}

#[test]
fn verify_failures_and_usage_errors() {
    let (code, out, _) = run(bin().args(["verify", "--suite", "buco", "--instance", "gaussian", "--trials", "5", "--tol", "1e-300"]));
    assert_eq!(code, 1);
    assert!(out.contains("FAIL buco/gaussian"));

    let (code, _, err) = run(bin().args(["verify", "--suite", "nonsense"]));
    assert_eq!(code, 2);
    assert!(err.contains("known suites"));

    let (code, _, _) = run(bin().args(["verify", "--suite", "laplace", "--instance", "discrete"]));
    assert_eq!(code, 2);
}

#[test]
fn verify_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let (code, _, _) = run(bin().args(["verify", "--suite", "chain-rule", "--trials", "4", "--report", path.to_str().unwrap()]));
    assert_eq!(code, 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(json["suites"][0]["suite"], "chain-rule");
    assert_eq!(json["suites"][0]["records"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(path.with_extension("csv")).unwrap();
    assert!(csv.starts_with("suite,instance,"));
    assert_eq!(csv.lines().count(), 2);

    // relative report paths land in the report directory
    let (code, _, _) = run(bin()
        .env("STATGAMES_REPORT_DIR", dir.path())
        .args(["verify", "--suite", "bilinear", "--trials", "2", "--report", "rel.json"]));
    assert_eq!(code, 0);
    assert!(dir.path().join("rel.json").exists());
    assert!(dir.path().join("rel.csv").exists());
}

#[test]
fn eval_loss_values() {
    let (code, out, _) = run(bin().args(["eval-loss", "--model", &model("bernoulli.json"), "--loss", "mle", "--obs", "1"]));
    assert_eq!(code, 0);
    let v: f64 = out.trim().strip_prefix("MLE = ").unwrap().parse().unwrap();
    assert!((v - 4f64.ln()).abs() < 1e-12);

    let (code, out, _) = run(bin().args([
        "eval-loss",
        "--model",
        &model("weather_lens.json"),
        "--loss",
        "kl",
        "--prior",
        &model("weather_prior.json"),
        "--obs",
        "0",
    ]));
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "KL = 0");
}

#[test]
fn eval_loss_decomposition_is_consistent() {
    let (code, out, _) = run(bin().args([
        "eval-loss",
        "--model",
        &model("gaussian_lens.json"),
        "--loss",
        "lfe",
        "--obs",
        "1.0",
        "--decompose",
        "--json",
    ]));
    assert_eq!(code, 0);
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    let (value, energy, entropy) =
        (json["value"].as_f64().unwrap(), json["energy"].as_f64().unwrap(), json["entropy"].as_f64().unwrap());
    assert!((value - (energy - entropy)).abs() < 1e-12);
}

#[test]
fn eval_loss_errors() {
    // the table lens has no backward channel for the reference prior
    let (code, _, err) = run(bin().args(["eval-loss", "--model", &model("weather_guess.json"), "--loss", "fe", "--obs", "0"]));
    assert_eq!(code, 1);
    assert!(err.contains("tabulated"));

    let (code, _, _) = run(bin().args(["eval-loss", "--model", &model("bernoulli.json"), "--loss", "mle", "--obs", "heads"]));
    assert_eq!(code, 2);

    let (code, _, _) = run(bin().args(["eval-loss", "--model", &model("weather_lens.json"), "--loss", "lfe", "--obs", "0"]));
    assert_eq!(code, 2);
}

#[test]
fn demo_is_deterministic() {
    let (code, out, _) = run(bin().args(["demo", "--steps", "0"]));
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 2);
    assert!(out.starts_with("step,fe,kl,mle,gain,offset,log_var"));

    let a = run(bin().args(["demo", "--steps", "25", "--seed", "4"]));
    let b = run(bin().args(["demo", "--steps", "25", "--seed", "4"]));
    assert_eq!(a, b);

    let (code, _, _) = run(bin().args(["demo", "--lr=-1"]));
    assert_eq!(code, 2);
}

#[test]
fn inspect_reports_the_offending_row() {
    let (code, _, err) = run(bin().args(["inspect", "--model", &model("broken_kernel.json")]));
    assert_eq!(code, 2);
    assert!(err.contains("row 2"));

    let (code, out, _) = run(bin().args(["inspect", "--model", &model("weather_guess.json")]));
    assert_eq!(code, 0);
    assert!(out.contains("climate"));
}
