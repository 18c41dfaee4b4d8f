use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use swolca::sim::tiny_fixture;
use swolca::SurveyDataset;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_swolca"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture_path() -> PathBuf {
    repo_root().join("data/tiny_survey.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fit_fixture(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "fit", "--input", path_str(&fixture_path()).to_owned().leak(), "--out", path_str(out),
        "--iters", "2000", "--burn", "1000", "--seed", "7",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn assert_schema(schema: &str, file: &Path) {
    let schema: Value =
        serde_json::from_str(&fs::read_to_string(repo_root().join("schemas").join(schema)).unwrap()).unwrap();
    let instance: Value = serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{} violates {schema}: {errors:?}", file.display());
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn bundled_fixture_matches_the_generator() {
    let on_disk = SurveyDataset::read_csv(fixture_path(), Some(&[4, 4, 4, 4])).unwrap();
    assert_eq!(on_disk, tiny_fixture().unwrap());
    assert_eq!((on_disk.n, on_disk.n_items), (60, 4));
}

#[test]
fn fit_writes_valid_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = fit_fixture(&a, &["--profile", "class=1,stratum2=1", "--plot"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("P(y=1 | class 1, class=1,stratum2=1) = "), "{stdout}");

    let summary = read_json(&a.join("summary.json"));
    assert_eq!(summary["k_hat"], 2);
    assert_eq!(summary["outcome_probabilities"].as_array().unwrap().len(), 1);
    for (schema, file) in [
        ("summary.schema.json", "summary.json"),
        ("run.schema.json", "run.json"),
        ("diagnostics.schema.json", "diagnostics.json"),
    ] {
        assert_schema(schema, &a.join(file));
    }
    let header = fs::read_to_string(a.join("chain.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.starts_with("pi_1,pi_2,theta_1_1_1,"), "{header}");
    assert!(header.ends_with("xi_2_1,xi_2_2"), "{header}");

    assert!(fit_fixture(&b, &["--profile", "class=1,stratum2=1", "--plot"]).status.success());
    for f in ["summary.json", "chain.csv", "patterns.svg", "probabilities.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs between runs");
    }

    // summarize reproduces the fit-time summary and figures exactly.
    let summary_bytes = fs::read(a.join("summary.json")).unwrap();
    let svg_bytes = fs::read(a.join("patterns.svg")).unwrap();
    fs::remove_file(a.join("patterns.svg")).unwrap();
    let out = run(&["summarize", "--out", path_str(&a), "--plot"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), summary_bytes);
    assert_eq!(fs::read(a.join("patterns.svg")).unwrap(), svg_bytes);
}

#[test]
fn every_model_fits_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    for model in ["solca", "wolca"] {
        let d = dir.path().join(model);
        let out = fit_fixture(&d, &["--model", model, "--profile", "stratum2=0"]);
        assert!(out.status.success(), "{model}: {}", String::from_utf8_lossy(&out.stderr));
        let s = read_json(&d.join("summary.json"));
        assert_eq!(s["k_hat"], 2, "{model}");
        assert_eq!(s["outcome_probabilities"].as_array().unwrap().len(), 2);
        assert_schema("summary.schema.json", &d.join("summary.json"));
        assert_schema("run.schema.json", &d.join("run.json"));
        assert_schema("diagnostics.schema.json", &d.join("diagnostics.json"));
    }
    let wolca = read_json(&dir.path().join("wolca/summary.json"));
    assert!(wolca["classes"][0]["xi"][0]["prob_positive"].is_null());
}

#[test]
fn equal_weights_make_the_weighted_and_unweighted_models_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = tiny_fixture().unwrap();
    ds.weight = vec![40.0; ds.n];
    let csv = dir.path().join("equal.csv");
    ds.write_csv(&csv).unwrap();
    let mut summaries = Vec::new();
    for model in ["swolca", "solca"] {
        let d = dir.path().join(model);
        let out = run(&[
            "fit", "--input", path_str(&csv), "--out", path_str(&d), "--model", model, "--iters", "1000",
            "--burn", "500", "--no-adjust",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut s = read_json(&d.join("summary.json"));
        s["model"] = Value::Null;
        summaries.push(s);
        assert_eq!(fs::read(dir.path().join("swolca/chain.csv")).unwrap(), fs::read(d.join("chain.csv")).unwrap());
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn invalid_csv_exits_2_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(
        &csv,
        "item_1,item_2,y,weight,stratum,cluster\n1,2,0,1.5,1,1\n0,2,1,-1,1,2\n2,1,2,1,2,1\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["fit", "--input", path_str(&csv), "--out", path_str(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let report_path = out_dir.join("validation.json");
    assert_schema("validation.schema.json", &report_path);
    let report = read_json(&report_path);
    let kinds: Vec<&str> =
        report["violations"].as_array().unwrap().iter().map(|v| v["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["item_out_of_range", "non_positive_weight", "outcome_not_binary", "cluster_spans_strata"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cluster 1 appears in strata"));

    // A missing design column is a shape violation.
    fs::write(&csv, "item_1,y,weight,stratum\n1,0,1,1\n").unwrap();
    let out = run(&["fit", "--input", path_str(&csv), "--out", path_str(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(read_json(&report_path)["violations"][0]["kind"], "shape");

    // Item codes above the declared level count.
    let out = run(&["fit", "--input", path_str(&fixture_path()), "--out", path_str(&out_dir), "--levels", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(read_json(&report_path)["violations"][0]["kind"], "item_out_of_range");
}

#[test]
fn separated_two_step_fit_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_fixture().unwrap();
    let all_ones = ds.with_outcome(vec![1; ds.n]);
    let csv = dir.path().join("ones.csv");
    all_ones.write_csv(&csv).unwrap();
    let out = run(&[
        "fit", "--input", path_str(&csv), "--out", path_str(&dir.path().join("o")), "--model", "wolca",
        "--iters", "600", "--burn", "300",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_arguments_and_profiles_exit_2() {
    assert_eq!(run(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["fit", "--input", "/nonexistent/x.csv", "--out", "/tmp/swolca-x"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = fit_fixture(&dir.path().join("p"), &["--profile", "class=1,unknown=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fit_fixture(&dir.path().join("q"), &["--burn", "5000"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn summarize_rejects_a_truncated_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("run");
    assert!(fit_fixture(&d, &[]).status.success());
    let chain = fs::read_to_string(d.join("chain.csv")).unwrap();
    fs::write(d.join("chain.csv"), &chain[..chain.len() * 2 / 3]).unwrap();
    let out = run(&["summarize", "--out", path_str(&d)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chain row"), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["summarize", "--out", path_str(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_that_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out_dir = dir.path().join("o");
    fs::write(
        &cfg,
        serde_json::json!({
            "input": fixture_path(),
            "out": out_dir,
            "model": "solca",
            "mcmc": { "n_iter": 1000, "n_burn": 500, "seed": 5 }
        })
        .to_string(),
    )
    .unwrap();
    let out = run(&["fit", "--config", path_str(&cfg), "--seed", "6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_json = read_json(&out_dir.join("run.json"));
    assert_eq!(run_json["model"], "solca");
    assert_eq!(run_json["config"]["n_iter"], 1000);
    assert_eq!(run_json["config"]["seed"], 6);
}

#[test]
fn simulate_smoke_run_emits_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate", "--scenario", "1", "--replicates", "5", "--iters", "2000", "--out", path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.json", "replicates.csv", "metrics.md"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_schema("metrics.schema.json", &dir.path().join("metrics.json"));
    let report = read_json(&dir.path().join("metrics.json"));
    let models: Vec<&str> = report["rows"].as_array().unwrap().iter().map(|r| r["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["solca", "wolca", "swolca", "swolca_unadjusted"]);
    let csv = fs::read_to_string(dir.path().join("replicates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 4);
    let md = fs::read_to_string(dir.path().join("metrics.md")).unwrap();
    assert!(md.contains("| Model |") && md.contains("xi cov"));
}

#[test]
fn custom_scenario_file_routes_to_its_settings() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"design":"stratified","association":"conditional","n":800,"pattern":"mode85","replicates":1,"seed":77}"#,
    )
    .unwrap();
    let out = run(&[
        "simulate", "--spec", path_str(&spec), "--models", "swolca", "--no-adjust", "--iters", "400", "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("metrics.json"));
    assert_eq!(report["scenario"]["n"], 800);
    assert_eq!(report["label"], "Strat, Cond, n=800, Mode 85%");
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
}
