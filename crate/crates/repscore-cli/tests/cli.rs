//! End-to-end tests of the `repscore` binary: exit codes, stdout JSON,
//! manifests, and the files each subcommand leaves behind.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use repscore::encoder::{EncoderParams, EncoderShape, Layer};
use serde_json::Value;
use tempfile::TempDir;

fn repscore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repscore"))
        .args(args)
        .env_remove("REPSCORE_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stdout.clone()).expect("utf8 stdout");
    serde_json::from_str(text.trim()).unwrap_or_else(|e| {
        panic!("stdout is not one JSON line: {e}\nstdout: {text}");
    })
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "expected exit {code}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).expect("fixture write");
}

fn manifest(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("manifest.json")).expect("manifest exists");
    serde_json::from_str(&text).expect("manifest parses")
}

#[test]
fn metrics_reports_rows_and_flags() {
    let tmp = TempDir::new().unwrap();
    let reps = tmp.path().join("reps.csv");
    write(&reps, "1.0,2.0,3.0\n0.0,0.0,0.0\n4.0,5.0,6.0\n");
    let out_dir = tmp.path().join("out");
    let out = repscore(&["metrics", reps.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_exit(&out, 0);

    let line = stdout_json(&out);
    assert_eq!(line["command"], "metrics");
    assert_eq!(line["n_samples"], 3);
    assert_eq!(line["n_flagged"], 1);

    let report = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert!(report.lines().next().unwrap().starts_with("# sample_id,"));
    assert!(report.contains("zero_norm"));

    let m = manifest(&out_dir);
    assert_eq!(m["command"], "metrics");
    assert_eq!(m["threads"], 1);
    assert_eq!(m["outputs"], serde_json::json!(["report.csv"]));
    let digest = m["inputs"][reps.to_str().unwrap()].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn metrics_rejects_empty_matrix() {
    let tmp = TempDir::new().unwrap();
    let reps = tmp.path().join("reps.csv");
    write(&reps, "");
    let out_dir = tmp.path().join("out");
    let out = repscore(&["metrics", reps.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_exit(&out, 2);
    assert!(stderr_text(&out).starts_with("repscore: "));
    assert!(!out_dir.exists(), "failed run must not create outputs");
}

#[test]
fn metrics_output_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let reps = tmp.path().join("reps.csv");
    write(&reps, "0.25,-1.5,3.125\n7.0,0.0,-2.5\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = repscore(&["metrics", reps.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
        assert_exit(&out, 0);
    }
    let ra = fs::read(a.join("report.csv")).unwrap();
    let rb = fs::read(b.join("report.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn metrics_threads_env_is_recorded_and_validated() {
    let tmp = TempDir::new().unwrap();
    let reps = tmp.path().join("reps.csv");
    write(&reps, "1.0,2.0\n3.0,4.0\n");
    let out_dir = tmp.path().join("out");

    let out = Command::new(env!("CARGO_BIN_EXE_repscore"))
        .args(["metrics", reps.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .env("REPSCORE_THREADS", "7")
        .output()
        .unwrap();
    assert_exit(&out, 0);
    assert_eq!(manifest(&out_dir)["threads"], 7);

    let out = Command::new(env!("CARGO_BIN_EXE_repscore"))
        .args(["metrics", reps.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .env("REPSCORE_THREADS", "0")
        .output()
        .unwrap();
    assert_exit(&out, 2);
    assert!(stderr_text(&out).contains("REPSCORE_THREADS"));
}

/// Six-sample report whose q_score separates correct from incorrect rows
/// perfectly, plus matching three-column labels.
fn curves_fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let report = dir.join("report.csv");
    write(
        &report,
        "# sample_id,mean,std,soft_sparsity,l1_norm,zscore_max,q_score,flag (eta=0.01)\n\
         s0,0.5,0.2,0.1,3.0,1.5,0.9,ok\n\
         s1,0.4,0.3,0.2,2.5,1.4,0.8,ok\n\
         s2,0.3,0.2,0.3,2.0,1.3,0.7,ok\n\
         s3,0.2,0.1,0.4,1.5,1.2,0.3,ok\n\
         s4,0.1,0.2,0.5,1.0,1.1,0.2,ok\n\
         s5,0.0,0.3,0.6,0.5,1.0,0.1,ok\n",
    );
    let labels = dir.join("labels.csv");
    write(
        &labels,
        "# sample_id,class,predicted\n\
         s0,0,0\ns1,1,1\ns2,0,0\ns3,1,0\ns4,0,1\ns5,1,0\n",
    );
    (report, labels)
}

#[test]
fn curves_perfect_separation_gives_unit_auroc() {
    let tmp = TempDir::new().unwrap();
    let (report, labels) = curves_fixture(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = repscore(&[
        "curves",
        report.to_str().unwrap(),
        labels.to_str().unwrap(),
        "--metric",
        "q_score",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let line = stdout_json(&out);
    assert_eq!(line["command"], "curves");
    assert_eq!(line["auroc"]["q_score"], 1.0);
    assert_eq!(line["auprc"]["q_score"], 1.0);
    assert_eq!(line["n_used"], 6);
    assert_eq!(line["n_positive"], 3);
    assert_eq!(line["n_negative"], 3);

    let auc: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("auc.json")).unwrap()).unwrap();
    assert_eq!(auc["auroc"]["q_score"], 1.0);
    for name in ["roc_q_score.csv", "roc_q_score.svg", "pr_q_score.csv", "pr_q_score.svg"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let roc = fs::read_to_string(out_dir.join("roc_q_score.csv")).unwrap();
    assert!(roc.starts_with("# kind=roc area=1"));
    let svg = fs::read_to_string(out_dir.join("roc_q_score.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn curves_all_metrics_cover_the_full_set() {
    let tmp = TempDir::new().unwrap();
    let (report, labels) = curves_fixture(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = repscore(&[
        "curves",
        report.to_str().unwrap(),
        labels.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let line = stdout_json(&out);
    for name in ["mean", "std", "soft_sparsity", "l1_norm", "zscore_max", "q_score"] {
        assert!(line["auroc"][name].is_number(), "auroc missing {name}");
        assert!(out_dir.join(format!("roc_{name}.svg")).exists());
        assert!(out_dir.join(format!("pr_{name}.csv")).exists());
    }
}

#[test]
fn curves_single_class_correctness_is_evaluation_failure() {
    let tmp = TempDir::new().unwrap();
    let (report, _) = curves_fixture(tmp.path());
    let labels = tmp.path().join("labels.csv");
    write(&labels, "s0,0,0\ns1,1,1\ns2,0,0\ns3,1,1\ns4,0,0\ns5,1,1\n");
    let out_dir = tmp.path().join("out");
    let out = repscore(&[
        "curves",
        report.to_str().unwrap(),
        labels.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 4);
    assert!(!out_dir.join("auc.json").exists());
}

#[test]
fn curves_labels_without_predictions_is_evaluation_failure() {
    let tmp = TempDir::new().unwrap();
    let (report, _) = curves_fixture(tmp.path());
    let labels = tmp.path().join("labels.csv");
    write(&labels, "s0,0\ns1,1\ns2,0\ns3,1\ns4,0\ns5,1\n");
    let out_dir = tmp.path().join("out");
    let out = repscore(&[
        "curves",
        report.to_str().unwrap(),
        labels.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 4);
    assert!(stderr_text(&out).contains("correctness"));
}

#[test]
fn curves_missing_labels_file_is_input_failure() {
    let tmp = TempDir::new().unwrap();
    let (report, _) = curves_fixture(tmp.path());
    let out = repscore(&[
        "curves",
        report.to_str().unwrap(),
        tmp.path().join("nope.csv").to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn curves_unknown_metric_is_input_failure() {
    let tmp = TempDir::new().unwrap();
    let (report, labels) = curves_fixture(tmp.path());
    let out = repscore(&[
        "curves",
        report.to_str().unwrap(),
        labels.to_str().unwrap(),
        "--metric",
        "sharpness",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stderr_text(&out).contains("--metric"));
}

#[test]
fn train_zero_steps_writes_the_initialization() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("run.json");
    write(
        &config,
        r#"{
            "seed": 11,
            "dataset": {"k_classes": 2, "n_per_class": 6, "input_dim": 12,
                        "noise_lo": 0.05, "noise_hi": 0.2},
            "opt": {"steps": 0, "batch_size": 4}
        }"#,
    );
    let out_dir = tmp.path().join("out");
    let out = repscore(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let line = stdout_json(&out);
    assert_eq!(line["steps"], 0);
    assert_eq!(line["regularized"], false);
    assert!(line["final_total"].is_null());

    let saved = EncoderParams::load(&out_dir.join("params.renc")).unwrap();
    let shape = EncoderShape { input: 12, ..EncoderShape::default() };
    assert!(saved.bitwise_eq(&EncoderParams::init(shape, 11)));

    let history = fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1, "header only for zero steps");

    let m = manifest(&out_dir);
    assert_eq!(m["seeds"]["dataset"], 11);
    assert_eq!(m["seeds"]["opt"], 11);
    assert_eq!(m["config"]["regularized"], false);
}

fn small_train_config() -> &'static str {
    r#"{
        "dataset": {"k_classes": 2, "n_per_class": 8, "input_dim": 12,
                    "noise_lo": 0.05, "noise_hi": 0.2, "seed": 4},
        "loss": {"lambda1": 0.05, "lambda2": 0.05},
        "opt": {"steps": 6, "batch_size": 4, "seed": 4},
        "shape": {"input": 12, "hidden": 16, "repr": 8, "proj": 4}
    }"#
}

#[test]
fn train_same_config_is_bitwise_reproducible() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("run.json");
    write(&config, small_train_config());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = repscore(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--regularized",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_exit(&out, 0);
        assert_eq!(stdout_json(&out)["steps"], 6);
    }
    assert_eq!(
        fs::read(a.join("params.renc")).unwrap(),
        fs::read(b.join("params.renc")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("history.csv")).unwrap(),
        fs::read(b.join("history.csv")).unwrap()
    );
}

#[test]
fn train_seed_flag_changes_the_run() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("run.json");
    write(&config, small_train_config());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, seed) in [(&a, "4"), (&b, "99")] {
        let out = repscore(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_exit(&out, 0);
    }
    assert_ne!(
        fs::read(a.join("params.renc")).unwrap(),
        fs::read(b.join("params.renc")).unwrap()
    );
    assert_eq!(manifest(&b)["seeds"]["opt"], 99);
}

#[test]
fn train_divergent_lr_is_numerical_failure() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("run.json");
    // one update at this rate puts the weights near 1e199, so the next
    // forward pass overflows f64 and training must stop with exit 5
    write(
        &config,
        r#"{
            "dataset": {"k_classes": 2, "n_per_class": 8, "input_dim": 12,
                        "noise_lo": 0.05, "noise_hi": 0.2},
            "opt": {"steps": 5, "batch_size": 4, "lr": 1e200}
        }"#,
    );
    let out = repscore(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 5);
}

#[test]
fn train_unknown_config_key_is_input_failure() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("run.json");
    write(&config, r#"{"opt": {"stepz": 10}}"#);
    let out = repscore(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stderr_text(&out).contains("stepz"));
}

/// Shared compare fixture: heavy noise so the probe leaves both correct and
/// incorrect predictions, small steps so the test stays fast.
fn compare_config() -> &'static str {
    r#"{
        "dataset": {"k_classes": 4, "n_per_class": 24, "input_dim": 16,
                    "noise_lo": 0.3, "noise_hi": 0.7, "seed": 8},
        "loss": {"lambda1": 0.0, "lambda2": 0.0},
        "opt": {"steps": 30, "batch_size": 8},
        "shape": {"input": 16, "hidden": 24, "repr": 16, "proj": 8},
        "probe": {"max_epochs": 200}
    }"#
}

#[test]
fn compare_identical_loss_sections_give_identical_arms() {
    let tmp = TempDir::new().unwrap();
    let base = tmp.path().join("base.json");
    let reg = tmp.path().join("reg.json");
    write(&base, compare_config());
    write(&reg, compare_config());
    let out_dir = tmp.path().join("out");
    let out = repscore(&[
        "compare",
        "--config-base",
        base.to_str().unwrap(),
        "--config-reg",
        reg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("comparison.json")).unwrap())
            .unwrap();
    assert_eq!(summary["base_accuracy"], summary["regularized_accuracy"]);
    assert_eq!(summary["base_mean_q_score"], summary["regularized_mean_q_score"]);
    assert_eq!(summary["base_bottom_quartile_q"], summary["regularized_bottom_quartile_q"]);
    let prevalence = summary["prevalence"].as_f64().unwrap();
    assert!(prevalence > 0.0 && prevalence < 1.0, "probe must be fallible, got {prevalence}");

    assert_eq!(
        fs::read(out_dir.join("params_base.renc")).unwrap(),
        fs::read(out_dir.join("params_reg.renc")).unwrap()
    );
    for name in [
        "history_base.csv",
        "quality_base.csv",
        "class_profiles_base.csv",
        "feature_profile_base.csv",
        "history_reg.csv",
        "quality_reg.csv",
        "class_profiles_reg.csv",
        "feature_profile_reg.csv",
    ] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let line = stdout_json(&out);
    assert_eq!(line["command"], "compare");
    assert_eq!(line["prevalence"], summary["prevalence"]);
}

#[test]
fn compare_rejects_mismatch_outside_the_loss_section() {
    let tmp = TempDir::new().unwrap();
    let base = tmp.path().join("base.json");
    let reg = tmp.path().join("reg.json");
    write(&base, compare_config());
    write(&reg, &compare_config().replace("\"seed\": 8", "\"seed\": 9"));
    let out = repscore(&[
        "compare",
        "--config-base",
        base.to_str().unwrap(),
        "--config-reg",
        reg.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 3);
    assert!(stderr_text(&out).contains("'dataset' differs"));
}

/// Linear two-layer encoder: f is a single linear layer whose weight rows
/// are the exact saliency targets, g is the identity.
fn linear_params(rows: [[f64; 4]; 2], biases: [f64; 2]) -> EncoderParams {
    let f = Layer::new(
        rows.concat(),
        biases.to_vec(),
        4,
        2,
        false,
    )
    .unwrap();
    let g = Layer::new(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2, false).unwrap();
    EncoderParams::from_layers(vec![f, g], 0).unwrap()
}

fn saliency_dataset(dir: &Path) -> std::path::PathBuf {
    let config = dir.join("dataset.json");
    write(
        &config,
        r#"{"k_classes": 2, "n_per_class": 2, "input_dim": 4,
            "noise_lo": 0.05, "noise_hi": 0.1, "seed": 3}"#,
    );
    config
}

#[test]
fn saliency_linear_encoder_matches_normalized_weight_row() {
    let tmp = TempDir::new().unwrap();
    let params_path = tmp.path().join("params.renc");
    linear_params([[1.0, 2.0, 3.0, 4.0], [0.5, 0.0, 0.0, 0.0]], [0.0, 0.0])
        .save(&params_path)
        .unwrap();
    let dataset = saliency_dataset(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = repscore(&[
        "saliency",
        "--params",
        params_path.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--sample",
        "0",
        "--feature",
        "0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let line = stdout_json(&out);
    assert_eq!(line["feature"], 0);
    assert_eq!(line["csv"], "saliency_s0_f0.csv");
    assert_eq!(line["pgm"], "saliency_s0_f0.pgm");

    let csv = fs::read_to_string(out_dir.join("saliency_s0_f0.csv")).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values, vec![0.25, 0.5, 0.75, 1.0]);

    let pgm = fs::read_to_string(out_dir.join("saliency_s0_f0.pgm")).unwrap();
    assert_eq!(pgm, "P2\n# sample_id=0 feature=0\n2 2\n255\n64 128\n191 255\n");
}

#[test]
fn saliency_dominant_picks_the_class_mean_argmax() {
    let tmp = TempDir::new().unwrap();
    let params_path = tmp.path().join("params.renc");
    // feature 0 is identically zero, feature 1 sits far from zero via its
    // bias, so the dominant feature of every class is 1
    linear_params([[0.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0, 4.0]], [0.0, 100.0])
        .save(&params_path)
        .unwrap();
    let dataset = saliency_dataset(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = repscore(&[
        "saliency",
        "--params",
        params_path.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--sample",
        "1",
        "--dominant",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let line = stdout_json(&out);
    assert_eq!(line["feature"], 1);
    assert!(out_dir.join("saliency_s1_f1.csv").exists());
    assert_eq!(manifest(&out_dir)["config"]["dominant"], true);
}

#[test]
fn saliency_feature_out_of_range_is_invariant_failure() {
    let tmp = TempDir::new().unwrap();
    let params_path = tmp.path().join("params.renc");
    linear_params([[1.0, 2.0, 3.0, 4.0], [0.5, 0.0, 0.0, 0.0]], [0.0, 0.0])
        .save(&params_path)
        .unwrap();
    let dataset = saliency_dataset(tmp.path());
    let out = repscore(&[
        "saliency",
        "--params",
        params_path.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--sample",
        "0",
        "--feature",
        "7",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 3);
}

#[test]
fn saliency_needs_exactly_one_target_flag() {
    let tmp = TempDir::new().unwrap();
    let params_path = tmp.path().join("params.renc");
    linear_params([[1.0, 2.0, 3.0, 4.0], [0.5, 0.0, 0.0, 0.0]], [0.0, 0.0])
        .save(&params_path)
        .unwrap();
    let dataset = saliency_dataset(tmp.path());
    let out_dir = tmp.path().join("out");
    let common = [
        "saliency",
        "--params",
        params_path.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--sample",
        "0",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    let neither = repscore(&common);
    assert_exit(&neither, 2);
    let mut both = common.to_vec();
    both.extend(["--feature", "0", "--dominant"]);
    let both = repscore(&both);
    assert_exit(&both, 2);
}

#[test]
fn saliency_non_square_input_skips_the_pgm() {
    let tmp = TempDir::new().unwrap();
    let params_path = tmp.path().join("params.renc");
    let f = Layer::new(vec![1.0, 2.0, 3.0], vec![0.0], 3, 1, false).unwrap();
    let g = Layer::new(vec![1.0], vec![0.0], 1, 1, false).unwrap();
    EncoderParams::from_layers(vec![f, g], 0)
        .unwrap()
        .save(&params_path)
        .unwrap();
    let config = tmp.path().join("dataset.json");
    write(
        &config,
        r#"{"k_classes": 2, "n_per_class": 2, "input_dim": 3,
            "noise_lo": 0.05, "noise_hi": 0.1, "seed": 3}"#,
    );
    let out_dir = tmp.path().join("out");
    let out = repscore(&[
        "saliency",
        "--params",
        params_path.to_str().unwrap(),
        "--dataset",
        config.to_str().unwrap(),
        "--sample",
        "0",
        "--feature",
        "0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let line = stdout_json(&out);
    assert!(line["pgm"].is_null());
    assert!(out_dir.join("saliency_s0_f0.csv").exists());
    assert!(!out_dir.join("saliency_s0_f0.pgm").exists());
    assert!(stderr_text(&out).contains("not square"));
}
