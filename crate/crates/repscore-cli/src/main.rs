//! Command-line entry point: metrics, curves, train, compare, saliency.
//!
//! Every command resolves its configuration, writes a run manifest into
//! the output directory first, then writes its outputs. Exit codes are a
//! stable contract: 0 success, 2 input or parse failure, 3 invariant
//! violation, 4 evaluation impossible on the given data, 5 numerical
//! failure during training.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use repscore::dataset::{DatasetConfig, DatasetError, SyntheticDataset};
use repscore::encoder::{encode, EncoderError, EncoderParams, EncoderShape};
use repscore::eval::{
    class_profiles, metric_scores, pr_curve, roc_curve, write_class_profiles_csv,
    write_curve_csv, write_feature_profile_csv, EvalError,
};
use repscore::loss::{write_history_csv, LossConfig, LossError};
use repscore::metrics::{batch_quality_report, MetricKind, MetricsError, QualityReport, RowFlag};
use repscore::plot::curve_svg;
use repscore::repstore::{load_labels, load_matrix, LabelSet, MatrixFormat, RepstoreError};
use repscore::saliency::{
    dominant_feature_index, saliency_map, write_saliency_csv, write_saliency_pgm, SaliencyError,
};
use repscore::trainer::{
    ab_compare, train_encoder_with, ComparisonSummary, OptConfig, ProbeConfig, TrainerError,
};

const EXIT_INPUT: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_EVALUATION: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    fn invariant(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVARIANT, message: message.into() }
    }

    fn evaluation(message: impl Into<String>) -> Self {
        Self { code: EXIT_EVALUATION, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: message.into() }
    }
}

type CliResult<T> = Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::input(format!("json: {e}"))
    }
}

impl From<RepstoreError> for CliError {
    fn from(e: RepstoreError) -> Self {
        match e {
            RepstoreError::LabelMismatch { .. } | RepstoreError::CorrectnessMismatch { .. } => {
                CliError::invariant(e.to_string())
            }
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(_) | MetricsError::Parse { .. } => CliError::input(e.to_string()),
            _ => CliError::invariant(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::OneClassOnly | EvalError::NoPositives | EvalError::MissingCorrectness => {
                CliError::evaluation(e.to_string())
            }
            EvalError::Io(_) => CliError::input(e.to_string()),
            _ => CliError::invariant(e.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::NonFiniteGradient(_) | LossError::ZeroNormEmbedding(_) => {
                CliError::numerical(e.to_string())
            }
            LossError::Io(_) => CliError::input(e.to_string()),
            _ => CliError::invariant(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Io(_) | EncoderError::Parse(_) => CliError::input(e.to_string()),
            _ => CliError::invariant(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::invariant(e.to_string())
    }
}

impl From<TrainerError> for CliError {
    fn from(e: TrainerError) -> Self {
        match e {
            TrainerError::NonFiniteGradient { .. } => CliError::numerical(e.to_string()),
            TrainerError::OneClassOnly => CliError::evaluation(e.to_string()),
            TrainerError::Loss(inner) => inner.into(),
            TrainerError::Encoder(inner) => inner.into(),
            TrainerError::Dataset(inner) => inner.into(),
            TrainerError::Eval(inner) => inner.into(),
            TrainerError::Metrics(inner) => inner.into(),
            _ => CliError::invariant(e.to_string()),
        }
    }
}

impl From<SaliencyError> for CliError {
    fn from(e: SaliencyError) -> Self {
        match e {
            SaliencyError::EmptyProfile => CliError::evaluation(e.to_string()),
            SaliencyError::Io(_) => CliError::input(e.to_string()),
            SaliencyError::Encoder(inner) => inner.into(),
            _ => CliError::invariant(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "repscore",
    version,
    about = "Representation quality metrics, evaluation, and training",
    after_help = "Exit codes: 0 ok, 2 input/parse, 3 invariant violation, \
                  4 evaluation impossible, 5 numerical failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-sample quality metrics of a representation matrix.
    Metrics {
        /// Representation matrix (.csv or .repb).
        reps: PathBuf,
        /// Soft-sparsity threshold.
        #[arg(long, default_value_t = 0.01)]
        eta: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// ROC and PR curves of report metrics against probe correctness.
    Curves {
        /// Quality report CSV, as written by `metrics`.
        report: PathBuf,
        /// Labels CSV with predictions (`sample_id,class,predicted`).
        labels: PathBuf,
        /// One metric name, or `all`.
        #[arg(long, default_value = "all")]
        metric: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Contrastive training from a JSON run config.
    Train {
        /// Run config JSON; missing sections fall back to defaults.
        #[arg(long)]
        config: PathBuf,
        /// Keep the regularizers; without this flag both weights are zeroed.
        #[arg(long)]
        regularized: bool,
        /// Overrides the dataset and optimizer seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train baseline and regularized arms, compare downstream quality.
    Compare {
        /// Baseline run config JSON.
        #[arg(long = "config-base")]
        config_base: PathBuf,
        /// Regularized run config JSON; may differ only in the loss section.
        #[arg(long = "config-reg")]
        config_reg: PathBuf,
        /// Overrides the dataset and optimizer seeds of both arms.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Gradient saliency map of one representation feature at one sample.
    #[command(group(ArgGroup::new("target").required(true).args(["feature", "dominant"])))]
    Saliency {
        /// Encoder parameters (.renc).
        #[arg(long)]
        params: PathBuf,
        /// Dataset config JSON (or a run config; its dataset section is used).
        #[arg(long)]
        dataset: PathBuf,
        /// Sample index within the generated dataset.
        #[arg(long)]
        sample: usize,
        /// Representation feature to differentiate.
        #[arg(long)]
        feature: Option<usize>,
        /// Pick the dominant feature of the sample's class instead.
        #[arg(long)]
        dominant: bool,
        /// Overrides the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

/// One training run, fully described. Sections omitted from the JSON file
/// take their defaults; a top-level seed overrides the per-section seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    dataset: DatasetConfig,
    loss: LossConfig,
    opt: OptConfig,
    shape: Option<EncoderShape>,
    pretrain_steps: usize,
    probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            dataset: DatasetConfig::default(),
            loss: LossConfig::default(),
            opt: OptConfig::default(),
            shape: None,
            pretrain_steps: 0,
            probe: ProbeConfig::default(),
        }
    }
}

/// A run config with every choice pinned down.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct ResolvedRun {
    dataset: DatasetConfig,
    loss: LossConfig,
    opt: OptConfig,
    shape: EncoderShape,
    pretrain_steps: usize,
    probe: ProbeConfig,
}

fn load_run_config(path: &Path, seed_flag: Option<u64>) -> CliResult<ResolvedRun> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("cannot parse {}: {e}", path.display())))?;
    Ok(resolve_run(cfg, seed_flag))
}

fn resolve_run(mut cfg: RunConfig, seed_flag: Option<u64>) -> ResolvedRun {
    if let Some(seed) = seed_flag.or(cfg.seed) {
        cfg.dataset.seed = seed;
        cfg.opt.seed = seed;
    }
    let shape = cfg.shape.unwrap_or(EncoderShape {
        input: cfg.dataset.input_dim,
        ..EncoderShape::default()
    });
    ResolvedRun {
        dataset: cfg.dataset,
        loss: cfg.loss,
        opt: cfg.opt,
        shape,
        pretrain_steps: cfg.pretrain_steps,
        probe: cfg.probe,
    }
}

/// Reproducibility record, written into the output directory before any
/// other file.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    version: String,
    /// Requested worker cap; all computation is single-threaded.
    threads: usize,
    seeds: BTreeMap<String, u64>,
    config: serde_json::Value,
    /// SHA-256 of every input file.
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

fn resolve_threads() -> CliResult<usize> {
    match std::env::var("REPSCORE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| {
                CliError::input(format!("REPSCORE_THREADS must be a positive integer, got '{v}'"))
            }),
        Err(_) => Ok(1),
    }
}

fn sha256_hex(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn digest_inputs(paths: &[&Path]) -> CliResult<BTreeMap<String, String>> {
    let mut inputs = BTreeMap::new();
    for path in paths {
        inputs.insert(path.display().to_string(), sha256_hex(path)?);
    }
    Ok(inputs)
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> CliResult<()> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(out_dir.join("manifest.json"), text)?;
    Ok(())
}

fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> CliResult<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn cmd_metrics(reps: &Path, eta: f64, out: &Path, threads: usize) -> CliResult<String> {
    let format = MatrixFormat::from_path(reps);
    let matrix = load_matrix(reps, format)?;
    let report = batch_quality_report(&matrix, eta)?;
    let flagged = report
        .records
        .iter()
        .filter(|r| r.flag != RowFlag::Ok)
        .count();
    let manifest = RunManifest {
        command: "metrics".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        threads,
        seeds: BTreeMap::new(),
        config: json!({
            "reps": reps.display().to_string(),
            "format": format.to_string(),
            "eta": eta,
        }),
        inputs: digest_inputs(&[reps])?,
        outputs: vec!["report.csv".into()],
    };
    write_manifest(out, &manifest)?;
    report.save_csv(&out.join("report.csv"))?;
    Ok(json!({
        "command": "metrics",
        "n_samples": report.len(),
        "n_flagged": flagged,
        "out": out.display().to_string(),
    })
    .to_string())
}

fn cmd_curves(
    report_path: &Path,
    labels_path: &Path,
    metric: &str,
    out: &Path,
    threads: usize,
) -> CliResult<String> {
    let report = QualityReport::load_csv(report_path)?;
    let labels = load_labels(labels_path)?;
    let correctness = labels
        .correctness()
        .ok_or_else(|| {
            CliError::evaluation("labels file has no predictions, correctness unavailable")
        })?
        .to_vec();
    let metrics: Vec<MetricKind> = if metric == "all" {
        MetricKind::ALL.to_vec()
    } else {
        vec![metric
            .parse()
            .map_err(|e: String| CliError::input(format!("--metric: {e}")))?]
    };
    let mut outputs = Vec::new();
    for m in &metrics {
        outputs.push(format!("roc_{}.csv", m.name()));
        outputs.push(format!("roc_{}.svg", m.name()));
        outputs.push(format!("pr_{}.csv", m.name()));
        outputs.push(format!("pr_{}.svg", m.name()));
    }
    outputs.push("auc.json".into());

    // evaluate everything before touching the output directory
    let mut curves = Vec::new();
    for &m in &metrics {
        let (scores, kept) = metric_scores(&report, &correctness, m)?;
        let roc = roc_curve(&scores, &kept)?;
        let pr = pr_curve(&scores, &kept)?;
        curves.push((m, roc, pr));
    }
    let n_used = curves
        .first()
        .map(|(m, _, _)| metric_scores(&report, &correctness, *m).map(|(s, _)| s.len()))
        .transpose()?
        .unwrap_or(0);

    let manifest = RunManifest {
        command: "curves".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        threads,
        seeds: BTreeMap::new(),
        config: json!({
            "report": report_path.display().to_string(),
            "labels": labels_path.display().to_string(),
            "metric": metric,
        }),
        inputs: digest_inputs(&[report_path, labels_path])?,
        outputs,
    };
    write_manifest(out, &manifest)?;

    let mut auroc = serde_json::Map::new();
    let mut auprc = serde_json::Map::new();
    for (m, roc, pr) in &curves {
        write_with(&out.join(format!("roc_{}.csv", m.name())), |w| {
            write_curve_csv(roc, w).map_err(Into::into)
        })?;
        fs::write(out.join(format!("roc_{}.svg", m.name())), curve_svg(roc))?;
        write_with(&out.join(format!("pr_{}.csv", m.name())), |w| {
            write_curve_csv(pr, w).map_err(Into::into)
        })?;
        fs::write(out.join(format!("pr_{}.svg", m.name())), curve_svg(pr))?;
        auroc.insert(m.name().into(), json!(roc.area));
        auprc.insert(m.name().into(), json!(pr.area));
    }
    let auc = json!({
        "auroc": auroc,
        "auprc": auprc,
        "n_used": n_used,
        "n_excluded": report.len() - n_used,
        "n_positive": curves[0].1.n_positive,
        "n_negative": curves[0].1.n_negative,
    });
    let mut auc_text = serde_json::to_string_pretty(&auc)?;
    auc_text.push('\n');
    fs::write(out.join("auc.json"), auc_text)?;

    let mut summary = auc;
    summary["command"] = json!("curves");
    summary["out"] = json!(out.display().to_string());
    Ok(summary.to_string())
}

fn cmd_train(
    config_path: &Path,
    regularized: bool,
    seed: Option<u64>,
    out: &Path,
    threads: usize,
) -> CliResult<String> {
    let mut run = load_run_config(config_path, seed)?;
    if !regularized {
        run.loss = LossConfig { lambda1: 0.0, lambda2: 0.0, ..run.loss };
    }
    let dataset = SyntheticDataset::generate(&run.dataset)?;
    let (params, history) =
        train_encoder_with(&dataset, &run.loss, &run.opt, run.shape, run.pretrain_steps)?;
    let manifest = RunManifest {
        command: "train".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        threads,
        seeds: BTreeMap::from([
            ("dataset".into(), run.dataset.seed),
            ("opt".into(), run.opt.seed),
        ]),
        config: json!({
            "run": serde_json::to_value(&run)?,
            "regularized": regularized,
        }),
        inputs: digest_inputs(&[config_path])?,
        outputs: vec!["params.renc".into(), "history.csv".into()],
    };
    write_manifest(out, &manifest)?;
    params.save(&out.join("params.renc"))?;
    write_with(&out.join("history.csv"), |w| {
        write_history_csv(&history, w).map_err(Into::into)
    })?;
    Ok(json!({
        "command": "train",
        "regularized": regularized,
        "steps": history.len(),
        "initial_contrastive": history.first().map(|b| b.contrastive),
        "final_contrastive": history.last().map(|b| b.contrastive),
        "final_total": history.last().map(|b| b.total),
        "out": out.display().to_string(),
    })
    .to_string())
}

fn cmd_compare(
    base_path: &Path,
    reg_path: &Path,
    seed: Option<u64>,
    out: &Path,
    threads: usize,
) -> CliResult<String> {
    let base = load_run_config(base_path, seed)?;
    let reg = load_run_config(reg_path, seed)?;
    for (section, same) in [
        ("dataset", base.dataset == reg.dataset),
        ("opt", base.opt == reg.opt),
        ("shape", base.shape == reg.shape),
        ("pretrain_steps", base.pretrain_steps == reg.pretrain_steps),
        ("probe", base.probe == reg.probe),
    ] {
        if !same {
            return Err(CliError::invariant(format!(
                "comparison configs must agree outside the loss section, '{section}' differs"
            )));
        }
    }
    let dataset = SyntheticDataset::generate(&base.dataset)?;
    let report = ab_compare(
        &dataset,
        &base.loss,
        &reg.loss,
        &base.opt,
        base.shape,
        base.pretrain_steps,
        &base.probe,
    )?;
    let summary = ComparisonSummary::from_report(&report);

    let mut outputs = vec!["comparison.json".to_string()];
    for arm in ["base", "reg"] {
        outputs.push(format!("params_{arm}.renc"));
        outputs.push(format!("history_{arm}.csv"));
        outputs.push(format!("quality_{arm}.csv"));
        outputs.push(format!("class_profiles_{arm}.csv"));
        outputs.push(format!("feature_profile_{arm}.csv"));
    }
    let manifest = RunManifest {
        command: "compare".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        threads,
        seeds: BTreeMap::from([
            ("dataset".into(), base.dataset.seed),
            ("opt".into(), base.opt.seed),
        ]),
        config: json!({
            "base": serde_json::to_value(&base)?,
            "reg": serde_json::to_value(&reg)?,
        }),
        inputs: digest_inputs(&[base_path, reg_path])?,
        outputs,
    };
    write_manifest(out, &manifest)?;

    let mut comparison_text = serde_json::to_string_pretty(&summary)?;
    comparison_text.push('\n');
    fs::write(out.join("comparison.json"), comparison_text)?;
    for (arm, name) in [(&report.base, "base"), (&report.regularized, "reg")] {
        arm.params.save(&out.join(format!("params_{name}.renc")))?;
        write_with(&out.join(format!("history_{name}.csv")), |w| {
            write_history_csv(&arm.history, w).map_err(Into::into)
        })?;
        arm.quality.save_csv(&out.join(format!("quality_{name}.csv")))?;
        let labels =
            LabelSet::with_correctness(arm.test_labels.clone(), arm.correctness.clone())?;
        let profiles = class_profiles(&arm.h_test, &labels)?;
        write_with(&out.join(format!("class_profiles_{name}.csv")), |w| {
            write_class_profiles_csv(&profiles, w).map_err(Into::into)
        })?;
        write_with(&out.join(format!("feature_profile_{name}.csv")), |w| {
            write_feature_profile_csv(&profiles, w).map_err(Into::into)
        })?;
    }
    let mut line = serde_json::to_value(&summary)?;
    line["command"] = json!("compare");
    line["out"] = json!(out.display().to_string());
    Ok(line.to_string())
}

fn cmd_saliency(
    params_path: &Path,
    dataset_path: &Path,
    sample: usize,
    feature: Option<usize>,
    dominant: bool,
    seed: Option<u64>,
    out: &Path,
    threads: usize,
) -> CliResult<String> {
    let params = EncoderParams::load(params_path)?;
    let text = fs::read_to_string(dataset_path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", dataset_path.display())))?;
    let mut dataset_cfg = match serde_json::from_str::<DatasetConfig>(&text) {
        Ok(cfg) => cfg,
        Err(_) => serde_json::from_str::<RunConfig>(&text)
            .map_err(|e| {
                CliError::input(format!(
                    "{} is neither a dataset config nor a run config: {e}",
                    dataset_path.display()
                ))
            })?
            .dataset,
    };
    if let Some(seed) = seed {
        dataset_cfg.seed = seed;
    }
    let dataset = SyntheticDataset::generate(&dataset_cfg)?;
    if sample >= dataset.len() {
        return Err(CliError::invariant(format!(
            "sample {sample} out of range for {} samples",
            dataset.len()
        )));
    }
    let k = match feature {
        Some(k) => k,
        None => {
            debug_assert!(dominant);
            // without a probe, every member of the class counts as correct:
            // the dominant feature is the argmax of the class mean
            let (h, _) = encode(&params, dataset.samples())?;
            let all_true = vec![true; dataset.len()];
            let labels = LabelSet::with_correctness(dataset.class_labels().to_vec(), all_true)?;
            let profiles = class_profiles(&h, &labels)?;
            let class = dataset.class_labels()[sample];
            let profile = profiles
                .iter()
                .find(|p| p.class_id == class)
                .ok_or_else(|| CliError::evaluation(format!("class {class} has no profile")))?;
            dominant_feature_index(profile)?
        }
    };
    if k >= params.repr_dim() {
        return Err(CliError::invariant(
            SaliencyError::IndexOutOfRange { index: k, dim: params.repr_dim() }.to_string(),
        ));
    }
    let map = saliency_map(&params, dataset.samples().row(sample), k, sample.to_string())?;
    let csv_name = format!("saliency_s{sample}_f{k}.csv");
    let pgm_name = format!("saliency_s{sample}_f{k}.pgm");
    let r = dataset_cfg.input_dim;
    let side = (r as f64).sqrt().round() as usize;
    let square = side * side == r;
    let mut outputs = vec![csv_name.clone()];
    if square {
        outputs.push(pgm_name.clone());
    }
    let manifest = RunManifest {
        command: "saliency".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        threads,
        seeds: BTreeMap::from([("dataset".into(), dataset_cfg.seed)]),
        config: json!({
            "params": params_path.display().to_string(),
            "dataset": serde_json::to_value(dataset_cfg)?,
            "sample": sample,
            "feature": k,
            "dominant": dominant,
        }),
        inputs: digest_inputs(&[params_path, dataset_path])?,
        outputs,
    };
    write_manifest(out, &manifest)?;
    write_with(&out.join(&csv_name), |w| {
        write_saliency_csv(&map, w).map_err(Into::into)
    })?;
    if square {
        write_with(&out.join(&pgm_name), |w| {
            write_saliency_pgm(&map, w).map_err(Into::into)
        })?;
    } else {
        eprintln!("repscore: input dimension {r} is not square, skipping PGM");
    }
    Ok(json!({
        "command": "saliency",
        "sample": sample,
        "feature": k,
        "csv": csv_name,
        "pgm": if square { json!(pgm_name) } else { serde_json::Value::Null },
        "out": out.display().to_string(),
    })
    .to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match resolve_threads() {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let result = match &cli.command {
        Command::Metrics { reps, eta, out } => cmd_metrics(reps, *eta, out, threads),
        Command::Curves { report, labels, metric, out } => {
            cmd_curves(report, labels, metric, out, threads)
        }
        Command::Train { config, regularized, seed, out } => {
            cmd_train(config, *regularized, *seed, out, threads)
        }
        Command::Compare { config_base, config_reg, seed, out } => {
            cmd_compare(config_base, config_reg, *seed, out, threads)
        }
        Command::Saliency { params, dataset, sample, feature, dominant, seed, out } => {
            cmd_saliency(params, dataset, *sample, *feature, *dominant, *seed, out, threads)
        }
    };
    match result {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("repscore: {}", e.message);
    ExitCode::from(e.code)
}
