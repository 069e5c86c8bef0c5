//! End-to-end desk-scale training: contrastive optimization of the encoder
//! on augmented view pairs, a linear probe over frozen representations,
//! and an A/B harness comparing a baseline against a regularized run.
//!
//! The whole pipeline is single-threaded and seeded; identical inputs
//! produce bitwise identical parameters and history. Regularization can be
//! deferred with `pretrain_steps`: both regularizer weights are held at
//! zero for that many steps, which mimics starting from a pretrained
//! checkpoint.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{DatasetError, SyntheticDataset};
use crate::encoder::{
    backward, forward, EncoderError, EncoderParams, EncoderShape, MomentumState, ParamGrads,
};
use crate::eval::{metric_benchmark, exact_sparsity, EvalError};
use crate::loss::{total_loss_grads, LossBreakdown, LossConfig, LossError};
use crate::metrics::{batch_quality_report, MetricKind, MetricsError, QualityReport};
use crate::repstore::{ProjectionMatrix, RepresentationMatrix};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },
    #[error("probe training needs at least 2 classes")]
    OneClassOnly,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Optimizer settings for the contrastive phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub lr: f64,
    pub momentum: f64,
    pub steps: usize,
    /// Samples drawn per step; each contributes two views.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self { lr: 0.05, momentum: 0.9, steps: 2000, batch_size: 32, seed: 0 }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |msg: String| Err(TrainerError::InvalidConfig(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive and finite, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0,1), got {}", self.momentum));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2 (pairs), got {}", self.batch_size));
        }
        Ok(())
    }
}

/// One training batch: two augmented views of the same samples, row-aligned.
#[derive(Debug, Clone)]
pub struct Batch {
    pub view1: RepresentationMatrix,
    pub view2: RepresentationMatrix,
}

fn interleave_rows(
    a: &RepresentationMatrix,
    b: &RepresentationMatrix,
) -> Result<RepresentationMatrix, TrainerError> {
    let (n, d) = (a.n_samples(), a.n_features());
    let mut data = Vec::with_capacity(2 * n * d);
    for i in 0..n {
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(b.row(i));
    }
    RepresentationMatrix::from_flat(data, 2 * n, d)
        .map_err(|e| TrainerError::ShapeMismatch(e.to_string()))
}

fn deinterleave(flat: &[f64], n_pairs: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::with_capacity(n_pairs * d);
    let mut b = Vec::with_capacity(n_pairs * d);
    for k in 0..n_pairs {
        a.extend_from_slice(&flat[2 * k * d..(2 * k + 1) * d]);
        b.extend_from_slice(&flat[(2 * k + 1) * d..(2 * k + 2) * d]);
    }
    (a, b)
}

/// Loss value and parameter gradients for one batch of view pairs.
///
/// `column_scale` extrapolates batch column norms for the column penalty;
/// pass `dataset_size / batch_size` during training.
pub fn loss_gradients(
    params: &EncoderParams,
    batch: &Batch,
    cfg: &LossConfig,
    column_scale: f64,
) -> Result<(LossBreakdown, ParamGrads), TrainerError> {
    if batch.view1.n_samples() != batch.view2.n_samples()
        || batch.view1.n_features() != batch.view2.n_features()
    {
        return Err(TrainerError::ShapeMismatch(format!(
            "views {}x{} and {}x{}",
            batch.view1.n_samples(),
            batch.view1.n_features(),
            batch.view2.n_samples(),
            batch.view2.n_features()
        )));
    }
    let n = batch.view1.n_samples();
    let (l, m) = (params.repr_dim(), params.proj_dim());
    let cache1 = forward(params, &batch.view1)?;
    let cache2 = forward(params, &batch.view2)?;
    // a non-finite forward output is a numerical failure, not a shape bug
    let diverged = |e: crate::repstore::RepstoreError| match e {
        crate::repstore::RepstoreError::NonFinite { .. } => {
            TrainerError::Loss(LossError::NonFiniteGradient(format!("forward output: {e}")))
        }
        other => TrainerError::ShapeMismatch(other.to_string()),
    };
    let h1 = RepresentationMatrix::from_flat(cache1.h_flat().to_vec(), n, l).map_err(diverged)?;
    let h2 = RepresentationMatrix::from_flat(cache2.h_flat().to_vec(), n, l).map_err(diverged)?;
    let h = interleave_rows(&h1, &h2)?;
    let z1 = ProjectionMatrix::from_flat(cache1.z_flat().to_vec(), n, m).map_err(diverged)?;
    let z2 = ProjectionMatrix::from_flat(cache2.z_flat().to_vec(), n, m).map_err(diverged)?;
    let (breakdown, d_z, d_h) = total_loss_grads(&z1, &z2, &h, cfg, column_scale)?;
    let (dz1, dz2) = deinterleave(&d_z, n, m);
    let (dh1, dh2) = deinterleave(&d_h, n, l);
    let (mut grads, _) = backward(params, &cache1, &dz1, &dh1)?;
    let (grads2, _) = backward(params, &cache2, &dz2, &dh2)?;
    grads.accumulate(&grads2);
    Ok((breakdown, grads))
}

/// Contrastive training with the default encoder shape sized to the dataset.
pub fn train_encoder(
    dataset: &SyntheticDataset,
    cfg: &LossConfig,
    opt: &OptConfig,
) -> Result<(EncoderParams, Vec<LossBreakdown>), TrainerError> {
    let shape = EncoderShape {
        input: dataset.samples().n_features(),
        ..EncoderShape::default()
    };
    train_encoder_with(dataset, cfg, opt, shape, 0)
}

/// Contrastive training with an explicit shape and an optional
/// regularization-free warmup of `pretrain_steps` steps.
pub fn train_encoder_with(
    dataset: &SyntheticDataset,
    cfg: &LossConfig,
    opt: &OptConfig,
    shape: EncoderShape,
    pretrain_steps: usize,
) -> Result<(EncoderParams, Vec<LossBreakdown>), TrainerError> {
    cfg.validate()?;
    opt.validate()?;
    if shape.input != dataset.samples().n_features() {
        return Err(TrainerError::ShapeMismatch(format!(
            "encoder input {} vs dataset dimension {}",
            shape.input,
            dataset.samples().n_features()
        )));
    }
    if opt.batch_size > dataset.len() {
        return Err(TrainerError::InvalidConfig(format!(
            "batch_size {} exceeds dataset size {}",
            opt.batch_size,
            dataset.len()
        )));
    }
    let mut params = EncoderParams::init(shape, opt.seed);
    let mut momentum = MomentumState::new(&params);
    // separate stream for batch sampling, decoupled from initialization
    let mut rng = ChaCha12Rng::seed_from_u64(opt.seed.wrapping_add(0x9E3779B97F4A7C15));
    let pretrain_cfg = LossConfig { lambda1: 0.0, lambda2: 0.0, ..*cfg };
    let column_scale = dataset.len() as f64 / opt.batch_size as f64;
    let mut history = Vec::with_capacity(opt.steps);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let r = dataset.samples().n_features();
    for step in 0..opt.steps {
        for i in 0..opt.batch_size {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        let mut v1 = Vec::with_capacity(opt.batch_size * r);
        let mut v2 = Vec::with_capacity(opt.batch_size * r);
        for &idx in indices.iter().take(opt.batch_size) {
            let aug_seed: u64 = rng.random();
            let (a, b) = dataset.augment_sample(idx, aug_seed);
            v1.extend(a);
            v2.extend(b);
        }
        let nonfinite = |_| TrainerError::NonFiniteGradient { step };
        let batch = Batch {
            view1: RepresentationMatrix::from_flat(v1, opt.batch_size, r).map_err(nonfinite)?,
            view2: RepresentationMatrix::from_flat(v2, opt.batch_size, r).map_err(nonfinite)?,
        };
        let effective = if step < pretrain_steps { &pretrain_cfg } else { cfg };
        let (breakdown, grads) =
            loss_gradients(&params, &batch, effective, column_scale).map_err(|e| match e {
                TrainerError::Loss(LossError::NonFiniteGradient(_)) => {
                    TrainerError::NonFiniteGradient { step }
                }
                other => other,
            })?;
        if !grads.is_finite() {
            return Err(TrainerError::NonFiniteGradient { step });
        }
        momentum.apply(&mut params, &grads, opt.lr, opt.momentum);
        history.push(breakdown);
    }
    Ok((params, history))
}

/// Multinomial logistic regression over frozen representations.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// Row-major K x l weights, in raw representation space.
    w: Vec<f64>,
    b: Vec<f64>,
    n_classes: usize,
    n_features: usize,
}

/// Hyperparameters of the probe fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Stop when the full-batch gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { lr: 0.5, max_epochs: 2000, grad_tol: 1e-5 }
    }
}

impl LinearProbe {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Class scores for one representation.
    pub fn scores(&self, rep: &[f64]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|k| {
                let wr = &self.w[k * self.n_features..(k + 1) * self.n_features];
                self.b[k] + wr.iter().zip(rep).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Predicted class: argmax score, lowest index on ties.
    pub fn predict(&self, rep: &[f64]) -> u32 {
        let scores = self.scores(rep);
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        best as u32
    }
}

/// Fit a probe by full-batch gradient descent on the softmax cross-entropy.
///
/// Features are standardized internally (per-column mean and standard
/// deviation of the training set); the learned weights are folded back to
/// raw representation space, so prediction needs no preprocessing.
pub fn train_linear_probe(
    h_train: &RepresentationMatrix,
    labels: &[u32],
    hyper: &ProbeConfig,
) -> Result<LinearProbe, TrainerError> {
    if h_train.n_samples() != labels.len() {
        return Err(TrainerError::ShapeMismatch(format!(
            "{} representations vs {} labels",
            h_train.n_samples(),
            labels.len()
        )));
    }
    if !(hyper.lr > 0.0 && hyper.lr.is_finite()) || hyper.grad_tol < 0.0 {
        return Err(TrainerError::InvalidConfig(format!(
            "probe lr {} / grad_tol {}",
            hyper.lr, hyper.grad_tol
        )));
    }
    let k = match labels.iter().max() {
        Some(&max) => max as usize + 1,
        None => return Err(TrainerError::OneClassOnly),
    };
    {
        let mut seen = vec![false; k];
        for &c in labels {
            seen[c as usize] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(TrainerError::OneClassOnly);
        }
    }
    let (n, l) = (h_train.n_samples(), h_train.n_features());
    let nf = n as f64;

    // column standardization; constant columns pass through untouched
    let mut mean = vec![0.0; l];
    for row in h_train.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= nf;
    }
    let mut std = vec![0.0; l];
    for row in h_train.rows() {
        for (s, (v, m)) in std.iter_mut().zip(row.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut std {
        *s = (*s / nf).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let mut x = vec![0.0; n * l];
    for (i, row) in h_train.rows().enumerate() {
        for j in 0..l {
            x[i * l + j] = (row[j] - mean[j]) / std[j];
        }
    }

    let mut w = vec![0.0; k * l];
    let mut b = vec![0.0; k];
    let mut probs = vec![0.0; n * k];
    for _epoch in 0..hyper.max_epochs {
        // forward: softmax scores per sample
        for i in 0..n {
            let xi = &x[i * l..(i + 1) * l];
            let pi = &mut probs[i * k..(i + 1) * k];
            for (c, p) in pi.iter_mut().enumerate() {
                let wr = &w[c * l..(c + 1) * l];
                *p = b[c] + wr.iter().zip(xi).map(|(wv, xv)| wv * xv).sum::<f64>();
            }
            let max = pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for p in pi.iter_mut() {
                *p = (*p - max).exp();
                denom += *p;
            }
            for p in pi.iter_mut() {
                *p /= denom;
            }
        }
        // gradient: (1/n) (P - Y)^T X
        let mut dw = vec![0.0; k * l];
        let mut db = vec![0.0; k];
        for i in 0..n {
            let xi = &x[i * l..(i + 1) * l];
            let pi = &probs[i * k..(i + 1) * k];
            let y = labels[i] as usize;
            for c in 0..k {
                let err = (pi[c] - if c == y { 1.0 } else { 0.0 }) / nf;
                db[c] += err;
                if err == 0.0 {
                    continue;
                }
                let dwr = &mut dw[c * l..(c + 1) * l];
                for (dv, xv) in dwr.iter_mut().zip(xi) {
                    *dv += err * xv;
                }
            }
        }
        let grad_norm = dw
            .iter()
            .chain(db.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        for (wv, dv) in w.iter_mut().zip(&dw) {
            *wv -= hyper.lr * dv;
        }
        for (bv, dv) in b.iter_mut().zip(&db) {
            *bv -= hyper.lr * dv;
        }
        if grad_norm < hyper.grad_tol {
            break;
        }
    }

    // fold standardization into raw-space weights:
    // w_raw = w / std, b_raw = b - sum_j w_j mean_j / std_j
    let mut w_raw = vec![0.0; k * l];
    let mut b_raw = vec![0.0; k];
    for c in 0..k {
        let mut shift = 0.0;
        for j in 0..l {
            w_raw[c * l + j] = w[c * l + j] / std[j];
            shift += w[c * l + j] * mean[j] / std[j];
        }
        b_raw[c] = b[c] - shift;
    }
    Ok(LinearProbe { w: w_raw, b: b_raw, n_classes: k, n_features: l })
}

/// Accuracy and per-sample correctness of a probe on held-out data.
pub fn evaluate_probe(
    probe: &LinearProbe,
    h_test: &RepresentationMatrix,
    labels: &[u32],
) -> Result<(f64, Vec<bool>), TrainerError> {
    if h_test.n_features() != probe.n_features {
        return Err(TrainerError::ShapeMismatch(format!(
            "representations have {} features, probe expects {}",
            h_test.n_features(),
            probe.n_features
        )));
    }
    if h_test.n_samples() != labels.len() {
        return Err(TrainerError::ShapeMismatch(format!(
            "{} representations vs {} labels",
            h_test.n_samples(),
            labels.len()
        )));
    }
    let correctness: Vec<bool> = h_test
        .rows()
        .zip(labels)
        .map(|(row, &y)| probe.predict(row) == y)
        .collect();
    let accuracy = correctness.iter().filter(|&&c| c).count() as f64 / labels.len() as f64;
    Ok((accuracy, correctness))
}

/// Everything measured on one trained arm of a comparison.
#[derive(Debug, Clone)]
pub struct ArmReport {
    pub params: EncoderParams,
    pub history: Vec<LossBreakdown>,
    /// Representations of the held-out split, for figure exports.
    pub h_test: RepresentationMatrix,
    /// Class labels of the held-out split.
    pub test_labels: Vec<u32>,
    /// Probe accuracy on the held-out split.
    pub accuracy: f64,
    /// Per-test-sample probe correctness.
    pub correctness: Vec<bool>,
    /// Quality metrics of the held-out representations.
    pub quality: QualityReport,
    pub mean_q_score: f64,
    /// Mean quality score of the lowest-scoring quartile of defined rows.
    pub bottom_quartile_q: f64,
    pub q_auroc: f64,
    pub q_auprc: f64,
    /// Mean fraction of exact zeros in the held-out representations.
    pub mean_sparsity: f64,
}

/// Side-by-side result of a baseline and a regularized training run.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub base: ArmReport,
    pub regularized: ArmReport,
    /// Fraction of correct test samples in the base arm (AUPRC baseline).
    pub prevalence: f64,
}

/// Flat numeric summary of a comparison, for JSON export.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub base_accuracy: f64,
    pub regularized_accuracy: f64,
    pub base_mean_q_score: f64,
    pub regularized_mean_q_score: f64,
    pub base_bottom_quartile_q: f64,
    pub regularized_bottom_quartile_q: f64,
    pub base_q_auroc: f64,
    pub regularized_q_auroc: f64,
    pub base_q_auprc: f64,
    pub regularized_q_auprc: f64,
    pub base_mean_sparsity: f64,
    pub regularized_mean_sparsity: f64,
    pub prevalence: f64,
}

impl ComparisonSummary {
    pub fn from_report(report: &ComparisonReport) -> Self {
        Self {
            base_accuracy: report.base.accuracy,
            regularized_accuracy: report.regularized.accuracy,
            base_mean_q_score: report.base.mean_q_score,
            regularized_mean_q_score: report.regularized.mean_q_score,
            base_bottom_quartile_q: report.base.bottom_quartile_q,
            regularized_bottom_quartile_q: report.regularized.bottom_quartile_q,
            base_q_auroc: report.base.q_auroc,
            regularized_q_auroc: report.regularized.q_auroc,
            base_q_auprc: report.base.q_auprc,
            regularized_q_auprc: report.regularized.q_auprc,
            base_mean_sparsity: report.base.mean_sparsity,
            regularized_mean_sparsity: report.regularized.mean_sparsity,
            prevalence: report.prevalence,
        }
    }
}

/// Train one arm and measure it on the held-out split.
pub fn evaluate_arm(
    dataset: &SyntheticDataset,
    cfg: &LossConfig,
    opt: &OptConfig,
    shape: EncoderShape,
    pretrain_steps: usize,
    probe_cfg: &ProbeConfig,
) -> Result<ArmReport, TrainerError> {
    let (params, history) = train_encoder_with(dataset, cfg, opt, shape, pretrain_steps)?;
    let (train, test) = dataset.stratified_split(0.8)?;
    let (h_train, _) = crate::encoder::encode(&params, &train.inputs)?;
    let probe = train_linear_probe(&h_train, &train.class_labels, probe_cfg)?;
    let (h_test, _) = crate::encoder::encode(&params, &test.inputs)?;
    let (accuracy, correctness) = evaluate_probe(&probe, &h_test, &test.class_labels)?;
    let quality = batch_quality_report(&h_test, cfg.eta)?;
    let mut defined: Vec<f64> = quality.records.iter().filter_map(|r| r.q_score).collect();
    let mean_q_score = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let bottom_quartile_q = if defined.is_empty() {
        0.0
    } else {
        defined.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = (defined.len().div_ceil(4)).max(1);
        defined[..k].iter().sum::<f64>() / k as f64
    };
    let benchmark = metric_benchmark(&quality, &correctness)?;
    let q_row = benchmark
        .rows
        .iter()
        .find(|r| r.metric == MetricKind::QScore)
        .expect("benchmark always contains the quality score row");
    let sparsity = exact_sparsity(&h_test, 0.0)?;
    let mean_sparsity = sparsity.iter().sum::<f64>() / sparsity.len() as f64;
    Ok(ArmReport {
        params,
        history,
        h_test,
        test_labels: test.class_labels,
        accuracy,
        correctness,
        quality,
        mean_q_score,
        bottom_quartile_q,
        q_auroc: q_row.auroc,
        q_auprc: q_row.auprc,
        mean_sparsity,
    })
}

/// Train and evaluate both arms from the same seed and initialization.
pub fn ab_compare(
    dataset: &SyntheticDataset,
    cfg_base: &LossConfig,
    cfg_reg: &LossConfig,
    opt: &OptConfig,
    shape: EncoderShape,
    pretrain_steps: usize,
    probe_cfg: &ProbeConfig,
) -> Result<ComparisonReport, TrainerError> {
    let base = evaluate_arm(dataset, cfg_base, opt, shape, pretrain_steps, probe_cfg)?;
    let regularized = evaluate_arm(dataset, cfg_reg, opt, shape, pretrain_steps, probe_cfg)?;
    let prevalence =
        base.correctness.iter().filter(|&&c| c).count() as f64 / base.correctness.len() as f64;
    Ok(ComparisonReport { base, regularized, prevalence })
}
