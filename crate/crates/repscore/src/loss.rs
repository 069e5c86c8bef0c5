//! Contrastive loss stack: temperature-scaled NT-Xent, a quality-score
//! regularizer over low-scoring samples, and an L1 penalty over dominant
//! feature columns, all with analytic gradients.
//!
//! Conventions. Projections arrive as 2N interleaved rows: rows 2k and
//! 2k+1 are the two augmented views of sample k, so the positive partner
//! of row i is row i^1. The contrastive term is the minimization form
//!
//! ```text
//! L = -(1/2N) sum_i log[ exp(sim(z_i, z_p(i))) / sum_{j != i} exp(sim(z_i, z_j)) ]
//! ```
//!
//! with `sim(a, b) = cos(a, b) / tau`, stabilized by per-row max
//! subtraction inside the log-sum-exp.
//!
//! The regularizers use indicator masks: samples with quality score below
//! a threshold alpha and columns with L1 norm above a threshold beta.
//! Masks are resolved against the current batch and frozen for
//! differentiation; the thresholds themselves receive no gradient. Both
//! thresholds can be absolute values or batch percentiles.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;
use crate::repstore::{ProjectionMatrix, RepresentationMatrix};

/// Embedding norms below this are treated as zero.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("embedding row {0} has (near-)zero norm")]
    ZeroNormEmbedding(usize),
    #[error("contrastive loss needs an even row count >= 4, got {0}")]
    TooFewSamples(usize),
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),
    #[error("config I/O failed: {0}")]
    Io(String),
}

/// Threshold selection for the regularizer masks: a fixed value, or a
/// percentile resolved against the current batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Absolute(f64),
    Percentile(f64),
}

/// Weights and thresholds of the full training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Softmax temperature.
    pub tau: f64,
    /// Weight of the quality-score regularizer.
    pub lambda1: f64,
    /// Weight of the column L1 penalty.
    pub lambda2: f64,
    /// Selects low-quality samples: mask rows with Q below the threshold.
    pub alpha_policy: ThresholdPolicy,
    /// Selects dominant columns: mask columns with L1 norm above the threshold.
    pub beta_policy: ThresholdPolicy,
    /// Soft-sparsity threshold, carried for reporting alongside the loss.
    pub eta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.2,
            lambda1: 0.1,
            lambda2: 0.1,
            alpha_policy: ThresholdPolicy::Percentile(25.0),
            beta_policy: ThresholdPolicy::Percentile(90.0),
            eta: metrics::DEFAULT_ETA,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |msg: String| Err(LossError::InvalidConfig(msg));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive and finite, got {}", self.tau));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, policy) in [("alpha", self.alpha_policy), ("beta", self.beta_policy)] {
            match policy {
                ThresholdPolicy::Absolute(v) if !v.is_finite() => {
                    return bad(format!("{name} absolute threshold must be finite, got {v}"));
                }
                ThresholdPolicy::Percentile(p) if !(p > 0.0 && p < 100.0) => {
                    return bad(format!("{name} percentile must lie in (0, 100), got {p}"));
                }
                _ => {}
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, LossError> {
        let f = File::open(path).map_err(|e| LossError::Io(e.to_string()))?;
        let cfg: LossConfig =
            serde_json::from_reader(BufReader::new(f)).map_err(|e| LossError::Io(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), LossError> {
        let f = File::create(path).map_err(|e| LossError::Io(e.to_string()))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| LossError::Io(e.to_string()))?;
        w.flush().map_err(|e| LossError::Io(e.to_string()))
    }
}

/// One evaluation of the training objective, with the frozen masks.
///
/// `total` always equals `contrastive - lambda1 * q_reg + lambda2 *
/// column_penalty` for the config it was computed with; `q_reg` and
/// `column_penalty` are the raw masked sums, before weighting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub q_reg: f64,
    pub column_penalty: f64,
    pub total: f64,
    /// Rows whose quality score falls below alpha.
    pub sample_mask: Vec<bool>,
    /// Columns whose (scaled) L1 norm exceeds beta.
    pub column_mask: Vec<bool>,
}

/// Cosine similarity divided by the temperature.
pub fn scaled_cosine_similarity(a: &[f64], b: &[f64], tau: f64) -> Result<f64, LossError> {
    if !(tau > 0.0) {
        return Err(LossError::InvalidConfig(format!(
            "tau must be positive, got {tau}"
        )));
    }
    if a.len() != b.len() {
        return Err(LossError::ShapeMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na <= NORM_FLOOR {
        return Err(LossError::ZeroNormEmbedding(0));
    }
    if nb <= NORM_FLOOR {
        return Err(LossError::ZeroNormEmbedding(1));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb * tau))
}

/// Rows of `z` normalized to unit length, with their original norms.
fn normalize_rows(z: &ProjectionMatrix) -> Result<(Vec<f64>, Vec<f64>), LossError> {
    let (n, m) = (z.n_samples(), z.n_features());
    let mut unit = vec![0.0; n * m];
    let mut norms = vec![0.0; n];
    for i in 0..n {
        let row = z.row(i);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= NORM_FLOOR {
            return Err(LossError::ZeroNormEmbedding(i));
        }
        norms[i] = norm;
        for j in 0..m {
            unit[i * m + j] = row[j] / norm;
        }
    }
    Ok((unit, norms))
}

/// Pairwise similarity matrix `s[i][j] = cos(z_i, z_j) / tau`; the diagonal
/// is left at zero and never read.
fn similarity_matrix(unit: &[f64], n: usize, m: usize, tau: f64) -> Vec<f64> {
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut dot = 0.0;
            for k in 0..m {
                dot += unit[i * m + k] * unit[j * m + k];
            }
            let v = dot / tau;
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    s
}

fn check_paired(n: usize) -> Result<(), LossError> {
    if n < 4 || n % 2 != 0 {
        return Err(LossError::TooFewSamples(n));
    }
    Ok(())
}

/// NT-Xent loss over interleaved view pairs (partner of row i is row i^1).
pub fn nt_xent_loss(z: &ProjectionMatrix, tau: f64) -> Result<f64, LossError> {
    nt_xent_with_grad(z, tau).map(|(loss, _)| loss)
}

/// NT-Xent loss and its gradient with respect to every projection entry,
/// returned as a row-major 2N x m buffer.
pub fn nt_xent_with_grad(z: &ProjectionMatrix, tau: f64) -> Result<(f64, Vec<f64>), LossError> {
    if !(tau > 0.0) {
        return Err(LossError::InvalidConfig(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let (n, m) = (z.n_samples(), z.n_features());
    check_paired(n)?;
    let (unit, norms) = normalize_rows(z)?;
    let s = similarity_matrix(&unit, n, m, tau);

    // loss: per row, log-sum-exp over j != i minus the positive similarity
    let inv_2n = 1.0 / n as f64;
    let mut loss = 0.0;
    // dL/ds[i][j], filled row by row
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        let partner = i ^ 1;
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            if j != i {
                max = max.max(s[i * n + j]);
            }
        }
        let mut denom = 0.0;
        for j in 0..n {
            if j != i {
                denom += (s[i * n + j] - max).exp();
            }
        }
        let lse = max + denom.ln();
        loss += lse - s[i * n + partner];
        for j in 0..n {
            if j == i {
                continue;
            }
            let softmax = (s[i * n + j] - max).exp() / denom;
            let delta = if j == partner { 1.0 } else { 0.0 };
            g[i * n + j] = inv_2n * (softmax - delta);
        }
    }
    loss *= inv_2n;

    // back through s[i][j] = (unit_i . unit_j) / tau: entry (i, j) sends
    // gradient to both rows
    let mut d_unit = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let coeff = g[i * n + j] / tau;
            if coeff == 0.0 {
                continue;
            }
            for k in 0..m {
                d_unit[i * m + k] += coeff * unit[j * m + k];
                d_unit[j * m + k] += coeff * unit[i * m + k];
            }
        }
    }

    // back through row normalization: d z = (d u - (u . d u) u) / ||z||
    let mut grad = vec![0.0; n * m];
    for i in 0..n {
        let mut dot = 0.0;
        for k in 0..m {
            dot += unit[i * m + k] * d_unit[i * m + k];
        }
        for k in 0..m {
            grad[i * m + k] = (d_unit[i * m + k] - dot * unit[i * m + k]) / norms[i];
        }
    }

    if !loss.is_finite() {
        return Err(LossError::NonFiniteGradient("contrastive loss".into()));
    }
    Ok((loss, grad))
}

/// Quality score per row; `None` for degenerate or zero-norm rows.
fn row_q_scores(h: &RepresentationMatrix) -> Vec<Option<f64>> {
    h.rows().map(|row| metrics::q_score(row).ok()).collect()
}

/// Resolve the alpha threshold. Percentile(p) ranks the defined scores
/// ascending and takes the value at index floor(n * p / 100), so strictly
/// smaller scores are masked.
fn resolve_alpha(q: &[Option<f64>], policy: ThresholdPolicy) -> Option<f64> {
    match policy {
        ThresholdPolicy::Absolute(a) => Some(a),
        ThresholdPolicy::Percentile(p) => {
            let mut defined: Vec<f64> = q.iter().flatten().copied().collect();
            if defined.is_empty() {
                return None;
            }
            defined.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = ((defined.len() as f64 * p) / 100.0).floor() as usize;
            Some(defined[k.min(defined.len() - 1)])
        }
    }
}

/// Masked sum of low quality scores: `sum_i 1[Q_i < alpha] Q_i` and the mask.
///
/// Degenerate rows are excluded from percentile ranking and never masked.
pub fn q_regularizer(
    h: &RepresentationMatrix,
    cfg: &LossConfig,
) -> (f64, Vec<bool>) {
    let q = row_q_scores(h);
    let alpha = resolve_alpha(&q, cfg.alpha_policy);
    let mut mask = vec![false; q.len()];
    let mut term = 0.0;
    if let Some(alpha) = alpha {
        for (i, qi) in q.iter().enumerate() {
            if let Some(qi) = qi {
                if *qi < alpha {
                    mask[i] = true;
                    term += qi;
                }
            }
        }
    }
    (term, mask)
}

/// Gradient of the masked quality sum with respect to every entry of `h`,
/// with the mask and each row's argmax frozen. Row-major, same shape as `h`.
pub fn q_regularizer_grad(h: &RepresentationMatrix, mask: &[bool]) -> Vec<f64> {
    let l = h.n_features();
    let mut grad = vec![0.0; h.n_samples() * l];
    let lf = l as f64;
    for (i, row) in h.rows().enumerate() {
        if !mask[i] {
            continue;
        }
        let mu = row.iter().sum::<f64>() / lf;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / lf;
        let sigma = var.sqrt();
        let l1: f64 = row.iter().map(|v| v.abs()).sum();
        // masked rows always have sigma > 0 and l1 > 0
        let arg_max = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, _)| j)
            .unwrap();
        let z = (row[arg_max] - mu) / sigma;
        for j in 0..l {
            let delta = if j == arg_max { 1.0 } else { 0.0 };
            let dz = (delta - 1.0 / lf) / sigma - z * (row[j] - mu) / (lf * sigma * sigma);
            let dl1 = if row[j] > 0.0 {
                1.0
            } else if row[j] < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad[i * l + j] = dz / l1 - z * dl1 / (l1 * l1);
        }
    }
    grad
}

/// Resolve the beta threshold over (scaled) column norms. Percentile(q)
/// masks the top ceil(l * (100 - q) / 100) columns: beta is the largest
/// norm below that tail, so strictly larger norms are masked.
fn resolve_beta(norms: &[f64], policy: ThresholdPolicy) -> f64 {
    match policy {
        ThresholdPolicy::Absolute(b) => b,
        ThresholdPolicy::Percentile(q) => {
            let l = norms.len();
            let tail = ((l as f64 * (100.0 - q)) / 100.0).ceil() as usize;
            if tail >= l {
                return f64::NEG_INFINITY;
            }
            let mut sorted = norms.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted[l - tail - 1]
        }
    }
}

/// Column penalty with explicitly scaled norms: `sum_k 1[s*n_k > beta] * s*n_k`
/// where `n_k` is column k's L1 norm over the rows of `h` and `s` is the
/// scale factor. During training `s = dataset_size / batch_size`, which
/// extrapolates batch column norms to dataset scale so an absolute beta
/// does not depend on the batch size.
pub fn column_penalty_scaled(
    h: &RepresentationMatrix,
    cfg: &LossConfig,
    scale: f64,
) -> (f64, Vec<bool>) {
    let l = h.n_features();
    let mut norms = vec![0.0; l];
    for row in h.rows() {
        for (k, v) in row.iter().enumerate() {
            norms[k] += v.abs();
        }
    }
    // the scale factor extrapolates batch norms to dataset scale so that
    // absolute beta thresholds are batch-size independent; the penalty
    // itself stays a sum over the batch at hand
    let scaled: Vec<f64> = norms.iter().map(|n| n * scale).collect();
    let beta = resolve_beta(&scaled, cfg.beta_policy);
    let mut mask = vec![false; l];
    let mut term = 0.0;
    for (k, &s) in scaled.iter().enumerate() {
        if s > beta {
            mask[k] = true;
            term += norms[k];
        }
    }
    (term, mask)
}

/// Masked sum of large column L1 norms over `h` itself (scale 1).
pub fn column_penalty(h: &RepresentationMatrix, cfg: &LossConfig) -> (f64, Vec<bool>) {
    column_penalty_scaled(h, cfg, 1.0)
}

/// Gradient of the column penalty: `sign(h_ik)` on masked columns, zero
/// elsewhere. Row-major, same shape as `h`.
pub fn column_penalty_grad(h: &RepresentationMatrix, mask: &[bool]) -> Vec<f64> {
    let l = h.n_features();
    let mut grad = vec![0.0; h.n_samples() * l];
    for (i, row) in h.rows().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            if mask[k] {
                grad[i * l + k] = if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
    }
    grad
}

/// Interleave two aligned view matrices into the paired-row layout.
pub fn interleave_views(
    z1: &ProjectionMatrix,
    z2: &ProjectionMatrix,
) -> Result<ProjectionMatrix, LossError> {
    if z1.n_samples() != z2.n_samples() || z1.n_features() != z2.n_features() {
        return Err(LossError::ShapeMismatch(format!(
            "views {}x{} and {}x{}",
            z1.n_samples(),
            z1.n_features(),
            z2.n_samples(),
            z2.n_features()
        )));
    }
    let m = z1.n_features();
    let mut data = Vec::with_capacity(2 * z1.n_samples() * m);
    for i in 0..z1.n_samples() {
        data.extend_from_slice(z1.row(i));
        data.extend_from_slice(z2.row(i));
    }
    ProjectionMatrix::from_flat(data, 2 * z1.n_samples(), m)
        .map_err(|e| LossError::ShapeMismatch(e.to_string()))
}

/// Full objective over one batch: contrastive term over the interleaved
/// views plus the two regularizers over `h` (2N interleaved representation
/// rows). `column_scale` scales batch column norms; pass 1.0 when `h` is
/// the full set of interest.
pub fn total_loss_scaled(
    z1: &ProjectionMatrix,
    z2: &ProjectionMatrix,
    h: &RepresentationMatrix,
    cfg: &LossConfig,
    column_scale: f64,
) -> Result<LossBreakdown, LossError> {
    cfg.validate()?;
    let z = interleave_views(z1, z2)?;
    if h.n_samples() != z.n_samples() {
        return Err(LossError::ShapeMismatch(format!(
            "h has {} rows, expected {} (both views)",
            h.n_samples(),
            z.n_samples()
        )));
    }
    let contrastive = nt_xent_loss(&z, cfg.tau)?;
    let (q_reg, sample_mask) = q_regularizer(h, cfg);
    let (col_pen, column_mask) = column_penalty_scaled(h, cfg, column_scale);
    Ok(LossBreakdown {
        contrastive,
        q_reg,
        column_penalty: col_pen,
        total: contrastive - cfg.lambda1 * q_reg + cfg.lambda2 * col_pen,
        sample_mask,
        column_mask,
    })
}

/// `total_loss_scaled` with scale 1.
pub fn total_loss(
    z1: &ProjectionMatrix,
    z2: &ProjectionMatrix,
    h: &RepresentationMatrix,
    cfg: &LossConfig,
) -> Result<LossBreakdown, LossError> {
    total_loss_scaled(z1, z2, h, cfg, 1.0)
}

/// Objective value plus gradients with respect to the interleaved
/// projections (2N x m) and representations (2N x l).
///
/// Masks are resolved once at the evaluation point and frozen, so the
/// gradients are those of the mask-frozen objective.
pub fn total_loss_grads(
    z1: &ProjectionMatrix,
    z2: &ProjectionMatrix,
    h: &RepresentationMatrix,
    cfg: &LossConfig,
    column_scale: f64,
) -> Result<(LossBreakdown, Vec<f64>, Vec<f64>), LossError> {
    cfg.validate()?;
    let z = interleave_views(z1, z2)?;
    if h.n_samples() != z.n_samples() {
        return Err(LossError::ShapeMismatch(format!(
            "h has {} rows, expected {} (both views)",
            h.n_samples(),
            z.n_samples()
        )));
    }
    let (contrastive, d_z) = nt_xent_with_grad(&z, cfg.tau)?;
    let (q_reg, sample_mask) = q_regularizer(h, cfg);
    let (col_pen, column_mask) = column_penalty_scaled(h, cfg, column_scale);

    let mut d_h = q_regularizer_grad(h, &sample_mask);
    for v in &mut d_h {
        *v *= -cfg.lambda1;
    }
    let pen_grad = column_penalty_grad(h, &column_mask);
    for (dv, pv) in d_h.iter_mut().zip(pen_grad) {
        *dv += cfg.lambda2 * pv;
    }

    for (name, buf) in [("projection", &d_z), ("representation", &d_h)] {
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(LossError::NonFiniteGradient(format!("{name} gradient")));
        }
    }
    let breakdown = LossBreakdown {
        contrastive,
        q_reg,
        column_penalty: col_pen,
        total: contrastive - cfg.lambda1 * q_reg + cfg.lambda2 * col_pen,
        sample_mask,
        column_mask,
    };
    if !breakdown.total.is_finite() {
        return Err(LossError::NonFiniteGradient("total loss".into()));
    }
    Ok((breakdown, d_z, d_h))
}

/// Append loss history rows as CSV: one line per step.
pub fn write_history_csv<W: Write>(history: &[LossBreakdown], mut w: W) -> Result<(), LossError> {
    let io = |e: std::io::Error| LossError::Io(e.to_string());
    writeln!(
        w,
        "# step,contrastive,q_reg,column_penalty,total,masked_samples,masked_columns"
    )
    .map_err(io)?;
    for (step, b) in history.iter().enumerate() {
        let masked_samples = b.sample_mask.iter().filter(|&&m| m).count();
        let masked_columns = b.column_mask.iter().filter(|&&m| m).count();
        writeln!(
            w,
            "{step},{},{},{},{},{masked_samples},{masked_columns}",
            b.contrastive, b.q_reg, b.column_penalty, b.total
        )
        .map_err(io)?;
    }
    Ok(())
}
