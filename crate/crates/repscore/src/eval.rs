//! Threshold-sweep evaluation: ROC and precision-recall curves, their areas,
//! and aggregate exports for comparing quality metrics against probe
//! correctness.
//!
//! The positive class is "correctly classified sample" throughout. Tied
//! scores are grouped at a single threshold; AUROC uses the trapezoid rule
//! (which matches the pairwise probability P(s+ > s-) + 0.5 P(s+ = s-)),
//! while AUPRC uses the step-wise sum sum_k (R_k - R_{k-1}) * P_k without
//! interpolation, so tied precision values never get the trapezoidal
//! over-estimate.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{MetricKind, QualityReport, RowFlag};
use crate::repstore::{LabelSet, RepresentationMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("evaluation needs both a positive and a negative sample")]
    OneClassOnly,
    #[error("precision-recall curve needs at least one positive sample")]
    NoPositives,
    #[error("labels carry no correctness information")]
    MissingCorrectness,
    #[error("scores ({scores}) and labels ({labels}) differ in length")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("eps_zero must be >= 0, got {0}")]
    InvalidEps(f64),
    #[error("export failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Roc,
    Pr,
}

/// One evaluated curve: ordered points, area, and class counts.
///
/// For ROC the points are (false positive rate, true positive rate); for
/// precision-recall they are (recall, precision) with a leading display
/// point at recall 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveResult {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    pub area: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// Cumulative true/false positive counts after each tie group of the
/// descending score sweep.
fn sweep(scores: &[f64], correctness: &[bool]) -> Result<Vec<(usize, usize)>, EvalError> {
    if scores.len() != correctness.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: correctness.len(),
        });
    }
    for (i, s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(EvalError::NonFiniteScore(i));
        }
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut groups = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if correctness[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        groups.push((tp, fp));
    }
    Ok(groups)
}

/// ROC curve over a descending threshold sweep, area by the trapezoid rule.
pub fn roc_curve(scores: &[f64], correctness: &[bool]) -> Result<CurveResult, EvalError> {
    let groups = sweep(scores, correctness)?;
    let n_positive = correctness.iter().filter(|&&c| c).count();
    let n_negative = correctness.len() - n_positive;
    if n_positive == 0 || n_negative == 0 {
        return Err(EvalError::OneClassOnly);
    }
    let p = n_positive as f64;
    let n = n_negative as f64;
    let mut points = vec![(0.0, 0.0)];
    let mut area = 0.0;
    let (mut px, mut py) = (0.0, 0.0);
    for &(tp, fp) in &groups {
        let x = fp as f64 / n;
        let y = tp as f64 / p;
        area += (x - px) * (y + py) / 2.0;
        points.push((x, y));
        px = x;
        py = y;
    }
    Ok(CurveResult {
        kind: CurveKind::Roc,
        points,
        area,
        n_positive,
        n_negative,
    })
}

/// Precision-recall curve over the same sweep, area by step-wise summation.
pub fn pr_curve(scores: &[f64], correctness: &[bool]) -> Result<CurveResult, EvalError> {
    let groups = sweep(scores, correctness)?;
    let n_positive = correctness.iter().filter(|&&c| c).count();
    let n_negative = correctness.len() - n_positive;
    if n_positive == 0 {
        return Err(EvalError::NoPositives);
    }
    let p = n_positive as f64;
    let mut points = Vec::with_capacity(groups.len() + 1);
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (k, &(tp, fp)) in groups.iter().enumerate() {
        let recall = tp as f64 / p;
        let precision = tp as f64 / (tp + fp) as f64;
        if k == 0 {
            points.push((0.0, precision));
        }
        area += (recall - prev_recall) * precision;
        points.push((recall, precision));
        prev_recall = recall;
    }
    Ok(CurveResult {
        kind: CurveKind::Pr,
        points,
        area,
        n_positive,
        n_negative,
    })
}

/// AUROC and AUPRC of one quality metric against correctness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub metric: MetricKind,
    pub auroc: f64,
    pub auprc: f64,
}

/// Benchmark of all six metrics over the rows where every metric is defined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    /// Rows that entered the sweep (flag `ok`).
    pub n_used: usize,
    /// Rows dropped because their scores are undefined.
    pub n_excluded: usize,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// Evaluate every metric of a report as a predictor of correctness.
///
/// Rows flagged degenerate or zero-norm are excluded from all metrics so the
/// six sweeps run over the same sample set. Scores enter as-is: a metric
/// that anti-correlates with correctness shows an AUROC below 0.5.
pub fn metric_benchmark(
    report: &QualityReport,
    correctness: &[bool],
) -> Result<BenchmarkTable, EvalError> {
    if report.len() != correctness.len() {
        return Err(EvalError::LengthMismatch {
            scores: report.len(),
            labels: correctness.len(),
        });
    }
    let kept: Vec<usize> = (0..report.len())
        .filter(|&i| report.records[i].flag == RowFlag::Ok)
        .collect();
    let kept_correct: Vec<bool> = kept.iter().map(|&i| correctness[i]).collect();
    let mut rows = Vec::with_capacity(MetricKind::ALL.len());
    let mut counts = None;
    for metric in MetricKind::ALL {
        let scores: Vec<f64> = kept
            .iter()
            .map(|&i| {
                report
                    .metric_value(&report.records[i], metric)
                    .expect("ok-flagged rows define every metric")
            })
            .collect();
        let roc = roc_curve(&scores, &kept_correct)?;
        let pr = pr_curve(&scores, &kept_correct)?;
        counts = Some((roc.n_positive, roc.n_negative));
        rows.push(BenchmarkRow {
            metric,
            auroc: roc.area,
            auprc: pr.area,
        });
    }
    let (n_positive, n_negative) = counts.ok_or(EvalError::OneClassOnly)?;
    Ok(BenchmarkTable {
        rows,
        n_used: kept.len(),
        n_excluded: report.len() - kept.len(),
        n_positive,
        n_negative,
    })
}

/// Scores of one metric over the `ok`-flagged rows, with the matching
/// correctness flags: the inputs of a single-metric sweep, filtered by the
/// same rule as `metric_benchmark`.
pub fn metric_scores(
    report: &QualityReport,
    correctness: &[bool],
    metric: MetricKind,
) -> Result<(Vec<f64>, Vec<bool>), EvalError> {
    if report.len() != correctness.len() {
        return Err(EvalError::LengthMismatch {
            scores: report.len(),
            labels: correctness.len(),
        });
    }
    let mut scores = Vec::new();
    let mut kept = Vec::new();
    for (record, &c) in report.records.iter().zip(correctness) {
        if record.flag == RowFlag::Ok {
            scores.push(
                report
                    .metric_value(record, metric)
                    .expect("ok-flagged rows define every metric"),
            );
            kept.push(c);
        }
    }
    Ok((scores, kept))
}

/// Mean representation of one class, split by probe correctness.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub class_id: u32,
    /// Mean over correctly classified samples; `None` when the subset is empty.
    pub correct_mean: Option<Vec<f64>>,
    /// Mean over misclassified samples; `None` when the subset is empty.
    pub incorrect_mean: Option<Vec<f64>>,
    pub accuracy: f64,
    pub n_samples: usize,
}

/// Per-class correct/incorrect mean representations, sorted by descending
/// class accuracy (ties by ascending class id).
pub fn class_profiles(
    m: &RepresentationMatrix,
    labels: &LabelSet,
) -> Result<Vec<ClassProfile>, EvalError> {
    let correctness = labels.correctness().ok_or(EvalError::MissingCorrectness)?;
    if labels.len() != m.n_samples() {
        return Err(EvalError::LengthMismatch {
            scores: m.n_samples(),
            labels: labels.len(),
        });
    }
    let mut class_ids: Vec<u32> = labels.class_labels().to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();
    let l = m.n_features();
    let mut profiles = Vec::with_capacity(class_ids.len());
    for class_id in class_ids {
        let mut correct_sum = vec![0.0f64; l];
        let mut incorrect_sum = vec![0.0f64; l];
        let mut n_correct = 0usize;
        let mut n_incorrect = 0usize;
        for (i, row) in m.rows().enumerate() {
            if labels.class_labels()[i] != class_id {
                continue;
            }
            let (sum, count) = if correctness[i] {
                (&mut correct_sum, &mut n_correct)
            } else {
                (&mut incorrect_sum, &mut n_incorrect)
            };
            for (acc, v) in sum.iter_mut().zip(row) {
                *acc += v;
            }
            *count += 1;
        }
        let mean_of = |sum: Vec<f64>, n: usize| {
            (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect::<Vec<f64>>())
        };
        let n_samples = n_correct + n_incorrect;
        profiles.push(ClassProfile {
            class_id,
            correct_mean: mean_of(correct_sum, n_correct),
            incorrect_mean: mean_of(incorrect_sum, n_incorrect),
            accuracy: n_correct as f64 / n_samples as f64,
            n_samples,
        });
    }
    profiles.sort_by(|a, b| {
        b.accuracy
            .partial_cmp(&a.accuracy)
            .unwrap()
            .then(a.class_id.cmp(&b.class_id))
    });
    Ok(profiles)
}

/// Per-class combined mean vectors, each sorted descending by magnitude,
/// rows in the profile order (descending class accuracy).
pub fn sorted_feature_profile(profiles: &[ClassProfile]) -> Vec<Vec<f64>> {
    profiles
        .iter()
        .map(|p| {
            let mut combined = match (&p.correct_mean, &p.incorrect_mean) {
                (Some(c), Some(w)) => {
                    let a = p.accuracy;
                    c.iter().zip(w).map(|(ci, wi)| a * ci + (1.0 - a) * wi).collect()
                }
                (Some(c), None) => c.clone(),
                (None, Some(w)) => w.clone(),
                (None, None) => Vec::new(),
            };
            combined.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
            combined
        })
        .collect()
}

/// Fraction of entries with `|value| <= eps_zero`, per row.
pub fn exact_sparsity(m: &RepresentationMatrix, eps_zero: f64) -> Result<Vec<f64>, EvalError> {
    if !(eps_zero >= 0.0) {
        return Err(EvalError::InvalidEps(eps_zero));
    }
    Ok(m.rows()
        .map(|row| {
            let zeros = row.iter().filter(|v| v.abs() <= eps_zero).count();
            zeros as f64 / row.len() as f64
        })
        .collect())
}

/// Write curve points as `x,y` lines with a commented summary header.
pub fn write_curve_csv<W: Write>(curve: &CurveResult, mut w: W) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io(e.to_string());
    let kind = match curve.kind {
        CurveKind::Roc => "roc",
        CurveKind::Pr => "pr",
    };
    writeln!(
        w,
        "# kind={kind} area={} n_positive={} n_negative={}",
        curve.area, curve.n_positive, curve.n_negative
    )
    .map_err(io)?;
    for (x, y) in &curve.points {
        writeln!(w, "{x},{y}").map_err(io)?;
    }
    Ok(())
}

/// Write the benchmark table as `metric,auroc,auprc` CSV.
pub fn write_benchmark_csv<W: Write>(table: &BenchmarkTable, mut w: W) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io(e.to_string());
    writeln!(w, "# metric,auroc,auprc (n_used={})", table.n_used).map_err(io)?;
    for row in &table.rows {
        writeln!(w, "{},{},{}", row.metric.name(), row.auroc, row.auprc).map_err(io)?;
    }
    Ok(())
}

/// Write class profiles in long form, one line per (class, subset, feature).
/// Subsets with no members are skipped.
pub fn write_class_profiles_csv<W: Write>(
    profiles: &[ClassProfile],
    mut w: W,
) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io(e.to_string());
    writeln!(w, "# class_id,accuracy,n_samples,subset,feature,value").map_err(io)?;
    for p in profiles {
        for (subset, mean) in [("correct", &p.correct_mean), ("incorrect", &p.incorrect_mean)] {
            if let Some(mean) = mean {
                for (feature, value) in mean.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{subset},{feature},{value}",
                        p.class_id, p.accuracy, p.n_samples
                    )
                    .map_err(io)?;
                }
            }
        }
    }
    Ok(())
}

/// Write the magnitude-sorted per-class feature curves in long form, one
/// line per (class, rank).
pub fn write_feature_profile_csv<W: Write>(
    profiles: &[ClassProfile],
    mut w: W,
) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io(e.to_string());
    let sorted = sorted_feature_profile(profiles);
    writeln!(w, "# class_id,rank,value").map_err(io)?;
    for (p, values) in profiles.iter().zip(&sorted) {
        for (rank, value) in values.iter().enumerate() {
            writeln!(w, "{},{rank},{value}", p.class_id).map_err(io)?;
        }
    }
    Ok(())
}
