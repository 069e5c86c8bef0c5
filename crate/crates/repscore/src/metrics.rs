//! Per-sample quality metrics over a representation space.
//!
//! Six scalars are computed for every representation vector: mean, standard
//! deviation, soft sparsity, L1 norm, the z-score of the maximum feature,
//! and the quality score (z-score of the maximum divided by the L1 norm).
//! A high quality score means the vector is sparse with at least one
//! strongly deviated feature.
//!
//! The standard deviation is the population form (divide by the vector
//! length): these are descriptive statistics of a fixed-length vector, and
//! keeping the divisor fixed makes scores comparable across runs. Soft
//! sparsity counts entries with `|value| < eta` (strict), so it also covers
//! encoders whose outputs are not non-negative.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::repstore::RepresentationMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("representation vector is empty")]
    EmptyVector,
    #[error("standard deviation needs at least 2 features")]
    SingleElement,
    #[error("eta must satisfy 0 < eta < 1, got {0}")]
    InvalidEta(f64),
    #[error("degenerate representation: zero standard deviation")]
    DegenerateRepresentation,
    #[error("zero L1 norm")]
    ZeroNorm,
    #[error("report I/O failed: {0}")]
    Io(String),
    #[error("report parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Arithmetic mean of the features.
pub fn mean(rep: &[f64]) -> Result<f64, MetricsError> {
    if rep.is_empty() {
        return Err(MetricsError::EmptyVector);
    }
    Ok(rep.iter().sum::<f64>() / rep.len() as f64)
}

/// Population standard deviation (divide by the feature count).
pub fn std_dev(rep: &[f64]) -> Result<f64, MetricsError> {
    match rep.len() {
        0 => return Err(MetricsError::EmptyVector),
        1 => return Err(MetricsError::SingleElement),
        _ => {}
    }
    let mu = mean(rep)?;
    let var = rep.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / rep.len() as f64;
    Ok(var.sqrt())
}

/// Fraction of features with `|value| < eta`.
pub fn soft_sparsity(rep: &[f64], eta: f64) -> Result<f64, MetricsError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(MetricsError::InvalidEta(eta));
    }
    if rep.is_empty() {
        return Err(MetricsError::EmptyVector);
    }
    let below = rep.iter().filter(|v| v.abs() < eta).count();
    Ok(below as f64 / rep.len() as f64)
}

/// Sum of absolute feature values.
pub fn l1_norm(rep: &[f64]) -> Result<f64, MetricsError> {
    if rep.is_empty() {
        return Err(MetricsError::EmptyVector);
    }
    Ok(rep.iter().map(|v| v.abs()).sum())
}

/// Z-score of the maximum feature: `(max - mean) / std`.
///
/// Uses the raw maximum, not the maximum of absolute values.
pub fn zscore_max(rep: &[f64]) -> Result<f64, MetricsError> {
    let sigma = std_dev(rep)?;
    if sigma == 0.0 {
        return Err(MetricsError::DegenerateRepresentation);
    }
    let max = rep.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mu = mean(rep)?;
    Ok((max - mu) / sigma)
}

/// Quality score: z-score of the maximum divided by the L1 norm.
pub fn q_score(rep: &[f64]) -> Result<f64, MetricsError> {
    let l1 = l1_norm(rep)?;
    if l1 == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    Ok(zscore_max(rep)? / l1)
}

/// Default soft-sparsity threshold.
pub const DEFAULT_ETA: f64 = 0.01;

/// Why a row's z-score and quality score are undefined, if they are.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFlag {
    Ok,
    /// Zero standard deviation (constant vector).
    Degenerate,
    /// Zero L1 norm (all-zero vector; implies degenerate as well).
    ZeroNorm,
}

impl RowFlag {
    pub fn is_ok(self) -> bool {
        self == RowFlag::Ok
    }
}

impl fmt::Display for RowFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowFlag::Ok => write!(f, "ok"),
            RowFlag::Degenerate => write!(f, "degenerate"),
            RowFlag::ZeroNorm => write!(f, "zero_norm"),
        }
    }
}

impl std::str::FromStr for RowFlag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(RowFlag::Ok),
            "degenerate" => Ok(RowFlag::Degenerate),
            "zero_norm" => Ok(RowFlag::ZeroNorm),
            other => Err(format!("unknown row flag '{other}'")),
        }
    }
}

/// All six metrics for one sample. Z-score and quality score are `None`
/// exactly when the flag is not `Ok`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityRecord {
    pub sample_id: String,
    pub mean: f64,
    pub std: f64,
    pub soft_sparsity: f64,
    pub l1_norm: f64,
    pub zscore_max: Option<f64>,
    pub q_score: Option<f64>,
    pub flag: RowFlag,
}

/// Per-sample metric report for one representation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub records: Vec<QualityRecord>,
    /// Soft-sparsity threshold the report was computed with.
    pub eta: f64,
}

/// The six metric columns of a report, for curve evaluation and exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Mean,
    Std,
    SoftSparsity,
    L1Norm,
    ZscoreMax,
    QScore,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Mean,
        MetricKind::Std,
        MetricKind::SoftSparsity,
        MetricKind::L1Norm,
        MetricKind::ZscoreMax,
        MetricKind::QScore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mean => "mean",
            MetricKind::Std => "std",
            MetricKind::SoftSparsity => "soft_sparsity",
            MetricKind::L1Norm => "l1_norm",
            MetricKind::ZscoreMax => "zscore_max",
            MetricKind::QScore => "q_score",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

impl QualityReport {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Value of one metric for one record; `None` when undefined.
    pub fn metric_value(&self, record: &QualityRecord, metric: MetricKind) -> Option<f64> {
        match metric {
            MetricKind::Mean => Some(record.mean),
            MetricKind::Std => Some(record.std),
            MetricKind::SoftSparsity => Some(record.soft_sparsity),
            MetricKind::L1Norm => Some(record.l1_norm),
            MetricKind::ZscoreMax => record.zscore_max,
            MetricKind::QScore => record.q_score,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), MetricsError> {
        let io = |e: std::io::Error| MetricsError::Io(e.to_string());
        writeln!(
            w,
            "# sample_id,mean,std,soft_sparsity,l1_norm,zscore_max,q_score,flag (eta={})",
            self.eta
        )
        .map_err(io)?;
        for r in &self.records {
            let z = r.zscore_max.map(|v| v.to_string()).unwrap_or_default();
            let q = r.q_score.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.sample_id, r.mean, r.std, r.soft_sparsity, r.l1_norm, z, q, r.flag
            )
            .map_err(io)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let f = File::create(path).map_err(|e| MetricsError::Io(e.to_string()))?;
        let mut w = BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush().map_err(|e| MetricsError::Io(e.to_string()))
    }

    pub fn load_csv(path: &Path) -> Result<Self, MetricsError> {
        let f = File::open(path).map_err(|e| MetricsError::Io(e.to_string()))?;
        let reader = BufReader::new(f);
        let mut eta = DEFAULT_ETA;
        let mut records = Vec::new();
        for (line_no, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| MetricsError::Io(e.to_string()))?;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.starts_with('#') {
                if let Some(pos) = trimmed.find("eta=") {
                    let rest = &trimmed[pos + 4..];
                    let end = rest.find(')').unwrap_or(rest.len());
                    if let Ok(v) = rest[..end].trim().parse() {
                        eta = v;
                    }
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(|f| f.trim()).collect();
            if fields.len() != 8 {
                return Err(MetricsError::Parse {
                    line: line_no + 1,
                    msg: format!("expected 8 columns, got {}", fields.len()),
                });
            }
            let num = |s: &str, what: &str| -> Result<f64, MetricsError> {
                s.parse().map_err(|_| MetricsError::Parse {
                    line: line_no + 1,
                    msg: format!("cannot parse {what} '{s}'"),
                })
            };
            let opt_num = |s: &str, what: &str| -> Result<Option<f64>, MetricsError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s, what).map(Some)
                }
            };
            let flag: RowFlag = fields[7].parse().map_err(|msg| MetricsError::Parse {
                line: line_no + 1,
                msg,
            })?;
            records.push(QualityRecord {
                sample_id: fields[0].to_string(),
                mean: num(fields[1], "mean")?,
                std: num(fields[2], "std")?,
                soft_sparsity: num(fields[3], "soft_sparsity")?,
                l1_norm: num(fields[4], "l1_norm")?,
                zscore_max: opt_num(fields[5], "zscore_max")?,
                q_score: opt_num(fields[6], "q_score")?,
                flag,
            });
        }
        if records.is_empty() {
            return Err(MetricsError::Parse {
                line: 0,
                msg: "report contains no rows".into(),
            });
        }
        Ok(QualityReport { records, eta })
    }
}

/// Metrics for one row, with undefined scores flagged rather than erroring.
pub fn quality_record(sample_id: String, rep: &[f64], eta: f64) -> Result<QualityRecord, MetricsError> {
    let mu = mean(rep)?;
    let sigma = match std_dev(rep) {
        Ok(s) => s,
        // A single-feature row has no spread to measure; treat as degenerate.
        Err(MetricsError::SingleElement) => 0.0,
        Err(e) => return Err(e),
    };
    let sparsity = soft_sparsity(rep, eta)?;
    let l1 = l1_norm(rep)?;
    let (flag, z, q) = if l1 == 0.0 {
        (RowFlag::ZeroNorm, None, None)
    } else if sigma == 0.0 {
        (RowFlag::Degenerate, None, None)
    } else {
        let max = rep.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = (max - mu) / sigma;
        (RowFlag::Ok, Some(z), Some(z / l1))
    };
    Ok(QualityRecord {
        sample_id,
        mean: mu,
        std: sigma,
        soft_sparsity: sparsity,
        l1_norm: l1,
        zscore_max: z,
        q_score: q,
        flag,
    })
}

/// Compute all six metrics for every row. Degenerate rows are flagged and
/// kept; only an invalid `eta` or an empty matrix aborts.
pub fn batch_quality_report(
    m: &RepresentationMatrix,
    eta: f64,
) -> Result<QualityReport, MetricsError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(MetricsError::InvalidEta(eta));
    }
    let mut records = Vec::with_capacity(m.n_samples());
    for (i, row) in m.rows().enumerate() {
        records.push(quality_record(m.sample_id(i), row, eta)?);
    }
    Ok(QualityReport { records, eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQRT_2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn mean_zero_and_symmetric() {
        assert_eq!(mean(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(mean(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(mean(&[]).unwrap_err(), MetricsError::EmptyVector);
    }

    // Independent oracle: compensated (Kahan) summation.
    fn kahan_mean(v: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut c = 0.0;
        for &x in v {
            let y = x - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum / v.len() as f64
    }

    #[test]
    fn mean_matches_compensated_oracle() {
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let v: Vec<f64> = (0..64).map(|_| next() * 2.0 - 1.0).collect();
        let got = mean(&v).unwrap();
        let want = kahan_mean(&v);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn std_constant_vector_is_zero() {
        assert_eq!(std_dev(&[5.0, 5.0, 5.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn std_hand_oracle() {
        // mean 1, variance (1+1+4)/3 = 2
        let s = std_dev(&[0.0, 0.0, 3.0]).unwrap();
        assert!((s - SQRT_2).abs() < 1e-15);
        assert_eq!(std_dev(&[1.0]).unwrap_err(), MetricsError::SingleElement);
    }

    // Independent two-pass variance oracle.
    fn two_pass_std(v: &[f64]) -> f64 {
        let mu = v.iter().sum::<f64>() / v.len() as f64;
        let mut acc = 0.0;
        for &x in v {
            acc += (x - mu).powi(2);
        }
        (acc / v.len() as f64).sqrt()
    }

    #[test]
    fn soft_sparsity_examples() {
        assert_eq!(soft_sparsity(&[0.0, 0.0, 0.0, 0.0], 0.01).unwrap(), 1.0);
        assert_eq!(soft_sparsity(&[0.0, 0.005, 0.5, 2.0], 0.01).unwrap(), 0.5);
        assert_eq!(soft_sparsity(&[0.1, 0.5, 0.9], 1e-300).unwrap(), 0.0);
        assert_eq!(
            soft_sparsity(&[1.0], 0.0).unwrap_err(),
            MetricsError::InvalidEta(0.0)
        );
        assert_eq!(
            soft_sparsity(&[1.0], 1.0).unwrap_err(),
            MetricsError::InvalidEta(1.0)
        );
    }

    #[test]
    fn l1_norm_examples() {
        assert_eq!(l1_norm(&[0.0, 0.0, 3.0]).unwrap(), 3.0);
        assert_eq!(l1_norm(&[-1.0, 2.0, -3.0]).unwrap(), 6.0);
    }

    #[test]
    fn zscore_max_hand_oracle() {
        let z = zscore_max(&[0.0, 0.0, 3.0]).unwrap();
        assert!((z - 2.0 / SQRT_2).abs() < 1e-15);
        assert_eq!(
            zscore_max(&[5.0, 5.0, 5.0]).unwrap_err(),
            MetricsError::DegenerateRepresentation
        );
    }

    #[test]
    fn q_score_hand_oracle() {
        let q = q_score(&[0.0, 0.0, 3.0]).unwrap();
        assert!((q - SQRT_2 / 3.0).abs() < 1e-15);
        assert_eq!(q_score(&[0.0, 0.0, 0.0]).unwrap_err(), MetricsError::ZeroNorm);
    }

    #[test]
    fn batch_flags_degenerate_rows() {
        let m = RepresentationMatrix::from_rows(vec![vec![0.0, 0.0, 3.0], vec![1.0, 1.0, 1.0]])
            .unwrap();
        let report = batch_quality_report(&m, 0.01).unwrap();
        assert_eq!(report.records[0].flag, RowFlag::Ok);
        assert!(report.records[0].q_score.is_some());
        assert_eq!(report.records[1].flag, RowFlag::Degenerate);
        assert!(report.records[1].q_score.is_none());
        // degenerate rows still carry the defined metrics
        assert_eq!(report.records[1].mean, 1.0);
        assert_eq!(report.records[1].l1_norm, 3.0);
    }

    #[test]
    fn batch_identity_rows_are_symmetric() {
        let m = RepresentationMatrix::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let report = batch_quality_report(&m, 0.01).unwrap();
        let q0 = report.records[0].q_score.unwrap();
        for r in &report.records {
            assert_eq!(r.q_score.unwrap(), q0);
            assert_eq!(r.mean, report.records[0].mean);
        }
    }

    #[test]
    fn batch_cells_equal_scalar_ops() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..64).map(|_| next() * 4.0 - 1.0).collect())
            .collect();
        let m = RepresentationMatrix::from_rows(rows.clone()).unwrap();
        let report = batch_quality_report(&m, 0.01).unwrap();
        for (rec, row) in report.records.iter().zip(rows.iter()) {
            assert_eq!(rec.mean, mean(row).unwrap());
            assert_eq!(rec.std, std_dev(row).unwrap());
            assert_eq!(rec.soft_sparsity, soft_sparsity(row, 0.01).unwrap());
            assert_eq!(rec.l1_norm, l1_norm(row).unwrap());
            assert_eq!(rec.zscore_max.unwrap(), zscore_max(row).unwrap());
            assert_eq!(rec.q_score.unwrap(), q_score(row).unwrap());
        }
    }

    #[test]
    fn report_csv_round_trip() {
        let m = RepresentationMatrix::from_rows(vec![
            vec![0.25, -1.5, 3.0, 0.001],
            vec![2.0, 2.0, 2.0, 2.0],
            vec![0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let report = batch_quality_report(&m, 0.01).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        report.save_csv(&path).unwrap();
        let back = QualityReport::load_csv(&path).unwrap();
        assert_eq!(report, back);
    }

    proptest! {
        #[test]
        fn scale_covariance(
            v in proptest::collection::vec(-100.0f64..100.0, 2..32),
            c in 0.125f64..8.0,
        ) {
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let tol = 1e-9;
            let rel = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300);
            prop_assert!(rel(mean(&scaled).unwrap(), c * mean(&v).unwrap()));
            prop_assert!(rel(std_dev(&scaled).unwrap(), c * std_dev(&v).unwrap()));
            prop_assert!(rel(l1_norm(&scaled).unwrap(), c * l1_norm(&v).unwrap()));
            if let (Ok(z), Ok(zs)) = (zscore_max(&v), zscore_max(&scaled)) {
                prop_assert!(rel(zs, z));
            }
            if let (Ok(q), Ok(qs)) = (q_score(&v), q_score(&scaled)) {
                prop_assert!(rel(qs, q / c));
            }
        }

        #[test]
        fn permutation_invariance(
            v in proptest::collection::vec(-50.0f64..50.0, 2..24),
            seed in 0u64..1000,
        ) {
            let mut p = v.clone();
            // deterministic Fisher-Yates from the seed
            let mut s = seed.wrapping_add(0x9E3779B97F4A7C15);
            for i in (1..p.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                let j = (s % (i as u64 + 1)) as usize;
                p.swap(i, j);
            }
            // summation order changes under permutation; the error bound for
            // sequential summation scales with n * eps * sum(|x|), which also
            // covers cancellation in the mean
            let n = v.len() as f64;
            let scale = l1_norm(&v).unwrap().max(1.0);
            let tol = 4.0 * n * f64::EPSILON * scale;
            let close = |a: f64, b: f64| (a - b).abs() <= tol;
            prop_assert!(close(mean(&v).unwrap(), mean(&p).unwrap()));
            prop_assert!(close(l1_norm(&v).unwrap(), l1_norm(&p).unwrap()));
            prop_assert_eq!(soft_sparsity(&v, 0.01).unwrap(), soft_sparsity(&p, 0.01).unwrap());
            prop_assert!(close(std_dev(&v).unwrap(), std_dev(&p).unwrap()));
        }

        #[test]
        fn q_score_is_exact_quotient(v in proptest::collection::vec(-10.0f64..10.0, 2..32)) {
            match q_score(&v) {
                Ok(q) => {
                    let expected = zscore_max(&v).unwrap() / l1_norm(&v).unwrap();
                    prop_assert_eq!(q.to_bits(), expected.to_bits());
                }
                Err(_) => {}
            }
        }

        #[test]
        fn std_matches_two_pass_oracle(v in proptest::collection::vec(-1000.0f64..1000.0, 2..64)) {
            let got = std_dev(&v).unwrap();
            let want = two_pass_std(&v);
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        }
    }
}
