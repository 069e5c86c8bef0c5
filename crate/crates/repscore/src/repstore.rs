//! Canonical data model and file I/O for representation matrices, labels
//! and projections.
//!
//! Two interchange formats are supported: a numeric CSV dialect (comma
//! separated, `\n` line terminator, optional single `#` header line) and
//! `repb`, a bit-exact binary layout (`REPB` magic, u32 version, u64 rows,
//! u64 cols, row-major little-endian f64). CSV writes use 17 significant
//! digits so decimal round-trips reproduce the exact f64 value.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

const REPB_MAGIC: &[u8; 4] = b"REPB";
const REPB_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RepstoreError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("matrix has no rows or no columns")]
    EmptyMatrix,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("label vector of length {labels} does not match {samples} samples")]
    LabelMismatch { labels: usize, samples: usize },
    #[error("stored correctness flag disagrees with labels at row {row}")]
    CorrectnessMismatch { row: usize },
}

/// On-disk encoding of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Repb,
}

impl MatrixFormat {
    /// Guess the format from a file extension; defaults to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("repb") => MatrixFormat::Repb,
            _ => MatrixFormat::Csv,
        }
    }
}

impl fmt::Display for MatrixFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixFormat::Csv => write!(f, "csv"),
            MatrixFormat::Repb => write!(f, "repb"),
        }
    }
}

/// N×l matrix of per-sample representations, row-major, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationMatrix {
    data: Vec<f64>,
    n_samples: usize,
    n_features: usize,
    sample_ids: Option<Vec<String>>,
}

impl RepresentationMatrix {
    /// Build from a flat row-major buffer, enforcing shape and finiteness.
    pub fn from_flat(
        data: Vec<f64>,
        n_samples: usize,
        n_features: usize,
    ) -> Result<Self, RepstoreError> {
        if n_samples == 0 || n_features == 0 {
            return Err(RepstoreError::EmptyMatrix);
        }
        if data.len() != n_samples * n_features {
            return Err(RepstoreError::Parse {
                line: 0,
                msg: format!(
                    "buffer of {} values cannot hold a {}x{} matrix",
                    data.len(),
                    n_samples,
                    n_features
                ),
            });
        }
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(RepstoreError::NonFinite {
                    row: idx / n_features,
                    col: idx % n_features,
                });
            }
        }
        Ok(Self {
            data,
            n_samples,
            n_features,
            sample_ids: None,
        })
    }

    /// Build from per-row vectors; rows must all have the same length.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, RepstoreError> {
        if rows.is_empty() {
            return Err(RepstoreError::EmptyMatrix);
        }
        let n_features = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(RepstoreError::Parse {
                    line: i + 1,
                    msg: format!("row has {} values, expected {}", row.len(), n_features),
                });
            }
        }
        let n_samples = rows.len();
        let data = rows.into_iter().flatten().collect();
        Self::from_flat(data, n_samples, n_features)
    }

    pub fn with_sample_ids(mut self, ids: Vec<String>) -> Result<Self, RepstoreError> {
        if ids.len() != self.n_samples {
            return Err(RepstoreError::LabelMismatch {
                labels: ids.len(),
                samples: self.n_samples,
            });
        }
        self.sample_ids = Some(ids);
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * self.n_features;
        &self.data[start..start + self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_features)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_features + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn sample_ids(&self) -> Option<&[String]> {
        self.sample_ids.as_deref()
    }

    /// Identifier for row `i`: the stored id, or the row index as text.
    pub fn sample_id(&self, i: usize) -> String {
        match &self.sample_ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        }
    }

    /// Exact equality including bit patterns (distinguishes -0.0 from 0.0).
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.n_samples == other.n_samples
            && self.n_features == other.n_features
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// N×m matrix of projection-head outputs, row-major, all entries finite.
///
/// Cosine similarity additionally needs every row to have a nonzero norm;
/// that is checked where similarities are computed (so that a freshly
/// initialized or degenerate encoder can still emit projections).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    data: Vec<f64>,
    n_samples: usize,
    n_features: usize,
}

impl ProjectionMatrix {
    pub fn from_flat(
        data: Vec<f64>,
        n_samples: usize,
        n_features: usize,
    ) -> Result<Self, RepstoreError> {
        let m = RepresentationMatrix::from_flat(data, n_samples, n_features)?;
        Ok(Self {
            data: m.data,
            n_samples: m.n_samples,
            n_features: m.n_features,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, RepstoreError> {
        let m = RepresentationMatrix::from_rows(rows)?;
        Ok(Self {
            data: m.data,
            n_samples: m.n_samples,
            n_features: m.n_features,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * self.n_features;
        &self.data[start..start + self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_features)
    }
}

/// Per-sample class labels with optional predictions and correctness flags.
///
/// When predictions are present, correctness is `predicted == class`; a
/// stored correctness vector must agree with that derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    class_labels: Vec<u32>,
    predicted_labels: Option<Vec<u32>>,
    correctness: Option<Vec<bool>>,
    sample_ids: Option<Vec<String>>,
}

impl LabelSet {
    pub fn from_class_labels(class_labels: Vec<u32>) -> Self {
        Self {
            class_labels,
            predicted_labels: None,
            correctness: None,
            sample_ids: None,
        }
    }

    /// Pair true labels with predictions; correctness is derived.
    pub fn with_predictions(
        class_labels: Vec<u32>,
        predicted_labels: Vec<u32>,
    ) -> Result<Self, RepstoreError> {
        if class_labels.len() != predicted_labels.len() {
            return Err(RepstoreError::LabelMismatch {
                labels: predicted_labels.len(),
                samples: class_labels.len(),
            });
        }
        let correctness = class_labels
            .iter()
            .zip(predicted_labels.iter())
            .map(|(c, p)| c == p)
            .collect();
        Ok(Self {
            class_labels,
            predicted_labels: Some(predicted_labels),
            correctness: Some(correctness),
            sample_ids: None,
        })
    }

    /// Attach correctness flags directly (no predictions available).
    pub fn with_correctness(
        class_labels: Vec<u32>,
        correctness: Vec<bool>,
    ) -> Result<Self, RepstoreError> {
        if class_labels.len() != correctness.len() {
            return Err(RepstoreError::LabelMismatch {
                labels: correctness.len(),
                samples: class_labels.len(),
            });
        }
        Ok(Self {
            class_labels,
            predicted_labels: None,
            correctness: Some(correctness),
            sample_ids: None,
        })
    }

    pub fn with_sample_ids(mut self, ids: Vec<String>) -> Result<Self, RepstoreError> {
        if ids.len() != self.class_labels.len() {
            return Err(RepstoreError::LabelMismatch {
                labels: ids.len(),
                samples: self.class_labels.len(),
            });
        }
        self.sample_ids = Some(ids);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.class_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_labels.is_empty()
    }

    pub fn class_labels(&self) -> &[u32] {
        &self.class_labels
    }

    pub fn predicted_labels(&self) -> Option<&[u32]> {
        self.predicted_labels.as_deref()
    }

    pub fn correctness(&self) -> Option<&[bool]> {
        self.correctness.as_deref()
    }

    pub fn sample_ids(&self) -> Option<&[String]> {
        self.sample_ids.as_deref()
    }

    /// Check length against a paired matrix and internal consistency.
    pub fn validate_against(&self, matrix: &RepresentationMatrix) -> Result<(), RepstoreError> {
        if self.class_labels.len() != matrix.n_samples() {
            return Err(RepstoreError::LabelMismatch {
                labels: self.class_labels.len(),
                samples: matrix.n_samples(),
            });
        }
        if let (Some(pred), Some(corr)) = (&self.predicted_labels, &self.correctness) {
            for (i, ((c, p), &flag)) in self
                .class_labels
                .iter()
                .zip(pred.iter())
                .zip(corr.iter())
                .enumerate()
            {
                if (c == p) != flag {
                    return Err(RepstoreError::CorrectnessMismatch { row: i });
                }
            }
        }
        Ok(())
    }
}

/// 17 significant digits: enough for any f64 to survive a decimal round-trip.
fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn load_matrix(
    path: &Path,
    format: MatrixFormat,
) -> Result<RepresentationMatrix, RepstoreError> {
    match format {
        MatrixFormat::Csv => load_matrix_csv(path),
        MatrixFormat::Repb => load_matrix_repb(path),
    }
}

pub fn save_matrix(
    matrix: &RepresentationMatrix,
    path: &Path,
    format: MatrixFormat,
) -> Result<(), RepstoreError> {
    match format {
        MatrixFormat::Csv => save_matrix_csv(matrix, path),
        MatrixFormat::Repb => save_matrix_repb(matrix, path),
    }
}

fn load_matrix_csv(path: &Path) -> Result<RepresentationMatrix, RepstoreError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut n_features = 0usize;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if line_no == 0 && trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in trimmed.split(',') {
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| RepstoreError::Parse {
                line: line_no + 1,
                msg: format!("cannot parse '{cell}' as a number"),
            })?;
            row.push(value);
        }
        if rows.is_empty() {
            n_features = row.len();
        } else if row.len() != n_features {
            return Err(RepstoreError::Parse {
                line: line_no + 1,
                msg: format!("row has {} values, expected {}", row.len(), n_features),
            });
        }
        rows.push(row);
    }
    RepresentationMatrix::from_rows(rows)
}

fn save_matrix_csv(matrix: &RepresentationMatrix, path: &Path) -> Result<(), RepstoreError> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        w.write_all(line.join(",").as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn load_matrix_repb(path: &Path) -> Result<RepresentationMatrix, RepstoreError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| RepstoreError::Parse {
        line: 0,
        msg: "file too short for repb header".into(),
    })?;
    if &magic != REPB_MAGIC {
        return Err(RepstoreError::Parse {
            line: 0,
            msg: format!("bad magic {magic:?}, expected REPB"),
        });
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != REPB_VERSION {
        return Err(RepstoreError::Parse {
            line: 0,
            msg: format!("unsupported repb version {version}"),
        });
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let rows = u64::from_le_bytes(u64buf) as usize;
    r.read_exact(&mut u64buf)?;
    let cols = u64::from_le_bytes(u64buf) as usize;
    if rows == 0 || cols == 0 {
        return Err(RepstoreError::EmptyMatrix);
    }
    let count = rows.checked_mul(cols).ok_or_else(|| RepstoreError::Parse {
        line: 0,
        msg: "matrix dimensions overflow".into(),
    })?;
    let mut data = Vec::with_capacity(count);
    let mut f64buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut f64buf).map_err(|_| RepstoreError::Parse {
            line: 0,
            msg: format!("truncated repb payload, expected {count} values"),
        })?;
        data.push(f64::from_le_bytes(f64buf));
    }
    RepresentationMatrix::from_flat(data, rows, cols)
}

fn save_matrix_repb(matrix: &RepresentationMatrix, path: &Path) -> Result<(), RepstoreError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(REPB_MAGIC)?;
    w.write_all(&REPB_VERSION.to_le_bytes())?;
    w.write_all(&(matrix.n_samples() as u64).to_le_bytes())?;
    w.write_all(&(matrix.n_features() as u64).to_le_bytes())?;
    for v in matrix.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a labels CSV (`sample_id,class_label[,predicted_label]`).
pub fn load_labels(path: &Path) -> Result<LabelSet, RepstoreError> {
    let reader = BufReader::new(File::open(path)?);
    let mut ids = Vec::new();
    let mut class_labels = Vec::new();
    let mut predicted: Vec<u32> = Vec::new();
    let mut has_predicted: Option<bool> = None;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if line_no == 0 && trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(|f| f.trim()).collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(RepstoreError::Parse {
                line: line_no + 1,
                msg: format!("expected 2 or 3 columns, got {}", fields.len()),
            });
        }
        let with_pred = fields.len() == 3;
        match has_predicted {
            None => has_predicted = Some(with_pred),
            Some(prev) if prev != with_pred => {
                return Err(RepstoreError::Parse {
                    line: line_no + 1,
                    msg: "inconsistent column count across rows".into(),
                })
            }
            _ => {}
        }
        ids.push(fields[0].to_string());
        let class: u32 = fields[1].parse().map_err(|_| RepstoreError::Parse {
            line: line_no + 1,
            msg: format!("cannot parse class label '{}'", fields[1]),
        })?;
        class_labels.push(class);
        if with_pred {
            let p: u32 = fields[2].parse().map_err(|_| RepstoreError::Parse {
                line: line_no + 1,
                msg: format!("cannot parse predicted label '{}'", fields[2]),
            })?;
            predicted.push(p);
        }
    }
    if class_labels.is_empty() {
        return Err(RepstoreError::Parse {
            line: 0,
            msg: "labels file contains no rows".into(),
        });
    }
    let set = if has_predicted == Some(true) {
        LabelSet::with_predictions(class_labels, predicted)?
    } else {
        LabelSet::from_class_labels(class_labels)
    };
    set.with_sample_ids(ids)
}

/// Write a labels CSV; includes the predicted column when present.
pub fn save_labels(labels: &LabelSet, path: &Path) -> Result<(), RepstoreError> {
    let mut w = BufWriter::new(File::create(path)?);
    if labels.predicted_labels().is_some() {
        w.write_all(b"# sample_id,class_label,predicted_label\n")?;
    } else {
        w.write_all(b"# sample_id,class_label\n")?;
    }
    for i in 0..labels.len() {
        let id = match labels.sample_ids() {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        };
        match labels.predicted_labels() {
            Some(pred) => {
                writeln!(w, "{},{},{}", id, labels.class_labels()[i], pred[i])?;
            }
            None => {
                writeln!(w, "{},{}", id, labels.class_labels()[i])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
