//! Gradient heatmaps: how strongly each input coordinate drives one
//! representation feature. The raw gradient of h_k with respect to the
//! input is computed by the exact reverse pass with ReLU masks frozen at
//! the evaluation point, then rescaled to [0,1] by its largest magnitude.
//!
//! Exports are a plain CSV of the normalized values and, for inputs whose
//! length is a perfect square, an ASCII PGM rendering the map as a
//! grayscale grid.

use std::io::Write;

use thiserror::Error;

use crate::encoder::{backward, forward, EncoderError, EncoderParams};
use crate::eval::ClassProfile;
use crate::repstore::RepresentationMatrix;

#[derive(Debug, Error)]
pub enum SaliencyError {
    #[error("feature index {index} out of range for {dim} representation features")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("class profile has no mean representation")]
    EmptyProfile,
    #[error("saliency input is not finite")]
    NonFinite,
    #[error("input length {0} is not a perfect square, cannot render as a grid")]
    NotSquare(usize),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("saliency I/O failed: {0}")]
    Io(String),
}

/// A normalized heatmap over one sample's input coordinates.
///
/// Values are non-negative with maximum 1, except for an identically zero
/// raw gradient, which stays all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    values: Vec<f64>,
    feature_index: usize,
    sample_id: String,
}

impl SaliencyMap {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn feature_index(&self) -> usize {
        self.feature_index
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }
}

/// Raw gradient of representation feature `k` with respect to the input,
/// evaluated at `sample` with the ReLU masks frozen there.
pub fn feature_gradient(
    params: &EncoderParams,
    sample: &[f64],
    k: usize,
) -> Result<Vec<f64>, SaliencyError> {
    let l = params.repr_dim();
    if k >= l {
        return Err(SaliencyError::IndexOutOfRange { index: k, dim: l });
    }
    let input = RepresentationMatrix::from_flat(sample.to_vec(), 1, sample.len())
        .map_err(|_| SaliencyError::NonFinite)?;
    let cache = forward(params, &input)?;
    let d_z = vec![0.0; params.proj_dim()];
    let mut d_h = vec![0.0; l];
    d_h[k] = 1.0;
    let (_, d_input) = backward(params, &cache, &d_z, &d_h)?;
    Ok(d_input)
}

/// Scale a raw gradient to a heatmap: absolute values divided by their
/// maximum. An all-zero gradient is preserved as all zeros.
pub fn normalize_saliency(
    raw: &[f64],
    feature_index: usize,
    sample_id: impl Into<String>,
) -> Result<SaliencyMap, SaliencyError> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(SaliencyError::NonFinite);
    }
    let mut values: Vec<f64> = raw.iter().map(|v| v.abs()).collect();
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    Ok(SaliencyMap { values, feature_index, sample_id: sample_id.into() })
}

/// Gradient plus normalization in one step.
pub fn saliency_map(
    params: &EncoderParams,
    sample: &[f64],
    k: usize,
    sample_id: impl Into<String>,
) -> Result<SaliencyMap, SaliencyError> {
    let raw = feature_gradient(params, sample, k)?;
    normalize_saliency(&raw, k, sample_id)
}

/// The feature that dominates a class: argmax by magnitude of the class's
/// correctly-classified mean representation, lowest index on ties.
pub fn dominant_feature_index(profile: &ClassProfile) -> Result<usize, SaliencyError> {
    let mean = profile.correct_mean.as_ref().ok_or(SaliencyError::EmptyProfile)?;
    if mean.is_empty() {
        return Err(SaliencyError::EmptyProfile);
    }
    let mut best = 0;
    for (j, v) in mean.iter().enumerate() {
        if v.abs() > mean[best].abs() {
            best = j;
        }
    }
    Ok(best)
}

/// True when any ReLU pre-activation at `sample` has magnitude below
/// `tol`: the gradient sits next to a kink there and finite differences
/// are unreliable.
pub fn near_relu_kink(
    params: &EncoderParams,
    sample: &[f64],
    tol: f64,
) -> Result<bool, SaliencyError> {
    let input = RepresentationMatrix::from_flat(sample.to_vec(), 1, sample.len())
        .map_err(|_| SaliencyError::NonFinite)?;
    let cache = forward(params, &input)?;
    for (k, layer) in params.layers().iter().enumerate() {
        if !layer.is_relu() {
            continue;
        }
        if cache.pre_activations(k).iter().any(|v| v.abs() < tol) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Write the normalized values as CSV, one `index,value` line per
/// coordinate.
pub fn write_saliency_csv<W: Write>(map: &SaliencyMap, mut w: W) -> Result<(), SaliencyError> {
    let io = |e: std::io::Error| SaliencyError::Io(e.to_string());
    writeln!(
        w,
        "# index,value (sample_id={}, feature={})",
        map.sample_id, map.feature_index
    )
    .map_err(io)?;
    for (i, v) in map.values.iter().enumerate() {
        writeln!(w, "{i},{v:.16e}").map_err(io)?;
    }
    Ok(())
}

/// Render a square map as ASCII PGM, gray level `round(255 * value)`.
///
/// Fails with `NotSquare` when the input length has no integer square
/// root.
pub fn write_saliency_pgm<W: Write>(map: &SaliencyMap, mut w: W) -> Result<(), SaliencyError> {
    let n = map.values.len();
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || n == 0 {
        return Err(SaliencyError::NotSquare(n));
    }
    let io = |e: std::io::Error| SaliencyError::Io(e.to_string());
    writeln!(w, "P2").map_err(io)?;
    writeln!(w, "# sample_id={} feature={}", map.sample_id, map.feature_index).map_err(io)?;
    writeln!(w, "{side} {side}").map_err(io)?;
    writeln!(w, "255").map_err(io)?;
    for row in map.values.chunks(side) {
        let line: Vec<String> = row
            .iter()
            .map(|v| format!("{}", (255.0 * v).round() as u32))
            .collect();
        writeln!(w, "{}", line.join(" ")).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderShape, Layer};
    use proptest::prelude::*;

    fn lcg_stream(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    /// f = one ReLU layer with the given weights, g = fixed small head.
    fn two_layer(params_w: Vec<f64>, n_in: usize, n_out: usize) -> EncoderParams {
        let f = Layer::new(params_w, vec![0.0; n_out], n_in, n_out, true).unwrap();
        let g = Layer::new(vec![0.1; 2 * n_out], vec![0.0; 2], n_out, 2, false).unwrap();
        EncoderParams::from_layers(vec![f, g], 0).unwrap()
    }

    #[test]
    fn linear_case_gradient_equals_weight_row() {
        // positive weights and positive inputs keep every ReLU active
        let w = vec![
            0.5, 1.0, 0.25, //
            2.0, 0.125, 0.75,
        ];
        let params = two_layer(w.clone(), 3, 2);
        let sample = [1.0, 2.0, 3.0];
        let g0 = feature_gradient(&params, &sample, 0).unwrap();
        let g1 = feature_gradient(&params, &sample, 1).unwrap();
        assert_eq!(g0, w[0..3].to_vec());
        assert_eq!(g1, w[3..6].to_vec());
    }

    #[test]
    fn linear_case_map_equals_normalized_weight_row() {
        let w = vec![
            0.5, 1.0, 0.25, //
            2.0, 0.125, 0.75,
        ];
        let params = two_layer(w, 3, 2);
        let map = saliency_map(&params, &[1.0, 2.0, 3.0], 1, "s0").unwrap();
        assert_eq!(map.values(), &[1.0, 0.0625, 0.375]);
        assert_eq!(map.feature_index(), 1);
        assert_eq!(map.sample_id(), "s0");
    }

    #[test]
    fn dead_relu_gives_zero_gradient() {
        // negative pre-activation for both features at this sample
        let params = two_layer(vec![-1.0, -1.0, -2.0, -0.5], 2, 2);
        let raw = feature_gradient(&params, &[1.0, 1.0], 0).unwrap();
        assert_eq!(raw, vec![0.0, 0.0]);
        let map = normalize_saliency(&raw, 0, "dead").unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_feature_rejected() {
        let params = two_layer(vec![1.0; 4], 2, 2);
        assert!(matches!(
            feature_gradient(&params, &[1.0, 1.0], 2),
            Err(SaliencyError::IndexOutOfRange { index: 2, dim: 2 })
        ));
    }

    #[test]
    fn finite_differences_match_away_from_kinks() {
        let shape = EncoderShape { input: 10, hidden: 12, repr: 8, proj: 4 };
        let params = EncoderParams::init(shape, 21);
        let mut next = lcg_stream(5);
        let step = 1e-6;
        let mut checked = 0usize;
        let mut agreeing = 0usize;
        for trial in 0..5 {
            let sample: Vec<f64> = (0..10).map(|_| next() * 2.0 - 1.0).collect();
            let k = trial % 8;
            let analytic = feature_gradient(&params, &sample, k).unwrap();
            for j in 0..10 {
                let mut plus = sample.clone();
                plus[j] += step;
                let mut minus = sample.clone();
                minus[j] -= step;
                if near_relu_kink(&params, &sample, 1e-6).unwrap()
                    || near_relu_kink(&params, &plus, 1e-6).unwrap()
                    || near_relu_kink(&params, &minus, 1e-6).unwrap()
                {
                    continue;
                }
                let h_at = |x: &[f64]| {
                    let m = RepresentationMatrix::from_flat(x.to_vec(), 1, 10).unwrap();
                    forward(&params, &m).unwrap().h_flat()[k]
                };
                let fd = (h_at(&plus) - h_at(&minus)) / (2.0 * step);
                let denom = analytic[j].abs().max(fd.abs()).max(1e-3);
                checked += 1;
                if (analytic[j] - fd).abs() / denom <= 1e-4 {
                    agreeing += 1;
                }
            }
        }
        assert!(checked >= 20, "kink filter removed too many coordinates");
        assert!(
            agreeing as f64 >= 0.95 * checked as f64,
            "{agreeing} of {checked} coordinates agree"
        );
    }

    #[test]
    fn normalize_fixture() {
        let map = normalize_saliency(&[-2.0, 1.0, 0.0], 0, "x").unwrap();
        assert_eq!(map.values(), &[1.0, 0.5, 0.0]);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(matches!(
            normalize_saliency(&[1.0, f64::NAN], 0, "x"),
            Err(SaliencyError::NonFinite)
        ));
    }

    #[test]
    fn dominant_feature_fixtures() {
        let profile = |mean: Vec<f64>| ClassProfile {
            class_id: 0,
            correct_mean: Some(mean),
            incorrect_mean: None,
            accuracy: 1.0,
            n_samples: 1,
        };
        assert_eq!(dominant_feature_index(&profile(vec![0.0, 7.0, 3.0])).unwrap(), 1);
        assert_eq!(dominant_feature_index(&profile(vec![5.0, 5.0])).unwrap(), 0);
        // magnitude, not signed value
        assert_eq!(dominant_feature_index(&profile(vec![1.0, -9.0, 3.0])).unwrap(), 1);
        let empty = ClassProfile {
            class_id: 0,
            correct_mean: None,
            incorrect_mean: Some(vec![1.0]),
            accuracy: 0.0,
            n_samples: 1,
        };
        assert!(matches!(
            dominant_feature_index(&empty),
            Err(SaliencyError::EmptyProfile)
        ));
    }

    #[test]
    fn dominant_feature_matches_scan_oracle() {
        let mut next = lcg_stream(99);
        for _ in 0..50 {
            let mean: Vec<f64> = (0..16).map(|_| next() * 4.0 - 2.0).collect();
            let profile = ClassProfile {
                class_id: 3,
                correct_mean: Some(mean.clone()),
                incorrect_mean: None,
                accuracy: 0.5,
                n_samples: 4,
            };
            let got = dominant_feature_index(&profile).unwrap();
            let mut oracle = 0;
            let mut best = -1.0;
            for (j, v) in mean.iter().enumerate() {
                if v.abs() > best {
                    best = v.abs();
                    oracle = j;
                }
            }
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn pgm_fixture() {
        let map = normalize_saliency(&[1.0, 0.5, 0.0, 0.25], 2, "s7").unwrap();
        let mut out = Vec::new();
        write_saliency_pgm(&map, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "P2\n# sample_id=s7 feature=2\n2 2\n255\n255 128\n0 64\n"
        );
    }

    #[test]
    fn pgm_rejects_non_square() {
        let map = normalize_saliency(&[1.0, 0.5, 0.0], 0, "s").unwrap();
        assert!(matches!(
            write_saliency_pgm(&map, Vec::new()),
            Err(SaliencyError::NotSquare(3))
        ));
    }

    #[test]
    fn csv_layout() {
        let map = normalize_saliency(&[0.5, 1.0], 4, "s1").unwrap();
        let mut out = Vec::new();
        write_saliency_csv(&map, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# index,value (sample_id=s1, feature=4)");
        assert_eq!(lines[1], "0,5.0000000000000000e-1");
        assert_eq!(lines[2], "1,1.0000000000000000e0");
    }

    proptest! {
        #[test]
        fn normalization_max_is_zero_or_one(
            raw in proptest::collection::vec(-1e3f64..1e3, 1..40)
        ) {
            let map = normalize_saliency(&raw, 0, "p").unwrap();
            let max = map.values().iter().cloned().fold(0.0f64, f64::max);
            prop_assert!(max == 0.0 || max == 1.0);
            prop_assert!(map.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn normalization_idempotent(
            raw in proptest::collection::vec(-1e3f64..1e3, 1..40)
        ) {
            let once = normalize_saliency(&raw, 0, "p").unwrap();
            let twice = normalize_saliency(once.values(), 0, "p").unwrap();
            prop_assert_eq!(once.values(), twice.values());
        }

        #[test]
        fn normalization_positively_homogeneous(
            raw in proptest::collection::vec(-1e2f64..1e2, 1..20),
            c in 1e-3f64..1e3
        ) {
            let scaled: Vec<f64> = raw.iter().map(|v| c * v).collect();
            let a = normalize_saliency(&raw, 0, "p").unwrap();
            let b = normalize_saliency(&scaled, 0, "p").unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 4.0 * f64::EPSILON);
            }
        }
    }
}
