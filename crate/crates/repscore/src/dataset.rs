//! Synthetic desk-scale dataset: class templates with per-sample noise,
//! plus the two-view augmentation used for contrastive training.
//!
//! Each class gets a template drawn uniformly from [0,1]^r. A sample is its
//! class template plus Gaussian perturbation, clamped back to [0,1]. The
//! perturbation scale is drawn per sample from a configurable range, so
//! some samples sit close to their template and others are heavily
//! corrupted; that spread is what downstream quality metrics should
//! detect.
//!
//! Augmentation produces two views per sample: additive Gaussian noise and
//! a global scale jitter, then a fixed count of coordinates forced to zero
//! (so a mask fraction of 0.25 on r=100 zeroes exactly 25 coordinates).
//! Everything is deterministic in the seeds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::repstore::RepresentationMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
}

/// Two-view augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Fraction of coordinates zeroed per view; the count is `round(f * r)`.
    pub mask_fraction: f64,
    /// Standard deviation of the additive noise.
    pub sigma_noise: f64,
    /// Half-width of the multiplicative jitter: scale in [1-j, 1+j].
    pub scale_jitter: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { mask_fraction: 0.25, sigma_noise: 0.05, scale_jitter: 0.1 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |msg: String| Err(DatasetError::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return bad(format!("mask_fraction must lie in [0,1], got {}", self.mask_fraction));
        }
        if !(self.sigma_noise >= 0.0 && self.sigma_noise.is_finite()) {
            return bad(format!("sigma_noise must be finite and >= 0, got {}", self.sigma_noise));
        }
        if !(0.0..1.0).contains(&self.scale_jitter) {
            return bad(format!("scale_jitter must lie in [0,1), got {}", self.scale_jitter));
        }
        Ok(())
    }

    fn one_view(&self, sample: &[f64], rng: &mut ChaCha12Rng) -> Vec<f64> {
        let r = sample.len();
        let scale = if self.scale_jitter > 0.0 {
            rng.random_range(1.0 - self.scale_jitter..1.0 + self.scale_jitter)
        } else {
            1.0
        };
        let mut view: Vec<f64> = sample
            .iter()
            .map(|&x| {
                let noise: f64 = rng.sample(StandardNormal);
                scale * (x + self.sigma_noise * noise)
            })
            .collect();
        let n_mask = (self.mask_fraction * r as f64).round() as usize;
        if n_mask > 0 {
            let mut indices: Vec<usize> = (0..r).collect();
            for i in 0..n_mask.min(r) {
                let j = rng.random_range(i..r);
                indices.swap(i, j);
                view[indices[i]] = 0.0;
            }
        }
        view
    }

    /// Two independently transformed views, deterministic in the seed.
    pub fn augment(&self, sample: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let v1 = self.one_view(sample, &mut rng);
        let v2 = self.one_view(sample, &mut rng);
        (v1, v2)
    }
}

/// Generation parameters for a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub k_classes: usize,
    pub n_per_class: usize,
    /// Input dimension r.
    pub input_dim: usize,
    /// Per-sample perturbation scale range [noise_lo, noise_hi].
    pub noise_lo: f64,
    pub noise_hi: f64,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            k_classes: 8,
            n_per_class: 64,
            input_dim: 64,
            noise_lo: 0.05,
            noise_hi: 0.9,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |msg: String| Err(DatasetError::InvalidConfig(msg));
        if self.k_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.k_classes));
        }
        if self.n_per_class < 2 {
            return bad(format!("need at least 2 samples per class, got {}", self.n_per_class));
        }
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if !(0.0 <= self.noise_lo && self.noise_lo <= self.noise_hi && self.noise_hi.is_finite()) {
            return bad(format!(
                "noise range must satisfy 0 <= lo <= hi, got [{}, {}]",
                self.noise_lo, self.noise_hi
            ));
        }
        self.augment.validate()
    }
}

/// A labeled slice of a dataset (train or test side of a split).
#[derive(Debug, Clone)]
pub struct DatasetSlice {
    pub inputs: RepresentationMatrix,
    pub class_labels: Vec<u32>,
    /// Positions in the parent dataset.
    pub indices: Vec<usize>,
}

/// Generated samples in class-major order with their labels and the
/// augmentation config they were built for.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    samples: RepresentationMatrix,
    class_labels: Vec<u32>,
    noise_sigmas: Vec<f64>,
    config: DatasetConfig,
}

impl SyntheticDataset {
    pub fn generate(config: &DatasetConfig) -> Result<Self, DatasetError> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let r = config.input_dim;
        let templates: Vec<Vec<f64>> = (0..config.k_classes)
            .map(|_| (0..r).map(|_| rng.random::<f64>()).collect())
            .collect();
        let n_total = config.k_classes * config.n_per_class;
        let mut data = Vec::with_capacity(n_total * r);
        let mut class_labels = Vec::with_capacity(n_total);
        let mut noise_sigmas = Vec::with_capacity(n_total);
        for (class, template) in templates.iter().enumerate() {
            for _ in 0..config.n_per_class {
                let sigma = if config.noise_hi > config.noise_lo {
                    config.noise_lo + (config.noise_hi - config.noise_lo) * rng.random::<f64>()
                } else {
                    config.noise_lo
                };
                noise_sigmas.push(sigma);
                class_labels.push(class as u32);
                for &t in template {
                    let g: f64 = rng.sample(StandardNormal);
                    data.push((t + sigma * g).clamp(0.0, 1.0));
                }
            }
        }
        let samples = RepresentationMatrix::from_flat(data, n_total, r)
            .expect("generated samples are finite by construction");
        Ok(Self { samples, class_labels, noise_sigmas, config: *config })
    }

    pub fn samples(&self) -> &RepresentationMatrix {
        &self.samples
    }

    pub fn class_labels(&self) -> &[u32] {
        &self.class_labels
    }

    /// Perturbation scale drawn for each sample.
    pub fn noise_sigmas(&self) -> &[f64] {
        &self.noise_sigmas
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.class_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_labels.is_empty()
    }

    /// Two augmented views of sample `i`, deterministic in the seed.
    pub fn augment_sample(&self, i: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        self.config.augment.augment(self.samples.row(i), seed)
    }

    /// Stratified split: the first `round(fraction * n)` samples of each
    /// class go to the first slice, the rest to the second.
    pub fn stratified_split(&self, train_fraction: f64) -> Result<(DatasetSlice, DatasetSlice), DatasetError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(DatasetError::InvalidConfig(format!(
                "train_fraction must lie in (0,1), got {train_fraction}"
            )));
        }
        let per = self.config.n_per_class;
        let n_train = ((per as f64) * train_fraction).round() as usize;
        if n_train == 0 || n_train == per {
            return Err(DatasetError::InvalidConfig(format!(
                "train_fraction {train_fraction} leaves an empty split for {per} samples per class"
            )));
        }
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for class in 0..self.config.k_classes {
            let base = class * per;
            train_idx.extend(base..base + n_train);
            test_idx.extend(base + n_train..base + per);
        }
        Ok((self.slice(&train_idx), self.slice(&test_idx)))
    }

    fn slice(&self, indices: &[usize]) -> DatasetSlice {
        let r = self.samples.n_features();
        let mut data = Vec::with_capacity(indices.len() * r);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.samples.row(i));
            labels.push(self.class_labels[i]);
        }
        DatasetSlice {
            inputs: RepresentationMatrix::from_flat(data, indices.len(), r)
                .expect("slicing preserves finiteness"),
            class_labels: labels,
            indices: indices.to_vec(),
        }
    }
}

/// Dataset with default noise and augmentation settings.
pub fn generate_dataset(
    k_classes: usize,
    n_per_class: usize,
    input_dim: usize,
    seed: u64,
) -> Result<SyntheticDataset, DatasetError> {
    SyntheticDataset::generate(&DatasetConfig {
        k_classes,
        n_per_class,
        input_dim,
        seed,
        ..DatasetConfig::default()
    })
}
