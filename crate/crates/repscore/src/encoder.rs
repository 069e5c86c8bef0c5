//! Small dense encoder and projection head with hand-rolled forward and
//! reverse passes.
//!
//! The network is a layer list: every layer but the last belongs to the
//! encoder f, the last layer is the projection head g. The default
//! architecture is input r -> hidden (ReLU) -> representation l (ReLU)
//! -> projection m (linear); the final ReLU of f keeps representations
//! non-negative.
//!
//! The reverse pass accepts two upstream gradients: one at the projection
//! output Z and one injected directly at the representation output H,
//! because the training objective reads both tensors. It returns parameter
//! gradients and the gradient at the input, which the saliency module uses.
//!
//! Parameters serialize to a bit-exact little-endian binary format
//! (magic `RENC`), so a round trip through disk preserves every bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::repstore::{ProjectionMatrix, RepresentationMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("encoder needs at least 2 layers (f and g), got {0}")]
    TooFewLayers(usize),
    #[error("params I/O failed: {0}")]
    Io(String),
    #[error("params parse error: {0}")]
    Parse(String),
}

/// One dense layer: `out = act(W x + b)` with `W` stored row-major
/// (`n_out` rows of `n_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
    pub(crate) n_in: usize,
    pub(crate) n_out: usize,
    pub(crate) relu: bool,
}

impl Layer {
    pub fn new(w: Vec<f64>, b: Vec<f64>, n_in: usize, n_out: usize, relu: bool) -> Result<Self, EncoderError> {
        if w.len() != n_in * n_out || b.len() != n_out {
            return Err(EncoderError::ShapeMismatch(format!(
                "layer {n_out}x{n_in}: got {} weights, {} biases",
                w.len(),
                b.len()
            )));
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(EncoderError::NonFinite("layer parameters".into()));
        }
        Ok(Self { w, b, n_in, n_out, relu })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn is_relu(&self) -> bool {
        self.relu
    }

    /// Row-major weights, `n_out` rows of `n_in`.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn biases(&self) -> &[f64] {
        &self.b
    }
}

/// Dimensions of the default architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderShape {
    /// Input dimension r.
    pub input: usize,
    /// Hidden width of f.
    pub hidden: usize,
    /// Representation dimension l.
    pub repr: usize,
    /// Projection dimension m.
    pub proj: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        Self { input: 64, hidden: 128, repr: 32, proj: 16 }
    }
}

/// Encoder f plus projection head g as a validated layer list.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub(crate) layers: Vec<Layer>,
    init_seed: u64,
}

impl EncoderParams {
    /// Default three-layer network with He-scaled Gaussian weights and zero
    /// biases, deterministic in the seed.
    pub fn init(shape: EncoderShape, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut layer = |n_in: usize, n_out: usize, relu: bool| {
            let std = (2.0 / n_in as f64).sqrt();
            let w: Vec<f64> = (0..n_in * n_out)
                .map(|_| {
                    let g: f64 = rng.sample(StandardNormal);
                    g * std
                })
                .collect();
            Layer { w, b: vec![0.0; n_out], n_in, n_out, relu }
        };
        let layers = vec![
            layer(shape.input, shape.hidden, true),
            layer(shape.hidden, shape.repr, true),
            layer(shape.repr, shape.proj, false),
        ];
        Self { layers, init_seed: seed }
    }

    /// Build from an explicit layer list; all but the last form f.
    pub fn from_layers(layers: Vec<Layer>, init_seed: u64) -> Result<Self, EncoderError> {
        if layers.len() < 2 {
            return Err(EncoderError::TooFewLayers(layers.len()));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out != pair[1].n_in {
                return Err(EncoderError::ShapeMismatch(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].n_out, pair[1].n_in
                )));
            }
        }
        Ok(Self { layers, init_seed })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Input dimension r.
    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    /// Representation dimension l (output of f).
    pub fn repr_dim(&self) -> usize {
        self.layers[self.layers.len() - 2].n_out
    }

    /// Projection dimension m (output of g).
    pub fn proj_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    /// Total parameter count across all layers.
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.n_in == b.n_in
                    && a.n_out == b.n_out
                    && a.relu == b.relu
                    && a.w.iter().zip(&b.w).all(|(x, y)| x.to_bits() == y.to_bits())
                    && a.b.iter().zip(&b.b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        let io = |e: std::io::Error| EncoderError::Io(e.to_string());
        let f = File::create(path).map_err(io)?;
        let mut w = BufWriter::new(f);
        w.write_all(b"RENC").map_err(io)?;
        w.write_all(&1u32.to_le_bytes()).map_err(io)?;
        w.write_all(&self.init_seed.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes()).map_err(io)?;
        for layer in &self.layers {
            w.write_all(&(layer.n_in as u64).to_le_bytes()).map_err(io)?;
            w.write_all(&(layer.n_out as u64).to_le_bytes()).map_err(io)?;
            w.write_all(&[layer.relu as u8]).map_err(io)?;
            for v in layer.w.iter().chain(layer.b.iter()) {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let io = |e: std::io::Error| EncoderError::Io(e.to_string());
        let f = File::open(path).map_err(io)?;
        let mut r = BufReader::new(f);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != b"RENC" {
            return Err(EncoderError::Parse("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf).map_err(io)?;
        let version = u32::from_le_bytes(u32buf);
        if version != 1 {
            return Err(EncoderError::Parse(format!("unsupported version {version}")));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf).map_err(io)?;
        let init_seed = u64::from_le_bytes(u64buf);
        r.read_exact(&mut u32buf).map_err(io)?;
        let n_layers = u32::from_le_bytes(u32buf) as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            r.read_exact(&mut u64buf).map_err(io)?;
            let n_in = u64::from_le_bytes(u64buf) as usize;
            r.read_exact(&mut u64buf).map_err(io)?;
            let n_out = u64::from_le_bytes(u64buf) as usize;
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag).map_err(io)?;
            let count = n_in
                .checked_mul(n_out)
                .and_then(|c| c.checked_add(n_out))
                .ok_or_else(|| EncoderError::Parse("layer size overflows".into()))?;
            let mut values = Vec::with_capacity(count);
            let mut f64buf = [0u8; 8];
            for _ in 0..count {
                r.read_exact(&mut f64buf)
                    .map_err(|_| EncoderError::Parse("truncated layer data".into()))?;
                values.push(f64::from_le_bytes(f64buf));
            }
            let b = values.split_off(n_in * n_out);
            layers.push(Layer::new(values, b, n_in, n_out, flag[0] != 0)?);
        }
        Self::from_layers(layers, init_seed)
    }
}

/// Activations recorded by a forward pass, for the reverse pass.
///
/// `activations[0]` is the flattened input batch; `activations[k+1]` is the
/// post-activation output of layer k. `pre[k]` is layer k's pre-activation.
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    n_rows: usize,
}

impl ForwardCache {
    /// Representation batch H (output of f), flattened row-major.
    pub fn h_flat(&self) -> &[f64] {
        &self.activations[self.activations.len() - 2]
    }

    /// Projection batch Z (output of g), flattened row-major.
    pub fn z_flat(&self) -> &[f64] {
        &self.activations[self.activations.len() - 1]
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Pre-activation buffer of layer `k`, flattened row-major.
    pub fn pre_activations(&self, k: usize) -> &[f64] {
        &self.pre[k]
    }
}

/// Forward pass retaining every intermediate tensor.
pub fn forward(params: &EncoderParams, inputs: &RepresentationMatrix) -> Result<ForwardCache, EncoderError> {
    if inputs.n_features() != params.input_dim() {
        return Err(EncoderError::ShapeMismatch(format!(
            "inputs have {} features, encoder expects {}",
            inputs.n_features(),
            params.input_dim()
        )));
    }
    let n = inputs.n_samples();
    let mut activations = vec![inputs.as_slice().to_vec()];
    let mut pre = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let x = activations.last().unwrap();
        let mut out = vec![0.0; n * layer.n_out];
        for row in 0..n {
            let xr = &x[row * layer.n_in..(row + 1) * layer.n_in];
            let or = &mut out[row * layer.n_out..(row + 1) * layer.n_out];
            for (j, oj) in or.iter_mut().enumerate() {
                let wr = &layer.w[j * layer.n_in..(j + 1) * layer.n_in];
                let mut acc = layer.b[j];
                for (wv, xv) in wr.iter().zip(xr) {
                    acc += wv * xv;
                }
                *oj = acc;
            }
        }
        pre.push(out.clone());
        if layer.relu {
            for v in &mut out {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        activations.push(out);
    }
    Ok(ForwardCache { activations, pre, n_rows: n })
}

/// Representations H and projections Z for a batch of inputs.
pub fn encode(
    params: &EncoderParams,
    inputs: &RepresentationMatrix,
) -> Result<(RepresentationMatrix, ProjectionMatrix), EncoderError> {
    let cache = forward(params, inputs)?;
    let h = RepresentationMatrix::from_flat(cache.h_flat().to_vec(), cache.n_rows, params.repr_dim())
        .map_err(|e| EncoderError::NonFinite(format!("representations: {e}")))?;
    let z = ProjectionMatrix::from_flat(cache.z_flat().to_vec(), cache.n_rows, params.proj_dim())
        .map_err(|e| EncoderError::NonFinite(format!("projections: {e}")))?;
    Ok((h, z))
}

/// Parameter gradients, mirroring the layer list.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub(crate) dw: Vec<Vec<f64>>,
    pub(crate) db: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Self {
            dw: params.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            db: params.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dw
            .iter()
            .flatten()
            .chain(self.db.iter().flatten())
            .all(|v| v.is_finite())
    }

    /// Weight gradients of layer `k`, same layout as `Layer::weights`.
    pub fn dw(&self, k: usize) -> &[f64] {
        &self.dw[k]
    }

    /// Bias gradients of layer `k`.
    pub fn db(&self, k: usize) -> &[f64] {
        &self.db[k]
    }

    /// Elementwise sum, in a fixed order for deterministic accumulation.
    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Reverse pass. `d_z` is the upstream gradient at the projection output
/// (n x m flat), `d_h` an extra gradient injected at the representation
/// output (n x l flat). Returns parameter gradients and the gradient at
/// the input batch (n x r flat).
pub fn backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    d_z: &[f64],
    d_h: &[f64],
) -> Result<(ParamGrads, Vec<f64>), EncoderError> {
    let n = cache.n_rows;
    let n_layers = params.layers.len();
    if d_z.len() != n * params.proj_dim() {
        return Err(EncoderError::ShapeMismatch(format!(
            "d_z has {} entries, expected {}",
            d_z.len(),
            n * params.proj_dim()
        )));
    }
    if d_h.len() != n * params.repr_dim() {
        return Err(EncoderError::ShapeMismatch(format!(
            "d_h has {} entries, expected {}",
            d_h.len(),
            n * params.repr_dim()
        )));
    }
    let mut grads = ParamGrads::zeros_like(params);
    let mut upstream = d_z.to_vec();
    for (idx, layer) in params.layers.iter().enumerate().rev() {
        // gate through the activation
        if layer.relu {
            let pre = &cache.pre[idx];
            for (u, p) in upstream.iter_mut().zip(pre) {
                if *p <= 0.0 {
                    *u = 0.0;
                }
            }
        }
        let x = &cache.activations[idx];
        let dw = &mut grads.dw[idx];
        let db = &mut grads.db[idx];
        let mut d_x = vec![0.0; n * layer.n_in];
        for row in 0..n {
            let ur = &upstream[row * layer.n_out..(row + 1) * layer.n_out];
            let xr = &x[row * layer.n_in..(row + 1) * layer.n_in];
            let dxr = &mut d_x[row * layer.n_in..(row + 1) * layer.n_in];
            for (j, &uj) in ur.iter().enumerate() {
                db[j] += uj;
                if uj == 0.0 {
                    continue;
                }
                let wr = &layer.w[j * layer.n_in..(j + 1) * layer.n_in];
                let dwr = &mut dw[j * layer.n_in..(j + 1) * layer.n_in];
                for k in 0..layer.n_in {
                    dwr[k] += uj * xr[k];
                    dxr[k] += uj * wr[k];
                }
            }
        }
        upstream = d_x;
        if idx == n_layers - 1 {
            // entering the encoder: add the gradient injected at H
            for (u, dh) in upstream.iter_mut().zip(d_h) {
                *u += dh;
            }
        }
    }
    Ok((grads, upstream))
}

/// Momentum buffers for plain SGD: `v <- mu v + g`, `theta <- theta - lr v`.
#[derive(Debug, Clone)]
pub struct MomentumState {
    velocity_w: Vec<Vec<f64>>,
    velocity_b: Vec<Vec<f64>>,
}

impl MomentumState {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            velocity_w: params.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            velocity_b: params.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn apply(
        &mut self,
        params: &mut EncoderParams,
        grads: &ParamGrads,
        lr: f64,
        momentum: f64,
    ) {
        for (idx, layer) in params.layers.iter_mut().enumerate() {
            for ((w, v), g) in layer
                .w
                .iter_mut()
                .zip(&mut self.velocity_w[idx])
                .zip(&grads.dw[idx])
            {
                *v = momentum * *v + g;
                *w -= lr * *v;
            }
            for ((b, v), g) in layer
                .b
                .iter_mut()
                .zip(&mut self.velocity_b[idx])
                .zip(&grads.db[idx])
            {
                *v = momentum * *v + g;
                *b -= lr * *v;
            }
        }
    }
}
