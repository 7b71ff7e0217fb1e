//! Shallow x-vector network for two-class spoof detection.
//!
//! Architecture (four hidden layers):
//! 1. TDNN over frame offsets {-2,-1,0,1,2}, affine + ReLU
//! 2. TDNN over frame offsets {-2,0,2}, affine + ReLU
//! 3. Statistics pooling: per-dimension mean and standard deviation
//! 4. Embedding affine + ReLU
//! followed by a 2-way softmax output. Pooling turns any utterance of at
//! least 9 frames into a fixed-length vector, so one trained model scores
//! variable-length inputs. Training minimizes the focal loss; scores are
//! bonafide/spoof log-posterior ratios.

mod io;
mod train;

pub use io::{read_xvector, write_xvector};
pub use train::{train, TrainConfig, TrainState};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::protocol::TrialScore;

pub const TDNN1_OFFSETS: [isize; 5] = [-2, -1, 0, 1, 2];
pub const TDNN2_OFFSETS: [isize; 3] = [-2, 0, 2];
/// Total temporal receptive field of the two TDNN layers.
pub const MIN_FRAMES: usize = 9;
/// Pooled standard deviations are floored here (constant input, T = 1).
pub const STD_FLOOR: f64 = 1e-5;
const STD_EPS: f64 = 1e-10;
const PROB_CLAMP: f64 = 1e-7;

/// Focal loss hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalLossParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        Self { alpha: 1.0, gamma: 2.0 }
    }
}

/// Focal loss for a binary decision.
///
/// `p` is the network's bonafide posterior, `y` is 1 for a bonafide label
/// and 0 for spoof. With `gamma = 0` and `alpha = 1` this is exactly binary
/// cross-entropy; `p` is clamped to `[1e-7, 1 - 1e-7]`, so the result is
/// always finite and non-negative.
pub fn focal_loss(p: f64, y: u8, params: &FocalLossParams) -> f64 {
    assert!(params.alpha > 0.0 && params.gamma >= 0.0, "invalid focal loss parameters");
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let term = if y == 1 {
        (1.0 - p).powf(params.gamma) * p.ln()
    } else {
        p.powf(params.gamma) * (1.0 - p).ln()
    };
    -params.alpha * term
}

/// d(focal_loss)/dp at an already-clamped `p`; zero outside the clamp range.
fn focal_loss_grad_p(p_raw: f64, y: u8, params: &FocalLossParams) -> f64 {
    if p_raw < PROB_CLAMP || p_raw > 1.0 - PROB_CLAMP {
        return 0.0;
    }
    let p = p_raw;
    let (alpha, gamma) = (params.alpha, params.gamma);
    if y == 1 {
        let modulator = (1.0 - p).powf(gamma);
        let focus = if gamma == 0.0 {
            0.0
        } else {
            gamma * (1.0 - p).powf(gamma - 1.0) * p.ln()
        };
        alpha * focus - alpha * modulator / p
    } else {
        let modulator = p.powf(gamma);
        let focus = if gamma == 0.0 {
            0.0
        } else {
            gamma * p.powf(gamma - 1.0) * (1.0 - p).ln()
        };
        -alpha * focus + alpha * modulator / (1.0 - p)
    }
}

/// Layer widths of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XVectorDims {
    pub input_dim: usize,
    pub h1: usize,
    pub h2: usize,
    pub embed_dim: usize,
}

impl XVectorDims {
    pub fn new(input_dim: usize, h1: usize, h2: usize, embed_dim: usize) -> Self {
        Self { input_dim, h1, h2, embed_dim }
    }
}

/// All trainable parameters. Output node 0 is bonafide, node 1 spoof.
#[derive(Debug, Clone, PartialEq)]
pub struct XVectorModel {
    dims: XVectorDims,
    kind: FeatureKind,
    config_digest: String,
    pub(crate) w1: Array2<f64>,
    pub(crate) b1: Array1<f64>,
    pub(crate) w2: Array2<f64>,
    pub(crate) b2: Array1<f64>,
    pub(crate) w_emb: Array2<f64>,
    pub(crate) b_emb: Array1<f64>,
    pub(crate) w_out: Array2<f64>,
    pub(crate) b_out: Array1<f64>,
}

/// Per-parameter gradients (or momentum buffers), same shapes as the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_emb: Array2<f64>,
    pub b_emb: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &XVectorModel) -> Self {
        Self {
            w1: Array2::zeros(model.w1.raw_dim()),
            b1: Array1::zeros(model.b1.raw_dim()),
            w2: Array2::zeros(model.w2.raw_dim()),
            b2: Array1::zeros(model.b2.raw_dim()),
            w_emb: Array2::zeros(model.w_emb.raw_dim()),
            b_emb: Array1::zeros(model.b_emb.raw_dim()),
            w_out: Array2::zeros(model.w_out.raw_dim()),
            b_out: Array1::zeros(model.b_out.raw_dim()),
        }
    }

    /// `self += other * scale`, in fixed parameter order.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        self.w1.scaled_add(scale, &other.w1);
        self.b1.scaled_add(scale, &other.b1);
        self.w2.scaled_add(scale, &other.w2);
        self.b2.scaled_add(scale, &other.b2);
        self.w_emb.scaled_add(scale, &other.w_emb);
        self.b_emb.scaled_add(scale, &other.b_emb);
        self.w_out.scaled_add(scale, &other.w_out);
        self.b_out.scaled_add(scale, &other.b_out);
    }

    pub fn scale(&mut self, factor: f64) {
        for arr in [&mut self.w1, &mut self.w2, &mut self.w_emb, &mut self.w_out] {
            arr.mapv_inplace(|v| v * factor);
        }
        for arr in [&mut self.b1, &mut self.b2, &mut self.b_emb, &mut self.b_out] {
            arr.mapv_inplace(|v| v * factor);
        }
    }
}

/// Context stacking for a TDNN layer: row `t` of the output concatenates the
/// input rows `t + (offset - min_offset)` for each offset.
fn context_stack(x: &ArrayView2<f64>, offsets: &[isize]) -> Array2<f64> {
    let min = offsets.iter().min().unwrap();
    let span = (offsets.iter().max().unwrap() - min) as usize;
    let t_out = x.nrows() - span;
    let d = x.ncols();
    let mut out = Array2::<f64>::zeros((t_out, offsets.len() * d));
    for t in 0..t_out {
        for (j, off) in offsets.iter().enumerate() {
            let src = t + (off - min) as usize;
            out.row_mut(t)
                .slice_mut(ndarray::s![j * d..(j + 1) * d])
                .assign(&x.row(src));
        }
    }
    out
}

fn span_of(offsets: &[isize]) -> usize {
    (offsets.iter().max().unwrap() - offsets.iter().min().unwrap()) as usize
}

/// One TDNN layer: valid (no padding) affine map over stacked context
/// frames followed by ReLU. `weights` is `(offsets.len() * D_in, H)`.
pub fn tdnn_forward(
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    offsets: &[isize],
    frames: &ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let span = span_of(offsets);
    if frames.nrows() <= span {
        return Err(Error::UtteranceTooShort {
            frames: frames.nrows(),
            min: span + 1,
        });
    }
    if weights.nrows() != offsets.len() * frames.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "TDNN weights expect {} stacked inputs, got {}",
            weights.nrows(),
            offsets.len() * frames.ncols()
        )));
    }
    let stacked = context_stack(frames, offsets);
    let mut z = stacked.dot(weights);
    z += &bias.broadcast((z.nrows(), bias.len())).unwrap();
    z.mapv_inplace(|v| v.max(0.0));
    Ok(z)
}

/// Statistics pooling: concatenation of per-dimension mean and population
/// standard deviation, `sqrt(var + 1e-10)` floored at 1e-5. `H` columns in,
/// `2H` values out; invariant to frame order.
pub fn stats_pooling(frames: &ArrayView2<f64>) -> Array1<f64> {
    let t = frames.nrows() as f64;
    let h = frames.ncols();
    let mean = frames.sum_axis(Axis(0)) / t;
    let mut out = Array1::<f64>::zeros(2 * h);
    for d in 0..h {
        out[d] = mean[d];
    }
    for d in 0..h {
        let var = frames.column(d).iter().map(|v| (v - mean[d]).powi(2)).sum::<f64>() / t;
        out[h + d] = (var + STD_EPS).sqrt().max(STD_FLOOR);
    }
    out
}

struct ForwardCache {
    stacked1: Array2<f64>,
    z1: Array2<f64>,
    stacked2: Array2<f64>,
    z2: Array2<f64>,
    a2: Array2<f64>,
    mean: Array1<f64>,
    std_raw: Array1<f64>,
    pooled: Array1<f64>,
    z_emb: Array1<f64>,
    a_emb: Array1<f64>,
    probs: [f64; 2],
}

impl XVectorModel {
    /// Xavier-uniform initialization, deterministic given the seed.
    pub fn new_random(dims: XVectorDims, kind: FeatureKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |rows: usize, cols: usize| -> Array2<f64> {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let w1 = init(TDNN1_OFFSETS.len() * dims.input_dim, dims.h1);
        let w2 = init(TDNN2_OFFSETS.len() * dims.h1, dims.h2);
        let w_emb = init(2 * dims.h2, dims.embed_dim);
        let w_out = init(dims.embed_dim, 2);
        Self {
            dims,
            kind,
            config_digest: String::new(),
            w1,
            b1: Array1::zeros(dims.h1),
            w2,
            b2: Array1::zeros(dims.h2),
            w_emb,
            b_emb: Array1::zeros(dims.embed_dim),
            w_out,
            b_out: Array1::zeros(2),
        }
    }

    pub fn dims(&self) -> XVectorDims {
        self.dims
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub(crate) fn set_config_digest(&mut self, digest: String) {
        self.config_digest = digest;
    }

    pub(crate) fn from_parts(
        dims: XVectorDims,
        kind: FeatureKind,
        config_digest: String,
        parts: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let shapes = param_shapes(dims);
        if parts.len() != shapes.len() {
            return Err(Error::InvalidModel("wrong number of parameter blocks".into()));
        }
        fn take2(
            it: &mut std::vec::IntoIter<Vec<f64>>,
            rows: usize,
            cols: usize,
        ) -> Result<Array2<f64>> {
            Array2::from_shape_vec((rows, cols), it.next().unwrap())
                .map_err(|e| Error::InvalidModel(e.to_string()))
        }
        let mut it = parts.into_iter();
        let w1 = take2(&mut it, shapes[0].0, shapes[0].1)?;
        let b1 = Array1::from_vec(it.next().unwrap());
        let w2 = take2(&mut it, shapes[2].0, shapes[2].1)?;
        let b2 = Array1::from_vec(it.next().unwrap());
        let w_emb = take2(&mut it, shapes[4].0, shapes[4].1)?;
        let b_emb = Array1::from_vec(it.next().unwrap());
        let w_out = take2(&mut it, shapes[6].0, shapes[6].1)?;
        let b_out = Array1::from_vec(it.next().unwrap());
        Ok(Self {
            dims,
            kind,
            config_digest,
            w1,
            b1,
            w2,
            b2,
            w_emb,
            b_emb,
            w_out,
            b_out,
        })
    }

    fn check_input(&self, frames: &ArrayView2<f64>) -> Result<()> {
        if frames.ncols() != self.dims.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {}-dimensional features, got {}",
                self.dims.input_dim,
                frames.ncols()
            )));
        }
        if frames.nrows() < MIN_FRAMES {
            return Err(Error::UtteranceTooShort {
                frames: frames.nrows(),
                min: MIN_FRAMES,
            });
        }
        Ok(())
    }

    fn forward_cache(&self, frames: &ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(frames)?;

        let stacked1 = context_stack(frames, &TDNN1_OFFSETS);
        let mut z1 = stacked1.dot(&self.w1);
        z1 += &self.b1.broadcast((z1.nrows(), self.dims.h1)).unwrap();
        let a1 = z1.mapv(|v| v.max(0.0));

        let stacked2 = context_stack(&a1.view(), &TDNN2_OFFSETS);
        let mut z2 = stacked2.dot(&self.w2);
        z2 += &self.b2.broadcast((z2.nrows(), self.dims.h2)).unwrap();
        let a2 = z2.mapv(|v| v.max(0.0));

        let t = a2.nrows() as f64;
        let mean = a2.sum_axis(Axis(0)) / t;
        let h2 = self.dims.h2;
        let mut std_raw = Array1::<f64>::zeros(h2);
        for d in 0..h2 {
            let var = a2.column(d).iter().map(|v| (v - mean[d]).powi(2)).sum::<f64>() / t;
            std_raw[d] = (var + STD_EPS).sqrt();
        }
        let mut pooled = Array1::<f64>::zeros(2 * h2);
        for d in 0..h2 {
            pooled[d] = mean[d];
            pooled[h2 + d] = std_raw[d].max(STD_FLOOR);
        }

        let mut z_emb = pooled.dot(&self.w_emb);
        z_emb += &self.b_emb;
        let a_emb = z_emb.mapv(|v| v.max(0.0));

        let mut logits = a_emb.dot(&self.w_out);
        logits += &self.b_out;
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        let probs = [e0 / (e0 + e1), e1 / (e0 + e1)];

        Ok(ForwardCache {
            stacked1,
            z1,
            stacked2,
            z2,
            a2,
            mean,
            std_raw,
            pooled,
            z_emb,
            a_emb,
            probs,
        })
    }

    /// Posterior probabilities `(p_bonafide, p_spoof)`; they are positive and
    /// sum to 1 for any utterance of at least 9 frames.
    pub fn forward(&self, features: &FeatureMatrix) -> Result<(f64, f64)> {
        let cache = self.forward_cache(&features.values().view())?;
        Ok((cache.probs[0], cache.probs[1]))
    }

    pub(crate) fn forward_view(&self, frames: &ArrayView2<f64>) -> Result<(f64, f64)> {
        let cache = self.forward_cache(frames)?;
        Ok((cache.probs[0], cache.probs[1]))
    }

    /// Focal loss and exact reverse-mode gradients for one utterance.
    /// `y` is 1 for bonafide, 0 for spoof.
    pub fn backward(
        &self,
        features: &FeatureMatrix,
        y: u8,
        params: &FocalLossParams,
    ) -> Result<(f64, Gradients)> {
        self.backward_view(&features.values().view(), y, params)
    }

    pub(crate) fn backward_view(
        &self,
        frames: &ArrayView2<f64>,
        y: u8,
        params: &FocalLossParams,
    ) -> Result<(f64, Gradients)> {
        let cache = self.forward_cache(frames)?;
        let h2 = self.dims.h2;
        let p_bona = cache.probs[0];
        let loss = focal_loss(p_bona, y, params);
        let dp = focal_loss_grad_p(p_bona, y, params);

        // Softmax: dp_bona/dlogit_j = p_bona * (delta_0j - p_j).
        let dlogits = Array1::from_vec(vec![
            dp * p_bona * (1.0 - cache.probs[0]),
            dp * p_bona * (0.0 - cache.probs[1]),
        ]);

        let mut grads = Gradients::zeros_like(self);
        grads.w_out = outer(&cache.a_emb, &dlogits);
        grads.b_out = dlogits.clone();
        let da_emb = self.w_out.dot(&dlogits);

        let dz_emb = Array1::from_shape_fn(self.dims.embed_dim, |i| {
            if cache.z_emb[i] > 0.0 {
                da_emb[i]
            } else {
                0.0
            }
        });
        grads.w_emb = outer(&cache.pooled, &dz_emb);
        grads.b_emb = dz_emb.clone();
        let dpooled = self.w_emb.dot(&dz_emb);

        // Pooling backward. The std floor only binds when the variance is
        // zero, where the (a - mean) factor vanishes as well, so the sqrt
        // branch is exact everywhere the gradient is nonzero.
        let t = cache.a2.nrows() as f64;
        let mut da2 = Array2::<f64>::zeros(cache.a2.raw_dim());
        for ti in 0..cache.a2.nrows() {
            for d in 0..h2 {
                let dmean = dpooled[d] / t;
                let dstd = dpooled[h2 + d] * (cache.a2[(ti, d)] - cache.mean[d])
                    / (t * cache.std_raw[d]);
                da2[(ti, d)] = dmean + dstd;
            }
        }

        let dz2 = Array2::from_shape_fn(cache.z2.raw_dim(), |(ti, d)| {
            if cache.z2[(ti, d)] > 0.0 {
                da2[(ti, d)]
            } else {
                0.0
            }
        });
        grads.w2 = cache.stacked2.t().dot(&dz2);
        grads.b2 = dz2.sum_axis(Axis(0));
        let dstacked2 = dz2.dot(&self.w2.t());

        // Scatter context-stacked gradients back onto the first layer.
        let h1 = self.dims.h1;
        let mut da1 = Array2::<f64>::zeros(cache.z1.raw_dim());
        let min2 = TDNN2_OFFSETS.iter().min().unwrap();
        for ti in 0..dstacked2.nrows() {
            for (j, off) in TDNN2_OFFSETS.iter().enumerate() {
                let src = ti + (off - min2) as usize;
                let mut row = da1.row_mut(src);
                let block = dstacked2.slice(ndarray::s![ti, j * h1..(j + 1) * h1]);
                row += &block;
            }
        }

        let dz1 = Array2::from_shape_fn(cache.z1.raw_dim(), |(ti, d)| {
            if cache.z1[(ti, d)] > 0.0 {
                da1[(ti, d)]
            } else {
                0.0
            }
        });
        grads.w1 = cache.stacked1.t().dot(&dz1);
        grads.b1 = dz1.sum_axis(Axis(0));

        Ok((loss, grads))
    }

    /// SGD-with-momentum step: `v = momentum*v - lr*g`, `theta += v`.
    pub(crate) fn apply_step(&mut self, velocity: &mut Gradients, grads: &Gradients, lr: f64, momentum: f64) {
        velocity.scale(momentum);
        velocity.add_scaled(grads, -lr);
        self.w1 += &velocity.w1;
        self.b1 += &velocity.b1;
        self.w2 += &velocity.w2;
        self.b2 += &velocity.b2;
        self.w_emb += &velocity.w_emb;
        self.b_emb += &velocity.b_emb;
        self.w_out += &velocity.w_out;
        self.b_out += &velocity.b_out;
    }

    pub(crate) fn param_blocks(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.w_emb.as_slice().unwrap(),
            self.b_emb.as_slice().unwrap(),
            self.w_out.as_slice().unwrap(),
            self.b_out.as_slice().unwrap(),
        ]
    }
}

fn param_shapes(dims: XVectorDims) -> [(usize, usize); 8] {
    [
        (TDNN1_OFFSETS.len() * dims.input_dim, dims.h1),
        (dims.h1, 1),
        (TDNN2_OFFSETS.len() * dims.h1, dims.h2),
        (dims.h2, 1),
        (2 * dims.h2, dims.embed_dim),
        (dims.embed_dim, 1),
        (dims.embed_dim, 2),
        (2, 1),
    ]
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((a.len(), b.len()));
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[(i, j)] = a[i] * b[j];
        }
    }
    out
}

/// Detection score: log-posterior ratio `ln p_bonafide - ln p_spoof`.
pub fn xvector_score(model: &XVectorModel, features: &FeatureMatrix, trial_id: &str) -> Result<TrialScore> {
    let cache = model.forward_cache(&features.values().view())?;
    // ln(p0/p1) computed from the probabilities; both are positive because
    // softmax of finite logits never reaches 0 or 1 exactly.
    let score = cache.probs[0].ln() - cache.probs[1].ln();
    Ok(TrialScore::new(trial_id, score, format!("x-{}", model.kind())))
}

/// Post-ReLU embedding-layer activations (the fixed-length utterance
/// representation), exported for offline analysis.
pub fn extract_embedding(model: &XVectorModel, features: &FeatureMatrix) -> Result<Array1<f64>> {
    let cache = model.forward_cache(&features.values().view())?;
    Ok(cache.a_emb)
}
