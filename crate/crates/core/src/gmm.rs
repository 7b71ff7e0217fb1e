//! Diagonal-covariance Gaussian mixture back-end.
//!
//! Two mixtures are trained by EM, one per class; a trial's score is the
//! difference of per-frame average log-likelihoods under the two models.
//! All densities are evaluated in log space with log-sum-exp.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::protocol::TrialScore;

const LN_2PI: f64 = 1.8378770664093453;

/// Relative part of the variance floor: each dimension's floor is
/// `max(abs_floor, RELATIVE_VAR_FLOOR * global variance of that dimension)`.
const RELATIVE_VAR_FLOOR: f64 = 1e-3;

/// A diagonal-covariance Gaussian mixture for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Array1<f64>,
    means: Array2<f64>,
    variances: Array2<f64>,
    kind: FeatureKind,
}

impl GmmModel {
    /// Validates shape agreement, weights summing to 1 (within 1e-9) and
    /// strictly positive variances.
    pub fn new(
        weights: Array1<f64>,
        means: Array2<f64>,
        variances: Array2<f64>,
        kind: FeatureKind,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidModel("need at least one component".into()));
        }
        if means.nrows() != k || variances.nrows() != k || means.ncols() != variances.ncols() {
            return Err(Error::InvalidModel(format!(
                "shape mismatch: {} weights, means {:?}, variances {:?}",
                k,
                means.dim(),
                variances.dim()
            )));
        }
        if means.ncols() == 0 {
            return Err(Error::InvalidModel("zero-dimensional model".into()));
        }
        let wsum: f64 = weights.sum();
        if (wsum - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidModel(format!(
                "weights must be non-negative and sum to 1, got {wsum}"
            )));
        }
        if variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidModel("variances must be strictly positive".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
            kind,
        })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn variances(&self) -> &Array2<f64> {
        &self.variances
    }

    /// `log w_k - 0.5 * (D ln 2pi + sum_d ln var)` per component.
    fn log_norm_constants(&self) -> Array1<f64> {
        let d = self.dim() as f64;
        let mut out = Array1::zeros(self.num_components());
        for k in 0..self.num_components() {
            let log_det: f64 = self.variances.row(k).iter().map(|v| v.ln()).sum();
            out[k] = self.weights[k].max(f64::MIN_POSITIVE).ln() - 0.5 * (d * LN_2PI + log_det);
        }
        out
    }
}

/// Stack the frames of many utterances into one `(sum T_i, D)` matrix, in
/// the given order.
pub fn pool_frames(features: &[&FeatureMatrix]) -> Result<Array2<f64>> {
    let first = features.first().ok_or(Error::EmptyFeatures)?;
    let dim = first.dim();
    let total: usize = features.iter().map(|f| f.num_frames()).sum();
    let mut pooled = Array2::<f64>::zeros((total, dim));
    let mut row = 0;
    for f in features {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "cannot pool {}-dim features with {}-dim",
                f.dim(),
                dim
            )));
        }
        if f.kind() != first.kind() {
            return Err(Error::KindMismatch {
                model: first.kind().to_string(),
                features: f.kind().to_string(),
            });
        }
        pooled
            .slice_mut(ndarray::s![row..row + f.num_frames(), ..])
            .assign(f.values());
        row += f.num_frames();
    }
    Ok(pooled)
}

/// Per-dimension variance floor from the pooled data.
fn variance_floor(frames: &ArrayView2<f64>, abs_floor: f64) -> Array1<f64> {
    let n = frames.nrows() as f64;
    let mean = frames.sum_axis(Axis(0)) / n;
    let mut var = Array1::<f64>::zeros(frames.ncols());
    for row in frames.rows() {
        for (d, &x) in row.iter().enumerate() {
            let c = x - mean[d];
            var[d] += c * c;
        }
    }
    var.mapv_inplace(|v| (v / n * RELATIVE_VAR_FLOOR).max(abs_floor));
    var
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by at most 20 Lloyd iterations; weights are
/// cluster proportions, variances per-cluster diagonal variances (floored).
/// Deterministic given `seed`.
pub fn kmeans_init(
    frames: ArrayView2<f64>,
    kind: FeatureKind,
    num_components: usize,
    seed: u64,
) -> Result<GmmModel> {
    let n = frames.nrows();
    let d = frames.ncols();
    if num_components == 0 {
        return Err(Error::InvalidModel("need at least one component".into()));
    }
    if n < num_components {
        return Err(Error::TooFewFrames {
            got: n,
            need: num_components,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |i: usize| frames.row(i).to_slice().expect("contiguous frames");

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(num_components);
    centers.push(row(rng.random_range(0..n)).to_vec());
    let mut min_dist: Vec<f64> = (0..n).map(|i| squared_distance(row(i), &centers[0])).collect();
    while centers.len() < num_components {
        let total: f64 = min_dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in min_dist.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // All remaining points coincide with centers; take the first
            // index not already used.
            (0..n)
                .find(|&i| centers.iter().all(|c| squared_distance(row(i), c) > 0.0))
                .unwrap_or(centers.len())
        };
        centers.push(row(next).to_vec());
        for i in 0..n {
            let dist = squared_distance(row(i), &centers[centers.len() - 1]);
            if dist < min_dist[i] {
                min_dist[i] = dist;
            }
        }
    }

    // Lloyd refinement.
    let mut assignment = vec![0usize; n];
    for _ in 0..20 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let dist = squared_distance(row(i), c);
                if dist < best_dist {
                    best_dist = dist;
                    best = k;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; num_components];
        let mut sums = vec![vec![0.0; d]; num_components];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for (j, &x) in row(i).iter().enumerate() {
                sums[assignment[i]][j] += x;
            }
        }
        for k in 0..num_components {
            if counts[k] == 0 {
                // Re-seed an empty cluster on the farthest point.
                let mut far = 0;
                let mut far_dist = -1.0;
                for i in 0..n {
                    let dist = squared_distance(row(i), &centers[assignment[i]]);
                    if dist > far_dist {
                        far_dist = dist;
                        far = i;
                    }
                }
                centers[k] = row(far).to_vec();
                assignment[far] = k;
                changed = true;
            } else {
                for j in 0..d {
                    centers[k][j] = sums[k][j] / counts[k] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Moment-match each cluster.
    let floor = variance_floor(&frames, 1e-5);
    let mut counts = vec![0usize; num_components];
    for &a in &assignment {
        counts[a] += 1;
    }
    let mut weights = Array1::<f64>::zeros(num_components);
    let mut means = Array2::<f64>::zeros((num_components, d));
    let mut variances = Array2::<f64>::zeros((num_components, d));
    for k in 0..num_components {
        weights[k] = counts[k] as f64 / n as f64;
        for j in 0..d {
            means[(k, j)] = centers[k][j];
        }
    }
    for i in 0..n {
        let k = assignment[i];
        for (j, &x) in row(i).iter().enumerate() {
            let c = x - means[(k, j)];
            variances[(k, j)] += c * c;
        }
    }
    for k in 0..num_components {
        let denom = counts[k].max(1) as f64;
        for j in 0..d {
            variances[(k, j)] = (variances[(k, j)] / denom).max(floor[j]);
        }
    }
    GmmModel::new(weights, means, variances, kind)
}

/// EM stopping and flooring parameters.
#[derive(Debug, Clone)]
pub struct EmOptions {
    pub num_components: usize,
    pub max_iters: usize,
    /// Stop once the average log-likelihood gain drops below this.
    pub tol: f64,
    /// Absolute variance floor; combined with a relative per-dimension term.
    pub var_floor: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            num_components: 512,
            max_iters: 50,
            tol: 1e-4,
            var_floor: 1e-5,
            seed: 42,
        }
    }
}

/// Log-density table `(n, K)` via the expanded quadratic form; shared by the
/// E-step. `x2` must be the elementwise square of `frames`.
fn log_prob_table(frames: &ArrayView2<f64>, x2: &Array2<f64>, model: &GmmModel) -> Array2<f64> {
    let k = model.num_components();
    let d = model.dim();
    let mut inv_var = Array2::<f64>::zeros((k, d));
    let mut mean_over_var = Array2::<f64>::zeros((k, d));
    let mut consts = model.log_norm_constants();
    for ki in 0..k {
        let mut quad = 0.0;
        for di in 0..d {
            let v = model.variances[(ki, di)];
            let m = model.means[(ki, di)];
            inv_var[(ki, di)] = 1.0 / v;
            mean_over_var[(ki, di)] = m / v;
            quad += m * m / v;
        }
        consts[ki] -= 0.5 * quad;
    }
    // log p(t,k) = const_k - 0.5 * x2 . (1/var)^T + x . (mean/var)^T
    let mut table = frames.dot(&mean_over_var.t());
    table.scaled_add(-0.5, &x2.dot(&inv_var.t()));
    table += &consts.broadcast((frames.nrows(), k)).unwrap();
    table
}

fn log_sum_exp_rows(table: &Array2<f64>) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(table.nrows());
    for (t, row) in table.rows().into_iter().enumerate() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        out[t] = m + sum.ln();
    }
    out
}

/// Fit a mixture by EM, returning the model and the per-iteration average
/// log-likelihood trace (non-decreasing up to floating-point slack).
///
/// A component whose responsibility mass underflows is re-seeded on a random
/// frame with global variance and the event logged; EM fails with
/// `NumericalCollapse` only if every component collapses at once.
pub fn em_fit(
    frames: ArrayView2<f64>,
    kind: FeatureKind,
    opts: &EmOptions,
) -> Result<(GmmModel, Vec<f64>)> {
    let n = frames.nrows();
    let k = opts.num_components;
    if n < 10 * k {
        return Err(Error::TooFewFrames { got: n, need: 10 * k });
    }

    let mut model = kmeans_init(frames, kind, k, opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let floor = variance_floor(&frames, opts.var_floor);
    let global_var = variance_floor(&frames, opts.var_floor).mapv(|v| v / RELATIVE_VAR_FLOOR);
    let x2 = frames.mapv(|x| x * x);

    let mut trace = Vec::with_capacity(opts.max_iters);
    for _iter in 0..opts.max_iters {
        // E-step.
        let mut table = log_prob_table(&frames, &x2, &model);
        let ll = log_sum_exp_rows(&table);
        let avg_ll = ll.sum() / n as f64;
        for (t, mut row) in table.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| (v - ll[t]).exp());
        }
        let resp = table;

        if let Some(&prev) = trace.last() {
            if avg_ll - prev < opts.tol {
                trace.push(avg_ll);
                break;
            }
        }
        trace.push(avg_ll);

        // M-step.
        let mass = resp.sum_axis(Axis(0));
        let collapsed: Vec<usize> = (0..k).filter(|&ki| mass[ki] < 1e-10).collect();
        if collapsed.len() == k {
            return Err(Error::NumericalCollapse(
                "all components lost their responsibility mass".into(),
            ));
        }

        let mut weights = &mass / n as f64;
        let mut means = resp.t().dot(&frames);
        let mut variances = resp.t().dot(&x2);
        for ki in 0..k {
            if collapsed.contains(&ki) {
                continue;
            }
            let m = mass[ki];
            for di in 0..model.dim() {
                means[(ki, di)] /= m;
                let ex2 = variances[(ki, di)] / m;
                variances[(ki, di)] = (ex2 - means[(ki, di)].powi(2)).max(floor[di]);
            }
        }
        for &ki in &collapsed {
            let pick = rng.random_range(0..n);
            log::warn!("EM component {ki} collapsed; re-seeding on frame {pick}");
            for di in 0..model.dim() {
                means[(ki, di)] = frames[(pick, di)];
                variances[(ki, di)] = global_var[di].max(floor[di]);
            }
            weights[ki] = 1.0 / n as f64;
        }
        let wsum = weights.sum();
        weights.mapv_inplace(|w| w / wsum);

        model = GmmModel::new(weights, means, variances, kind)?;
    }
    Ok((model, trace))
}

/// Per-frame average log-likelihood of the features under the model,
/// evaluated with the direct quadratic form and log-sum-exp.
pub fn avg_log_likelihood(model: &GmmModel, features: &FeatureMatrix) -> Result<f64> {
    if features.num_frames() == 0 {
        return Err(Error::EmptyFeatures);
    }
    if features.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model dimension {} vs features {}",
            model.dim(),
            features.dim()
        )));
    }
    if features.kind() != model.kind() {
        return Err(Error::KindMismatch {
            model: model.kind().to_string(),
            features: features.kind().to_string(),
        });
    }

    let consts = model.log_norm_constants();
    let k = model.num_components();
    let mut total = 0.0;
    let mut log_probs = vec![0.0; k];
    for frame in features.values().rows() {
        for ki in 0..k {
            let mut quad = 0.0;
            for (di, &x) in frame.iter().enumerate() {
                let c = x - model.means[(ki, di)];
                quad += c * c / model.variances[(ki, di)];
            }
            log_probs[ki] = consts[ki] - 0.5 * quad;
        }
        let m = log_probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = log_probs.iter().map(|&v| (v - m).exp()).sum();
        total += m + sum.ln();
    }
    Ok(total / features.num_frames() as f64)
}

/// Detection score: average log-likelihood under the bonafide model minus
/// the spoof model. The sign convention makes larger scores more bonafide.
pub fn gmm_score(
    bonafide: &GmmModel,
    spoof: &GmmModel,
    features: &FeatureMatrix,
    trial_id: &str,
) -> Result<TrialScore> {
    if bonafide.dim() != spoof.dim() || bonafide.kind() != spoof.kind() {
        return Err(Error::KindMismatch {
            model: format!("{} ({}d)", bonafide.kind(), bonafide.dim()),
            features: format!("{} ({}d)", spoof.kind(), spoof.dim()),
        });
    }
    let score = avg_log_likelihood(bonafide, features)? - avg_log_likelihood(spoof, features)?;
    Ok(TrialScore::new(
        trial_id,
        score,
        format!("G-{}", bonafide.kind()),
    ))
}

const MAGIC: &[u8; 4] = b"SPGM";
const VERSION: u16 = 1;

/// Write a model as "SPGM": magic, version, kind string, K, D, then
/// weights/means/variances as little-endian f64.
pub fn write_gmm(path: impl AsRef<Path>, model: &GmmModel) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let kind = model.kind.as_str().as_bytes();
    w.write_all(&(kind.len() as u16).to_le_bytes())?;
    w.write_all(kind)?;
    w.write_all(&(model.num_components() as u32).to_le_bytes())?;
    w.write_all(&(model.dim() as u32).to_le_bytes())?;
    for arr in [
        model.weights.as_slice().expect("contiguous"),
        model.means.as_slice().expect("contiguous"),
        model.variances.as_slice().expect("contiguous"),
    ] {
        for v in arr {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read an "SPGM" model file.
pub fn read_gmm(path: impl AsRef<Path>) -> Result<GmmModel> {
    let path = path.as_ref();
    let malformed = |detail: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        detail: detail.into(),
    };
    let mut r = BufReader::new(std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| malformed("file too short"))?;
    if &magic != MAGIC {
        return Err(malformed("bad magic, expected SPGM"));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2).map_err(|_| malformed("truncated version"))?;
    if u16::from_le_bytes(b2) != VERSION {
        return Err(malformed("unsupported version"));
    }
    r.read_exact(&mut b2).map_err(|_| malformed("truncated kind"))?;
    let mut kind_buf = vec![0u8; u16::from_le_bytes(b2) as usize];
    r.read_exact(&mut kind_buf).map_err(|_| malformed("truncated kind"))?;
    let kind: FeatureKind = String::from_utf8(kind_buf)
        .map_err(|_| malformed("kind not UTF-8"))?
        .parse()
        .map_err(|e: String| malformed(&e))?;

    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|_| malformed("truncated K"))?;
    let k = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4).map_err(|_| malformed("truncated D"))?;
    let d = u32::from_le_bytes(b4) as usize;

    let mut read_block = |len: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf).map_err(|_| malformed("truncated parameters"))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let weights = Array1::from_vec(read_block(k)?);
    let means = Array2::from_shape_vec((k, d), read_block(k * d)?)
        .map_err(|e| malformed(&e.to_string()))?;
    let variances = Array2::from_shape_vec((k, d), read_block(k * d)?)
        .map_err(|e| malformed(&e.to_string()))?;
    GmmModel::new(weights, means, variances, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand_distr::{Distribution, StandardNormal};

    fn sample_gaussian(rng: &mut ChaCha8Rng, mean: &[f64], var: &[f64], n: usize) -> Array2<f64> {
        let d = mean.len();
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                let z: f64 = StandardNormal.sample(rng);
                out[(i, j)] = mean[j] + var[j].sqrt() * z;
            }
        }
        out
    }

    fn feature(values: Array2<f64>, kind: FeatureKind) -> FeatureMatrix {
        FeatureMatrix::new(values, kind, String::new()).unwrap()
    }

    #[test]
    fn kmeans_single_component_matches_pooled_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = sample_gaussian(&mut rng, &[2.0, -1.0], &[1.5, 0.5], 400);
        let model = kmeans_init(data.view(), FeatureKind::Mfcc, 1, 7).unwrap();

        let n = data.nrows() as f64;
        let mean = data.sum_axis(Axis(0)) / n;
        for j in 0..2 {
            assert!((model.means()[(0, j)] - mean[j]).abs() < 1e-9);
            let var: f64 = data.column(j).iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / n;
            assert!((model.variances()[(0, j)] - var).abs() < 1e-9);
        }
        assert_eq!(model.weights()[0], 1.0);
    }

    #[test]
    fn kmeans_exact_fit_on_distinct_points() {
        let data = arr2(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]]);
        let model = kmeans_init(data.view(), FeatureKind::Mfcc, 4, 3).unwrap();
        // Every point is its own cluster: distortion 0, all weights 1/4.
        for &w in model.weights() {
            assert!((w - 0.25).abs() < 1e-12);
        }
        let mut matched = 0;
        for point in data.rows() {
            for center in model.means().rows() {
                if squared_distance(point.to_slice().unwrap(), center.to_slice().unwrap()) < 1e-18 {
                    matched += 1;
                    break;
                }
            }
        }
        assert_eq!(matched, 4);
    }

    #[test]
    fn kmeans_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = sample_gaussian(&mut rng, &[0.0, 0.0, 0.0], &[1.0, 2.0, 0.5], 300);
        let a = kmeans_init(data.view(), FeatureKind::Lfcc, 5, 11).unwrap();
        let b = kmeans_init(data.view(), FeatureKind::Lfcc, 5, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_frames_is_rejected() {
        let data = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            kmeans_init(data.view(), FeatureKind::Mfcc, 4, 0),
            Err(Error::TooFewFrames { got: 3, need: 4 })
        ));
        let data = Array2::<f64>::ones((30, 2));
        assert!(matches!(
            em_fit(data.view(), FeatureKind::Mfcc, &EmOptions { num_components: 4, ..Default::default() }),
            Err(Error::TooFewFrames { got: 30, need: 40 })
        ));
    }

    #[test]
    fn em_single_gaussian_recovers_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = sample_gaussian(&mut rng, &[1.0, -2.0, 0.5], &[0.8, 1.3, 0.4], 2000);
        let opts = EmOptions {
            num_components: 1,
            max_iters: 10,
            ..Default::default()
        };
        let (model, trace) = em_fit(data.view(), FeatureKind::Mfcc, &opts).unwrap();
        assert!(!trace.is_empty());

        let n = data.nrows() as f64;
        let mean = data.sum_axis(Axis(0)) / n;
        for j in 0..3 {
            assert!((model.means()[(0, j)] - mean[j]).abs() < 1e-6);
            let var: f64 = data.column(j).iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / n;
            assert!((model.variances()[(0, j)] - var).abs() < 1e-6);
        }
    }

    #[test]
    fn em_trace_is_monotone_on_random_data() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = sample_gaussian(&mut rng, &[0.0, 0.0], &[1.0, 1.0], 150);
            let b = sample_gaussian(&mut rng, &[3.0, -2.0], &[0.5, 2.0], 150);
            let data = ndarray::concatenate(Axis(0), &[a.view(), b.view()]).unwrap();
            let opts = EmOptions {
                num_components: 4,
                max_iters: 30,
                tol: 0.0,
                seed,
                ..Default::default()
            };
            let (_, trace) = em_fit(data.view(), FeatureKind::Lfcc, &opts).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "trace decreased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn variance_floor_holds_for_duplicated_points() {
        // Two tight clusters of identical points: cluster variance is zero
        // and must be floored.
        let mut rows = Vec::new();
        for _ in 0..40 {
            rows.push([0.0, 0.0]);
        }
        for _ in 0..40 {
            rows.push([5.0, 5.0]);
        }
        let data = Array2::from_shape_vec((80, 2), rows.concat().to_vec()).unwrap();
        let opts = EmOptions {
            num_components: 2,
            max_iters: 5,
            var_floor: 1e-5,
            ..Default::default()
        };
        let (model, _) = em_fit(data.view(), FeatureKind::Mfcc, &opts).unwrap();
        for &v in model.variances() {
            assert!(v >= 1e-5);
        }
    }

    #[test]
    fn standard_normal_log_density_at_zero() {
        let model = GmmModel::new(
            Array1::from_vec(vec![1.0]),
            arr2(&[[0.0]]),
            arr2(&[[1.0]]),
            FeatureKind::Mfcc,
        )
        .unwrap();
        let f = feature(arr2(&[[0.0]]), FeatureKind::Mfcc);
        let ll = avg_log_likelihood(&model, &f).unwrap();
        assert!((ll - (-0.9189385332046727)).abs() < 1e-12);
    }

    #[test]
    fn duplicating_frames_preserves_the_average() {
        let model = GmmModel::new(
            Array1::from_vec(vec![0.6, 0.4]),
            arr2(&[[0.0, 1.0], [2.0, -1.0]]),
            arr2(&[[1.0, 0.5], [0.7, 1.2]]),
            FeatureKind::Lfcc,
        )
        .unwrap();
        let base = arr2(&[[0.1, 0.2], [1.5, -0.5], [-0.3, 0.9]]);
        let doubled = ndarray::concatenate(Axis(0), &[base.view(), base.view()]).unwrap();
        let a = avg_log_likelihood(&model, &feature(base, FeatureKind::Lfcc)).unwrap();
        let b = avg_log_likelihood(&model, &feature(doubled, FeatureKind::Lfcc)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn constructor_rejects_bad_weights() {
        let result = GmmModel::new(
            Array1::from_vec(vec![0.5, 0.4]),
            Array2::zeros((2, 3)),
            Array2::ones((2, 3)),
            FeatureKind::Mfcc,
        );
        assert!(matches!(result, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn identical_models_score_zero() {
        let model = GmmModel::new(
            Array1::from_vec(vec![1.0]),
            arr2(&[[0.5, -0.5]]),
            arr2(&[[1.0, 1.0]]),
            FeatureKind::Mfcc,
        )
        .unwrap();
        let f = feature(arr2(&[[0.3, 0.1], [0.9, -1.0]]), FeatureKind::Mfcc);
        let s = gmm_score(&model, &model, &f, "T1").unwrap();
        assert_eq!(s.score, 0.0);
        assert_eq!(s.system, "G-MFCC");
    }

    #[test]
    fn score_is_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = GmmModel::new(
            Array1::from_vec(vec![0.7, 0.3]),
            arr2(&[[0.0, 0.0], [1.0, 2.0]]),
            arr2(&[[1.0, 0.4], [0.6, 1.1]]),
            FeatureKind::Imfcc,
        )
        .unwrap();
        let s = GmmModel::new(
            Array1::from_vec(vec![0.2, 0.8]),
            arr2(&[[3.0, -1.0], [-2.0, 0.5]]),
            arr2(&[[0.9, 0.9], [1.4, 0.3]]),
            FeatureKind::Imfcc,
        )
        .unwrap();
        for _ in 0..20 {
            let data = sample_gaussian(&mut rng, &[0.5, 0.5], &[2.0, 2.0], 7);
            let f = feature(data, FeatureKind::Imfcc);
            let fwd = gmm_score(&b, &s, &f, "T").unwrap().score;
            let rev = gmm_score(&s, &b, &f, "T").unwrap().score;
            assert_eq!(fwd, -rev, "must negate exactly");
        }
    }

    #[test]
    fn samples_from_the_bonafide_model_score_positive() {
        let b_mean = [0.0, 0.0];
        let s_mean = [6.0, -6.0];
        let b = GmmModel::new(
            Array1::from_vec(vec![1.0]),
            arr2(&[b_mean]),
            arr2(&[[1.0, 1.0]]),
            FeatureKind::Mfcc,
        )
        .unwrap();
        let s = GmmModel::new(
            Array1::from_vec(vec![1.0]),
            arr2(&[s_mean]),
            arr2(&[[1.0, 1.0]]),
            FeatureKind::Mfcc,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut positive = 0;
        let total = 200;
        for _ in 0..total {
            let data = sample_gaussian(&mut rng, &b_mean, &[1.0, 1.0], 20);
            let f = feature(data, FeatureKind::Mfcc);
            if gmm_score(&b, &s, &f, "T").unwrap().score > 0.0 {
                positive += 1;
            }
        }
        assert!(positive as f64 >= 0.99 * total as f64, "{positive}/{total}");
    }

    #[test]
    fn average_is_frame_order_invariant() {
        let model = GmmModel::new(
            Array1::from_vec(vec![0.5, 0.5]),
            arr2(&[[0.0], [4.0]]),
            arr2(&[[1.0], [2.0]]),
            FeatureKind::Mfcc,
        )
        .unwrap();
        let fwd = arr2(&[[0.0], [1.0], [2.0], [3.0], [4.0]]);
        let rev = arr2(&[[4.0], [3.0], [2.0], [1.0], [0.0]]);
        let a = avg_log_likelihood(&model, &feature(fwd, FeatureKind::Mfcc)).unwrap();
        let b = avg_log_likelihood(&model, &feature(rev, FeatureKind::Mfcc)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn kind_and_dimension_mismatches_are_rejected() {
        let model = GmmModel::new(
            Array1::from_vec(vec![1.0]),
            arr2(&[[0.0, 0.0]]),
            arr2(&[[1.0, 1.0]]),
            FeatureKind::Mfcc,
        )
        .unwrap();
        let wrong_dim = feature(arr2(&[[0.0]]), FeatureKind::Mfcc);
        assert!(matches!(
            avg_log_likelihood(&model, &wrong_dim),
            Err(Error::DimensionMismatch(_))
        ));
        let wrong_kind = feature(arr2(&[[0.0, 0.0]]), FeatureKind::Lfcc);
        assert!(matches!(
            avg_log_likelihood(&model, &wrong_kind),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.spgm");
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = sample_gaussian(&mut rng, &[0.0, 1.0, 2.0], &[1.0, 0.5, 2.0], 200);
        let (model, _) = em_fit(
            data.view(),
            FeatureKind::Cqcc,
            &EmOptions {
                num_components: 3,
                max_iters: 5,
                ..Default::default()
            },
        )
        .unwrap();
        write_gmm(&path, &model).unwrap();
        let back = read_gmm(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn mixture_recovery_with_separated_means() {
        // 3 well-separated components in 2-D; fitted means must land within
        // 3 standard errors of the truth under the best assignment.
        let weights = [0.3f64, 0.4, 0.3];
        let means = [[0.0f64, 0.0], [8.0, 0.0], [0.0, 8.0]];
        let vars = [[1.0f64, 0.5], [0.5, 1.0], [1.0, 1.0]];
        let n = 3000;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut rows = Vec::new();
        let mut counts = [0usize; 3];
        for ki in 0..3 {
            let nk = (weights[ki] * n as f64).round() as usize;
            counts[ki] = nk;
            for _ in 0..nk {
                let z0: f64 = StandardNormal.sample(&mut rng);
                let z1: f64 = StandardNormal.sample(&mut rng);
                rows.push(means[ki][0] + vars[ki][0].sqrt() * z0);
                rows.push(means[ki][1] + vars[ki][1].sqrt() * z1);
            }
        }
        let total: usize = counts.iter().sum();
        let data = Array2::from_shape_vec((total, 2), rows).unwrap();
        let opts = EmOptions {
            num_components: 3,
            max_iters: 50,
            seed: 17,
            ..Default::default()
        };
        let (model, _) = em_fit(data.view(), FeatureKind::Mfcc, &opts).unwrap();

        // Best permutation match.
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let ok = perms.iter().any(|perm| {
            (0..3).all(|ki| {
                let fitted = model.means().row(perm[ki]);
                (0..2).all(|di| {
                    let se = (vars[ki][di] / counts[ki] as f64).sqrt();
                    (fitted[di] - means[ki][di]).abs() <= 3.0 * se
                })
            })
        });
        assert!(ok, "no permutation matches within 3 SE: {:?}", model.means());
    }
}
