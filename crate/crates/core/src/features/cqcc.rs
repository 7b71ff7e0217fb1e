//! Constant-Q transform and CQCC extraction.
//!
//! The transform is evaluated directly: each bin is an inner product of the
//! signal with a Hamming-windowed complex exponential whose length shrinks
//! geometrically with frequency, so every bin has the same quality factor.
//! Cepstra follow the usual chain: log power on the geometric grid, piecewise
//! linear resampling onto a uniform grid, orthonormal DCT-II, deltas.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::audio::{window, Waveform, WindowKind};
use crate::error::{Error, Result};
use crate::features::spectral::{append_deltas, dct_basis, ENERGY_FLOOR};
use crate::features::{digest_str, FeatureKind, FeatureMatrix};

/// Geometry of a constant-Q analysis: `K` geometrically spaced bins between
/// `f_min` and `f_max` with `B` bins per octave.
#[derive(Debug, Clone)]
pub struct CqtSpec {
    f_min_hz: f64,
    f_max_hz: f64,
    bins_per_octave: usize,
    sample_rate_hz: u32,
    q_factor: f64,
    center_freqs_hz: Vec<f64>,
    window_lens: Vec<usize>,
}

impl CqtSpec {
    /// `Q = 1/(2^(1/B) - 1)`, `K = floor(B * log2(f_max/f_min)) + 1`,
    /// `f_k = f_min * 2^(k/B)`, `N_k = ceil(Q * fs / f_k)`.
    pub fn new(f_min_hz: f64, f_max_hz: f64, bins_per_octave: usize, sample_rate_hz: u32) -> Result<Self> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if !(f_min_hz > 0.0 && f_min_hz < f_max_hz && f_max_hz <= nyquist) {
            return Err(Error::BandOutOfRange(format!(
                "need 0 < f_min < f_max <= {nyquist}, got [{f_min_hz}, {f_max_hz}]"
            )));
        }
        if bins_per_octave == 0 {
            return Err(Error::BandOutOfRange("bins_per_octave must be positive".into()));
        }
        let b = bins_per_octave as f64;
        let q_factor = 1.0 / (2f64.powf(1.0 / b) - 1.0);
        let k_count = (b * (f_max_hz / f_min_hz).log2()).floor() as usize + 1;
        let center_freqs_hz: Vec<f64> =
            (0..k_count).map(|k| f_min_hz * 2f64.powf(k as f64 / b)).collect();
        let window_lens: Vec<usize> = center_freqs_hz
            .iter()
            .map(|f| (q_factor * sample_rate_hz as f64 / f).ceil() as usize)
            .collect();
        Ok(Self {
            f_min_hz,
            f_max_hz,
            bins_per_octave,
            sample_rate_hz,
            q_factor,
            center_freqs_hz,
            window_lens,
        })
    }

    pub fn f_min_hz(&self) -> f64 {
        self.f_min_hz
    }

    pub fn f_max_hz(&self) -> f64 {
        self.f_max_hz
    }

    pub fn bins_per_octave(&self) -> usize {
        self.bins_per_octave
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn q_factor(&self) -> f64 {
        self.q_factor
    }

    pub fn num_bins(&self) -> usize {
        self.center_freqs_hz.len()
    }

    pub fn center_freqs_hz(&self) -> &[f64] {
        &self.center_freqs_hz
    }

    pub fn window_lens(&self) -> &[usize] {
        &self.window_lens
    }

    /// Longest per-bin window (the lowest bin); signals must be at least
    /// this long.
    pub fn max_window_len(&self) -> usize {
        self.window_lens[0]
    }

    fn digest_part(&self) -> String {
        format!(
            "cqt:fmin={};fmax={};B={};fs={}",
            self.f_min_hz, self.f_max_hz, self.bins_per_octave, self.sample_rate_hz
        )
    }
}

/// Constant-Q analyzer with precomputed per-bin kernels.
///
/// Immutable after construction and shareable across workers; building one
/// amortizes the kernel synthesis across all utterances.
pub struct CqtTransform {
    spec: CqtSpec,
    // kernel[k][i] = hamming_k[i] * exp(-j*2*pi*f_k*n_i/fs) / N_k,
    // n_i = i - N_k/2 (window centered on the hop point).
    kernels: Vec<Vec<Complex<f64>>>,
}

impl CqtTransform {
    pub fn new(spec: CqtSpec) -> Self {
        let fs = spec.sample_rate_hz as f64;
        let kernels = spec
            .center_freqs_hz
            .iter()
            .zip(&spec.window_lens)
            .map(|(&fk, &nk)| {
                let win = window(WindowKind::Hamming, nk);
                let half = (nk / 2) as isize;
                (0..nk)
                    .map(|i| {
                        let n = (i as isize - half) as f64;
                        let phase = -2.0 * std::f64::consts::PI * fk * n / fs;
                        Complex::from_polar(win[i] / nk as f64, phase)
                    })
                    .collect()
            })
            .collect();
        Self { spec, kernels }
    }

    pub fn spec(&self) -> &CqtSpec {
        &self.spec
    }

    /// Magnitude response of bin `k` for a window centered at `center`.
    /// Samples outside the signal count as zero.
    pub fn bin_magnitude(&self, samples: &[f64], k: usize, center: usize) -> f64 {
        let kernel = &self.kernels[k];
        let nk = kernel.len();
        let half = (nk / 2) as isize;
        let start = center as isize - half;
        let i_lo = (-start).max(0) as usize;
        let i_hi = nk.min((samples.len() as isize - start).max(0) as usize);
        let mut acc = Complex::new(0.0, 0.0);
        if i_lo < i_hi {
            let xs = &samples[(start + i_lo as isize) as usize..(start + i_hi as isize) as usize];
            for (x, c) in xs.iter().zip(&kernel[i_lo..i_hi]) {
                acc += c * x;
            }
        }
        acc.norm()
    }

    /// `T x K` constant-Q magnitudes with hop points at `t * H`.
    pub fn apply(&self, w: &Waveform, hop_ms: f64) -> Result<Array2<f64>> {
        let spec = &self.spec;
        if w.sample_rate_hz() != spec.sample_rate_hz {
            return Err(Error::DimensionMismatch(format!(
                "waveform rate {} does not match CQT spec rate {}",
                w.sample_rate_hz(),
                spec.sample_rate_hz
            )));
        }
        let len = w.len();
        let min = spec.max_window_len();
        if len < min {
            return Err(Error::SignalTooShort { len, min });
        }
        let hop = ((hop_ms * spec.sample_rate_hz as f64 / 1000.0).round() as usize).max(1);
        let t_count = (len - 1) / hop + 1;
        let k_count = spec.num_bins();

        let rows: Vec<Vec<f64>> = (0..t_count)
            .into_par_iter()
            .map(|t| {
                let center = t * hop;
                (0..k_count)
                    .map(|k| self.bin_magnitude(w.samples(), k, center))
                    .collect()
            })
            .collect();
        let mut out = Array2::<f64>::zeros((t_count, k_count));
        for (t, row) in rows.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                out[(t, k)] = v;
            }
        }
        Ok(out)
    }
}

/// One-shot constant-Q transform; builds the kernels on the fly.
pub fn cqt(w: &Waveform, spec: &CqtSpec, hop_ms: f64) -> Result<Array2<f64>> {
    CqtTransform::new(spec.clone()).apply(w, hop_ms)
}

/// Piecewise-linear resampling of values on the abscissae `xs` (strictly
/// increasing, typically geometric center frequencies) onto `l` equally
/// spaced points spanning `[xs[0], xs[K-1]]`. Endpoints are preserved exactly.
pub fn resample_geometric_to_linear(values: &[f64], xs: &[f64], l: usize) -> Vec<f64> {
    assert!(values.len() >= 2 && values.len() == xs.len(), "need K >= 2 matching abscissae");
    assert!(l >= 2, "need L >= 2");
    let k = values.len();
    let (lo, hi) = (xs[0], xs[k - 1]);
    let step = (hi - lo) / (l - 1) as f64;
    let mut seg = 0;
    (0..l)
        .map(|j| {
            if j == 0 {
                return values[0];
            }
            if j == l - 1 {
                return values[k - 1];
            }
            let x = lo + j as f64 * step;
            while seg + 2 < k && xs[seg + 1] < x {
                seg += 1;
            }
            let t = (x - xs[seg]) / (xs[seg + 1] - xs[seg]);
            values[seg] + t * (values[seg + 1] - values[seg])
        })
        .collect()
}

/// Configuration for CQCC extraction.
#[derive(Debug, Clone)]
pub struct CqccConfig {
    /// Lowest analyzed frequency. 125 Hz puts six octaves below an 8 kHz
    /// Nyquist and keeps the longest analysis window within a two-second
    /// utterance at 16 kHz.
    pub f_min_hz: f64,
    /// Highest analyzed frequency; `None` means Nyquist.
    pub f_max_hz: Option<f64>,
    pub bins_per_octave: usize,
    pub hop_ms: f64,
    /// Number of uniform resampling points.
    pub num_linear_bins: usize,
    pub num_ceps: usize,
    pub delta_window: Option<usize>,
    pub energy_floor: f64,
}

impl Default for CqccConfig {
    fn default() -> Self {
        Self {
            f_min_hz: 125.0,
            f_max_hz: None,
            bins_per_octave: 96,
            hop_ms: 10.0,
            num_linear_bins: 1024,
            num_ceps: 20,
            delta_window: Some(2),
            energy_floor: ENERGY_FLOOR,
        }
    }
}

impl CqccConfig {
    fn digest(&self, sample_rate_hz: u32) -> String {
        digest_str(&format!(
            "kind=CQCC;fmin={};fmax={:?};B={};hop={};L={};C={};deltas={:?};floor={};fs={}",
            self.f_min_hz,
            self.f_max_hz,
            self.bins_per_octave,
            self.hop_ms,
            self.num_linear_bins,
            self.num_ceps,
            self.delta_window,
            self.energy_floor,
            sample_rate_hz,
        ))
    }
}

/// Extract CQCC features using a prebuilt transform (preferred when many
/// utterances share one configuration).
pub fn extract_cqcc_with(transform: &CqtTransform, w: &Waveform, cfg: &CqccConfig) -> Result<FeatureMatrix> {
    let mag = transform.apply(w, cfg.hop_ms)?;
    let spec = transform.spec();

    // Log power on the geometric grid, floored for silence.
    let log_power = mag.mapv(|m| (m * m).max(cfg.energy_floor).ln());

    let l = cfg.num_linear_bins;
    let mut uniform = Array2::<f64>::zeros((log_power.nrows(), l));
    for (t, row) in log_power.rows().into_iter().enumerate() {
        let resampled = resample_geometric_to_linear(
            row.as_slice().expect("contiguous row"),
            spec.center_freqs_hz(),
            l,
        );
        for (j, v) in resampled.into_iter().enumerate() {
            uniform[(t, j)] = v;
        }
    }

    if cfg.num_ceps > l {
        return Err(Error::TooManyCeps {
            requested: cfg.num_ceps,
            available: l,
        });
    }
    let basis = dct_basis(l, cfg.num_ceps);
    let ceps = uniform.dot(&basis);
    let mut feat = FeatureMatrix::new(ceps, FeatureKind::Cqcc, String::new())?;
    if let Some(dw) = cfg.delta_window {
        feat = append_deltas(&feat, dw);
    }
    Ok(feat.with_digest(digest_str(&format!(
        "{};{}",
        cfg.digest(w.sample_rate_hz()),
        spec.digest_part()
    ))))
}

/// Full CQCC pipeline for one utterance.
pub fn extract_cqcc(w: &Waveform, cfg: &CqccConfig) -> Result<FeatureMatrix> {
    let f_max = cfg.f_max_hz.unwrap_or(w.sample_rate_hz() as f64 / 2.0);
    let spec = CqtSpec::new(cfg.f_min_hz, f_max, cfg.bins_per_octave, w.sample_rate_hz())?;
    extract_cqcc_with(&CqtTransform::new(spec), w, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, fs: u32, n: usize) -> Waveform {
        let samples = (0..n)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / fs as f64).sin())
            .collect();
        Waveform::new(samples, fs).unwrap()
    }

    #[test]
    fn q_factor_closed_form_for_96_bins() {
        let spec = CqtSpec::new(125.0, 8000.0, 96, 16000).unwrap();
        // 1 / (2^(1/96) - 1)
        assert!((spec.q_factor() - 137.9993256150781).abs() < 1e-9);
    }

    #[test]
    fn geometry_formulas_hold() {
        let spec = CqtSpec::new(125.0, 8000.0, 96, 16000).unwrap();
        assert_eq!(spec.num_bins(), 577);
        assert!((spec.center_freqs_hz()[576] - 8000.0).abs() < 1e-6);
        // Window lengths strictly non-increasing, N_k = ceil(Q*fs/f_k).
        for k in 0..spec.num_bins() {
            let expect = (spec.q_factor() * 16000.0 / spec.center_freqs_hz()[k]).ceil() as usize;
            assert_eq!(spec.window_lens()[k], expect);
            if k > 0 {
                assert!(spec.window_lens()[k] <= spec.window_lens()[k - 1]);
            }
        }
    }

    #[test]
    fn degenerate_band_is_rejected() {
        assert!(matches!(
            CqtSpec::new(500.0, 15.0, 96, 16000),
            Err(Error::BandOutOfRange(_))
        ));
        assert!(matches!(
            CqtSpec::new(100.0, 9000.0, 96, 16000),
            Err(Error::BandOutOfRange(_))
        ));
    }

    #[test]
    fn pure_tone_peaks_on_bin_three() {
        let b = 24;
        let spec = CqtSpec::new(400.0, 4000.0, b, 16000).unwrap();
        let f3 = 400.0 * 2f64.powf(3.0 / b as f64);
        let w = tone(f3, 16000, 2 * spec.max_window_len());
        let mag = cqt(&w, &spec, 20.0).unwrap();
        // Use an interior frame so the window is fully inside the signal.
        let t = mag.nrows() / 2;
        let argmax = mag
            .row(t)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 3);
    }

    #[test]
    fn short_signal_is_rejected() {
        let spec = CqtSpec::new(400.0, 4000.0, 24, 16000).unwrap();
        let w = tone(500.0, 16000, spec.max_window_len() - 1);
        assert!(matches!(cqt(&w, &spec, 10.0), Err(Error::SignalTooShort { .. })));
    }

    #[test]
    fn resampling_preserves_constants_and_endpoints() {
        let xs: Vec<f64> = (0..16).map(|k| 100.0 * 2f64.powf(k as f64 / 4.0)).collect();
        let row = vec![3.25; 16];
        let out = resample_geometric_to_linear(&row, &xs, 64);
        assert_eq!(out.len(), 64);
        assert!(out.iter().all(|&v| (v - 3.25).abs() < 1e-12));

        let ramp: Vec<f64> = (0..16).map(|k| k as f64 * 0.5 - 2.0).collect();
        let out = resample_geometric_to_linear(&ramp, &xs, 33);
        assert_eq!(out[0], ramp[0]);
        assert_eq!(out[32], ramp[15]);
    }

    #[test]
    fn resampling_a_line_in_frequency_is_exact() {
        // Values linear in f: interpolation in f reproduces the line exactly
        // at every uniform point regardless of the geometric abscissae.
        let xs: Vec<f64> = (0..24).map(|k| 50.0 * 2f64.powf(k as f64 / 8.0)).collect();
        let line = |f: f64| 0.3 * f - 7.0;
        let row: Vec<f64> = xs.iter().map(|&f| line(f)).collect();
        let l = 101;
        let out = resample_geometric_to_linear(&row, &xs, l);
        let (lo, hi) = (xs[0], xs[23]);
        for (j, v) in out.iter().enumerate() {
            let f = lo + (hi - lo) * j as f64 / (l - 1) as f64;
            assert!((v - line(f)).abs() < 1e-9, "j={j}: {v} vs {}", line(f));
        }
    }

    fn small_cqcc_config() -> CqccConfig {
        CqccConfig {
            f_min_hz: 250.0,
            f_max_hz: Some(4000.0),
            bins_per_octave: 24,
            hop_ms: 10.0,
            num_linear_bins: 128,
            num_ceps: 20,
            delta_window: Some(2),
            energy_floor: ENERGY_FLOOR,
        }
    }

    #[test]
    fn cqcc_shape_and_finiteness() {
        let w = tone(1000.0, 16000, 32000);
        let feat = extract_cqcc(&w, &small_cqcc_config()).unwrap();
        assert_eq!(feat.dim(), 60);
        assert_eq!(feat.kind(), FeatureKind::Cqcc);
        assert!(feat.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cqcc_extraction_is_deterministic() {
        let w = tone(700.0, 16000, 32000);
        let cfg = small_cqcc_config();
        let a = extract_cqcc(&w, &cfg).unwrap();
        let b = extract_cqcc(&w, &cfg).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.config_digest(), b.config_digest());
    }

    #[test]
    fn tone_and_noise_separate_in_c1() {
        // A tonal signal concentrates energy; wideband noise spreads it. The
        // utterance-level mean of the first cepstral coefficient must differ
        // by far more than its own sampling uncertainty.
        let fs = 16000;
        let n = 32000;
        let w_tone = tone(1000.0, fs, n);
        let energy: f64 = w_tone.samples().iter().map(|x| x * x).sum();

        let mut state = 0x853c49e6748fea9bu64;
        let mut noise: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let noise_energy: f64 = noise.iter().map(|x| x * x).sum();
        let scale = (energy / noise_energy).sqrt();
        noise.iter_mut().for_each(|x| *x *= scale);
        let w_noise = Waveform::new(noise, fs).unwrap();

        let cfg = small_cqcc_config();
        let f_tone = extract_cqcc(&w_tone, &cfg).unwrap();
        let f_noise = extract_cqcc(&w_noise, &cfg).unwrap();

        let col = |f: &FeatureMatrix| -> (f64, f64) {
            let c1: Vec<f64> = f.values().column(1).to_vec();
            let t = c1.len() as f64;
            let mean = c1.iter().sum::<f64>() / t;
            let var = c1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
            (mean, (var / t).sqrt()) // standard error of the mean
        };
        let (m_tone, se_tone) = col(&f_tone);
        let (m_noise, se_noise) = col(&f_noise);
        let sep = (m_tone - m_noise).abs();
        let within = se_tone.max(se_noise).max(1e-12);
        assert!(sep >= 10.0 * within, "separation {sep} vs uncertainty {within}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn geometry_invariants_hold_for_random_bands(
            b in 2usize..48,
            fmin in 20.0f64..500.0,
            octaves in 1.0f64..4.0,
        ) {
            let fmax = (fmin * 2f64.powf(octaves)).min(8000.0);
            prop_assume!(fmax > fmin);
            let spec = CqtSpec::new(fmin, fmax, b, 16000).unwrap();
            let expect_k = (b as f64 * (fmax / fmin).log2()).floor() as usize + 1;
            prop_assert_eq!(spec.num_bins(), expect_k);
            let q = 1.0 / (2f64.powf(1.0 / b as f64) - 1.0);
            prop_assert!((spec.q_factor() - q).abs() < 1e-12);
            for k in 0..spec.num_bins() {
                let fk = fmin * 2f64.powf(k as f64 / b as f64);
                prop_assert!((spec.center_freqs_hz()[k] - fk).abs() < 1e-9 * fk);
                prop_assert!(spec.center_freqs_hz()[k] <= fmax * (1.0 + 1e-12));
            }
        }
    }
}
