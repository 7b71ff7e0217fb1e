//! STFT-based front-ends: linear / mel / inverse-mel triangular filterbanks,
//! log filterbank energies (LFBE, MFBE, IMFBE), their DCT cepstra
//! (LFCC, MFCC, IMFCC) and delta appending.

use ndarray::{concatenate, Array2, Axis};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::{frame_and_window, pre_emphasis, FrameMatrix, Waveform, WindowKind};
use crate::error::{Error, Result};
use crate::features::{digest_str, FeatureKind, FeatureMatrix};

/// Default log-energy floor applied before `ln`, so digital silence maps to
/// a finite constant instead of -inf.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// Convert Hz to mel: `2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

/// Inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Magnitude-squared one-sided spectrum of each frame, zero-padded to `nfft`.
///
/// Entry `(t, k)` is `|DFT_k(frame_t)|^2` for `k = 0..=nfft/2` of the
/// unnormalized DFT, so summing over all bins (doubling the interior ones)
/// equals `nfft` times the frame energy.
pub fn power_spectrum(frames: &FrameMatrix, nfft: usize) -> Result<Array2<f64>> {
    let n = frames.frame_len_samples();
    if !nfft.is_power_of_two() || nfft < n {
        return Err(Error::BadFftSize { nfft, frame_len: n });
    }
    let bins = nfft / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);

    let t_count = frames.num_frames();
    let mut out = Array2::<f64>::zeros((t_count, bins));
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for t in 0..t_count {
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < n {
                Complex::new(frames.frames()[(t, i)], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for k in 0..bins {
            out[(t, k)] = buf[k].norm_sqr();
        }
    }
    Ok(out)
}

/// Filterbank warping family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterbankKind {
    Linear,
    Mel,
    InverseMel,
}

impl FilterbankKind {
    fn energy_feature(&self) -> FeatureKind {
        match self {
            FilterbankKind::Linear => FeatureKind::Lfbe,
            FilterbankKind::Mel => FeatureKind::Mfbe,
            FilterbankKind::InverseMel => FeatureKind::Imfbe,
        }
    }
}

/// Bank of `M` triangular filters over the one-sided FFT bins.
///
/// Every row peaks at exactly 1 over a contiguous bin range; center
/// frequencies are strictly increasing.
#[derive(Debug, Clone)]
pub struct FilterbankSpec {
    kind: FilterbankKind,
    num_filters: usize,
    nfft: usize,
    sample_rate_hz: u32,
    f_min_hz: f64,
    f_max_hz: f64,
    centers_hz: Vec<f64>,
    weights: Array2<f64>,
}

impl FilterbankSpec {
    pub fn kind(&self) -> FilterbankKind {
        self.kind
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// `M x (nfft/2 + 1)` triangle weights.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    fn digest(&self) -> String {
        digest_str(&format!(
            "fb:{:?};M={};nfft={};fs={};fmin={};fmax={}",
            self.kind, self.num_filters, self.nfft, self.sample_rate_hz, self.f_min_hz, self.f_max_hz
        ))
    }
}

/// Build a triangular filterbank with `m` filters spanning `[f_min, f_max]`.
///
/// Boundary points are equally spaced in Hz (linear), in mel (mel), or are
/// the mel points mirrored about the band midpoint (inverse-mel), which makes
/// the inverse-mel resolution dense at high frequencies.
pub fn build_filterbank(
    kind: FilterbankKind,
    m: usize,
    nfft: usize,
    sample_rate_hz: u32,
    f_min_hz: f64,
    f_max_hz: f64,
) -> Result<FilterbankSpec> {
    let nyquist = sample_rate_hz as f64 / 2.0;
    if !(f_min_hz >= 0.0 && f_min_hz < f_max_hz && f_max_hz <= nyquist) {
        return Err(Error::BadBand(format!(
            "need 0 <= f_min < f_max <= {nyquist}, got [{f_min_hz}, {f_max_hz}]"
        )));
    }
    if m < 2 {
        return Err(Error::BadBand(format!("need at least 2 filters, got {m}")));
    }

    // M + 2 boundary points; centers are the interior M points.
    let num_points = m + 2;
    let points: Vec<f64> = match kind {
        FilterbankKind::Linear => (0..num_points)
            .map(|i| f_min_hz + (f_max_hz - f_min_hz) * i as f64 / (num_points - 1) as f64)
            .collect(),
        FilterbankKind::Mel => {
            let (lo, hi) = (hz_to_mel(f_min_hz), hz_to_mel(f_max_hz));
            (0..num_points)
                .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (num_points - 1) as f64))
                .collect()
        }
        FilterbankKind::InverseMel => {
            let mel = build_filterbank(FilterbankKind::Mel, m, nfft, sample_rate_hz, f_min_hz, f_max_hz)?;
            let mut pts = vec![f_min_hz];
            pts.extend(mel.centers_hz.iter().rev().map(|c| f_min_hz + f_max_hz - c));
            pts.push(f_max_hz);
            pts
        }
    };

    let bins = nfft / 2 + 1;
    let bin_hz = sample_rate_hz as f64 / nfft as f64;
    let mut weights = Array2::<f64>::zeros((m, bins));
    for f in 0..m {
        let (left, center, right) = (points[f], points[f + 1], points[f + 2]);
        for k in 0..bins {
            let fk = k as f64 * bin_hz;
            let v = if fk >= left && fk <= center && center > left {
                (fk - left) / (center - left)
            } else if fk > center && fk <= right && right > center {
                (right - fk) / (right - center)
            } else {
                0.0
            };
            weights[(f, k)] = v;
        }
        // Normalize to peak 1; a filter narrower than one bin gets a single
        // unit weight at the bin nearest its center.
        let peak = weights.row(f).iter().cloned().fold(0.0f64, f64::max);
        if peak > 0.0 {
            weights.row_mut(f).mapv_inplace(|v| v / peak);
        } else {
            let k = (center / bin_hz).round().min((bins - 1) as f64) as usize;
            weights[(f, k)] = 1.0;
        }
    }

    let centers_hz = points[1..=m].to_vec();
    debug_assert!(centers_hz.windows(2).all(|w| w[0] < w[1]));
    Ok(FilterbankSpec {
        kind,
        num_filters: m,
        nfft,
        sample_rate_hz,
        f_min_hz,
        f_max_hz,
        centers_hz,
        weights,
    })
}

/// Floored log filterbank energies: entry `(t, m)` is
/// `ln(max(sum_k fb[m,k] * powspec[t,k], floor))`.
pub fn filterbank_log_energies(
    powspec: &Array2<f64>,
    fb: &FilterbankSpec,
    floor: f64,
) -> Result<FeatureMatrix> {
    if powspec.ncols() != fb.weights.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "power spectrum has {} bins, filterbank expects {}",
            powspec.ncols(),
            fb.weights.ncols()
        )));
    }
    let energies = powspec.dot(&fb.weights.t());
    let values = energies.mapv(|e| e.max(floor).ln());
    FeatureMatrix::new(
        values,
        fb.kind.energy_feature(),
        digest_str(&format!("{};floor={floor}", fb.digest())),
    )
}

/// Orthonormal DCT-II basis: `(m, c)` entry is `s_c * cos(pi*(m+0.5)*c/M)`.
pub(crate) fn dct_basis(m: usize, num_ceps: usize) -> Array2<f64> {
    let mut basis = Array2::<f64>::zeros((m, num_ceps));
    for c in 0..num_ceps {
        let scale = if c == 0 {
            (1.0 / m as f64).sqrt()
        } else {
            (2.0 / m as f64).sqrt()
        };
        for i in 0..m {
            basis[(i, c)] =
                scale * (std::f64::consts::PI * (i as f64 + 0.5) * c as f64 / m as f64).cos();
        }
    }
    basis
}

/// Orthonormal DCT-II over the filter axis, keeping coefficients `0..num_ceps`.
pub fn dct_cepstra(log_energies: &FeatureMatrix, num_ceps: usize) -> Result<FeatureMatrix> {
    let m = log_energies.dim();
    if num_ceps > m {
        return Err(Error::TooManyCeps {
            requested: num_ceps,
            available: m,
        });
    }
    let kind = match log_energies.kind() {
        FeatureKind::Lfbe => FeatureKind::Lfcc,
        FeatureKind::Mfbe => FeatureKind::Mfcc,
        FeatureKind::Imfbe => FeatureKind::Imfcc,
        other => {
            return Err(Error::KindMismatch {
                model: "filterbank energies".into(),
                features: other.to_string(),
            })
        }
    };
    let basis = dct_basis(m, num_ceps);
    let values = log_energies.values().dot(&basis);
    FeatureMatrix::new(
        values,
        kind,
        digest_str(&format!("{};dct={num_ceps}", log_energies.config_digest())),
    )
}

/// Append delta and delta-delta regression coefficients: `D` becomes `3D`.
///
/// `delta_t = sum_{tau=1..W} tau * (f[t+tau] - f[t-tau]) / (2 * sum tau^2)`
/// with edge frames replicated.
pub fn append_deltas(f: &FeatureMatrix, window: usize) -> FeatureMatrix {
    assert!(window >= 1, "delta window must be at least 1");
    let statics = f.values();
    let deltas = regression(statics, window);
    let accels = regression(&deltas, window);
    let values = concatenate(
        Axis(1),
        &[statics.view(), deltas.view(), accels.view()],
    )
    .expect("rows match");
    FeatureMatrix::new(
        values,
        f.kind(),
        digest_str(&format!("{};deltas={window}", f.config_digest())),
    )
    .expect("finite by construction")
}

fn regression(x: &Array2<f64>, w: usize) -> Array2<f64> {
    let t_count = x.nrows();
    let denom: f64 = 2.0 * (1..=w).map(|tau| (tau * tau) as f64).sum::<f64>();
    let clamp = |t: isize| t.clamp(0, t_count as isize - 1) as usize;
    let mut out = Array2::<f64>::zeros(x.raw_dim());
    for t in 0..t_count {
        for tau in 1..=w {
            let ahead = x.row(clamp(t as isize + tau as isize));
            let behind = x.row(clamp(t as isize - tau as isize));
            let scale = tau as f64 / denom;
            let mut row = out.row_mut(t);
            row += &(&ahead.to_owned() * scale);
            row -= &(&behind.to_owned() * scale);
        }
    }
    out
}

/// Per-utterance cepstral mean/variance normalization over the time axis.
fn cmvn(values: &mut Array2<f64>) {
    let t = values.nrows() as f64;
    for mut col in values.columns_mut() {
        let mean = col.sum() / t;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
        let sd = var.sqrt().max(1e-10);
        col.mapv_inplace(|v| (v - mean) / sd);
    }
}

/// Configuration for one STFT-based front-end.
#[derive(Debug, Clone)]
pub struct SpectralConfig {
    pub kind: FeatureKind,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub window: WindowKind,
    pub pre_emphasis: f64,
    pub nfft: usize,
    pub num_filters: usize,
    pub num_ceps: usize,
    /// Lower band edge in Hz.
    pub f_min_hz: f64,
    /// Upper band edge in Hz; `None` means Nyquist.
    pub f_max_hz: Option<f64>,
    /// Keep the zeroth cepstral coefficient (cepstral kinds only); dropping
    /// it yields `num_ceps - 1` static coefficients.
    pub keep_c0: bool,
    /// Delta regression window; `None` disables dynamic coefficients.
    pub delta_window: Option<usize>,
    /// Per-utterance cepstral mean/variance normalization.
    pub cmvn: bool,
    pub energy_floor: f64,
}

impl SpectralConfig {
    /// Conventional defaults: 25 ms / 10 ms Hamming frames, 0.97 pre-emphasis,
    /// 512-point FFT, 20 filters for cepstra (keeping 20 coefficients) and 40
    /// for filterbank energies, deltas with window 2.
    pub fn for_kind(kind: FeatureKind) -> Self {
        let cepstral = kind.is_cepstral();
        Self {
            kind,
            frame_ms: 25.0,
            hop_ms: 10.0,
            window: WindowKind::Hamming,
            pre_emphasis: 0.97,
            nfft: 512,
            num_filters: if cepstral { 20 } else { 40 },
            num_ceps: 20,
            f_min_hz: 0.0,
            f_max_hz: None,
            keep_c0: true,
            delta_window: Some(2),
            cmvn: false,
            energy_floor: ENERGY_FLOOR,
        }
    }

    fn filterbank_kind(&self) -> Result<FilterbankKind> {
        match self.kind {
            FeatureKind::Lfcc | FeatureKind::Lfbe => Ok(FilterbankKind::Linear),
            FeatureKind::Mfcc | FeatureKind::Mfbe => Ok(FilterbankKind::Mel),
            FeatureKind::Imfcc | FeatureKind::Imfbe => Ok(FilterbankKind::InverseMel),
            FeatureKind::Cqcc => Err(Error::KindMismatch {
                model: "spectral front-end".into(),
                features: "CQCC".into(),
            }),
        }
    }

    fn digest(&self, sample_rate_hz: u32) -> String {
        digest_str(&format!(
            "kind={};frame={};hop={};win={};pre={};nfft={};M={};C={};fmin={};fmax={:?};c0={};deltas={:?};cmvn={};floor={};fs={}",
            self.kind,
            self.frame_ms,
            self.hop_ms,
            self.window.as_str(),
            self.pre_emphasis,
            self.nfft,
            self.num_filters,
            self.num_ceps,
            self.f_min_hz,
            self.f_max_hz,
            self.keep_c0,
            self.delta_window,
            self.cmvn,
            self.energy_floor,
            sample_rate_hz,
        ))
    }
}

/// Run the full STFT pipeline for one utterance:
/// pre-emphasis -> framing/windowing -> power spectrum -> filterbank log
/// energies, then the DCT and delta stages the configured kind asks for.
pub fn extract_spectral_feature(w: &Waveform, cfg: &SpectralConfig) -> Result<FeatureMatrix> {
    let fb_kind = cfg.filterbank_kind()?;
    let f_max = cfg.f_max_hz.unwrap_or(w.sample_rate_hz() as f64 / 2.0);

    let emphasized = pre_emphasis(w, cfg.pre_emphasis);
    let frames = frame_and_window(&emphasized, cfg.frame_ms, cfg.hop_ms, cfg.window)?;
    let powspec = power_spectrum(&frames, cfg.nfft)?;
    let fb = build_filterbank(
        fb_kind,
        cfg.num_filters,
        cfg.nfft,
        w.sample_rate_hz(),
        cfg.f_min_hz,
        f_max,
    )?;
    let mut feat = filterbank_log_energies(&powspec, &fb, cfg.energy_floor)?;

    if cfg.kind.is_cepstral() {
        feat = dct_cepstra(&feat, cfg.num_ceps)?;
        if !cfg.keep_c0 {
            let trimmed = feat.values().slice(ndarray::s![.., 1..]).to_owned();
            feat = FeatureMatrix::new(trimmed, feat.kind(), feat.config_digest().to_string())?;
        }
    }
    if cfg.cmvn {
        let mut values = feat.values().clone();
        cmvn(&mut values);
        feat = FeatureMatrix::new(values, feat.kind(), feat.config_digest().to_string())?;
    }
    if let Some(w) = cfg.delta_window {
        feat = append_deltas(&feat, w);
    }
    Ok(feat.with_digest(cfg.digest(w.sample_rate_hz())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Waveform;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn frames_from(values: Array2<f64>) -> FrameMatrix {
        // Build a FrameMatrix through the public API: one synthetic signal per
        // row is overkill, so tests reuse frame_and_window on a rect window
        // with hop == frame length, which yields exactly the rows provided.
        let n = values.ncols();
        let t = values.nrows();
        let mut samples = Vec::with_capacity(n * t);
        for row in values.rows() {
            samples.extend(row.iter());
        }
        let w = Waveform::new(samples, 1000).unwrap();
        frame_and_window(&w, n as f64, n as f64, WindowKind::Rect).unwrap()
    }

    #[test]
    fn bin_aligned_cosine_peaks_on_its_bin() {
        let nfft = 256;
        let k0 = 17;
        let row: Vec<f64> = (0..nfft)
            .map(|n| (2.0 * PI * k0 as f64 * n as f64 / nfft as f64).cos())
            .collect();
        let frames = frames_from(Array2::from_shape_vec((1, nfft), row).unwrap());
        let ps = power_spectrum(&frames, nfft).unwrap();
        let argmax = ps
            .row(0)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, k0);
    }

    #[test]
    fn zero_frame_gives_zero_spectrum() {
        let frames = frames_from(Array2::zeros((1, 64)));
        let ps = power_spectrum(&frames, 64).unwrap();
        assert!(ps.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parseval_with_symmetric_bin_doubling() {
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let nfft = 128;
        let row: Vec<f64> = (0..nfft).map(|_| next()).collect();
        let time_energy: f64 = row.iter().map(|x| x * x).sum();
        let frames = frames_from(Array2::from_shape_vec((1, nfft), row).unwrap());
        let ps = power_spectrum(&frames, nfft).unwrap();
        let mut spec_energy = ps[(0, 0)] + ps[(0, nfft / 2)];
        for k in 1..nfft / 2 {
            spec_energy += 2.0 * ps[(0, k)];
        }
        let expect = nfft as f64 * time_energy;
        assert!(
            (spec_energy - expect).abs() / expect < 1e-6,
            "{spec_energy} vs {expect}"
        );
    }

    #[test]
    fn bad_fft_size_is_rejected() {
        let frames = frames_from(Array2::zeros((1, 100)));
        assert!(matches!(
            power_spectrum(&frames, 96),
            Err(Error::BadFftSize { .. })
        ));
        assert!(matches!(
            power_spectrum(&frames, 64),
            Err(Error::BadFftSize { .. })
        ));
    }

    #[test]
    fn mel_of_1000_hz() {
        assert!((hz_to_mel(1000.0) - 999.99).abs() < 0.01);
    }

    #[test]
    fn linear_centers_are_equally_spaced() {
        let fb = build_filterbank(FilterbankKind::Linear, 10, 512, 16000, 0.0, 8000.0).unwrap();
        let spacing = 8000.0 / 11.0;
        for (i, c) in fb.centers_hz().iter().enumerate() {
            assert!((c - spacing * (i + 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_mel_centers_mirror_mel_centers() {
        let (f_min, f_max) = (0.0, 8000.0);
        let mel = build_filterbank(FilterbankKind::Mel, 20, 512, 16000, f_min, f_max).unwrap();
        let inv = build_filterbank(FilterbankKind::InverseMel, 20, 512, 16000, f_min, f_max).unwrap();
        let mirrored: Vec<f64> = mel
            .centers_hz()
            .iter()
            .rev()
            .map(|c| f_min + f_max - c)
            .collect();
        for (a, b) in inv.centers_hz().iter().zip(&mirrored) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn filter_rows_peak_at_one_and_are_contiguous() {
        for kind in [FilterbankKind::Linear, FilterbankKind::Mel, FilterbankKind::InverseMel] {
            let fb = build_filterbank(kind, 24, 512, 16000, 0.0, 8000.0).unwrap();
            for row in fb.weights().rows() {
                let peak = row.iter().cloned().fold(0.0f64, f64::max);
                assert!((peak - 1.0).abs() < 1e-12);
                let support: Vec<usize> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(k, _)| k)
                    .collect();
                assert!(!support.is_empty());
                assert_eq!(
                    support.last().unwrap() - support.first().unwrap() + 1,
                    support.len(),
                    "support must be contiguous"
                );
            }
        }
    }

    #[test]
    fn inverse_mel_weights_are_mel_weights_bin_reversed_over_full_band() {
        // Over [0, Nyquist] the mirror maps bin k to (nbins-1)-k, up to the
        // one-bin rounding at triangle edges.
        let nfft = 512;
        let mel = build_filterbank(FilterbankKind::Mel, 20, nfft, 16000, 0.0, 8000.0).unwrap();
        let inv = build_filterbank(FilterbankKind::InverseMel, 20, nfft, 16000, 0.0, 8000.0).unwrap();
        let bins = nfft / 2 + 1;
        let mut max_err = 0.0f64;
        for f in 0..20 {
            for k in 0..bins {
                let a = inv.weights()[(f, k)];
                let b = mel.weights()[(19 - f, bins - 1 - k)];
                // Allow one-bin shift: compare against the best neighbor.
                let neighbors = [
                    b,
                    if k > 0 { mel.weights()[(19 - f, bins - k)] } else { b },
                    if k + 1 < bins { mel.weights()[(19 - f, bins - 2 - k)] } else { b },
                ];
                let err = neighbors
                    .iter()
                    .map(|n| (a - n).abs())
                    .fold(f64::INFINITY, f64::min);
                max_err = max_err.max(err);
            }
        }
        assert!(max_err < 0.35, "max weight error {max_err} beyond edge rounding");
    }

    #[test]
    fn bad_band_is_rejected() {
        assert!(matches!(
            build_filterbank(FilterbankKind::Mel, 20, 512, 16000, 4000.0, 2000.0),
            Err(Error::BadBand(_))
        ));
        assert!(matches!(
            build_filterbank(FilterbankKind::Mel, 20, 512, 16000, 0.0, 9000.0),
            Err(Error::BadBand(_))
        ));
    }

    #[test]
    fn zero_spectrum_hits_floor() {
        let fb = build_filterbank(FilterbankKind::Linear, 8, 64, 16000, 0.0, 8000.0).unwrap();
        let ps = Array2::<f64>::zeros((3, 33));
        let e = filterbank_log_energies(&ps, &fb, 1e-10).unwrap();
        for &v in e.values() {
            assert!((v - (1e-10f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_spectrum_gives_log_weight_sums() {
        let fb = build_filterbank(FilterbankKind::Linear, 8, 64, 16000, 0.0, 8000.0).unwrap();
        let ps = Array2::<f64>::ones((1, 33));
        let e = filterbank_log_energies(&ps, &fb, 1e-10).unwrap();
        for (m, &v) in e.values().row(0).iter().enumerate() {
            let expect = fb.weights().row(m).sum().max(1e-10).ln();
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_scaling_shifts_log_energies() {
        let fb = build_filterbank(FilterbankKind::Mel, 8, 64, 16000, 0.0, 8000.0).unwrap();
        let ps = Array2::<f64>::ones((1, 33)) * 0.5;
        let base = filterbank_log_energies(&ps, &fb, 1e-10).unwrap();
        let scaled = filterbank_log_energies(&(&ps * 3.0), &fb, 1e-10).unwrap();
        for (a, b) in base.values().iter().zip(scaled.values()) {
            assert!((b - a - 3.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let fb = build_filterbank(FilterbankKind::Mel, 8, 64, 16000, 0.0, 8000.0).unwrap();
        let ps = Array2::<f64>::ones((1, 20));
        assert!(matches!(
            filterbank_log_energies(&ps, &fb, 1e-10),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn dct_of_constant_row() {
        let m = 16;
        let v = 2.5;
        let fm = FeatureMatrix::new(Array2::ones((1, m)) * v, FeatureKind::Mfbe, String::new()).unwrap();
        let ceps = dct_cepstra(&fm, m).unwrap();
        assert!((ceps.values()[(0, 0)] - v * (m as f64).sqrt()).abs() < 1e-9);
        for c in 1..m {
            assert!(ceps.values()[(0, c)].abs() < 1e-9);
        }
        assert_eq!(ceps.kind(), FeatureKind::Mfcc);
    }

    #[test]
    fn dct_is_orthonormal() {
        let m = 12;
        let row: Vec<f64> = (0..m).map(|i| (i as f64 * 0.7).sin()).collect();
        let fm = FeatureMatrix::new(
            Array2::from_shape_vec((1, m), row.clone()).unwrap(),
            FeatureKind::Lfbe,
            String::new(),
        )
        .unwrap();
        let ceps = dct_cepstra(&fm, m).unwrap();
        let in_norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let out_norm: f64 = ceps.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((in_norm - out_norm).abs() < 1e-9);

        // Inverse via transpose reproduces the row.
        let basis = dct_basis(m, m);
        let back = ceps.values().dot(&basis.t());
        for (a, b) in back.iter().zip(&row) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn too_many_ceps_is_rejected() {
        let fm = FeatureMatrix::new(Array2::ones((1, 8)), FeatureKind::Lfbe, String::new()).unwrap();
        assert!(matches!(
            dct_cepstra(&fm, 9),
            Err(Error::TooManyCeps { requested: 9, available: 8 })
        ));
    }

    #[test]
    fn deltas_of_constant_are_zero() {
        let fm = FeatureMatrix::new(Array2::ones((10, 4)) * 3.0, FeatureKind::Mfcc, String::new()).unwrap();
        let out = append_deltas(&fm, 2);
        assert_eq!(out.dim(), 12);
        for t in 0..10 {
            for d in 4..12 {
                assert!(out.values()[(t, d)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deltas_of_ramp_are_one_in_the_interior() {
        let t_count = 12;
        let mut m = Array2::<f64>::zeros((t_count, 2));
        for t in 0..t_count {
            m[(t, 0)] = t as f64;
            m[(t, 1)] = t as f64;
        }
        let fm = FeatureMatrix::new(m, FeatureKind::Mfcc, String::new()).unwrap();
        let out = append_deltas(&fm, 2);
        for t in 2..t_count - 2 {
            assert!((out.values()[(t, 2)] - 1.0).abs() < 1e-12);
            assert!((out.values()[(t, 3)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_append_triples_dimension() {
        let fm = FeatureMatrix::new(Array2::ones((5, 20)), FeatureKind::Mfcc, String::new()).unwrap();
        assert_eq!(append_deltas(&fm, 2).dim(), 60);
    }

    fn tone_waveform(seconds: f64, fs: u32) -> Waveform {
        let n = (seconds * fs as f64) as usize;
        let samples = (0..n)
            .map(|i| 0.3 * (2.0 * PI * 1000.0 * i as f64 / fs as f64).sin())
            .collect();
        Waveform::new(samples, fs).unwrap()
    }

    #[test]
    fn mfcc_of_two_seconds_is_198_by_60() {
        let w = tone_waveform(2.0, 16000);
        let feat = extract_spectral_feature(&w, &SpectralConfig::for_kind(FeatureKind::Mfcc)).unwrap();
        assert_eq!(feat.num_frames(), 198);
        assert_eq!(feat.dim(), 60);
        assert_eq!(feat.kind(), FeatureKind::Mfcc);
    }

    #[test]
    fn fbe_kinds_are_120_dimensional() {
        let w = tone_waveform(1.0, 16000);
        for kind in [FeatureKind::Lfbe, FeatureKind::Mfbe, FeatureKind::Imfbe] {
            let feat = extract_spectral_feature(&w, &SpectralConfig::for_kind(kind)).unwrap();
            assert_eq!(feat.dim(), 120);
            assert_eq!(feat.kind(), kind);
        }
    }

    #[test]
    fn lfcc_and_mfcc_differ_only_through_the_filterbank() {
        let w = tone_waveform(1.0, 16000);
        let mfcc = extract_spectral_feature(&w, &SpectralConfig::for_kind(FeatureKind::Mfcc)).unwrap();
        let lfcc = extract_spectral_feature(&w, &SpectralConfig::for_kind(FeatureKind::Lfcc)).unwrap();
        assert_eq!(mfcc.num_frames(), lfcc.num_frames());
        assert_eq!(mfcc.dim(), lfcc.dim());
        assert_ne!(mfcc.config_digest(), lfcc.config_digest());
        let diff: f64 = mfcc
            .values()
            .iter()
            .zip(lfcc.values())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1.0, "different warpings must change the cepstra");
    }

    #[test]
    fn digital_silence_yields_identical_floored_frames() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let feat = extract_spectral_feature(&w, &SpectralConfig::for_kind(FeatureKind::Lfcc)).unwrap();
        let first = feat.values().row(0).to_owned();
        for row in feat.values().rows() {
            for (a, b) in row.iter().zip(first.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dropping_c0_removes_one_coefficient() {
        let w = tone_waveform(0.5, 16000);
        let mut cfg = SpectralConfig::for_kind(FeatureKind::Mfcc);
        cfg.keep_c0 = false;
        cfg.delta_window = None;
        let feat = extract_spectral_feature(&w, &cfg).unwrap();
        assert_eq!(feat.dim(), 19);
    }

    #[test]
    fn cmvn_zeroes_means() {
        let w = tone_waveform(0.5, 16000);
        let mut cfg = SpectralConfig::for_kind(FeatureKind::Mfcc);
        cfg.cmvn = true;
        cfg.delta_window = None;
        let feat = extract_spectral_feature(&w, &cfg).unwrap();
        for col in feat.values().columns() {
            let mean = col.sum() / col.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn features_are_finite_for_arbitrary_pcm16(raw in proptest::collection::vec(-32768i32..32768, 800..2000)) {
            let samples: Vec<f64> = raw.iter().map(|&q| q as f64 / 32768.0).collect();
            let w = Waveform::new(samples, 16000).unwrap();
            let mut cfg = SpectralConfig::for_kind(FeatureKind::Imfcc);
            cfg.frame_ms = 16.0;
            cfg.hop_ms = 8.0;
            cfg.nfft = 256;
            let feat = extract_spectral_feature(&w, &cfg).unwrap();
            prop_assert!(feat.values().iter().all(|v| v.is_finite()));
        }

        #[test]
        fn dct_isometry_on_random_rows(row in proptest::collection::vec(-5.0f64..5.0, 16)) {
            let fm = FeatureMatrix::new(
                Array2::from_shape_vec((1, 16), row.clone()).unwrap(),
                FeatureKind::Lfbe,
                String::new(),
            ).unwrap();
            let ceps = dct_cepstra(&fm, 16).unwrap();
            let a: f64 = row.iter().map(|v| v * v).sum();
            let b: f64 = ceps.values().iter().map(|v| v * v).sum();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));
        }

        #[test]
        fn deltas_are_translation_equivariant(
            rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 6), 8..20),
            shift in -2.0f64..2.0,
        ) {
            let t = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
            let base = Array2::from_shape_vec((t, 6), flat).unwrap();
            let shifted = &base + shift;
            let f0 = FeatureMatrix::new(base, FeatureKind::Mfcc, String::new()).unwrap();
            let f1 = FeatureMatrix::new(shifted, FeatureKind::Mfcc, String::new()).unwrap();
            let d0 = append_deltas(&f0, 2);
            let d1 = append_deltas(&f1, 2);
            for t in 0..d0.num_frames() {
                for d in 0..6 {
                    prop_assert!((d1.values()[(t, d)] - d0.values()[(t, d)] - shift).abs() < 1e-9);
                }
                for d in 6..18 {
                    prop_assert!((d1.values()[(t, d)] - d0.values()[(t, d)]).abs() < 1e-9);
                }
            }
        }
    }
}
