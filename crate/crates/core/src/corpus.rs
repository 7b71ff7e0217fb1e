//! Deterministic synthetic two-class corpus.
//!
//! Both classes start from the same speech-shaped, amplitude-modulated noise
//! source. The bonafide channel runs it through one pair of biquad
//! resonators; the spoof channel uses a different resonator pair, a 3.4 kHz
//! low-pass and mu-law companding with 8-bit requantization, a crude stand-in
//! for a replay chain. Every utterance derives its own RNG stream from
//! (seed, subset, index), so generation is reproducible byte for byte at any
//! worker count.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::{write_wav, Waveform};
use crate::error::{Error, Result};
use crate::protocol::{write_protocol, Label, Subset, Trial};

/// Second-order IIR section, direct form I.
#[derive(Debug, Clone)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    /// Constant-peak-gain bandpass resonator.
    fn resonator(fs: f64, f0: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b1: 0.0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    /// Second-order low-pass (Butterworth at q = 1/sqrt(2)).
    fn lowpass(fs: f64, f0: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let alpha = w0.sin() / (2.0 * q);
        let cosw = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b0: (1.0 - cosw) / 2.0 / a0,
            b1: (1.0 - cosw) / a0,
            b2: (1.0 - cosw) / 2.0 / a0,
            a1: -2.0 * cosw / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 + self.b2 * self.x2
            - self.a1 * self.y1
            - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// DSP chain for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecipe {
    /// Center frequencies of the two parallel resonators (Hz).
    pub resonator_hz: [f64; 2],
    pub resonator_q: [f64; 2],
    /// Mixing gains: two resonator outputs plus a direct path.
    pub mix: [f64; 3],
    /// Band-limiting low-pass cutoff, if any.
    pub lowpass_hz: Option<f64>,
    /// Mu-law companding with this many quantizer bits, if any.
    pub companding_bits: Option<u32>,
}

impl ClassRecipe {
    pub fn bonafide_default() -> Self {
        Self {
            resonator_hz: [800.0, 2500.0],
            resonator_q: [2.0, 1.5],
            mix: [0.6, 0.4, 0.2],
            lowpass_hz: None,
            companding_bits: None,
        }
    }

    pub fn spoof_default() -> Self {
        Self {
            resonator_hz: [600.0, 1800.0],
            resonator_q: [4.0, 3.0],
            mix: [0.6, 0.4, 0.2],
            lowpass_hz: Some(3400.0),
            companding_bits: Some(8),
        }
    }
}

/// Utterance counts for one subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsetCounts {
    pub bonafide: usize,
    pub spoof: usize,
}

/// Generator configuration.
///
/// Default counts keep roughly a 1:9 bonafide:spoof imbalance at desk scale
/// (train 129/1140, dev and eval 127/1115), two-second utterances at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub train: SubsetCounts,
    pub dev: SubsetCounts,
    pub eval: SubsetCounts,
    pub sample_rate_hz: u32,
    pub utterance_seconds: f64,
    pub seed: u64,
    pub bonafide_recipe: ClassRecipe,
    pub spoof_recipe: ClassRecipe,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train: SubsetCounts { bonafide: 129, spoof: 1140 },
            dev: SubsetCounts { bonafide: 127, spoof: 1115 },
            eval: SubsetCounts { bonafide: 127, spoof: 1115 },
            sample_rate_hz: 16000,
            utterance_seconds: 2.0,
            seed: 42,
            bonafide_recipe: ClassRecipe::bonafide_default(),
            spoof_recipe: ClassRecipe::spoof_default(),
        }
    }
}

impl SynthConfig {
    pub fn counts(&self, subset: Subset) -> SubsetCounts {
        match subset {
            Subset::Train => self.train,
            Subset::Dev => self.dev,
            Subset::Eval => self.eval,
        }
    }

    fn validate(&self) -> Result<()> {
        for subset in Subset::all() {
            let c = self.counts(subset);
            if c.bonafide == 0 || c.spoof == 0 {
                return Err(Error::GeneratorDegenerate(format!(
                    "{subset} counts must be positive, got {}/{}",
                    c.bonafide, c.spoof
                )));
            }
        }
        if self.bonafide_recipe == self.spoof_recipe {
            return Err(Error::GeneratorDegenerate(
                "class recipes are identical; the task would be unlearnable".into(),
            ));
        }
        if self.utterance_seconds <= 0.0 || self.sample_rate_hz == 0 {
            return Err(Error::GeneratorDegenerate(
                "utterance length and sample rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn mu_law_distort(x: f64, bits: u32) -> f64 {
    const MU: f64 = 255.0;
    let compressed = x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln();
    let levels = ((1u32 << (bits - 1)) - 1) as f64;
    let quantized = (compressed * levels).round() / levels;
    quantized.signum() * ((1.0 + MU).powf(quantized.abs()) - 1.0) / MU
}

/// Synthesize one utterance with the given per-utterance RNG.
fn synth_utterance(rng: &mut ChaCha8Rng, recipe: &ClassRecipe, n: usize, fs: f64) -> Vec<f64> {
    // Speech-shaped source: white noise through a one-pole low-pass.
    let pole = (-2.0 * PI * 300.0 / fs).exp();
    let mut source = Vec::with_capacity(n);
    let mut state = 0.0;
    for _ in 0..n {
        // Box-Muller-free uniform sum keeps the tails tame.
        let white: f64 = rng.random::<f64>() + rng.random::<f64>() - 1.0;
        state = (1.0 - pole) * white + pole * state;
        source.push(state);
    }

    // Syllabic amplitude modulation.
    let am_rate = rng.random_range(2.5..5.0);
    let am_phase = rng.random_range(0.0..2.0 * PI);
    for (i, s) in source.iter_mut().enumerate() {
        let m = 0.55 + 0.45 * (2.0 * PI * am_rate * i as f64 / fs + am_phase).sin();
        *s *= m;
    }

    // Class channel: two parallel resonators with +-10% per-utterance
    // frequency jitter, plus a direct path.
    let jitter = [rng.random_range(0.9..1.1), rng.random_range(0.9..1.1)];
    let mut r0 = Biquad::resonator(fs, recipe.resonator_hz[0] * jitter[0], recipe.resonator_q[0]);
    let mut r1 = Biquad::resonator(fs, recipe.resonator_hz[1] * jitter[1], recipe.resonator_q[1]);
    let mut shaped: Vec<f64> = source
        .iter()
        .map(|&x| recipe.mix[0] * r0.process(x) + recipe.mix[1] * r1.process(x) + recipe.mix[2] * x)
        .collect();

    if let Some(cutoff) = recipe.lowpass_hz {
        let mut lp = Biquad::lowpass(fs, cutoff);
        shaped.iter_mut().for_each(|s| *s = lp.process(*s));
    }

    if let Some(bits) = recipe.companding_bits {
        let peak = shaped.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-12);
        let norm = 0.9 / peak;
        shaped.iter_mut().for_each(|s| *s = mu_law_distort(*s * norm, bits) / norm);
    }

    // Equalize loudness so amplitude alone cannot separate the classes.
    let rms = (shaped.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-12);
    let gain = 0.1 / rms;
    shaped.iter_mut().for_each(|s| *s = (*s * gain).clamp(-0.99, 0.99));
    shaped
}

/// Summary of one generation run.
#[derive(Debug, Clone)]
pub struct CorpusSummary {
    pub out_dir: PathBuf,
    pub utterances: usize,
    /// Long-term energy ratio bonafide/spoof in the band above 4 kHz, dB.
    pub band_ratio_db: f64,
}

fn band_energy_fractions(samples: &[f64], fs: f64) -> (f64, f64) {
    let nfft = samples.len().next_power_of_two();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::<f64>::new().plan_fft_forward(nfft).process(&mut buf);
    let band_lo = (4000.0 * nfft as f64 / fs).ceil() as usize;
    let mut total = 0.0;
    let mut band = 0.0;
    for (k, c) in buf.iter().enumerate().take(nfft / 2 + 1) {
        let p = c.norm_sqr();
        total += p;
        if k >= band_lo {
            band += p;
        }
    }
    (band, total)
}

struct UttSpec {
    subset: Subset,
    index: usize,
    label: Label,
}

/// Generate WAV files and protocol lists under `out_dir`:
/// `{train,dev,eval}/<utt_id>.wav` plus `protocols/<subset>.txt`.
///
/// Fails with `GeneratorDegenerate` if the two class recipes do not separate
/// the long-term spectra by more than 3 dB in the distortion band.
pub fn generate_corpus(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<CorpusSummary> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir.join("protocols"))?;

    let fs = cfg.sample_rate_hz as f64;
    let n = (cfg.utterance_seconds * fs).round() as usize;
    let mut all_specs = Vec::new();
    for (si, subset) in Subset::all().into_iter().enumerate() {
        std::fs::create_dir_all(out_dir.join(subset.as_str()))?;
        let counts = cfg.counts(subset);
        for index in 0..counts.bonafide + counts.spoof {
            let label = if index < counts.bonafide {
                Label::Bonafide
            } else {
                Label::Spoof
            };
            all_specs.push((si, UttSpec { subset, index, label }));
        }
    }

    // Per-utterance generation; files and band energies are independent.
    let energies: Vec<(Label, f64, f64)> = all_specs
        .par_iter()
        .map(|(si, spec)| -> Result<(Label, f64, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((*si as u64) << 32) | spec.index as u64);
            let recipe = match spec.label {
                Label::Bonafide => &cfg.bonafide_recipe,
                Label::Spoof => &cfg.spoof_recipe,
            };
            let samples = synth_utterance(&mut rng, recipe, n, fs);
            let (band, total) = band_energy_fractions(&samples, fs);
            let utt_id = utterance_id(spec.subset, spec.index);
            let w = Waveform::new(samples, cfg.sample_rate_hz)?;
            write_wav(out_dir.join(spec.subset.as_str()).join(format!("{utt_id}.wav")), &w)?;
            Ok((spec.label, band, total))
        })
        .collect::<Result<_>>()?;

    // Long-term spectral separation in the distortion band.
    let mut acc = [[0.0f64; 2]; 2]; // [class][band, total]
    for (label, band, total) in &energies {
        let c = if *label == Label::Bonafide { 0 } else { 1 };
        acc[c][0] += band;
        acc[c][1] += total;
    }
    let bona_frac = acc[0][0] / acc[0][1];
    let spoof_frac = acc[1][0] / acc[1][1];
    let band_ratio_db = 10.0 * (bona_frac / spoof_frac).log10();
    if band_ratio_db <= 3.0 {
        return Err(Error::GeneratorDegenerate(format!(
            "distortion-band separation is only {band_ratio_db:.2} dB (need > 3 dB)"
        )));
    }

    // Protocol files, in generation order.
    for subset in Subset::all() {
        let counts = cfg.counts(subset);
        let trials: Vec<Trial> = (0..counts.bonafide + counts.spoof)
            .map(|index| {
                let label = if index < counts.bonafide {
                    Label::Bonafide
                } else {
                    Label::Spoof
                };
                Trial {
                    speaker_id: format!("S{:02}", index % 20 + 1),
                    utterance_id: utterance_id(subset, index),
                    attack_id: match label {
                        Label::Bonafide => "-".into(),
                        Label::Spoof => "A01".into(),
                    },
                    label,
                    subset,
                }
            })
            .collect();
        write_protocol(out_dir.join("protocols").join(format!("{subset}.txt")), &trials)?;
    }

    Ok(CorpusSummary {
        out_dir: out_dir.to_path_buf(),
        utterances: all_specs.len(),
        band_ratio_db,
    })
}

fn utterance_id(subset: Subset, index: usize) -> String {
    let prefix = match subset {
        Subset::Train => "T",
        Subset::Dev => "D",
        Subset::Eval => "E",
    };
    format!("{prefix}{index:06}")
}
