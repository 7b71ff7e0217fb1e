//! WAV reading/writing, pre-emphasis and overlapping windowed framing.
//!
//! Shared entry point of every front-end. Only RIFF/WAVE containers with
//! mono, signed 16-bit PCM payloads are accepted; samples are scaled by
//! 1/32768 into [-1, 1].

use std::f64::consts::PI;
use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Mono audio signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    /// Wrap raw samples. Rejects empty signals and a zero sample rate.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::SignalTooShort { len: 0, min: 1 });
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidModel("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Frames of a signal after pre-processing: `T x N` matrix, one row per frame.
#[derive(Debug, Clone)]
pub struct FrameMatrix {
    frames: Array2<f64>,
    frame_len_samples: usize,
    hop_samples: usize,
}

impl FrameMatrix {
    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn frame_len_samples(&self) -> usize {
        self.frame_len_samples
    }

    pub fn hop_samples(&self) -> usize {
        self.hop_samples
    }
}

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hamming,
    Hann,
    Rect,
}

impl WindowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WindowKind::Hamming => "hamming",
            WindowKind::Hann => "hann",
            WindowKind::Rect => "rect",
        }
    }
}

impl std::str::FromStr for WindowKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hamming" => Ok(WindowKind::Hamming),
            "hann" => Ok(WindowKind::Hann),
            "rect" | "rectangular" => Ok(WindowKind::Rect),
            other => Err(format!("unknown window kind {other:?}")),
        }
    }
}

/// Symmetric analysis window of length `n`.
pub fn window(kind: WindowKind, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let phase = 2.0 * PI * i as f64 / denom;
            match kind {
                WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                WindowKind::Rect => 1.0,
            }
        })
        .collect()
}

fn header_error(path: &Path, detail: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Read a RIFF/WAVE file containing mono signed 16-bit PCM.
///
/// Samples are scaled by 1/32768 into [-1, 1]; the sample rate comes from
/// the format chunk.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == ErrorKind::NotFound {
            Error::NotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?;

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(header_error(path, "not a RIFF/WAVE container"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| header_error(path, "chunk size exceeds file length"))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(header_error(path, "fmt chunk too small"));
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| header_error(path, "missing fmt chunk"))?;
    if channels != 1 {
        return Err(Error::UnsupportedChannelLayout {
            path: path.to_path_buf(),
            channels,
        });
    }
    if format != 1 || bits != 16 {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("format tag {format}, {bits} bits per sample"),
        });
    }
    if rate == 0 {
        return Err(header_error(path, "zero sample rate"));
    }
    let data = data.ok_or_else(|| header_error(path, "missing data chunk"))?;
    if data.is_empty() {
        return Err(header_error(path, "empty data chunk"));
    }
    if data.len() % 2 != 0 {
        return Err(header_error(path, "data chunk not a whole number of samples"));
    }

    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Waveform::new(samples, rate)
}

/// Write a waveform as mono signed 16-bit PCM.
///
/// Samples are clamped to [-1, 1] and quantized by rounding `x * 32768`,
/// so `read_wav(write_wav(w))` reproduces each sample within 1/32768.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let n = w.samples.len();
    let data_len = (n * 2) as u32;

    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&w.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate_hz * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &x in &w.samples {
        let q = (x.clamp(-1.0, 1.0) * 32768.0).round() as i32;
        out.extend_from_slice(&(q.clamp(-32768, 32767) as i16).to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// First-order high-pass: `y[0] = x[0]`, `y[n] = x[n] - coeff * x[n-1]`.
pub fn pre_emphasis(w: &Waveform, coeff: f64) -> Waveform {
    assert!((0.0..1.0).contains(&coeff), "pre-emphasis coeff must be in [0, 1)");
    let x = &w.samples;
    let mut y = Vec::with_capacity(x.len());
    y.push(x[0]);
    for n in 1..x.len() {
        y.push(x[n] - coeff * x[n - 1]);
    }
    Waveform {
        samples: y,
        sample_rate_hz: w.sample_rate_hz,
    }
}

/// Slice a signal into overlapping frames and apply an analysis window.
///
/// Frame `t` covers samples `[t*H, t*H + N)`; trailing samples that do not
/// fill a frame are dropped, so `T = (len - N) / H + 1`.
pub fn frame_and_window(
    w: &Waveform,
    frame_ms: f64,
    hop_ms: f64,
    kind: WindowKind,
) -> Result<FrameMatrix> {
    let fs = w.sample_rate_hz as f64;
    let n = (frame_ms * fs / 1000.0).round() as usize;
    let h = ((hop_ms * fs / 1000.0).round() as usize).max(1);
    assert!(n >= 2, "frame length must be at least 2 samples");

    let len = w.samples.len();
    if len < n {
        return Err(Error::SignalTooShort { len, min: n });
    }
    let t_count = (len - n) / h + 1;
    let win = window(kind, n);

    let mut frames = Array2::<f64>::zeros((t_count, n));
    for t in 0..t_count {
        let start = t * h;
        for i in 0..n {
            frames[(t, i)] = w.samples[start + i] * win[i];
        }
    }
    Ok(FrameMatrix {
        frames,
        frame_len_samples: n,
        hop_samples: h,
    })
}
