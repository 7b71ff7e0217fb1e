//! Error type shared by every stage of the pipeline.
//!
//! Each variant carries enough context to print a one-line diagnostic;
//! [`Error::code`] returns a stable machine-readable identifier used by the
//! CLI for exit reporting.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- audio I/O ----
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("malformed file {path}: {detail}")]
    MalformedHeader { path: PathBuf, detail: String },
    #[error("unsupported channel layout in {path}: {channels} channels (mono required)")]
    UnsupportedChannelLayout { path: PathBuf, channels: u16 },
    #[error("unsupported encoding in {path}: {detail} (PCM signed 16-bit required)")]
    UnsupportedEncoding { path: PathBuf, detail: String },
    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    // ---- spectral front-end ----
    #[error("bad FFT size {nfft}: must be a power of two and >= frame length {frame_len}")]
    BadFftSize { nfft: usize, frame_len: usize },
    #[error("bad filterbank band: {0}")]
    BadBand(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("too many cepstra: requested {requested}, only {available} filters")]
    TooManyCeps { requested: usize, available: usize },

    // ---- CQCC front-end ----
    #[error("constant-Q band out of range: {0}")]
    BandOutOfRange(String),

    // ---- GMM back-end ----
    #[error("too few frames: got {got}, need at least {need}")]
    TooFewFrames { got: usize, need: usize },
    #[error("numerical collapse during EM: {0}")]
    NumericalCollapse(String),
    #[error("feature kind mismatch: model is {model}, features are {features}")]
    KindMismatch { model: String, features: String },
    #[error("empty feature matrix")]
    EmptyFeatures,
    #[error("invalid model: {0}")]
    InvalidModel(String),

    // ---- x-vector back-end ----
    #[error("utterance too short: {frames} frames, receptive field needs {min}")]
    UtteranceTooShort { frames: usize, min: usize },
    #[error("training set contains a single class only")]
    SingleClassDataset,
    #[error("crop of {crop} frames longer than shortest utterance ({shortest} frames)")]
    CropLongerThanShortestUtterance { crop: usize, shortest: usize },

    // ---- fusion ----
    #[error("degenerate scores: zero variance, cannot calibrate")]
    DegenerateScores,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("trial id mismatch: {0}")]
    TrialIdMismatch(String),
    #[error("trial set mismatch: {0}")]
    TrialSetMismatch(String),

    // ---- metrics ----
    #[error("scores contain a single class only; need both bonafide and spoof")]
    SingleClassScores,
    #[error("degenerate t-DCF operating point: {0}")]
    DegenerateOperatingPoint(String),

    // ---- protocol / score files ----
    #[error("malformed line {line} in {path}: {detail}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("duplicate utterance id {0:?}")]
    DuplicateUtteranceId(String),
    #[error("label/attack mismatch at line {line}: {detail}")]
    LabelAttackMismatch { line: usize, detail: String },
    #[error("duplicate trial id {0:?}")]
    DuplicateTrialId(String),

    // ---- corpus generator ----
    #[error("generated corpus is degenerate: {0}")]
    GeneratorDegenerate(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotFound(_) => "NotFound",
            Error::MalformedHeader { .. } => "MalformedHeader",
            Error::UnsupportedChannelLayout { .. } => "UnsupportedChannelLayout",
            Error::UnsupportedEncoding { .. } => "UnsupportedEncoding",
            Error::SignalTooShort { .. } => "SignalTooShort",
            Error::BadFftSize { .. } => "BadFftSize",
            Error::BadBand(_) => "BadBand",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::TooManyCeps { .. } => "TooManyCeps",
            Error::BandOutOfRange(_) => "BandOutOfRange",
            Error::TooFewFrames { .. } => "TooFewFrames",
            Error::NumericalCollapse(_) => "NumericalCollapse",
            Error::KindMismatch { .. } => "KindMismatch",
            Error::EmptyFeatures => "EmptyFeatures",
            Error::InvalidModel(_) => "InvalidModel",
            Error::UtteranceTooShort { .. } => "UtteranceTooShort",
            Error::SingleClassDataset => "SingleClassDataset",
            Error::CropLongerThanShortestUtterance { .. } => "CropLongerThanShortestUtterance",
            Error::DegenerateScores => "DegenerateScores",
            Error::EmptyInput(_) => "EmptyInput",
            Error::TrialIdMismatch(_) => "TrialIdMismatch",
            Error::TrialSetMismatch(_) => "TrialSetMismatch",
            Error::SingleClassScores => "SingleClassScores",
            Error::DegenerateOperatingPoint(_) => "DegenerateOperatingPoint",
            Error::MalformedLine { .. } => "MalformedLine",
            Error::DuplicateUtteranceId(_) => "DuplicateUtteranceId",
            Error::LabelAttackMismatch { .. } => "LabelAttackMismatch",
            Error::DuplicateTrialId(_) => "DuplicateTrialId",
            Error::GeneratorDegenerate(_) => "GeneratorDegenerate",
            Error::Io(_) => "IoError",
        }
    }
}
