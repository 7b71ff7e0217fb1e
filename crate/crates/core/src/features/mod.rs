//! Front-end feature extraction: STFT filterbank/cepstral features and
//! constant-Q cepstra, plus the binary archive format they are stored in.

pub mod archive;
pub mod cqcc;
pub mod spectral;

use ndarray::Array2;

use crate::error::{Error, Result};

/// The seven front-end feature kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Lfbe,
    Mfbe,
    Imfbe,
    Lfcc,
    Mfcc,
    Imfcc,
    Cqcc,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Lfbe => "LFBE",
            FeatureKind::Mfbe => "MFBE",
            FeatureKind::Imfbe => "IMFBE",
            FeatureKind::Lfcc => "LFCC",
            FeatureKind::Mfcc => "MFCC",
            FeatureKind::Imfcc => "IMFCC",
            FeatureKind::Cqcc => "CQCC",
        }
    }

    pub fn all() -> [FeatureKind; 7] {
        [
            FeatureKind::Lfbe,
            FeatureKind::Mfbe,
            FeatureKind::Imfbe,
            FeatureKind::Lfcc,
            FeatureKind::Mfcc,
            FeatureKind::Imfcc,
            FeatureKind::Cqcc,
        ]
    }

    /// True for the DCT-compressed cepstral kinds.
    pub fn is_cepstral(&self) -> bool {
        matches!(
            self,
            FeatureKind::Lfcc | FeatureKind::Mfcc | FeatureKind::Imfcc | FeatureKind::Cqcc
        )
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "LFBE" => Ok(FeatureKind::Lfbe),
            "MFBE" => Ok(FeatureKind::Mfbe),
            "IMFBE" => Ok(FeatureKind::Imfbe),
            "LFCC" => Ok(FeatureKind::Lfcc),
            "MFCC" => Ok(FeatureKind::Mfcc),
            "IMFCC" => Ok(FeatureKind::Imfcc),
            "CQCC" => Ok(FeatureKind::Cqcc),
            other => Err(format!("unknown feature kind {other:?}")),
        }
    }
}

/// `T x D` feature matrix with provenance metadata.
///
/// Construction rejects NaN/Inf entries and empty matrices, so downstream
/// consumers can assume finite values.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    kind: FeatureKind,
    config_digest: String,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, kind: FeatureKind, config_digest: String) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyFeatures);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch(format!(
                "{kind} feature matrix contains non-finite values"
            )));
        }
        Ok(Self {
            values,
            kind,
            config_digest,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub(crate) fn with_digest(mut self, digest: String) -> Self {
        self.config_digest = digest;
        self
    }
}

/// Stable 64-bit FNV-1a digest of a canonical parameter string, hex-encoded.
pub(crate) fn digest_str(s: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn feature_matrix_rejects_nan() {
        let m = arr2(&[[1.0, f64::NAN]]);
        assert!(FeatureMatrix::new(m, FeatureKind::Mfcc, String::new()).is_err());
    }

    #[test]
    fn feature_matrix_rejects_empty() {
        let m = Array2::<f64>::zeros((0, 4));
        assert!(matches!(
            FeatureMatrix::new(m, FeatureKind::Mfcc, String::new()),
            Err(Error::EmptyFeatures)
        ));
    }

    #[test]
    fn digest_is_stable_and_input_sensitive() {
        let a = digest_str("kind=MFCC;nfft=512");
        let b = digest_str("kind=MFCC;nfft=512");
        let c = digest_str("kind=LFCC;nfft=512");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for kind in FeatureKind::all() {
            let parsed: FeatureKind = kind.as_str().parse().unwrap();
            assert_eq!(parsed, kind);
        }
    }
}
