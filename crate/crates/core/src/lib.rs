//! Voice anti-spoofing countermeasure toolkit.
//!
//! Pipeline stages, each usable on its own:
//! 1. Audio I/O and framing ([`audio`])
//! 2. Front-end features: filterbank energies, cepstra, CQCC ([`features`])
//! 3. Back-ends: two-class GMM log-likelihood ratio ([`gmm`]) and a TDNN
//!    x-vector network trained with focal loss ([`xvector`])
//! 4. Decision-level feature switching fusion ([`fusion`])
//! 5. Evaluation: DET sweep, EER, accuracy, min normalized t-DCF ([`metrics`])
//! 6. Trial protocols, score files and a deterministic synthetic corpus
//!    generator ([`protocol`], [`corpus`])

pub mod audio;
pub mod corpus;
pub mod error;
pub mod features;
pub mod fusion;
pub mod gmm;
pub mod metrics;
pub mod protocol;
pub mod xvector;

pub use error::{Error, Result};
