//! EEG-to-text decoding.
//!
//! The crate is organised as the stages of the decoding pipeline:
//!
//! ```text
//! dataset     synthetic recordings, on-disk container, fold bookkeeping
//!   │
//! dsp         artifact removal, band-pass / notch, decimation, CAR, epochs
//!   │
//! csp         one-vs-rest CSP fitted on whole epochs, applied per time window
//!   │         → 16 × n_filters mean-normalised log-variance embedding (z)
//! gan         dense generator z → 12 × 28 character distributions,
//!   │         dense discriminator on character sequences, adversarial training
//! textcodec   vocabulary, targets, decoding, character error rate
//!   │
//! experiment  protocols (seen / unseen word, cross-subject), reports, CLI
//! ```

pub mod csp;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod gan;
pub mod io;
pub mod linalg;
pub mod textcodec;

pub use error::{Error, Result};
