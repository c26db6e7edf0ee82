//! Preprocessing: IIR filters, zero-phase filtering, decimation, common
//! average reference, artifact handling and epoching.

mod artifacts;
mod decimate;
mod epoch;
mod filter;
mod pipeline;
mod reference;

pub use artifacts::{emg_mask, regress_out, remove_artifacts, EmgConfig};
pub use decimate::{decimate, decimate_events, decimate_rows, ANTI_ALIAS_FRACTION, ANTI_ALIAS_ORDER};
pub use epoch::{epoch_and_baseline, Continuous, Epoch, EpochSet, Skipped};
pub use filter::{design_bandpass, design_lowpass, design_notch, Biquad, BiquadCascade, FilterKind};
pub use pipeline::{preprocess, preprocess_continuous, PreprocessConfig};
pub use reference::common_average_reference;
