//! The full preprocessing chain from a raw recording to epochs.
//!
//! At the native rate: EOG regression and EMG flagging, 0.5–125 Hz
//! band-pass, 60/120 Hz notches, anti-alias low-pass. Then decimation,
//! common average reference and the 30–120 Hz training band at the
//! decimated rate, and finally epoching with baseline correction.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::{emg_mask, regress_in_place, EmgConfig};
use super::decimate::{decimate_events, ANTI_ALIAS_FRACTION, ANTI_ALIAS_ORDER};
use super::epoch::{epoch_and_baseline, Continuous, EpochSet};
use super::filter::{design_bandpass, design_lowpass, design_notch, BiquadCascade};
use super::reference::common_average_reference;
use crate::dataset::{Recording, WordLabel};
use crate::error::StageExt;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub artifact_removal: bool,
    /// Channels used as EOG references; they are not regressed themselves.
    pub eog_channels: Vec<String>,
    pub emg: EmgConfig,
    pub wide_band_hz: (f64, f64),
    pub wide_order: usize,
    pub notch_hz: Vec<f64>,
    pub notch_q: f64,
    pub decimation: usize,
    /// Band applied after re-referencing; `None` keeps the wide band.
    pub train_band_hz: Option<(f64, f64)>,
    pub train_order: usize,
    pub window_s: f64,
    pub baseline_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            artifact_removal: true,
            eog_channels: vec!["Fp1".into(), "Fp2".into()],
            emg: EmgConfig::default(),
            wide_band_hz: (0.5, 125.0),
            wide_order: 4,
            notch_hz: vec![60.0, 120.0],
            notch_q: 35.0,
            decimation: 4,
            train_band_hz: Some((30.0, 120.0)),
            train_order: 4,
            window_s: 2.0,
            baseline_s: 0.5,
        }
    }
}

fn filter_rows(data: &mut Array2<f64>, filters: &[BiquadCascade]) -> Result<()> {
    data.outer_iter_mut().into_par_iter().try_for_each(|mut row| {
        let mut y = row.to_vec();
        for f in filters {
            y = f.filtfilt(&y)?;
        }
        row.assign(&ArrayView1::from(&y));
        Ok(())
    })
}

/// Run the chain up to (but not including) epoching.
pub fn preprocess_continuous(rec: &Recording, cfg: &PreprocessConfig) -> Result<Continuous> {
    rec.validate()?;
    let fs = rec.fs;
    let factor = cfg.decimation.max(1);
    let out_fs = fs / factor as f64;
    if out_fs.fract() != 0.0 {
        return Err(Error::InvalidConfig(format!(
            "fs {fs} Hz / decimation {factor} is not an integer rate"
        )));
    }
    let mut x = rec.data.mapv(f64::from);
    let n = x.ncols();

    let mask = if cfg.artifact_removal {
        let idx = cfg
            .eog_channels
            .iter()
            .map(|name| {
                rec.layout
                    .index_of(name)
                    .ok_or_else(|| Error::InvalidConfig(format!("EOG channel {name:?} not in layout")))
            })
            .collect::<Result<Vec<_>>>()
            .stage("artifact removal")?;
        let refs = Array2::from_shape_fn((idx.len(), n), |(r, t)| x[[idx[r], t]]);
        regress_in_place(&mut x, &refs, &idx).stage("artifact removal")?;
        emg_mask(&x, fs, &cfg.emg).stage("artifact removal")?
    } else {
        vec![false; n]
    };

    let mut native = vec![design_bandpass(cfg.wide_band_hz.0, cfg.wide_band_hz.1, fs, cfg.wide_order)
        .stage("band-pass")?];
    for &f0 in &cfg.notch_hz {
        native.push(design_notch(f0, cfg.notch_q, fs).stage("notch")?);
    }
    if factor > 1 {
        native.push(design_lowpass(ANTI_ALIAS_FRACTION * out_fs, fs, ANTI_ALIAS_ORDER).stage("decimate")?);
    }
    filter_rows(&mut x, &native).stage("band-pass")?;

    let n_out = n / factor;
    let x = Array2::from_shape_fn((x.nrows(), n_out), |(c, t)| x[[c, t * factor]]);
    let mask: Vec<bool> = (0..n_out)
        .map(|t| mask[t * factor..(t + 1) * factor].iter().any(|m| *m))
        .collect();
    let events = decimate_events(&rec.events, factor);

    let mut x = common_average_reference(&x).stage("common average reference")?;
    if let Some((lo, hi)) = cfg.train_band_hz {
        let bp = design_bandpass(lo, hi, out_fs, cfg.train_order).stage("training band")?;
        filter_rows(&mut x, &[bp]).stage("training band")?;
    }
    Ok(Continuous {
        subject: rec.subject,
        data: x,
        fs: out_fs,
        events,
        mask,
    })
}

/// Raw recording to baseline-corrected epochs.
pub fn preprocess(rec: &Recording, classes: &[WordLabel], cfg: &PreprocessConfig) -> Result<EpochSet> {
    let signal = preprocess_continuous(rec, cfg)?;
    epoch_and_baseline(&signal, classes, cfg.window_s, cfg.baseline_s).stage("epoching")
}
