use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Event, WordLabel};
use crate::{Error, Result};

/// Continuous multi-channel signal during preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct Continuous {
    pub subject: u32,
    /// channels × samples
    pub data: Array2<f64>,
    pub fs: f64,
    pub events: Vec<Event>,
    /// Per-sample artifact flags, same length as the signal.
    pub mask: Vec<bool>,
}

/// One baseline-corrected trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub subject: u32,
    /// Position of the trial in the subject's event list.
    pub trial: usize,
    pub label: WordLabel,
    /// Onset sample in the signal the epoch was cut from.
    pub onset: usize,
    pub fs: f64,
    /// channels × window samples, starting at the onset.
    pub data: Array2<f64>,
    /// channels × baseline samples, immediately preceding the onset.
    pub baseline: Array2<f64>,
    /// Any artifact flag inside the baseline or the window.
    pub flagged: bool,
}

impl Epoch {
    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }
}

/// A trial that could not be epoched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub subject: u32,
    pub trial: usize,
    pub sample: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochSet {
    pub epochs: Vec<Epoch>,
    pub skipped: Vec<Skipped>,
}

/// Cut `window_s` seconds after every event and subtract the per-channel
/// mean of the `baseline_s` seconds before it from both segments.
pub fn epoch_and_baseline(
    signal: &Continuous,
    classes: &[WordLabel],
    window_s: f64,
    baseline_s: f64,
) -> Result<EpochSet> {
    if !(window_s > 0.0) || !(baseline_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "epoch window {window_s} s and baseline {baseline_s} s must be positive"
        )));
    }
    if signal.mask.len() != signal.data.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "mask of {} samples for a signal of {}",
            signal.mask.len(),
            signal.data.ncols()
        )));
    }
    let win = (window_s * signal.fs).round() as usize;
    let base = (baseline_s * signal.fs).round() as usize;
    let n = signal.data.ncols();
    let mut out = EpochSet::default();
    for (trial, ev) in signal.events.iter().enumerate() {
        let label = classes
            .get(ev.label)
            .ok_or_else(|| Error::InvalidConfig(format!("event label {} not in class table", ev.label)))?;
        if ev.sample < base || ev.sample + win > n {
            out.skipped.push(Skipped {
                subject: signal.subject,
                trial,
                sample: ev.sample,
                label: ev.label,
            });
            continue;
        }
        let mut baseline = signal.data.slice(s![.., ev.sample - base..ev.sample]).to_owned();
        let mut data = signal.data.slice(s![.., ev.sample..ev.sample + win]).to_owned();
        let mean = baseline.mean_axis(Axis(1)).expect("baseline is non-empty");
        let mean = mean.insert_axis(Axis(1));
        baseline -= &mean;
        data -= &mean;
        let flagged = signal.mask[ev.sample - base..ev.sample + win].iter().any(|m| *m);
        out.epochs.push(Epoch {
            subject: signal.subject,
            trial,
            label: label.clone(),
            onset: ev.sample,
            fs: signal.fs,
            data,
            baseline,
            flagged,
        });
    }
    Ok(out)
}
