//! Ocular and muscular artifact handling.
//!
//! EOG is removed by least-squares regression of every EEG channel on the
//! reference channels. EMG is not removed: samples whose high-frequency
//! envelope is an outlier on any channel are flagged.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filter::design_bandpass;
use crate::linalg::solve_spd;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmgConfig {
    /// Robust z-score of the envelope above which a sample is flagged.
    pub threshold: f64,
    /// Band whose envelope is monitored, Hz.
    pub band_hz: (f64, f64),
    /// Moving RMS window, seconds.
    pub window_s: f64,
}

impl Default for EmgConfig {
    fn default() -> Self {
        Self {
            threshold: 8.0,
            band_hz: (150.0, 450.0),
            window_s: 0.05,
        }
    }
}

/// Regress `eog_refs` out of every row of `eeg` and flag EMG samples.
///
/// Returns the cleaned channels and a per-sample rejection mask (`true`
/// where any channel's envelope exceeds the threshold).
pub fn remove_artifacts(
    eeg: &Array2<f64>,
    eog_refs: &Array2<f64>,
    fs: f64,
    emg: &EmgConfig,
) -> Result<(Array2<f64>, Vec<bool>)> {
    let cleaned = regress_out(eeg, eog_refs)?;
    let mask = emg_mask(&cleaned, fs, emg)?;
    Ok((cleaned, mask))
}

/// Least-squares removal of the (mean-centred) reference signals.
/// The residual of each channel is orthogonal to every centred reference.
pub fn regress_out(eeg: &Array2<f64>, refs: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = eeg.clone();
    regress_in_place(&mut out, refs, &[])?;
    Ok(out)
}

/// In-place [`regress_out`] that leaves the rows listed in `skip` alone
/// (used when the references are themselves rows of `eeg`).
pub(crate) fn regress_in_place(eeg: &mut Array2<f64>, refs: &Array2<f64>, skip: &[usize]) -> Result<()> {
    if refs.ncols() != eeg.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} reference samples vs {} EEG samples",
            refs.ncols(),
            eeg.ncols()
        )));
    }
    if refs.nrows() == 0 {
        return Ok(());
    }
    let mean = refs.mean_axis(Axis(1)).expect("non-empty");
    let centred = refs - &mean.insert_axis(Axis(1));
    for (i, r) in centred.outer_iter().enumerate() {
        let var = r.dot(&r);
        if !(var > 0.0) {
            return Err(Error::DegenerateReference(format!(
                "reference {i} has zero variance"
            )));
        }
    }
    let gram = centred.dot(&centred.t());
    // Normal equations gram · β = centred · eegᵀ, one column per channel.
    let cross = centred.dot(&eeg.t());
    let beta = solve_spd(&gram, &cross)
        .map_err(|_| Error::DegenerateReference("reference channels are collinear".into()))?;
    eeg.outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .filter(|(ch, _)| !skip.contains(ch))
        .for_each(|(ch, mut row)| {
            for (k, r) in centred.outer_iter().enumerate() {
                row.scaled_add(-beta[[k, ch]], &r);
            }
        });
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Per-sample EMG flags from the moving-RMS envelope of the monitored band.
pub fn emg_mask(eeg: &Array2<f64>, fs: f64, cfg: &EmgConfig) -> Result<Vec<bool>> {
    let n = eeg.ncols();
    let bp = design_bandpass(cfg.band_hz.0, cfg.band_hz.1, fs, 4)?;
    let half = ((cfg.window_s * fs / 2.0).round() as usize).max(1);
    let flags: Vec<Vec<bool>> = eeg
        .outer_iter()
        .into_par_iter()
        .map(|row| {
            let y = bp.filtfilt(&row.to_vec())?;
            // Prefix sums of y² for the centred moving mean.
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(0.0);
            let mut acc = 0.0;
            for v in &y {
                acc += v * v;
                prefix.push(acc);
            }
            let env: Vec<f64> = (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(half);
                    let hi = (i + half + 1).min(n);
                    ((prefix[hi] - prefix[lo]) / (hi - lo) as f64).max(0.0).sqrt()
                })
                .collect();
            let mut scratch = env.clone();
            let med = median(&mut scratch);
            for v in scratch.iter_mut() {
                *v = (*v - med).abs();
            }
            let mad = 1.4826 * median(&mut scratch);
            if !(mad > 0.0) {
                return Ok(vec![false; n]);
            }
            Ok(env.iter().map(|e| (e - med) / mad > cfg.threshold).collect())
        })
        .collect::<Result<_>>()?;
    let mut mask = vec![false; n];
    for f in flags {
        for (m, v) in mask.iter_mut().zip(f) {
            *m |= v;
        }
    }
    Ok(mask)
}
