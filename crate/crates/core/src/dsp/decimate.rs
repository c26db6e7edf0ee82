use ndarray::Array2;
use rayon::prelude::*;

use super::filter::design_lowpass;
use crate::dataset::{Event, Recording};
use crate::{Error, Result};

/// Anti-alias low-pass order used before downsampling.
pub const ANTI_ALIAS_ORDER: usize = 8;
/// Anti-alias cutoff as a fraction of the output sampling rate.
pub const ANTI_ALIAS_FRACTION: f64 = 0.4;

fn output_rate(fs: f64, factor: usize) -> Result<f64> {
    if factor < 1 {
        return Err(Error::InvalidConfig("decimation factor must be ≥ 1".into()));
    }
    let out = fs / factor as f64;
    if out.fract() != 0.0 {
        return Err(Error::InvalidConfig(format!(
            "fs {fs} Hz / factor {factor} is not an integer rate"
        )));
    }
    Ok(out)
}

/// Zero-phase anti-alias filtering then keep every `factor`-th sample,
/// starting at sample 0. Output has `floor(n / factor)` samples.
pub fn decimate_rows(data: &Array2<f64>, fs: f64, factor: usize) -> Result<(Array2<f64>, f64)> {
    let out_fs = output_rate(fs, factor)?;
    if factor == 1 {
        return Ok((data.clone(), fs));
    }
    let lp = design_lowpass(ANTI_ALIAS_FRACTION * out_fs, fs, ANTI_ALIAS_ORDER)?;
    let n_out = data.ncols() / factor;
    let rows: Vec<Vec<f64>> = data
        .outer_iter()
        .into_par_iter()
        .map(|row| {
            let y = lp.filtfilt(&row.to_vec())?;
            Ok(y.into_iter().step_by(factor).take(n_out).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((data.nrows(), n_out));
    for (mut dst, src) in out.outer_iter_mut().zip(rows) {
        dst.assign(&ndarray::ArrayView1::from(&src));
    }
    Ok((out, out_fs))
}

/// Event index after downsampling by `factor`.
pub fn decimate_events(events: &[Event], factor: usize) -> Vec<Event> {
    events
        .iter()
        .map(|e| Event {
            sample: e.sample / factor,
            label: e.label,
        })
        .collect()
}

pub fn decimate(recording: &Recording, factor: usize) -> Result<Recording> {
    let (data, fs) = decimate_rows(&recording.data.mapv(f64::from), recording.fs, factor)?;
    Recording::new(
        recording.subject,
        data.mapv(|v| v as f32),
        fs,
        recording.layout.clone(),
        decimate_events(&recording.events, factor),
    )
}
