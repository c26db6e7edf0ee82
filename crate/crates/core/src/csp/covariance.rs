use ndarray::{Array2, ArrayView2, Axis};

use crate::{Error, Result};

/// Shrunk, trace-normalised spatial covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: Array2<f64>,
    pub shrinkage: f64,
    pub trace_normalized: bool,
}

/// `(1 − λ)·S + λ·(tr S / n)·I`, rescaled to trace `n`, where `S` is the
/// sample covariance of the `channels × samples` window.
pub fn estimate_covariance(window: ArrayView2<f64>, shrinkage: f64) -> Result<CovarianceEstimate> {
    let (n_ch, n) = window.dim();
    if n < 2 || n_ch == 0 {
        return Err(Error::DegenerateWindow(format!("{n_ch} channels × {n} samples")));
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::InvalidConfig(format!("shrinkage {shrinkage} outside [0, 1]")));
    }
    let mean = window.mean_axis(Axis(1)).expect("non-empty");
    let centred = &window - &mean.insert_axis(Axis(1));
    let s = centred.dot(&centred.t()) / (n - 1) as f64;
    let trace = s.diag().sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::DegenerateWindow(format!("window has total variance {trace}")));
    }
    // The shrinkage target has the same trace as S, so normalising the
    // blend is the same as normalising S.
    let mut matrix = s * ((1.0 - shrinkage) * n_ch as f64 / trace);
    for i in 0..n_ch {
        matrix[[i, i]] += shrinkage;
    }
    for i in 0..n_ch {
        for j in 0..i {
            let v = 0.5 * (matrix[[i, j]] + matrix[[j, i]]);
            matrix[[i, j]] = v;
            matrix[[j, i]] = v;
        }
    }
    Ok(CovarianceEstimate {
        matrix,
        shrinkage,
        trace_normalized: true,
    })
}

/// Element-wise mean of equally sized covariance matrices.
pub fn mean_covariance<'a>(covs: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Array2<f64>> {
    let mut it = covs.into_iter();
    let first = it.next().ok_or_else(|| Error::Empty("no covariances to average".into()))?;
    let mut sum = first.clone();
    let mut k = 1.0;
    for c in it {
        if c.dim() != sum.dim() {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", c.dim(), sum.dim())));
        }
        sum += c;
        k += 1.0;
    }
    Ok(sum / k)
}
