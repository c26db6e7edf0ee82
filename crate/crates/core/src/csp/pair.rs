use ndarray::{Array1, Array2};

use crate::linalg::{cholesky, solve_lower, solve_lower_transpose, symmetric_eigen};
use crate::{Error, Result};

/// Two-class CSP filters, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CspPair {
    /// `2·n_pairs × channels`; the first `n_pairs` rows maximise the share
    /// of class A variance, the rest minimise it.
    pub filters: Array2<f64>,
    /// Generalised eigenvalue of each row: `wᵀAw / wᵀ(A+B)w`.
    pub eigenvalues: Array1<f64>,
}

/// Flip `w` so its largest-magnitude entry (first one on ties) is positive.
pub(crate) fn fix_sign(w: &mut [f64]) {
    let mut k = 0;
    for (i, v) in w.iter().enumerate() {
        if v.abs() > w[k].abs() {
            k = i;
        }
    }
    if w[k] < 0.0 {
        w.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Solve `A w = λ (A + B) w` and keep the `n_pairs` largest-λ then the
/// `n_pairs` smallest-λ eigenvectors.
///
/// `A + B = L Lᵀ` reduces the problem to the symmetric `L⁻¹ A L⁻ᵀ u = λ u`
/// with `w = L⁻ᵀ u`, so every filter has `wᵀ(A+B)w = 1`.
pub fn fit_csp_pair(cov_a: &Array2<f64>, cov_b: &Array2<f64>, n_pairs: usize) -> Result<CspPair> {
    let n = cov_a.nrows();
    if cov_a.dim() != (n, n) || cov_b.dim() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "covariances {:?} and {:?}",
            cov_a.dim(),
            cov_b.dim()
        )));
    }
    if n_pairs == 0 || 2 * n_pairs > n {
        return Err(Error::InvalidConfig(format!(
            "{n_pairs} filter pairs from {n} channels"
        )));
    }
    cholesky(cov_a)?;
    cholesky(cov_b)?;
    let l = cholesky(&(cov_a + cov_b))?;
    let left = solve_lower(&l, cov_a);
    let m = solve_lower(&l, &left.t().to_owned());
    let (vals, u) = symmetric_eigen(&m)?;
    let w = solve_lower_transpose(&l, &u);

    let order: Vec<usize> = (0..n_pairs).map(|k| n - 1 - k).chain(0..n_pairs).collect();
    let mut filters = Array2::zeros((2 * n_pairs, n));
    let mut eigenvalues = Array1::zeros(2 * n_pairs);
    let sum = cov_a + cov_b;
    for (row, &src) in order.iter().enumerate() {
        let mut col = w.column(src).to_vec();
        let norm = {
            let v = Array1::from(col.clone());
            v.dot(&sum.dot(&v)).sqrt()
        };
        col.iter_mut().for_each(|v| *v /= norm);
        fix_sign(&mut col);
        filters.row_mut(row).assign(&Array1::from(col));
        eigenvalues[row] = vals[src];
    }
    Ok(CspPair { filters, eigenvalues })
}
