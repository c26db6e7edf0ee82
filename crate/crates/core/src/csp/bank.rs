use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::covariance::{estimate_covariance, mean_covariance};
use super::pair::fit_csp_pair;
use crate::dsp::Epoch;
use crate::io::{read_f32, read_json, write_f32, write_json};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CspConfig {
    pub patterns_per_class: usize,
    pub window_count: usize,
    pub shrinkage: f64,
    /// Fit on every class of the table, including a held-out word.
    pub all_classes: bool,
}

impl Default for CspConfig {
    fn default() -> Self {
        Self {
            patterns_per_class: 8,
            window_count: 16,
            shrinkage: 0.05,
            all_classes: false,
        }
    }
}

/// One-vs-rest CSP filters for every fitted class.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFilterBank {
    /// Class ids, in the order their filters are stacked.
    pub classes: Vec<usize>,
    /// Per class, `patterns_per_class × channels`.
    pub filters: Vec<Array2<f64>>,
    pub eigenvalues: Vec<Array1<f64>>,
    pub patterns_per_class: usize,
    pub window_count: usize,
}

impl SpatialFilterBank {
    pub fn n_channels(&self) -> usize {
        self.filters.first().map_or(0, |f| f.ncols())
    }

    pub fn n_filters(&self) -> usize {
        self.classes.len() * self.patterns_per_class
    }

    /// Length of the flattened embedding.
    pub fn z_dim(&self) -> usize {
        self.window_count * self.n_filters()
    }

    /// All filters stacked in class order, `n_filters × channels`.
    pub fn stacked(&self) -> Array2<f64> {
        let views: Vec<_> = self.filters.iter().map(|f| f.view()).collect();
        ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths")
    }
}

/// For each class, CSP of its covariance against the mean of the others.
pub fn fit_multicsp(
    class_covariances: &[(usize, Array2<f64>)],
    patterns_per_class: usize,
    window_count: usize,
) -> Result<SpatialFilterBank> {
    if class_covariances.len() < 2 {
        return Err(Error::InvalidConfig("multi-class CSP needs at least two classes".into()));
    }
    if patterns_per_class == 0 || patterns_per_class % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "patterns_per_class {patterns_per_class} must be even and positive"
        )));
    }
    if window_count == 0 {
        return Err(Error::InvalidConfig("window_count must be positive".into()));
    }
    let mut bank = SpatialFilterBank {
        classes: Vec::new(),
        filters: Vec::new(),
        eigenvalues: Vec::new(),
        patterns_per_class,
        window_count,
    };
    for (k, (class, cov)) in class_covariances.iter().enumerate() {
        let rest = mean_covariance(
            class_covariances
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, (_, c))| c),
        )?;
        let pair = fit_csp_pair(cov, &rest, patterns_per_class / 2)?;
        bank.classes.push(*class);
        bank.filters.push(pair.filters);
        bank.eigenvalues.push(pair.eigenvalues);
    }
    Ok(bank)
}

/// Mean full-epoch covariance of each class present in `trials`, ordered
/// by class id.
pub fn class_covariances(trials: &[(ArrayView2<f64>, usize)], shrinkage: f64) -> Result<Vec<(usize, Array2<f64>)>> {
    let mut classes: Vec<usize> = trials.iter().map(|(_, c)| *c).collect();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| {
            let covs = trials
                .iter()
                .filter(|(_, l)| *l == c)
                .map(|(x, _)| estimate_covariance(*x, shrinkage).map(|e| e.matrix))
                .collect::<Result<Vec<_>>>()?;
            Ok((c, mean_covariance(&covs)?))
        })
        .collect()
}

/// Class covariances from `epochs` then [`fit_multicsp`].
pub fn fit_bank(epochs: &[&Epoch], cfg: &CspConfig) -> Result<SpatialFilterBank> {
    let trials: Vec<(ArrayView2<f64>, usize)> = epochs.iter().map(|e| (e.data.view(), e.label.id)).collect();
    let covs = class_covariances(&trials, cfg.shrinkage)?;
    fit_multicsp(&covs, cfg.patterns_per_class, cfg.window_count)
}

/// Windowed log-variance features of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEmbedding {
    /// `window_count × n_filters`, zero mean down every column.
    pub values: Array2<f64>,
    pub subject: u32,
    pub label: usize,
}

impl FeatureEmbedding {
    /// Row-major flattening used as the generator input.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}

/// Log-variance of every filter output in `window_count` equal
/// non-overlapping windows (any remainder at the end is dropped), with each
/// filter's mean over windows subtracted.
pub fn embed_matrix(data: ArrayView2<f64>, bank: &SpatialFilterBank) -> Result<Array2<f64>> {
    let (n_ch, n) = data.dim();
    if n_ch != bank.n_channels() {
        return Err(Error::ShapeMismatch(format!(
            "epoch has {n_ch} channels, filters expect {}",
            bank.n_channels()
        )));
    }
    let wc = bank.window_count;
    if n < 2 * wc {
        return Err(Error::SignalTooShort { len: n, min: 2 * wc });
    }
    let len = n / wc;
    let y = bank.stacked().dot(&data);
    let f = y.nrows();
    let mut out = Array2::zeros((wc, f));
    for w in 0..wc {
        let seg = y.slice(s![.., w * len..(w + 1) * len]);
        for (j, row) in seg.outer_iter().enumerate() {
            let m = row.mean().expect("non-empty");
            let var = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / len as f64;
            if !(var > 0.0) {
                return Err(Error::DegenerateWindow(format!("filter {j} has zero variance in window {w}")));
            }
            out[[w, j]] = var.ln();
        }
    }
    for mut col in out.columns_mut() {
        let m = col.mean().expect("non-empty");
        col.mapv_inplace(|v| v - m);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding".into()));
    }
    Ok(out)
}

pub fn embed(epoch: &Epoch, bank: &SpatialFilterBank) -> Result<FeatureEmbedding> {
    Ok(FeatureEmbedding {
        values: embed_matrix(epoch.data.view(), bank)?,
        subject: epoch.subject,
        label: epoch.label.id,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BankHeader {
    classes: Vec<usize>,
    patterns_per_class: usize,
    window_count: usize,
    n_channels: usize,
    eigenvalues: Vec<Vec<f64>>,
    blob: String,
}

/// Write `<name>.json` and the stacked float32 filters `<name>.f32`.
pub fn write_bank(bank: &SpatialFilterBank, dir: &Path, name: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let header = BankHeader {
        classes: bank.classes.clone(),
        patterns_per_class: bank.patterns_per_class,
        window_count: bank.window_count,
        n_channels: bank.n_channels(),
        eigenvalues: bank.eigenvalues.iter().map(|e| e.to_vec()).collect(),
        blob: format!("{name}.f32"),
    };
    write_f32(dir.join(&header.blob), bank.stacked().iter().map(|v| *v as f32))?;
    write_json(dir.join(format!("{name}.json")), &header)
}

pub fn read_bank(dir: &Path, name: &str) -> Result<SpatialFilterBank> {
    let path = dir.join(format!("{name}.json"));
    let h: BankHeader = read_json(&path)?;
    if h.eigenvalues.len() != h.classes.len() {
        return Err(Error::CorruptHeader {
            path,
            reason: "one eigenvalue list per class expected".into(),
        });
    }
    let p = h.patterns_per_class;
    let values = read_f32(dir.join(&h.blob), h.classes.len() * p * h.n_channels)?;
    let filters = (0..h.classes.len())
        .map(|k| {
            let rows = &values[k * p * h.n_channels..(k + 1) * p * h.n_channels];
            Array2::from_shape_vec((p, h.n_channels), rows.iter().map(|v| *v as f64).collect())
                .map_err(|e| Error::ShapeMismatch(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpatialFilterBank {
        classes: h.classes,
        filters,
        eigenvalues: h.eigenvalues.into_iter().map(Array1::from).collect(),
        patterns_per_class: p,
        window_count: h.window_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_trials(classes: usize, per: usize, ch: usize, n: usize, seed: u64) -> Vec<(Array2<f64>, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..classes * per)
            .map(|k| {
                let c = k % classes;
                let x = Array2::from_shape_fn((ch, n), |(i, _)| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g * if i == c % ch { 3.0 } else { 1.0 }
                });
                (x, c)
            })
            .collect()
    }

    fn bank_for(classes: usize, ch: usize) -> SpatialFilterBank {
        let trials = random_trials(classes, 4, ch, 200, 9);
        let views: Vec<_> = trials.iter().map(|(x, c)| (x.view(), *c)).collect();
        fit_multicsp(&class_covariances(&views, 0.05).unwrap(), 8, 16).unwrap()
    }

    #[test]
    fn filter_counts() {
        assert_eq!(bank_for(12, 20).n_filters(), 96);
        let b13 = bank_for(13, 20);
        assert_eq!(b13.n_filters(), 104);
        assert_eq!(b13.z_dim(), 16 * 104);
    }

    #[test]
    fn odd_patterns_rejected() {
        let covs = vec![(0, Array2::<f64>::eye(4)), (1, Array2::<f64>::eye(4))];
        assert!(fit_multicsp(&covs, 3, 16).is_err());
        assert!(fit_multicsp(&covs[..1], 2, 16).is_err());
    }

    #[test]
    fn two_classes_match_pairwise() {
        let trials = random_trials(2, 5, 6, 300, 4);
        let views: Vec<_> = trials.iter().map(|(x, c)| (x.view(), *c)).collect();
        let covs = class_covariances(&views, 0.05).unwrap();
        let bank = fit_multicsp(&covs, 4, 16).unwrap();
        let pair = fit_csp_pair(&covs[0].1, &covs[1].1, 2).unwrap();
        for (a, b) in bank.filters[0].iter().zip(pair.filters.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // The other class sees the same filters with the roles swapped.
        for r in 0..4 {
            let swapped = bank.filters[1].row((r + 2) % 4);
            let d: f64 = swapped.iter().zip(pair.filters.row(r)).map(|(a, b)| (a - b).abs()).sum();
            assert!(d < 1e-9, "row {r}: {d}");
        }
    }

    #[test]
    fn embedding_shape_and_zero_mean() {
        let bank = bank_for(12, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((20, 500), |_| StandardNormal.sample(&mut rng));
        let z = embed_matrix(x.view(), &bank).unwrap();
        assert_eq!(z.dim(), (16, 96));
        for col in z.columns() {
            assert!(col.sum().abs() < 1e-9);
        }
        // Only the first 16·31 samples matter.
        let mut y = x.clone();
        y.slice_mut(s![.., 496..]).fill(1e6);
        assert_eq!(embed_matrix(y.view(), &bank).unwrap(), z);
        assert!(embed_matrix(x.slice(s![.., ..31]), &bank).is_err());
        assert!(embed_matrix(x.slice(s![..19, ..]), &bank).is_err());
    }

    #[test]
    fn bank_round_trip() {
        let bank = bank_for(3, 8);
        let dir = tempfile::tempdir().unwrap();
        write_bank(&bank, dir.path(), "bank").unwrap();
        let back = read_bank(dir.path(), "bank").unwrap();
        assert_eq!(back.classes, bank.classes);
        assert_eq!(back.eigenvalues, bank.eigenvalues);
        for (a, b) in back.stacked().iter().zip(bank.stacked().iter()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}
