//! Common spatial patterns: shrunk covariances, two-class generalised
//! eigen-filters, one-vs-rest filter banks and windowed log-variance
//! embeddings.

mod bank;
mod covariance;
mod pair;

pub use bank::{
    class_covariances, embed, embed_matrix, fit_bank, fit_multicsp, read_bank, write_bank, CspConfig,
    FeatureEmbedding, SpatialFilterBank,
};
pub use covariance::{estimate_covariance, mean_covariance, CovarianceEstimate};
pub use pair::{fit_csp_pair, CspPair};
