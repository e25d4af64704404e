//! Explore and measure non-linear dependence between pairs of variables.
//!
//! Each pair of variables is summarized by its empirical copula, binned on an
//! `m × m` grid. Copulas are compared with entropy-regularized optimal
//! transport (dual-Sinkhorn distances), summarized by k-means with
//! Wasserstein-barycenter centroids, and scored with the target/forget
//! dependence coefficient, which places a copula between its nearest
//! "forget" copula (score 0) and its nearest "target" copula (score 1).

pub mod clustering;
pub mod copula;
pub mod dependence;
pub mod error;
pub mod io;
pub mod power;
pub mod synth;
pub mod transport;

pub use error::{Error, Result};
