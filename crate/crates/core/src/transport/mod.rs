//! Optimal transport between copula histograms.

mod accel;
mod barycenter;
mod cost;
mod exact;
mod kernel;
mod newton;
mod sinkhorn;

pub use barycenter::wasserstein_barycenter;
pub use cost::{CostKind, GroundCost};
pub use exact::{exact_ot, ExactTransport, ORACLE_SUPPORT_LIMIT};
pub use sinkhorn::{
    sinkhorn_distance, sinkhorn_divergence, SinkhornConfig, SinkhornOutput, TransportPlan,
    DEFAULT_LAMBDA_SCALE, DEFAULT_MAX_ITER, DEFAULT_TOL,
};

use ndarray::Array2;
use rayon::prelude::*;

use crate::copula::CopulaHistogram;
use crate::error::{Error, Result};

/// Raw dual-Sinkhorn value, or the debiased divergence when `debias` is set.
pub fn transport_distance(
    r: &CopulaHistogram,
    c: &CopulaHistogram,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
    debias: bool,
) -> Result<f64> {
    if debias {
        sinkhorn_divergence(r, c, cost, cfg)
    } else {
        sinkhorn_distance(r, c, cost, cfg).map(|o| o.value)
    }
}

/// Symmetric matrix of dual-Sinkhorn distances. Each unordered pair is solved
/// once, in a canonical argument order, so reordering the input permutes the
/// output exactly. The diagonal holds the (nonzero) entropic self-distance.
pub fn pairwise_distance_matrix(
    hists: &[CopulaHistogram],
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<Array2<f64>> {
    pairwise_with(hists, |a, b| {
        sinkhorn_distance(a, b, cost, cfg).map(|o| o.value)
    })
}

/// As [`pairwise_distance_matrix`] with the debiased divergence (zero diagonal).
pub fn pairwise_divergence_matrix(
    hists: &[CopulaHistogram],
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<Array2<f64>> {
    pairwise_with(hists, |a, b| sinkhorn_divergence(a, b, cost, cfg))
}

/// Distance from every histogram to `target`, raw or debiased as
/// [`transport_distance`]; errors carry the histogram index in both slots.
pub fn distances_to(
    hists: &[CopulaHistogram],
    target: &CopulaHistogram,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
    debias: bool,
) -> Result<Vec<f64>> {
    hists
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            transport_distance(h, target, cost, cfg, debias).map_err(|e| Error::Pair {
                i,
                j: i,
                source: Box::new(e),
            })
        })
        .collect()
}

fn pairwise_with<F>(hists: &[CopulaHistogram], dist: F) -> Result<Array2<f64>>
where
    F: Fn(&CopulaHistogram, &CopulaHistogram) -> Result<f64> + Sync,
{
    let n = hists.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = sinkhorn::canonical_pair(&hists[i], &hists[j]);
            dist(a, b).map_err(|e| Error::Pair {
                i,
                j,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((n, n));
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        out[[i, j]] = v;
        out[[j, i]] = v;
    }
    Ok(out)
}
