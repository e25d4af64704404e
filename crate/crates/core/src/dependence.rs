//! The target/forget dependence coefficient and the classical baselines it is
//! benchmarked against.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::copula::empirical_copula;
use crate::copula::{
    average_ranks, ensure_same_resolution, rank_transform, CopulaHistogram, ObservationTable,
};
use crate::error::{Error, Result};
use crate::synth::substream;
use crate::transport::{transport_distance, GroundCost, SinkhornConfig};

/// Default number of random features per variable for [`rdc`].
pub const RDC_FEATURES: usize = 20;
/// Default projection scale for [`rdc`].
pub const RDC_SCALE: f64 = 1.0 / 6.0;

/// Target and forget copula sets with the transport settings used to compare
/// against them.
#[derive(Debug, Clone)]
pub struct TfdcSpec {
    targets: Vec<CopulaHistogram>,
    forgets: Vec<CopulaHistogram>,
    cost: GroundCost,
    cfg: SinkhornConfig,
    debias: bool,
}

impl TfdcSpec {
    pub fn new(
        targets: Vec<CopulaHistogram>,
        forgets: Vec<CopulaHistogram>,
        cost: GroundCost,
        cfg: SinkhornConfig,
        debias: bool,
    ) -> Result<Self> {
        if targets.is_empty() || forgets.is_empty() {
            return Err(Error::InvalidParameter(
                "target and forget sets must be non-empty".into(),
            ));
        }
        let m = cost.m();
        if let Some(h) = targets.iter().chain(&forgets).find(|h| h.m() != m) {
            return Err(Error::InvalidData(format!(
                "copula at resolution {} in a spec for resolution {m}",
                h.m()
            )));
        }
        cfg.validate()?;
        Ok(Self {
            targets,
            forgets,
            cost,
            cfg,
            debias,
        })
    }

    pub fn m(&self) -> usize {
        self.cost.m()
    }

    pub fn targets(&self) -> &[CopulaHistogram] {
        &self.targets
    }

    pub fn forgets(&self) -> &[CopulaHistogram] {
        &self.forgets
    }

    pub fn cost(&self) -> &GroundCost {
        &self.cost
    }

    pub fn cfg(&self) -> &SinkhornConfig {
        &self.cfg
    }

    pub fn debias(&self) -> bool {
        self.debias
    }
}

/// `d⁻ / (d⁻ + d⁺)` with `d⁻` the distance to the nearest forget copula and
/// `d⁺` the distance to the nearest target.
///
/// A histogram bit-equal to a forget copula scores exactly 0, one bit-equal
/// to a target exactly 1; the entropic self-distance never enters those cases.
pub fn tfdc(c: &CopulaHistogram, spec: &TfdcSpec) -> Result<f64> {
    if c.m() != spec.m() {
        return Err(Error::InvalidData(format!(
            "copula at resolution {} in a spec for resolution {}",
            c.m(),
            spec.m()
        )));
    }
    let in_forgets = spec.forgets.iter().any(|f| f == c);
    let in_targets = spec.targets.iter().any(|t| t == c);
    match (in_forgets, in_targets) {
        (true, true) => return Err(Error::AmbiguousSpec),
        (true, false) => return Ok(0.0),
        (false, true) => return Ok(1.0),
        (false, false) => {}
    }
    let dist = |a: &CopulaHistogram, b: &CopulaHistogram| {
        ensure_same_resolution(a, b)?;
        transport_distance(a, b, &spec.cost, &spec.cfg, spec.debias)
    };
    let d_minus = min_of(spec.forgets.iter().map(|f| dist(f, c)))?;
    let d_plus = min_of(spec.targets.iter().map(|t| dist(c, t)))?;
    if d_minus == 0.0 && d_plus == 0.0 {
        return Err(Error::AmbiguousSpec);
    }
    Ok((d_minus / (d_minus + d_plus)).clamp(0.0, 1.0))
}

fn min_of(values: impl Iterator<Item = Result<f64>>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for v in values {
        best = best.min(v?.max(0.0));
    }
    Ok(best)
}

/// TFDC of every variable pair of `table` at the spec's resolution. The
/// diagonal holds the coefficient of each variable paired with itself.
pub fn tfdc_matrix(table: &ObservationTable, spec: &TfdcSpec) -> Result<Array2<f64>> {
    let ranks = table.rank_columns()?;
    let n = table.n_vars();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            empirical_copula(&ranks[i], &ranks[j], spec.m())
                .and_then(|c| tfdc(&c, spec))
                .map_err(|e| Error::Pair {
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

fn check_pair(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidData(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_len {
        return Err(Error::InvalidData(format!(
            "need at least {min_len} samples, got {}",
            x.len()
        )));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidData(format!("{name} has non-finite values")));
        }
        if v.iter().all(|&a| a == v[0]) {
            return Err(Error::DegenerateColumn {
                column: name.into(),
            });
        }
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateColumn { column: "x".into() });
    }
    if syy == 0.0 {
        return Err(Error::DegenerateColumn { column: "y".into() });
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Distance correlation (V-statistic), computed in `O(T²)` time and `O(T)`
/// memory.
pub fn distance_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 4)?;
    let n = x.len();
    let row_means = |v: &[f64]| -> (Vec<f64>, f64) {
        let means: Vec<f64> = v
            .iter()
            .map(|a| v.iter().map(|b| (a - b).abs()).sum::<f64>() / n as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / n as f64;
        (means, grand)
    };
    let (ax, gx) = row_means(x);
    let (ay, gy) = row_means(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let a = (x[i] - x[j]).abs() - ax[i] - ax[j] + gx;
            let b = (y[i] - y[j]).abs() - ay[i] - ay[j] + gy;
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
    }
    let denom = (sxx * syy).sqrt();
    if denom <= 0.0 {
        return Err(Error::DegenerateColumn {
            column: if sxx <= 0.0 { "x" } else { "y" }.into(),
        });
    }
    Ok((sxy.max(0.0) / denom).sqrt().min(1.0))
}

/// Randomized dependence coefficient: the largest canonical correlation
/// between random sine/cosine features of the rank-transformed inputs.
///
/// Each variable gets `k / 2` random projections of `(u, 1)` scaled by `s / 2`,
/// each contributing a sine and a cosine feature.
pub fn rdc(x: &[f64], y: &[f64], k: usize, s: f64, seed: u64) -> Result<f64> {
    check_pair(x, y, 2)?;
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "feature count {k} must be even and at least 2"
        )));
    }
    if x.len() <= k {
        return Err(Error::InvalidData(format!(
            "need more than {k} samples, got {}",
            x.len()
        )));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale {s}")));
    }
    let mut rng = substream(seed, 0);
    let fx = random_features(rank_transform(x)?.values(), k, s, &mut rng);
    let fy = random_features(rank_transform(y)?.values(), k, s, &mut rng);
    let (qx, qy) = (column_basis(fx), column_basis(fy));
    if qx.ncols() == 0 || qy.ncols() == 0 {
        return Ok(0.0);
    }
    let cross = qx.transpose() * qy;
    let top = cross.singular_values().iter().copied().fold(0.0, f64::max);
    Ok(top.clamp(0.0, 1.0))
}

fn random_features(u: &[f64], k: usize, s: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let t = u.len();
    let mut out = DMatrix::zeros(t, k);
    for j in 0..k / 2 {
        let w: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        for (i, &ui) in u.iter().enumerate() {
            let z = 0.5 * s * (w * ui + b);
            out[(i, 2 * j)] = z.sin();
            out[(i, 2 * j + 1)] = z.cos();
        }
    }
    out
}

/// Orthonormal basis of the centered column space, dropping directions that
/// are numerically rank-deficient.
fn column_basis(mut f: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in f.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let svd = f.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-8 * top)
        .collect();
    u.select_columns(&keep)
}
