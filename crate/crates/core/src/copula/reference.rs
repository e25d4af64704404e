use ndarray::Array2;

use super::{inverse_normal_cdf, CopulaHistogram};
use crate::error::{Error, Result};

const IPF_TOL: f64 = 1e-12;
const IPF_MAX_ITER: usize = 20_000;

/// A weighted rectangle `[u_lo, u_hi] × [v_lo, v_hi]` painted on the base grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub u: (f64, f64),
    pub v: (f64, f64),
    pub weight: f64,
}

impl Patch {
    pub fn new(u: (f64, f64), v: (f64, f64), weight: f64) -> Self {
        Self { u, v, weight }
    }

    fn contains(&self, u: f64, v: f64) -> bool {
        self.u.0 <= u && u <= self.u.1 && self.v.0 <= v && v <= self.v.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    /// Comonotonic bound `M`.
    Upper,
    /// Countermonotonic bound `W`.
    Lower,
    /// Independence copula `Π`.
    Independence,
    Gaussian {
        rho: f64,
    },
    /// Rectangles painted over a uniform base, then projected to uniform margins.
    Patch(Vec<Patch>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub m: usize,
}

impl TargetSpec {
    pub fn new(kind: TargetKind, m: usize) -> Self {
        Self { kind, m }
    }
}

/// Build a reference or handcrafted target copula on an `m × m` grid.
pub fn reference_copula(spec: &TargetSpec) -> Result<CopulaHistogram> {
    let m = spec.m;
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "resolution m={m} must be >= 2"
        )));
    }
    let mf = m as f64;
    match &spec.kind {
        TargetKind::Upper => Ok(CopulaHistogram {
            mass: Array2::from_shape_fn((m, m), |(p, q)| if p == q { 1.0 / mf } else { 0.0 }),
        }),
        TargetKind::Lower => Ok(CopulaHistogram {
            mass: Array2::from_shape_fn(
                (m, m),
                |(p, q)| {
                    if p + q == m - 1 {
                        1.0 / mf
                    } else {
                        0.0
                    }
                },
            ),
        }),
        TargetKind::Independence => Ok(CopulaHistogram {
            mass: Array2::from_elem((m, m), 1.0 / (mf * mf)),
        }),
        TargetKind::Gaussian { rho } => gaussian_grid(*rho, m),
        TargetKind::Patch(patches) => patch_grid(patches, m),
    }
}

fn gaussian_grid(rho: f64, m: usize) -> Result<CopulaHistogram> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gaussian correlation {rho} must lie in (-1, 1)"
        )));
    }
    let z: Vec<f64> = (0..m)
        .map(|p| inverse_normal_cdf((p as f64 + 0.5) / m as f64))
        .collect();
    let one_minus = 1.0 - rho * rho;
    let norm = one_minus.sqrt();
    // bivariate normal density over the product of its margins
    let raw = Array2::from_shape_fn((m, m), |(p, q)| {
        let (x, y) = (z[p], z[q]);
        (-(rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * one_minus)).exp() / norm
    });
    project_uniform_margins(&raw, IPF_TOL, IPF_MAX_ITER)
}

fn patch_grid(patches: &[Patch], m: usize) -> Result<CopulaHistogram> {
    if patches.is_empty() {
        return Err(Error::InvalidParameter(
            "patch target needs at least one patch".into(),
        ));
    }
    for p in patches {
        let ok_interval = |(lo, hi): (f64, f64)| {
            (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo < hi
        };
        if !ok_interval(p.u) || !ok_interval(p.v) {
            return Err(Error::InvalidParameter(format!(
                "patch rectangle {:?} x {:?} must be a non-empty subset of [0,1]^2",
                p.u, p.v
            )));
        }
        if !p.weight.is_finite() || p.weight < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "patch weight {} must be finite and >= 0",
                p.weight
            )));
        }
    }
    if patches.iter().all(|p| p.weight == 0.0) {
        return Err(Error::InvalidParameter("all patch weights are zero".into()));
    }
    let center = |i: usize| (i as f64 + 0.5) / m as f64;
    let mut raw = Array2::from_elem((m, m), 1.0);
    for patch in patches {
        for ((p, q), cell) in raw.indexed_iter_mut() {
            if patch.contains(center(p), center(q)) {
                *cell = patch.weight;
            }
        }
    }
    project_uniform_margins(&raw, IPF_TOL, IPF_MAX_ITER)
}

fn margin_residual(grid: &Array2<f64>, target: f64) -> f64 {
    let rows = grid.rows().into_iter().map(|r| (r.sum() - target).abs());
    let cols = grid.columns().into_iter().map(|c| (c.sum() - target).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Iterative proportional fitting: alternately rescale rows and columns until
/// every marginal is within `tol` of `1/m`.
pub fn project_uniform_margins(
    raw: &Array2<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<CopulaHistogram> {
    let (r, c) = raw.dim();
    if r != c || r == 0 {
        return Err(Error::InvalidData(format!(
            "grid must be square, got {r}x{c}"
        )));
    }
    if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidData(
            "grid has negative or non-finite cells".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance {tol} must be > 0"
        )));
    }
    if let Some(p) = raw.rows().into_iter().position(|row| row.sum() <= 0.0) {
        return Err(Error::InfeasibleProjection(format!("row {p} has no mass")));
    }
    if let Some(q) = raw.columns().into_iter().position(|col| col.sum() <= 0.0) {
        return Err(Error::InfeasibleProjection(format!(
            "column {q} has no mass"
        )));
    }
    let target = 1.0 / r as f64;
    let mut grid = raw / raw.sum();
    let mut residual = margin_residual(&grid, target);
    let mut iters = 0;
    while residual >= tol {
        if iters == max_iter {
            return Err(Error::ConvergenceFailure {
                iters,
                residual,
                last_value: None,
            });
        }
        for mut row in grid.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v * target / s);
        }
        for mut col in grid.columns_mut() {
            let s = col.sum();
            col.mapv_inplace(|v| v * target / s);
        }
        residual = margin_residual(&grid, target);
        iters += 1;
    }
    CopulaHistogram::normalized(grid)
}
