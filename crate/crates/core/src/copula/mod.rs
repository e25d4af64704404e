//! Empirical copulas and reference copulas on an `m × m` grid.
//!
//! Observations are turned into pseudo-observations with the normalized rank
//! transform `u = rank / T`, then binned into a 2-D histogram whose cells are
//! the half-open squares `(p/m, (p+1)/m] × (q/m, (q+1)/m]`. Row index `p`
//! follows the first variable, column index `q` the second.

mod normal;
mod reference;

pub use normal::{inverse_normal_cdf, normal_cdf, normal_pdf};
pub use reference::{project_uniform_margins, reference_copula, Patch, TargetKind, TargetSpec};

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Default grid resolution per axis.
pub const DEFAULT_RESOLUTION: usize = 20;

/// Tolerance on the total mass of a [`CopulaHistogram`].
pub const MASS_TOL: f64 = 1e-9;

/// `T × N` table of named real-valued observations (row = sample).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    names: Vec<String>,
    data: Array2<f64>,
}

impl ObservationTable {
    pub fn new(names: Vec<String>, data: Array2<f64>) -> Result<Self> {
        let (t, n) = data.dim();
        if names.len() != n {
            return Err(Error::InvalidData(format!(
                "{} names for {} columns",
                names.len(),
                n
            )));
        }
        if n == 0 {
            return Err(Error::InvalidData("table has no variables".into()));
        }
        if t < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 samples, got {t}"
            )));
        }
        if let Some(((row, col), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value {v} at row {row}, column {}",
                names[col]
            )));
        }
        for (j, name) in names.iter().enumerate() {
            let col = data.column(j);
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return Err(Error::DegenerateColumn {
                    column: name.clone(),
                });
            }
        }
        Ok(Self { names, data })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of samples `T`.
    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    /// Number of variables `N`.
    pub fn n_vars(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.data.column(j)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// Rank-transform every column.
    pub fn rank_columns(&self) -> Result<Vec<RankColumn>> {
        (0..self.n_vars())
            .map(|j| {
                let col = self.column(j).to_vec();
                rank_transform(&col).map_err(|e| match e {
                    Error::DegenerateColumn { .. } => Error::DegenerateColumn {
                        column: self.names[j].clone(),
                    },
                    other => other,
                })
            })
            .collect()
    }
}

/// Normalized ranks `rank / T` of one column, ties resolved by average rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankColumn {
    u: Vec<f64>,
}

impl RankColumn {
    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Wrap already-normalized pseudo-observations. Values must lie in `[0, 1]`.
    pub fn from_values(u: Vec<f64>) -> Result<Self> {
        if let Some(v) = u.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidData(format!(
                "pseudo-observation {v} outside [0, 1]"
            )));
        }
        Ok(Self { u })
    }
}

/// Average ranks (1-based) of `values`; tied values share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Normalized rank transform of a column.
pub fn rank_transform(column: &[f64]) -> Result<RankColumn> {
    let t = column.len();
    if t < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 samples, got {t}"
        )));
    }
    if let Some((i, v)) = column.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidData(format!(
            "non-finite value {v} at index {i}"
        )));
    }
    if column.iter().all(|&v| v == column[0]) {
        return Err(Error::DegenerateColumn {
            column: "<unnamed>".into(),
        });
    }
    let tf = t as f64;
    let u = average_ranks(column).into_iter().map(|r| r / tf).collect();
    Ok(RankColumn { u })
}

/// Bin index of a pseudo-observation in `(p/m, (p+1)/m]`, with 0 mapped to bin 0.
pub(crate) fn bin_of(u: f64, m: usize) -> usize {
    let scaled = u * m as f64;
    let nearest = scaled.round();
    // u = rank/T is often an exact bin edge; rounding error must not push it up a bin
    let upper = if (scaled - nearest).abs() < 1e-9 {
        nearest
    } else {
        scaled.ceil()
    };
    (upper as usize).saturating_sub(1).min(m - 1)
}

/// A discretized copula measure: `m × m` nonnegative masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaHistogram {
    mass: Array2<f64>,
}

impl CopulaHistogram {
    /// Validate a mass grid: square, finite, nonnegative, total mass `1 ± MASS_TOL`.
    pub fn from_mass(mass: Array2<f64>) -> Result<Self> {
        Self::check(&mass, MASS_TOL)?;
        Ok(Self { mass })
    }

    /// Scale a nonnegative grid to unit mass.
    pub fn normalized(mut mass: Array2<f64>) -> Result<Self> {
        let (r, c) = mass.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidData(format!(
                "grid must be square, got {r}x{c}"
            )));
        }
        if mass.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidData(
                "grid has negative or non-finite cells".into(),
            ));
        }
        let total: f64 = mass.sum();
        if total <= 0.0 {
            return Err(Error::InvalidData("grid has zero total mass".into()));
        }
        mass.mapv_inplace(|v| v / total);
        Ok(Self { mass })
    }

    fn check(mass: &Array2<f64>, tol: f64) -> Result<()> {
        let (r, c) = mass.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidData(format!(
                "grid must be square, got {r}x{c}"
            )));
        }
        if let Some(((p, q), v)) = mass
            .indexed_iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidData(format!("cell ({p},{q}) has mass {v}")));
        }
        let total: f64 = mass.sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidData(format!("total mass {total} is not 1")));
        }
        Ok(())
    }

    /// Grid resolution per axis.
    pub fn m(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass(&self) -> &Array2<f64> {
        &self.mass
    }

    pub fn into_mass(self) -> Array2<f64> {
        self.mass
    }

    /// Row-major flat view (cell index `p * m + q`).
    pub fn as_slice(&self) -> &[f64] {
        self.mass
            .as_slice()
            .expect("copula mass is stored in standard layout")
    }

    pub fn row_marginals(&self) -> Vec<f64> {
        self.mass.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_marginals(&self) -> Vec<f64> {
        self.mass.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// Cumulative mass `H[p][q] = Σ_{p' ≤ p, q' ≤ q} mass[p'][q']`.
    pub fn cdf(&self) -> Array2<f64> {
        let m = self.m();
        let mut h = Array2::zeros((m, m));
        for p in 0..m {
            let mut row_acc = 0.0;
            for q in 0..m {
                row_acc += self.mass[[p, q]];
                h[[p, q]] = row_acc + if p > 0 { h[[p - 1, q]] } else { 0.0 };
            }
        }
        h
    }

    /// Total-variation distance `½ Σ |a − b|`.
    pub fn total_variation(&self, other: &CopulaHistogram) -> Result<f64> {
        ensure_same_resolution(self, other)?;
        Ok(0.5
            * self
                .mass
                .iter()
                .zip(other.mass.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// Cellwise weighted average (the Euclidean barycenter).
    pub fn euclidean_average(hists: &[CopulaHistogram], weights: &[f64]) -> Result<Self> {
        let first = hists
            .first()
            .ok_or_else(|| Error::InvalidData("no histograms to average".into()))?;
        if weights.len() != hists.len() {
            return Err(Error::InvalidData(format!(
                "{} weights for {} histograms",
                weights.len(),
                hists.len()
            )));
        }
        let mut acc = Array2::zeros(first.mass.dim());
        for (h, &w) in hists.iter().zip(weights) {
            ensure_same_resolution(first, h)?;
            acc.scaled_add(w, &h.mass);
        }
        Self::normalized(acc)
    }
}

pub(crate) fn ensure_same_resolution(a: &CopulaHistogram, b: &CopulaHistogram) -> Result<()> {
    if a.m() != b.m() {
        return Err(Error::InvalidData(format!(
            "resolution mismatch: {} vs {}",
            a.m(),
            b.m()
        )));
    }
    Ok(())
}

/// Bin paired pseudo-observations into an `m × m` copula histogram.
pub fn empirical_copula(x: &RankColumn, y: &RankColumn, m: usize) -> Result<CopulaHistogram> {
    let t = x.len();
    if y.len() != t {
        return Err(Error::InvalidData(format!(
            "length mismatch: {} vs {}",
            t,
            y.len()
        )));
    }
    if m < 2 || m > t {
        return Err(Error::InvalidParameter(format!(
            "resolution m={m} must satisfy 2 <= m <= T={t}"
        )));
    }
    let mut mass = Array2::zeros((m, m));
    let w = 1.0 / t as f64;
    for (&ux, &uy) in x.u.iter().zip(&y.u) {
        mass[[bin_of(ux, m), bin_of(uy, m)]] += w;
    }
    Ok(CopulaHistogram { mass })
}

/// Empirical copula straight from two raw columns.
pub fn empirical_copula_from_samples(x: &[f64], y: &[f64], m: usize) -> Result<CopulaHistogram> {
    empirical_copula(&rank_transform(x)?, &rank_transform(y)?, m)
}

/// Empirical copula of every variable pair `i < j` of `table`, in row-major
/// pair order.
pub fn pair_copulas(table: &ObservationTable, m: usize) -> Result<Vec<PairCopula>> {
    let ranks = table.rank_columns()?;
    let n = table.n_vars();
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            Ok(PairCopula {
                i,
                j,
                copula: empirical_copula(&ranks[i], &ranks[j], m)?,
            })
        })
        .collect()
}

/// Copula of the variable pair `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCopula {
    pub i: usize,
    pub j: usize,
    pub copula: CopulaHistogram,
}

/// Spearman's rho read off a copula histogram: `12 Σ mass·c_p·c_q − 3`
/// with cell centers `c_p = (p + ½)/m`.
pub fn spearman_from_copula(c: &CopulaHistogram) -> f64 {
    let m = c.m();
    let centers: Vec<f64> = (0..m).map(|p| (p as f64 + 0.5) / m as f64).collect();
    let moment: f64 = c
        .mass
        .indexed_iter()
        .map(|((p, q), &v)| v * centers[p] * centers[q])
        .sum();
    (12.0 * moment - 3.0).clamp(-1.0, 1.0)
}
