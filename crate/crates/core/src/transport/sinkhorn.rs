//! Dual-Sinkhorn distance `⟨P^λ, M⟩_F` where
//! `P^λ = argmin_{P ∈ U(r,c)} ⟨P, M⟩ − h(P)/λ`.
//!
//! Two solvers are provided. The scaling solver runs the classic
//! Sinkhorn–Knopp updates `u = r / Kv`, `v = c / Kᵀu`; it is fast but
//! underflows once `λ·cost` reaches a few hundred. The log-domain solver
//! iterates on the potentials `f = log u`, `g = log v` with log-sum-exp
//! kernel applications and is stable for any `λ`. At large `λ` it warm-starts
//! from a geometric ladder of smaller `λ` values (ε-scaling); the fixed point
//! is unchanged, only the iteration count drops.

use ndarray::Array2;

use super::accel::{accelerated_ascent, Ascent, DualSweep};
use super::cost::GroundCost;
use super::kernel::GibbsKernel;
use super::newton::NewtonPolish;
use crate::copula::{ensure_same_resolution, CopulaHistogram};
use crate::error::{Error, Result};

/// Default `λ` in units of `m²`: `λ = 50·m²`.
pub const DEFAULT_LAMBDA_SCALE: f64 = 50.0;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Each ε-scaling rung multiplies `λ` by this factor.
const ANNEAL_FACTOR: f64 = 4.0;
/// Annealing starts at `λ = ANNEAL_START · m²` (costs of adjacent cells are `1/m²`).
const ANNEAL_START: f64 = 2.0;
/// Sweeps between progress checks.
pub(crate) const STALL_WINDOW: usize = 300;
/// A window that shrinks the residual by less than this factor has stalled.
pub(crate) const STALL_RATIO: f64 = 0.5;
/// Newton steps per stall.
const NEWTON_STEPS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Entropic sharpness `λ > 0`; larger is closer to exact transport.
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the worst marginal violation (L∞) drops below this.
    pub tol: f64,
    pub log_domain: bool,
}

impl SinkhornConfig {
    /// Defaults for an `m × m` grid: `λ = 50·m²`, `tol = 1e-6`, 10 000 iterations, log domain.
    pub fn for_resolution(m: usize) -> Self {
        Self {
            lambda: DEFAULT_LAMBDA_SCALE * (m * m) as f64,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            log_domain: true,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_log_domain(mut self, log_domain: bool) -> Self {
        self.log_domain = log_domain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda {} must be > 0",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol {} must be > 0",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Entropic transport plan `P_ij = exp(f_i + g_j − λ·cost_ij)` in factored form.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    cost: GroundCost,
    lambda: f64,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl TransportPlan {
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let e = self.f[i] + self.g[j] - self.lambda * self.cost.entry(i, j);
        if e < -745.0 {
            0.0
        } else {
            e.exp()
        }
    }

    pub fn n_cells(&self) -> usize {
        self.f.len()
    }

    /// Materialize the `m² × m²` plan.
    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n_cells();
        Array2::from_shape_fn((n, n), |(i, j)| self.entry(i, j))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.n_cells();
        (0..n)
            .map(|i| {
                if self.f[i] == f64::NEG_INFINITY {
                    0.0
                } else {
                    (0..n).map(|j| self.entry(i, j)).sum()
                }
            })
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.n_cells();
        (0..n)
            .map(|j| {
                if self.g[j] == f64::NEG_INFINITY {
                    0.0
                } else {
                    (0..n).map(|i| self.entry(i, j)).sum()
                }
            })
            .collect()
    }

    /// `⟨P, cost⟩_F`, summed over the supports of both potentials.
    pub fn cost_value(&self) -> f64 {
        let rows: Vec<usize> = support(&self.f);
        let cols: Vec<usize> = support(&self.g);
        let mut total = 0.0;
        for &i in &rows {
            for &j in &cols {
                let c = self.cost.entry(i, j);
                let e = self.f[i] + self.g[j] - self.lambda * c;
                if e > -745.0 {
                    total += e.exp() * c;
                }
            }
        }
        total
    }
}

fn support(potential: &[f64]) -> Vec<usize> {
    potential
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > f64::NEG_INFINITY)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub value: f64,
    pub plan: TransportPlan,
    pub iters: usize,
    /// Worst marginal violation at termination.
    pub residual: f64,
}

/// Dual-Sinkhorn distance between two histograms on the same grid.
pub fn sinkhorn_distance(
    r: &CopulaHistogram,
    c: &CopulaHistogram,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<SinkhornOutput> {
    ensure_same_resolution(r, c)?;
    if cost.m() != r.m() {
        return Err(Error::InvalidData(format!(
            "cost grid m={} does not match histogram m={}",
            cost.m(),
            r.m()
        )));
    }
    cfg.validate()?;
    sinkhorn_on_slices(r.as_slice(), c.as_slice(), cost, cfg)
}

pub(crate) fn sinkhorn_on_slices(
    r: &[f64],
    c: &[f64],
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<SinkhornOutput> {
    let (f, g, iters, residual, converged) = if cfg.log_domain {
        solve_log_annealed(r, c, cost, cfg)
    } else {
        solve_scaling(r, c, cost, cfg)?
    };
    let plan = TransportPlan {
        cost: cost.clone(),
        lambda: cfg.lambda,
        f,
        g,
    };
    let value = plan.cost_value();
    if !converged {
        return Err(Error::ConvergenceFailure {
            iters,
            residual,
            last_value: Some(value),
        });
    }
    Ok(SinkhornOutput {
        value,
        plan,
        iters,
        residual,
    })
}

fn logs(h: &[f64]) -> Vec<f64> {
    h.iter()
        .map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        .collect()
}

type Solve = (Vec<f64>, Vec<f64>, usize, f64, bool);

/// One log-domain Sinkhorn sweep as a map on the active column potentials.
struct Sweep<'a> {
    log_r: &'a [f64],
    log_c: &'a [f64],
    r: &'a [f64],
    c: &'a [f64],
    active: Vec<usize>,
    kernel: &'a GibbsKernel,
    f: Vec<f64>,
    g: Vec<f64>,
    lk: Vec<f64>,
    scratch: Vec<f64>,
}

impl Sweep<'_> {
    fn scatter(&mut self, x: &[f64]) {
        for (&j, &v) in self.active.iter().zip(x) {
            self.g[j] = v;
        }
    }
}

impl DualSweep for Sweep<'_> {
    /// `⟨r, f⟩ + ⟨c, g⟩` with `f = log r − log K e^g`.
    fn objective(&mut self, x: &[f64]) -> f64 {
        self.scatter(x);
        self.kernel
            .log_apply(&self.g, &mut self.lk, &mut self.scratch);
        let mut obj = 0.0;
        for i in 0..self.f.len() {
            if self.r[i] > 0.0 {
                self.f[i] = self.log_r[i] - self.lk[i];
                obj += self.r[i] * self.f[i];
            } else {
                self.f[i] = f64::NEG_INFINITY;
            }
        }
        obj + self
            .active
            .iter()
            .map(|&j| self.c[j] * self.g[j])
            .sum::<f64>()
    }

    fn sweep(&mut self, _x: &[f64], t: &mut [f64]) -> f64 {
        self.kernel
            .log_apply(&self.f, &mut self.lk, &mut self.scratch);
        // rows are exact for (f, g); columns carry the violation
        let mut residual = 0.0f64;
        for (k, &j) in self.active.iter().enumerate() {
            t[k] = self.log_c[j] - self.lk[j];
            let v = (self.c[j] - (self.g[j] + self.lk[j]).exp()).abs();
            residual = if v.is_nan() {
                f64::INFINITY
            } else {
                residual.max(v)
            };
        }
        residual
    }
}

/// Log-domain iterations from warm potentials `f`, `g`: accelerated sweeps,
/// with Newton steps whenever the sweeps stop making progress.
fn log_iterations(
    problem: &Problem<'_>,
    kernel: &GibbsKernel,
    lambda: f64,
    f: &mut [f64],
    g: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Ascent {
    let n = kernel.n_cells();
    let active: Vec<usize> = (0..n).filter(|&j| problem.c[j] > 0.0).collect();
    let mut x: Vec<f64> = active.iter().map(|&j| g[j]).collect();
    let mut sweep = Sweep {
        log_r: problem.log_r,
        log_c: problem.log_c,
        r: problem.r,
        c: problem.c,
        active,
        kernel,
        f: vec![0.0; n],
        g: vec![f64::NEG_INFINITY; n],
        lk: vec![0.0; n],
        scratch: Vec::new(),
    };
    let mut newton = None;
    let mut used = 0;
    let mut previous = f64::INFINITY;
    let out = loop {
        let window = STALL_WINDOW.min(max_iter - used);
        let out = accelerated_ascent(&mut sweep, &mut x, tol, window);
        used += out.iters;
        if out.converged || used >= max_iter || !out.residual.is_finite() {
            break Ascent { iters: used, ..out };
        }
        if out.residual > STALL_RATIO * previous {
            let polish = newton.get_or_insert_with(|| {
                NewtonPolish::new(problem.r, problem.c, problem.cost, lambda).0
            });
            let (steps, _) = polish.run(&mut x, tol, NEWTON_STEPS.min(max_iter - used));
            used += steps;
        }
        previous = out.residual;
    };
    f.copy_from_slice(&sweep.f);
    g.copy_from_slice(&sweep.g);
    out
}

struct Problem<'a> {
    r: &'a [f64],
    c: &'a [f64],
    log_r: &'a [f64],
    log_c: &'a [f64],
    cost: &'a GroundCost,
}

/// `λ` ladder ending at `lambda`, starting near `ANNEAL_START · m²`.
pub(crate) fn anneal_ladder(lambda: f64, m: usize) -> Vec<f64> {
    let start = ANNEAL_START * (m * m) as f64;
    let mut ladder = vec![lambda];
    let mut l = lambda;
    while l / ANNEAL_FACTOR >= start {
        l /= ANNEAL_FACTOR;
        ladder.push(l);
    }
    ladder.reverse();
    ladder
}

fn solve_log_annealed(r: &[f64], c: &[f64], cost: &GroundCost, cfg: &SinkhornConfig) -> Solve {
    let n = r.len();
    let log_r = logs(r);
    let log_c = logs(c);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let problem = Problem {
        r,
        c,
        log_r: &log_r,
        log_c: &log_c,
        cost,
    };
    let ladder = anneal_ladder(cfg.lambda, cost.m());
    let mut total = 0;
    let mut prev_lambda = ladder[0];
    let last = ladder.len() - 1;
    for (k, &lambda) in ladder.iter().enumerate() {
        // keep the dual potentials f/λ, g/λ fixed across rungs
        let scale = lambda / prev_lambda;
        f.iter_mut().chain(g.iter_mut()).for_each(|v| *v *= scale);
        prev_lambda = lambda;
        let kernel = GibbsKernel::new(cost, lambda, false);
        // every rung is solved to the final tolerance: drifts left over by a
        // loose rung are most expensive to remove at the sharpest one
        let budget = cfg.max_iter - total;
        let out = log_iterations(&problem, &kernel, lambda, &mut f, &mut g, cfg.tol, budget);
        total += out.iters;
        if k == last || !out.converged {
            return (f, g, total, out.residual, out.converged);
        }
    }
    unreachable!("ladder is never empty")
}

fn solve_scaling(r: &[f64], c: &[f64], cost: &GroundCost, cfg: &SinkhornConfig) -> Result<Solve> {
    let n = r.len();
    let kernel = GibbsKernel::new(cost, cfg.lambda, false);
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; n];
    let mut kv = vec![0.0; n];
    let mut ktu = vec![0.0; n];
    let mut scratch = Vec::new();
    let underflow = || Error::UnderflowDetected { lambda: cfg.lambda };
    kernel.apply(&v, &mut kv, &mut scratch);
    let mut iters = 0;
    let mut residual;
    loop {
        residual = 0.0f64;
        for i in 0..n {
            if r[i] > 0.0 && !(kv[i] > 0.0 && kv[i].is_finite()) {
                return Err(underflow());
            }
            residual = residual.max((u[i] * kv[i] - r[i]).abs());
        }
        if iters > 0 && residual < cfg.tol {
            break;
        }
        if iters >= cfg.max_iter {
            break;
        }
        for i in 0..n {
            u[i] = if r[i] > 0.0 { r[i] / kv[i] } else { 0.0 };
        }
        kernel.apply(&u, &mut ktu, &mut scratch);
        for j in 0..n {
            if c[j] > 0.0 && !(ktu[j] > 0.0 && ktu[j].is_finite()) {
                return Err(underflow());
            }
            v[j] = if c[j] > 0.0 { c[j] / ktu[j] } else { 0.0 };
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(underflow());
        }
        kernel.apply(&v, &mut kv, &mut scratch);
        iters += 1;
    }
    let converged = residual < cfg.tol;
    Ok((logs(&u), logs(&v), iters, residual, converged))
}

/// Debiased Sinkhorn divergence `S(r,c) = d(r,c) − ½d(r,r) − ½d(c,c)`, clamped at zero.
///
/// The cross term is always evaluated with the arguments in a canonical order,
/// so `S(r,c)` and `S(c,r)` are bit-identical.
pub fn sinkhorn_divergence(
    r: &CopulaHistogram,
    c: &CopulaHistogram,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    let (a, b) = canonical_pair(r, c);
    let cross = sinkhorn_distance(a, b, cost, cfg)?.value;
    let self_a = sinkhorn_distance(a, a, cost, cfg)?.value;
    let self_b = sinkhorn_distance(b, b, cost, cfg)?.value;
    Ok((cross - 0.5 * self_a - 0.5 * self_b).max(0.0))
}

/// Order two histograms lexicographically by their mass slices.
pub(crate) fn canonical_pair<'a>(
    r: &'a CopulaHistogram,
    c: &'a CopulaHistogram,
) -> (&'a CopulaHistogram, &'a CopulaHistogram) {
    let ord = r
        .as_slice()
        .iter()
        .zip(c.as_slice())
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal);
    if ord.is_gt() {
        (c, r)
    } else {
        (r, c)
    }
}
