//! Entropic Wasserstein barycenter on the fixed `m × m` grid by iterative
//! Bregman projections, run in the log domain.
//!
//! The projections are accelerated and annealed in `λ` exactly like the
//! Sinkhorn solver.

use super::accel::{accelerated_ascent, DualSweep};
use super::cost::GroundCost;
use super::kernel::GibbsKernel;
use super::newton::BarycenterNewton;
use super::sinkhorn::{anneal_ladder, SinkhornConfig, STALL_RATIO, STALL_WINDOW};
use crate::copula::{ensure_same_resolution, CopulaHistogram};
use crate::error::{Error, Result};
use ndarray::Array2;

/// Newton steps per stall. Each costs a dense solve per input, and a couple
/// of steps are enough to knock the sweeps out of a slow drift.
const NEWTON_BURST: usize = 2;

/// Weighted entropic barycenter of `hists` (weights on the simplex).
pub fn wasserstein_barycenter(
    hists: &[CopulaHistogram],
    weights: &[f64],
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<CopulaHistogram> {
    let first = hists
        .first()
        .ok_or_else(|| Error::InvalidData("barycenter of an empty set".into()))?;
    for h in hists {
        ensure_same_resolution(first, h)?;
    }
    if cost.m() != first.m() {
        return Err(Error::InvalidData(format!(
            "cost grid m={} does not match histogram m={}",
            cost.m(),
            first.m()
        )));
    }
    if weights.len() != hists.len() {
        return Err(Error::InvalidData(format!(
            "{} weights for {} histograms",
            weights.len(),
            hists.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(
            "weights must lie on the simplex".into(),
        ));
    }
    cfg.validate()?;

    // zero-weight inputs do not influence the barycenter
    let active: Vec<usize> = (0..hists.len()).filter(|&k| weights[k] > 0.0).collect();
    let m = first.m();
    let n = m * m;
    let inputs: Vec<&[f64]> = active.iter().map(|&k| hists[k].as_slice()).collect();
    let kk = inputs.len();
    let mut sweep = Projections {
        kernel: GibbsKernel::new(cost, cfg.lambda, false),
        n,
        log_a: inputs
            .iter()
            .map(|a| {
                a.iter()
                    .map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
                    .collect()
            })
            .collect(),
        inputs,
        w: active.iter().map(|&k| weights[k]).collect(),
        f: vec![vec![0.0; n]; kk],
        s: vec![vec![0.0; n]; kk],
        log_b: vec![0.0; n],
        lk: vec![0.0; n],
        scratch: Vec::new(),
    };
    // stacked column potentials g_k; Σ_k w_k g_k = 0 is kept by every step
    let mut x = vec![0.0; kk * n];
    let ladder = anneal_ladder(cfg.lambda, m);
    let mut prev_lambda = ladder[0];
    let mut total = 0usize;
    for &lambda in &ladder {
        let scale = lambda / prev_lambda;
        prev_lambda = lambda;
        x.iter_mut().for_each(|v| *v *= scale);
        sweep.kernel = GibbsKernel::new(cost, lambda, false);
        let mut newton = None;
        let mut previous = f64::INFINITY;
        loop {
            let window = STALL_WINDOW.min(cfg.max_iter - total);
            let out = accelerated_ascent(&mut sweep, &mut x, cfg.tol, window);
            total += out.iters;
            if out.converged {
                break;
            }
            if total >= cfg.max_iter || !out.residual.is_finite() {
                return Err(Error::ConvergenceFailure {
                    iters: total,
                    residual: out.residual,
                    last_value: None,
                });
            }
            if out.residual > STALL_RATIO * previous {
                let polish = newton.get_or_insert_with(|| {
                    BarycenterNewton::new(&sweep.inputs, &sweep.w, cost, lambda)
                });
                let (steps, _) =
                    polish.run(&mut x, cfg.tol, NEWTON_BURST.min(cfg.max_iter - total));
                total += steps;
            }
            previous = out.residual;
        }
    }
    let mass = Array2::from_shape_vec((m, m), sweep.log_b.iter().map(|v| v.exp()).collect())
        .expect("grid has m² cells");
    CopulaHistogram::normalized(mass)
}

/// Iterative Bregman projections as a map on the stacked column potentials.
///
/// Each input `a_k` has a coupling `P_k = diag(e^{f_k}) K diag(e^{g_k})`.
/// Given `g`, the rows are matched exactly by `f_k = log a_k − log K e^{g_k}`;
/// the sweep then projects every column marginal onto the weighted geometric
/// mean `b = Π_k (Kᵀe^{f_k})^{w_k}`.
struct Projections<'a> {
    kernel: GibbsKernel,
    n: usize,
    inputs: Vec<&'a [f64]>,
    log_a: Vec<Vec<f64>>,
    w: Vec<f64>,
    f: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    log_b: Vec<f64>,
    lk: Vec<f64>,
    scratch: Vec<f64>,
}

impl DualSweep for Projections<'_> {
    /// `Σ_k w_k ⟨a_k, f_k⟩`, the semi-dual on `{Σ_k w_k g_k = 0}`.
    fn objective(&mut self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut obj = 0.0;
        for (k, gk) in x.chunks_exact(n).enumerate() {
            self.kernel.log_apply(gk, &mut self.lk, &mut self.scratch);
            let mut part = 0.0;
            for i in 0..n {
                if self.inputs[k][i] > 0.0 {
                    self.f[k][i] = self.log_a[k][i] - self.lk[i];
                    part += self.inputs[k][i] * self.f[k][i];
                } else {
                    self.f[k][i] = f64::NEG_INFINITY;
                }
            }
            obj += self.w[k] * part;
        }
        obj
    }

    fn sweep(&mut self, x: &[f64], t: &mut [f64]) -> f64 {
        let n = self.n;
        for k in 0..self.f.len() {
            self.kernel
                .log_apply(&self.f[k], &mut self.s[k], &mut self.scratch);
        }
        for j in 0..n {
            self.log_b[j] = self.s.iter().zip(&self.w).map(|(s, w)| w * s[j]).sum();
        }
        let mut residual = 0.0f64;
        for (k, (gk, tk)) in x.chunks_exact(n).zip(t.chunks_exact_mut(n)).enumerate() {
            for j in 0..n {
                tk[j] = self.log_b[j] - self.s[k][j];
                let v = ((gk[j] + self.s[k][j]).exp() - self.log_b[j].exp()).abs();
                residual = if v.is_nan() {
                    f64::INFINITY
                } else {
                    residual.max(v)
                };
            }
        }
        residual
    }
}
