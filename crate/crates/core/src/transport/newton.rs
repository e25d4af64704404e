//! Damped Newton ascent on entropic transport semi-duals.
//!
//! Used to finish solves where accelerated sweeps stall. A stall means some
//! group of column potentials has to move a long way along an almost flat
//! direction of the dual. Newton resolves such a direction in a handful of
//! line-searched steps, where each sweep would move it by a tiny amount.

use nalgebra::{DMatrix, DVector};

use super::cost::GroundCost;

/// Relative slack for objective comparisons near convergence.
const OBJECTIVE_SLACK: f64 = 1e-13;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 120;
/// Ridge relative to the largest column mass.
const RIDGE: f64 = 1e-13;

/// One coupling with source `r` (rows where `r > 0`) and a fixed set of
/// target columns; the rows are always matched exactly.
struct Block {
    /// `−λ·cost` on rows × columns, row-major
    log_k: Vec<f64>,
    r: Vec<f64>,
    log_r: Vec<f64>,
    cols: usize,
}

struct BlockEval {
    /// `⟨r, f⟩` with `f = log r − LSE(g − λ·cost)`
    value: f64,
    plan: Vec<f64>,
    col_sums: Vec<f64>,
}

impl Block {
    fn new(r: &[f64], cols: &[usize], cost: &GroundCost, lambda: f64) -> Self {
        let rows: Vec<usize> = (0..r.len()).filter(|&i| r[i] > 0.0).collect();
        let mut log_k = Vec::with_capacity(rows.len() * cols.len());
        for &i in &rows {
            for &j in cols {
                log_k.push(-lambda * cost.entry(i, j));
            }
        }
        let r: Vec<f64> = rows.iter().map(|&i| r[i]).collect();
        Self {
            log_k,
            log_r: r.iter().map(|v| v.ln()).collect(),
            r,
            cols: cols.len(),
        }
    }

    fn evaluate(&self, g: &[f64]) -> BlockEval {
        let cols = self.cols;
        let mut plan = vec![0.0; self.r.len() * cols];
        let mut col_sums = vec![0.0; cols];
        let mut value = 0.0;
        for (i, (row, out)) in self
            .log_k
            .chunks_exact(cols)
            .zip(plan.chunks_exact_mut(cols))
            .enumerate()
        {
            let max = row
                .iter()
                .zip(g)
                .map(|(a, b)| a + b)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for ((o, a), b) in out.iter_mut().zip(row).zip(g) {
                *o = (a + b - max).exp();
                sum += *o;
            }
            value += self.r[i] * (self.log_r[i] - max - sum.ln());
            let scale = self.r[i] / sum;
            for (o, s) in out.iter_mut().zip(col_sums.iter_mut()) {
                *o *= scale;
                *s += *o;
            }
        }
        BlockEval {
            value,
            plan,
            col_sums,
        }
    }

    /// Negated Hessian of `⟨r, f⟩` in `g`: `diag(colsum) − Pᵀ diag(1/r) P`,
    /// plus `ridge·I`.
    fn curvature(&self, e: &BlockEval, ridge: f64) -> DMatrix<f64> {
        let cols = self.cols;
        let q = DMatrix::from_fn(self.r.len(), cols, |i, j| {
            e.plan[i * cols + j] / self.r[i].sqrt()
        });
        let mut h = -q.tr_mul(&q);
        for j in 0..cols {
            h[(j, j)] += e.col_sums[j] + ridge;
        }
        h
    }
}

fn violation<'a>(pairs: impl Iterator<Item = (&'a f64, &'a f64)>) -> f64 {
    pairs.map(|(a, b)| (a - b).abs()).fold(0.0, |acc: f64, v| {
        if v.is_nan() {
            f64::INFINITY
        } else {
            acc.max(v)
        }
    })
}

/// Backtracking line search shared by both solvers: accept the first step
/// with Armijo gain, or, within rounding of the objective, one that lowers
/// the residual.
fn line_search<E>(
    x: &[f64],
    d: &[f64],
    slope: f64,
    cur_obj: f64,
    cur_res: f64,
    eval: impl Fn(&[f64]) -> (f64, f64, E),
) -> Option<(Vec<f64>, f64, f64, E)> {
    let slack = OBJECTIVE_SLACK * (cur_obj.abs() + 1.0);
    let mut t = 1.0;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..MAX_HALVINGS {
        for ((y, a), b) in trial.iter_mut().zip(x).zip(d) {
            *y = a + t * b;
        }
        let (obj, res, extra) = eval(&trial);
        let gain = obj - cur_obj;
        if res.is_finite() && (gain >= ARMIJO * t * slope || (gain.abs() <= slack && res < cur_res))
        {
            return Some((trial, obj, res, extra));
        }
        t *= 0.5;
    }
    None
}

/// Newton on the Sinkhorn semi-dual `⟨r, f⟩ + ⟨c, g⟩` over the columns with
/// `c > 0`.
pub(crate) struct NewtonPolish {
    block: Block,
    c: Vec<f64>,
}

impl NewtonPolish {
    /// Also returns the active column indices, the layout of `g` in [`Self::run`].
    pub(crate) fn new(r: &[f64], c: &[f64], cost: &GroundCost, lambda: f64) -> (Self, Vec<usize>) {
        let cols: Vec<usize> = (0..c.len()).filter(|&j| c[j] > 0.0).collect();
        let polish = Self {
            block: Block::new(r, &cols, cost, lambda),
            c: cols.iter().map(|&j| c[j]).collect(),
        };
        (polish, cols)
    }

    fn evaluate(&self, g: &[f64]) -> (f64, f64, BlockEval) {
        let e = self.block.evaluate(g);
        let obj = e.value + g.iter().zip(&self.c).map(|(a, b)| a * b).sum::<f64>();
        (obj, violation(e.col_sums.iter().zip(&self.c)), e)
    }

    /// Up to `max_steps` Newton steps on active potentials `g`; returns the
    /// steps taken and the final column violation.
    pub(crate) fn run(&self, g: &mut [f64], tol: f64, max_steps: usize) -> (usize, f64) {
        let (mut obj, mut res, mut e) = self.evaluate(g);
        let ridge = RIDGE * self.c.iter().copied().fold(0.0, f64::max);
        let mut steps = 0;
        while res >= tol && steps < max_steps {
            let grad = DVector::from_iterator(
                self.c.len(),
                self.c.iter().zip(&e.col_sums).map(|(c, s)| c - s),
            );
            let Some(d) = self
                .block
                .curvature(&e, ridge)
                .cholesky()
                .map(|ch| ch.solve(&grad))
            else {
                break;
            };
            if d.iter().any(|v| !v.is_finite()) {
                break;
            }
            let slope = d.dot(&grad);
            let Some(next) = line_search(g, d.as_slice(), slope, obj, res, |x| self.evaluate(x))
            else {
                break;
            };
            g.copy_from_slice(&next.0);
            (obj, res, e) = (next.1, next.2, next.3);
            steps += 1;
        }
        (steps, res)
    }
}

/// Newton on the barycenter semi-dual `Σ_k w_k ⟨a_k, f_k⟩` over stacked
/// column potentials constrained to `Σ_k w_k g_k = 0`.
pub(crate) struct BarycenterNewton {
    blocks: Vec<Block>,
    w: Vec<f64>,
    n: usize,
}

impl BarycenterNewton {
    pub(crate) fn new(inputs: &[&[f64]], w: &[f64], cost: &GroundCost, lambda: f64) -> Self {
        let n = cost.n_cells();
        let cols: Vec<usize> = (0..n).collect();
        Self {
            blocks: inputs
                .iter()
                .map(|a| Block::new(a, &cols, cost, lambda))
                .collect(),
            w: w.to_vec(),
            n,
        }
    }

    fn evaluate(&self, x: &[f64]) -> (f64, f64, Vec<BlockEval>) {
        let evals: Vec<BlockEval> = self
            .blocks
            .iter()
            .zip(x.chunks_exact(self.n))
            .map(|(b, g)| b.evaluate(g))
            .collect();
        let obj = evals.iter().zip(&self.w).map(|(e, w)| w * e.value).sum();
        let target = self.target(&evals);
        let res = evals
            .iter()
            .map(|e| violation(e.col_sums.iter().zip(&target)))
            .fold(0.0, f64::max);
        (obj, res, evals)
    }

    /// Weighted geometric mean of the column marginals, as in the projections.
    fn target(&self, evals: &[BlockEval]) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                evals
                    .iter()
                    .zip(&self.w)
                    .map(|(e, w)| w * e.col_sums[j].ln())
                    .sum::<f64>()
                    .exp()
            })
            .collect()
    }

    pub(crate) fn run(&self, x: &mut [f64], tol: f64, max_steps: usize) -> (usize, f64) {
        let n = self.n;
        let (mut obj, mut res, mut evals) = self.evaluate(x);
        let ridge = RIDGE
            * evals
                .iter()
                .flat_map(|e| &e.col_sums)
                .copied()
                .fold(0.0, f64::max);
        let mut steps = 0;
        while res >= tol && steps < max_steps {
            let Some(d) = self.direction(&evals, ridge) else {
                break;
            };
            let slope: f64 = (0..self.blocks.len())
                .map(|k| {
                    let s = &evals[k].col_sums;
                    -self.w[k] * (0..n).map(|j| s[j] * d[k * n + j]).sum::<f64>()
                })
                .sum();
            let Some(next) = line_search(x, &d, slope, obj, res, |y| self.evaluate(y)) else {
                break;
            };
            x.copy_from_slice(&next.0);
            (obj, res, evals) = (next.1, next.2, next.3);
            steps += 1;
        }
        (steps, res)
    }

    /// Solve the KKT system: `d_k = A_k⁻¹(b − s_k)` with the common column
    /// marginal `b` chosen so that `Σ_k w_k d_k = 0`.
    fn direction(&self, evals: &[BlockEval], ridge: f64) -> Option<Vec<f64>> {
        let n = self.n;
        let mut inverses = Vec::with_capacity(self.blocks.len());
        let mut lhs = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for ((block, e), &w) in self.blocks.iter().zip(evals).zip(&self.w) {
            let inv = block.curvature(e, ridge).cholesky()?.inverse();
            let s = DVector::from_column_slice(&e.col_sums);
            lhs += &inv * w;
            rhs += (&inv * s) * w;
            inverses.push(inv);
        }
        let b = lhs.cholesky()?.solve(&rhs);
        let mut d = vec![0.0; n * self.blocks.len()];
        for (k, inv) in inverses.iter().enumerate() {
            let s = DVector::from_column_slice(&evals[k].col_sums);
            let dk = inv * (&b - s);
            d[k * n..(k + 1) * n].copy_from_slice(dk.as_slice());
        }
        // remove rounding drift off the constraint
        for j in 0..n {
            let mean: f64 = (0..self.blocks.len())
                .map(|k| self.w[k] * d[k * n + j])
                .sum();
            for k in 0..self.blocks.len() {
                d[k * n + j] -= mean;
            }
        }
        d.iter().all(|v| v.is_finite()).then_some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_sharp_two_cell_problem() {
        // two cells one step apart; sharp enough that plain sweeps crawl
        let cost = GroundCost::squared_euclidean(2);
        let r = [0.5, 0.0, 0.0, 0.5];
        let c = [0.25, 0.25, 0.25, 0.25];
        let (polish, cols) = NewtonPolish::new(&r, &c, &cost, 400.0);
        assert_eq!(cols, vec![0, 1, 2, 3]);
        let mut g = vec![0.0; 4];
        let (steps, res) = polish.run(&mut g, 1e-12, 200);
        assert!(res < 1e-12, "{res} after {steps}");
    }

    #[test]
    fn barycenter_of_two_diracs_is_the_midpoint() {
        let cost = GroundCost::squared_euclidean(3);
        let mut a = [0.0; 9];
        let mut b = [0.0; 9];
        a[0] = 1.0;
        b[8] = 1.0;
        let newton = BarycenterNewton::new(&[&a, &b], &[0.5, 0.5], &cost, 200.0);
        let mut x = vec![0.0; 18];
        let (steps, res) = newton.run(&mut x, 1e-10, 200);
        assert!(res < 1e-10, "{res} after {steps}");
        let (_, _, evals) = newton.evaluate(&x);
        let target = newton.target(&evals);
        assert!(target[4] > 0.99, "{target:?}");
    }
}
