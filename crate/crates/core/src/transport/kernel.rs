//! Gibbs kernel `K = exp(−λ·cost)` and its action on vectors, in the scaling
//! domain (`K v`) and the log domain (`log K e^g`).
//!
//! For the squared-Euclidean cost the kernel factors as `K₁ ⊗ K₁` with an
//! `m × m` one-axis kernel, so an application costs `O(m³)` instead of `O(m⁴)`.

use super::cost::GroundCost;

/// Terms this far below the running maximum contribute less than 1 ulp.
const LSE_CUTOFF: f64 = -40.0;

#[derive(Debug, Clone)]
pub(crate) enum GibbsKernel {
    Separable {
        m: usize,
        log_axis: Vec<f64>,
        axis: Vec<f64>,
    },
    Dense {
        n: usize,
        log_k: Vec<f64>,
        k: Vec<f64>,
    },
}

#[inline]
fn lse_dot(log_row: &[f64], g: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (a, b) in log_row.iter().zip(g) {
        let t = a + b;
        if t > max {
            max = t;
        }
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for (a, b) in log_row.iter().zip(g) {
        let d = a + b - max;
        if d > LSE_CUTOFF {
            sum += d.exp();
        }
    }
    max + sum.ln()
}

impl GibbsKernel {
    pub(crate) fn new(cost: &GroundCost, lambda: f64, force_dense: bool) -> Self {
        match cost.axis_factor() {
            Some(axis) if !force_dense => {
                let log_axis: Vec<f64> = axis.iter().map(|c| -lambda * c).collect();
                let axis = log_axis.iter().map(|v| v.exp()).collect();
                GibbsKernel::Separable {
                    m: cost.m(),
                    log_axis,
                    axis,
                }
            }
            _ => {
                let n = cost.n_cells();
                let mut log_k = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        log_k.push(-lambda * cost.entry(i, j));
                    }
                }
                let k = log_k.iter().map(|v| v.exp()).collect();
                GibbsKernel::Dense { n, log_k, k }
            }
        }
    }

    pub(crate) fn n_cells(&self) -> usize {
        match self {
            GibbsKernel::Separable { m, .. } => m * m,
            GibbsKernel::Dense { n, .. } => *n,
        }
    }

    /// `out = K v` (the kernel is symmetric, so this is also `Kᵀ v`).
    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        match self {
            GibbsKernel::Separable { m, axis, .. } => {
                let m = *m;
                scratch.resize(m * m, 0.0);
                // scratch[q][p'] = Σ_{q'} K₁[q][q'] v[p'][q']
                for pp in 0..m {
                    let vrow = &v[pp * m..(pp + 1) * m];
                    for q in 0..m {
                        let krow = &axis[q * m..(q + 1) * m];
                        scratch[q * m + pp] = krow.iter().zip(vrow).map(|(a, b)| a * b).sum();
                    }
                }
                for p in 0..m {
                    let krow = &axis[p * m..(p + 1) * m];
                    for q in 0..m {
                        let srow = &scratch[q * m..(q + 1) * m];
                        out[p * m + q] = krow.iter().zip(srow).map(|(a, b)| a * b).sum();
                    }
                }
            }
            GibbsKernel::Dense { n, k, .. } => {
                for (i, o) in out.iter_mut().enumerate().take(*n) {
                    *o = k[i * n..(i + 1) * n]
                        .iter()
                        .zip(v)
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
        }
    }

    /// `out_i = log Σ_j K_ij e^{g_j}`, evaluated stably.
    pub(crate) fn log_apply(&self, g: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        match self {
            GibbsKernel::Separable { m, log_axis, .. } => {
                let m = *m;
                scratch.resize(m * m, 0.0);
                for pp in 0..m {
                    let grow = &g[pp * m..(pp + 1) * m];
                    for q in 0..m {
                        scratch[q * m + pp] = lse_dot(&log_axis[q * m..(q + 1) * m], grow);
                    }
                }
                for p in 0..m {
                    let lrow = &log_axis[p * m..(p + 1) * m];
                    for q in 0..m {
                        out[p * m + q] = lse_dot(lrow, &scratch[q * m..(q + 1) * m]);
                    }
                }
            }
            GibbsKernel::Dense { n, log_k, .. } => {
                for (i, o) in out.iter_mut().enumerate().take(*n) {
                    *o = lse_dot(&log_k[i * n..(i + 1) * n], g);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_matches_dense_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [2, 5, 9] {
            let cost = GroundCost::squared_euclidean(m);
            for lambda in [0.5, 3.0 * (m * m) as f64] {
                let sep = GibbsKernel::new(&cost, lambda, false);
                let dense = GibbsKernel::new(&cost, lambda, true);
                assert!(matches!(sep, GibbsKernel::Separable { .. }));
                assert!(matches!(dense, GibbsKernel::Dense { .. }));
                let n = m * m;
                let mut scratch = Vec::new();
                for _ in 0..10 {
                    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
                    sep.apply(&v, &mut a, &mut scratch);
                    dense.apply(&v, &mut b, &mut scratch);
                    for (x, y) in a.iter().zip(&b) {
                        assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0), "{x} vs {y}");
                    }
                    let g: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
                    sep.log_apply(&g, &mut a, &mut scratch);
                    dense.log_apply(&g, &mut b, &mut scratch);
                    for (x, y) in a.iter().zip(&b) {
                        assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0), "{x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn log_apply_agrees_with_scaling_apply() {
        let cost = GroundCost::squared_euclidean(6);
        let k = GibbsKernel::new(&cost, 10.0, false);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..36).map(|_| rng.random::<f64>() + 0.01).collect();
        let g: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        let mut scratch = Vec::new();
        let (mut a, mut b) = (vec![0.0; 36], vec![0.0; 36]);
        k.apply(&v, &mut a, &mut scratch);
        k.log_apply(&g, &mut b, &mut scratch);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.ln() - y).abs() < 1e-12);
        }
    }

    #[test]
    fn log_apply_handles_empty_support() {
        let cost = GroundCost::squared_euclidean(3);
        let k = GibbsKernel::new(&cost, 1.0, false);
        let g = vec![f64::NEG_INFINITY; 9];
        let mut out = vec![0.0; 9];
        k.log_apply(&g, &mut out, &mut Vec::new());
        assert!(out.iter().all(|v| *v == f64::NEG_INFINITY));
        assert_eq!(k.n_cells(), 9);
    }
}
