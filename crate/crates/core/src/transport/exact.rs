//! Exact optimal transport between two histograms by min-cost flow.
//!
//! The transport problem on the supports of `r` and `c` is a bipartite
//! min-cost flow. It is solved with successive shortest augmenting paths,
//! using Dijkstra on reduced costs with node potentials (dense `O(V²)` per
//! search, which suits the complete bipartite graph).

use super::cost::GroundCost;
use crate::copula::{ensure_same_resolution, CopulaHistogram};
use crate::error::{Error, Result};

/// Largest combined support the oracle accepts.
pub const ORACLE_SUPPORT_LIMIT: usize = 4096;

/// Masses below this are treated as exhausted.
const FLOW_EPS: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct ExactTransport {
    pub value: f64,
    /// Nonzero plan entries `(source cell, target cell, mass)`.
    pub plan: Vec<(usize, usize, f64)>,
}

/// Exact optimum of `min_{P ∈ U(r,c)} ⟨P, cost⟩`.
pub fn exact_ot(
    r: &CopulaHistogram,
    c: &CopulaHistogram,
    cost: &GroundCost,
) -> Result<ExactTransport> {
    ensure_same_resolution(r, c)?;
    if cost.m() != r.m() {
        return Err(Error::InvalidData(format!(
            "cost grid m={} does not match histogram m={}",
            cost.m(),
            r.m()
        )));
    }
    exact_on_slices(r.as_slice(), c.as_slice(), |i, j| cost.entry(i, j))
}

pub(crate) fn exact_on_slices(
    r: &[f64],
    c: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> Result<ExactTransport> {
    let sources: Vec<usize> = (0..r.len()).filter(|&i| r[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..c.len()).filter(|&j| c[j] > 0.0).collect();
    let support = sources.len() + sinks.len();
    if support > ORACLE_SUPPORT_LIMIT {
        return Err(Error::OracleTooLarge {
            support,
            limit: ORACLE_SUPPORT_LIMIT,
        });
    }
    let ns = sources.len();
    let nt = sinks.len();
    let mut supply: Vec<f64> = sources.iter().map(|&i| r[i]).collect();
    let mut demand: Vec<f64> = sinks.iter().map(|&j| c[j]).collect();
    // both sides are normalized; force exact balance so rounding cannot strand mass
    let (ts, td): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    demand.iter_mut().for_each(|d| *d *= ts / td);

    let cmat: Vec<f64> = sources
        .iter()
        .flat_map(|&i| sinks.iter().map(move |&j| (i, j)))
        .map(|(i, j)| cost(i, j))
        .collect();
    let mut flow = vec![0.0; ns * nt];
    // node order: sources 0..ns, sinks ns..ns+nt
    let nv = ns + nt;
    let mut pot = vec![0.0; nv];
    let mut dist = vec![0.0; nv];
    let mut done = vec![false; nv];
    let mut pred = vec![usize::MAX; nv];

    loop {
        let remaining: f64 = supply.iter().sum();
        if remaining <= FLOW_EPS * ns as f64 {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        done.iter_mut().for_each(|d| *d = false);
        pred.iter_mut().for_each(|p| *p = usize::MAX);
        for s in 0..ns {
            if supply[s] > FLOW_EPS {
                dist[s] = 0.0;
            }
        }
        let mut target = None;
        loop {
            let mut best = f64::INFINITY;
            let mut u = usize::MAX;
            for v in 0..nv {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= ns {
                let t = u - ns;
                if demand[t] > FLOW_EPS {
                    target = Some(u);
                    break;
                }
                // backward residual arcs sink → source where flow is positive
                for s in 0..ns {
                    if !done[s] && flow[s * nt + t] > FLOW_EPS {
                        let rc = (-cmat[s * nt + t] + pot[u] - pot[s]).max(0.0);
                        if dist[u] + rc < dist[s] {
                            dist[s] = dist[u] + rc;
                            pred[s] = u;
                        }
                    }
                }
            } else {
                let s = u;
                for t in 0..nt {
                    let v = ns + t;
                    if !done[v] {
                        let rc = (cmat[s * nt + t] + pot[s] - pot[v]).max(0.0);
                        if dist[u] + rc < dist[v] {
                            dist[v] = dist[u] + rc;
                            pred[v] = u;
                        }
                    }
                }
            }
        }
        let Some(target) = target else {
            return Err(Error::InvalidData("transport problem is infeasible".into()));
        };
        let dt = dist[target];
        for v in 0..nv {
            pot[v] += dist[v].min(dt);
        }
        // walk back to the originating source and find the bottleneck
        let mut bottleneck = demand[target - ns];
        let mut v = target;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u >= ns {
                // v is a source reached through a backward arc from sink u
                bottleneck = bottleneck.min(flow[v * nt + (u - ns)]);
            }
            v = u;
        }
        let origin = v;
        bottleneck = bottleneck.min(supply[origin]);
        let mut v = target;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u < ns {
                flow[u * nt + (v - ns)] += bottleneck;
            } else {
                let cell = v * nt + (u - ns);
                flow[cell] = (flow[cell] - bottleneck).max(0.0);
            }
            v = u;
        }
        supply[origin] -= bottleneck;
        demand[target - ns] -= bottleneck;
        if supply[origin] < FLOW_EPS {
            supply[origin] = 0.0;
        }
        if demand[target - ns] < FLOW_EPS {
            demand[target - ns] = 0.0;
        }
    }

    let mut plan = Vec::new();
    let mut value = 0.0;
    for s in 0..ns {
        for t in 0..nt {
            let f = flow[s * nt + t];
            if f > 0.0 {
                value += f * cmat[s * nt + t];
                plan.push((sources[s], sinks[t], f));
            }
        }
    }
    Ok(ExactTransport { value, plan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{reference_copula, TargetKind, TargetSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hist(mass: Array2<f64>) -> CopulaHistogram {
        CopulaHistogram::normalized(mass).unwrap()
    }

    #[test]
    fn identical_histograms_cost_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = 6;
        let r = hist(Array2::from_shape_fn((m, m), |_| rng.random::<f64>()));
        let out = exact_ot(&r, &r, &GroundCost::squared_euclidean(m)).unwrap();
        assert_abs_diff_eq!(out.value, 0.0, epsilon = 1e-15);
        for &(i, j, f) in &out.plan {
            assert_eq!(i, j);
            assert_abs_diff_eq!(f, r.as_slice()[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn frechet_bounds_two_by_two_by_vertex_enumeration() {
        let up = reference_copula(&TargetSpec::new(TargetKind::Upper, 2)).unwrap();
        let lo = reference_copula(&TargetSpec::new(TargetKind::Lower, 2)).unwrap();
        let cost = GroundCost::squared_euclidean(2);
        // sources: cells 0 and 3 with ½ each; sinks: cells 1 and 2 with ½ each.
        // U(r,c) is {[[t, ½−t], [½−t, t]] : t ∈ [0, ½]}; the cost is linear in t,
        // so the optimum sits at a vertex t ∈ {0, ½}.
        let oracle = [0.0, 0.5]
            .iter()
            .map(|&t| {
                t * cost.entry(0, 1)
                    + (0.5 - t) * cost.entry(0, 2)
                    + (0.5 - t) * cost.entry(3, 1)
                    + t * cost.entry(3, 2)
            })
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(oracle, 0.25, epsilon = 1e-15);
        let out = exact_ot(&up, &lo, &cost).unwrap();
        assert_abs_diff_eq!(out.value, oracle, epsilon = 1e-12);
    }

    /// W₂² between two 1-D discrete measures by matching quantile functions.
    fn quantile_w2(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
        // a, b: (position, mass) sorted by position
        let (mut i, mut j) = (0, 0);
        let (mut ra, mut rb) = (a[0].1, b[0].1);
        let mut total = 0.0;
        while i < a.len() && j < b.len() {
            let step = ra.min(rb);
            total += step * (a[i].0 - b[j].0).powi(2);
            ra -= step;
            rb -= step;
            if ra <= 1e-15 {
                i += 1;
                if i < a.len() {
                    ra = a[i].1;
                }
            }
            if rb <= 1e-15 {
                j += 1;
                if j < b.len() {
                    rb = b[j].1;
                }
            }
        }
        total
    }

    #[test]
    fn one_row_case_matches_quantile_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = 9;
        let cost = GroundCost::squared_euclidean(m);
        for _ in 0..10 {
            let row_a: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let row_b: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.random::<f64>() < 0.4 {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            let (sa, sb): (f64, f64) = (row_a.iter().sum(), row_b.iter().sum());
            let mut ma = Array2::zeros((m, m));
            let mut mb = Array2::zeros((m, m));
            for q in 0..m {
                ma[[3, q]] = row_a[q] / sa;
                mb[[3, q]] = row_b[q] / sb;
            }
            let a = CopulaHistogram::from_mass(ma).unwrap();
            let b = CopulaHistogram::from_mass(mb).unwrap();
            let pos = |q: usize| (q as f64 + 0.5) / m as f64;
            let qa: Vec<(f64, f64)> = (0..m)
                .filter(|&q| row_a[q] > 0.0)
                .map(|q| (pos(q), row_a[q] / sa))
                .collect();
            let qb: Vec<(f64, f64)> = (0..m)
                .filter(|&q| row_b[q] > 0.0)
                .map(|q| (pos(q), row_b[q] / sb))
                .collect();
            let oracle = quantile_w2(&qa, &qb);
            let out = exact_ot(&a, &b, &cost).unwrap();
            assert_abs_diff_eq!(out.value, oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn plan_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 7;
        let r = hist(Array2::from_shape_fn((m, m), |_| rng.random::<f64>()));
        let c = hist(Array2::from_shape_fn((m, m), |_| {
            rng.random::<f64>().powi(4)
        }));
        let out = exact_ot(&r, &c, &GroundCost::euclidean(m)).unwrap();
        let mut rows = vec![0.0; m * m];
        let mut cols = vec![0.0; m * m];
        for &(i, j, f) in &out.plan {
            assert!(f >= 0.0);
            rows[i] += f;
            cols[j] += f;
        }
        for i in 0..m * m {
            assert_abs_diff_eq!(rows[i], r.as_slice()[i], epsilon = 1e-12);
            assert_abs_diff_eq!(cols[i], c.as_slice()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn small_problems_match_brute_force_lp_over_permutations() {
        // uniform histograms on k cells each: an optimal plan is a permutation (Birkhoff)
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = 4;
        let cost = GroundCost::squared_euclidean(m);
        for _ in 0..10 {
            let k = 5;
            let pick = |rng: &mut ChaCha8Rng| {
                let mut cells: Vec<usize> = (0..m * m).collect();
                for i in 0..k {
                    let j = rng.random_range(i..m * m);
                    cells.swap(i, j);
                }
                cells.truncate(k);
                cells
            };
            let sa = pick(&mut rng);
            let sb = pick(&mut rng);
            let mut ma = Array2::zeros((m, m));
            let mut mb = Array2::zeros((m, m));
            for (&a, &b) in sa.iter().zip(&sb) {
                ma[[a / m, a % m]] = 1.0 / k as f64;
                mb[[b / m, b % m]] = 1.0 / k as f64;
            }
            let mut best = f64::INFINITY;
            let mut perm: Vec<usize> = (0..k).collect();
            permute(&mut perm, 0, &mut |p| {
                let v: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| cost.entry(sa[i], sb[j]))
                    .sum::<f64>()
                    / k as f64;
                best = best.min(v);
            });
            let out = exact_ot(&hist(ma), &hist(mb), &cost).unwrap();
            assert_abs_diff_eq!(out.value, best, epsilon = 1e-12);
        }
    }

    fn permute(p: &mut Vec<usize>, at: usize, visit: &mut impl FnMut(&[usize])) {
        if at == p.len() {
            visit(p);
            return;
        }
        for i in at..p.len() {
            p.swap(at, i);
            permute(p, at + 1, visit);
            p.swap(at, i);
        }
    }

    #[test]
    fn oracle_size_limit() {
        let m = 46; // 2 * 46² = 4232 > 4096
        let pi = reference_copula(&TargetSpec::new(TargetKind::Independence, m)).unwrap();
        let err = exact_ot(&pi, &pi, &GroundCost::squared_euclidean(m)).unwrap_err();
        assert!(matches!(err, Error::OracleTooLarge { .. }));
    }
}
