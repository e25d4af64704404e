//! k-means over copula histograms: transport distances for assignment,
//! Wasserstein barycenters for centroids.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::copula::{ensure_same_resolution, CopulaHistogram};
use crate::error::{Error, Result};
use crate::io::{render_table_csv, write_atomic, write_cop, write_heatmap};
use crate::synth::substream;
use crate::transport::{transport_distance, wasserstein_barycenter, GroundCost, SinkhornConfig};

/// Default number of clusters.
pub const DEFAULT_K: usize = 5;
/// Default cap on assignment/update rounds.
pub const DEFAULT_MAX_ROUNDS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub k: usize,
    pub seed: u64,
    pub max_rounds: usize,
    /// Use the debiased Sinkhorn divergence instead of the raw dual value.
    pub debias: bool,
}

impl ClusterParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_rounds: DEFAULT_MAX_ROUNDS,
            debias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<CopulaHistogram>,
    /// Cluster id of each input histogram.
    pub assignment: Vec<usize>,
    /// Distance of each input to its centroid.
    pub distances: Vec<f64>,
    /// `Σ_i d(h_i, centroid(h_i))` after every assignment step.
    pub objective_trace: Vec<f64>,
    pub seed: u64,
    pub debias: bool,
}

impl ClusterModel {
    pub fn objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("a model has at least one round")
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == cluster)
            .collect()
    }
}

struct Metric<'a> {
    cost: &'a GroundCost,
    cfg: &'a SinkhornConfig,
    debias: bool,
}

impl Metric<'_> {
    fn dist(&self, h: &CopulaHistogram, centroid: &CopulaHistogram) -> Result<f64> {
        transport_distance(h, centroid, self.cost, self.cfg, self.debias)
    }

    /// Distances of every histogram to one centroid.
    fn column(&self, hists: &[CopulaHistogram], centroid: &CopulaHistogram) -> Result<Vec<f64>> {
        hists
            .par_iter()
            .enumerate()
            .map(|(i, h)| {
                self.dist(h, centroid).map_err(|e| Error::Pair {
                    i,
                    j: i,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

/// Lloyd iterations with k-means++ seeding.
///
/// A centroid update is kept only if it does not raise its cluster's cost, so
/// the entropic barycenter can never undo the descent. An empty cluster is
/// re-seeded with the histogram farthest from its centroid (taken from a
/// cluster with at least two members, lowest index on ties). Distance ties in
/// assignment go to the lowest cluster id.
pub fn cluster_copulas(
    hists: &[CopulaHistogram],
    cost: &GroundCost,
    cfg: &SinkhornConfig,
    params: &ClusterParams,
) -> Result<ClusterModel> {
    let n = hists.len();
    let k = params.k;
    if n == 0 {
        return Err(Error::InvalidData("no histograms to cluster".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must lie in [1, {n}]"
        )));
    }
    if params.max_rounds == 0 {
        return Err(Error::InvalidParameter(
            "max_rounds must be positive".into(),
        ));
    }
    for h in hists {
        ensure_same_resolution(&hists[0], h)?;
    }
    if cost.m() != hists[0].m() {
        return Err(Error::InvalidData(format!(
            "cost grid m={} does not match histogram m={}",
            cost.m(),
            hists[0].m()
        )));
    }
    cfg.validate()?;
    let metric = Metric {
        cost,
        cfg,
        debias: params.debias,
    };

    let seeds = kmeans_pp(hists, k, params.seed, &metric)?;
    let mut centroids: Vec<CopulaHistogram> = seeds.iter().map(|&i| hists[i].clone()).collect();
    // dist[c][i] = d(h_i, centroid_c)
    let mut dist: Vec<Vec<f64>> = centroids
        .iter()
        .map(|c| metric.column(hists, c))
        .collect::<Result<_>>()?;

    let mut trace = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut assignment;
    let mut round = 0;
    loop {
        assignment = assign(&dist, n);
        repair_empty(hists, &metric, &mut centroids, &mut dist, &mut assignment)?;
        trace.push((0..n).map(|i| dist[assignment[i]][i]).sum::<f64>());
        round += 1;
        if previous.as_ref() == Some(&assignment) || round >= params.max_rounds {
            break;
        }
        let updates: Vec<Option<(CopulaHistogram, Vec<f64>)>> = (0..k)
            .into_par_iter()
            .map(|c| {
                let members: Vec<CopulaHistogram> = (0..n)
                    .filter(|&i| assignment[i] == c)
                    .map(|i| hists[i].clone())
                    .collect();
                let w = vec![1.0 / members.len() as f64; members.len()];
                let bary = wasserstein_barycenter(&members, &w, cost, cfg)?;
                let column = metric.column(hists, &bary)?;
                let within = |col: &[f64]| {
                    (0..n)
                        .filter(|&i| assignment[i] == c)
                        .map(|i| col[i])
                        .sum::<f64>()
                };
                Ok((within(&column) <= within(&dist[c])).then_some((bary, column)))
            })
            .collect::<Result<_>>()?;
        for (c, update) in updates.into_iter().enumerate() {
            if let Some((bary, column)) = update {
                centroids[c] = bary;
                dist[c] = column;
            }
        }
        previous = Some(assignment);
    }
    let distances = (0..n).map(|i| dist[assignment[i]][i]).collect();
    Ok(ClusterModel {
        k,
        centroids,
        assignment,
        distances,
        objective_trace: trace,
        seed: params.seed,
        debias: params.debias,
    })
}

/// k-means++: the first seed uniformly, each next one with probability
/// proportional to the squared distance to the nearest seed so far.
fn kmeans_pp(
    hists: &[CopulaHistogram],
    k: usize,
    seed: u64,
    metric: &Metric<'_>,
) -> Result<Vec<usize>> {
    let n = hists.len();
    let mut rng = substream(seed, 0);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest = metric.column(hists, &hists[chosen[0]])?;
    while chosen.len() < k {
        let weight = |i: usize| {
            if chosen.contains(&i) {
                0.0
            } else {
                nearest[i] * nearest[i]
            }
        };
        let total: f64 = (0..n).map(weight).sum();
        let next = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for i in 0..n {
                acc += weight(i);
                if weight(i) > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            pick.unwrap_or_else(|| {
                (0..n)
                    .rev()
                    .find(|&i| weight(i) > 0.0)
                    .expect("positive total")
            })
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k ≤ n")
        };
        chosen.push(next);
        let column = metric.column(hists, &hists[next])?;
        for (a, b) in nearest.iter_mut().zip(column) {
            *a = a.min(b);
        }
    }
    Ok(chosen)
}

fn assign(dist: &[Vec<f64>], n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..dist.len() {
                if dist[c][i] < dist[best][i] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn repair_empty(
    hists: &[CopulaHistogram],
    metric: &Metric<'_>,
    centroids: &mut [CopulaHistogram],
    dist: &mut [Vec<f64>],
    assignment: &mut Vec<usize>,
) -> Result<()> {
    let n = hists.len();
    for c in 0..centroids.len() {
        let mut sizes = vec![0usize; centroids.len()];
        assignment.iter().for_each(|&a| sizes[a] += 1);
        if sizes[c] > 0 {
            continue;
        }
        let far = (0..n)
            .filter(|&i| sizes[assignment[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dist[assignment[b]][b] >= dist[assignment[i]][i] => Some(b),
                _ => Some(i),
            })
            .expect("an empty cluster implies a cluster with two or more members");
        centroids[c] = hists[far].clone();
        dist[c] = metric.column(hists, &centroids[c])?;
        *assignment = assign(dist, n);
        if !assignment.contains(&c) {
            assignment[far] = c;
        }
    }
    Ok(())
}

/// One row of [`centroid_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSummary {
    pub cluster: usize,
    pub size: usize,
    pub centroid: CopulaHistogram,
    /// Member with the smallest summed distance to the other members.
    pub medoid: usize,
}

/// Sizes, centroids and medoids of a fitted model. Medoid ties go to the
/// lower input index.
pub fn centroid_report(
    model: &ClusterModel,
    hists: &[CopulaHistogram],
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<Vec<CentroidSummary>> {
    if hists.len() != model.assignment.len() {
        return Err(Error::InvalidData(format!(
            "model covers {} histograms, got {}",
            model.assignment.len(),
            hists.len()
        )));
    }
    let metric = Metric {
        cost,
        cfg,
        debias: model.debias,
    };
    (0..model.k)
        .map(|c| {
            let members = model.members(c);
            let sums: Vec<f64> = members
                .par_iter()
                .map(|&a| {
                    members
                        .iter()
                        .map(|&b| metric.dist(&hists[a], &hists[b]))
                        .sum::<Result<f64>>()
                })
                .collect::<Result<_>>()?;
            let best = (0..members.len())
                .fold(None, |best: Option<usize>, t| match best {
                    Some(b) if sums[b] <= sums[t] => Some(b),
                    _ => Some(t),
                })
                .ok_or_else(|| Error::InvalidData(format!("cluster {c} is empty")))?;
            Ok(CentroidSummary {
                cluster: c,
                size: members.len(),
                centroid: model.centroids[c].clone(),
                medoid: members[best],
            })
        })
        .collect()
}

/// Write `centroid_<id>.cop`, `centroid_<id>.pgm`, `assignment.csv` and
/// `objective.csv` into `dir`. `labels` names the variable pair behind each
/// histogram.
pub fn write_model(model: &ClusterModel, labels: &[(String, String)], dir: &Path) -> Result<()> {
    if labels.len() != model.assignment.len() {
        return Err(Error::InvalidData(format!(
            "{} labels for {} histograms",
            labels.len(),
            model.assignment.len()
        )));
    }
    for (c, centroid) in model.centroids.iter().enumerate() {
        write_cop(centroid, &dir.join(format!("centroid_{c}.cop")))?;
        write_heatmap(centroid, &dir.join(format!("centroid_{c}.pgm")))?;
    }
    let rows = labels.iter().enumerate().map(|(i, (a, b))| {
        vec![
            a.clone(),
            b.clone(),
            model.assignment[i].to_string(),
            format!("{}", model.distances[i]),
        ]
    });
    let csv = render_table_csv(
        &["pair_i", "pair_j", "cluster", "distance_to_centroid"],
        rows,
    );
    write_atomic(&dir.join("assignment.csv"), csv.as_bytes())?;
    let rows = model
        .objective_trace
        .iter()
        .enumerate()
        .map(|(r, v)| vec![r.to_string(), format!("{v}")]);
    let csv = render_table_csv(&["round", "objective"], rows);
    write_atomic(&dir.join("objective.csv"), csv.as_bytes())
}
