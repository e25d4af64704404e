//! Permutation-calibrated power of dependence coefficients on the noisy
//! functional patterns of [`crate::synth`].

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::copula::{
    empirical_copula_from_samples, reference_copula, CopulaHistogram, TargetKind, TargetSpec,
};
use crate::dependence::{
    distance_correlation, pearson, rdc, spearman, tfdc, TfdcSpec, RDC_FEATURES, RDC_SCALE,
};
use crate::error::{Error, Result};
use crate::io::render_table_csv;
use crate::synth::{gen_power_pattern_with, substream, Pattern};
use crate::transport::{GroundCost, SinkhornConfig};

/// Rejection level of every test.
pub const LEVEL: f64 = 0.05;
pub const DEFAULT_N_SIMS: usize = 100;
pub const DEFAULT_SAMPLE_SIZE: usize = 200;
pub const MIN_N_SIMS: usize = 10;
/// Sample size behind each noise-free pattern target.
pub const TARGET_SAMPLES: usize = 100_000;
/// Grid used by TFDC in the power harness.
pub const POWER_TFDC_RESOLUTION: usize = 10;

/// A dependence statistic; larger means more dependent.
#[derive(Debug, Clone)]
pub enum Coefficient {
    /// `|Pearson r|`
    Pearson,
    /// `|Spearman ρ|`
    Spearman,
    DistanceCorrelation,
    Rdc,
    Tfdc(Box<TfdcSpec>),
}

impl Coefficient {
    pub fn name(&self) -> &'static str {
        match self {
            Coefficient::Pearson => "pearson",
            Coefficient::Spearman => "spearman",
            Coefficient::DistanceCorrelation => "dcor",
            Coefficient::Rdc => "rdc",
            Coefficient::Tfdc(_) => "tfdc",
        }
    }

    /// Evaluate on one sample; `aux_seed` feeds randomized coefficients.
    pub fn statistic(&self, x: &[f64], y: &[f64], aux_seed: u64) -> Result<f64> {
        match self {
            Coefficient::Pearson => pearson(x, y).map(f64::abs),
            Coefficient::Spearman => spearman(x, y).map(f64::abs),
            Coefficient::DistanceCorrelation => distance_correlation(x, y),
            Coefficient::Rdc => rdc(x, y, RDC_FEATURES, RDC_SCALE, aux_seed),
            Coefficient::Tfdc(spec) => tfdc(&empirical_copula_from_samples(x, y, spec.m())?, spec),
        }
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One cell of a power curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    pub pattern: Pattern,
    pub noise: f64,
    pub coefficient: String,
    pub power: f64,
    pub n_sims: usize,
    pub sample_size: usize,
    /// 95th percentile of the null statistics
    pub threshold: f64,
    pub seed: u64,
    /// replicates on which the coefficient returned an error
    pub failures: usize,
}

/// Whether the "alternative" samples keep the pattern or are permuted too.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Alternative {
    Pattern,
    Null,
}

/// Power of `coefficient` against `pattern` at `noise`.
///
/// Replicate `r` draws its null sample from substream `2r` (a pattern sample
/// with `y` permuted) and its alternative from substream `2r + 1`, so the
/// datasets depend only on `seed` and are shared by every coefficient.
/// A coefficient error counts as non-rejection; a failed null replicate is
/// left out of the threshold.
pub fn estimate_power(
    pattern: Pattern,
    noise: f64,
    coefficient: &Coefficient,
    n_sims: usize,
    sample_size: usize,
    seed: u64,
) -> Result<PowerResult> {
    run(
        pattern,
        noise,
        coefficient,
        n_sims,
        sample_size,
        seed,
        Alternative::Pattern,
    )
}

/// Size of the test: as [`estimate_power`] with the alternative samples
/// permuted as well, so the returned `power` estimates the false rejection
/// rate.
pub fn null_rejection_rate(
    pattern: Pattern,
    noise: f64,
    coefficient: &Coefficient,
    n_sims: usize,
    sample_size: usize,
    seed: u64,
) -> Result<PowerResult> {
    run(
        pattern,
        noise,
        coefficient,
        n_sims,
        sample_size,
        seed,
        Alternative::Null,
    )
}

fn run(
    pattern: Pattern,
    noise: f64,
    coefficient: &Coefficient,
    n_sims: usize,
    sample_size: usize,
    seed: u64,
    alternative: Alternative,
) -> Result<PowerResult> {
    if n_sims < MIN_N_SIMS {
        return Err(Error::InvalidParameter(format!(
            "n_sims = {n_sims}, need at least {MIN_N_SIMS}"
        )));
    }
    if sample_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "sample size {sample_size}, need at least 2"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level {noise}")));
    }
    let stats: Vec<(Option<f64>, Option<f64>)> = (0..n_sims as u64)
        .into_par_iter()
        .map(|r| {
            let null = replicate(pattern, noise, sample_size, seed, 2 * r, true, coefficient);
            let permute = alternative == Alternative::Null;
            let alt = replicate(
                pattern,
                noise,
                sample_size,
                seed,
                2 * r + 1,
                permute,
                coefficient,
            );
            (null, alt)
        })
        .collect();
    let mut null: Vec<f64> = stats.iter().filter_map(|s| s.0).collect();
    if null.is_empty() {
        return Err(Error::InvalidData(format!(
            "{coefficient} failed on every null replicate"
        )));
    }
    null.sort_by(f64::total_cmp);
    let threshold = null[((1.0 - LEVEL) * null.len() as f64).ceil() as usize - 1];
    let rejections = stats
        .iter()
        .filter(|s| s.1.is_some_and(|v| v > threshold))
        .count();
    let failures = stats
        .iter()
        .map(|s| s.0.is_none() as usize + s.1.is_none() as usize)
        .sum();
    Ok(PowerResult {
        pattern,
        noise,
        coefficient: coefficient.name().to_string(),
        power: rejections as f64 / n_sims as f64,
        n_sims,
        sample_size,
        threshold,
        seed,
        failures,
    })
}

fn replicate(
    pattern: Pattern,
    noise: f64,
    t: usize,
    seed: u64,
    stream: u64,
    permute: bool,
    coefficient: &Coefficient,
) -> Option<f64> {
    let mut rng = substream(seed, stream);
    let (x, mut y) = gen_power_pattern_with(pattern, noise, t, &mut rng);
    if permute {
        y.shuffle(&mut rng);
    }
    let aux: u64 = rng.random();
    coefficient
        .statistic(&x, &y, aux)
        .ok()
        .filter(|v| v.is_finite())
}

/// TFDC spec for the power study: the eight noise-free pattern copulas as
/// targets, independence as the only forget copula.
pub fn tfdc_power_targets(m: usize, t_ref: usize, seed: u64) -> Result<TfdcSpec> {
    let targets = pattern_copulas(m, t_ref, seed)?;
    let pi = reference_copula(&TargetSpec::new(TargetKind::Independence, m))?;
    TfdcSpec::new(
        targets,
        vec![pi],
        GroundCost::squared_euclidean(m),
        SinkhornConfig::for_resolution(m),
        false,
    )
}

/// Noise-free copula of every pattern, in [`Pattern::ALL`] order.
pub fn pattern_copulas(m: usize, t_ref: usize, seed: u64) -> Result<Vec<CopulaHistogram>> {
    Pattern::ALL
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (x, y) = gen_power_pattern_with(p, 0.0, t_ref, &mut substream(seed, i as u64));
            empirical_copula_from_samples(&x, &y, m)
        })
        .collect()
}

/// Long-form CSV: `pattern,noise,coefficient,power,n_sims,sample_size,seed`.
pub fn render_power_csv(results: &[PowerResult]) -> String {
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.pattern.name().to_string(),
                r.noise.to_string(),
                r.coefficient.clone(),
                r.power.to_string(),
                r.n_sims.to_string(),
                r.sample_size.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    render_table_csv(
        &[
            "pattern",
            "noise",
            "coefficient",
            "power",
            "n_sims",
            "sample_size",
            "seed",
        ],
        rows,
    )
}
