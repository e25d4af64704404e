//! Seeded generators for the synthetic dependence experiments.
//!
//! Each dataset draws from its own ChaCha8 stream selected by `(seed, index)`,
//! so datasets generated in parallel never depend on scheduling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// The independent random stream number `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A bivariate sample `(x, y)`.
pub type Pair = (Vec<f64>, Vec<f64>);

/// The eight noise-free associations of the power benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pattern {
    Linear,
    Quadratic,
    Cubic,
    Sin4Pi,
    Sin16Pi,
    FourthRoot,
    Circle,
    Step,
}

impl Pattern {
    pub const ALL: [Pattern; 8] = [
        Pattern::Linear,
        Pattern::Quadratic,
        Pattern::Cubic,
        Pattern::Sin4Pi,
        Pattern::Sin16Pi,
        Pattern::FourthRoot,
        Pattern::Circle,
        Pattern::Step,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Linear => "linear",
            Pattern::Quadratic => "quadratic",
            Pattern::Cubic => "cubic",
            Pattern::Sin4Pi => "sin4pi",
            Pattern::Sin16Pi => "sin16pi",
            Pattern::FourthRoot => "fourth-root",
            Pattern::Circle => "circle",
            Pattern::Step => "step",
        }
    }

    /// Noise-free `y` at `x`; `upper` picks the branch of the circle.
    pub fn curve(self, x: f64, upper: bool) -> f64 {
        match self {
            Pattern::Linear => x,
            Pattern::Quadratic => 4.0 * (x - 0.5).powi(2),
            Pattern::Cubic => {
                let t = x - 1.0 / 3.0;
                128.0 * t.powi(3) - 48.0 * t.powi(2) - 12.0 * t
            }
            Pattern::Sin4Pi => (4.0 * PI * x).sin(),
            Pattern::Sin16Pi => (16.0 * PI * x).sin(),
            Pattern::FourthRoot => x.powf(0.25),
            Pattern::Circle => {
                let h = (1.0 - (2.0 * x - 1.0).powi(2)).max(0.0).sqrt();
                if upper {
                    h
                } else {
                    -h
                }
            }
            Pattern::Step => {
                if x > 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Range of the noise-free `y` over `x ∈ [0, 1]`, the unit of the noise.
    pub fn y_range(self) -> f64 {
        match self {
            Pattern::Linear | Pattern::Quadratic | Pattern::FourthRoot | Pattern::Step => 1.0,
            Pattern::Sin4Pi | Pattern::Sin16Pi | Pattern::Circle => 2.0,
            Pattern::Cubic => {
                // extremes sit at the endpoints: f(−1/3) and f(2/3)
                self.curve(1.0, true) - self.curve(0.0, true)
            }
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pattern::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown pattern {s:?}")))
    }
}

/// Which synthetic experiment to draw from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// Shared signal below `a` for `X` and below `a + 0.25` for `Y`, noise above.
    Discontinuity {
        a: f64,
    },
    /// `Y = (X − ½ + offset)²`.
    NoisyParabola {
        offset: f64,
    },
    PowerPattern {
        pattern: Pattern,
        noise: f64,
    },
    GaussianPair {
        rho: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub t: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn generate(&self) -> Result<Pair> {
        match self.scenario {
            Scenario::Discontinuity { a } => gen_discontinuity(a, self.t, self.seed),
            Scenario::NoisyParabola { offset } => gen_noisy_parabola(offset, self.t, self.seed),
            Scenario::PowerPattern { pattern, noise } => {
                gen_power_pattern(pattern, noise, self.t, self.seed)
            }
            Scenario::GaussianPair { rho } => gen_gaussian_pair(rho, self.t, self.seed),
        }
    }
}

fn check_len(t: usize) -> Result<()> {
    if t < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples, got {t}"
        )));
    }
    Ok(())
}

/// `X = Z·1{Z<a} + ε_X·1{Z≥a}`, `Y = Z·1{Z<a+¼} + ε_Y·1{Z≥a+¼}` with
/// `Z, ε_X, ε_Y` independent uniform.
pub fn gen_discontinuity(a: f64, t: usize, seed: u64) -> Result<Pair> {
    check_len(t)?;
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidParameter(format!("a = {a} outside [0, 1]")));
    }
    let mut rng = substream(seed, 0);
    let (mut x, mut y) = (Vec::with_capacity(t), Vec::with_capacity(t));
    for _ in 0..t {
        let z: f64 = rng.random();
        let ex: f64 = rng.random();
        let ey: f64 = rng.random();
        x.push(if z < a { z } else { ex });
        y.push(if z < a + 0.25 { z } else { ey });
    }
    Ok((x, y))
}

/// Uniform `X` and `Y = (X − ½ + offset)²`: a parabola whose vertex is moved
/// by a constant offset for the whole dataset.
pub fn gen_noisy_parabola(offset: f64, t: usize, seed: u64) -> Result<Pair> {
    check_len(t)?;
    if !offset.is_finite() {
        return Err(Error::InvalidParameter(format!("offset {offset}")));
    }
    let mut rng = substream(seed, 0);
    let x: Vec<f64> = (0..t).map(|_| rng.random()).collect();
    let y = x.iter().map(|&v| (v - 0.5 + offset).powi(2)).collect();
    Ok((x, y))
}

/// Uniform `X`, `Y = f(X) + noise · range(f) · N(0, 1)`.
pub fn gen_power_pattern(pattern: Pattern, noise: f64, t: usize, seed: u64) -> Result<Pair> {
    check_len(t)?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level {noise}")));
    }
    Ok(gen_power_pattern_with(
        pattern,
        noise,
        t,
        &mut substream(seed, 0),
    ))
}

pub(crate) fn gen_power_pattern_with(
    pattern: Pattern,
    noise: f64,
    t: usize,
    rng: &mut impl Rng,
) -> Pair {
    let scale = noise * pattern.y_range();
    let (mut x, mut y) = (Vec::with_capacity(t), Vec::with_capacity(t));
    for _ in 0..t {
        let xi: f64 = rng.random();
        let upper: bool = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        x.push(xi);
        y.push(pattern.curve(xi, upper) + scale * z);
    }
    (x, y)
}

/// Standard bivariate normal with correlation `rho`.
pub fn gen_gaussian_pair(rho: f64, t: usize, seed: u64) -> Result<Pair> {
    check_len(t)?;
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "rho = {rho} outside [-1, 1]"
        )));
    }
    let mut rng = substream(seed, 0);
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let (mut x, mut y) = (Vec::with_capacity(t), Vec::with_capacity(t));
    for _ in 0..t {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        x.push(a);
        y.push(rho * a + s * b);
    }
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{empirical_copula_from_samples, reference_copula, TargetKind, TargetSpec};

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let draw = |seed, index| {
            let mut r = substream(seed, index);
            (0..4).map(|_| r.random::<u64>()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        assert_ne!(draw(7, 3), draw(7, 4));
        assert_ne!(draw(7, 3), draw(8, 3));
    }

    #[test]
    fn full_discontinuity_is_the_diagonal() {
        let (x, y) = gen_discontinuity(1.0, 1000, 3).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn zero_discontinuity_makes_x_noise() {
        let (x, y) = gen_discontinuity(0.0, 20_000, 4).unwrap();
        assert!(x.iter().zip(&y).filter(|(a, b)| a == b).count() == 0);
        let r = crate::dependence::pearson(&x, &y).unwrap();
        assert!(r.abs() < 3.0 / (20_000f64).sqrt(), "{r}");
    }

    #[test]
    fn discontinuity_tie_fraction_matches_a() {
        let t = 5000;
        for &a in &[0.2, 0.5, 0.75] {
            let (x, y) = gen_discontinuity(a, t, 11).unwrap();
            let frac = x.iter().zip(&y).filter(|(p, q)| p == q).count() as f64 / t as f64;
            let sd = (a * (1.0 - a) / t as f64).sqrt();
            assert!((frac - a).abs() <= 3.0 * sd, "a={a}: {frac}");
        }
    }

    fn near_diagonal(c: &crate::copula::CopulaHistogram) -> f64 {
        c.mass()
            .indexed_iter()
            .filter(|((p, q), _)| p.abs_diff(*q) <= 1)
            .map(|(_, v)| v)
            .sum()
    }

    #[test]
    fn half_discontinuity_copula_matches_analytic_margins() {
        // oracle: a large independent sample pushed through the exact margins
        // F_X(x) = min(x, a) + (1 − a)x and F_Y(y) = min(y, b) + (1 − b)y
        let (a, b, m) = (0.5, 0.75, 20);
        let (x, y) = gen_discontinuity(a, 400_000, 77).unwrap();
        let mut grid = ndarray::Array2::<f64>::zeros((m, m));
        for (xi, yi) in x.iter().zip(&y) {
            let u = xi.min(a) + (1.0 - a) * xi;
            let v = yi.min(b) + (1.0 - b) * yi;
            let cell = |w: f64| ((w * m as f64).ceil() as usize).clamp(1, m) - 1;
            grid[[cell(u), cell(v)]] += 1.0;
        }
        let oracle = near_diagonal(&crate::copula::CopulaHistogram::normalized(grid).unwrap());

        // one dataset fluctuates by ~0.02 (rank jitter moves whole stretches
        // of the diagonal branch across a cell edge), so average 20 of them
        let got = (0..20)
            .map(|s| {
                let (x, y) = gen_discontinuity(a, 5000, s).unwrap();
                near_diagonal(&empirical_copula_from_samples(&x, &y, m).unwrap())
            })
            .sum::<f64>()
            / 20.0;
        assert!((got - oracle).abs() <= 0.015, "{got} vs {oracle}");
    }

    #[test]
    fn parabola_keeps_x_and_centers_vertex() {
        let (x0, y0) = gen_noisy_parabola(0.0, 500, 9).unwrap();
        let (x1, _) = gen_noisy_parabola(0.1, 500, 9).unwrap();
        assert_eq!(x0, x1);
        for (a, b) in x0.iter().zip(&y0) {
            assert_eq!(*b, (a - 0.5) * (a - 0.5));
        }
        // the two arms carry opposite rank correlation
        let left: Vec<usize> = (0..500).filter(|&i| x0[i] < 0.5).collect();
        let lx: Vec<f64> = left.iter().map(|&i| x0[i]).collect();
        let ly: Vec<f64> = left.iter().map(|&i| y0[i]).collect();
        assert!((crate::dependence::spearman(&lx, &ly).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pattern_names_round_trip() {
        for p in Pattern::ALL {
            assert_eq!(p.name().parse::<Pattern>().unwrap(), p);
        }
        assert!(matches!(
            "zigzag".parse::<Pattern>(),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn pattern_ranges_cover_a_fine_grid() {
        for p in Pattern::ALL {
            let ys: Vec<f64> = (0..=20_000)
                .flat_map(|i| {
                    let x = i as f64 / 20_000.0;
                    [p.curve(x, true), p.curve(x, false)]
                })
                .collect();
            let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(
                (hi - lo - p.y_range()).abs() < 1e-6,
                "{p}: {} vs {}",
                hi - lo,
                p.y_range()
            );
        }
    }

    #[test]
    fn noise_free_linear_is_monotone() {
        let (x, y) = gen_power_pattern(Pattern::Linear, 0.0, 300, 1).unwrap();
        assert_eq!(crate::dependence::spearman(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn noise_free_circle_is_nonlinear() {
        let (x, y) = gen_power_pattern(Pattern::Circle, 0.0, 500, 2).unwrap();
        use crate::dependence::{distance_correlation, pearson};
        use rand::seq::SliceRandom;
        assert!(pearson(&x, &y).unwrap().abs() < 0.15);
        let dcor = distance_correlation(&x, &y).unwrap();
        let mut shuffled = y.clone();
        shuffled.shuffle(&mut substream(2, 1));
        let null = distance_correlation(&x, &shuffled).unwrap();
        assert!(dcor > 0.15 && dcor > 2.0 * null, "{dcor} vs {null}");
    }

    #[test]
    fn patterns_are_deterministic() {
        for p in Pattern::ALL {
            assert_eq!(
                gen_power_pattern(p, 0.0, 100, 8).unwrap(),
                gen_power_pattern(p, 0.0, 100, 8).unwrap()
            );
            assert_eq!(
                gen_power_pattern(p, 1.5, 100, 8).unwrap(),
                gen_power_pattern(p, 1.5, 100, 8).unwrap()
            );
        }
        assert!(gen_power_pattern(Pattern::Linear, -0.1, 10, 1).is_err());
    }

    #[test]
    fn independent_gaussian_pair_is_uncorrelated() {
        let t = 4000;
        let (x, y) = gen_gaussian_pair(0.0, t, 12).unwrap();
        let r = crate::dependence::pearson(&x, &y).unwrap();
        assert!(r.abs() <= 3.0 / (t as f64).sqrt(), "{r}");
    }

    #[test]
    fn unit_correlation_is_exact() {
        let (x, y) = gen_gaussian_pair(1.0, 100, 1).unwrap();
        assert_eq!(x, y);
        let (x, y) = gen_gaussian_pair(-1.0, 100, 1).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| *a == -*b));
        assert!(gen_gaussian_pair(1.0 + 1e-9, 100, 1).is_err());
    }

    #[test]
    fn gaussian_copula_matches_analytic_grid() {
        let (x, y) = gen_gaussian_pair(0.7, 100_000, 13).unwrap();
        let c = empirical_copula_from_samples(&x, &y, 20).unwrap();
        let g = reference_copula(&TargetSpec::new(TargetKind::Gaussian { rho: 0.7 }, 20)).unwrap();
        let tv = c.total_variation(&g).unwrap();
        assert!(tv <= 0.05, "{tv}");
    }

    #[test]
    fn short_samples_are_rejected() {
        assert!(gen_discontinuity(0.5, 1, 0).is_err());
        assert!(gen_discontinuity(1.5, 10, 0).is_err());
        let spec = ScenarioSpec {
            scenario: Scenario::NoisyParabola { offset: 0.03 },
            t: 10,
            seed: 2,
        };
        assert_eq!(
            spec.generate().unwrap(),
            gen_noisy_parabola(0.03, 10, 2).unwrap()
        );
    }
}
