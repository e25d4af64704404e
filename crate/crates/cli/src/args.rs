use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use copula_ot::clustering::{DEFAULT_K, DEFAULT_MAX_ROUNDS};
use copula_ot::power::{
    DEFAULT_N_SIMS, DEFAULT_SAMPLE_SIZE, POWER_TFDC_RESOLUTION, TARGET_SAMPLES,
};
use copula_ot::synth::Pattern;
use copula_ot::transport::{DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Parser, Debug)]
#[command(
    name = "copula-ot",
    version,
    about = "Copula-based dependence analysis with optimal transport"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Empirical copula of every variable pair, as pair_<i>_<j>.cop
    Copula {
        #[command(flatten)]
        io: InputArgs,
        /// grid resolution per axis
        #[arg(long, default_value_t = 20)]
        m: usize,
        /// also write a PGM heatmap next to each .cop file
        #[arg(long)]
        heatmaps: bool,
    },
    /// Transport distance between the copulas of all variable pairs
    Dist {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// k-means of the pair copulas with Wasserstein barycenter centroids
    Cluster {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long = "max-rounds", default_value_t = DEFAULT_MAX_ROUNDS)]
        max_rounds: usize,
    },
    /// TFDC of every variable pair against target and forget copulas
    Tfdc {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// target .cop files
        #[arg(long, num_args = 1.., required = true)]
        targets: Vec<PathBuf>,
        /// forget .cop files
        #[arg(long, num_args = 1.., required = true)]
        forgets: Vec<PathBuf>,
    },
    /// Variable pairs ranked by distance to the nearest target copula
    Query {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, num_args = 1.., required = true)]
        targets: Vec<PathBuf>,
    },
    /// Write a reference copula (M, W, independence or Gaussian) as .cop and .pgm
    Reference {
        #[arg(long, value_enum)]
        kind: ReferenceKind,
        /// correlation of the Gaussian copula
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 20)]
        m: usize,
        /// file stem, defaults to the kind
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a synthetic (x, y) sample
    Synth {
        #[arg(long, value_enum)]
        scenario: ScenarioKind,
        /// discontinuity level
        #[arg(long)]
        a: Option<f64>,
        /// parabola vertex offset
        #[arg(long, allow_hyphen_values = true)]
        offset: Option<f64>,
        #[arg(long)]
        pattern: Option<Pattern>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        /// number of samples
        #[arg(long, default_value_t = 1000)]
        t: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Power curves of dependence coefficients on noisy functional patterns
    Power {
        #[arg(long, value_delimiter = ',', default_values_t = Pattern::ALL.to_vec())]
        patterns: Vec<Pattern>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])]
        noise: Vec<f64>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = CoefficientKind::all())]
        coefficients: Vec<CoefficientKind>,
        #[arg(long = "n-sims", default_value_t = DEFAULT_N_SIMS)]
        n_sims: usize,
        #[arg(long = "sample-size", default_value_t = DEFAULT_SAMPLE_SIZE)]
        sample_size: usize,
        #[arg(long)]
        seed: u64,
        /// grid resolution of the TFDC targets
        #[arg(long = "tfdc-m", default_value_t = POWER_TFDC_RESOLUTION)]
        tfdc_m: usize,
        /// samples behind each noise-free pattern target
        #[arg(long = "target-samples", default_value_t = TARGET_SAMPLES)]
        target_samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// CSV with a header row of variable names
    #[arg(long)]
    pub input: PathBuf,
    /// output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolverArgs {
    /// grid resolution per axis [default: 20, or that of the .cop inputs]
    #[arg(long)]
    pub m: Option<usize>,
    /// entropic sharpness [default: 50·m²]
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// use the debiased Sinkhorn divergence
    #[arg(long)]
    pub debias: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    Upper,
    Lower,
    Independence,
    Gaussian,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Discontinuity,
    Parabola,
    Pattern,
    Gaussian,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoefficientKind {
    Pearson,
    Spearman,
    Dcor,
    Rdc,
    Tfdc,
}

impl CoefficientKind {
    fn all() -> Vec<Self> {
        vec![
            CoefficientKind::Pearson,
            CoefficientKind::Spearman,
            CoefficientKind::Dcor,
            CoefficientKind::Rdc,
            CoefficientKind::Tfdc,
        ]
    }
}

fn value_name(v: &impl ValueEnum) -> String {
    v.to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string()
}

impl std::fmt::Display for CoefficientKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&value_name(self))
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&value_name(self))
    }
}

impl std::fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&value_name(self))
    }
}
