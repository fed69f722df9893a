//! Command-line flags. Every flag struct doubles as a manifest section, so a
//! run can be written to a TOML file and replayed with `run --config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gensmooth_core::estimators::EstimatorKind;
use gensmooth_core::optimizer::Direction;
use gensmooth_core::problems::DfoFunction;
use gensmooth_core::samplers::SamplerKind;

#[derive(Parser, Debug)]
#[command(name = "gensmooth", version, about = "Zeroth-order gradient estimation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// SGD on the synthetic linear-regression problem.
    Linreg(LinregArgs),
    /// SGD on a noisy benchmark function.
    Dfo(DfoArgs),
    /// Compare the empirical estimator MSE against the closed form.
    MseValidate(MseValidateArgs),
    /// Print closed-form quantities.
    Theory(TheoryArgs),
    /// Select (c, lr) on selection seeds, then evaluate the winner.
    Gridsearch(GridArgs),
    /// Replay a saved manifest.
    Run(RunArgs),
}

/// A replayable experiment.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Manifest {
    Linreg(LinregArgs),
    Dfo(DfoArgs),
    MseValidate(MseValidateArgs),
    Theory(TheoryArgs),
    Gridsearch(GridArgs),
}

impl Manifest {
    pub fn name(&self) -> &'static str {
        match self {
            Manifest::Linreg(_) => "linreg",
            Manifest::Dfo(_) => "dfo",
            Manifest::MseValidate(_) => "mse-validate",
            Manifest::Theory(_) => "theory",
            Manifest::Gridsearch(_) => "gridsearch",
        }
    }

    pub fn output(&self) -> &OutputArgs {
        match self {
            Manifest::Linreg(a) => &a.output,
            Manifest::Dfo(a) => &a.output,
            Manifest::MseValidate(a) => &a.output,
            Manifest::Theory(a) => &a.output,
            Manifest::Gridsearch(a) => &a.output,
        }
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Gs,
    Bes,
    GsShrinkage,
    BesShrinkage,
    Orthogonal,
    Guided,
}

impl From<Algo> for SamplerKind {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Gs => SamplerKind::Gs,
            Algo::Bes => SamplerKind::Bes,
            Algo::GsShrinkage => SamplerKind::GsShrinkage,
            Algo::BesShrinkage => SamplerKind::BesShrinkage,
            Algo::Orthogonal => SamplerKind::OrthogonalEs,
            Algo::Guided => SamplerKind::GuidedEs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Fd,
    At,
}

impl From<Estimator> for EstimatorKind {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Fd => EstimatorKind::ForwardDifference,
            Estimator::At => EstimatorKind::Antithetic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Sphere,
    Rosenbrock,
    Cigar,
    Hm,
}

impl From<Objective> for DfoFunction {
    fn from(o: Objective) -> Self {
        match o {
            Objective::Sphere => DfoFunction::Sphere,
            Objective::Rosenbrock => DfoFunction::Rosenbrock,
            Objective::Cigar => DfoFunction::Cigar,
            Objective::Hm => DfoFunction::Hm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Goal {
    #[default]
    Minimize,
    Maximize,
}

impl From<Goal> for Direction {
    fn from(g: Goal) -> Self {
        match g {
            Goal::Minimize => Direction::Minimize,
            Goal::Maximize => Direction::Maximize,
        }
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct OutputArgs {
    /// CSV destination; stdout when absent.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// JSON summary destination.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
    /// Write this invocation as a TOML manifest.
    #[arg(long)]
    #[serde(skip)]
    pub save_config: Option<PathBuf>,
}

/// Flags shared by the SGD commands.
#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct TrainArgs {
    #[arg(long)]
    pub d: usize,
    /// Directions per gradient estimate.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: usize,
    /// Random evaluations per point.
    #[arg(long = "N", default_value_t = 1)]
    #[serde(rename = "N")]
    pub n: usize,
    #[arg(long, value_enum)]
    pub algo: Algo,
    #[arg(long, value_enum, default_value_t = Estimator::Fd)]
    pub estimator: Estimator,
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Number of seeds, starting at --seed-start.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    /// Divide differences by the standard deviation of the evaluations.
    #[arg(long)]
    #[serde(default)]
    pub standardize: bool,
    #[arg(long, value_enum, default_value_t = Goal::Minimize)]
    #[serde(default)]
    pub direction: Goal,
}

impl TrainArgs {
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds).map(|i| self.seed_start + i).collect()
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct LinregArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub c: f64,
    #[arg(long)]
    pub lr: f64,
    /// Draws used to estimate E[Q gamma].
    #[arg(long, default_value_t = 1000)]
    pub mc_samples: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct DfoArgs {
    #[arg(long, value_enum)]
    pub obj: Objective,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub c: f64,
    #[arg(long)]
    pub lr: f64,
    /// Standard deviation of the additive evaluation noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise_level: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridProblem {
    Linreg,
    Dfo,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct GridArgs {
    #[arg(long, value_enum)]
    pub problem: GridProblem,
    /// Required when --problem dfo.
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj: Option<Objective>,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    /// Comma-separated spacings; problem default when absent.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_grid: Option<Vec<f64>>,
    /// Comma-separated learning rates; problem default when absent.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    pub selection_seeds: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub selection_seed_start: u64,
    #[arg(long, default_value_t = 1000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_level: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

impl GridArgs {
    pub fn selection_seed_list(&self) -> Vec<u64> {
        (0..self.selection_seeds).map(|i| self.selection_seed_start + i).collect()
    }

    pub fn c_values(&self) -> Vec<f64> {
        self.c_grid.clone().unwrap_or_else(|| vec![0.01, 0.1])
    }

    pub fn lr_values(&self) -> Vec<f64> {
        self.lr_grid.clone().unwrap_or_else(|| match self.problem {
            GridProblem::Linreg => vec![0.001, 0.01, 0.1],
            GridProblem::Dfo => vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
        })
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct MseValidateArgs {
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: usize,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: usize,
    #[arg(long, value_enum)]
    pub algo: Algo,
    #[arg(long, value_enum, default_value_t = Estimator::Fd)]
    pub estimator: Estimator,
    #[arg(long, default_value_t = 1e-4)]
    pub c: f64,
    #[arg(long, default_value_t = 100_000)]
    pub replications: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub mc_samples: usize,
    /// Draws used to estimate the gradient-noise trace.
    #[arg(long, default_value_t = 100_000)]
    pub noise_samples: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct TheoryArgs {
    #[command(subcommand)]
    pub query: TheoryQuery,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Subcommand, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(tag = "query", rename_all = "kebab-case")]
pub enum TheoryQuery {
    /// Entry variance and kurtosis of a family.
    Moments {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long = "L")]
        #[serde(rename = "L")]
        l: usize,
        #[arg(long)]
        d: usize,
    },
    /// Closed-form forward-difference MSE.
    Mse {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long = "L")]
        #[serde(rename = "L")]
        l: usize,
        #[arg(long = "N")]
        #[serde(rename = "N")]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        grad_norm_sq: f64,
        #[arg(long)]
        noise_trace: f64,
    },
    /// Optimal shrinkage variance and Bernoulli scale.
    Shrinkage {
        #[arg(long = "L")]
        #[serde(rename = "L")]
        l: usize,
        #[arg(long)]
        d: usize,
    },
    /// MSE(GS-shrinkage) - MSE(BeS-shrinkage).
    Gap {
        #[arg(long = "L")]
        #[serde(rename = "L")]
        l: usize,
        #[arg(long = "N")]
        #[serde(rename = "N")]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        grad_norm_sq: f64,
        #[arg(long)]
        noise_trace: f64,
    },
    /// Biased-SGD convergence bound.
    Bound {
        #[arg(long = "M")]
        #[serde(rename = "M")]
        m: f64,
        #[arg(long = "B")]
        #[serde(rename = "B")]
        b: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long = "T")]
        #[serde(rename = "T")]
        t: u64,
    },
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the manifest's CSV destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
