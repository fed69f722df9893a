//! SGD on estimated gradients, the round/test experiment loop, and the
//! hyperparameter grid search.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::estimators::{estimate, EstimatorConfig};
use crate::linalg::{all_finite, dist_sq};
use crate::problems::{DfoFunction, DfoObjective, LinRegModel, Problem};
use crate::randomness::RngStream;
use crate::samplers::{sample_directions, SamplerKind, SamplerSpec};

pub const DEFAULT_ROUNDS: usize = 100;
pub const DEFAULT_ITERS_PER_ROUND: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Minimize => "minimize",
            Direction::Maximize => "maximize",
        }
    }

    /// Whether `a` is strictly better than `b`.
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimize" => Ok(Direction::Minimize),
            "maximize" => Ok(Direction::Maximize),
            _ => Err(invalid("direction", format!("unknown direction `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    LinReg { d: usize, mc_samples: usize },
    Dfo { function: DfoFunction, d: usize, noise_level: f64 },
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ProblemSpec::LinReg { d, .. } | ProblemSpec::Dfo { d, .. } => d,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub sampler: SamplerKind,
    pub estimator: EstimatorConfig,
    pub learning_rate: f64,
    pub rounds: usize,
    pub iters_per_round: usize,
    pub seed: u64,
    pub direction: Direction,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("lr", "must be finite and non-negative"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        match self.problem {
            ProblemSpec::LinReg { d, mc_samples } => {
                if d == 0 {
                    return Err(invalid("d", "must be at least 1"));
                }
                if mc_samples == 0 {
                    return Err(invalid("mc_samples", "must be at least 1"));
                }
            }
            ProblemSpec::Dfo { d, noise_level, .. } => {
                DfoObjective::new(DfoFunction::Sphere, d, noise_level)?;
            }
        }
        SamplerSpec::new(self.sampler, self.estimator.l, self.problem.dim())?;
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.rounds * self.iters_per_round
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundMetrics {
    /// 1-based.
    pub round: usize,
    /// Test-set loss (linear regression) or noiseless objective (benchmarks).
    pub test_metric: f64,
    /// Mean of `||g - grad F||^2` over the round's iterations.
    pub grad_mse: Option<f64>,
    /// Cumulative objective evaluations at the end of the round.
    pub evaluations: u64,
}

/// Where a run stopped producing finite parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepIndex {
    /// 1-based.
    pub round: usize,
    /// 0-based within the round.
    pub iteration: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RoundMetrics>,
    pub final_theta: Vec<f64>,
    pub divergence: Option<StepIndex>,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn final_metric(&self) -> Option<f64> {
        self.rows.last().map(|r| r.test_metric)
    }

    pub fn evaluations(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.evaluations)
    }
}

/// `theta - lr g` when minimizing, `theta + lr g` when maximizing.
pub fn sgd_step(
    theta: &[f64],
    g: &[f64],
    lr: f64,
    direction: Direction,
    at: StepIndex,
) -> Result<Vec<f64>> {
    if theta.len() != g.len() {
        return Err(invalid("gradient", "dimension does not match theta"));
    }
    let sign = match direction {
        Direction::Minimize => -1.0,
        Direction::Maximize => 1.0,
    };
    let next: Vec<f64> = theta.iter().zip(g).map(|(t, gi)| t + sign * lr * gi).collect();
    if all_finite(&next) {
        Ok(next)
    } else {
        Err(Error::Divergence {
            round: at.round,
            iteration: at.iteration,
        })
    }
}

/// Stream labels under the run seed.
mod label {
    pub const MODEL: u64 = 0;
    pub const INIT: u64 = 1;
    pub const TEST_SET: u64 = 2;
    pub const STEPS: u64 = 3;
    pub const DIRECTIONS: u64 = 0;
    pub const ESTIMATE: u64 = 1;
}

/// Runs `rounds` rounds of `iters_per_round` SGD steps and records one
/// metric row per round, taken after the round's steps.
///
/// A step that yields non-finite parameters or evaluations ends the run;
/// the record then holds the rounds completed so far and the failing step.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let root = RngStream::new(config.seed);
    match config.problem {
        ProblemSpec::LinReg { d, mc_samples } => {
            let model = LinRegModel::new(d, mc_samples, &root.derive(label::MODEL))?;
            let test = model.test_set(crate::problems::linreg::TEST_SET_SIZE, &root.derive(label::TEST_SET));
            run_problem(config, &model, &root, |theta| LinRegModel::test_loss(theta, &test))
        }
        ProblemSpec::Dfo {
            function,
            d,
            noise_level,
        } => {
            let obj = DfoObjective::new(function, d, noise_level)?;
            run_problem(config, &obj, &root, |theta| obj.value(theta))
        }
    }
}

fn run_problem<P: Problem>(
    config: &RunConfig,
    problem: &P,
    root: &RngStream,
    metric: impl Fn(&[f64]) -> f64,
) -> Result<RunRecord> {
    let d = problem.dim();
    let mut spec = SamplerSpec::new(config.sampler, config.estimator.l, d)?;
    let mut theta = root.derive(label::INIT).standard_normal(d);
    let steps = root.derive(label::STEPS);
    let mut rows = Vec::with_capacity(config.rounds);
    let mut evaluations = 0u64;

    for round in 1..=config.rounds {
        let mut err_sum = 0.0;
        let mut err_count = 0usize;
        for iteration in 0..config.iters_per_round {
            let at = StepIndex { round, iteration };
            let t = ((round - 1) * config.iters_per_round + iteration) as u64;
            let step = steps.derive(t);
            let outcome = sample_directions(&spec, config.estimator.l, d, &step.derive(label::DIRECTIONS))
                .and_then(|dirs| estimate(problem, &theta, &config.estimator, &dirs, &step.derive(label::ESTIMATE)));
            let g = match outcome {
                Ok(g) => g,
                Err(Error::Evaluation { .. }) => return Ok(diverged(rows, theta, at)),
                Err(e) => return Err(e),
            };
            evaluations += g.evaluations_used;
            if let Some(truth) = problem.gradient(&theta) {
                err_sum += dist_sq(&g.vector, &truth);
                err_count += 1;
            }
            if config.sampler == SamplerKind::GuidedEs {
                spec.guided_update(&g.vector);
            }
            theta = match sgd_step(&theta, &g.vector, config.learning_rate, config.direction, at) {
                Ok(next) => next,
                Err(Error::Divergence { .. }) => return Ok(diverged(rows, theta, at)),
                Err(e) => return Err(e),
            };
        }
        let test_metric = metric(&theta);
        if !test_metric.is_finite() {
            let at = StepIndex {
                round,
                iteration: config.iters_per_round.saturating_sub(1),
            };
            return Ok(diverged(rows, theta, at));
        }
        rows.push(RoundMetrics {
            round,
            test_metric,
            grad_mse: (err_count > 0).then(|| err_sum / err_count as f64),
            evaluations,
        });
    }
    Ok(RunRecord {
        rows,
        final_theta: theta,
        divergence: None,
    })
}

fn diverged(rows: Vec<RoundMetrics>, theta: Vec<f64>, at: StepIndex) -> RunRecord {
    RunRecord {
        rows,
        final_theta: theta,
        divergence: Some(at),
    }
}

/// Errors if a seed is used both for selection and for evaluation.
pub fn ensure_disjoint_seeds(selection: &[u64], evaluation: &[u64]) -> Result<()> {
    match selection.iter().find(|s| evaluation.contains(s)) {
        Some(&s) => Err(Error::SeedOverlap(s)),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub c: f64,
    pub lr: f64,
    /// Final-round metric averaged over selection seeds; `None` if any seed diverged.
    pub mean_final: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub c: f64,
    pub lr: f64,
    pub cells: Vec<GridCell>,
}

/// The run configurations of a grid, ordered cell-major (`c`, then `lr`),
/// then by seed.
pub fn grid_configs(
    base: &RunConfig,
    c_grid: &[f64],
    lr_grid: &[f64],
    selection_seeds: &[u64],
) -> Result<Vec<RunConfig>> {
    if c_grid.is_empty() || lr_grid.is_empty() {
        return Err(invalid("grid", "c and lr grids must be non-empty"));
    }
    if selection_seeds.is_empty() {
        return Err(invalid("seeds", "need at least one selection seed"));
    }
    let mut out = Vec::with_capacity(c_grid.len() * lr_grid.len() * selection_seeds.len());
    for &c in c_grid {
        for &lr in lr_grid {
            for &seed in selection_seeds {
                let mut cfg = base.clone();
                cfg.estimator.c = c;
                cfg.learning_rate = lr;
                cfg.seed = seed;
                cfg.validate()?;
                out.push(cfg);
            }
        }
    }
    Ok(out)
}

/// Picks the best cell from records laid out as by [`grid_configs`].
///
/// Divergent cells rank last; ties go to the smaller `lr`, then the smaller `c`.
pub fn select_cell(
    direction: Direction,
    c_grid: &[f64],
    lr_grid: &[f64],
    seeds: usize,
    records: &[RunRecord],
) -> Result<GridResult> {
    if records.len() != c_grid.len() * lr_grid.len() * seeds || seeds == 0 {
        return Err(invalid("records", "count does not match the grid"));
    }
    let mut cells = Vec::with_capacity(c_grid.len() * lr_grid.len());
    let mut chunks = records.chunks(seeds);
    for &c in c_grid {
        for &lr in lr_grid {
            let chunk = chunks.next().expect("length checked above");
            let mut sum = 0.0;
            let mut ok = true;
            for r in chunk {
                match (r.diverged(), r.final_metric()) {
                    (false, Some(v)) => sum += v,
                    _ => ok = false,
                }
            }
            cells.push(GridCell {
                c,
                lr,
                mean_final: ok.then(|| sum / seeds as f64),
            });
        }
    }
    let mut best: Option<&GridCell> = None;
    for cell in &cells {
        let Some(v) = cell.mean_final else { continue };
        best = match best {
            None => Some(cell),
            Some(b) => {
                let bv = b.mean_final.expect("only finite cells are kept");
                let wins = direction.better(v, bv)
                    || (v == bv && (cell.lr < b.lr || (cell.lr == b.lr && cell.c < b.c)));
                Some(if wins { cell } else { b })
            }
        };
    }
    match best {
        Some(b) => Ok(GridResult {
            c: b.c,
            lr: b.lr,
            cells: cells.clone(),
        }),
        None => Err(Error::GridSearch {
            cells: cells
                .iter()
                .map(|c| format!("c={} lr={}: diverged", c.c, c.lr))
                .collect::<Vec<String>>(),
        }),
    }
}

/// Sequential grid search over `c_grid x lr_grid`, averaging the final-round
/// metric over `selection_seeds`.
pub fn grid_search(
    base: &RunConfig,
    c_grid: &[f64],
    lr_grid: &[f64],
    selection_seeds: &[u64],
) -> Result<GridResult> {
    let configs = grid_configs(base, c_grid, lr_grid, selection_seeds)?;
    let records = configs.iter().map(run).collect::<Result<Vec<_>>>()?;
    select_cell(base.direction, c_grid, lr_grid, selection_seeds.len(), &records)
}
