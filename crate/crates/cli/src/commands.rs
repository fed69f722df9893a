use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use gensmooth_core::estimators::{empirical_mse, EstimatorConfig};
use gensmooth_core::linalg::norm_sq;
use gensmooth_core::optimizer::{
    ensure_disjoint_seeds, grid_configs, run, select_cell, ProblemSpec, RunConfig, RunRecord,
};
use gensmooth_core::problems::LinRegModel;
use gensmooth_core::randomness::RngStream;
use gensmooth_core::samplers::{bes_shrinkage_scale, gs_shrinkage_variance, SamplerKind, SamplerSpec};
use gensmooth_core::theory::{
    convergence_bound, distribution_moments, fd_mse_closed_form, mse_gap_gss_vs_bess, MseDecomposition,
    ProblemStatistics,
};

use crate::args::*;
use crate::output::Row;

pub const WORKERS_ENV: &str = "GENSMOOTH_WORKERS";

/// What a command produced: CSV rows, a text report, and a JSON summary.
#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub report: String,
    pub summary: Value,
}

pub fn worker_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?;
        anyhow::ensure!(n > 0, "{WORKERS_ENV} must be a positive integer, got `{v}`");
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

pub fn execute(manifest: &Manifest) -> anyhow::Result<Outcome> {
    match manifest {
        Manifest::Linreg(a) => cmd_linreg(a),
        Manifest::Dfo(a) => cmd_dfo(a),
        Manifest::MseValidate(a) => cmd_mse_validate(a),
        Manifest::Theory(a) => cmd_theory(&a.query),
        Manifest::Gridsearch(a) => cmd_gridsearch(a),
    }
}

fn algo_name(a: Algo) -> &'static str {
    SamplerKind::from(a).name()
}

fn estimator_name(e: Estimator) -> &'static str {
    match e {
        Estimator::Fd => "fd",
        Estimator::At => "at",
    }
}

fn base_config(train: &TrainArgs, problem: ProblemSpec, c: f64, lr: f64) -> anyhow::Result<RunConfig> {
    let estimator = EstimatorConfig::new(train.estimator.into(), c, train.l, train.n)
        .map_err(flag_error)?
        .standardized(train.standardize);
    let cfg = RunConfig {
        problem,
        sampler: train.algo.into(),
        estimator,
        learning_rate: lr,
        rounds: train.rounds,
        iters_per_round: train.iters,
        seed: 0,
        direction: train.direction.into(),
    };
    cfg.validate().map_err(flag_error)?;
    Ok(cfg)
}

fn flag_error(e: gensmooth_core::Error) -> anyhow::Error {
    match e {
        gensmooth_core::Error::InvalidParameter { name, reason } => anyhow!("invalid --{name}: {reason}"),
        other => anyhow!(other),
    }
}

fn run_all(configs: &[RunConfig]) -> anyhow::Result<Vec<RunRecord>> {
    let pool = worker_pool()?;
    let records: Vec<_> = pool.install(|| configs.par_iter().map(run).collect());
    records.into_iter().map(|r| r.map_err(anyhow::Error::from)).collect()
}

fn with_seeds(base: &RunConfig, seeds: &[u64]) -> Vec<RunConfig> {
    seeds
        .iter()
        .map(|&s| RunConfig { seed: s, ..base.clone() })
        .collect()
}

struct RowTemplate {
    command: &'static str,
    train: TrainArgs,
    c: f64,
    lr: f64,
}

impl RowTemplate {
    fn row(&self, seed: u64, round: usize, metric: &str, value: f64) -> Row {
        Row {
            command: self.command.to_owned(),
            algo: algo_name(self.train.algo).to_owned(),
            estimator: estimator_name(self.train.estimator).to_owned(),
            l: self.train.l,
            n: self.train.n,
            d: self.train.d,
            c: self.c,
            lr: self.lr,
            seed,
            round,
            metric: metric.to_owned(),
            value,
        }
    }
}

/// Rows in (seed, round, metric) order; a divergent run ends with a
/// `diverged` row whose value is the failing iteration.
fn record_rows(t: &RowTemplate, metric: &str, with_grad: bool, seeds: &[u64], records: &[RunRecord]) -> Vec<Row> {
    let mut rows = Vec::new();
    for (&seed, rec) in seeds.iter().zip(records) {
        for m in &rec.rows {
            rows.push(t.row(seed, m.round, metric, m.test_metric));
            if with_grad {
                rows.push(t.row(seed, m.round, "grad_mse", m.grad_mse.unwrap_or(f64::NAN)));
            }
        }
        if let Some(at) = rec.divergence {
            rows.push(t.row(seed, at.round, "diverged", at.iteration as f64));
        }
    }
    rows
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    final_metric: Option<f64>,
    diverged_at: Option<(usize, usize)>,
    evaluations: u64,
}

fn run_summary(t: &RowTemplate, metric: &str, seeds: &[u64], records: &[RunRecord]) -> Value {
    let per_seed: Vec<SeedSummary> = seeds
        .iter()
        .zip(records)
        .map(|(&seed, r)| SeedSummary {
            seed,
            final_metric: r.final_metric(),
            diverged_at: r.divergence.map(|a| (a.round, a.iteration)),
            evaluations: r.evaluations(),
        })
        .collect();
    let finals: Vec<f64> = records
        .iter()
        .filter(|r| !r.diverged())
        .filter_map(RunRecord::final_metric)
        .collect();
    let mean = (!finals.is_empty()).then(|| finals.iter().sum::<f64>() / finals.len() as f64);
    json!({
        "command": t.command,
        "algo": algo_name(t.train.algo),
        "estimator": estimator_name(t.train.estimator),
        "L": t.train.l,
        "N": t.train.n,
        "d": t.train.d,
        "c": t.c,
        "lr": t.lr,
        "metric": metric,
        "mean_final": mean,
        "seeds": per_seed,
    })
}

pub fn cmd_linreg(a: &LinregArgs) -> anyhow::Result<Outcome> {
    let problem = ProblemSpec::LinReg {
        d: a.train.d,
        mc_samples: a.mc_samples,
    };
    let base = base_config(&a.train, problem, a.c, a.lr)?;
    let seeds = a.train.seed_list();
    let records = run_all(&with_seeds(&base, &seeds))?;
    let t = RowTemplate {
        command: "linreg",
        train: a.train.clone(),
        c: a.c,
        lr: a.lr,
    };
    Ok(Outcome {
        rows: record_rows(&t, "test_loss", true, &seeds, &records),
        report: String::new(),
        summary: run_summary(&t, "test_loss", &seeds, &records),
    })
}

pub fn cmd_dfo(a: &DfoArgs) -> anyhow::Result<Outcome> {
    let problem = ProblemSpec::Dfo {
        function: a.obj.into(),
        d: a.train.d,
        noise_level: a.noise_level,
    };
    let base = base_config(&a.train, problem, a.c, a.lr)?;
    let seeds = a.train.seed_list();
    let records = run_all(&with_seeds(&base, &seeds))?;
    let t = RowTemplate {
        command: "dfo",
        train: a.train.clone(),
        c: a.c,
        lr: a.lr,
    };
    let mut summary = run_summary(&t, "objective", &seeds, &records);
    summary["obj"] = json!(gensmooth_core::problems::DfoFunction::from(a.obj).name());
    Ok(Outcome {
        rows: record_rows(&t, "objective", false, &seeds, &records),
        report: String::new(),
        summary,
    })
}

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct MseReport {
    pub algo: &'static str,
    pub estimator: &'static str,
    pub l: usize,
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub replications: usize,
    pub grad_norm_sq: f64,
    pub noise_trace: f64,
    pub empirical_total: f64,
    pub empirical_std_error: f64,
    pub empirical_bias: f64,
    pub empirical_variance: f64,
    pub closed_total: f64,
    pub closed_bias: f64,
    pub closed_variance: f64,
    pub relative_error: f64,
}

pub fn mse_validate(a: &MseValidateArgs) -> anyhow::Result<MseReport> {
    if matches!(a.algo, Algo::Orthogonal | Algo::Guided) {
        bail!(
            "--algo {}: the closed form needs IID zero-mean direction entries; refusing",
            algo_name(a.algo)
        );
    }
    let spec = SamplerSpec::new(a.algo.into(), a.l, a.d).map_err(flag_error)?;
    let cfg = EstimatorConfig::new(a.estimator.into(), a.c, a.l, a.n).map_err(flag_error)?;
    let root = RngStream::new(a.seed);
    let model = LinRegModel::new(a.d, a.mc_samples, &root.derive(0)).map_err(flag_error)?;
    let theta = root.derive(1).standard_normal(a.d);
    let grad_norm_sq = norm_sq(&model.analytic_gradient(&theta));
    let noise_trace = model
        .noise_trace(&theta, a.noise_samples, &root.derive(2))
        .map_err(flag_error)?;
    let stats = ProblemStatistics::new(grad_norm_sq, noise_trace)?;
    let closed: MseDecomposition = fd_mse_closed_form(distribution_moments(&spec)?, a.l, a.n, a.d, stats)?;
    let emp = empirical_mse(&model, &theta, &cfg, &spec, a.replications, &root.derive(3)).map_err(flag_error)?;
    Ok(MseReport {
        algo: algo_name(a.algo),
        estimator: estimator_name(a.estimator),
        l: a.l,
        n: a.n,
        d: a.d,
        c: a.c,
        replications: a.replications,
        grad_norm_sq,
        noise_trace,
        empirical_total: emp.decomposition.total,
        empirical_std_error: emp.total_std_error,
        empirical_bias: emp.decomposition.squared_bias,
        empirical_variance: emp.decomposition.trace_variance,
        closed_total: closed.total,
        closed_bias: closed.squared_bias,
        closed_variance: closed.trace_variance,
        relative_error: (emp.decomposition.total - closed.total).abs() / closed.total,
    })
}

fn cmd_mse_validate(a: &MseValidateArgs) -> anyhow::Result<Outcome> {
    let r = mse_validate(a)?;
    let report = format!(
        "algo={} estimator={} L={} N={} d={} c={} R={}\n\
         |grad F|^2={} trace(Var grad f)={}\n\
         {:<12}{:>16}{:>16}{:>16}\n\
         {:<12}{:>16.6}{:>16.6}{:>16.6}\n\
         {:<12}{:>16.6}{:>16.6}{:>16.6}\n\
         empirical std error={:.6}\n\
         relative error={:.6}\n",
        r.algo,
        r.estimator,
        r.l,
        r.n,
        r.d,
        r.c,
        r.replications,
        r.grad_norm_sq,
        r.noise_trace,
        "",
        "total",
        "bias^2",
        "variance",
        "empirical",
        r.empirical_total,
        r.empirical_bias,
        r.empirical_variance,
        "closed-form",
        r.closed_total,
        r.closed_bias,
        r.closed_variance,
        r.empirical_std_error,
        r.relative_error,
    );
    Ok(Outcome {
        rows: Vec::new(),
        report,
        summary: serde_json::to_value(&r)?,
    })
}

pub fn cmd_theory(q: &TheoryQuery) -> anyhow::Result<Outcome> {
    let mut pairs: Vec<(&str, Value)> = Vec::new();
    match *q {
        TheoryQuery::Moments { algo, l, d } => {
            let spec = SamplerSpec::new(algo.into(), l, d).map_err(flag_error)?;
            let m = distribution_moments(&spec)?;
            pairs.push(("variance", json!(m.variance)));
            pairs.push(("kurtosis", json!(m.kurtosis)));
        }
        TheoryQuery::Mse {
            algo,
            l,
            n,
            d,
            grad_norm_sq,
            noise_trace,
        } => {
            let spec = SamplerSpec::new(algo.into(), l, d).map_err(flag_error)?;
            let stats = ProblemStatistics::new(grad_norm_sq, noise_trace).map_err(flag_error)?;
            let m = fd_mse_closed_form(distribution_moments(&spec)?, l, n, d, stats).map_err(flag_error)?;
            let terms = m.terms.expect("closed form carries its terms");
            pairs.push(("total", json!(m.total)));
            pairs.push(("squared_bias", json!(m.squared_bias)));
            pairs.push(("trace_variance", json!(m.trace_variance)));
            pairs.push(("gradient_term", json!(terms.gradient)));
            pairs.push(("noise_term", json!(terms.noise)));
        }
        TheoryQuery::Shrinkage { l, d } => {
            anyhow::ensure!(l > 0, "invalid --L: must be at least 1");
            anyhow::ensure!(d > 0, "invalid --d: must be at least 1");
            pairs.push(("sigma2_star", json!(gs_shrinkage_variance(l, d))));
            pairs.push(("p_star", json!(0.5)));
            pairs.push(("m_star", json!(bes_shrinkage_scale(l, d)?)));
            pairs.push(("bes_variance", json!(l as f64 / (l + d - 1) as f64)));
        }
        TheoryQuery::Gap {
            l,
            n,
            d,
            grad_norm_sq,
            noise_trace,
        } => {
            let stats = ProblemStatistics::new(grad_norm_sq, noise_trace).map_err(flag_error)?;
            pairs.push(("gap", json!(mse_gap_gss_vs_bess(l, n, d, stats).map_err(flag_error)?)));
        }
        TheoryQuery::Bound { m, b, delta, mu, t } => {
            pairs.push(("bound", json!(convergence_bound(m, b, delta, mu, t).map_err(flag_error)?)));
        }
    }
    let report: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let summary = Value::Object(pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect());
    Ok(Outcome {
        rows: Vec::new(),
        report,
        summary,
    })
}

pub fn cmd_gridsearch(a: &GridArgs) -> anyhow::Result<Outcome> {
    let (problem, metric, with_grad) = match a.problem {
        GridProblem::Linreg => (
            ProblemSpec::LinReg {
                d: a.train.d,
                mc_samples: a.mc_samples,
            },
            "test_loss",
            true,
        ),
        GridProblem::Dfo => {
            let obj = a.obj.ok_or_else(|| anyhow!("--obj is required with --problem dfo"))?;
            (
                ProblemSpec::Dfo {
                    function: obj.into(),
                    d: a.train.d,
                    noise_level: a.noise_level,
                },
                "objective",
                false,
            )
        }
    };
    let (c_grid, lr_grid) = (a.c_values(), a.lr_values());
    anyhow::ensure!(!c_grid.is_empty(), "invalid --c-grid: must be non-empty");
    anyhow::ensure!(!lr_grid.is_empty(), "invalid --lr-grid: must be non-empty");
    let selection = a.selection_seed_list();
    let evaluation = a.train.seed_list();
    ensure_disjoint_seeds(&selection, &evaluation)?;

    let base = base_config(&a.train, problem, c_grid[0], lr_grid[0])?;
    let configs = grid_configs(&base, &c_grid, &lr_grid, &selection).map_err(flag_error)?;
    let records = run_all(&configs)?;
    let chosen = select_cell(base.direction, &c_grid, &lr_grid, selection.len(), &records)?;

    let mut rows = Vec::new();
    for (cfg, rec) in configs.iter().zip(&records) {
        let t = RowTemplate {
            command: "gridsearch",
            train: a.train.clone(),
            c: cfg.estimator.c,
            lr: cfg.learning_rate,
        };
        let value = if rec.diverged() { f64::NAN } else { rec.final_metric().unwrap_or(f64::NAN) };
        rows.push(t.row(cfg.seed, a.train.rounds, &format!("selection_{metric}"), value));
    }

    let mut best = base.clone();
    best.estimator.c = chosen.c;
    best.learning_rate = chosen.lr;
    let eval_records = run_all(&with_seeds(&best, &evaluation))?;
    let t = RowTemplate {
        command: "gridsearch",
        train: a.train.clone(),
        c: chosen.c,
        lr: chosen.lr,
    };
    rows.extend(record_rows(&t, metric, with_grad, &evaluation, &eval_records));

    let cells: Vec<Value> = chosen
        .cells
        .iter()
        .map(|c| json!({"c": c.c, "lr": c.lr, "mean_final": c.mean_final}))
        .collect();
    let mut summary = run_summary(&t, metric, &evaluation, &eval_records);
    summary["selected"] = json!({"c": chosen.c, "lr": chosen.lr});
    summary["cells"] = Value::Array(cells);
    summary["selection_seeds"] = json!(selection);
    Ok(Outcome {
        rows,
        report: format!("selected c={} lr={}\n", chosen.c, chosen.lr),
        summary,
    })
}
