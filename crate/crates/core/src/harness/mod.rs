//! Monte Carlo runner: repeated calibration/test splits, per-run metrics for
//! both estimators, and distributional summaries across runs.

pub mod metrics;
mod report;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{
    aggregate, write_aggregate_csv, write_runs_csv, AggregateReport, CellSummary, MetricSummary,
    ReliabilitySummary, AGGREGATE_CSV_HEADER, RUNS_CSV_HEADER,
};

use crate::budgetset::{build_set, Budget, PredictionSetResult};
use crate::conformal::{bcp_alpha, miscovered, nme_alpha, Method, ScoreParams};
use crate::domain::{CalibrationSet, CostModel, Example, LabelSpace};
use crate::error::{BcpError, Result};
use crate::scenario::seed::{rng_for, STREAM_RUN_POOL, STREAM_RUN_SPLIT};
use crate::scenario::{generate_dataset, DataSource, Sampler};
use metrics::{metric_brier, metric_emr, metric_smd, metric_tmr, reliability_term, RunningStat};

/// Where each run's examples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Fresh i.i.d. pool per run, drawn from seeds derived from the run index.
    Regenerate,
    /// One balanced dataset generated up front; each run samples a split
    /// without replacement.
    Pooled,
}

/// Grid and estimator settings shared by `run` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub n_runs: usize,
    pub n_cal: Vec<usize>,
    pub n_te: usize,
    pub budgets: Vec<f64>,
    pub beta: f64,
    /// Cost of every interference label unless `costs` is given.
    pub interference_cost: f64,
    /// Explicit per-label costs, length `S + 2`.
    pub costs: Option<Vec<f64>>,
    pub split: SplitMode,
    /// Examples per label in the shared dataset (pooled mode only).
    pub pool_per_label: usize,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            n_runs: 500,
            n_cal: vec![10, 50, 100, 500, 1000],
            n_te: 100,
            budgets: vec![1.0, 2.0, 3.0],
            beta: 1.0,
            interference_cost: 1.0,
            costs: None,
            split: SplitMode::Regenerate,
            pool_per_label: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: ExperimentParams,
    pub source: DataSource,
    pub master_seed: u64,
}

/// Validated experiment inputs.
#[derive(Debug, Clone)]
struct Resolved {
    costs: CostModel,
    budgets: Vec<Budget>,
    score: ScoreParams,
    n_cal: Vec<usize>,
    n_te: usize,
    n_runs: usize,
}

impl ExperimentConfig {
    fn resolve(&self) -> Result<Resolved> {
        self.source.validate()?;
        self.params.resolve(self.source.label_space()?)
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        self.source.label_space()
    }
}

impl ExperimentParams {
    fn resolve(&self, space: LabelSpace) -> Result<Resolved> {
        let p = self;
        if p.n_runs == 0 {
            return Err(BcpError::config("experiment.n_runs", "must be at least 1"));
        }
        if p.n_te == 0 {
            return Err(BcpError::config("experiment.n_te", "must be at least 1"));
        }
        if p.n_cal.is_empty() || p.n_cal.contains(&0) {
            return Err(BcpError::config(
                "experiment.n_cal",
                "need at least one calibration size, each at least 1",
            ));
        }
        if p.budgets.is_empty() {
            return Err(BcpError::config("experiment.budgets", "need at least one budget"));
        }
        let budgets = p
            .budgets
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                Budget::new(k).map_err(|_| {
                    BcpError::config(format!("experiment.budgets[{i}]"), "must be nonnegative")
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let score = ScoreParams::new(p.beta)
            .map_err(|_| BcpError::config("experiment.beta", "must be positive"))?;
        let costs = match &p.costs {
            Some(c) => CostModel::new(&space, c.clone()),
            None => CostModel::uniform(&space, p.interference_cost),
        }
        .map_err(|e| BcpError::config("experiment.costs", e.to_string()))?;
        if p.split == SplitMode::Pooled && p.pool_per_label == 0 {
            return Err(BcpError::config("experiment.pool_per_label", "must be at least 1"));
        }
        Ok(Resolved {
            costs,
            budgets,
            score,
            n_cal: p.n_cal.clone(),
            n_te: p.n_te,
            n_runs: p.n_runs,
        })
    }
}

/// Metrics of one method on one run's test set for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub method: Method,
    pub k: f64,
    pub n_cal: usize,
    pub emr: f64,
    pub tmr: f64,
    pub smd: f64,
    pub brier: f64,
}

/// Everything a run grid produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Ordered by budget, calibration size, run, method.
    pub records: Vec<RunRecord>,
    pub aggregate: AggregateReport,
}

/// `m / alpha` accumulators for one run, indexed `[budget][n_cal][method]`.
type RunReliability = Vec<Vec<[RunningStat; 2]>>;

struct RunOutcome {
    /// Indexed `[budget][n_cal][method]`.
    records: Vec<Vec<[RunRecord; 2]>>,
    reliability: RunReliability,
}

enum PoolSource<'a> {
    Fresh(&'a Sampler),
    Shared(&'a [Example]),
}

fn draw_pool(run: usize, seed: u64, source: &PoolSource<'_>, needed: usize) -> Result<Vec<Example>> {
    match source {
        PoolSource::Fresh(sampler) => {
            let mut rng = rng_for(seed, STREAM_RUN_POOL, run as u64);
            (0..needed).map(|_| sampler.draw(&mut rng)).collect()
        }
        PoolSource::Shared(data) => {
            let mut rng = rng_for(seed, STREAM_RUN_SPLIT, run as u64);
            Ok(sample_indices(&mut rng, data.len(), needed)
                .into_iter()
                .map(|i| data[i].clone())
                .collect())
        }
    }
}

fn run_once(run: usize, seed: u64, res: &Resolved, source: &PoolSource<'_>) -> Result<RunOutcome> {
    let max_cal = *res.n_cal.iter().max().expect("validated");
    let pool = draw_pool(run, seed, source, res.n_te + max_cal)?;
    let (test, cal_pool) = pool.split_at(res.n_te);
    let cal_sets = res
        .n_cal
        .iter()
        .map(|&n| CalibrationSet::new(cal_pool[..n].to_vec(), res.score))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::with_capacity(res.budgets.len());
    let mut reliability = Vec::with_capacity(res.budgets.len());
    for &budget in &res.budgets {
        let sets: Vec<PredictionSetResult> = test
            .iter()
            .map(|e| build_set(&e.dist, &res.costs, budget))
            .collect();
        let misses: Vec<bool> = sets
            .iter()
            .zip(test)
            .map(|(s, e)| miscovered(s, e.true_label))
            .collect();
        let nme: Vec<f64> = sets
            .iter()
            .zip(test)
            .map(|(s, e)| nme_alpha(&e.dist, s).value)
            .collect();
        let tmr = metric_tmr(&misses)?;

        let mut by_cal = Vec::with_capacity(cal_sets.len());
        let mut rel_by_cal = Vec::with_capacity(cal_sets.len());
        for cal in &cal_sets {
            let bcp = sets
                .iter()
                .zip(test)
                .map(|(s, e)| bcp_alpha(&e.dist, s, cal).map(|a| a.value))
                .collect::<Result<Vec<f64>>>()?;
            let mut rel = [RunningStat::default(); 2];
            let mut recs = [None, None];
            for (slot, (method, alphas)) in [(Method::Bcp, &bcp), (Method::Nme, &nme)]
                .into_iter()
                .enumerate()
            {
                for (&a, &m) in alphas.iter().zip(&misses) {
                    rel[slot].push(reliability_term(m, a));
                }
                recs[slot] = Some(RunRecord {
                    run,
                    method,
                    k: budget.value(),
                    n_cal: cal.len(),
                    emr: metric_emr(alphas)?,
                    tmr,
                    smd: metric_smd(alphas, &misses)?,
                    brier: metric_brier(alphas, &misses)?,
                });
            }
            by_cal.push(recs.map(|r| r.expect("filled above")));
            rel_by_cal.push(rel);
        }
        records.push(by_cal);
        reliability.push(rel_by_cal);
    }
    Ok(RunOutcome {
        records,
        reliability,
    })
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    builder
        .build()
        .map_err(|e| BcpError::config("workers", e.to_string()))
}

fn execute(res: &Resolved, seed: u64, source: PoolSource<'_>) -> Result<ExperimentOutput> {
    let outcomes = (0..res.n_runs)
        .into_par_iter()
        .map(|run| run_once(run, seed, res, &source))
        .collect::<Result<Vec<_>>>()?;

    // Deterministic reduction in (budget, n_cal, run, method) order.
    let mut records = Vec::with_capacity(res.n_runs * res.budgets.len() * res.n_cal.len() * 2);
    let mut rel = vec![vec![[RunningStat::default(); 2]; res.n_cal.len()]; res.budgets.len()];
    for (b, rel_b) in rel.iter_mut().enumerate() {
        for (c, rel_bc) in rel_b.iter_mut().enumerate() {
            for o in &outcomes {
                records.extend_from_slice(&o.records[b][c]);
                for (acc, part) in rel_bc.iter_mut().zip(&o.reliability[b][c]) {
                    acc.merge(part);
                }
            }
        }
    }
    let aggregate = aggregate(&records, &res.budgets, &res.n_cal, &rel);
    Ok(ExperimentOutput { records, aggregate })
}

fn check_pool(res: &Resolved, available: usize) -> Result<()> {
    let required = res.n_te + res.n_cal.iter().max().expect("validated");
    if available < required {
        return Err(BcpError::InsufficientData {
            required,
            available,
        });
    }
    Ok(())
}

/// Run the full grid. `workers` bounds the thread count (`None` = all cores);
/// results do not depend on it.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutput> {
    let res = cfg.resolve()?;
    let sampler = cfg.source.sampler()?;
    thread_pool(workers)?.install(|| match cfg.params.split {
        SplitMode::Regenerate => execute(&res, cfg.master_seed, PoolSource::Fresh(&sampler)),
        SplitMode::Pooled => {
            let data = generate_dataset(&cfg.source, cfg.params.pool_per_label, cfg.master_seed)?;
            check_pool(&res, data.len())?;
            execute(&res, cfg.master_seed, PoolSource::Shared(&data))
        }
    })
}

/// Run the grid on a fixed dataset (for example detector outputs loaded from
/// CSV). Each run samples a disjoint calibration/test split without
/// replacement; `params.split` and `params.pool_per_label` are ignored.
pub fn run_experiment_on_dataset(
    params: &ExperimentParams,
    space: LabelSpace,
    data: &[Example],
    seed: u64,
    workers: Option<usize>,
) -> Result<ExperimentOutput> {
    let res = params.resolve(space)?;
    if let Some(bad) = data.iter().find(|e| e.dist.len() != space.size()) {
        return Err(BcpError::LengthMismatch {
            expected: space.size(),
            actual: bad.dist.len(),
        });
    }
    check_pool(&res, data.len())?;
    thread_pool(workers)?.install(|| execute(&res, seed, PoolSource::Shared(data)))
}
