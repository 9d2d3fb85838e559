//! Deterministic invariant suite behind the `validate` subcommand.
//!
//! Each check draws random instances from a seeded stream and compares the
//! library against brute-force or algebraic references. A [`Fault`] swaps
//! one kernel for a deliberately broken version so the suite can prove it
//! detects failures.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::budgetset::{build_set, compute_cmax, lambda_star, order_labels, Budget};
use crate::conformal::{bcp_alpha, bcp_alpha_from_scores, e_value_from_sum, nc_score, ScoreParams};
use crate::domain::{normalize, CalibrationSet, CostModel, Example, LabelSpace, PredictiveDistribution};
use crate::error::Result;
use crate::scenario::seed::{rng_for, STREAM_VALIDATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Fault {
    #[default]
    None,
    /// Pooled mean divides by `N` instead of `N + 1`.
    EValue,
    /// Budget prefix one label too long.
    Cmax,
    /// Threshold taken from the last retained label.
    Lambda,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Fault::None),
            "e-value" => Ok(Fault::EValue),
            "cmax" => Ok(Fault::Cmax),
            "lambda" => Ok(Fault::Lambda),
            other => Err(format!("unknown fault `{other}` (none, e-value, cmax, lambda)")),
        }
    }
}

struct Kernels {
    fault: Fault,
}

impl Kernels {
    fn e_value(&self, test: f64, sum: f64, n: usize) -> f64 {
        match self.fault {
            Fault::EValue => test * n as f64 / (sum + test),
            _ => e_value_from_sum(test, sum, n),
        }
    }

    fn cmax(&self, ordering: &[usize], costs: &CostModel, k: Budget) -> usize {
        let c = compute_cmax(ordering, costs, k);
        match self.fault {
            Fault::Cmax => (c + 1).min(ordering.len()),
            _ => c,
        }
    }

    fn lambda(&self, ordering: &[usize], c_max: usize, dist: &PredictiveDistribution) -> Option<f64> {
        match (self.fault, c_max) {
            (Fault::Lambda, c) if c > 0 => Some(dist.prob(ordering[c - 1])),
            _ => lambda_star(ordering, c_max, dist),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    pub violations: usize,
    pub max_error: f64,
    pub seconds: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub fault: Fault,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

struct Tally {
    name: &'static str,
    start: Instant,
    instances: usize,
    violations: usize,
    max_error: f64,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            start: Instant::now(),
            instances: 0,
            violations: 0,
            max_error: 0.0,
        }
    }

    fn record(&mut self, ok: bool, err: f64) {
        self.instances += 1;
        if !ok {
            self.violations += 1;
        }
        if err.is_nan() || err > self.max_error {
            self.max_error = err;
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name,
            instances: self.instances,
            violations: self.violations,
            max_error: self.max_error,
            seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

/// Log-uniform score in `[1e-3, 1e3]`.
pub fn log_uniform_score<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    10f64.powf(rng.random_range(-3.0..3.0))
}

/// Random distribution whose entries are pairwise distinct.
pub fn distinct_distribution<R: Rng + ?Sized>(space: &LabelSpace, rng: &mut R) -> PredictiveDistribution {
    loop {
        let raw: Vec<f64> = (0..space.size()).map(|_| rng.random::<f64>() + 1e-6).collect();
        let d = normalize(space, &raw).expect("positive weights");
        let mut p = d.probs().to_vec();
        p.sort_by(f64::total_cmp);
        if p.windows(2).all(|w| w[0] < w[1]) {
            return d;
        }
    }
}

/// Random cost model with interference costs in `(0, 1]`.
pub fn random_costs<R: Rng + ?Sized>(space: &LabelSpace, rng: &mut R) -> CostModel {
    let mut c = vec![0.0; space.size()];
    for v in c.iter_mut().skip(2) {
        *v = 1.0 - rng.random::<f64>();
    }
    CostModel::new(space, c).expect("valid costs")
}

struct Instance {
    space: LabelSpace,
    dist: PredictiveDistribution,
    costs: CostModel,
    budgets: Vec<Budget>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let space = LabelSpace::new(rng.random_range(1..=10)).expect("positive");
    let dist = distinct_distribution(&space, rng);
    let costs = random_costs(&space, rng);
    let top = costs.total() + 0.5;
    let mut budgets: Vec<Budget> = (0..4)
        .map(|_| {
            // Mix integer budgets (common in practice) with fractional ones.
            let k = if rng.random::<bool>() {
                rng.random_range(0..=space.size()) as f64
            } else {
                rng.random_range(0.0..top)
            };
            Budget::new(k).expect("nonnegative")
        })
        .collect();
    budgets.sort_by(|a, b| a.value().total_cmp(&b.value()));
    Instance {
        space,
        dist,
        costs,
        budgets,
    }
}

fn brute_cmax(dist: &PredictiveDistribution, costs: &CostModel, k: Budget) -> usize {
    let n = dist.len();
    // Rank labels by selection: repeatedly take the most probable remaining one.
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut ranked = Vec::with_capacity(n);
    while !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &l)| {
                if dist.prob(l) > best.1 {
                    (i, dist.prob(l))
                } else {
                    best
                }
            });
        ranked.push(remaining.remove(pos));
    }
    (0..=n)
        .filter(|&m| ranked[..m].iter().map(|&l| costs.cost(l)).sum::<f64>() <= k.value())
        .max()
        .expect("m = 0 always feasible")
}

/// Smallest threshold on the probability grid whose strict-threshold set has
/// at most `c_max` labels. Zero means the full set.
fn brute_lambda(dist: &PredictiveDistribution, c_max: usize) -> f64 {
    let mut grid = vec![0.0];
    grid.extend_from_slice(dist.probs());
    grid.into_iter()
        .filter(|&lam| dist.probs().iter().filter(|&&p| p > lam).count() <= c_max)
        .fold(f64::INFINITY, f64::min)
}

/// Run every check on `instances` random instances.
pub fn run_suite(seed: u64, instances: usize, fault: Fault) -> Result<ValidationReport> {
    let k = Kernels { fault };
    let mut rng = rng_for(seed, STREAM_VALIDATE, 0);
    let mut checks = Vec::new();

    let mut t = Tally::new("exchangeability_identity");
    for _ in 0..instances {
        let n = rng.random_range(2..=200);
        let scores: Vec<f64> = (0..n).map(|_| log_uniform_score(&mut rng)).collect();
        let total: f64 = scores.iter().sum();
        let avg = scores
            .iter()
            .map(|&s| k.e_value(s, total - s, n - 1))
            .sum::<f64>()
            / n as f64;
        let err = (avg - 1.0).abs();
        t.record(err <= 1e-10, err);
    }
    checks.push(t.finish());

    let mut t = Tally::new("score_scale_invariance");
    for _ in 0..instances {
        let n = rng.random_range(1..=200);
        let cal: Vec<f64> = (0..n).map(|_| log_uniform_score(&mut rng)).collect();
        let test = log_uniform_score(&mut rng);
        let alpha = |c: f64| {
            let sum: f64 = cal.iter().map(|s| s * c).sum();
            (1.0 / k.e_value(test * c, sum, n)).min(1.0)
        };
        let base = alpha(1.0);
        let err = [1e-3, 1e3]
            .iter()
            .map(|&c| (alpha(c) - base).abs())
            .fold(0.0, f64::max);
        t.record(err <= 1e-10, err);
    }
    checks.push(t.finish());

    let mut t = Tally::new("calibration_permutation_invariance");
    for _ in 0..instances {
        let inst = random_instance(&mut rng);
        let n = rng.random_range(1..=50);
        let mut examples: Vec<Example> = (0..n)
            .map(|_| {
                let d = distinct_distribution(&inst.space, &mut rng);
                let y = rng.random_range(0..inst.space.size());
                Example::new(d, y).expect("label in range")
            })
            .collect();
        let set = build_set(&inst.dist, &inst.costs, inst.budgets[0]);
        let params = ScoreParams::default();
        let a = bcp_alpha(&inst.dist, &set, &CalibrationSet::new(examples.clone(), params)?)?;
        examples.shuffle(&mut rng);
        let b = bcp_alpha(&inst.dist, &set, &CalibrationSet::new(examples, params)?)?;
        let err = (a.value - b.value).abs();
        t.record(err <= 1e-10, err);
    }
    checks.push(t.finish());

    let mut t_cmax = Tally::new("cmax_prefix_sum_oracle");
    let mut t_mono = Tally::new("cmax_monotone_in_budget");
    let mut t_prop1 = Tally::new("threshold_brute_force_equivalence");
    let mut t_beta = Tally::new("e_value_ordering_equivalence");
    for _ in 0..instances {
        let inst = random_instance(&mut rng);
        let ordering = order_labels(&inst.dist);
        let mut prev = 0;
        for (i, &budget) in inst.budgets.iter().enumerate() {
            let c = k.cmax(&ordering, &inst.costs, budget);
            let oracle = brute_cmax(&inst.dist, &inst.costs, budget);
            t_cmax.record(c == oracle, c.abs_diff(oracle) as f64);
            if i > 0 {
                t_mono.record(c >= prev, 0.0);
            }
            prev = c;

            let lam = k.lambda(&ordering, c, &inst.dist);
            let lam_bf = brute_lambda(&inst.dist, oracle);
            let included: Vec<usize> = ordering[..c].to_vec();
            let mut by_threshold: Vec<usize> = (0..inst.space.size())
                .filter(|&y| inst.dist.prob(y) > lam_bf)
                .collect();
            let mut inc_sorted = included.clone();
            inc_sorted.sort_unstable();
            by_threshold.sort_unstable();
            let lam_ok = match lam {
                Some(l) => l == lam_bf,
                None => lam_bf == 0.0,
            };
            t_prop1.record(lam_ok && inc_sorted == by_threshold, (lam.unwrap_or(0.0) - lam_bf).abs());

            // The retained set is the set of labels whose e-value is below
            // that of the first excluded label, for any exponent.
            for beta in [0.5, 1.0, 2.0] {
                let params = ScoreParams::new(beta)?;
                let sum = 10.0;
                let e = |y: usize| -> Result<f64> { Ok(k.e_value(nc_score(inst.dist.prob(y), params)?, sum, 9)) };
                let mut by_e: Vec<usize> = match ordering.get(c) {
                    Some(&first_out) => {
                        let thr = e(first_out)?;
                        let mut v = Vec::new();
                        for y in 0..inst.space.size() {
                            if e(y)? < thr {
                                v.push(y);
                            }
                        }
                        v
                    }
                    None => (0..inst.space.size()).collect(),
                };
                by_e.sort_unstable();
                t_beta.record(by_e == inc_sorted, 0.0);
            }
        }
    }
    checks.extend([t_cmax.finish(), t_mono.finish(), t_prop1.finish(), t_beta.finish()]);

    let mut t = Tally::new("bcp_range");
    for _ in 0..instances {
        let n = rng.random_range(1..=200);
        let sum: f64 = (0..n).map(|_| log_uniform_score(&mut rng)).sum();
        let test = if rng.random::<f64>() < 0.1 {
            None
        } else {
            Some(log_uniform_score(&mut rng))
        };
        let a = bcp_alpha_from_scores(test, sum, n).value;
        let lo = 1.0 / (n as f64 + 1.0);
        let ok = a >= lo * (1.0 - 1e-12) && a <= 1.0;
        t.record(ok, if ok { 0.0 } else { (lo - a).max(a - 1.0) });
    }
    checks.push(t.finish());

    Ok(ValidationReport { seed, fault, checks })
}
