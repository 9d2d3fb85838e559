use std::io::Write;

use serde::Serialize;

use super::metrics::{quantile_sorted, RunningStat};
use super::RunRecord;
use crate::budgetset::Budget;
use crate::conformal::Method;
use crate::error::Result;

pub const RUNS_CSV_HEADER: &str = "run,method,K,n_cal,emr,tmr,smd,brier";
pub const AGGREGATE_CSV_HEADER: &str = "method,K,n_cal,metric,mean,std,q05,q25,q50,q75,q95";

pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.50, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    /// At [`QUANTILES`].
    pub quantiles: [f64; 5],
}

impl MetricSummary {
    fn from_values(metric: &'static str, mut values: Vec<f64>) -> Self {
        let mut st = RunningStat::default();
        values.iter().for_each(|&v| st.push(v));
        values.sort_by(f64::total_cmp);
        Self {
            metric,
            mean: st.mean,
            std: st.variance().sqrt(),
            quantiles: QUANTILES.map(|q| quantile_sorted(&values, q)),
        }
    }

    pub fn q05(&self) -> f64 {
        self.quantiles[0]
    }
}

/// Mean and standard error of `m / alpha` over every (run, test point) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReliabilitySummary {
    pub mean: f64,
    pub stderr: f64,
    pub pairs: u64,
    /// `mean <= 1 + 3 * stderr`.
    pub pass: bool,
}

impl From<RunningStat> for ReliabilitySummary {
    fn from(st: RunningStat) -> Self {
        let stderr = st.stderr();
        Self {
            mean: st.mean,
            stderr,
            pairs: st.count,
            pass: st.mean <= 1.0 + 3.0 * stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub method: Method,
    #[serde(rename = "K")]
    pub k: f64,
    pub n_cal: usize,
    pub runs: usize,
    pub metrics: [MetricSummary; 4],
    pub reliability: ReliabilitySummary,
}

impl CellSummary {
    pub fn metric(&self, name: &str) -> &MetricSummary {
        self.metrics
            .iter()
            .find(|m| m.metric == name)
            .unwrap_or_else(|| panic!("unknown metric {name}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    /// Ordered by budget, calibration size, method.
    pub cells: Vec<CellSummary>,
}

impl AggregateReport {
    pub fn cell(&self, method: Method, k: f64, n_cal: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.k == k && c.n_cal == n_cal)
    }

    /// True when every BCP cell passes the reliability check.
    pub fn bcp_reliability_pass(&self) -> bool {
        self.cells
            .iter()
            .filter(|c| c.method == Method::Bcp)
            .all(|c| c.reliability.pass)
    }
}

/// Summaries per (budget, n_cal, method). `records` must be ordered by
/// budget, calibration size, run, method as produced by the runner.
pub fn aggregate(
    records: &[RunRecord],
    budgets: &[Budget],
    n_cal: &[usize],
    reliability: &[Vec<[RunningStat; 2]>],
) -> AggregateReport {
    let per_cell = records.len() / (budgets.len() * n_cal.len()).max(1);
    let mut cells = Vec::new();
    for (b, budget) in budgets.iter().enumerate() {
        for (c, &n) in n_cal.iter().enumerate() {
            let start = (b * n_cal.len() + c) * per_cell;
            let block = &records[start..start + per_cell];
            for (slot, method) in Method::ALL.into_iter().enumerate() {
                let rows: Vec<&RunRecord> = block.iter().filter(|r| r.method == method).collect();
                let col = |f: fn(&RunRecord) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
                cells.push(CellSummary {
                    method,
                    k: budget.value(),
                    n_cal: n,
                    runs: rows.len(),
                    metrics: [
                        MetricSummary::from_values("emr", col(|r| r.emr)),
                        MetricSummary::from_values("tmr", col(|r| r.tmr)),
                        MetricSummary::from_values("smd", col(|r| r.smd)),
                        MetricSummary::from_values("brier", col(|r| r.brier)),
                    ],
                    reliability: reliability[b][c][slot].into(),
                });
            }
        }
    }
    AggregateReport { cells }
}

pub fn write_runs_csv<W: Write>(mut out: W, records: &[RunRecord]) -> Result<()> {
    writeln!(out, "{RUNS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run, r.method, r.k, r.n_cal, r.emr, r.tmr, r.smd, r.brier
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(mut out: W, report: &AggregateReport) -> Result<()> {
    writeln!(out, "{AGGREGATE_CSV_HEADER}")?;
    for cell in &report.cells {
        for m in &cell.metrics {
            let [q05, q25, q50, q75, q95] = m.quantiles;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                cell.method, cell.k, cell.n_cal, m.metric, m.mean, m.std, q05, q25, q50, q75, q95
            )?;
        }
    }
    Ok(())
}
