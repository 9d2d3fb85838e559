//! Command-line front end: `generate`, `run`, `sweep` and `validate`.
//!
//! Settings come from an optional JSON config file; flags override file
//! values. The seed falls back to the `BCP_SEED` environment variable when
//! neither a flag nor the file sets it.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{BcpError, Result};
use crate::harness::{
    run_experiment, run_experiment_on_dataset, write_aggregate_csv, write_runs_csv, ExperimentConfig,
    ExperimentOutput, ExperimentParams, SplitMode, AGGREGATE_CSV_HEADER,
};
use crate::scenario::{
    generate_dataset, read_dataset_csv, write_dataset_csv, DataSource, OfdmScenarioConfig,
    SyntheticDetectorConfig, WifiSymbols,
};
use crate::validate::{run_suite, Fault};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

pub const SEED_ENV: &str = "BCP_SEED";
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    #[default]
    Synthetic,
    Ofdm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub betas: Vec<f64>,
    /// Synthetic source only; empty keeps the configured temperature.
    pub temperatures: Vec<f64>,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            betas: vec![0.5, 1.0, 2.0],
            temperatures: vec![],
        }
    }
}

/// The JSON config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub source: SourceKind,
    pub synthetic: SyntheticDetectorConfig,
    pub ofdm: OfdmScenarioConfig,
    pub experiment: ExperimentParams,
    pub sweep: SweepParams,
    /// Dataset size for `generate`.
    pub n_per_label: usize,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// `None` uses every core.
    pub workers: Option<usize>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            source: SourceKind::Synthetic,
            synthetic: SyntheticDetectorConfig::default(),
            ofdm: OfdmScenarioConfig::default(),
            experiment: ExperimentParams::default(),
            sweep: SweepParams::default(),
            n_per_label: 3000,
            seed: None,
            out_dir: PathBuf::from("bcp-out"),
            workers: None,
        }
    }
}

impl CliConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BcpError::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| BcpError::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn data_source(&self) -> DataSource {
        match self.source {
            SourceKind::Synthetic => DataSource::Synthetic(self.synthetic.clone()),
            SourceKind::Ofdm => DataSource::Ofdm(self.ofdm.clone()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            params: self.experiment.clone(),
            source: self.data_source(),
            master_seed: self.seed(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bcp-nbi", version, about = "Budgeted prediction sets with conformal miscoverage estimates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a balanced dataset of detector outputs as CSV.
    Generate(GenerateArgs),
    /// Run the Monte Carlo grid and write runs.csv, aggregate.csv, report.json.
    Run(RunArgs),
    /// Repeat `run` over a grid of score exponents and temperatures.
    Sweep(SweepArgs),
    /// Run the deterministic invariant suite.
    Validate(ValidateArgs),
}

/// Source and seed options shared by every data-producing command.
#[derive(Debug, Default, Args)]
pub struct SourceArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub source: Option<SourceKind>,

    #[arg(long, help_heading = "Synthetic source")]
    pub num_subcarriers: Option<usize>,
    #[arg(long, help_heading = "Synthetic source")]
    pub margin: Option<f64>,
    #[arg(long, help_heading = "Synthetic source")]
    pub confusion_scale: Option<f64>,
    #[arg(long, help_heading = "Synthetic source")]
    pub temperature: Option<f64>,

    #[arg(long, allow_hyphen_values = true, help_heading = "OFDM source")]
    pub snr_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true, help_heading = "OFDM source")]
    pub sir_db: Option<f64>,
    #[arg(long, help_heading = "OFDM source")]
    pub num_bins: Option<usize>,
    #[arg(long, help_heading = "OFDM source")]
    pub num_symbols: Option<usize>,
    #[arg(long, value_delimiter = ',', help_heading = "OFDM source")]
    pub monitored_bins: Option<Vec<usize>>,
    #[arg(long, help_heading = "OFDM source")]
    pub assumed_noise_power: Option<f64>,
    #[arg(long, value_parser = parse_wifi_symbols, help_heading = "OFDM source")]
    pub wifi_symbols: Option<WifiSymbols>,
}

fn parse_wifi_symbols(s: &str) -> std::result::Result<WifiSymbols, String> {
    match s {
        "qpsk" => Ok(WifiSymbols::Qpsk),
        "gaussian" => Ok(WifiSymbols::Gaussian),
        other => Err(format!("unknown symbol model `{other}` (qpsk, gaussian)")),
    }
}

#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub n_runs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub n_cal: Option<Vec<usize>>,
    #[arg(long)]
    pub n_te: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<f64>>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, conflicts_with = "costs")]
    pub interference_cost: Option<f64>,
    /// Per-label costs, `S + 2` comma-separated values.
    #[arg(long, value_delimiter = ',')]
    pub costs: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitMode>,
    #[arg(long)]
    pub pool_per_label: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Use detector outputs from a dataset CSV instead of a generated source.
    #[arg(long, conflicts_with_all = ["split", "pool_per_label"])]
    pub dataset: Option<PathBuf>,
}

fn parse_split(s: &str) -> std::result::Result<SplitMode, String> {
    match s {
        "regenerate" => Ok(SplitMode::Regenerate),
        "pooled" => Ok(SplitMode::Pooled),
        other => Err(format!("unknown split mode `{other}` (regenerate, pooled)")),
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub n_per_label: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', conflicts_with = "temperature")]
    pub temperatures: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    /// Inject a fault to confirm the suite fails (none, e-value, cmax, lambda).
    #[arg(long, default_value = "none")]
    pub corrupt: Fault,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| BcpError::config(SEED_ENV, format!("`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SourceArgs {
    fn synthetic_flags(&self) -> Vec<&'static str> {
        [
            ("--num-subcarriers", self.num_subcarriers.is_some()),
            ("--margin", self.margin.is_some()),
            ("--confusion-scale", self.confusion_scale.is_some()),
            ("--temperature", self.temperature.is_some()),
        ]
        .into_iter()
        .filter_map(|(n, on)| on.then_some(n))
        .collect()
    }

    fn ofdm_flags(&self) -> Vec<&'static str> {
        [
            ("--snr-db", self.snr_db.is_some()),
            ("--sir-db", self.sir_db.is_some()),
            ("--num-bins", self.num_bins.is_some()),
            ("--num-symbols", self.num_symbols.is_some()),
            ("--monitored-bins", self.monitored_bins.is_some()),
            ("--assumed-noise-power", self.assumed_noise_power.is_some()),
            ("--wifi-symbols", self.wifi_symbols.is_some()),
        ]
        .into_iter()
        .filter_map(|(n, on)| on.then_some(n))
        .collect()
    }

    /// Load the config file (if any), then apply flags and the seed fallback.
    pub fn resolve(&self) -> Result<CliConfig> {
        let mut cfg = match &self.config {
            Some(p) => CliConfig::load(p)?,
            None => CliConfig::default(),
        };
        set(&mut cfg.source, self.source);
        let stray = match cfg.source {
            SourceKind::Synthetic => self.ofdm_flags(),
            SourceKind::Ofdm => self.synthetic_flags(),
        };
        if let Some(flag) = stray.first() {
            return Err(BcpError::config(
                *flag,
                format!("does not apply to the {:?} source", cfg.source).to_lowercase(),
            ));
        }
        let s = &mut cfg.synthetic;
        set(&mut s.num_subcarriers, self.num_subcarriers);
        set(&mut s.margin, self.margin);
        set(&mut s.confusion_scale, self.confusion_scale);
        set(&mut s.temperature, self.temperature);
        let o = &mut cfg.ofdm;
        set(&mut o.snr_db, self.snr_db);
        set(&mut o.sir_db, self.sir_db);
        set(&mut o.num_bins, self.num_bins);
        set(&mut o.num_symbols, self.num_symbols);
        set(&mut o.monitored_bins, self.monitored_bins.clone());
        if self.assumed_noise_power.is_some() {
            o.assumed_noise_power = self.assumed_noise_power;
        }
        set(&mut o.wifi_symbols, self.wifi_symbols);

        cfg.seed = match self.seed.or(cfg.seed) {
            Some(s) => Some(s),
            None => Some(env_seed()?.unwrap_or(DEFAULT_SEED)),
        };
        cfg.data_source().validate()?;
        Ok(cfg)
    }
}

impl ExperimentArgs {
    fn apply(&self, cfg: &mut CliConfig) -> Result<()> {
        let e = &mut cfg.experiment;
        set(&mut e.n_runs, self.n_runs);
        set(&mut e.n_cal, self.n_cal.clone());
        set(&mut e.n_te, self.n_te);
        set(&mut e.budgets, self.budgets.clone());
        set(&mut e.beta, self.beta);
        if let Some(c) = self.interference_cost {
            e.interference_cost = c;
            e.costs = None;
        }
        if self.costs.is_some() {
            e.costs = self.costs.clone();
        }
        set(&mut e.split, self.split);
        set(&mut e.pool_per_label, self.pool_per_label);
        set(&mut cfg.out_dir, self.out_dir.clone());
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        if cfg.workers == Some(0) {
            return Err(BcpError::config("workers", "must be at least 1"));
        }
        cfg.experiment_config().validate()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Write the dataset CSV and return the number of rows.
pub fn cmd_generate(cfg: &CliConfig, out: &Path) -> Result<usize> {
    let source = cfg.data_source();
    let space = source.label_space()?;
    let data = generate_dataset(&source, cfg.n_per_label, cfg.seed())?;
    let mut w = create(out)?;
    write_dataset_csv(&mut w, &space, &data)?;
    w.flush()?;
    Ok(data.len())
}

fn reliability_json(out: &ExperimentOutput) -> serde_json::Value {
    let cells: Vec<_> = out
        .aggregate
        .cells
        .iter()
        .map(|c| {
            json!({
                "method": c.method,
                "K": c.k,
                "n_cal": c.n_cal,
                "mean": c.reliability.mean,
                "stderr": c.reliability.stderr,
                "pairs": c.reliability.pairs,
                "check": if c.reliability.pass { "PASS" } else { "FAIL" },
            })
        })
        .collect();
    serde_json::Value::Array(cells)
}

fn write_outputs(dir: &Path, cfg: &CliConfig, dataset: Option<&Path>, out: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = create(&dir.join("runs.csv"))?;
    write_runs_csv(&mut w, &out.records)?;
    w.flush()?;
    let mut w = create(&dir.join("aggregate.csv"))?;
    write_aggregate_csv(&mut w, &out.aggregate)?;
    w.flush()?;
    let pass = out.aggregate.bcp_reliability_pass();
    let report = json!({
        "config": cfg,
        "dataset": dataset,
        "reliability": reliability_json(out),
        "bcp_reliability_check": if pass { "PASS" } else { "FAIL" },
    });
    let mut w = create(&dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn execute(cfg: &CliConfig, dataset: Option<&Path>) -> Result<ExperimentOutput> {
    match dataset {
        None => run_experiment(&cfg.experiment_config(), cfg.workers),
        Some(path) => {
            let file = File::open(path).map_err(|e| {
                BcpError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
            })?;
            let (space, data) = read_dataset_csv(BufReader::new(file))?;
            run_experiment_on_dataset(&cfg.experiment, space, &data, cfg.seed(), cfg.workers)
        }
    }
}

/// Run the experiment grid and write `runs.csv`, `aggregate.csv` and
/// `report.json` into `cfg.out_dir`.
pub fn cmd_run(cfg: &CliConfig, dataset: Option<&Path>) -> Result<ExperimentOutput> {
    let out = execute(cfg, dataset)?;
    write_outputs(&cfg.out_dir, cfg, dataset, &out)?;
    Ok(out)
}

/// One `run` per (beta, temperature) point, each in its own subdirectory,
/// plus a combined `sweep.csv`.
pub fn cmd_sweep(cfg: &CliConfig, dataset: Option<&Path>) -> Result<Vec<(f64, Option<f64>, ExperimentOutput)>> {
    if cfg.sweep.betas.is_empty() {
        return Err(BcpError::config("sweep.betas", "need at least one value"));
    }
    if !cfg.sweep.temperatures.is_empty() && (cfg.source != SourceKind::Synthetic || dataset.is_some()) {
        return Err(BcpError::config(
            "sweep.temperatures",
            "temperature sweeps need the synthetic source",
        ));
    }
    let temps: Vec<Option<f64>> = if cfg.sweep.temperatures.is_empty() {
        vec![None]
    } else {
        cfg.sweep.temperatures.iter().copied().map(Some).collect()
    };
    fs::create_dir_all(&cfg.out_dir)?;
    let mut combined = create(&cfg.out_dir.join("sweep.csv"))?;
    writeln!(combined, "beta,temperature,{AGGREGATE_CSV_HEADER}")?;
    let mut results = Vec::new();
    for &beta in &cfg.sweep.betas {
        for &temp in &temps {
            let mut point = cfg.clone();
            point.experiment.beta = beta;
            if let Some(t) = temp {
                point.synthetic.temperature = t;
            }
            let t_label = temp.map_or_else(|| "na".to_string(), |t| t.to_string());
            point.out_dir = cfg.out_dir.join(format!("beta_{beta}_temp_{t_label}"));
            let out = cmd_run(&point, dataset)?;
            let mut buf = Vec::new();
            write_aggregate_csv(&mut buf, &out.aggregate)?;
            let text = String::from_utf8(buf).expect("ascii csv");
            for line in text.lines().skip(1) {
                writeln!(combined, "{beta},{t_label},{line}")?;
            }
            results.push((beta, temp, out));
        }
    }
    combined.flush()?;
    Ok(results)
}

pub fn exit_code(err: &BcpError) -> i32 {
    match err {
        BcpError::Config { .. } | BcpError::Json(_) => EXIT_CONFIG,
        _ => EXIT_DATA,
    }
}

fn print_summary(out: &ExperimentOutput) {
    println!("method,K,n_cal,mean_emr,mean_tmr,reliability,stderr,check");
    for c in &out.aggregate.cells {
        println!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{}",
            c.method,
            c.k,
            c.n_cal,
            c.metric("emr").mean,
            c.metric("tmr").mean,
            c.reliability.mean,
            c.reliability.stderr,
            if c.reliability.pass { "PASS" } else { "FAIL" }
        );
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate(args) => {
            let mut cfg = args.source.resolve()?;
            set(&mut cfg.n_per_label, args.n_per_label);
            if cfg.n_per_label == 0 {
                return Err(BcpError::config("n_per_label", "must be at least 1"));
            }
            let rows = cmd_generate(&cfg, &args.out)?;
            println!("{rows}");
            Ok(EXIT_OK)
        }
        Command::Run(args) => {
            let mut cfg = args.source.resolve()?;
            args.experiment.apply(&mut cfg)?;
            let out = cmd_run(&cfg, args.experiment.dataset.as_deref())?;
            print_summary(&out);
            Ok(EXIT_OK)
        }
        Command::Sweep(args) => {
            let mut cfg = args.source.resolve()?;
            args.experiment.apply(&mut cfg)?;
            set(&mut cfg.sweep.betas, args.betas);
            set(&mut cfg.sweep.temperatures, args.temperatures);
            let results = cmd_sweep(&cfg, args.experiment.dataset.as_deref())?;
            for (beta, temp, out) in &results {
                println!(
                    "beta={beta} temperature={} bcp_reliability={}",
                    temp.map_or_else(|| "-".into(), |t| t.to_string()),
                    if out.aggregate.bcp_reliability_pass() { "PASS" } else { "FAIL" }
                );
            }
            Ok(EXIT_OK)
        }
        Command::Validate(args) => {
            let seed = match args.seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(DEFAULT_SEED),
            };
            let report = run_suite(seed, args.instances, args.corrupt)?;
            for c in &report.checks {
                println!(
                    "{:<36} {:>6} instances {:>6} violations  max_err={:.3e}  {:.2}s  {}",
                    c.name,
                    c.instances,
                    c.violations,
                    c.max_error,
                    c.seconds,
                    if c.passed() { "PASS" } else { "FAIL" }
                );
            }
            Ok(if report.passed() { EXIT_OK } else { EXIT_VALIDATION })
        }
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
