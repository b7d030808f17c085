//! Command-line experiment runner: instance and config files in, reports,
//! CSV tables and a run manifest out.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags, unreadable or
//! invalid config, missing instance file), 1 when a computation fails. Failures
//! also print a one-line JSON error record on stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithm::{AllocationAlgorithm, Constant, OptimalBruteforce, RandomSerialDictator, SerialDictator};
use crate::assignment::{check_certificate, check_envy_free, solve_welfare_lp, AssignmentProblem, AssignmentSolution};
use crate::ca::{CaAlgorithm, Resolver};
use crate::error::{Error, Result};
use crate::interim::{interim_table, InterimMode, InterimTable};
use crate::mechanism::{AlgorithmMechanism, Mechanism};
use crate::model::file::InstanceFile;
use crate::model::MechanismInstance;
use crate::reduction_rr::{lower_bound_instance, meta_tables_from_interim, LadderObjective, MetaTables};
use crate::reduction_sw::{tables_from_interim, DecoupledMechanism, ReductionTables};
use crate::rng::derive_seed;
use crate::scalar::{Rational, Scalar};
use crate::verify::{certify, mean_and_error, optimal_welfare, performance, performance_monte_carlo, IncentiveReport};

pub const CSV_SCHEMA: &str = "1";
const DEFAULT_C: f64 = 10.0;

#[derive(Parser, Debug)]
#[command(
    name = "bicforge",
    version,
    about = "Bayesian mechanisms from allocation algorithms via envy-free assignments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the `assignment` problem of an instance file and certify it.
    SolveAssignment {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Welfare reduction: build tables, then verify the mechanism.
    ReduceSw(Common),
    /// Revenue or residual-surplus reduction for downward-closed instances.
    ReduceRr {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "revenue")]
        objective: Objective,
    },
    /// LP rounding for combinatorial auctions, plugged into the welfare reduction.
    CaExperiment {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        replications: usize,
    },
    /// Incentive and performance report for a reduction (or the bare algorithm).
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "sw")]
        reduction: Reduction,
    },
    /// Revenue reduction on the one-item instance with geometric values.
    LowerBoundDemo {
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, value_enum, default_value = "revenue")]
        objective: Objective,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "serial-dictator")]
    algorithm: String,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeName,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Std/mean bound for relative-error estimation.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "fair")]
    resolver: String,
    /// Monte Carlo samples when exact enumeration is out of reach.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Exact,
    Relative,
    Absolute,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    Sw,
    Revenue,
    Surplus,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Revenue,
    Surplus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: PathBuf,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default = "default_reduction")]
    pub reduction: Reduction,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default = "default_resolver")]
    pub resolver: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_cache")]
    pub cache: bool,
}

fn default_algorithm() -> String {
    "serial-dictator".into()
}
fn default_reduction() -> Reduction {
    Reduction::Sw
}
fn default_mode() -> ModeName {
    ModeName::Exact
}
fn default_resolver() -> String {
    "fair".into()
}
fn default_replications() -> usize {
    1
}
fn default_samples() -> usize {
    20_000
}
fn default_cache() -> bool {
    true
}

impl ExperimentConfig {
    fn from_common(common: &Common, reduction: Reduction, replications: usize) -> Self {
        ExperimentConfig {
            instance: common.instance.clone(),
            algorithm: common.algorithm.clone(),
            reduction,
            mode: common.mode,
            epsilon: common.epsilon,
            c: common.c,
            resolver: common.resolver.clone(),
            seed: common.seed,
            replications,
            samples: common.samples,
            out: common.out.clone(),
            cache: !common.no_cache,
        }
    }

    pub fn read(path: &Path) -> std::result::Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.instance.is_relative() {
            config.instance = base.join(&config.instance);
        }
        if let Some(out) = &config.out {
            if out.is_relative() {
                config.out = Some(base.join(out));
            }
        }
        Ok(config)
    }

    fn validate(&self) -> std::result::Result<(), CliError> {
        if !self.instance.is_file() {
            return Err(CliError::Usage(format!(
                "instance file {} not found",
                self.instance.display()
            )));
        }
        if self.mode != ModeName::Exact {
            match self.epsilon {
                Some(e) if e > 0.0 && e < 1.0 => {}
                other => {
                    return Err(CliError::Usage(format!(
                        "--epsilon in (0, 1) is required for {:?} mode, got {other:?}",
                        self.mode
                    )))
                }
            }
        }
        if self.replications == 0 {
            return Err(CliError::Usage("replications must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Compute(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }

    fn record(&self) -> serde_json::Value {
        match self {
            CliError::Usage(msg) => serde_json::json!({"error": "usage", "message": msg}),
            CliError::Compute(e) => serde_json::json!({"error": e.kind(), "message": e.to_string()}),
        }
    }
}

/// `%g`-style rendering with 12 significant digits.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format");
    let exponent: i32 = exponent.parse().expect("exponent");
    if (-5..12).contains(&exponent) {
        let decimals = (11 - exponent).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa), exponent)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn opt12(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_else(|| "nan".into())
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn configure_threads() {
    if let Some(n) = std::env::var("BICFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn write_manifest(dir: &Path, command: &str, config: &serde_json::Value, seed: u64) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": "bicforge",
        "version": env!("CARGO_PKG_VERSION"),
        "git": git_describe(),
        "command": command,
        "seed": seed,
        "config": config,
    });
    write_file(
        dir,
        "manifest.json",
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )
}

pub fn build_algorithm(
    name: &str,
    instance: &MechanismInstance,
    epsilon: Option<f64>,
    resolver: &str,
) -> Result<Box<dyn AllocationAlgorithm>> {
    Ok(match name {
        "serial-dictator" => Box::new(SerialDictator::new(instance)?),
        "random-serial-dictator" => Box::new(RandomSerialDictator::new(instance)?),
        "optimal-bruteforce" => Box::new(OptimalBruteforce::new(instance)?),
        "constant" => Box::new(Constant::null(instance)?),
        "ca-lp-round" => Box::new(CaAlgorithm::new(
            instance,
            epsilon.unwrap_or(0.1),
            Resolver::parse(resolver)?,
        )?),
        other => {
            return Err(Error::Unknown {
                kind: "algorithm",
                name: other.into(),
            })
        }
    })
}

/// Reduction tables of one replication.
pub enum Tables {
    None,
    Sw(ReductionTables),
    Meta(MetaTables),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub exact: bool,
    pub welfare: f64,
    pub revenue: f64,
    pub residual_surplus: f64,
    pub welfare_se: f64,
    pub max_regret: Option<f64>,
    pub ir_ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub replications: usize,
    pub welfare: MetricSummary,
    pub revenue: MetricSummary,
    pub residual_surplus: MetricSummary,
    pub max_regret: Option<f64>,
    pub ir_ok: Option<bool>,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub instance: MechanismInstance,
    pub algorithm: Box<dyn AllocationAlgorithm>,
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> std::result::Result<Self, CliError> {
        config.validate()?;
        let file = InstanceFile::read(&config.instance).map_err(|e| match e {
            Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", config.instance.display())),
            other => CliError::Compute(other),
        })?;
        let instance = file.to_instance()?;
        let algorithm =
            build_algorithm(&config.algorithm, &instance, config.epsilon, &config.resolver).map_err(|e| match e {
                Error::Unknown { .. } => CliError::Usage(e.to_string()),
                other => CliError::Compute(other),
            })?;
        Ok(Experiment {
            config,
            instance,
            algorithm,
        })
    }

    pub fn from_parts(
        config: ExperimentConfig,
        instance: MechanismInstance,
        algorithm: Box<dyn AllocationAlgorithm>,
    ) -> Self {
        Experiment {
            config,
            instance,
            algorithm,
        }
    }

    pub fn interim_mode(&self) -> InterimMode {
        match self.config.mode {
            ModeName::Exact => InterimMode::Exact,
            ModeName::Absolute => InterimMode::Absolute {
                epsilon: self.config.epsilon.unwrap_or(0.1),
            },
            ModeName::Relative => {
                let epsilon = self.config.epsilon.unwrap_or(0.1);
                let c = match (self.config.c, self.algorithm_bound()) {
                    (Some(c), _) => c,
                    (None, Some(bound)) => bound,
                    (None, None) => {
                        log::warn!("no std/mean bound given for relative estimation; using c = {DEFAULT_C}");
                        DEFAULT_C
                    }
                };
                InterimMode::Relative { epsilon, c }
            }
        }
    }

    fn algorithm_bound(&self) -> Option<f64> {
        if self.config.algorithm != "ca-lp-round" {
            return None;
        }
        let n = self.instance.agents() as f64;
        let m = self.instance.items().unwrap_or(1) as f64;
        let l = self.instance.types() as f64;
        Some((4.0 * n * m * l / self.config.epsilon.unwrap_or(0.1)).sqrt())
    }

    fn cache_path(&self, mode: &InterimMode, seed: u64) -> Result<Option<PathBuf>> {
        if !self.config.cache || matches!(mode, InterimMode::Exact) {
            return Ok(None);
        }
        let dir = std::env::var_os("BICFORGE_CACHE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("bicforge-cache"));
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(&self.instance)?.as_bytes());
        hasher.update(format!(
            "|{}|{}|{:?}|{}|{}",
            self.algorithm.name(),
            serde_json::to_string(mode)?,
            self.config.epsilon,
            seed,
            env!("CARGO_PKG_VERSION")
        ));
        Ok(Some(dir.join(format!("{}.json", hex::encode(hasher.finalize())))))
    }

    pub fn interim(&self, seed: u64) -> Result<InterimTable> {
        let mode = self.interim_mode();
        let path = self.cache_path(&mode, seed)?;
        if let Some(path) = &path {
            if let Ok(text) = fs::read_to_string(path) {
                if let Ok(table) = serde_json::from_str::<InterimTable>(&text) {
                    log::info!("interim cache hit {}", path.display());
                    return Ok(table);
                }
            }
        }
        let table = interim_table(&self.instance, self.algorithm.as_ref(), mode, seed)?;
        if let Some(path) = &path {
            if let Some(dir) = path.parent() {
                if fs::create_dir_all(dir).is_ok() {
                    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
                    if fs::write(&tmp, serde_json::to_vec(&table)?).is_ok() {
                        let _ = fs::rename(&tmp, path);
                    }
                }
            }
        }
        Ok(table)
    }

    pub fn replication_seed(&self, replication: usize) -> u64 {
        derive_seed(self.config.seed, &[replication as u64])
    }

    pub fn tables(&self, replication: usize) -> Result<Tables> {
        let seed = derive_seed(self.replication_seed(replication), &[1]);
        Ok(match self.config.reduction {
            Reduction::None => Tables::None,
            Reduction::Sw => Tables::Sw(tables_from_interim(&self.instance, &self.interim(seed)?)?),
            Reduction::Revenue => Tables::Meta(meta_tables_from_interim(
                &self.instance,
                &self.interim(seed)?,
                LadderObjective::Revenue,
            )?),
            Reduction::Surplus => Tables::Meta(meta_tables_from_interim(
                &self.instance,
                &self.interim(seed)?,
                LadderObjective::Surplus,
            )?),
        })
    }

    pub fn mechanism<'a>(&'a self, tables: &'a Tables) -> Box<dyn Mechanism + 'a> {
        let algorithm = self.algorithm.as_ref();
        match tables {
            Tables::None => Box::new(AlgorithmMechanism { algorithm }),
            Tables::Sw(t) => Box::new(DecoupledMechanism { tables: t, algorithm }),
            Tables::Meta(t) => Box::new(t.mechanism(algorithm)),
        }
    }

    /// Exact certification and performance when enumerable, Monte Carlo
    /// performance otherwise.
    pub fn measure(
        &self,
        mechanism: &dyn Mechanism,
        replication: usize,
    ) -> Result<(ReplicationRecord, Option<IncentiveReport>)> {
        let seed = self.replication_seed(replication);
        let exact = certify(&self.instance, mechanism, 0.0)
            .and_then(|report| Ok((report, performance(&self.instance, mechanism)?)));
        match exact {
            Ok((report, perf)) => {
                let ir_ok = report.ir.as_ref().map(|r| r.ok);
                Ok((
                    ReplicationRecord {
                        replication,
                        seed,
                        exact: true,
                        welfare: perf.welfare,
                        revenue: perf.revenue,
                        residual_surplus: perf.residual_surplus,
                        welfare_se: 0.0,
                        max_regret: Some(report.max_regret),
                        ir_ok,
                    },
                    Some(report),
                ))
            }
            Err(Error::NotEnumerable(_)) | Err(Error::EnumerationTooLarge { .. }) => {
                let est =
                    performance_monte_carlo(&self.instance, mechanism, self.config.samples, derive_seed(seed, &[2]))?;
                Ok((
                    ReplicationRecord {
                        replication,
                        seed,
                        exact: false,
                        welfare: est.mean.welfare,
                        revenue: est.mean.revenue,
                        residual_surplus: est.mean.residual_surplus,
                        welfare_se: est.standard_error.welfare,
                        max_regret: None,
                        ir_ok: None,
                    },
                    None,
                ))
            }
            Err(e) => Err(e),
        }
    }

    pub fn replicate(&self, replication: usize) -> Result<ReplicationRecord> {
        let tables = self.tables(replication)?;
        let mechanism = self.mechanism(&tables);
        Ok(self.measure(mechanism.as_ref(), replication)?.0)
    }

    pub fn run(&self) -> Result<Vec<ReplicationRecord>> {
        (0..self.config.replications)
            .into_par_iter()
            .map(|r| self.replicate(r))
            .collect()
    }
}

pub fn metrics_csv(records: &[ReplicationRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "schema",
        "replication",
        "seed",
        "exact",
        "welfare",
        "revenue",
        "residual_surplus",
        "welfare_se",
        "max_regret",
        "ir_ok",
    ])
    .map_err(io)?;
    for r in records {
        w.write_record([
            CSV_SCHEMA.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            r.exact.to_string(),
            fmt12(r.welfare),
            fmt12(r.revenue),
            fmt12(r.residual_surplus),
            fmt12(r.welfare_se),
            opt12(r.max_regret),
            r.ir_ok.map(|b| b.to_string()).unwrap_or_else(|| "na".into()),
        ])
        .map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn summarize(records: &[ReplicationRecord]) -> RunSummary {
    let metric = |f: fn(&ReplicationRecord) -> f64| {
        let (mean, standard_error) = mean_and_error(records.iter().map(f));
        MetricSummary { mean, standard_error }
    };
    let regrets: Option<Vec<f64>> = records.iter().map(|r| r.max_regret).collect();
    let irs: Option<Vec<bool>> = records.iter().map(|r| r.ir_ok).collect();
    RunSummary {
        replications: records.len(),
        welfare: metric(|r| r.welfare),
        revenue: metric(|r| r.revenue),
        residual_surplus: metric(|r| r.residual_surplus),
        max_regret: regrets.map(|v| v.into_iter().fold(0.0, f64::max)),
        ir_ok: irs.map(|v| v.into_iter().all(|b| b)),
    }
}

fn print_summary(summary: &RunSummary) {
    println!("replications: {}", summary.replications);
    println!(
        "welfare: {} (se {})",
        fmt12(summary.welfare.mean),
        fmt12(summary.welfare.standard_error)
    );
    println!(
        "revenue: {} (se {})",
        fmt12(summary.revenue.mean),
        fmt12(summary.revenue.standard_error)
    );
    println!(
        "residual_surplus: {} (se {})",
        fmt12(summary.residual_surplus.mean),
        fmt12(summary.residual_surplus.standard_error)
    );
    println!("max_regret: {}", opt12(summary.max_regret));
    println!(
        "ir_ok: {}",
        summary.ir_ok.map(|b| b.to_string()).unwrap_or_else(|| "na".into())
    );
}

/// Runs a config end to end and writes manifest, CSV and summary.
pub fn run_config(config: ExperimentConfig, command: &str) -> std::result::Result<RunSummary, CliError> {
    let experiment = Experiment::load(config)?;
    let records = experiment.run()?;
    let summary = summarize(&records);
    if let Some(out) = &experiment.config.out {
        write_manifest(
            out,
            command,
            &serde_json::to_value(&experiment.config).map_err(Error::from)?,
            experiment.config.seed,
        )?;
        write_file(out, "metrics.csv", &metrics_csv(&records)?)?;
        write_file(
            out,
            "summary.json",
            serde_json::to_string_pretty(&summary).map_err(Error::from)?.as_bytes(),
        )?;
    }
    print_summary(&summary);
    Ok(summary)
}

fn solve_assignment(instance: &Path, out: Option<&Path>) -> std::result::Result<(), CliError> {
    if !instance.is_file() {
        return Err(CliError::Usage(format!(
            "instance file {} not found",
            instance.display()
        )));
    }
    let file = InstanceFile::read(instance)?;
    let spec = file
        .assignment
        .as_ref()
        .ok_or_else(|| CliError::Usage("instance file has no `assignment` section".into()))?;
    let problem: AssignmentProblem<Rational> = spec.to_problem()?;
    let solution = solve_welfare_lp(&problem)?;
    let show = |v: &Rational| {
        if file.exact {
            v.to_string()
        } else {
            fmt12(v.to_f64_lossy())
        }
    };
    let row = |values: &[Rational]| values.iter().map(show).collect::<Vec<_>>().join(" ");
    println!("objective: {}", show(&solution.objective));
    for (s, x) in solution.x.iter().enumerate() {
        println!("x[{s}]: {}", row(x));
    }
    println!("u: {}", row(&solution.u));
    println!("p: {}", row(&solution.p));
    let cert = check_certificate(&problem, &solution);
    println!(
        "certificate: primal_ok={} dual_ok={} cs_ok={} market_clearing={}",
        cert.primal_ok, cert.dual_ok, cert.cs_ok, cert.market_clearing
    );
    println!("envy_free: {}", check_envy_free(&problem, &solution).ok);
    if let Some(out) = out {
        let as_f64: AssignmentSolution<f64> = solution.map(|v| v.to_f64_lossy());
        let exact: AssignmentSolution<String> = AssignmentSolution {
            x: solution
                .x
                .iter()
                .map(|r| r.iter().map(|v| v.to_string()).collect())
                .collect(),
            u: solution.u.iter().map(|v| v.to_string()).collect(),
            p: solution.p.iter().map(|v| v.to_string()).collect(),
            objective: solution.objective.to_string(),
        };
        let body = serde_json::json!({"solution": as_f64, "exact": exact, "certificate": {
            "primal_ok": cert.primal_ok, "dual_ok": cert.dual_ok, "cs_ok": cert.cs_ok,
            "market_clearing": cert.market_clearing}});
        write_manifest(out, "solve-assignment", &serde_json::json!({"instance": instance}), 0)?;
        write_file(
            out,
            "solution.json",
            serde_json::to_string_pretty(&body).map_err(Error::from)?.as_bytes(),
        )?;
    }
    Ok(())
}

fn ladder_csv(tables: &MetaTables) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "schema",
        "agent",
        "level",
        "reserve",
        "revenue",
        "residual_surplus",
        "chosen",
    ])
    .map_err(io)?;
    for (i, ladder) in tables.ladders.iter().enumerate() {
        for l in &ladder.levels {
            w.write_record([
                CSV_SCHEMA.to_string(),
                i.to_string(),
                l.level.to_string(),
                fmt12(l.reserve),
                fmt12(l.revenue),
                fmt12(l.residual_surplus),
                (ladder.chosen_level == Some(l.level)).to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn reduce(common: &Common, reduction: Reduction, command: &str) -> std::result::Result<(), CliError> {
    let config = ExperimentConfig::from_common(common, reduction, 1);
    let experiment = Experiment::load(config)?;
    let tables = experiment.tables(0)?;
    let mechanism = experiment.mechanism(&tables);
    let (record, _) = experiment.measure(mechanism.as_ref(), 0)?;
    if let Tables::Meta(meta) = &tables {
        println!("granularity: {}", fmt12(meta.delta));
        println!("predicted_revenue: {}", fmt12(meta.predicted_revenue()));
        println!("predicted_residual_surplus: {}", fmt12(meta.predicted_surplus()));
        for (i, ladder) in meta.ladders.iter().enumerate() {
            let levels: Vec<String> = ladder
                .levels
                .iter()
                .map(|l| {
                    format!(
                        "k={} revenue={} surplus={}",
                        l.level,
                        fmt12(l.revenue),
                        fmt12(l.residual_surplus)
                    )
                })
                .collect();
            println!("ladder[{i}]: chosen={:?} {}", ladder.chosen_level, levels.join("; "));
        }
    }
    let summary = summarize(std::slice::from_ref(&record));
    print_summary(&summary);
    if let Some(out) = &experiment.config.out {
        write_manifest(
            out,
            command,
            &serde_json::to_value(&experiment.config).map_err(Error::from)?,
            experiment.config.seed,
        )?;
        let tables_json = match &tables {
            Tables::None => serde_json::Value::Null,
            Tables::Sw(t) => serde_json::to_value(t).map_err(Error::from)?,
            Tables::Meta(t) => serde_json::to_value(t).map_err(Error::from)?,
        };
        write_file(
            out,
            "tables.json",
            serde_json::to_string_pretty(&tables_json)
                .map_err(Error::from)?
                .as_bytes(),
        )?;
        write_file(out, "metrics.csv", &metrics_csv(&[record])?)?;
        if let Tables::Meta(meta) = &tables {
            write_file(out, "ladder.csv", &ladder_csv(meta)?)?;
        }
    }
    Ok(())
}

fn verify_command(common: &Common, reduction: Reduction) -> std::result::Result<(), CliError> {
    let config = ExperimentConfig::from_common(common, reduction, 1);
    let experiment = Experiment::load(config)?;
    let tables = experiment.tables(0)?;
    let mechanism = experiment.mechanism(&tables);
    let (record, report) = experiment.measure(mechanism.as_ref(), 0)?;
    let algorithm_welfare = experiment
        .measure(
            &AlgorithmMechanism {
                algorithm: experiment.algorithm.as_ref(),
            },
            0,
        )?
        .0
        .welfare;
    println!("mechanism: {}", mechanism.name());
    println!("algorithm_welfare: {}", fmt12(algorithm_welfare));
    match optimal_welfare(&experiment.instance) {
        Ok(opt) => println!("optimal_welfare: {}", fmt12(opt)),
        Err(e) => println!("optimal_welfare: na ({e})"),
    }
    print_summary(&summarize(std::slice::from_ref(&record)));
    if let Some(out) = &experiment.config.out {
        write_manifest(
            out,
            "verify",
            &serde_json::to_value(&experiment.config).map_err(Error::from)?,
            experiment.config.seed,
        )?;
        let body = serde_json::json!({"record": record, "incentives": report, "algorithm_welfare": algorithm_welfare});
        write_file(
            out,
            "verify.json",
            serde_json::to_string_pretty(&body).map_err(Error::from)?.as_bytes(),
        )?;
        write_file(out, "metrics.csv", &metrics_csv(&[record])?)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaRecord {
    pub replication: usize,
    pub seed: u64,
    pub lp_star: f64,
    pub filtered_value: f64,
    pub algorithm_welfare: f64,
    pub mechanism_welfare: f64,
    pub mechanism_welfare_se: f64,
    pub max_regret: Option<f64>,
}

fn ca_experiment(common: &Common, replications: usize) -> std::result::Result<(), CliError> {
    let mut common = common.clone();
    common.algorithm = "ca-lp-round".into();
    let config = ExperimentConfig::from_common(&common, Reduction::Sw, replications);
    let experiment = Experiment::load(config)?;
    let records: Vec<Result<CaRecord>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let seed = experiment.replication_seed(r);
            let base = AlgorithmMechanism {
                algorithm: experiment.algorithm.as_ref(),
            };
            let algorithm_welfare = experiment.measure(&base, r)?.0.welfare;
            let tables = experiment.tables(r)?;
            let mechanism = experiment.mechanism(&tables);
            let (record, _) = experiment.measure(mechanism.as_ref(), r)?;
            let ca = CaAlgorithm::new(
                &experiment.instance,
                experiment.config.epsilon.unwrap_or(0.1),
                Resolver::parse(&experiment.config.resolver)?,
            )?;
            Ok(CaRecord {
                replication: r,
                seed,
                lp_star: ca.lp().objective,
                filtered_value: ca.filtered().objective,
                algorithm_welfare,
                mechanism_welfare: record.welfare,
                mechanism_welfare_se: record.welfare_se,
                max_regret: record.max_regret,
            })
        })
        .collect();
    let records: Vec<CaRecord> = records.into_iter().collect::<Result<_>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "schema",
        "replication",
        "seed",
        "lp_star",
        "filtered_value",
        "algorithm_welfare",
        "mechanism_welfare",
        "mechanism_welfare_se",
        "max_regret",
    ])
    .map_err(io)?;
    for r in &records {
        w.write_record([
            CSV_SCHEMA.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            fmt12(r.lp_star),
            fmt12(r.filtered_value),
            fmt12(r.algorithm_welfare),
            fmt12(r.mechanism_welfare),
            fmt12(r.mechanism_welfare_se),
            opt12(r.max_regret),
        ])
        .map_err(io)?;
    }
    let csv_bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let mean = |f: fn(&CaRecord) -> f64| mean_and_error(records.iter().map(f));
    let summary = serde_json::json!({
        "replications": records.len(),
        "resolver": experiment.config.resolver,
        "epsilon": experiment.config.epsilon.unwrap_or(0.1),
        "lp_star": mean(|r| r.lp_star).0,
        "filtered_value": mean(|r| r.filtered_value).0,
        "algorithm_welfare": mean(|r| r.algorithm_welfare),
        "mechanism_welfare": mean(|r| r.mechanism_welfare),
        "max_regret": records.iter().map(|r| r.max_regret).collect::<Option<Vec<f64>>>().map(|v| v.into_iter().fold(0.0, f64::max)),
    });
    print!("{}", String::from_utf8_lossy(&csv_bytes));
    if let Some(out) = &experiment.config.out {
        write_manifest(
            out,
            "ca-experiment",
            &serde_json::to_value(&experiment.config).map_err(Error::from)?,
            experiment.config.seed,
        )?;
        write_file(out, "ca.csv", &csv_bytes)?;
        write_file(
            out,
            "summary.json",
            serde_json::to_string_pretty(&summary).map_err(Error::from)?.as_bytes(),
        )?;
    }
    Ok(())
}

fn lower_bound_demo(levels: usize, objective: Objective, out: Option<&Path>) -> std::result::Result<(), CliError> {
    if !(1..=30).contains(&levels) {
        return Err(CliError::Usage(format!("--levels must lie in 1..=30, got {levels}")));
    }
    let instance = lower_bound_instance(levels)?;
    let algorithm = OptimalBruteforce::new(&instance)?;
    let opt = optimal_welfare(&instance)?;
    let algorithm_welfare = performance(&instance, &AlgorithmMechanism { algorithm: &algorithm })?.welfare;
    let ladder_objective = match objective {
        Objective::Revenue => LadderObjective::Revenue,
        Objective::Surplus => LadderObjective::Surplus,
    };
    let table = interim_table(&instance, &algorithm, InterimMode::Exact, 0)?;
    let meta = meta_tables_from_interim(&instance, &table, ladder_objective)?;
    let mechanism = meta.mechanism(&algorithm);
    let perf = performance(&instance, &mechanism)?;
    let report = certify(&instance, &mechanism, 0.0)?;
    let k = levels as f64;
    let achieved = match objective {
        Objective::Revenue => perf.revenue,
        Objective::Surplus => perf.residual_surplus,
    };
    let bound = algorithm_welfare / (2.0 * k);
    println!("levels: {levels}");
    println!("optimal_welfare: {}", fmt12(opt));
    println!("algorithm_welfare: {}", fmt12(algorithm_welfare));
    println!("mechanism_welfare: {}", fmt12(perf.welfare));
    println!("mechanism_revenue: {}", fmt12(perf.revenue));
    println!("mechanism_residual_surplus: {}", fmt12(perf.residual_surplus));
    println!("objective: {:?}", objective);
    println!("ratio_to_welfare: {}", fmt12(achieved / algorithm_welfare));
    println!("bound_welfare_over_2k: {}", fmt12(bound));
    println!("meets_bound: {}", achieved >= bound - 1e-9);
    println!("max_regret: {}", fmt12(report.max_regret));
    println!("ir_ok: {}", report.ir.as_ref().map(|r| r.ok).unwrap_or(false));
    if let Some(out) = out {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record([
            "schema",
            "levels",
            "optimal_welfare",
            "algorithm_welfare",
            "revenue",
            "residual_surplus",
            "bound",
            "max_regret",
        ])
        .map_err(io)?;
        w.write_record([
            CSV_SCHEMA.to_string(),
            levels.to_string(),
            fmt12(opt),
            fmt12(algorithm_welfare),
            fmt12(perf.revenue),
            fmt12(perf.residual_surplus),
            fmt12(bound),
            fmt12(report.max_regret),
        ])
        .map_err(io)?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        write_manifest(
            out,
            "lower-bound-demo",
            &serde_json::json!({"levels": levels, "objective": objective}),
            0,
        )?;
        write_file(out, "lower_bound.csv", &bytes)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> std::result::Result<(), CliError> {
    match cli.command {
        Command::SolveAssignment { instance, out } => solve_assignment(&instance, out.as_deref()),
        Command::ReduceSw(common) => reduce(&common, Reduction::Sw, "reduce-sw"),
        Command::ReduceRr { common, objective } => {
            let reduction = match objective {
                Objective::Revenue => Reduction::Revenue,
                Objective::Surplus => Reduction::Surplus,
            };
            reduce(&common, reduction, "reduce-rr")
        }
        Command::CaExperiment { common, replications } => ca_experiment(&common, replications),
        Command::Verify { common, reduction } => verify_command(&common, reduction),
        Command::LowerBoundDemo { levels, objective, out } => lower_bound_demo(levels, objective, out.as_deref()),
        Command::Run { config } => run_config(ExperimentConfig::read(&config)?, "run").map(|_| ()),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    configure_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}
