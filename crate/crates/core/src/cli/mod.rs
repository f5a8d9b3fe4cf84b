//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | other runtime failure (I/O, rejection floor, a failed `validate` check) |
//! | 2 | usage or configuration error |
//! | 3 | plateau in the threshold sequence |
//! | 4 | level cap reached before the stopping tolerance |
//! | 5 | model evaluation fault |

pub mod config;
pub mod output;

use crate::bus::{run_bus, run_bus_original, BusRun};
use crate::error::Error;
use crate::models::LogLikelihood;
use crate::oracles::{
    chi_square_gof, direct_mc_evidence, ks_two_sample, rejection_sample, ChiSquareTest, KsTest,
};
use crate::priors::Prior;
use crate::rng::{label, StreamTree};
use crate::sus::SusConfig;
use clap::{Args, Parser, Subcommand};
use config::{BuiltModel, Mode, ModelBlock, RunConfig};
use output::{fmt_sci3, to_json, write_atomic};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "rarebayes", version, about = "Subset Simulation and Bayesian updating with evidence estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior samples and log-evidence for one model.
    Update(CommonArgs),
    /// Evidence for two or more models and their pairwise ratios.
    Compare(CommonArgs),
    /// Original formulation with fixed multipliers against a rejection reference.
    DemoBias(CommonArgs),
    /// Cross-check a run against the rejection and direct Monte Carlo oracles.
    Validate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, env = "RAREBAYES_THREADS")]
    pub threads: Option<usize>,
}

impl Command {
    fn parts(&self) -> (Mode, &CommonArgs) {
        match self {
            Command::Update(a) => (Mode::Update, a),
            Command::Compare(a) => (Mode::Compare, a),
            Command::DemoBias(a) => (Mode::DemoBias, a),
            Command::Validate(a) => (Mode::Validate, a),
        }
    }
}

/// Failure of a CLI command, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(e) => engine_exit_code(e),
            CliError::Io { .. } | CliError::Check(_) => 1,
        }
    }
}

pub fn engine_exit_code(e: &Error) -> i32 {
    match e {
        Error::Plateau { .. } => 3,
        Error::LevelsExhausted { .. } => 4,
        Error::Model { .. } | Error::CorruptState(_) => 5,
        Error::InvalidParameter(_) | Error::AcceptanceTooLow { .. } | Error::InsufficientData(_) => 1,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config and applies command-line overrides.
pub fn load_config(mode: Mode, args: &CommonArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = RunConfig::from_toml(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(m) = config.mode {
        if m != mode {
            return Err(CliError::Config(format!(
                "config is for `{}` but `{}` was requested",
                m.name(),
                mode.name()
            )));
        }
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output = Some(out.clone());
    }
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (mode, args) = cli.command.parts();
    let config = load_config(mode, args)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let out = config.output.clone().unwrap_or_else(|| PathBuf::from("rarebayes-out"));
    pool.install(|| match mode {
        Mode::Update => cmd_update(&config, &out),
        Mode::Compare => cmd_compare(&config, &out),
        Mode::DemoBias => cmd_demo_bias(&config, &out),
        Mode::Validate => cmd_validate(&config, &out),
    })
}

fn single_model(config: &RunConfig, mode: Mode) -> Result<&ModelBlock, CliError> {
    match config.models.as_slice() {
        [m] => Ok(m),
        other => Err(CliError::Config(format!(
            "`{}` needs exactly one [[model]] block, found {}",
            mode.name(),
            other.len()
        ))),
    }
}

/// Runs revised BUS and writes `levels.csv`, `ccdf.csv`, `posterior.csv` and `evidence.json`.
pub fn cmd_update(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let block = single_model(config, Mode::Update)?;
    let result = run_bus(
        block.likelihood(),
        block.prior(),
        &config.sus_config(),
        &config.stopping_config(),
    );
    match result {
        Ok(run) => {
            output::write_update(out, &run, block.prior().dim()).map_err(io_err(out))?;
            print!("{}", output::level_table(&run.trace));
            println!(
                "ln P_D = {:.6} (c.o.v. proxy {:.3}), stopping level {}",
                run.evidence.ln_evidence, run.evidence.cov_proxy, run.evidence.stopping_level
            );
            Ok(())
        }
        Err(Error::LevelsExhausted {
            max_levels,
            last_a,
            tol,
            partial,
        }) => {
            let ccdf = crate::sus::assemble_ccdf(&partial.levels, config.sus.to_config(0).level_probability);
            output::write_trace(out, &partial, &ccdf).map_err(io_err(out))?;
            print!("{}", output::level_table(&partial));
            Err(Error::LevelsExhausted {
                max_levels,
                last_a,
                tol,
                partial,
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Serialize)]
pub struct CompareEntry {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ln_evidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cov_proxy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopping_level: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RatioEntry {
    pub numerator: String,
    pub denominator: String,
    pub ln_ratio: f64,
    pub ratio: f64,
    /// `√(std_A² + std_B²)`.
    pub ln_ratio_std: f64,
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub seed: u64,
    pub models: Vec<CompareEntry>,
    pub ratios: Vec<RatioEntry>,
}

/// Evidence ratio `R = P_A / P_B` with the propagated std of `ln R`.
pub fn evidence_ratio(a: &BusRun, b: &BusRun) -> (f64, f64) {
    let ln_r = a.evidence.ln_evidence - b.evidence.ln_evidence;
    let std = a.evidence.cov_proxy.hypot(b.evidence.cov_proxy);
    (ln_r, std)
}

/// Runs every model block with the same settings and reports pairwise ratios.
pub fn compare(config: &RunConfig) -> (CompareReport, Option<Error>) {
    let mut runs = Vec::new();
    let mut entries = Vec::new();
    let mut first_error = None;
    for block in &config.models {
        match run_bus(block.likelihood(), block.prior(), &config.sus_config(), &config.stopping_config()) {
            Ok(r) => {
                entries.push(CompareEntry {
                    label: block.label().to_string(),
                    ln_evidence: Some(r.evidence.ln_evidence),
                    cov_proxy: Some(r.evidence.cov_proxy),
                    stopping_level: Some(r.evidence.stopping_level),
                    error: None,
                });
                runs.push((block.label().to_string(), r));
            }
            Err(e) => {
                entries.push(CompareEntry {
                    label: block.label().to_string(),
                    ln_evidence: None,
                    cov_proxy: None,
                    stopping_level: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let mut ratios = Vec::new();
    for i in 0..runs.len() {
        for j in (i + 1)..runs.len() {
            let (ln_ratio, std) = evidence_ratio(&runs[i].1, &runs[j].1);
            ratios.push(RatioEntry {
                numerator: runs[i].0.clone(),
                denominator: runs[j].0.clone(),
                ln_ratio,
                ratio: ln_ratio.exp(),
                ln_ratio_std: std,
            });
        }
    }
    (
        CompareReport {
            seed: config.seed,
            models: entries,
            ratios,
        },
        first_error,
    )
}

pub fn cmd_compare(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    if config.models.len() < 2 {
        return Err(CliError::Config(format!(
            "`compare` needs at least two [[model]] blocks, found {}",
            config.models.len()
        )));
    }
    let (report, error) = compare(config);
    let path = out.join("compare.json");
    write_atomic(&path, to_json(&report).as_bytes()).map_err(io_err(&path))?;
    for m in &report.models {
        match (m.ln_evidence, m.cov_proxy) {
            (Some(l), Some(c)) => println!("{:<24} ln P_D = {l:.6} ± {c:.3}", m.label),
            _ => println!("{:<24} failed: {}", m.label, m.error.as_deref().unwrap_or("")),
        }
    }
    for r in &report.ratios {
        println!(
            "{} / {}: R = {} (ln R = {:.4} ± {:.4})",
            r.numerator,
            r.denominator,
            fmt_sci3(r.ratio),
            r.ln_ratio,
            r.ln_ratio_std
        );
    }
    match error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// Per-marginal two-sample KS tests of `samples` against `reference`.
pub fn marginal_ks(samples: &[Vec<f64>], reference: &[Vec<f64>], dim: usize) -> Result<Vec<KsTest>, Error> {
    (0..dim)
        .map(|j| {
            let a: Vec<f64> = samples.iter().map(|t| t[j]).collect();
            let b: Vec<f64> = reference.iter().map(|t| t[j]).collect();
            ks_two_sample(&a, &b)
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct KsSummary {
    pub statistic: f64,
    pub p_value: f64,
    pub critical_value: f64,
    pub passes: bool,
}

impl KsSummary {
    fn new(t: &KsTest, alpha: f64) -> Self {
        Self {
            statistic: t.statistic,
            p_value: t.p_value,
            critical_value: t.critical_value(alpha),
            passes: t.passes(alpha),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TruncationCheck {
    /// Fraction of chain-end samples inside `B = {cL(θ) > 1}`.
    pub in_b_fraction: f64,
    /// χ² of the first parameter on `B` against the prior restricted to `B`.
    pub chi_square: Option<ChiSquareTest>,
}

#[derive(Debug, Serialize)]
pub struct DemoEntry {
    pub multiplier: f64,
    pub relative_multiplier: f64,
    pub evidence: f64,
    pub exceedance: f64,
    pub levels: usize,
    pub chain_ends: usize,
    pub ks: Vec<KsSummary>,
    /// Largest KS statistic over the marginals.
    pub distance: f64,
    pub passes: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationCheck>,
}

#[derive(Debug, Serialize)]
pub struct DemoReport {
    pub seed: u64,
    pub c_max: f64,
    pub alpha: f64,
    pub reference_samples: usize,
    pub runs: Vec<DemoEntry>,
}

/// Prior draws restricted to `B = {ln c + ln L(θ) > 0}`, up to `count` or `budget` proposals.
fn prior_in_truncation<M: LogLikelihood + ?Sized>(
    model: &M,
    prior: &Prior,
    ln_c: f64,
    count: usize,
    budget: usize,
    tree: &StreamTree,
) -> Result<Vec<Vec<f64>>, Error> {
    let mut rng = tree.stream(1);
    let mut out = Vec::new();
    for _ in 0..budget {
        let t = prior.sample_physical(&mut rng);
        if ln_c + model.log_likelihood(&t)? > 0.0 {
            out.push(t);
            if out.len() == count {
                break;
            }
        }
    }
    Ok(out)
}

/// χ² of `samples` (first parameter) against equal-mass bins of `reference`.
fn equal_mass_chi_square(samples: &[f64], reference: &[f64], bins: usize) -> Result<ChiSquareTest, Error> {
    let mut r = reference.to_vec();
    r.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins).map(|k| r[k * r.len() / bins]).collect();
    let mut counts = vec![0u64; bins];
    for x in samples {
        counts[edges.partition_point(|e| e <= x)] += 1;
    }
    let mut probs = vec![0.0; bins];
    for x in &r {
        probs[edges.partition_point(|e| e <= x)] += 1.0;
    }
    chi_square_gof(&counts, &probs)
}

/// Row-major sample matrix.
pub type Samples = Vec<Vec<f64>>;

/// Original formulation at each configured multiplier; also returns each run's samples.
pub fn demo_bias(config: &RunConfig) -> Result<(DemoReport, Vec<Samples>), CliError> {
    let block = single_model(config, Mode::DemoBias)?;
    let demo = config
        .demo
        .clone()
        .ok_or_else(|| CliError::Config("`demo-bias` needs a [demo] section".into()))?;
    let c_max = block
        .c_max()
        .ok_or_else(|| CliError::Config("`demo-bias` needs a model with known max likelihood".into()))?;
    let model = block.likelihood();
    let prior = block.prior();
    let dim = prior.dim();
    let tree = StreamTree::new(config.seed).child(label::ORACLE);
    let reference = rejection_sample(model, prior, c_max, demo.reference_samples(), &mut tree.stream(0))?;
    let sus = config.sus_config();
    let mut runs = Vec::new();
    for &m in demo.multipliers() {
        let c = if demo.relative() { m * c_max } else { m };
        let run = run_bus_original(model, prior, c, &sus)?;
        let ends = run.posterior.chain_ends();
        let ks = marginal_ks(&ends, &reference.theta, dim)?;
        let summaries: Vec<KsSummary> = ks.iter().map(|t| KsSummary::new(t, demo.alpha())).collect();
        let distance = ks.iter().map(|t| t.statistic).fold(0.0, f64::max);
        let passes = summaries.iter().all(|s| s.passes);
        let truncation = if c > c_max {
            let ln_c = c.ln();
            let mut inside = Vec::new();
            for t in &ends {
                if ln_c + model.log_likelihood(t)? > 0.0 {
                    inside.push(t[0]);
                }
            }
            let restricted = prior_in_truncation(model, prior, ln_c, 50_000, 5_000_000, &tree.child(1))?;
            let chi_square = if inside.len() >= 25 && restricted.len() >= 1000 {
                let r: Vec<f64> = restricted.iter().map(|t| t[0]).collect();
                Some(equal_mass_chi_square(&inside, &r, 5)?)
            } else {
                None
            };
            Some(TruncationCheck {
                in_b_fraction: inside.len() as f64 / ends.len() as f64,
                chi_square,
            })
        } else {
            None
        };
        runs.push((
            DemoEntry {
                multiplier: c,
                relative_multiplier: c / c_max,
                evidence: run.evidence,
                exceedance: run.exceedance,
                levels: run.levels.len(),
                chain_ends: ends.len(),
                ks: summaries,
                distance,
                passes,
                truncation,
            },
            run.posterior.theta,
        ));
    }
    let (entries, samples) = runs.into_iter().unzip();
    Ok((
        DemoReport {
            seed: config.seed,
            c_max,
            alpha: demo.alpha(),
            reference_samples: demo.reference_samples(),
            runs: entries,
        },
        samples,
    ))
}

pub fn cmd_demo_bias(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (report, samples) = demo_bias(config)?;
    let dim = config.models[0].prior().dim();
    for (k, theta) in samples.iter().enumerate() {
        let path = out.join(format!("posterior_c{k}.csv"));
        write_atomic(&path, output::samples_csv(theta, dim).as_bytes()).map_err(io_err(&path))?;
    }
    let path = out.join("demo_bias.json");
    write_atomic(&path, to_json(&report).as_bytes()).map_err(io_err(&path))?;
    println!("{:>10}  {:>10}  {:>10}  {:>6}", "c/c_max", "distance", "critical", "pass");
    for r in &report.runs {
        let crit = r.ks.iter().map(|k| k.critical_value).fold(0.0, f64::max);
        println!(
            "{:>10}  {:>10.4}  {:>10.4}  {:>6}",
            fmt_sci3(r.relative_multiplier),
            r.distance,
            crit,
            r.passes
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ValidateEntry {
    pub label: String,
    pub ln_evidence: f64,
    pub cov_proxy: f64,
    pub stopping_level: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_ln_evidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_z: Option<f64>,
    pub direct_ln_evidence: f64,
    pub direct_cov: f64,
    /// `(ln P̂_bus − ln P̂_direct)` over the combined std.
    pub direct_z: f64,
    pub rejection_acceptance_rate: f64,
    pub ks: Vec<KsSummary>,
    pub passes: bool,
}

#[derive(Debug, Serialize)]
pub struct ValidateReport {
    pub seed: u64,
    pub alpha: f64,
    pub models: Vec<ValidateEntry>,
    pub passes: bool,
}

/// Compares each model's run against the rejection and direct Monte Carlo oracles.
pub fn validate(config: &RunConfig) -> Result<ValidateReport, CliError> {
    let settings = config.validate.clone().unwrap_or_default();
    let alpha = settings.alpha();
    let mut models = Vec::new();
    for (i, block) in config.models.iter().enumerate() {
        let c_max = block
            .c_max()
            .ok_or_else(|| CliError::Config(format!("model `{}` has no known max likelihood", block.label())))?;
        let model = block.likelihood();
        let prior = block.prior();
        let sus: SusConfig = config.sus_config();
        let run = run_bus(model, prior, &sus, &config.stopping_config())?;
        let tree = StreamTree::new(config.seed).child(label::ORACLE).child(i as u64);
        let reference = rejection_sample(model, prior, c_max, settings.rejection_samples(), &mut tree.stream(0))?;
        let direct = direct_mc_evidence(model, prior, settings.direct_samples(), &mut tree.stream(1))?;
        let ks = marginal_ks(&run.posterior.chain_ends(), &reference.theta, prior.dim())?;
        let ks: Vec<KsSummary> = ks.iter().map(|t| KsSummary::new(t, alpha)).collect();
        let ev = run.evidence;
        let analytic = match block.model() {
            BuiltModel::Gaussian(g) if prior.marginals().iter().all(|m| *m == crate::priors::Marginal::StandardNormal) => {
                Some(g.ln_evidence())
            }
            _ => None,
        };
        let analytic_z = analytic.map(|a| (ev.ln_evidence - a) / ev.cov_proxy);
        let direct_z = (ev.ln_evidence - direct.ln_evidence) / ev.cov_proxy.hypot(direct.cov);
        let passes = ks.iter().all(|k| k.passes)
            && direct_z.abs() <= 3.0
            && analytic_z.is_none_or(|z| z.abs() <= 3.0);
        models.push(ValidateEntry {
            label: block.label().to_string(),
            ln_evidence: ev.ln_evidence,
            cov_proxy: ev.cov_proxy,
            stopping_level: ev.stopping_level,
            analytic_ln_evidence: analytic,
            analytic_z,
            direct_ln_evidence: direct.ln_evidence,
            direct_cov: direct.cov,
            direct_z,
            rejection_acceptance_rate: reference.acceptance_rate,
            ks,
            passes,
        });
    }
    let passes = models.iter().all(|m| m.passes);
    Ok(ValidateReport {
        seed: config.seed,
        alpha,
        models,
        passes,
    })
}

pub fn cmd_validate(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    if config.models.is_empty() {
        return Err(CliError::Config("`validate` needs at least one [[model]] block".into()));
    }
    let report = validate(config)?;
    let path = out.join("validate.json");
    write_atomic(&path, to_json(&report).as_bytes()).map_err(io_err(&path))?;
    for m in &report.models {
        println!(
            "{:<24} ln P_D = {:.4} ± {:.3}, direct {:.4} (z = {:.2}), KS {}",
            m.label,
            m.ln_evidence,
            m.cov_proxy,
            m.direct_ln_evidence,
            m.direct_z,
            if m.ks.iter().all(|k| k.passes) { "pass" } else { "FAIL" }
        );
    }
    if report.passes {
        Ok(())
    } else {
        Err(CliError::Check("one or more validation checks failed".into()))
    }
}
