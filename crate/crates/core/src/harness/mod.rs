//! Command-line orchestration: config loading, presets, seeded runs and
//! CSV/JSON output.
//!
//! Every output file starts with the resolved config and seed. CSV files carry
//! them as `# ` comment lines above the header; the embedded config is JSON and
//! can be fed back through `--config file.json` to reproduce the body.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::adversary::{optimal_tau, sweep_tau_with, write_sweep_csv, CostModel, SearchLimits, SweepRow};
use crate::delegation_graph::{build_composite, upward_delegate, DelegationGraph, TopologySpec};
use crate::election_sim::{build_theorem1, direct_accuracy, dnh_suite, gain, DnhRow, DnhSuiteConfig, Theorem1Spec};
use crate::error::{Error, Result};
use crate::fedvrd::{self, FedVrdConfig, RunHistory};
use crate::rng;
use crate::weight_engine::{compute_weights, Mechanism};

/// Stream index reserved for graph construction; trials use index 1.
const GRAPH_STREAM: u64 = u64::MAX;

const PRESETS: &[(&str, &str)] = &[
    ("theorem1", include_str!("../../presets/theorem1.toml")),
    ("chains4x10", include_str!("../../presets/chains4x10.toml")),
    ("twelve_agents", include_str!("../../presets/twelve_agents.toml")),
    ("fedvrd40", include_str!("../../presets/fedvrd40.toml")),
    ("dnh", include_str!("../../presets/dnh.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

#[derive(Debug, Parser)]
#[command(name = "fluid", version, about = "Fluid-democracy simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML or JSON config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in config used when --config is absent.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Overrides the Monte Carlo trial count.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Accuracy and gain of each mechanism over direct voting.
    Election,
    /// Threshold sweep of transfer cost against adversary size.
    Sweep,
    /// Federated run with similarity delegation.
    Fedvrd,
    /// Gains on random bounded-component composites.
    DnhSuite,
}

impl Command {
    fn default_preset(self) -> &'static str {
        match self {
            Command::Election => "theorem1",
            Command::Sweep => "chains4x10",
            Command::Fedvrd => "fedvrd40",
            Command::DnhSuite => "dnh",
        }
    }
}

/// Graph source shared by the election and sweep commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    Theorem1(Theorem1Spec),
    Composite(TopologySpec),
}

impl GraphSource {
    pub fn build(&self, seed: u64) -> Result<DelegationGraph> {
        let mut rng = rng::stream(seed, GRAPH_STREAM);
        match self {
            GraphSource::Theorem1(spec) => build_theorem1(spec, &mut rng),
            GraphSource::Composite(spec) => {
                let (g, q) = build_composite(spec, &mut rng)?;
                upward_delegate(&g, &q)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectionConfig {
    pub seed: u64,
    pub trials: u64,
    #[serde(default)]
    pub tau: f64,
    pub graph: GraphSource,
    pub mechanisms: Vec<Mechanism>,
}

impl ElectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be finite and >= 0, got {}", self.tau)));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::Config("mechanisms must not be empty".into()));
        }
        for m in &self.mechanisms {
            Mechanism::new(m.alpha, m.beta)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectionRow {
    pub mechanism: String,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub n: usize,
    pub p_hat: f64,
    pub half_width: f64,
    pub gain: f64,
}

/// Direct voting first, then one row per mechanism. Every row uses the same
/// trial seed, so gains are paired.
pub fn run_election(config: &ElectionConfig) -> Result<Vec<ElectionRow>> {
    config.validate()?;
    let d = config.graph.build(config.seed)?;
    let trial_seed = rng::derive_seed(config.seed, 1);
    let direct = direct_accuracy(d.competence(), config.trials, trial_seed)?;
    let mut rows = vec![ElectionRow {
        mechanism: "direct".into(),
        alpha: None,
        tau: None,
        n: d.n(),
        p_hat: direct.p_hat,
        half_width: direct.half_width,
        gain: 0.0,
    }];
    for &m in &config.mechanisms {
        let g = gain(&d, m, config.tau, config.trials, trial_seed)?;
        rows.push(ElectionRow {
            mechanism: m.label(),
            alpha: Some(m.alpha),
            tau: Some(config.tau),
            n: d.n(),
            p_hat: g.mechanism.p_hat,
            half_width: g.mechanism.half_width,
            gain: g.gain,
        });
    }
    Ok(rows)
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seed: u64,
    pub graph: GraphSource,
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    pub cost: CostModel,
    /// Defaults to the distinct cast weights and their midpoints.
    #[serde(default)]
    pub tau_grid: Option<Vec<f64>>,
    /// Budgets at which to report the optimal threshold.
    #[serde(default)]
    pub budgets: Vec<f64>,
    #[serde(default)]
    pub search: SearchLimits,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// `(budget, optimal tau)`; `None` when no row is affordable.
    pub optimal: Vec<(f64, Option<f64>)>,
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    let m = Mechanism::new(config.alpha, config.beta)?;
    let cost = CostModel::new(config.cost.c, config.cost.c_adv)?;
    let d = config.graph.build(config.seed)?;
    let grid = match &config.tau_grid {
        Some(grid) => grid.clone(),
        None => crate::adversary::default_tau_grid(&compute_weights(&d, m)),
    };
    let rows = sweep_tau_with(&d, m, cost, &grid, config.search)?;
    let optimal = config
        .budgets
        .iter()
        .map(|&b| match optimal_tau(&rows, b) {
            Ok(tau) => Ok((b, Some(tau))),
            Err(Error::BudgetInfeasible { .. }) => Ok((b, None)),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok(SweepOutput { rows, optimal })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnhCommandConfig {
    pub seed: u64,
    #[serde(flatten)]
    pub suite: DnhSuiteConfig,
}

#[derive(Serialize)]
struct FedVrdOutput<'a> {
    seed: u64,
    config: &'a FedVrdConfig,
    history: &'a RunHistory,
}

fn parse_config<T: DeserializeOwned>(text: &str, json: bool) -> Result<T> {
    if json {
        Ok(serde_json::from_str(text)?)
    } else {
        Ok(toml::from_str(text)?)
    }
}

fn load_config<T: DeserializeOwned>(common: &CommonArgs, command: Command) -> Result<T> {
    match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            parse_config(&text, json)
        }
        None => {
            let name = common.preset.as_deref().unwrap_or(command.default_preset());
            let text = preset(name).ok_or_else(|| {
                let known: Vec<_> = preset_names().collect();
                Error::Config(format!("unknown preset {name:?}; known presets: {}", known.join(", ")))
            })?;
            parse_config(text, false)
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    Ok((path.clone(), BufWriter::new(File::create(path)?)))
}

fn write_header<W: Write, C: Serialize>(out: &mut W, command: &str, seed: u64, config: &C) -> Result<()> {
    writeln!(out, "# fluid {command}")?;
    writeln!(out, "# seed = {seed}")?;
    writeln!(out, "# config = {}", serde_json::to_string(&serde_json::to_value(config)?)?)?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_election_csv<W: Write>(rows: &[ElectionRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "mechanism,alpha,tau,n,p_hat,half_width,gain")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.mechanism,
            opt(r.alpha),
            opt(r.tau),
            r.n,
            r.p_hat,
            r.half_width,
            r.gain
        )?;
    }
    Ok(())
}

fn write_dnh_csv<W: Write>(rows: &[DnhRow], out: &mut W) -> std::io::Result<()> {
    writeln!(
        out,
        "composite,n,stars,star_size,chains,chain_size,mechanism,alpha,p_mechanism,p_direct,gain"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.composite,
            r.n,
            r.stars,
            r.star_size,
            r.chains,
            r.chain_size,
            r.mechanism,
            r.alpha,
            r.p_mechanism,
            r.p_direct,
            r.gain
        )?;
    }
    Ok(())
}

/// Writes `round,loss,tau,electors,cost_cum`, starting with the initial model
/// as round 0.
pub fn write_fedvrd_summary<W: Write>(history: &RunHistory, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "round,loss,tau,electors,cost_cum")?;
    writeln!(out, "0,{},,0,0", history.initial_loss)?;
    for r in &history.rounds {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.round,
            r.loss,
            opt(r.tau),
            r.electors.len(),
            r.cost_cum
        )?;
    }
    Ok(())
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    match cli.common.threads {
        Some(0) => Err(Error::Config("threads must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(|| dispatch(cli.command, &cli.common))
        }
        None => dispatch(cli.command, &cli.common),
    }
}

fn dispatch(command: Command, common: &CommonArgs) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&common.out)?;
    match command {
        Command::Election => {
            let mut config: ElectionConfig = load_config(common, command)?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            if let Some(trials) = common.trials {
                config.trials = trials;
            }
            let rows = run_election(&config)?;
            let (path, mut out) = create(&common.out, "election.csv")?;
            write_header(&mut out, "election", config.seed, &config)?;
            write_election_csv(&rows, &mut out)?;
            out.flush()?;
            Ok(vec![path])
        }
        Command::Sweep => {
            let mut config: SweepConfig = load_config(common, command)?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            let result = run_sweep(&config)?;
            let (path, mut out) = create(&common.out, "sweep.csv")?;
            write_header(&mut out, "sweep", config.seed, &config)?;
            write_sweep_csv(&result.rows, &mut out)?;
            out.flush()?;
            let mut paths = vec![path];
            if !result.optimal.is_empty() {
                let (path, mut out) = create(&common.out, "optimal_tau.csv")?;
                write_header(&mut out, "sweep", config.seed, &config)?;
                writeln!(out, "budget,optimal_tau")?;
                for (budget, tau) in &result.optimal {
                    writeln!(out, "{},{}", budget, opt(*tau))?;
                }
                out.flush()?;
                paths.push(path);
            }
            Ok(paths)
        }
        Command::Fedvrd => {
            let mut config: FedVrdConfig = load_config(common, command)?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            let history = fedvrd::run(&config)?;
            let (json_path, mut out) = create(&common.out, "fedvrd.json")?;
            let record = FedVrdOutput {
                seed: config.seed,
                config: &config,
                history: &history,
            };
            serde_json::to_writer_pretty(&mut out, &record)?;
            writeln!(out)?;
            out.flush()?;
            let (csv_path, mut out) = create(&common.out, "fedvrd_summary.csv")?;
            write_header(&mut out, "fedvrd", config.seed, &config)?;
            write_fedvrd_summary(&history, &mut out)?;
            out.flush()?;
            match history.halted {
                Some(reason) => Err(Error::Numerical(format!(
                    "run halted after {} rounds: {reason}",
                    history.rounds.len()
                ))),
                None => Ok(vec![json_path, csv_path]),
            }
        }
        Command::DnhSuite => {
            let mut config: DnhCommandConfig = load_config(common, command)?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            if let Some(trials) = common.trials {
                config.suite.trials = trials;
            }
            let rows = dnh_suite(&config.suite, config.seed)?;
            let (path, mut out) = create(&common.out, "dnh.csv")?;
            write_header(&mut out, "dnh-suite", config.seed, &config)?;
            write_dnh_csv(&rows, &mut out)?;
            out.flush()?;
            Ok(vec![path])
        }
    }
}
