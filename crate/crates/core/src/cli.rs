//! Run configuration, manifests and the command implementations behind the
//! `tstmle` binary.
//!
//! A run is one command plus a flat TOML document. Every run writes
//! `manifest.json` holding the fully resolved configuration; passing that
//! manifest back as `--config` reproduces the run's numeric outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{run_adaptive_trial, AdaptiveDesign, BlipMode, Schedule};
use crate::data::{load_timeseries, ContextSpec, Schema};
use crate::error::{Error, Result};
use crate::learners::{library, LearnerSpec};
use crate::online_sl::CvConfig;
use crate::simlab::monte_carlo::{
    default_library, monte_carlo, write_figure_csv, write_jsonl, AdaptiveScenario, AteScenario, GSpec, Scenario,
};
use crate::simlab::DgpKind;
use crate::tmle::point::{tmle_ate, GMode, PointTmle, Target};
use crate::tmle::{ltmle_mean, SeqTmle, StochasticIntervention, TmleOptions};

pub const TOOL: &str = "tstmle";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EstimateAte,
    EstimateLtmle,
    AdaptiveTrial,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EstimateAte => "estimate-ate",
            Command::EstimateLtmle => "estimate-ltmle",
            Command::AdaptiveTrial => "adaptive-trial",
            Command::Simulate => "simulate",
        }
    }
}

/// Single-time-point estimand of `estimate-ate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    #[default]
    Ate,
    Tsm0,
    Tsm1,
}

fn default_draws() -> u64 {
    100
}

fn default_delta() -> f64 {
    TmleOptions::default().delta
}

fn default_alpha() -> f64 {
    TmleOptions::default().alpha
}

fn default_eps_bound() -> f64 {
    TmleOptions::default().eps_bound
}

fn default_g() -> GSpec {
    GSpec::Estimate { library: default_library() }
}

fn default_out() -> PathBuf {
    PathBuf::from("tstmle-out")
}

/// Resolved run configuration. Keys not used by the chosen command are
/// accepted and echoed but ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for Monte Carlo draws; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,

    /// Input CSV for the estimation commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Column layout; inferred from the header when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Schema>,
    /// Context summary; required for `estimate-*`, DGP preset otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextSpec>,
    #[serde(default)]
    pub target: TargetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention: Option<StochasticIntervention>,

    #[serde(default = "default_library")]
    pub q_library: Vec<LearnerSpec>,
    #[serde(default = "default_g")]
    pub g: GSpec,
    #[serde(default)]
    pub cv: CvConfig,
    /// Lower bound `δ` on `g`; estimated mechanisms are truncated to
    /// `[δ, 1 - δ]`.
    #[serde(default = "default_delta")]
    pub gbar_truncation: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_eps_bound")]
    pub eps_bound: f64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpKind>,
    /// Series length for single-time-point simulations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_draws")]
    pub draws: u64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_n: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_t_n")]
    pub t_n: Schedule,
    #[serde(default = "default_e_n")]
    pub e_n: Schedule,
    #[serde(default)]
    pub blip: BlipMode,
}

fn default_batch() -> usize {
    200
}

fn default_t_n() -> Schedule {
    Schedule::Constant(0.1)
}

fn default_e_n() -> Schedule {
    Schedule::Constant(0.05)
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("all keys have defaults")
    }
}

/// `manifest.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
}

/// Parses a TOML run configuration; errors name the offending key.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a TOML configuration or a previously written `manifest.json`.
pub fn parse_config(path: &Path) -> Result<(RunConfig, Option<Command>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.config.validate()?;
        return Ok((m.config, Some(m.command)));
    }
    let cfg = parse_config_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, None))
}

impl RunConfig {
    pub fn tmle_options(&self) -> TmleOptions {
        TmleOptions { delta: self.gbar_truncation, alpha: self.alpha, eps_bound: self.eps_bound }
    }

    pub fn validate(&self) -> Result<()> {
        self.tmle_options().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.q_library.is_empty() {
            return Err(Error::Config("q_library: at least one learner is required".into()));
        }
        if let GSpec::Estimate { library } = &self.g {
            if library.is_empty() {
                return Err(Error::Config("g.library: at least one learner is required".into()));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads: must be at least 1".into()));
        }
        Ok(())
    }

    fn g_mode(&self) -> GMode {
        match &self.g {
            GSpec::Known => GMode::Known,
            GSpec::Estimate { library: l } => GMode::Estimate(library(l)),
        }
    }

    /// Single time-point estimator of `estimate-ate`.
    pub fn point_tmle(&self) -> PointTmle {
        let target = match self.target {
            TargetKind::Ate => Target::Ate,
            TargetKind::Tsm0 => Target::Tsm(0),
            TargetKind::Tsm1 => Target::Tsm(1),
        };
        PointTmle {
            target,
            q_library: library(&self.q_library),
            g: self.g_mode(),
            cv: self.cv.clone(),
            options: self.tmle_options(),
        }
    }

    /// Sequential estimator of `estimate-ltmle`.
    pub fn seq_tmle(&self) -> SeqTmle {
        SeqTmle { q_library: library(&self.q_library), g: self.g_mode(), cv: self.cv.clone(), options: self.tmle_options() }
    }

    fn design(&self) -> Result<AdaptiveDesign> {
        let initial_n = self.initial_n.ok_or_else(|| Error::Config("initial_n: required for adaptive trials".into()))?;
        let max_n = self.max_n.ok_or_else(|| Error::Config("max_n: required for adaptive trials".into()))?;
        Ok(AdaptiveDesign {
            initial_n,
            batch: self.batch,
            max_n,
            t_n: self.t_n.clone(),
            e_n: self.e_n.clone(),
            blip: self.blip.clone(),
            cv: self.cv.clone(),
            options: self.tmle_options(),
        })
    }

    fn require_dgp(&self) -> Result<DgpKind> {
        self.dgp.ok_or_else(|| Error::Config("dgp: required".into()))
    }

    fn input(&self) -> Result<(crate::data::TimeSeries, ContextSpec)> {
        let path = self.data.as_ref().ok_or_else(|| Error::Config("data: required for estimation commands".into()))?;
        let context = self.context.clone().ok_or_else(|| Error::Config("context: required for estimation commands".into()))?;
        let series = load_timeseries(path, self.schema.as_ref())?;
        Ok((series, context))
    }
}

/// One-line human summary per output.
pub type Summary = Vec<String>;

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::write(out.join(name), bytes)?;
    Ok(())
}

/// Executes `command`, writing outputs and the manifest under `cfg.out`.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let out = &cfg.out;
    fs::create_dir_all(out)?;
    let manifest =
        Manifest { tool: TOOL.into(), version: VERSION.into(), command, seed: cfg.seed, config: cfg.clone() };
    write(out, "manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    let opts = cfg.tmle_options();
    let mut summary = Vec::new();
    match command {
        Command::EstimateAte => {
            let (series, context) = cfg.input()?;
            let r = tmle_ate(&series, &context, &cfg.point_tmle())?;
            write(out, "report.json", r.to_json()?.as_bytes())?;
            write(out, "eic.csv", r.eic_csv().as_bytes())?;
            summary.push(format!("{} = {:.6} ({:.6}, {:.6}), n = {}", r.estimand, r.psi, r.ci.0, r.ci.1, r.n));
        }
        Command::EstimateLtmle => {
            let (series, context) = cfg.input()?;
            let gstar = cfg
                .intervention
                .clone()
                .unwrap_or_else(|| StochasticIntervention::always_treat(series.schema().k()));
            let (r, stack) = ltmle_mean(&series, &context, &gstar, &cfg.seq_tmle())?;
            write(out, "report.json", r.to_json()?.as_bytes())?;
            write(out, "eic.csv", r.eic_csv().as_bytes())?;
            write(out, "levels.json", serde_json::to_string_pretty(&stack)?.as_bytes())?;
            summary.push(format!("{} = {:.6} ({:.6}, {:.6}), n = {}", r.estimand, r.psi, r.ci.0, r.ci.1, r.n));
        }
        Command::AdaptiveTrial => {
            let kind = cfg.require_dgp()?;
            let trace = run_adaptive_trial(kind, &cfg.design()?, cfg.seed)?;
            write(out, "trace.json", trace.to_json()?.as_bytes())?;
            let mut buf = Vec::new();
            trace.per_t_csv(&mut buf)?;
            write(out, "trace.csv", &buf)?;
            let mut buf = Vec::new();
            trace.checkpoints_csv(&mut buf)?;
            write(out, "checkpoints.csv", &buf)?;
            for c in &trace.checkpoints {
                summary.push(format!(
                    "n = {}: psi = {:.6} ({:.6}, {:.6}), truth = {:.6}",
                    c.n, c.report.psi, c.report.ci.0, c.report.ci.1, c.truth
                ));
            }
        }
        Command::Simulate => {
            let kind = cfg.require_dgp()?;
            let scenario = if matches!(kind, DgpKind::Sim2a | DgpKind::Sim2b) {
                let design = cfg.design()?;
                Scenario::Adaptive(AdaptiveScenario { name: format!("{}_t{}", kind.name(), design.initial_n), dgp: kind, design })
            } else {
                let n = cfg.n.ok_or_else(|| Error::Config("n: required for single-time-point simulations".into()))?;
                Scenario::Ate(AteScenario {
                    name: format!("{}_n{n}", kind.name()),
                    dgp: kind,
                    n,
                    q_library: cfg.q_library.clone(),
                    g: cfg.g.clone(),
                    context: cfg.context.clone(),
                    cv: cfg.cv.clone(),
                    options: opts,
                })
            };
            let res = monte_carlo(&scenario, cfg.draws, cfg.seed, cfg.threads)?;
            let mut buf = Vec::new();
            res.table.to_csv(&mut buf)?;
            write(out, "metrics.csv", &buf)?;
            let mut buf = Vec::new();
            write_jsonl(&res.records, &mut buf)?;
            write(out, "draws.jsonl", &buf)?;
            if matches!(scenario, Scenario::Adaptive(_)) {
                let mut buf = Vec::new();
                write_figure_csv(&res.records, &mut buf)?;
                write(out, "figure.csv", &buf)?;
            }
            for r in &res.table.rows {
                summary.push(format!(
                    "{} checkpoint {} (n = {}): bias = {:.3e}, variance = {:.3e}, coverage = {:.1}%, draws = {}, failed = {}",
                    r.scenario, r.checkpoint, r.n, r.bias, r.variance, r.coverage, r.draws, r.failed
                ));
            }
        }
    }
    Ok(summary)
}
