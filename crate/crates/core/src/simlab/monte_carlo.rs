//! Monte Carlo harness: independent draws in parallel, aggregated in draw
//! order into bias, variance and coverage.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{draw_dgp, DgpKind};
use super::truth::true_context_ate;
use crate::adaptive::{run_adaptive_trial, AdaptiveDesign};
use crate::data::ContextSpec;
use crate::error::{Error, Result};
use crate::learners::{library, LearnerSpec};
use crate::online_sl::CvConfig;
use crate::tmle::point::{tmle_ate, GMode, PointTmle, Target};
use crate::tmle::TmleOptions;

/// Largest tolerated share of failed draws.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Seed of draw `index`.
pub fn draw_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ index
}

/// Outcome of one estimate on one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub scenario: String,
    pub draw: u64,
    pub seed: u64,
    /// Checkpoint index for adaptive scenarios, `0` otherwise.
    pub checkpoint: usize,
    pub n: usize,
    pub psi: Option<f64>,
    pub truth: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub se: Option<f64>,
    pub failure: Option<String>,
}

impl DrawRecord {
    fn failed(scenario: &str, draw: u64, seed: u64, checkpoint: usize, n: usize, err: &Error) -> Self {
        DrawRecord {
            scenario: scenario.into(),
            draw,
            seed,
            checkpoint,
            n,
            psi: None,
            truth: None,
            ci_lo: None,
            ci_hi: None,
            se: None,
            failure: Some(err.to_string()),
        }
    }

    pub fn covered(&self) -> Option<bool> {
        Some(self.ci_lo? <= self.truth? && self.truth? <= self.ci_hi?)
    }
}

/// One row of a bias/variance/coverage table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub n: usize,
    pub checkpoint: usize,
    pub bias: f64,
    /// Sample variance of the estimates (denominator `draws - 1`).
    pub variance: f64,
    /// Percent of intervals containing the draw's truth.
    pub coverage: f64,
    pub draws: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scenario", "n", "checkpoint", "bias", "variance", "coverage", "draws", "failed"])?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.n.to_string(),
                r.checkpoint.to_string(),
                r.bias.to_string(),
                r.variance.to_string(),
                r.coverage.to_string(),
                r.draws.to_string(),
                r.failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Aggregates the records of one scenario and checkpoint, in the given
/// order. Failed draws are excluded and counted.
pub fn metrics_from_records(records: &[DrawRecord]) -> Result<MetricsRow> {
    let first = records.first().ok_or_else(|| Error::InvalidArgument("no draws to aggregate".into()))?;
    let ok: Vec<&DrawRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    let failed = records.len() - ok.len();
    if failed as f64 > MAX_FAILURE_RATE * records.len() as f64 || ok.is_empty() {
        return Err(Error::TooManyFailures { scenario: first.scenario.clone(), failed, draws: records.len() });
    }
    let m = ok.len() as f64;
    let psi: Vec<f64> = ok.iter().map(|r| r.psi.expect("successful draw")).collect();
    let bias = ok.iter().map(|r| r.psi.unwrap() - r.truth.unwrap()).sum::<f64>() / m;
    let mean = psi.iter().sum::<f64>() / m;
    let variance = if ok.len() > 1 { psi.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    let covered = ok.iter().filter(|r| r.covered() == Some(true)).count();
    Ok(MetricsRow {
        scenario: first.scenario.clone(),
        n: first.n,
        checkpoint: first.checkpoint,
        bias,
        variance,
        coverage: 100.0 * covered as f64 / m,
        draws: ok.len(),
        failed,
    })
}

pub fn write_jsonl<W: Write>(records: &[DrawRecord], mut writer: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// `scenario, draw, checkpoint, n, truth, estimate, ci_lo, ci_hi` for
/// successful adaptive-trial checkpoints.
pub fn write_figure_csv<W: Write>(records: &[DrawRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "draw", "checkpoint", "n", "truth", "estimate", "ci_lo", "ci_hi"])?;
    for r in records.iter().filter(|r| r.failure.is_none()) {
        w.write_record([
            r.scenario.clone(),
            r.draw.to_string(),
            r.checkpoint.to_string(),
            r.n.to_string(),
            r.truth.unwrap().to_string(),
            r.psi.unwrap().to_string(),
            r.ci_lo.unwrap().to_string(),
            r.ci_hi.unwrap().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Treatment mechanism of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GSpec {
    Known,
    Estimate { library: Vec<LearnerSpec> },
}

pub fn default_library() -> Vec<LearnerSpec> {
    vec![LearnerSpec::InterceptOnly, LearnerSpec::glm(), LearnerSpec::l1_cv()]
}

/// ATE of the current treatment on a single-time-point DGP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AteScenario {
    pub name: String,
    pub dgp: DgpKind,
    /// Series length including the burn-in.
    pub n: usize,
    #[serde(default = "default_library")]
    pub q_library: Vec<LearnerSpec>,
    #[serde(default = "default_g")]
    pub g: GSpec,
    /// Context; the DGP's preset when absent.
    #[serde(default)]
    pub context: Option<ContextSpec>,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub options: TmleOptions,
}

fn default_g() -> GSpec {
    GSpec::Estimate { library: default_library() }
}

impl AteScenario {
    pub fn new(dgp: DgpKind, n: usize) -> Self {
        AteScenario {
            name: format!("{}_n{n}", dgp.name()),
            dgp,
            n,
            q_library: default_library(),
            g: default_g(),
            context: None,
            cv: CvConfig::default(),
            options: TmleOptions::default(),
        }
    }

    /// Single estimate on the draw with `seed`.
    pub fn run_draw(&self, draw: u64, seed: u64) -> DrawRecord {
        let res = (|| {
            let series = draw_dgp(self.dgp, self.n, seed, None)?;
            let spec = self.context.clone().unwrap_or_else(|| self.dgp.context_preset());
            let cfg = PointTmle {
                target: Target::Ate,
                q_library: library(&self.q_library),
                g: match &self.g {
                    GSpec::Known => GMode::Known,
                    GSpec::Estimate { library: l } => GMode::Estimate(library(l)),
                },
                cv: self.cv.clone(),
                options: self.options.clone(),
            };
            let report = tmle_ate(&series, &spec, &cfg)?;
            Ok::<_, Error>((report, true_context_ate(self.dgp, &series)?))
        })();
        match res {
            Ok((r, truth)) => DrawRecord {
                scenario: self.name.clone(),
                draw,
                seed,
                checkpoint: 0,
                n: self.n,
                psi: Some(r.psi),
                truth: Some(truth),
                ci_lo: Some(r.ci.0),
                ci_hi: Some(r.ci.1),
                se: Some(r.se),
                failure: None,
            },
            Err(e) => DrawRecord::failed(&self.name, draw, seed, 0, self.n, &e),
        }
    }
}

/// Adaptive trial on a Simulation 2 DGP; one table row per checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveScenario {
    pub name: String,
    pub dgp: DgpKind,
    pub design: AdaptiveDesign,
}

impl AdaptiveScenario {
    pub fn run_draw(&self, draw: u64, seed: u64) -> Vec<DrawRecord> {
        let checkpoints = self.design.checkpoints();
        match run_adaptive_trial(self.dgp, &self.design, seed) {
            Ok(trace) => trace
                .checkpoints
                .iter()
                .enumerate()
                .map(|(k, c)| DrawRecord {
                    scenario: self.name.clone(),
                    draw,
                    seed,
                    checkpoint: k,
                    n: c.n,
                    psi: Some(c.report.psi),
                    truth: Some(c.truth),
                    ci_lo: Some(c.report.ci.0),
                    ci_hi: Some(c.report.ci.1),
                    se: Some(c.report.se),
                    failure: None,
                })
                .collect(),
            Err(e) => checkpoints
                .iter()
                .enumerate()
                .map(|(k, &n)| DrawRecord::failed(&self.name, draw, seed, k, n, &e))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Ate(AteScenario),
    Adaptive(AdaptiveScenario),
}

impl Scenario {
    pub fn name(&self) -> &str {
        match self {
            Scenario::Ate(s) => &s.name,
            Scenario::Adaptive(s) => &s.name,
        }
    }

    fn run_draw(&self, draw: u64, seed: u64) -> Vec<DrawRecord> {
        match self {
            Scenario::Ate(s) => vec![s.run_draw(draw, seed)],
            Scenario::Adaptive(s) => s.run_draw(draw, seed),
        }
    }
}

/// Per-draw records and the metrics table of a scenario.
#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub records: Vec<DrawRecord>,
    pub table: MetricsTable,
}

/// Runs `draws` independent draws on `threads` workers (all cores when
/// `None`). Results depend only on the seeds, never on scheduling.
pub fn monte_carlo(scenario: &Scenario, draws: u64, base_seed: u64, threads: Option<usize>) -> Result<MonteCarloResult> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let per_draw: Vec<Vec<DrawRecord>> = pool.install(|| {
        (0..draws).into_par_iter().map(|d| scenario.run_draw(d, draw_seed(base_seed, d))).collect()
    });
    let records: Vec<DrawRecord> = per_draw.into_iter().flatten().collect();
    let table = table_from_records(&records)?;
    Ok(MonteCarloResult { records, table })
}

/// Groups records by `(scenario, checkpoint)` in first-appearance order.
pub fn table_from_records(records: &[DrawRecord]) -> Result<MetricsTable> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in records {
        let k = (r.scenario.clone(), r.checkpoint);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let rows = keys
        .iter()
        .map(|(s, c)| {
            let group: Vec<DrawRecord> =
                records.iter().filter(|r| &r.scenario == s && r.checkpoint == *c).cloned().collect();
            metrics_from_records(&group)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(psi: f64, truth: f64, lo: f64, hi: f64) -> DrawRecord {
        DrawRecord {
            scenario: "s".into(),
            draw: 0,
            seed: 0,
            checkpoint: 0,
            n: 10,
            psi: Some(psi),
            truth: Some(truth),
            ci_lo: Some(lo),
            ci_hi: Some(hi),
            se: Some(0.1),
            failure: None,
        }
    }

    #[test]
    fn bias_and_variance_arithmetic() {
        let r = metrics_from_records(&[rec(0.1, 0.2, 0.0, 1.0), rec(0.2, 0.2, 0.0, 1.0), rec(0.3, 0.2, 0.0, 1.0)]).unwrap();
        assert!(r.bias.abs() < 1e-15);
        assert!((r.variance - 0.01).abs() < 1e-15);
        assert_eq!(r.coverage, 100.0);
    }

    #[test]
    fn coverage_percent() {
        let r = metrics_from_records(&[
            rec(0.2, 0.2, 0.1, 0.3),
            rec(0.2, 0.5, 0.1, 0.3),
            rec(0.2, 0.25, 0.1, 0.3),
            rec(0.2, 0.0, 0.1, 0.3),
        ])
        .unwrap();
        assert_eq!(r.coverage, 50.0);
    }

    #[test]
    fn failure_budget() {
        let mut recs: Vec<DrawRecord> = (0..20).map(|_| rec(0.2, 0.2, 0.1, 0.3)).collect();
        recs[3].failure = Some("boom".into());
        let r = metrics_from_records(&recs).unwrap();
        assert_eq!((r.draws, r.failed), (19, 1));
        recs[4].failure = Some("boom".into());
        assert!(matches!(metrics_from_records(&recs), Err(Error::TooManyFailures { failed: 2, draws: 20, .. })));
    }

    #[test]
    fn seeds_are_distinct_per_draw() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|d| draw_seed(42, d)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn metrics_recompute_from_persisted_records() {
        let mut s = AteScenario::new(DgpKind::Sim1a, 150);
        s.q_library = vec![LearnerSpec::glm()];
        s.g = GSpec::Estimate { library: vec![LearnerSpec::glm()] };
        let sc = Scenario::Ate(s);
        let res = monte_carlo(&sc, 6, 9, Some(1)).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&res.records, &mut buf).unwrap();
        let back: Vec<DrawRecord> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(table_from_records(&back).unwrap(), res.table);
        let again = monte_carlo(&sc, 6, 9, Some(2)).unwrap();
        assert_eq!(again.records, res.records);
    }
}
