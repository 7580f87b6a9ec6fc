//! Monte Carlo harness: paired trials over random scenarios, per-cell
//! aggregates with Wilson intervals, and CSV / JSON / text reports.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{random_relocations, random_scenario_with, EnvError, Scenario, ScenarioParams};
use crate::oracle::{DirectionOracle, GeometricOracle, NoisyOracle, PromptMode, RemoteConfig, RemoteOracle};
use crate::planner::{plan_rrt, plan_rrt_star, PlanResult, PlanStatus, PlannerConfig};
use crate::rng::{derive_seed, streams};
use crate::vlm_planner::{RelocationLog, RelocationPolicy, VlmRrt};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    Config(String),
    #[error("remote oracle: {0}")]
    Remote(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Rrt,
    RrtStar,
    VlmRrt,
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerKind::Rrt => "RRT",
            PlannerKind::RrtStar => "RRT*",
            PlannerKind::VlmRrt => "VLM-RRT",
        })
    }
}

impl FromStr for PlannerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rrt" => Ok(PlannerKind::Rrt),
            "rrt*" | "rrt-star" | "rrtstar" => Ok(PlannerKind::RrtStar),
            "vlm-rrt" | "vlmrrt" | "vlm" => Ok(PlannerKind::VlmRrt),
            _ => Err(format!("unknown planner `{s}` (rrt, rrt-star, vlm-rrt)")),
        }
    }
}

/// Which direction oracle a guided planner talks to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OracleKind {
    Geometric,
    Noisy {
        p_wrong: f64,
    },
    /// Vision-chat endpoint from the `ORACLE_*` environment variables.
    Remote,
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleKind::Geometric => f.write_str("geometric"),
            OracleKind::Noisy { p_wrong } => write!(f, "noisy:{p_wrong}"),
            OracleKind::Remote => f.write_str("remote"),
        }
    }
}

impl FromStr for OracleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "geometric" => Ok(OracleKind::Geometric),
            None if s == "remote" => Ok(OracleKind::Remote),
            Some(("noisy", p)) => {
                let p_wrong: f64 = p.parse().map_err(|_| format!("bad probability in `{s}`"))?;
                if !(0.0..=1.0).contains(&p_wrong) {
                    return Err(format!("probability out of range in `{s}`"));
                }
                Ok(OracleKind::Noisy { p_wrong })
            }
            _ => Err(format!("unknown oracle `{s}` (geometric, noisy:<p>, remote)")),
        }
    }
}

/// One cell of the planner matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSpec {
    pub planner: PlannerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleKind>,
    /// Overrides the base config's γ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_mode: Option<PromptMode>,
}

impl PlannerSpec {
    pub fn rrt() -> Self {
        PlannerSpec {
            planner: PlannerKind::Rrt,
            oracle: None,
            gamma: None,
            prompt_mode: None,
        }
    }

    pub fn rrt_star() -> Self {
        PlannerSpec {
            planner: PlannerKind::RrtStar,
            ..Self::rrt()
        }
    }

    pub fn vlm(oracle: OracleKind, gamma: f64) -> Self {
        PlannerSpec {
            planner: PlannerKind::VlmRrt,
            oracle: Some(oracle),
            gamma: Some(gamma),
            prompt_mode: None,
        }
    }

    /// Short human-readable cell name.
    pub fn label(&self) -> String {
        let mut s = self.planner.to_string();
        if self.planner == PlannerKind::VlmRrt {
            let mut parts = vec![self.oracle.unwrap_or(OracleKind::Geometric).to_string()];
            if let Some(g) = self.gamma {
                parts.push(format!("gamma={g}"));
            }
            if let Some(m) = self.prompt_mode {
                parts.push(m.to_string());
            }
            let _ = write!(s, "[{}]", parts.join(","));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_trials: usize,
    pub matrix: Vec<PlannerSpec>,
    pub planner: PlannerConfig,
    pub scenario: ScenarioParams,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    pub csv_out: Option<PathBuf>,
    pub json_out: Option<PathBuf>,
    pub table_out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_trials: 100,
            matrix: vec![
                PlannerSpec::rrt(),
                PlannerSpec::rrt_star(),
                PlannerSpec::vlm(OracleKind::Geometric, 0.85),
            ],
            planner: PlannerConfig::default(),
            scenario: ScenarioParams::default(),
            seed: 0,
            jobs: 0,
            csv_out: None,
            json_out: None,
            table_out: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n_trials == 0 {
            return Err(BenchError::Config("n_trials must be at least 1".into()));
        }
        if self.matrix.is_empty() {
            return Err(BenchError::Config("planner matrix is empty".into()));
        }
        self.planner.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        for spec in &self.matrix {
            if let Some(g) = spec.gamma {
                if !(0.0..=1.0).contains(&g) {
                    return Err(BenchError::Config(format!(
                        "gamma {g} out of range in {}",
                        spec.label()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Scenario `k` of this configuration; identical for every planner.
    pub fn scenario(&self, k: usize) -> Result<Scenario, EnvError> {
        random_scenario_with(derive_seed(self.seed, streams::SCENARIO, k as u64), &self.scenario)
    }

    /// Planner config for scenario `k` and cell `spec`. The random seed depends
    /// on the scenario only, so cells stay paired.
    pub fn planner_config(&self, k: usize, spec: &PlannerSpec) -> PlannerConfig {
        PlannerConfig {
            rng_seed: derive_seed(self.seed, streams::TRIAL, k as u64),
            gamma: spec.gamma.unwrap_or(self.planner.gamma),
            ..self.planner.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Success,
    IterationLimit,
    /// The trial could not run (e.g. no feasible scenario was drawn).
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario_id: usize,
    pub planner: PlannerKind,
    pub oracle_kind: String,
    pub prompt_mode: Option<PromptMode>,
    pub gamma: Option<f64>,
    pub status: TrialStatus,
    pub iterations: usize,
    /// Meters; present only on success.
    pub path_length: Option<f64>,
    pub vlm_queries: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl TrialRecord {
    fn from_plan(k: usize, spec: &PlannerSpec, plan: &PlanResult) -> Self {
        TrialRecord {
            scenario_id: k,
            planner: spec.planner,
            oracle_kind: spec.oracle.map_or("none".into(), |o| o.to_string()),
            prompt_mode: spec.prompt_mode,
            gamma: (spec.planner == PlannerKind::VlmRrt).then_some(spec.gamma).flatten(),
            status: match plan.status {
                PlanStatus::Success => TrialStatus::Success,
                PlanStatus::IterationLimit => TrialStatus::IterationLimit,
            },
            iterations: plan.iterations_used,
            path_length: plan.is_success().then(|| plan.path_length()),
            vlm_queries: plan.vlm_queries,
            wall_time: plan.wall_time,
        }
    }

    fn error(k: usize, spec: &PlannerSpec) -> Self {
        TrialRecord {
            scenario_id: k,
            planner: spec.planner,
            oracle_kind: spec.oracle.map_or("none".into(), |o| o.to_string()),
            prompt_mode: spec.prompt_mode,
            gamma: spec.gamma,
            status: TrialStatus::Error,
            iterations: 0,
            path_length: None,
            vlm_queries: 0,
            wall_time: 0.0,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == TrialStatus::Success
    }

    /// Cell key shared by all trials of one matrix entry.
    pub fn cell(&self) -> String {
        PlannerSpec {
            planner: self.planner,
            oracle: self.oracle_kind.parse().ok(),
            gamma: self.gamma,
            prompt_mode: self.prompt_mode,
        }
        .label()
    }

    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &TrialRecord) -> bool {
        TrialRecord {
            wall_time: 0.0,
            ..self.clone()
        } == TrialRecord {
            wall_time: 0.0,
            ..other.clone()
        }
    }
}

/// Builds the oracle for one trial; remote oracles are shared across trials.
enum OracleHandle {
    Local(Box<dyn DirectionOracle>),
    Shared(Arc<RemoteOracle>),
}

impl OracleHandle {
    fn get(&self) -> &dyn DirectionOracle {
        match self {
            OracleHandle::Local(o) => o.as_ref(),
            OracleHandle::Shared(o) => o.as_ref(),
        }
    }
}

fn remote_for(spec: &PlannerSpec) -> Result<Option<Arc<RemoteOracle>>, BenchError> {
    if spec.oracle != Some(OracleKind::Remote) {
        return Ok(None);
    }
    let mut rc = RemoteConfig::from_env().map_err(|e| BenchError::Remote(e.to_string()))?;
    if let Some(m) = spec.prompt_mode {
        rc.mode = m;
    }
    Ok(Some(Arc::new(RemoteOracle::new(rc))))
}

fn oracle_for(
    kind: OracleKind,
    scenario: &Scenario,
    cfg: &PlannerConfig,
    oracle_seed: u64,
    remote: Option<&Arc<RemoteOracle>>,
) -> OracleHandle {
    let geo = GeometricOracle::new(scenario.env.obstacles(), cfg.sector_radius);
    match kind {
        OracleKind::Geometric => OracleHandle::Local(Box::new(geo)),
        OracleKind::Noisy { p_wrong } => OracleHandle::Local(Box::new(NoisyOracle::new(geo, p_wrong, oracle_seed))),
        OracleKind::Remote => OracleHandle::Shared(Arc::clone(remote.expect("remote oracle prepared"))),
    }
}

/// Runs one planner on one scenario.
pub fn run_trial(
    cfg: &BenchConfig,
    k: usize,
    scenario: &Scenario,
    spec: &PlannerSpec,
    remote: Option<&Arc<RemoteOracle>>,
) -> TrialRecord {
    let pc = cfg.planner_config(k, spec);
    let plan = match spec.planner {
        PlannerKind::Rrt => plan_rrt(&scenario.env, &pc),
        PlannerKind::RrtStar => plan_rrt_star(&scenario.env, &pc),
        PlannerKind::VlmRrt => {
            let oracle_seed = derive_seed(cfg.seed, streams::ORACLE, k as u64);
            let handle = oracle_for(
                spec.oracle.unwrap_or(OracleKind::Geometric),
                scenario,
                &pc,
                oracle_seed,
                remote,
            );
            VlmRrt::new(&scenario.env, &pc, handle.get()).run().result
        }
    };
    TrialRecord::from_plan(k, spec, &plan)
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
}

/// All trials of the matrix, sorted by scenario then matrix order.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<TrialRecord>, BenchError> {
    cfg.validate()?;
    let remotes = cfg.matrix.iter().map(remote_for).collect::<Result<Vec<_>, _>>()?;
    let mut indexed: Vec<(usize, usize, TrialRecord)> = pool(cfg.jobs).install(|| {
        (0..cfg.n_trials)
            .into_par_iter()
            .flat_map_iter(|k| {
                let scenario = cfg.scenario(k);
                if let Err(e) = &scenario {
                    log::warn!("scenario {k}: {e}");
                }
                cfg.matrix
                    .iter()
                    .enumerate()
                    .map(|(c, spec)| {
                        let rec = match &scenario {
                            Ok(s) => run_trial(cfg, k, s, spec, remotes[c].as_ref()),
                            Err(_) => TrialRecord::error(k, spec),
                        };
                        (k, c, rec)
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    });
    indexed.sort_by_key(|(k, c, _)| (*k, *c));
    Ok(indexed.into_iter().map(|(_, _, r)| r).collect())
}

/// Per-cell aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub planner: PlannerKind,
    pub oracle_kind: String,
    pub prompt_mode: Option<PromptMode>,
    pub gamma: Option<f64>,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub success_ci_low: f64,
    pub success_ci_high: f64,
    /// Over successful trials only.
    pub mean_iterations_success: Option<f64>,
    /// Over all trials; failures count their full iteration budget.
    pub mean_iterations_all: f64,
    /// Over successful trials only.
    pub mean_path_length: Option<f64>,
    pub mean_vlm_queries: f64,
    pub mean_wall_time: f64,
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Cells in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let key = r.cell();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|cell| {
            let rs = &groups[&cell];
            let first = rs[0];
            let n = rs.len();
            let successes = rs.iter().filter(|r| r.is_success()).count();
            let (lo, hi) = wilson_interval(successes, n);
            CellSummary {
                planner: first.planner,
                oracle_kind: first.oracle_kind.clone(),
                prompt_mode: first.prompt_mode,
                gamma: first.gamma,
                trials: n,
                successes,
                success_rate: successes as f64 / n as f64,
                success_ci_low: lo,
                success_ci_high: hi,
                mean_iterations_success: mean(rs.iter().filter(|r| r.is_success()).map(|r| r.iterations as f64)),
                mean_iterations_all: mean(rs.iter().map(|r| r.iterations as f64)).unwrap_or(0.0),
                mean_path_length: mean(rs.iter().filter_map(|r| r.path_length)),
                mean_vlm_queries: mean(rs.iter().map(|r| r.vlm_queries as f64)).unwrap_or(0.0),
                mean_wall_time: mean(rs.iter().map(|r| r.wall_time)).unwrap_or(0.0),
                cell,
            }
        })
        .collect()
}

/// "94% (47/50)".
pub fn format_success(successes: usize, trials: usize) -> String {
    let pct = if trials == 0 {
        0.0
    } else {
        100.0 * successes as f64 / trials as f64
    };
    format!("{pct:.0}% ({successes}/{trials})")
}

pub struct Report {
    pub csv: String,
    pub json: String,
    pub table: String,
}

pub fn records_to_csv(records: &[TrialRecord]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn records_from_csv(text: &str) -> Result<Vec<TrialRecord>, BenchError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize().map(|r| r.map_err(BenchError::from)).collect()
}

pub fn render_table(cells: &[CellSummary]) -> String {
    let header = [
        "Algorithm",
        "Oracle",
        "Prompt",
        "gamma",
        "Success Rate",
        "Avg. Iterations (N)",
        "Avg. Path Length (m)",
    ];
    let rows: Vec<[String; 7]> = cells
        .iter()
        .map(|c| {
            let dash = || "-".to_string();
            [
                c.planner.to_string(),
                if c.oracle_kind == "none" {
                    dash()
                } else {
                    c.oracle_kind.clone()
                },
                c.prompt_mode.map_or_else(dash, |m| m.to_string()),
                c.gamma.map_or_else(dash, |g| format!("{g:.2}")),
                format_success(c.successes, c.trials),
                c.mean_iterations_success.map_or_else(dash, |m| format!("{m:.0}")),
                c.mean_path_length.map_or_else(dash, |m| format!("{m:.1}")),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, s) in widths.iter_mut().zip(r) {
            *w = (*w).max(s.chars().count());
        }
    }
    let line = |cols: Vec<&str>| {
        cols.iter()
            .zip(widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn emit_report(records: &[TrialRecord]) -> Result<Report, BenchError> {
    if records.is_empty() {
        return Err(BenchError::Config("no records to report".into()));
    }
    let cells = summarize(records);
    Ok(Report {
        csv: records_to_csv(records)?,
        json: serde_json::to_string_pretty(&cells).expect("summary serializes"),
        table: render_table(&cells),
    })
}

/// Writes whichever report files the config names.
pub fn write_report(cfg: &BenchConfig, report: &Report) -> Result<(), BenchError> {
    for (path, body) in [
        (&cfg.csv_out, &report.csv),
        (&cfg.json_out, &report.json),
        (&cfg.table_out, &report.table),
    ] {
        if let Some(p) = path {
            std::fs::write(p, body)?;
        }
    }
    Ok(())
}

/// Dynamic-goal experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicConfig {
    pub n_scenarios: usize,
    pub events_per_scenario: usize,
    pub first_event: usize,
    pub event_spacing: usize,
    pub oracle: OracleKind,
    pub policy: RelocationPolicy,
    pub planner: PlannerConfig,
    pub scenario: ScenarioParams,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            n_scenarios: 50,
            events_per_scenario: 3,
            first_event: 10,
            event_spacing: 20,
            oracle: OracleKind::Noisy { p_wrong: 0.08 },
            policy: RelocationPolicy::KeepTree,
            planner: PlannerConfig::default(),
            scenario: ScenarioParams::default(),
            seed: 0,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicTrial {
    pub record: TrialRecord,
    pub relocations: Vec<RelocationLog>,
}

/// Plans on a scenario whose goal moves at the scheduled iterations; success
/// means reaching the final goal.
pub fn run_dynamic_goal(
    scenario: &Scenario,
    cfg: &PlannerConfig,
    oracle: &dyn DirectionOracle,
    policy: RelocationPolicy,
    scenario_id: usize,
    oracle_kind: OracleKind,
) -> DynamicTrial {
    let out = VlmRrt::new(&scenario.env, cfg, oracle)
        .with_events(&scenario.events, policy)
        .run();
    let spec = PlannerSpec::vlm(oracle_kind, cfg.gamma);
    DynamicTrial {
        record: TrialRecord::from_plan(scenario_id, &spec, &out.result),
        relocations: out.relocations,
    }
}

/// Scenario `k` of a dynamic-goal run, relocation events included.
pub fn dynamic_scenario(cfg: &DynamicConfig, k: usize) -> Result<Scenario, EnvError> {
    let base = random_scenario_with(derive_seed(cfg.seed, streams::SCENARIO, k as u64), &cfg.scenario)?;
    let events = random_relocations(
        derive_seed(cfg.seed, streams::SCENARIO, k as u64),
        &base.env,
        cfg.events_per_scenario,
        cfg.first_event,
        cfg.event_spacing,
        &cfg.scenario,
    )?;
    Scenario::new(base.env, events, base.seed)
}

pub fn run_dynamic_bench(cfg: &DynamicConfig) -> Result<Vec<DynamicTrial>, BenchError> {
    if cfg.n_scenarios == 0 || cfg.events_per_scenario == 0 {
        return Err(BenchError::Config(
            "dynamic runs need at least one scenario and one event".into(),
        ));
    }
    if cfg.oracle == OracleKind::Remote {
        return Err(BenchError::Config(
            "dynamic-goal runs support local oracles only".into(),
        ));
    }
    let trials: Vec<Result<DynamicTrial, EnvError>> = pool(cfg.jobs).install(|| {
        (0..cfg.n_scenarios)
            .into_par_iter()
            .map(|k| {
                let scenario = dynamic_scenario(cfg, k)?;
                let pc = PlannerConfig {
                    rng_seed: derive_seed(cfg.seed, streams::TRIAL, k as u64),
                    ..cfg.planner.clone()
                };
                let handle = oracle_for(
                    cfg.oracle,
                    &scenario,
                    &pc,
                    derive_seed(cfg.seed, streams::ORACLE, k as u64),
                    None,
                );
                Ok(run_dynamic_goal(
                    &scenario,
                    &pc,
                    handle.get(),
                    cfg.policy,
                    k,
                    cfg.oracle,
                ))
            })
            .collect()
    });
    trials.into_iter().map(|t| t.map_err(BenchError::from)).collect()
}

/// Share of applied relocations whose first post-event query already pointed
/// at the new goal, with the count behind it.
pub fn detection_rate(trials: &[DynamicTrial]) -> (f64, usize, usize) {
    let applied: Vec<&RelocationLog> = trials
        .iter()
        .flat_map(|t| &t.relocations)
        .filter(|l| l.applied)
        .collect();
    let hits = applied.iter().filter(|l| l.detected_on_first_query()).count();
    let n = applied.len();
    let rate = if n > 0 { hits as f64 / n as f64 } else { 0.0 };
    (rate, hits, n)
}
