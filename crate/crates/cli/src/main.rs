//! `guided-rrt` command-line front end.
//!
//! Exit codes: 0 success, 1 planner hit its iteration limit, 2 usage or input
//! error, 3 oracle or transport failure, 4 tracking failure.

mod args;

use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Parser;
use guided_rrt::bench::{
    detection_rate, emit_report, run_bench, run_dynamic_bench, summarize, write_report, BenchConfig, BenchError,
    DynamicConfig, OracleKind, PlannerKind, PlannerSpec,
};
use guided_rrt::env::{load_scenario, random_relocations, random_scenario_with, save_scenario, Scenario};
use guided_rrt::oracle::{
    read_session, write_session, DirectionOracle, GeometricOracle, NoisyOracle, RecordingOracle, RemoteConfig,
    RemoteOracle, ReplayOracle,
};
use guided_rrt::planner::{plan_rrt, plan_rrt_star, PlanResult, PlannerConfig, Tree};
use guided_rrt::rng::{derive_seed, streams};
use guided_rrt::snapshot::{export_figure, render_snapshot};
use guided_rrt::tracker::{build_qp, track_with, tracking_problem, LtiModel, TrackError, TrackOptions, TrackReport};
use guided_rrt::vlm_planner::VlmRrt;

use args::{
    BenchArgs, Cli, Command, OracleArg, PlanArgs, RecordArgs, RenderArgs, ScenarioGenArgs, TrackArgs, WeightFlags,
};

enum Failure {
    Usage(anyhow::Error),
    Oracle(anyhow::Error),
    Track(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Oracle(_) => 3,
            Failure::Track(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Oracle(e) | Failure::Track(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

/// 0 or 1 on a completed run.
type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::ScenarioGen(a) => scenario_gen(a),
        Command::Plan(a) => plan(a),
        Command::Track(a) => track(a),
        Command::Bench(a) => bench(a),
        Command::Render(a) => render(a),
        Command::RecordOracle(a) => record_oracle(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn read_scenario(path: &Path) -> anyhow::Result<Scenario> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_scenario(&bytes).with_context(|| format!("loading scenario {}", path.display()))
}

fn read_plan(path: &Path) -> anyhow::Result<PlanResult> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))
}

fn read_config(path: Option<&Path>) -> anyhow::Result<BenchConfig> {
    match path {
        None => Ok(BenchConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn write_out(path: &Path, body: &[u8]) -> anyhow::Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn scenario_gen(a: ScenarioGenArgs) -> Outcome {
    let mut params = read_config(a.config.as_deref())?.scenario;
    if let Some(n) = a.obstacles {
        params.n_obstacles = n;
    }
    let base = random_scenario_with(a.seed, &params).context("generating scenario")?;
    let scenario = if a.events > 0 {
        let events = random_relocations(a.seed, &base.env, a.events, a.first_event, a.event_spacing, &params)
            .context("generating relocations")?;
        Scenario::new(base.env, events, a.seed).context("assembling scenario")?
    } else {
        base
    };
    let bytes = save_scenario(&scenario);
    match &a.out {
        Some(p) => {
            write_out(p, &bytes)?;
            println!(
                "scenario seed {}: {} obstacles, {} events -> {}",
                a.seed,
                scenario.env.obstacles().len(),
                scenario.events.len(),
                p.display()
            );
        }
        None => std::io::stdout().write_all(&bytes).context("writing scenario")?,
    }
    Ok(0)
}

fn planner_config(config: Option<&Path>, flags: &args::PlannerFlags, seed: u64) -> anyhow::Result<PlannerConfig> {
    let mut cfg = read_config(config)?.planner;
    flags.apply(&mut cfg);
    cfg.rng_seed = seed;
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(cfg)
}

fn remote_oracle(mode: guided_rrt::oracle::PromptMode) -> Result<RemoteOracle, Failure> {
    let mut rc = RemoteConfig::from_env().map_err(|e| Failure::Oracle(e.into()))?;
    rc.mode = mode;
    Ok(RemoteOracle::new(rc))
}

fn local_oracle(
    kind: OracleKind,
    scenario: &Scenario,
    cfg: &PlannerConfig,
    seed: u64,
) -> Option<Box<dyn DirectionOracle>> {
    let geo = GeometricOracle::new(scenario.env.obstacles(), cfg.sector_radius);
    match kind {
        OracleKind::Geometric => Some(Box::new(geo)),
        OracleKind::Noisy { p_wrong } => Some(Box::new(NoisyOracle::new(
            geo,
            p_wrong,
            derive_seed(seed, streams::ORACLE, 0),
        ))),
        OracleKind::Remote => None,
    }
}

fn build_oracle(
    arg: &OracleArg,
    mode: guided_rrt::oracle::PromptMode,
    scenario: &Scenario,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<Box<dyn DirectionOracle>, Failure> {
    match arg {
        OracleArg::Replay(path) => {
            let file = fs::File::open(path)
                .with_context(|| format!("opening session {}", path.display()))
                .map_err(Failure::Oracle)?;
            let entries = read_session(BufReader::new(file))
                .with_context(|| format!("reading session {}", path.display()))
                .map_err(Failure::Oracle)?;
            Ok(Box::new(ReplayOracle::from_session(&entries)))
        }
        OracleArg::Kind(kind) => match local_oracle(*kind, scenario, cfg, seed) {
            Some(o) => Ok(o),
            None => Ok(Box::new(remote_oracle(mode)?)),
        },
    }
}

fn summarize_plan(p: &PlanResult, algo: PlannerKind) {
    if p.is_success() {
        println!(
            "{algo}: success after {} iterations, {} waypoints, length {:.2} m, {} oracle queries ({} failed), {:.3} s",
            p.iterations_used,
            p.path.len(),
            p.path_length(),
            p.vlm_queries,
            p.oracle_failures,
            p.wall_time
        );
    } else {
        println!(
            "{algo}: no path within {} iterations ({} vertices, {} oracle queries)",
            p.iterations_used, p.tree_size, p.vlm_queries
        );
    }
}

fn track_options(w: &WeightFlags) -> TrackOptions {
    TrackOptions {
        q_weight: w.q_weight,
        r_weight: w.r_weight,
        ..TrackOptions::default()
    }
}

fn summarize_track(r: &TrackReport) {
    println!(
        "track: T = {}, endpoint {:.2} m from goal, mean error {:.2} m, max error {:.2} m, KKT residual {:.1e}",
        r.solution.controls.len(),
        r.endpoint_goal_distance,
        r.mean_error,
        r.max_error,
        r.solution.kkt_residual
    );
}

/// Tracks `plan`, writing the report to `out` even when the trajectory clips
/// an obstacle.
fn run_track(plan: &PlanResult, scenario: &Scenario, w: &WeightFlags, out: Option<&Path>) -> Result<(), Failure> {
    let result = track_with(plan, &scenario.env, &LtiModel::default(), &track_options(w));
    let report = match &result {
        Ok(r) => Some(r),
        Err(TrackError::CollisionInTrack { report, .. }) => Some(report.as_ref()),
        Err(_) => None,
    };
    if let Some(r) = report {
        summarize_track(r);
        if let Some(p) = out {
            write_out(p, r.to_json().as_bytes())?;
        }
    }
    result.map(|_| ()).map_err(|e| Failure::Track(e.into()))
}

fn plan(a: PlanArgs) -> Outcome {
    let scenario = read_scenario(&a.scenario)?;
    let cfg = planner_config(a.config.as_deref(), &a.planner, a.seed)?;
    let result = match a.algo {
        PlannerKind::Rrt | PlannerKind::RrtStar => {
            if !scenario.events.is_empty() {
                log::warn!("{} ignores the scenario's goal relocations", a.algo);
            }
            if a.algo == PlannerKind::Rrt {
                plan_rrt(&scenario.env, &cfg)
            } else {
                plan_rrt_star(&scenario.env, &cfg)
            }
        }
        PlannerKind::VlmRrt => {
            let oracle = build_oracle(&a.oracle, a.prompt_mode, &scenario, &cfg, a.seed)?;
            let out = VlmRrt::new(&scenario.env, &cfg, oracle.as_ref())
                .with_events(&scenario.events, a.policy.into())
                .run();
            for l in &out.relocations {
                println!(
                    "relocation {} at iteration {}: {}",
                    l.event_index,
                    l.at_iteration,
                    match (l.applied, l.queries_to_detection) {
                        (false, _) => "not reached".to_string(),
                        (true, Some(q)) => format!("detected after {q} queries"),
                        (true, None) => "never detected".to_string(),
                    }
                );
            }
            out.result
        }
    };
    summarize_plan(&result, a.algo);
    if let Some(p) = &a.out {
        write_out(p, result.to_json().as_bytes())?;
    }
    if result.vlm_queries > 0 && result.oracle_failures == result.vlm_queries {
        return Err(Failure::Oracle(anyhow!(
            "all {} oracle calls failed",
            result.vlm_queries
        )));
    }
    if !result.is_success() {
        return Ok(1);
    }
    if a.track {
        // Tracking follows the goal in force at the end of the search.
        let mut final_scenario = scenario.clone();
        if let Some(ev) = scenario
            .events
            .iter()
            .rev()
            .find(|e| e.at_iteration <= result.iterations_used)
        {
            final_scenario
                .env
                .relocate_goal(ev.new_goal)
                .context("applying final goal")?;
        }
        run_track(&result, &final_scenario, &a.weights, a.track_out.as_deref())?;
    }
    Ok(0)
}

fn track(a: TrackArgs) -> Outcome {
    let scenario = read_scenario(&a.scenario)?;
    let plan = read_plan(&a.plan)?;
    if let Some(p) = &a.dump_qp {
        let (problem, _) = tracking_problem(&plan, &scenario.env, &LtiModel::default(), &track_options(&a.weights))
            .map_err(|e| Failure::Track(e.into()))?;
        let mut buf = Vec::new();
        build_qp(&problem).qp.write_dense(&mut buf).context("formatting QP")?;
        write_out(p, &buf)?;
    }
    run_track(&plan, &scenario, &a.weights, a.out.as_deref())?;
    Ok(0)
}

fn bench_error(e: BenchError) -> Failure {
    match e {
        BenchError::Remote(_) => Failure::Oracle(e.into()),
        other => Failure::Usage(other.into()),
    }
}

fn bench(a: BenchArgs) -> Outcome {
    let mut cfg = read_config(a.config.as_deref())?;
    a.planner.apply(&mut cfg.planner);
    if let Some(n) = a.trials {
        cfg.n_trials = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(p) = &a.csv {
        cfg.csv_out = Some(p.clone());
    }
    if let Some(p) = &a.json {
        cfg.json_out = Some(p.clone());
    }
    if let Some(p) = &a.table {
        cfg.table_out = Some(p.clone());
    }
    if a.dynamic {
        return dynamic(&a, &cfg);
    }

    let oracle = a.oracle.unwrap_or(OracleKind::Geometric);
    let guided = |gamma: f64| PlannerSpec {
        prompt_mode: a.prompt_mode,
        ..PlannerSpec::vlm(oracle, gamma)
    };
    if !a.gamma_sweep.is_empty() {
        cfg.matrix = a.gamma_sweep.iter().map(|&g| guided(g)).collect();
    } else if !a.algo.is_empty() {
        let gamma = cfg.planner.gamma;
        cfg.matrix = a
            .algo
            .iter()
            .map(|k| match k {
                PlannerKind::Rrt => PlannerSpec::rrt(),
                PlannerKind::RrtStar => PlannerSpec::rrt_star(),
                PlannerKind::VlmRrt => guided(gamma),
            })
            .collect();
    } else {
        for spec in cfg.matrix.iter_mut().filter(|s| s.planner == PlannerKind::VlmRrt) {
            if let Some(o) = a.oracle {
                spec.oracle = Some(o);
            }
            if let Some(g) = a.planner.gamma {
                spec.gamma = Some(g);
            }
            if a.prompt_mode.is_some() {
                spec.prompt_mode = a.prompt_mode;
            }
        }
    }

    let records = run_bench(&cfg).map_err(bench_error)?;
    let report = emit_report(&records).map_err(bench_error)?;
    write_report(&cfg, &report).map_err(bench_error)?;
    print!("{}", report.table);
    let cells = summarize(&records);
    if let Some(c) = cells.iter().find(|c| c.trials > 0 && c.successes < c.trials) {
        log::info!("{}: {} of {} trials failed", c.cell, c.trials - c.successes, c.trials);
    }
    Ok(0)
}

fn dynamic(a: &BenchArgs, cfg: &BenchConfig) -> Outcome {
    let defaults = DynamicConfig::default();
    let dc = DynamicConfig {
        n_scenarios: a.trials.unwrap_or(defaults.n_scenarios),
        events_per_scenario: a.events.unwrap_or(defaults.events_per_scenario),
        oracle: a.oracle.unwrap_or(defaults.oracle),
        policy: a.policy.map_or(defaults.policy, Into::into),
        planner: cfg.planner.clone(),
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        jobs: cfg.jobs,
        ..defaults
    };
    let trials = run_dynamic_bench(&dc).map_err(bench_error)?;
    let records: Vec<_> = trials.iter().map(|t| t.record.clone()).collect();
    let report = emit_report(&records).map_err(bench_error)?;
    write_report(cfg, &report).map_err(bench_error)?;
    let (rate, hits, n) = detection_rate(&trials);
    let successes = records.iter().filter(|r| r.is_success()).count();
    println!(
        "dynamic goal, oracle {}: detection within one query {:.1}% ({hits}/{n}), final-goal success {}/{}",
        dc.oracle,
        100.0 * rate,
        successes,
        records.len()
    );
    Ok(0)
}

fn render(a: RenderArgs) -> Outcome {
    if a.png.is_none() && a.svg.is_none() {
        return Err(Failure::Usage(anyhow!("render needs --png and/or --svg")));
    }
    let scenario = read_scenario(&a.scenario)?;
    let plan = a.plan.as_deref().map(read_plan).transpose()?;
    if let Some(p) = &a.png {
        let mut tree = Tree::new(scenario.env.initial_position());
        if let Some(plan) = &plan {
            let mut parent = 0;
            for &q in plan.path.iter().skip(1) {
                parent = tree.add(q, parent);
            }
        }
        let snap = render_snapshot(&scenario.env, &tree, None, None, a.size);
        write_out(p, &snap.to_png())?;
        println!("wrote {}x{} PNG to {}", snap.width, snap.height, p.display());
    }
    if let Some(p) = &a.svg {
        write_out(p, &export_figure(&scenario.env, None, plan.as_ref(), None))?;
        println!("wrote SVG to {}", p.display());
    }
    Ok(0)
}

fn record_oracle(a: RecordArgs) -> Outcome {
    let scenario = read_scenario(&a.scenario)?;
    let cfg = planner_config(None, &a.planner, a.seed)?;
    let inner: Box<dyn DirectionOracle> = match local_oracle(a.oracle, &scenario, &cfg, a.seed) {
        Some(o) => o,
        None => Box::new(remote_oracle(a.prompt_mode)?),
    };
    let recorder = RecordingOracle::new(inner);
    let out = VlmRrt::new(&scenario.env, &cfg, &recorder)
        .with_events(&scenario.events, Default::default())
        .run();
    let entries = recorder.into_entries();
    let mut buf = Vec::new();
    write_session(&mut buf, &entries).context("formatting session")?;
    write_out(&a.out, &buf)?;
    summarize_plan(&out.result, PlannerKind::VlmRrt);
    println!("recorded {} oracle exchanges to {}", entries.len(), a.out.display());
    if let Some(p) = &a.plan_out {
        write_out(p, out.result.to_json().as_bytes())?;
    }
    if out.result.vlm_queries > 0 && out.result.oracle_failures == out.result.vlm_queries {
        return Err(Failure::Oracle(anyhow!(
            "all {} oracle calls failed",
            out.result.vlm_queries
        )));
    }
    Ok(if out.result.is_success() { 0 } else { 1 })
}
