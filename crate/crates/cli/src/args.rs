use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use guided_rrt::bench::{OracleKind, PlannerKind};
use guided_rrt::env::GoalMode;
use guided_rrt::oracle::PromptMode;
use guided_rrt::planner::PlannerConfig;
use guided_rrt::vlm_planner::RelocationPolicy;

#[derive(Debug, Parser)]
#[command(
    name = "guided-rrt",
    version,
    about = "Oracle-guided RRT planning, MPC tracking and Monte Carlo benchmarks"
)]
pub struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random feasible scenario file.
    ScenarioGen(ScenarioGenArgs),
    /// Plan a path on a scenario.
    Plan(PlanArgs),
    /// Track a saved plan with the MPC controller.
    Track(TrackArgs),
    /// Run a Monte Carlo benchmark.
    Bench(BenchArgs),
    /// Render a scenario (and optionally a plan) to PNG or SVG.
    Render(RenderArgs),
    /// Run the guided planner and save every oracle exchange for replay.
    RecordOracle(RecordArgs),
}

/// Planner parameters. Unset flags fall back to the config file, then to the
/// built-in defaults shown.
#[derive(Debug, Clone, Default, Args)]
pub struct PlannerFlags {
    /// Steering step δ in meters [default: 15]
    #[arg(long)]
    pub delta: Option<f64>,
    /// Goal tolerance ε in meters [default: 1]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Iteration budget N [default: 500]
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Probability of an oracle-guided sample γ [default: 0.85]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Sector radius r in meters [default: 30]
    #[arg(long)]
    pub sector_radius: Option<f64>,
    /// Sector aperture θ in degrees [default: 45]
    #[arg(long)]
    pub aperture: Option<f64>,
    /// RRT* rewiring radius in meters [default: 40]
    #[arg(long)]
    pub rewire_radius: Option<f64>,
    /// Goal test [default: strict-ball]
    #[arg(long, value_enum)]
    pub goal_mode: Option<GoalModeArg>,
}

impl PlannerFlags {
    pub fn apply(&self, cfg: &mut PlannerConfig) {
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.sector_radius {
            cfg.sector_radius = v;
        }
        if let Some(v) = self.aperture {
            cfg.sector_aperture_deg = v;
        }
        if let Some(v) = self.rewire_radius {
            cfg.rewire_radius = v;
        }
        if let Some(v) = self.goal_mode {
            cfg.goal_mode = v.into();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GoalModeArg {
    StrictBall,
    BallOrRect,
}

impl From<GoalModeArg> for GoalMode {
    fn from(g: GoalModeArg) -> Self {
        match g {
            GoalModeArg::StrictBall => GoalMode::StrictBall,
            GoalModeArg::BallOrRect => GoalMode::BallOrRect,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    KeepTree,
    ResetTree,
}

impl From<PolicyArg> for RelocationPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::KeepTree => RelocationPolicy::KeepTree,
            PolicyArg::ResetTree => RelocationPolicy::ResetTree,
        }
    }
}

/// `geometric`, `noisy:<p>`, `remote` or `replay:<session.jsonl>`.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleArg {
    Kind(OracleKind),
    Replay(PathBuf),
}

impl FromStr for OracleArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("replay:") {
            Some(path) if !path.is_empty() => Ok(OracleArg::Replay(path.into())),
            Some(_) => Err("replay needs a session path, e.g. replay:session.jsonl".into()),
            None => s.parse().map(OracleArg::Kind).map_err(|e: String| e),
        }
    }
}

fn parse_oracle_kind(s: &str) -> Result<OracleKind, String> {
    s.parse()
}

fn parse_prompt_mode(s: &str) -> Result<PromptMode, String> {
    s.parse()
}

fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct ScenarioGenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Obstacle count [default: 12]
    #[arg(long)]
    pub obstacles: Option<usize>,
    /// Goal relocation events to append.
    #[arg(long, default_value_t = 0)]
    pub events: usize,
    /// Iteration of the first relocation.
    #[arg(long, default_value_t = 10)]
    pub first_event: usize,
    /// Iterations between relocations.
    #[arg(long, default_value_t = 20)]
    pub event_spacing: usize,
    /// Bench config whose `scenario` section sets the distribution.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_parser = parse_planner, default_value = "vlm-rrt")]
    pub algo: PlannerKind,
    /// geometric, noisy:<p>, remote or replay:<session.jsonl>
    #[arg(long, default_value = "geometric")]
    pub oracle: OracleArg,
    /// Prompt style for the remote oracle.
    #[arg(long, value_parser = parse_prompt_mode, default_value = "zero-shot")]
    pub prompt_mode: PromptMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bench config whose `planner` section provides defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub planner: PlannerFlags,
    /// Tree policy on goal relocation.
    #[arg(long, value_enum, default_value = "keep-tree")]
    pub policy: PolicyArg,
    /// Plan result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Track the plan after a successful search.
    #[arg(long)]
    pub track: bool,
    /// Tracking report as JSON (with --track).
    #[arg(long, requires = "track")]
    pub track_out: Option<PathBuf>,
    #[command(flatten)]
    pub weights: WeightFlags,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct WeightFlags {
    /// Tracking error weight, Q = q·I.
    #[arg(long, default_value_t = 0.9)]
    pub q_weight: f64,
    /// Input weight, R = r·I.
    #[arg(long, default_value_t = 0.1)]
    pub r_weight: f64,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Plan result JSON written by `plan --out`.
    #[arg(long)]
    pub plan: PathBuf,
    #[command(flatten)]
    pub weights: WeightFlags,
    /// Tracking report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the condensed H, f, G, h as dense text.
    #[arg(long)]
    pub dump_qp: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON config with the bench config schema.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenarios per cell [default: 100]
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Comma-separated planners: rrt, rrt-star, vlm-rrt.
    #[arg(long, value_delimiter = ',', value_parser = parse_planner)]
    pub algo: Vec<PlannerKind>,
    /// Oracle for guided cells: geometric, noisy:<p> or remote.
    #[arg(long, value_parser = parse_oracle_kind)]
    pub oracle: Option<OracleKind>,
    /// Comma-separated γ values; one guided cell per value.
    #[arg(long, value_delimiter = ',')]
    pub gamma_sweep: Vec<f64>,
    #[arg(long, value_parser = parse_prompt_mode)]
    pub prompt_mode: Option<PromptMode>,
    #[command(flatten)]
    pub planner: PlannerFlags,
    /// Per-trial records as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-cell summary as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Text table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Run the moving-goal experiment instead of the planner matrix.
    #[arg(long)]
    pub dynamic: bool,
    /// Relocations per scenario (with --dynamic) [default: 3]
    #[arg(long)]
    pub events: Option<usize>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Plan result JSON to overlay.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub png: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Longer side of the PNG in pixels.
    #[arg(long, default_value_t = 512)]
    pub size: u32,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// geometric, noisy:<p> or remote
    #[arg(long, value_parser = parse_oracle_kind, default_value = "remote")]
    pub oracle: OracleKind,
    #[arg(long, value_parser = parse_prompt_mode, default_value = "zero-shot")]
    pub prompt_mode: PromptMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub planner: PlannerFlags,
    /// Session file, one JSON object per oracle call.
    #[arg(long)]
    pub out: PathBuf,
    /// Plan result as JSON.
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
}
