//! Oracle-guided RRT motion planning in the plane, with MPC path tracking
//! and a Monte Carlo benchmark harness.
//!
//! The planner asks a [`oracle::DirectionOracle`] which way to grow the tree
//! from a randomly chosen leaf, and samples inside a narrow sector in that
//! direction with probability γ. Oracles range from a white-box geometric
//! ground truth to a remote vision-chat model fed with rendered snapshots.

pub mod bench;
pub mod env;
pub mod oracle;
pub mod planner;
pub mod rng;
pub mod snapshot;
pub mod tracker;
pub mod vlm_planner;

pub use env::{Env, GoalMode, Point2, Rect, Scenario, ScenarioEvent};
pub use oracle::{CompassDirection, DirectionOracle, OracleAnswer, OracleError, OracleQuery, PromptMode};
pub use planner::{plan_rrt, plan_rrt_star, PlanResult, PlanStatus, PlannerConfig};
pub use vlm_planner::plan_vlm_rrt;
