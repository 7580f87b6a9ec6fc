//! Baseline planners: textbook RRT and a fixed-radius RRT*.

mod rrt_star;
mod tree;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{goal_reached, segment_free, Env, GoalMode, Point2, Rect};
use crate::rng::{stream_rng, streams};

pub use rrt_star::{plan_rrt_star, plan_rrt_star_with_tree};
pub use tree::{retrieve_plan, Tree};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("`{0}` out of range")]
    OutOfRange(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Steering step, meters.
    pub delta: f64,
    /// Goal tolerance around the goal centroid, meters.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Probability of an oracle-guided sampling step.
    pub gamma: f64,
    pub sector_radius: f64,
    /// Full aperture of the sampling sector, degrees.
    pub sector_aperture_deg: f64,
    pub rng_seed: u64,
    /// RRT* neighborhood radius, meters.
    pub rewire_radius: f64,
    pub goal_mode: GoalMode,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            // ΔT · v_max = 1 s · 15 m/s
            delta: 15.0,
            epsilon: 1.0,
            max_iterations: 500,
            gamma: 0.85,
            sector_radius: 30.0,
            sector_aperture_deg: 45.0,
            rng_seed: 0,
            rewire_radius: 40.0,
            goal_mode: GoalMode::StrictBall,
        }
    }
}

impl PlannerConfig {
    /// Rejects NaN as well as out-of-range values.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ConfigError::OutOfRange("gamma"));
        }
        if !(self.delta > 0.0) {
            return Err(ConfigError::OutOfRange("delta"));
        }
        if !(self.epsilon > 0.0) {
            return Err(ConfigError::OutOfRange("epsilon"));
        }
        if !(self.sector_aperture_deg > 0.0 && self.sector_aperture_deg <= 360.0) {
            return Err(ConfigError::OutOfRange("sector_aperture_deg"));
        }
        if !(self.sector_radius > 0.0) {
            return Err(ConfigError::OutOfRange("sector_radius"));
        }
        if !(self.rewire_radius > 0.0) {
            return Err(ConfigError::OutOfRange("rewire_radius"));
        }
        Ok(())
    }

    pub fn sector_aperture_rad(&self) -> f64 {
        self.sector_aperture_deg.to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    Success,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: PlanStatus,
    /// Root-first waypoints; empty unless `status` is `Success`.
    pub path: Vec<Point2>,
    pub iterations_used: usize,
    pub tree_size: usize,
    pub vlm_queries: usize,
    /// Oracle calls that failed and fell back to uniform sampling.
    #[serde(default)]
    pub oracle_failures: usize,
    /// Iteration at which a goal vertex first appeared (RRT* keeps refining
    /// after it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_solution_iteration: Option<usize>,
    /// Seconds.
    pub wall_time: f64,
}

impl PlanResult {
    pub fn is_success(&self) -> bool {
        self.status == PlanStatus::Success
    }

    pub fn path_length(&self) -> f64 {
        path_length(&self.path)
    }

    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &PlanResult) -> bool {
        PlanResult {
            wall_time: 0.0,
            ..self.clone()
        } == PlanResult {
            wall_time: 0.0,
            ..other.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan result serializes")
    }
}

pub fn path_length(path: &[Point2]) -> f64 {
    path.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Uniform point over `bounds`.
pub fn sample_state<R: Rng + ?Sized>(rng: &mut R, bounds: &Rect) -> Point2 {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    Point2::new(bounds.min.x + u * bounds.width(), bounds.min.y + v * bounds.height())
}

/// Moves from `nearest` toward `target` by at most `delta`.
pub fn steer(nearest: Point2, target: Point2, delta: f64) -> Point2 {
    let d = target - nearest;
    let len = d.norm();
    if len <= delta {
        target
    } else {
        nearest + d * (delta / len)
    }
}

/// Outcome of one extend step (nearest → steer → collision check).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Extension {
    Inserted(usize),
    Blocked,
    /// The sample coincided with its nearest vertex.
    Degenerate,
}

pub(crate) fn extend(tree: &mut Tree, obstacles: &[Rect], target: Point2, delta: f64) -> Extension {
    let nearest = tree.nearest(target);
    let from = tree.point(nearest);
    let new = steer(from, target, delta);
    if new == from {
        return Extension::Degenerate;
    }
    if segment_free(from, new, obstacles) {
        Extension::Inserted(tree.add(new, nearest))
    } else {
        Extension::Blocked
    }
}

pub(crate) fn success(tree: &Tree, terminal: usize, iterations: usize, started: Instant) -> PlanResult {
    PlanResult {
        status: PlanStatus::Success,
        path: retrieve_plan(tree, terminal),
        iterations_used: iterations,
        tree_size: tree.len(),
        vlm_queries: 0,
        oracle_failures: 0,
        first_solution_iteration: Some(iterations),
        wall_time: started.elapsed().as_secs_f64(),
    }
}

pub(crate) fn failure(tree: &Tree, iterations: usize, started: Instant) -> PlanResult {
    PlanResult {
        status: PlanStatus::IterationLimit,
        path: Vec::new(),
        iterations_used: iterations,
        tree_size: tree.len(),
        vlm_queries: 0,
        oracle_failures: 0,
        first_solution_iteration: None,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

/// Plain RRT. Every loop pass counts as an iteration whether or not the new
/// edge survives the collision check; the goal test runs on inserted vertices.
pub fn plan_rrt(env: &Env, cfg: &PlannerConfig) -> PlanResult {
    plan_rrt_with_tree(env, cfg).0
}

pub fn plan_rrt_with_tree(env: &Env, cfg: &PlannerConfig) -> (PlanResult, Tree) {
    let started = Instant::now();
    let mut rng = stream_rng(cfg.rng_seed, streams::UNIFORM, 0);
    let mut tree = Tree::new(env.initial_position());
    let mut i = 0;
    while i < cfg.max_iterations {
        let target = sample_state(&mut rng, env.bounds());
        let ext = extend(&mut tree, env.obstacles(), target, cfg.delta);
        i += 1;
        if let Extension::Inserted(idx) = ext {
            if goal_reached(tree.point(idx), env, cfg.epsilon, cfg.goal_mode) {
                return (success(&tree, idx, i, started), tree);
            }
        }
    }
    (failure(&tree, i, started), tree)
}
