//! RRT whose sampler, with probability γ, asks a direction oracle which way a
//! random leaf should grow and then samples inside a circular sector aimed
//! that way. The rest of each iteration is ordinary RRT.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{goal_reached, Env, Point2, ScenarioEvent};
use crate::oracle::{DirectionOracle, GeometricOracle, OracleQuery, HISTORY_LIMIT};
use crate::planner::{extend, failure, sample_state, success, Extension, PlanResult, PlannerConfig, Tree};
use crate::rng::{stream_rng, streams};
use crate::snapshot::{SceneView, DEFAULT_SIZE};

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Eight-point compass heading. Angles are world-frame: E = 0, N = π/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompassDirection {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl CompassDirection {
    /// Clockwise from north; this order also breaks oracle ties.
    pub const ALL: [CompassDirection; 8] = [
        CompassDirection::N,
        CompassDirection::NE,
        CompassDirection::E,
        CompassDirection::SE,
        CompassDirection::S,
        CompassDirection::SW,
        CompassDirection::W,
        CompassDirection::NW,
    ];

    pub fn to_angle(self) -> f64 {
        use CompassDirection::*;
        let k = match self {
            E => 0,
            NE => 1,
            N => 2,
            NW => 3,
            W => 4,
            SW => 5,
            S => 6,
            SE => 7,
        };
        wrap_angle(k as f64 * FRAC_PI_4)
    }

    pub fn token(self) -> &'static str {
        use CompassDirection::*;
        match self {
            N => "N",
            NE => "NE",
            E => "E",
            SE => "SE",
            S => "S",
            SW => "SW",
            W => "W",
            NW => "NW",
        }
    }

    pub fn name(self) -> &'static str {
        use CompassDirection::*;
        match self {
            N => "north",
            NE => "north-east",
            E => "east",
            SE => "south-east",
            S => "south",
            SW => "south-west",
            W => "west",
            NW => "north-west",
        }
    }

    /// Compass point closest to a world-frame angle.
    pub fn nearest(angle: f64) -> Self {
        let k = (wrap_angle(angle) / FRAC_PI_4).round().rem_euclid(8.0) as usize;
        use CompassDirection::*;
        [E, NE, N, NW, W, SW, S, SE][k]
    }

    /// Absolute angular difference to `angle`, in `[0, π]`.
    pub fn angular_error(self, angle: f64) -> f64 {
        wrap_angle(angle - self.to_angle()).abs()
    }
}

impl fmt::Display for CompassDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for CompassDirection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CompassDirection::ALL
            .into_iter()
            .find(|d| d.token().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown compass direction `{s}`"))
    }
}

/// Circular wedge: apex, heading, radius and full aperture (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub apex: Point2,
    pub direction: f64,
    pub radius: f64,
    pub aperture: f64,
}

impl Sector {
    pub fn new(apex: Point2, direction: f64, radius: f64, aperture: f64) -> Self {
        assert!(radius > 0.0, "sector radius must be positive");
        assert!(aperture > 0.0 && aperture <= TAU, "sector aperture must be in (0, 2π]");
        Sector {
            apex,
            direction,
            radius,
            aperture,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        let d = p - self.apex;
        if d.norm() > self.radius {
            return false;
        }
        if self.aperture >= TAU || d.norm() == 0.0 {
            return true;
        }
        wrap_angle(d.angle() - self.direction).abs() <= self.aperture / 2.0 + 1e-12
    }

    /// Area-uniform draw over the full sector (ignores world bounds).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let rho = self.radius * u.sqrt();
        let phi = self.direction + self.aperture * (v - 0.5);
        self.apex + Point2::from_polar(rho, phi)
    }
}

/// Uniform choice among childless vertices.
pub fn pick_leaf_node<R: Rng + ?Sized>(tree: &Tree, rng: &mut R) -> usize {
    let leaves = tree.leaves();
    leaves[rng.random_range(0..leaves.len())]
}

pub const SECTOR_MAX_REJECTIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorSample {
    pub point: Point2,
    /// The sector never yielded an in-bounds point and the draw fell back to
    /// uniform sampling over the world.
    pub fallback: bool,
}

/// Uniform draw over `sector ∩ bounds` by rejection, falling back to a
/// uniform world sample after [`SECTOR_MAX_REJECTIONS`] misses.
pub fn sample_state_vlm<R: Rng + ?Sized>(
    apex: Point2,
    direction: CompassDirection,
    radius: f64,
    aperture: f64,
    env: &Env,
    rng: &mut R,
) -> SectorSample {
    let sector = Sector::new(apex, direction.to_angle(), radius, aperture);
    for _ in 0..SECTOR_MAX_REJECTIONS {
        let p = sector.sample(rng);
        if env.bounds().contains(p) {
            return SectorSample {
                point: p,
                fallback: false,
            };
        }
    }
    SectorSample {
        point: sample_state(rng, env.bounds()),
        fallback: true,
    }
}

/// How one iteration chose its random target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SampleSource {
    Uniform,
    Guided {
        leaf: usize,
        direction: CompassDirection,
        fallback: bool,
    },
    /// The oracle failed; this iteration sampled uniformly.
    OracleFailed {
        leaf: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub source: SampleSource,
    pub target: Point2,
    pub inserted: Option<usize>,
}

/// What happened after one goal relocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelocationLog {
    pub event_index: usize,
    pub at_iteration: usize,
    pub applied: bool,
    /// Oracle queries issued after the event up to and including the first
    /// answer that points at the new goal.
    pub queries_to_detection: Option<usize>,
    pub iterations_to_detection: Option<usize>,
}

impl RelocationLog {
    pub fn detected_on_first_query(&self) -> bool {
        self.queries_to_detection == Some(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelocationPolicy {
    /// Keep the tree and only retarget the goal test and oracle.
    #[default]
    KeepTree,
    /// Restart from a fresh tree at the initial position.
    ResetTree,
}

#[derive(Debug, Clone)]
pub struct VlmOutcome {
    pub result: PlanResult,
    pub tree: Tree,
    /// Environment at the end of the run (goal may have moved).
    pub env: Env,
    pub relocations: Vec<RelocationLog>,
    pub trace: Vec<IterationTrace>,
}

/// Oracle-guided planner with optional goal relocation events.
pub struct VlmRrt<'a> {
    env: Env,
    cfg: PlannerConfig,
    oracle: &'a dyn DirectionOracle,
    events: Vec<ScenarioEvent>,
    policy: RelocationPolicy,
    record_trace: bool,
    snapshot_size: u32,
}

const DETECTION_TOLERANCE: f64 = FRAC_PI_4 + 1e-9;

/// An answer counts as having seen the goal when it is within 45° of the
/// bearing, or when it is the progress-maximizing direction toward it (which
/// may be a detour around an obstacle).
fn points_at_goal(d: CompassDirection, from: Point2, goal: Point2, truth: &GeometricOracle) -> bool {
    d.angular_error((goal - from).angle()) <= DETECTION_TOLERANCE || d == truth.decide(from, goal)
}

impl<'a> VlmRrt<'a> {
    pub fn new(env: &Env, cfg: &PlannerConfig, oracle: &'a dyn DirectionOracle) -> Self {
        VlmRrt {
            env: env.clone(),
            cfg: cfg.clone(),
            oracle,
            events: Vec::new(),
            policy: RelocationPolicy::default(),
            record_trace: false,
            snapshot_size: DEFAULT_SIZE,
        }
    }

    pub fn with_events(mut self, events: &[ScenarioEvent], policy: RelocationPolicy) -> Self {
        self.events = events.to_vec();
        self.policy = policy;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn with_snapshot_size(mut self, size: u32) -> Self {
        self.snapshot_size = size;
        self
    }

    pub fn run(self) -> VlmOutcome {
        let started = Instant::now();
        let VlmRrt {
            mut env,
            cfg,
            oracle,
            events,
            policy,
            record_trace,
            snapshot_size,
        } = self;
        let mut uniform_rng = stream_rng(cfg.rng_seed, streams::UNIFORM, 0);
        let mut guide_rng: ChaCha8Rng = stream_rng(cfg.rng_seed, streams::GUIDE, 0);
        let aperture = cfg.sector_aperture_rad();
        let mut tree = Tree::new(env.initial_position());
        let mut history: Vec<(Point2, CompassDirection)> = Vec::new();
        let mut relocations: Vec<RelocationLog> = events
            .iter()
            .enumerate()
            .map(|(k, e)| RelocationLog {
                event_index: k,
                at_iteration: e.at_iteration,
                applied: false,
                queries_to_detection: None,
                iterations_to_detection: None,
            })
            .collect();
        // (log index, queries since event, iteration of event)
        let mut pending: Option<(usize, usize, usize)> = None;
        let mut next_event = 0;
        let truth = GeometricOracle::new(env.obstacles(), cfg.sector_radius);
        let mut trace = Vec::new();
        let mut queries = 0;
        let mut failures = 0;

        let mut i = 0;
        while i < cfg.max_iterations {
            while next_event < events.len() && events[next_event].at_iteration <= i + 1 {
                let ev = events[next_event];
                if env.relocate_goal(ev.new_goal).is_ok() {
                    relocations[next_event].applied = true;
                    pending = Some((next_event, 0, i + 1));
                    if policy == RelocationPolicy::ResetTree {
                        tree = Tree::new(env.initial_position());
                    }
                }
                next_event += 1;
            }

            let alpha = 1.0 - guide_rng.random::<f64>();
            let (target, source) = if alpha <= cfg.gamma {
                let leaf = pick_leaf_node(&tree, &mut guide_rng);
                let apex = tree.point(leaf);
                let recent = &history[history.len().saturating_sub(HISTORY_LIMIT)..];
                let answer = {
                    let scene = SceneView::lazy(&env, &tree, Some(leaf), snapshot_size);
                    let query = OracleQuery {
                        scene: &scene,
                        query_point: apex,
                        goal_centroid: env.goal_centroid(),
                        history: recent,
                    };
                    oracle.answer(&query)
                };
                queries += 1;
                if let Some((log, n, at)) = pending.as_mut() {
                    *n += 1;
                    let hit = answer
                        .as_ref()
                        .is_ok_and(|a| points_at_goal(a.direction, apex, env.goal_centroid(), &truth));
                    if hit {
                        relocations[*log].queries_to_detection = Some(*n);
                        relocations[*log].iterations_to_detection = Some(i + 1 - *at);
                        pending = None;
                    }
                }
                match answer {
                    Ok(a) => {
                        history.push((apex, a.direction));
                        let s = sample_state_vlm(apex, a.direction, cfg.sector_radius, aperture, &env, &mut guide_rng);
                        (
                            s.point,
                            SampleSource::Guided {
                                leaf,
                                direction: a.direction,
                                fallback: s.fallback,
                            },
                        )
                    }
                    Err(e) => {
                        log::warn!("oracle failed at iteration {}: {e}", i + 1);
                        failures += 1;
                        (
                            sample_state(&mut uniform_rng, env.bounds()),
                            SampleSource::OracleFailed { leaf },
                        )
                    }
                }
            } else {
                (sample_state(&mut uniform_rng, env.bounds()), SampleSource::Uniform)
            };

            let ext = extend(&mut tree, env.obstacles(), target, cfg.delta);
            i += 1;
            let inserted = match ext {
                Extension::Inserted(idx) => Some(idx),
                _ => None,
            };
            if record_trace {
                trace.push(IterationTrace {
                    iteration: i,
                    source,
                    target,
                    inserted,
                });
            }
            if let Some(idx) = inserted {
                if goal_reached(tree.point(idx), &env, cfg.epsilon, cfg.goal_mode) {
                    let mut result = success(&tree, idx, i, started);
                    result.vlm_queries = queries;
                    result.oracle_failures = failures;
                    return VlmOutcome {
                        result,
                        tree,
                        env,
                        relocations,
                        trace,
                    };
                }
            }
        }
        let mut result = failure(&tree, i, started);
        result.vlm_queries = queries;
        result.oracle_failures = failures;
        VlmOutcome {
            result,
            tree,
            env,
            relocations,
            trace,
        }
    }
}

pub fn plan_vlm_rrt(env: &Env, cfg: &PlannerConfig, oracle: &dyn DirectionOracle) -> PlanResult {
    VlmRrt::new(env, cfg, oracle).run().result
}
