//! Planar world model: points, axis-aligned rectangles, collision queries and
//! scenario files.
//!
//! Rectangles are closed sets throughout. A segment that merely touches an
//! obstacle boundary is in collision.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, streams};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid rectangle {0}: min must not exceed max and all coordinates must be finite")]
    InvalidRect(Rect),
    #[error("degenerate rectangle for `{field}`: width and height must be positive")]
    DegenerateRect { field: String },
    #[error("`{field}` must lie within the world bounds")]
    OutOfBounds { field: String },
    #[error("`{a}` overlaps `{b}`")]
    Overlap { a: String, b: String },
    #[error("events must be strictly increasing in at_iteration and start at 1 (event {index})")]
    EventOrder { index: usize },
    #[error("no feasible scenario after {attempts} attempts")]
    InfeasibleScenario { attempts: usize },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

/// A position in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (*self - other).norm()
    }

    pub fn dist_sq(&self, other: Point2) -> f64 {
        let d = *self - other;
        d.x * d.x + d.y * d.y
    }

    pub fn dot(&self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// World-frame heading of this vector (east = 0, counterclockwise).
    pub fn angle(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self::new(radius * angle.cos(), radius * angle.sin())
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Closed axis-aligned rectangle. Serialized as `[min_x, min_y, max_x, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    /// Builds a rectangle, rejecting non-finite or inverted corners.
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, EnvError> {
        let r = Rect {
            min: Point2::new(min_x, min_y),
            max: Point2::new(max_x, max_y),
        };
        if !(r.min.is_finite() && r.max.is_finite()) || min_x > max_x || min_y > max_y {
            return Err(EnvError::InvalidRect(r));
        }
        Ok(r)
    }

    /// Rectangle from two opposite corners in any order.
    pub fn from_corners(a: Point2, b: Point2) -> Self {
        Rect {
            min: Point2::new(a.x.min(b.x), a.y.min(b.y)),
            max: Point2::new(a.x.max(b.x), a.y.max(b.y)),
        }
    }

    pub fn from_center(center: Point2, width: f64, height: f64) -> Self {
        Rect {
            min: Point2::new(center.x - width / 2.0, center.y - height / 2.0),
            max: Point2::new(center.x + width / 2.0, center.y + height / 2.0),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_degenerate(&self) -> bool {
        self.width() <= 0.0 || self.height() <= 0.0
    }

    pub fn centroid(&self) -> Point2 {
        Point2::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_rect(p, self)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    /// Closed-set intersection test: shared boundary counts.
    pub fn intersects(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x && other.min.x <= self.max.x && self.min.y <= other.max.y && other.min.y <= self.max.y
    }

    pub fn inflate(&self, margin: f64) -> Rect {
        Rect {
            min: Point2::new(self.min.x - margin, self.min.y - margin),
            max: Point2::new(self.max.x + margin, self.max.y + margin),
        }
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn distance_to(&self, p: Point2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    pub fn corners(&self) -> [Point2; 4] {
        [
            self.min,
            Point2::new(self.max.x, self.min.y),
            self.max,
            Point2::new(self.min.x, self.max.y),
        ]
    }
}

impl TryFrom<[f64; 4]> for Rect {
    type Error = EnvError;
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.min.x, r.min.y, r.max.x, r.max.y]
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]x[{}, {}]", self.min.x, self.max.x, self.min.y, self.max.y)
    }
}

pub fn point_in_rect(p: Point2, r: &Rect) -> bool {
    r.min.x <= p.x && p.x <= r.max.x && r.min.y <= p.y && p.y <= r.max.y
}

/// Parameter interval `[t0, t1] ⊆ [0, 1]` over which `a + t (b - a)` lies
/// inside the closed rectangle, or `None` when the segment misses it.
///
/// Liang–Barsky clipping with closed comparisons.
pub fn clip_segment(a: Point2, b: Point2, r: &Rect) -> Option<(f64, f64)> {
    let d = b - a;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for (p, q) in [
        (-d.x, a.x - r.min.x),
        (d.x, r.max.x - a.x),
        (-d.y, a.y - r.min.y),
        (d.y, r.max.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                if t > t1 {
                    return None;
                }
                t0 = t0.max(t);
            } else {
                if t < t0 {
                    return None;
                }
                t1 = t1.min(t);
            }
        }
    }
    Some((t0, t1))
}

pub fn segment_intersects_rect(a: Point2, b: Point2, r: &Rect) -> bool {
    clip_segment(a, b, r).is_some()
}

/// True iff the closed segment `ab` touches none of the obstacles.
pub fn segment_free(a: Point2, b: Point2, obstacles: &[Rect]) -> bool {
    !obstacles.iter().any(|o| segment_intersects_rect(a, b, o))
}

/// How arrival at the goal is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// `‖p − goal_centroid‖ ≤ ε` only.
    #[default]
    StrictBall,
    /// The ε-ball or anywhere inside the goal rectangle.
    BallOrRect,
}

/// Bounded planar world with start region, goal region and obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    bounds: Rect,
    start: Rect,
    goal: Rect,
    goal_centroid: Point2,
    obstacles: Vec<Rect>,
}

impl Env {
    pub fn new(bounds: Rect, start: Rect, goal: Rect, obstacles: Vec<Rect>) -> Result<Self, EnvError> {
        if bounds.is_degenerate() {
            return Err(EnvError::DegenerateRect { field: "bounds".into() });
        }
        check_region(&bounds, &start, "start")?;
        check_region(&bounds, &goal, "goal")?;
        if start.intersects(&goal) {
            return Err(EnvError::Overlap {
                a: "start".into(),
                b: "goal".into(),
            });
        }
        for (i, o) in obstacles.iter().enumerate() {
            let field = format!("obstacles[{i}]");
            check_region(&bounds, o, &field)?;
            if o.intersects(&start) {
                return Err(EnvError::Overlap {
                    a: field,
                    b: "start".into(),
                });
            }
            if o.intersects(&goal) {
                return Err(EnvError::Overlap {
                    a: field,
                    b: "goal".into(),
                });
            }
        }
        Ok(Env {
            bounds,
            start,
            goal,
            goal_centroid: goal.centroid(),
            obstacles,
        })
    }

    pub fn bounds(&self) -> &Rect {
        &self.bounds
    }

    pub fn start(&self) -> &Rect {
        &self.start
    }

    pub fn goal(&self) -> &Rect {
        &self.goal
    }

    pub fn goal_centroid(&self) -> Point2 {
        self.goal_centroid
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.obstacles
    }

    /// Agent position at t = 0: centroid of the start region.
    pub fn initial_position(&self) -> Point2 {
        self.start.centroid()
    }

    /// Moves the goal region. The new goal must satisfy the same invariants as
    /// the original one.
    pub fn relocate_goal(&mut self, goal: Rect) -> Result<(), EnvError> {
        check_region(&self.bounds, &goal, "goal")?;
        if let Some(i) = self.obstacles.iter().position(|o| o.intersects(&goal)) {
            return Err(EnvError::Overlap {
                a: format!("obstacles[{i}]"),
                b: "goal".into(),
            });
        }
        if goal.intersects(&self.start) {
            return Err(EnvError::Overlap {
                a: "start".into(),
                b: "goal".into(),
            });
        }
        self.goal = goal;
        self.goal_centroid = goal.centroid();
        Ok(())
    }

    pub fn is_free(&self, p: Point2) -> bool {
        self.bounds.contains(p) && !self.obstacles.iter().any(|o| o.contains(p))
    }
}

fn check_region(bounds: &Rect, r: &Rect, field: &str) -> Result<(), EnvError> {
    if r.is_degenerate() {
        return Err(EnvError::DegenerateRect {
            field: field.to_string(),
        });
    }
    if !bounds.contains_rect(r) {
        return Err(EnvError::OutOfBounds {
            field: field.to_string(),
        });
    }
    Ok(())
}

pub fn goal_reached(p: Point2, env: &Env, epsilon: f64, mode: GoalMode) -> bool {
    if p.dist(env.goal_centroid) <= epsilon {
        return true;
    }
    mode == GoalMode::BallOrRect && env.goal.contains(p)
}

/// Goal relocation applied at a given planner iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEvent {
    pub at_iteration: usize,
    pub new_goal: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub env: Env,
    pub events: Vec<ScenarioEvent>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    bounds: Rect,
    start: Rect,
    goal: Rect,
    obstacles: Vec<Rect>,
    #[serde(default)]
    events: Vec<ScenarioEvent>,
    seed: u64,
}

impl Scenario {
    pub fn new(env: Env, events: Vec<ScenarioEvent>, seed: u64) -> Result<Self, EnvError> {
        let mut last = 0;
        for (index, ev) in events.iter().enumerate() {
            if ev.at_iteration <= last {
                return Err(EnvError::EventOrder { index });
            }
            last = ev.at_iteration;
            let field = format!("events[{index}].new_goal");
            check_region(env.bounds(), &ev.new_goal, &field)?;
            if let Some(i) = env.obstacles().iter().position(|o| o.intersects(&ev.new_goal)) {
                return Err(EnvError::Overlap {
                    a: format!("obstacles[{i}]"),
                    b: field,
                });
            }
        }
        Ok(Scenario { env, events, seed })
    }

    pub fn from_env(env: Env, seed: u64) -> Self {
        Scenario {
            env,
            events: Vec::new(),
            seed,
        }
    }
}

pub fn load_scenario(bytes: &[u8]) -> Result<Scenario, EnvError> {
    let file: ScenarioFile = serde_json::from_slice(bytes).map_err(|e| EnvError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let env = Env::new(file.bounds, file.start, file.goal, file.obstacles)?;
    Scenario::new(env, file.events, file.seed)
}

pub fn save_scenario(s: &Scenario) -> Vec<u8> {
    let file = ScenarioFile {
        bounds: s.env.bounds,
        start: s.env.start,
        goal: s.env.goal,
        obstacles: s.env.obstacles.clone(),
        events: s.events.clone(),
        seed: s.seed,
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("scenario serializes");
    out.push(b'\n');
    out
}

/// Distribution knobs for [`random_scenario_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub bounds: Rect,
    pub n_obstacles: usize,
    pub obstacle_side: (f64, f64),
    pub region_side: (f64, f64),
    /// Minimum distance between start and goal centroids.
    pub min_start_goal_distance: f64,
    /// Maximum distance between start and goal centroids.
    pub max_start_goal_distance: f64,
    /// Fraction of obstacles dropped near the start→goal corridor.
    pub corridor_fraction: f64,
    /// Minimum gap between any obstacle and the start/goal regions.
    pub region_clearance: f64,
    pub grid_resolution: f64,
    pub max_attempts: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            bounds: Rect {
                min: Point2::new(0.0, 0.0),
                max: Point2::new(500.0, 500.0),
            },
            n_obstacles: 12,
            obstacle_side: (20.0, 80.0),
            region_side: (10.0, 30.0),
            min_start_goal_distance: 100.0,
            max_start_goal_distance: 200.0,
            corridor_fraction: 0.1,
            region_clearance: 5.0,
            grid_resolution: 5.0,
            max_attempts: 100,
        }
    }
}

/// Random feasible scenario with default distribution knobs.
pub fn random_scenario(seed: u64, n_obstacles: usize, bounds: Rect) -> Result<Scenario, EnvError> {
    random_scenario_with(
        seed,
        &ScenarioParams {
            bounds,
            n_obstacles,
            ..ScenarioParams::default()
        },
    )
}

/// Random scenario certified solvable by a grid search. Attempt `k` draws from
/// a sub-seed of `(seed, k)`, so the result is a pure function of the inputs.
pub fn random_scenario_with(seed: u64, params: &ScenarioParams) -> Result<Scenario, EnvError> {
    if params.bounds.is_degenerate() {
        return Err(EnvError::DegenerateRect { field: "bounds".into() });
    }
    for attempt in 0..params.max_attempts {
        let mut rng = stream_rng(seed, streams::SCENARIO, attempt as u64);
        if let Some(env) = draw_env(&mut rng, params) {
            if grid_feasible(&env, params.grid_resolution) {
                return Ok(Scenario::from_env(env, seed));
            }
        }
    }
    Err(EnvError::InfeasibleScenario {
        attempts: params.max_attempts,
    })
}

/// Goal relocations for a dynamic-goal run: `count` events, the first at
/// `first_iteration` and then every `spacing` iterations. Each new goal is
/// clear of obstacles and the start region and reachable on the search grid.
pub fn random_relocations(
    seed: u64,
    env: &Env,
    count: usize,
    first_iteration: usize,
    spacing: usize,
    params: &ScenarioParams,
) -> Result<Vec<ScenarioEvent>, EnvError> {
    let mut rng = stream_rng(seed, streams::SCENARIO, u64::MAX);
    let mut events = Vec::with_capacity(count);
    let mut probe = env.clone();
    for k in 0..count {
        let mut placed = None;
        for _ in 0..params.max_attempts * PLACEMENT_TRIES {
            let g = draw_region(&mut rng, env.bounds(), params.region_side);
            let clear = !g.inflate(params.region_clearance).intersects(env.start())
                && !env
                    .obstacles()
                    .iter()
                    .any(|o| o.intersects(&g.inflate(params.region_clearance)))
                && g.centroid().dist(probe.goal_centroid()) >= params.min_start_goal_distance / 2.0;
            let mut cand = probe.clone();
            if clear && cand.relocate_goal(g).is_ok() && grid_feasible(&cand, params.grid_resolution) {
                probe = cand;
                placed = Some(g);
                break;
            }
        }
        let g = placed.ok_or(EnvError::InfeasibleScenario {
            attempts: params.max_attempts,
        })?;
        events.push(ScenarioEvent {
            at_iteration: first_iteration + k * spacing,
            new_goal: g,
        });
    }
    Ok(events)
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn draw_region(rng: &mut impl Rng, bounds: &Rect, side: (f64, f64)) -> Rect {
    let w = uniform(rng, side.0, side.1).min(bounds.width());
    let h = uniform(rng, side.0, side.1).min(bounds.height());
    let x = uniform(rng, bounds.min.x, bounds.max.x - w);
    let y = uniform(rng, bounds.min.y, bounds.max.y - h);
    Rect {
        min: Point2::new(x, y),
        max: Point2::new(x + w, y + h),
    }
}

const PLACEMENT_TRIES: usize = 200;

fn draw_env(rng: &mut ChaCha8Rng, p: &ScenarioParams) -> Option<Env> {
    let bounds = p.bounds;
    let start = draw_region(rng, &bounds, p.region_side);
    let mut goal = None;
    for _ in 0..PLACEMENT_TRIES {
        let g = draw_region(rng, &bounds, p.region_side);
        let d = g.centroid().dist(start.centroid());
        if !g.inflate(p.region_clearance).intersects(&start)
            && d >= p
                .min_start_goal_distance
                .min(bounds.width().hypot(bounds.height()) / 2.0)
            && d <= p.max_start_goal_distance
        {
            goal = Some(g);
            break;
        }
    }
    let goal = goal?;
    let (a, b) = (start.centroid(), goal.centroid());
    let keep_out = [start.inflate(p.region_clearance), goal.inflate(p.region_clearance)];
    let mut obstacles = Vec::with_capacity(p.n_obstacles);
    let n_corridor = (p.n_obstacles as f64 * p.corridor_fraction).round() as usize;
    for k in 0..p.n_obstacles {
        for _ in 0..PLACEMENT_TRIES {
            let o = if k < n_corridor {
                // Centered near a random point of the start→goal segment.
                let t = uniform(rng, 0.15, 0.85);
                let c = a + (b - a) * t;
                let jitter = 0.15 * a.dist(b);
                let c = Point2::new(c.x + uniform(rng, -jitter, jitter), c.y + uniform(rng, -jitter, jitter));
                let w = uniform(rng, p.obstacle_side.0, p.obstacle_side.1);
                let h = uniform(rng, p.obstacle_side.0, p.obstacle_side.1);
                Rect::from_center(c, w, h)
            } else {
                draw_region(rng, &bounds, p.obstacle_side)
            };
            if bounds.contains_rect(&o) && !keep_out.iter().any(|k| k.intersects(&o)) {
                obstacles.push(o);
                break;
            }
        }
    }
    Env::new(bounds, start, goal, obstacles).ok()
}

/// Breadth-first search over a 4-connected occupancy grid. A cell is free when
/// its closed square misses every obstacle, so a grid path is a certified
/// collision-free polyline between cell centers.
pub fn grid_feasible(env: &Env, resolution: f64) -> bool {
    let b = env.bounds();
    let nx = (b.width() / resolution).ceil().max(1.0) as usize;
    let ny = (b.height() / resolution).ceil().max(1.0) as usize;
    let cell_rect = |i: usize, j: usize| Rect {
        min: Point2::new(b.min.x + i as f64 * resolution, b.min.y + j as f64 * resolution),
        max: Point2::new(
            (b.min.x + (i + 1) as f64 * resolution).min(b.max.x),
            (b.min.y + (j + 1) as f64 * resolution).min(b.max.y),
        ),
    };
    let cell_of = |p: Point2| {
        let i = (((p.x - b.min.x) / resolution) as usize).min(nx - 1);
        let j = (((p.y - b.min.y) / resolution) as usize).min(ny - 1);
        (i, j)
    };
    let free: Vec<bool> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let c = cell_rect(i, j);
            !env.obstacles().iter().any(|o| o.intersects(&c))
        })
        .collect();
    let start = cell_of(env.initial_position());
    let target = cell_of(env.goal_centroid());
    let idx = |(i, j): (usize, usize)| j * nx + i;
    if !free[idx(start)] || !free[idx(target)] {
        return false;
    }
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::from([start]);
    seen[idx(start)] = true;
    while let Some((i, j)) = queue.pop_front() {
        if (i, j) == target {
            return true;
        }
        let mut push = |c: (usize, usize)| {
            let k = idx(c);
            if free[k] && !seen[k] {
                seen[k] = true;
                queue.push_back(c);
            }
        };
        if i > 0 {
            push((i - 1, j));
        }
        if i + 1 < nx {
            push((i + 1, j));
        }
        if j > 0 {
            push((i, j - 1));
        }
        if j + 1 < ny {
            push((i, j + 1));
        }
    }
    false
}
