//! Path tracking: spline reference, condensed finite-horizon QP over a
//! double-integrator-with-drag model, and closed-loop re-simulation.

mod qp;
mod spline;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{segment_free, Env, Point2, Rect};
use crate::planner::PlanResult;

pub use qp::{solve_qp, Qp, QpError, QpSolution, SolverOptions};
pub use spline::{fit_reference, fit_reference_with_horizon, horizon_for, integrate, ReferencePath};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("a reference needs at least two points, got {points}")]
    DegeneratePath { points: usize },
    #[error("path point {index} repeats its predecessor")]
    DuplicatePoint { index: usize },
    #[error("plan did not reach the goal")]
    PlanNotSuccessful,
    #[error("QP solver: {0}")]
    Solver(#[from] QpError),
    #[error("tracked trajectory enters obstacle {obstacle} between steps {step} and {}", step + 1)]
    CollisionInTrack {
        step: usize,
        obstacle: usize,
        report: Box<TrackReport>,
    },
}

/// Planar point mass with linear drag, sampled at `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub c: Matrix2x4<f64>,
    pub d: Matrix2<f64>,
    pub dt: f64,
    pub drag: f64,
    pub mass: f64,
    /// (lower, upper) force per axis, newtons.
    pub u_bounds: [(f64, f64); 2],
    pub v_max: f64,
}

impl LtiModel {
    pub fn new(dt: f64, drag: f64, mass: f64, u_bounds: [(f64, f64); 2], v_max: f64) -> Self {
        let i2 = Matrix2::<f64>::identity();
        let mut a = Matrix4::zeros();
        a.fixed_view_mut::<2, 2>(0, 0).copy_from(&i2);
        a.fixed_view_mut::<2, 2>(0, 2).copy_from(&(i2 * dt));
        a.fixed_view_mut::<2, 2>(2, 2).copy_from(&(i2 * (1.0 - drag)));
        let mut b = Matrix4x2::zeros();
        b.fixed_view_mut::<2, 2>(2, 0).copy_from(&(i2 * (dt / mass)));
        let mut c = Matrix2x4::zeros();
        c.fixed_view_mut::<2, 2>(0, 0).copy_from(&i2);
        LtiModel {
            a,
            b,
            c,
            d: Matrix2::zeros(),
            dt,
            drag,
            mass,
            u_bounds,
            v_max,
        }
    }

    pub fn step(&self, x: &Vector4<f64>, u: &Vector2<f64>) -> Vector4<f64> {
        self.a * x + self.b * u
    }

    pub fn output(&self, x: &Vector4<f64>, u: &Vector2<f64>) -> Vector2<f64> {
        self.c * x + self.d * u
    }

    /// States x(0..=len) under the given controls.
    pub fn simulate(&self, x0: Vector4<f64>, controls: &[Vector2<f64>]) -> Vec<Vector4<f64>> {
        let mut xs = Vec::with_capacity(controls.len() + 1);
        xs.push(x0);
        for u in controls {
            let next = self.step(xs.last().unwrap(), u);
            xs.push(next);
        }
        xs
    }
}

impl Default for LtiModel {
    fn default() -> Self {
        LtiModel::new(1.0, 0.2, 1.05, [(-10.0, 10.0); 2], 15.0)
    }
}

pub fn state_at_rest(p: Point2) -> Vector4<f64> {
    Vector4::new(p.x, p.y, 0.0, 0.0)
}

/// Tracking program over horizon `reference.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub model: LtiModel,
    pub x_init: Vector4<f64>,
    /// 𝓟(0..T).
    pub reference: Vec<Point2>,
    pub q: Matrix2<f64>,
    pub r: Matrix2<f64>,
    /// Allowed position box.
    pub bounds: Rect,
}

impl MpcProblem {
    pub fn new(model: LtiModel, x_init: Vector4<f64>, reference: Vec<Point2>, bounds: Rect) -> Self {
        MpcProblem {
            model,
            x_init,
            reference,
            q: Matrix2::identity() * 0.9,
            r: Matrix2::identity() * 0.1,
            bounds,
        }
    }

    pub fn horizon(&self) -> usize {
        self.reference.len()
    }

    /// Σ ‖y(t) − 𝓟(t)‖²_Q + ‖u(t)‖²_R evaluated by simulation.
    pub fn cost(&self, controls: &[Vector2<f64>]) -> f64 {
        let xs = self.model.simulate(self.x_init, controls);
        controls
            .iter()
            .enumerate()
            .map(|(t, u)| {
                let e = self.model.output(&xs[t], u) - Vector2::new(self.reference[t].x, self.reference[t].y);
                e.dot(&(self.q * e)) + u.dot(&(self.r * u))
            })
            .sum()
    }
}

/// Condensed program plus the affine maps used to build it.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    pub qp: Qp,
    /// Outputs y(0..T) = Θ U + ψ.
    pub theta: DMatrix<f64>,
    pub psi: DVector<f64>,
    /// States x(1..=T) = S U + s0.
    pub s: DMatrix<f64>,
    pub s0: DVector<f64>,
}

/// Eliminates the states and writes the program in the stacked controls
/// U = [u(0); …; u(T−1)]. Inequality rows, per step: control upper/lower
/// bounds for t = 0..T, then for each state x(1..=T) velocity ± and position
/// upper/lower bounds, 12 T rows in all.
pub fn build_qp(p: &MpcProblem) -> CondensedQp {
    let t_len = p.horizon();
    let n = 2 * t_len;
    let m = &p.model;

    // A^j B for j = 0..T.
    let mut ab = Vec::with_capacity(t_len);
    let mut acc = m.b;
    for _ in 0..t_len {
        ab.push(acc);
        acc = m.a * acc;
    }
    let mut s = DMatrix::zeros(4 * t_len, n);
    let mut s0 = DVector::zeros(4 * t_len);
    let mut x_free = p.x_init;
    for t in 1..=t_len {
        x_free = m.a * x_free;
        s0.fixed_rows_mut::<4>(4 * (t - 1)).copy_from(&x_free);
        for k in 0..t {
            s.fixed_view_mut::<4, 2>(4 * (t - 1), 2 * k).copy_from(&ab[t - 1 - k]);
        }
    }

    let mut theta = DMatrix::zeros(2 * t_len, n);
    let mut psi = DVector::zeros(2 * t_len);
    for t in 0..t_len {
        if t == 0 {
            psi.fixed_rows_mut::<2>(0).copy_from(&(m.c * p.x_init));
        } else {
            let rows = m.c * s.view((4 * (t - 1), 0), (4, n));
            theta.view_mut((2 * t, 0), (2, n)).copy_from(&rows);
            psi.fixed_rows_mut::<2>(2 * t)
                .copy_from(&(m.c * s0.fixed_rows::<4>(4 * (t - 1))));
        }
        let mut block = theta.fixed_view_mut::<2, 2>(2 * t, 2 * t);
        block += m.d;
    }

    let mut qbar = DMatrix::zeros(2 * t_len, 2 * t_len);
    let mut rbar = DMatrix::zeros(n, n);
    for t in 0..t_len {
        qbar.fixed_view_mut::<2, 2>(2 * t, 2 * t).copy_from(&p.q);
        rbar.fixed_view_mut::<2, 2>(2 * t, 2 * t).copy_from(&p.r);
    }
    let reference = DVector::from_iterator(2 * t_len, p.reference.iter().flat_map(|q| [q.x, q.y]));
    let e0 = &psi - reference;
    let qtheta = &qbar * &theta;
    let mut h = (theta.tr_mul(&qtheta) + &rbar) * 2.0;
    // Symmetrize away round-off.
    h = (&h + h.transpose()) * 0.5;
    let f = theta.tr_mul(&(&qbar * &e0)) * 2.0;
    let constant = e0.dot(&(&qbar * &e0));

    let rows = 12 * t_len;
    let mut g = DMatrix::zeros(rows, n);
    let mut bound = DVector::zeros(rows);
    let mut r = 0;
    for t in 0..t_len {
        for axis in 0..2 {
            let (lo, hi) = m.u_bounds[axis];
            g[(r, 2 * t + axis)] = 1.0;
            bound[r] = hi;
            g[(r + 1, 2 * t + axis)] = -1.0;
            bound[r + 1] = -lo;
            r += 2;
        }
    }
    let (pmin, pmax) = ([p.bounds.min.x, p.bounds.min.y], [p.bounds.max.x, p.bounds.max.y]);
    for t in 1..=t_len {
        let base = 4 * (t - 1);
        for axis in 0..2 {
            let vel = base + 2 + axis;
            g.row_mut(r).copy_from(&s.row(vel));
            bound[r] = m.v_max - s0[vel];
            g.row_mut(r + 1).copy_from(&(-s.row(vel)));
            bound[r + 1] = m.v_max + s0[vel];
            r += 2;
        }
        for axis in 0..2 {
            let pos = base + axis;
            g.row_mut(r).copy_from(&s.row(pos));
            bound[r] = pmax[axis] - s0[pos];
            g.row_mut(r + 1).copy_from(&(-s.row(pos)));
            bound[r + 1] = s0[pos] - pmin[axis];
            r += 2;
        }
    }
    debug_assert_eq!(r, rows);

    CondensedQp {
        qp: Qp {
            h,
            f,
            constant,
            g,
            bound,
        },
        theta,
        psi,
        s,
        s0,
    }
}

fn ser_vec2<S: serde::Serializer>(v: &[Vector2<f64>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|u| [u.x, u.y]))
}

fn ser_vec4<S: serde::Serializer>(v: &[Vector4<f64>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| [x[0], x[1], x[2], x[3]]))
}

fn de_vec2<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Vector2<f64>>, D::Error> {
    let raw: Vec<[f64; 2]> = Deserialize::deserialize(d)?;
    Ok(raw.into_iter().map(|a| Vector2::new(a[0], a[1])).collect())
}

fn de_vec4<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Vector4<f64>>, D::Error> {
    let raw: Vec<[f64; 4]> = Deserialize::deserialize(d)?;
    Ok(raw.into_iter().map(|a| Vector4::new(a[0], a[1], a[2], a[3])).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    /// u(0..T).
    #[serde(serialize_with = "ser_vec2", deserialize_with = "de_vec2")]
    pub controls: Vec<Vector2<f64>>,
    /// x(0..=T), re-simulated from the controls.
    #[serde(serialize_with = "ser_vec4", deserialize_with = "de_vec4")]
    pub states: Vec<Vector4<f64>>,
    /// y(0..T).
    #[serde(serialize_with = "ser_vec2", deserialize_with = "de_vec2")]
    pub outputs: Vec<Vector2<f64>>,
    pub objective_value: f64,
    pub kkt_residual: f64,
    pub solver_iterations: usize,
}

impl MpcSolution {
    pub fn positions(&self) -> Vec<Point2> {
        self.states.iter().map(|x| Point2::new(x[0], x[1])).collect()
    }
}

fn unstack(u: &DVector<f64>) -> Vec<Vector2<f64>> {
    u.as_slice().chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect()
}

pub fn solve_mpc(p: &MpcProblem, opts: &SolverOptions) -> Result<(MpcSolution, CondensedQp), QpError> {
    let cq = build_qp(p);
    let sol = solve_qp(&cq.qp, opts)?;
    let controls = unstack(&sol.u);
    let states = p.model.simulate(p.x_init, &controls);
    let outputs = controls
        .iter()
        .enumerate()
        .map(|(t, u)| p.model.output(&states[t], u))
        .collect();
    Ok((
        MpcSolution {
            objective_value: p.cost(&controls),
            controls,
            states,
            outputs,
            kkt_residual: sol.kkt_residual,
            solver_iterations: sol.iterations,
        },
        cq,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackReport {
    pub reference: ReferencePath,
    pub solution: MpcSolution,
    /// ‖y(t) − 𝓟(t)‖ for t = 0..T.
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub max_error: f64,
    /// y(T−1).
    pub endpoint: Point2,
    pub endpoint_goal_distance: f64,
}

impl TrackReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("track report serializes")
    }
}

/// Waypoints actually fed to the spline: the plan, closed off at the goal
/// centroid, with consecutive duplicates removed.
pub fn tracking_waypoints(plan: &PlanResult, goal: Point2) -> Vec<Point2> {
    let mut pts: Vec<Point2> = Vec::with_capacity(plan.path.len() + 1);
    for &p in plan.path.iter().chain(std::iter::once(&goal)) {
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    pts
}

/// Scalar weights for `Q = q·I`, `R = r·I` plus solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    pub q_weight: f64,
    pub r_weight: f64,
    pub solver: SolverOptions,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            q_weight: 0.9,
            r_weight: 0.1,
            solver: SolverOptions::default(),
        }
    }
}

/// Fits the reference, solves the tracking QP and re-simulates the result.
/// The horizon is `ceil(2.5 ℓ)` for the plan's ℓ waypoints.
pub fn track(plan: &PlanResult, env: &Env, model: &LtiModel) -> Result<TrackReport, TrackError> {
    track_with(plan, env, model, &TrackOptions::default())
}

/// The tracking program for `plan` and the reference it follows.
pub fn tracking_problem(
    plan: &PlanResult,
    env: &Env,
    model: &LtiModel,
    opts: &TrackOptions,
) -> Result<(MpcProblem, ReferencePath), TrackError> {
    if !plan.is_success() || plan.path.is_empty() {
        return Err(TrackError::PlanNotSuccessful);
    }
    let pts = tracking_waypoints(plan, env.goal_centroid());
    let horizon = horizon_for(plan.path.len());
    let reference = if pts.len() == 1 {
        ReferencePath::constant(pts[0], horizon)
    } else {
        fit_reference_with_horizon(&pts, horizon)?
    };
    let mut problem = MpcProblem::new(
        model.clone(),
        state_at_rest(plan.path[0]),
        reference.samples.clone(),
        *env.bounds(),
    );
    problem.q = Matrix2::identity() * opts.q_weight;
    problem.r = Matrix2::identity() * opts.r_weight;
    Ok((problem, reference))
}

pub fn track_with(
    plan: &PlanResult,
    env: &Env,
    model: &LtiModel,
    opts: &TrackOptions,
) -> Result<TrackReport, TrackError> {
    let goal = env.goal_centroid();
    let (problem, reference) = tracking_problem(plan, env, model, opts)?;
    let (solution, _) = solve_mpc(&problem, &opts.solver)?;

    let errors: Vec<f64> = solution
        .outputs
        .iter()
        .zip(&reference.samples)
        .map(|(y, r)| Point2::new(y.x, y.y).dist(*r))
        .collect();
    let endpoint = Point2::new(solution.outputs.last().unwrap().x, solution.outputs.last().unwrap().y);
    let report = TrackReport {
        mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
        max_error: errors.iter().copied().fold(0.0, f64::max),
        errors,
        endpoint,
        endpoint_goal_distance: endpoint.dist(goal),
        reference,
        solution,
    };

    let positions = report.solution.positions();
    for (step, w) in positions.windows(2).enumerate() {
        if !segment_free(w[0], w[1], env.obstacles()) {
            let obstacle = env
                .obstacles()
                .iter()
                .position(|o| !segment_free(w[0], w[1], std::slice::from_ref(o)))
                .unwrap_or(0);
            return Err(TrackError::CollisionInTrack {
                step,
                obstacle,
                report: Box::new(report),
            });
        }
    }
    Ok(report)
}
