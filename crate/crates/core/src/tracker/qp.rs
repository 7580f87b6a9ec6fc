use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// `min ½ uᵀHu + fᵀu + constant  s.t.  G u ≤ h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Qp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub constant: f64,
    pub g: DMatrix<f64>,
    pub bound: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    /// One multiplier per inequality row, zero for inactive rows.
    pub lambda: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("u = 0 violates constraint row {row} by {violation}")]
    InfeasibleStart { row: usize, violation: f64 },
    #[error("no convergence after {iterations} iterations (KKT residual {residual:e})")]
    MaxIterations {
        iterations: usize,
        residual: f64,
        best: Box<QpSolution>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Multiplier sign tolerance when deciding optimality.
    pub dual_tol: f64,
    /// Primal slack tolerance for the starting point.
    pub feas_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 10_000,
            dual_tol: 1e-10,
            feas_tol: 1e-9,
        }
    }
}

impl Qp {
    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn rows(&self) -> usize {
        self.bound.len()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.f.dot(u) + self.constant
    }

    /// Max of stationarity, primal infeasibility, complementarity and dual
    /// infeasibility, all in absolute terms.
    pub fn kkt_residual(&self, u: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        let stat = (&self.h * u + &self.f + self.g.tr_mul(lambda)).amax();
        let slack = &self.bound - &self.g * u;
        let primal = slack.iter().fold(0.0_f64, |m, &s| m.max(-s));
        let comp = slack
            .iter()
            .zip(lambda.iter())
            .fold(0.0_f64, |m, (&s, &l)| m.max((s * l).abs()));
        let dual = lambda.iter().fold(0.0_f64, |m, &l| m.max(-l));
        stat.max(primal).max(comp).max(dual)
    }

    /// Plain-text dump: dimensions, then H, f, G and h row by row.
    pub fn write_dense<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n m constant")?;
        writeln!(w, "{} {} {:.17e}", self.dim(), self.rows(), self.constant)?;
        let row = |w: &mut W, it: &mut dyn Iterator<Item = f64>| -> std::io::Result<()> {
            let s: Vec<String> = it.map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{}", s.join(" "))
        };
        writeln!(w, "# H")?;
        for i in 0..self.dim() {
            row(&mut w, &mut self.h.row(i).iter().copied())?;
        }
        writeln!(w, "# f")?;
        row(&mut w, &mut self.f.iter().copied())?;
        writeln!(w, "# G")?;
        for i in 0..self.rows() {
            row(&mut w, &mut self.g.row(i).iter().copied())?;
        }
        writeln!(w, "# h")?;
        row(&mut w, &mut self.bound.iter().copied())
    }
}

/// Minimizer of the objective subject to `G_W u = h_W`, with multipliers.
fn equality_solve(qp: &Qp, hinv: &DMatrix<f64>, work: &[usize]) -> (DVector<f64>, DVector<f64>) {
    let n = qp.dim();
    if work.is_empty() {
        return (-(hinv * &qp.f), DVector::zeros(0));
    }
    let k = work.len();
    let aw = DMatrix::from_fn(k, n, |i, j| qp.g[(work[i], j)]);
    let bw = DVector::from_fn(k, |i, _| qp.bound[work[i]]);
    let aw_hinv = &aw * hinv;
    let schur = &aw_hinv * aw.transpose();
    let rhs = -(bw + &aw_hinv * &qp.f);
    let lambda = match schur.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => schur
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .expect("svd solve with both factors"),
    };
    let u = -(hinv * (&qp.f + aw.tr_mul(&lambda)));
    (u, lambda)
}

/// Primal active-set method started from `u = 0`, which must be feasible.
/// Ties between blocking constraints, and between negative multipliers,
/// go to the lowest row index.
pub fn solve_qp(qp: &Qp, opts: &SolverOptions) -> Result<QpSolution, QpError> {
    let n = qp.dim();
    let m = qp.rows();
    let chol = qp.h.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let hinv = chol.inverse();

    let mut u = DVector::zeros(n);
    if let Some((row, &b)) = qp.bound.iter().enumerate().find(|(_, &b)| b < -opts.feas_tol) {
        return Err(QpError::InfeasibleStart { row, violation: -b });
    }

    let mut work: Vec<usize> = Vec::new();
    let mut in_work = vec![false; m];
    let full_lambda = |work: &[usize], lam: &DVector<f64>| {
        let mut l = DVector::zeros(m);
        for (k, &i) in work.iter().enumerate() {
            l[i] = lam[k];
        }
        l
    };

    for it in 0..opts.max_iterations {
        let (target, lam) = equality_solve(qp, &hinv, &work);
        let p = &target - &u;
        let scale = 1.0 + u.amax().max(target.amax());
        if p.amax() <= 1e-11 * scale {
            u = target;
            let worst = lam
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -opts.dual_tol)
                .min_by(|a, b| a.1.total_cmp(b.1).then(work[a.0].cmp(&work[b.0])));
            match worst {
                None => {
                    let lambda = full_lambda(&work, &lam).map(|l| l.max(0.0));
                    return Ok(QpSolution {
                        objective: qp.objective(&u),
                        kkt_residual: qp.kkt_residual(&u, &lambda),
                        u,
                        lambda,
                        iterations: it + 1,
                    });
                }
                Some((k, _)) => {
                    in_work[work[k]] = false;
                    work.remove(k);
                }
            }
            continue;
        }

        let gp = &qp.g * &p;
        let gu = &qp.g * &u;
        let mut alpha = 1.0;
        let mut block = None;
        for i in 0..m {
            if in_work[i] || gp[i] <= 1e-14 * scale {
                continue;
            }
            let step = (qp.bound[i] - gu[i]).max(0.0) / gp[i];
            if step < alpha {
                alpha = step;
                block = Some(i);
            }
        }
        u += p * alpha;
        if let Some(i) = block {
            in_work[i] = true;
            work.push(i);
        }
    }

    let (target, lam) = equality_solve(qp, &hinv, &work);
    let lambda = full_lambda(&work, &lam);
    let best = if qp.kkt_residual(&target, &lambda) < qp.kkt_residual(&u, &lambda) {
        target
    } else {
        u
    };
    let residual = qp.kkt_residual(&best, &lambda);
    Err(QpError::MaxIterations {
        iterations: opts.max_iterations,
        residual,
        best: Box::new(QpSolution {
            objective: qp.objective(&best),
            kkt_residual: residual,
            u: best,
            lambda,
            iterations: opts.max_iterations,
        }),
    })
}
