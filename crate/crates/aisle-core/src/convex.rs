//! Self-contained solvers for small dense problems: a log-barrier Newton
//! method for smooth concave maximization under convex constraints, and a
//! linear-program front-end driven by the same machinery with a Phase-I
//! feasibility stage.
//!
//! Problem sizes here are tiny (tens of variables), so the implementation
//! favors robustness and determinism: dense LU/Cholesky factorizations,
//! fixed barrier schedule, no randomized pivoting.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("iteration limit: {0}")]
    IterationLimit(String),
    #[error("infeasible start: {0}")]
    InfeasibleStart(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// A twice-differentiable scalar function with callback derivatives.
/// `hess` must add nothing outside the leading `dim x dim` block.
pub struct Smooth<'a> {
    pub value: Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>,
    pub grad: Box<dyn Fn(&[f64], &mut [f64]) + Sync + 'a>,
    pub hess: Box<dyn Fn(&[f64], &mut DMatrix<f64>) + Sync + 'a>,
}

impl<'a> Smooth<'a> {
    /// c^T x + b.
    pub fn affine(coeffs: Vec<f64>, constant: f64) -> Self {
        let c2 = coeffs.clone();
        Smooth {
            value: Box::new(move |x| {
                coeffs.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>() + constant
            }),
            grad: Box::new(move |_, g| {
                for (gi, ci) in g.iter_mut().zip(&c2) {
                    *gi += ci;
                }
            }),
            hess: Box::new(|_, _| {}),
        }
    }
}

/// Smooth concave maximization problem with convex inequality constraints
/// `g_k(x) <= 0`, affine equalities, and box bounds. `x0` must satisfy all
/// inequalities strictly and the equalities to 1e-9.
pub struct ConvexProgram<'a> {
    pub dim: usize,
    /// Concave objective, maximized.
    pub objective: Smooth<'a>,
    /// Convex constraint functions, feasible iff <= 0.
    pub ineq: Vec<Smooth<'a>>,
    /// Affine equality rows (a, b) meaning a^T x = b.
    pub eq: Vec<(Vec<f64>, f64)>,
    /// Per-variable bounds; use +-infinity for unbounded sides.
    pub bounds: Vec<(f64, f64)>,
    pub x0: Vec<f64>,
}

// Start-point equality residuals up to this are absorbed by the
// infeasible-start Newton correction inside the KKT solve.
const EQ_TOL: f64 = 3e-7;
const MAX_BARRIER_STAGES: usize = 64;
const MAX_NEWTON_ITERS: usize = 100;
const RUNAWAY: f64 = 1e14;

struct BarrierWorkspace<'p, 'a> {
    prog: &'p ConvexProgram<'a>,
    t: f64,
}

impl BarrierWorkspace<'_, '_> {
    fn strictly_feasible(&self, x: &[f64]) -> bool {
        for g in &self.prog.ineq {
            if (g.value)(x) >= 0.0 {
                return false;
            }
        }
        for (i, &(lo, hi)) in self.prog.bounds.iter().enumerate() {
            if lo.is_finite() && x[i] <= lo {
                return false;
            }
            if hi.is_finite() && x[i] >= hi {
                return false;
            }
        }
        true
    }

    /// Barrier objective (minimized): -t f(x) - sum ln(-g) - sum ln box slacks.
    fn phi(&self, x: &[f64]) -> f64 {
        let mut v = -self.t * (self.prog.objective.value)(x);
        for g in &self.prog.ineq {
            let gv = (g.value)(x);
            if gv >= 0.0 {
                return f64::INFINITY;
            }
            v -= (-gv).ln();
        }
        for (i, &(lo, hi)) in self.prog.bounds.iter().enumerate() {
            if lo.is_finite() {
                let s = x[i] - lo;
                if s <= 0.0 {
                    return f64::INFINITY;
                }
                v -= s.ln();
            }
            if hi.is_finite() {
                let s = hi - x[i];
                if s <= 0.0 {
                    return f64::INFINITY;
                }
                v -= s.ln();
            }
        }
        v
    }

    fn phi_grad_hess(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.prog.dim;
        let mut grad = vec![0.0; n];
        (self.prog.objective.grad)(x, &mut grad);
        let mut g = DVector::from_iterator(n, grad.iter().map(|v| -self.t * v));
        let mut h = DMatrix::zeros(n, n);
        (self.prog.objective.hess)(x, &mut h);
        h *= -self.t;

        let mut cbuf = vec![0.0; n];
        let mut chess = DMatrix::zeros(n, n);
        for c in &self.prog.ineq {
            let cv = (c.value)(x);
            let slack = -cv; // > 0 on the interior
            cbuf.iter_mut().for_each(|v| *v = 0.0);
            (c.grad)(x, &mut cbuf);
            chess.fill(0.0);
            (c.hess)(x, &mut chess);
            let inv = 1.0 / slack;
            for i in 0..n {
                g[i] += cbuf[i] * inv;
            }
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += chess[(i, j)] * inv + cbuf[i] * cbuf[j] * inv * inv;
                }
            }
        }
        for (i, &(lo, hi)) in self.prog.bounds.iter().enumerate() {
            if lo.is_finite() {
                let s = x[i] - lo;
                g[i] -= 1.0 / s;
                h[(i, i)] += 1.0 / (s * s);
            }
            if hi.is_finite() {
                let s = hi - x[i];
                g[i] += 1.0 / s;
                h[(i, i)] += 1.0 / (s * s);
            }
        }
        (g, h)
    }
}

/// Maximize a smooth concave objective under convex constraints.
///
/// Returns the optimizer and its objective value. The result never has a
/// worse objective than `x0`, and KKT suboptimality is bounded by `tol`
/// through the final barrier parameter.
pub fn solve_convex(prog: &ConvexProgram, tol: f64) -> Result<(Vec<f64>, f64), SolverError> {
    let n = prog.dim;
    assert_eq!(prog.x0.len(), n, "x0 dimension mismatch");
    assert_eq!(prog.bounds.len(), n, "bounds dimension mismatch");

    // start-point checks
    for (k, g) in prog.ineq.iter().enumerate() {
        let v = (g.value)(&prog.x0);
        if v >= 0.0 {
            return Err(SolverError::InfeasibleStart(format!(
                "inequality {k} at x0: {v:.3e} (needs < 0)"
            )));
        }
    }
    for (i, &(lo, hi)) in prog.bounds.iter().enumerate() {
        if (lo.is_finite() && prog.x0[i] <= lo) || (hi.is_finite() && prog.x0[i] >= hi) {
            return Err(SolverError::InfeasibleStart(format!(
                "variable {i} at x0 violates bounds"
            )));
        }
    }
    for (r, (a, b)) in prog.eq.iter().enumerate() {
        let res: f64 = a.iter().zip(&prog.x0).map(|(ai, xi)| ai * xi).sum::<f64>() - b;
        if res.abs() > EQ_TOL * (1.0 + b.abs()) {
            return Err(SolverError::InfeasibleStart(format!(
                "equality {r} residual {res:.3e} at x0"
            )));
        }
    }

    let m_barrier = prog.ineq.len()
        + prog
            .bounds
            .iter()
            .map(|&(lo, hi)| lo.is_finite() as usize + hi.is_finite() as usize)
            .sum::<usize>();

    let p = prog.eq.len();
    let eq_mat = {
        let mut e = DMatrix::zeros(p, n);
        for (r, (a, _)) in prog.eq.iter().enumerate() {
            for (c, v) in a.iter().enumerate() {
                e[(r, c)] = *v;
            }
        }
        e
    };
    let eq_rhs = DVector::from_iterator(p, prog.eq.iter().map(|(_, b)| *b));

    let mut x = prog.x0.clone();
    let f0 = (prog.objective.value)(&x);
    let mut t = 1.0;

    for _stage in 0..MAX_BARRIER_STAGES {
        let ws = BarrierWorkspace { prog, t };
        // Newton iterations for the current barrier parameter
        for _iter in 0..MAX_NEWTON_ITERS {
            let (g, h) = ws.phi_grad_hess(&x);
            // KKT system with Tikhonov escalation on factorization failure
            let mut reg = 1e-10;
            let (dx, gtd) = loop {
                let mut kkt = DMatrix::zeros(n + p, n + p);
                for i in 0..n {
                    for j in 0..n {
                        kkt[(i, j)] = h[(i, j)];
                    }
                    kkt[(i, i)] += reg;
                }
                for r in 0..p {
                    for c in 0..n {
                        kkt[(n + r, c)] = eq_mat[(r, c)];
                        kkt[(c, n + r)] = eq_mat[(r, c)];
                    }
                }
                let mut rhs = DVector::zeros(n + p);
                for i in 0..n {
                    rhs[i] = -g[i];
                }
                // correct any accumulated equality drift
                let xv = DVector::from_column_slice(&x);
                let drift = &eq_mat * &xv - &eq_rhs;
                for r in 0..p {
                    rhs[n + r] = -drift[r];
                }
                match kkt.lu().solve(&rhs) {
                    Some(sol) => {
                        let dx: Vec<f64> = sol.rows(0, n).iter().copied().collect();
                        let gtd: f64 = g.iter().zip(&dx).map(|(gi, di)| gi * di).sum();
                        if gtd <= 0.0 || reg > 1e8 {
                            break (dx, gtd);
                        }
                        // not a descent direction: stiffen and retry
                        reg *= 100.0;
                    }
                    None => {
                        reg *= 100.0;
                        if reg > 1e10 {
                            return Err(SolverError::NumericalFailure(
                                "KKT factorization failed after regularization".into(),
                            ));
                        }
                    }
                }
            };
            let decrement = -gtd;
            if !decrement.is_finite() {
                return Err(SolverError::NumericalFailure("non-finite Newton step".into()));
            }
            if decrement * 0.5 <= 1e-10 * (1.0 + t) {
                break;
            }

            // back off to the strict interior, then Armijo
            let phi0 = ws.phi(&x);
            let mut step = 1.0;
            let mut moved = false;
            for _bt in 0..70 {
                let cand: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + step * di).collect();
                if ws.strictly_feasible(&cand) {
                    let phic = ws.phi(&cand);
                    if phic <= phi0 + 0.25 * step * gtd {
                        x = cand;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break; // no further progress at this barrier stage
            }
            if x.iter().any(|v| v.abs() > RUNAWAY) {
                return Err(SolverError::Unbounded("iterates diverged".into()));
            }
        }
        if m_barrier == 0 || (m_barrier as f64) / t < tol {
            break;
        }
        t *= 10.0;
        if t > 1e18 {
            return Err(SolverError::IterationLimit(
                "barrier parameter overflow before reaching tolerance".into(),
            ));
        }
    }

    let fx = (prog.objective.value)(&x);
    if fx < f0 {
        // never return a point worse than the start
        return Ok((prog.x0.clone(), f0));
    }
    Ok((x, fx))
}

// ---------------------------------------------------------------------------
// Linear programs
// ---------------------------------------------------------------------------

/// Dense linear program, maximized.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Objective coefficients c in maximize c^T x + constant.
    pub maximize: Vec<f64>,
    /// Inequality rows (a, b) meaning a^T x <= b.
    pub ineq: Vec<(Vec<f64>, f64)>,
    /// Equality rows (a, b) meaning a^T x = b.
    pub eq: Vec<(Vec<f64>, f64)>,
    /// Per-variable bounds, infinite sides allowed.
    pub bounds: Vec<(f64, f64)>,
    /// Constant offset reported with the objective value.
    pub objective_constant: f64,
}

impl LinearProgram {
    pub fn dim(&self) -> usize {
        self.maximize.len()
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.maximize.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>() + self.objective_constant
    }
}

/// Point satisfying the equalities that is closest to the bound-box middle.
fn eq_anchor(lp: &LinearProgram) -> Result<Vec<f64>, SolverError> {
    let n = lp.dim();
    let mid: Vec<f64> = lp
        .bounds
        .iter()
        .map(|&(lo, hi)| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        })
        .collect();
    let p = lp.eq.len();
    if p == 0 {
        return Ok(mid);
    }
    // minimize ||x - mid||^2 subject to E x = d via its KKT system
    let mut kkt = DMatrix::zeros(n + p, n + p);
    let mut rhs = DVector::zeros(n + p);
    for i in 0..n {
        kkt[(i, i)] = 1.0;
        rhs[i] = mid[i];
    }
    for (r, (a, b)) in lp.eq.iter().enumerate() {
        for (c, v) in a.iter().enumerate() {
            kkt[(n + r, c)] = *v;
            kkt[(c, n + r)] = *v;
        }
        rhs[n + r] = *b;
    }
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SolverError::Infeasible("degenerate equality system".into()))?;
    let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    for (r, (a, b)) in lp.eq.iter().enumerate() {
        let res: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum::<f64>() - b;
        if res.abs() > 1e-6 * (1.0 + b.abs()) {
            return Err(SolverError::Infeasible(format!(
                "inconsistent equality row {r} (residual {res:.3e})"
            )));
        }
    }
    Ok(x)
}

fn max_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut v = f64::NEG_INFINITY;
    for (a, b) in &lp.ineq {
        let lhs: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
        v = v.max(lhs - b);
    }
    for (i, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if lo.is_finite() {
            v = v.max(lo - x[i]);
        }
        if hi.is_finite() {
            v = v.max(x[i] - hi);
        }
    }
    if v == f64::NEG_INFINITY {
        -1.0
    } else {
        v
    }
}

/// Strictly feasible interior point via the single-slack Phase-I program.
fn phase_one(lp: &LinearProgram) -> Result<Vec<f64>, SolverError> {
    let n = lp.dim();
    let anchor = eq_anchor(lp)?;
    let v0 = max_violation(lp, &anchor);
    if v0 < -1e-7 {
        return Ok(anchor);
    }

    // variables (x, s): minimize s with every constraint relaxed by s
    let dim = n + 1;
    let mut ineq: Vec<Smooth> = Vec::new();
    for (a, b) in &lp.ineq {
        let mut row = a.clone();
        row.push(-1.0);
        ineq.push(Smooth::affine(row, -b));
    }
    for (i, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if lo.is_finite() {
            let mut row = vec![0.0; dim];
            row[i] = -1.0;
            row[n] = -1.0;
            ineq.push(Smooth::affine(row, lo));
        }
        if hi.is_finite() {
            let mut row = vec![0.0; dim];
            row[i] = 1.0;
            row[n] = -1.0;
            ineq.push(Smooth::affine(row, -hi));
        }
    }
    let eq: Vec<(Vec<f64>, f64)> = lp
        .eq
        .iter()
        .map(|(a, b)| {
            let mut row = a.clone();
            row.push(0.0);
            (row, *b)
        })
        .collect();
    let mut objective_coeffs = vec![0.0; dim];
    objective_coeffs[n] = -1.0; // maximize -s
    let mut x0 = anchor.clone();
    x0.push(v0.abs() + 1.0);
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
    bounds.push((-2.0, v0.abs() + 2.0));

    let prog = ConvexProgram {
        dim,
        objective: Smooth::affine(objective_coeffs, 0.0),
        ineq,
        eq,
        bounds,
        x0,
    };
    let (sol, _) = solve_convex(&prog, 1e-9)?;
    let s = sol[n];
    if s >= -1e-9 {
        return Err(SolverError::Infeasible(format!(
            "phase-I slack {s:.3e} (no strict interior found)"
        )));
    }
    Ok(sol[..n].to_vec())
}

/// Solve a linear program to `tol` (objective accuracy). Deterministic.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<(Vec<f64>, f64), SolverError> {
    let n = lp.dim();
    assert_eq!(lp.bounds.len(), n, "bounds dimension mismatch");
    let x0 = phase_one(lp)?;
    let ineq: Vec<Smooth> = lp
        .ineq
        .iter()
        .map(|(a, b)| Smooth::affine(a.clone(), -b))
        .collect();
    let prog = ConvexProgram {
        dim: n,
        objective: Smooth::affine(lp.maximize.clone(), lp.objective_constant),
        ineq,
        eq: lp.eq.clone(),
        bounds: lp.bounds.clone(),
        x0,
    };
    solve_convex(&prog, tol)
}
