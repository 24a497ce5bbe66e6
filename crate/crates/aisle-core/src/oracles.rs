//! Independent brute-force references used by the test suites: vertex
//! enumeration for LPs, combinatorial active sets for QPs, and exhaustive
//! order/grid search for the SIC power problem. None of this code shares a
//! path with the solvers it checks; it exists to verify them.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;

use crate::convex::{ConvexProgram, LinearProgram, Smooth};
use crate::noma::{DecodingOrder, PowerAlloc};

/// Random LP with a bounded feasible region: box [-2, 2] plus `m` random
/// halfspaces kept feasible at the origin.
pub fn random_bounded_lp<R: Rng>(rng: &mut R, n: usize, m: usize) -> LinearProgram {
    let maximize: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut ineq = Vec::with_capacity(m);
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(0.2..2.0); // origin strictly inside
        ineq.push((a, b));
    }
    LinearProgram {
        maximize,
        ineq,
        eq: vec![],
        bounds: vec![(-2.0, 2.0); n],
        objective_constant: 0.0,
    }
}

/// Exhaustive vertex enumeration: solve every n-subset of tight constraints
/// (inequalities plus box faces), keep feasible solutions, return the best
/// objective. Returns None when no vertex is feasible.
pub fn lp_vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.dim();
    // constraint rows as (a, b): a^T x = b candidates
    let mut rows: Vec<(Vec<f64>, f64)> = lp.ineq.clone();
    for (i, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if lo.is_finite() {
            let mut a = vec![0.0; n];
            a[i] = -1.0;
            rows.push((a, -lo));
        }
        if hi.is_finite() {
            let mut a = vec![0.0; n];
            a[i] = 1.0;
            rows.push((a, hi));
        }
    }
    let m = rows.len();
    let k = n - lp.eq.len();
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        // assemble active system: eq rows always, plus the subset
        let mut mat = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for (r, (a, b)) in lp.eq.iter().enumerate() {
            for c in 0..n {
                mat[(r, c)] = a[c];
            }
            rhs[r] = *b;
        }
        for (offset, &idx) in subset.iter().enumerate() {
            let r = lp.eq.len() + offset;
            for c in 0..n {
                mat[(r, c)] = rows[idx].0[c];
            }
            rhs[r] = rows[idx].1;
        }
        if let Some(x) = mat.lu().solve(&rhs) {
            let xv: Vec<f64> = x.iter().copied().collect();
            let feasible = rows.iter().all(|(a, b)| {
                a.iter().zip(&xv).map(|(ai, xi)| ai * xi).sum::<f64>() <= b + 1e-7
            });
            if feasible {
                let obj = lp.objective_at(&xv);
                best = Some(best.map_or(obj, |b: f64| b.max(obj)));
            }
        }
        // next k-combination of 0..m
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] != i + m - k {
                subset[i] += 1;
                for j in (i + 1)..k {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Dense concave QP: maximize -1/2 x^T P x + q^T x subject to A x <= b.
pub struct Qp {
    pub p_mat: DMatrix<f64>,
    pub q: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub x0: Vec<f64>,
}

impl Qp {
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let quad = (&xv.transpose() * &self.p_mat * &xv)[(0, 0)];
        -0.5 * quad + self.q.iter().zip(x).map(|(qi, xi)| qi * xi).sum::<f64>()
    }

    pub fn to_program(&self) -> ConvexProgram<'_> {
        let n = self.q.len();
        let ineq = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| Smooth::affine(a.clone(), -b))
            .collect();
        ConvexProgram {
            dim: n,
            objective: Smooth {
                value: Box::new(move |x| self.objective_at(x)),
                grad: Box::new(move |x, g| {
                    let xv = DVector::from_column_slice(x);
                    let px = &self.p_mat * xv;
                    for i in 0..x.len() {
                        g[i] += -px[i] + self.q[i];
                    }
                }),
                hess: Box::new(move |_, h| {
                    for i in 0..self.q.len() {
                        for j in 0..self.q.len() {
                            h[(i, j)] += -self.p_mat[(i, j)];
                        }
                    }
                }),
            },
            ineq,
            eq: vec![],
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            x0: self.x0.clone(),
        }
    }
}

/// Random strictly concave QP with `m` halfspace constraints and a strictly
/// feasible start.
pub fn random_qp<R: Rng>(rng: &mut R, n: usize, m: usize) -> Qp {
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut p_mat = &l * l.transpose();
    for i in 0..n {
        p_mat[(i, i)] += 0.5;
    }
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let center: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut a = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at_center: f64 = row.iter().zip(&center).map(|(r, c)| r * c).sum();
        a.push(row);
        b.push(at_center + rng.random_range(0.5..1.5));
    }
    Qp {
        p_mat,
        q,
        a,
        b,
        x0: center,
    }
}

/// Combinatorial reference for the QP: for every subset of constraints taken
/// as active, solve the KKT equalities and keep solutions with primal
/// feasibility and nonnegative multipliers; return the best objective.
pub fn qp_active_set(qp: &Qp) -> Option<f64> {
    let n = qp.q.len();
    let m = qp.a.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|k| mask >> k & 1 == 1).collect();
        if active.len() > n {
            continue;
        }
        let na = active.len();
        let mut kkt = DMatrix::zeros(n + na, n + na);
        let mut rhs = DVector::zeros(n + na);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = qp.p_mat[(i, j)];
            }
            rhs[i] = qp.q[i];
        }
        for (r, &k) in active.iter().enumerate() {
            for c in 0..n {
                kkt[(n + r, c)] = qp.a[k][c];
                kkt[(c, n + r)] = qp.a[k][c];
            }
            rhs[n + r] = qp.b[k];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        let lambda: Vec<f64> = sol.rows(n, na).iter().copied().collect();
        if lambda.iter().any(|&l| l < -1e-9) {
            continue;
        }
        let feasible = qp
            .a
            .iter()
            .zip(&qp.b)
            .all(|(a, b)| a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum::<f64>() <= b + 1e-8);
        if !feasible {
            continue;
        }
        let obj = qp.objective_at(&x);
        best = Some(best.map_or(obj, |b: f64| b.max(obj)));
    }
    best
}

// ---------------------------------------------------------------------------
// SIC order + power brute force
// ---------------------------------------------------------------------------

fn sum_rate(p: &[f64], order: &DecodingOrder, gains: &[f64], noise: f64) -> f64 {
    let n = p.len();
    let mut total = 0.0;
    for i in 0..n {
        let interf: f64 = (0..n)
            .filter(|&j| j != i && order.decodes_before(j, i))
            .map(|j| p[j])
            .sum();
        total += (1.0 + p[i] * gains[i] / (gains[i] * interf + noise)).log2();
    }
    total
}

fn all_tournaments(n: usize) -> Vec<DecodingOrder> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        let mut before = vec![vec![false; n]; n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            if mask >> k & 1 == 1 {
                before[i][j] = true;
            } else {
                before[j][i] = true;
            }
        }
        out.push(DecodingOrder::from_matrix(before));
    }
    out
}

fn feasible(p: &[f64], order: &DecodingOrder, p_max: f64) -> bool {
    PowerAlloc::new(p.to_vec()).is_feasible(order, p_max)
}

/// Exhaustive search over every tournament and a grid on the power simplex,
/// followed by local grid refinement around the winner. `grid` is the number
/// of cells per axis at the coarsest level.
pub fn sic_brute_force(gains: &[f64], noise: f64, p_max: f64, grid: usize) -> f64 {
    let n = gains.len();
    assert!(n >= 1 && n <= 3, "brute force implemented for N <= 3");
    if n == 1 {
        return (1.0 + p_max * gains[0] / noise).log2();
    }
    let mut best = f64::NEG_INFINITY;
    for order in all_tournaments(n) {
        let mut center = vec![p_max / n as f64; n];
        let mut span = p_max;
        for level in 0..6 {
            let step = span / grid as f64;
            let mut best_local = f64::NEG_INFINITY;
            let mut best_p = center.clone();
            if n == 2 {
                let lo = (center[0] - span / 2.0).max(0.0);
                let hi = (center[0] + span / 2.0).min(p_max);
                let mut p0 = lo;
                while p0 <= hi + 1e-15 {
                    let p = [p0, p_max - p0];
                    if feasible(&p, &order, p_max) {
                        let r = sum_rate(&p, &order, gains, noise);
                        if r > best_local {
                            best_local = r;
                            best_p = p.to_vec();
                        }
                    }
                    p0 += step;
                }
            } else {
                let lo0 = (center[0] - span / 2.0).max(0.0);
                let hi0 = (center[0] + span / 2.0).min(p_max);
                let lo1 = (center[1] - span / 2.0).max(0.0);
                let hi1 = (center[1] + span / 2.0).min(p_max);
                let mut p0 = lo0;
                while p0 <= hi0 + 1e-15 {
                    let mut p1 = lo1;
                    while p1 <= hi1 + 1e-15 {
                        let p2 = p_max - p0 - p1;
                        if p2 >= 0.0 {
                            let p = [p0, p1, p2];
                            if feasible(&p, &order, p_max) {
                                let r = sum_rate(&p, &order, gains, noise);
                                if r > best_local {
                                    best_local = r;
                                    best_p = p.to_vec();
                                }
                            }
                        }
                        p1 += step;
                    }
                    p0 += step;
                }
            }
            if best_local > f64::NEG_INFINITY {
                center = best_p;
                best = best.max(best_local);
            }
            span = 4.0 * step;
            if level >= 1 && step < 1e-9 * p_max {
                break;
            }
        }
    }
    best
}
