//! Joint SIC decoding-order and power allocation by penalty-based SCA,
//! reduced per iteration to a linear program.
//!
//! The binary order variables are relaxed to [0,1]; a penalty that vanishes
//! exactly at binary points pushes them back. Both log terms of the sum rate
//! and the penalty are linearized at the incumbent, the LP is solved, and
//! the loop stops when the true penalized objective stops improving. The
//! relaxed order is then rounded, repaired to a tournament, and the powers
//! re-projected if rounding broke the fairness chain.

use crate::convex::{solve_lp, ConvexProgram, LinearProgram, Smooth, SolverError};
use crate::error::{Error, Result};
use crate::noma::{rates, DecodingOrder, PowerAlloc, POWER_TOL};
use crate::scenario::SolverConfig;

/// Relaxed decoding order: off-diagonal entries in [0,1] with
/// w_ij + w_ji = 1.
#[derive(Debug, Clone)]
pub struct RelaxedOrder {
    pub w: Vec<Vec<f64>>,
}

impl RelaxedOrder {
    pub fn from_order(order: &DecodingOrder) -> RelaxedOrder {
        let n = order.n_users();
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j && order.decodes_before(i, j) {
                    w[i][j] = 1.0;
                }
            }
        }
        RelaxedOrder { w }
    }

    pub fn n_users(&self) -> usize {
        self.w.len()
    }

    /// Largest distance of any entry from {0, 1}.
    pub fn binariness_gap(&self) -> f64 {
        let n = self.n_users();
        let mut gap: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let w = self.w[i][j];
                    gap = gap.max(w.min(1.0 - w).abs());
                }
            }
        }
        gap
    }
}

/// True penalized objective: sum rate under the relaxed order minus
/// zeta * sum(w - w^2) over ordered pairs.
pub fn penalized_objective(
    w: &RelaxedOrder,
    p: &[f64],
    gains: &[f64],
    noise: f64,
    zeta: f64,
) -> f64 {
    let n = p.len();
    let mut rate = 0.0;
    for i in 0..n {
        let scaled_noise = noise / gains[i];
        let interf: f64 = (0..n).filter(|&j| j != i).map(|j| w.w[j][i] * p[j]).sum();
        rate += (interf + scaled_noise + p[i]).log2() - (interf + scaled_noise).log2();
    }
    let mut penalty = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                penalty += w.w[i][j] - w.w[i][j] * w.w[i][j];
            }
        }
    }
    rate - zeta * penalty
}

/// Variable order in the LP: p_0..p_{n-1}, then w entries for ordered pairs
/// (i, j), i != j, lexicographic.
fn pair_index(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

/// Build the per-iteration LP: the fully linearized penalized sum rate at
/// the expansion `(w0, p0)`, with the order-completeness equalities, the
/// power budget, box bounds, and the linearized bilinear fairness rows.
pub fn build_order_power_lp(
    w0: &RelaxedOrder,
    p0: &[f64],
    gains: &[f64],
    noise: f64,
    p_max: f64,
    zeta: f64,
) -> LinearProgram {
    let n = p0.len();
    let pairs = pair_index(n);
    let dim = n + pairs.len();
    let widx = |i: usize, j: usize| -> usize {
        n + pairs.iter().position(|&(a, b)| (a, b) == (i, j)).unwrap()
    };

    let mut cost = vec![0.0; dim];
    let mut constant = 0.0;
    let ln2 = std::f64::consts::LN_2;

    let mut rate_slope = vec![0.0; dim];
    for i in 0..n {
        let scaled_noise = noise / gains[i];
        let interf0: f64 = (0..n).filter(|&j| j != i).map(|j| w0.w[j][i] * p0[j]).sum();
        let den1 = interf0 + scaled_noise + p0[i];
        let den0 = interf0 + scaled_noise;
        constant += den1.log2() - den0.log2();
        // signal log: d/dp_i, d/dp_j via w0_ji, d/dw_ji via p0_j; the
        // interference log mirrors with den0 and no own-power term
        rate_slope[i] += 1.0 / (ln2 * den1);
        for j in 0..n {
            if j == i {
                continue;
            }
            rate_slope[j] += w0.w[j][i] / (ln2 * den1) - w0.w[j][i] / (ln2 * den0);
            rate_slope[widx(j, i)] += p0[j] / (ln2 * den1) - p0[j] / (ln2 * den0);
        }
    }
    // Taylor form: value(x0) + slope . (x - x0)
    for i in 0..n {
        constant -= rate_slope[i] * p0[i];
    }
    for &(i, j) in &pairs {
        constant -= rate_slope[widx(i, j)] * w0.w[i][j];
    }
    for k in 0..dim {
        cost[k] += rate_slope[k];
    }
    // penalty: keep -zeta w exact, linearize +zeta w^2 from below at w0
    for &(i, j) in &pairs {
        let w = w0.w[i][j];
        cost[widx(i, j)] += -zeta * (1.0 - 2.0 * w);
        constant += -zeta * w * w;
    }

    // equalities: pair completeness and the power budget
    let mut eq: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut row = vec![0.0; dim];
            row[widx(i, j)] = 1.0;
            row[widx(j, i)] = 1.0;
            eq.push((row, 1.0));
        }
    }
    let mut budget = vec![0.0; dim];
    budget[..n].fill(1.0);
    eq.push((budget, p_max));

    // linearized bilinear fairness: p_j >= w0 p_i + p0_i w_ij - w0 p0_i
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    for &(i, j) in &pairs {
        let mut row = vec![0.0; dim];
        row[i] += w0.w[i][j];
        row[widx(i, j)] += p0[i];
        row[j] += -1.0;
        ineq.push((row, w0.w[i][j] * p0[i]));
    }

    let mut bounds = vec![(0.0, p_max); n];
    bounds.extend(std::iter::repeat((0.0, 1.0)).take(pairs.len()));

    LinearProgram {
        maximize: cost,
        ineq,
        eq,
        bounds,
        objective_constant: constant,
    }
}

/// Result of the joint order/power optimization.
#[derive(Debug, Clone)]
pub struct SicPowerResult {
    pub order: DecodingOrder,
    pub power: PowerAlloc,
    pub sum_rate: f64,
    /// True penalized objective per accepted iteration.
    pub trace: Vec<f64>,
    /// Binariness gap of the relaxed order before rounding.
    pub pre_round_gap: f64,
}

fn unpack(x: &[f64], n: usize) -> (Vec<f64>, RelaxedOrder) {
    let pairs = pair_index(n);
    let p: Vec<f64> = x[..n].iter().map(|&v| v.max(0.0)).collect();
    let mut w = vec![vec![0.0; n]; n];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        w[i][j] = x[n + k].clamp(0.0, 1.0);
    }
    (p, RelaxedOrder { w })
}

/// Round the relaxed order to a tournament: the larger of the two opposing
/// entries wins; exact ties fall back to the supplied binary expansion.
fn round_order(w: &RelaxedOrder, fallback: &DecodingOrder) -> DecodingOrder {
    let n = w.n_users();
    let mut before = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let forward = if (w.w[i][j] - w.w[j][i]).abs() < 1e-12 {
                fallback.decodes_before(i, j)
            } else {
                w.w[i][j] > w.w[j][i]
            };
            before[i][j] = forward;
            before[j][i] = !forward;
        }
    }
    DecodingOrder::from_matrix(before)
}

fn violates_fairness(order: &DecodingOrder, p: &[f64], p_max: f64) -> bool {
    let n = p.len();
    let tol = POWER_TOL * p_max;
    for i in 0..n {
        for j in 0..n {
            if i != j && order.decodes_before(i, j) && p[j] < p[i] - tol {
                return true;
            }
        }
    }
    false
}

/// Least-squares projection of `p` onto the fairness-chain polytope of the
/// rounded order intersected with the budget simplex. Mutual-order cycles
/// force equal powers, so the projection runs over per-component values of
/// the condensation chain.
fn project_powers(order: &DecodingOrder, p: &[f64], p_max: f64) -> Result<Vec<f64>> {
    let n = p.len();
    // reachability closure of the decode-before digraph
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = i != j && order.decodes_before(i, j);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                reach[i][j] = reach[i][j] || (reach[i][k] && reach[k][j]);
            }
        }
    }
    // strongly connected components; tournaments give a totally ordered
    // condensation, sorted by how many outsiders decode before the block
    let mut comp = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if comp[i] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let members: Vec<usize> = (0..n)
            .filter(|&j| comp[j] == usize::MAX && (j == i || (reach[i][j] && reach[j][i])))
            .collect();
        for &m in &members {
            comp[m] = id;
        }
        comps.push(members);
    }
    let mut order_key: Vec<(usize, usize)> = comps
        .iter()
        .enumerate()
        .map(|(id, members)| {
            let before_count = (0..n)
                .filter(|&j| !members.contains(&j) && order.decodes_before(j, members[0]))
                .count();
            (before_count, id)
        })
        .collect();
    order_key.sort_unstable();
    let chain: Vec<usize> = order_key.into_iter().map(|(_, id)| id).collect();
    let m = chain.len();

    if m == 1 {
        // one big cycle: fairness forces equality
        return Ok(vec![p_max / n as f64; n]);
    }

    // one variable per chain block, earlier-decoding blocks hold less power
    let sizes: Vec<f64> = chain.iter().map(|&id| comps[id].len() as f64).collect();
    let targets: Vec<Vec<f64>> = chain
        .iter()
        .map(|&id| comps[id].iter().map(|&u| p[u]).collect())
        .collect();
    // strictly increasing, positive, budget-exact start
    let tilt = 1e-3;
    let mut q0: Vec<f64> = (0..m)
        .map(|k| 1.0 + tilt * (k as f64 - 0.5 * (m as f64 - 1.0)))
        .collect();
    let scale: f64 = p_max / q0.iter().zip(&sizes).map(|(q, c)| q * c).sum::<f64>();
    q0.iter_mut().for_each(|q| *q *= scale);

    let mut ineq: Vec<Smooth> = Vec::new();
    for k in 0..m - 1 {
        let mut row = vec![0.0; m];
        row[k] = 1.0;
        row[k + 1] = -1.0;
        ineq.push(Smooth::affine(row, 0.0));
    }
    let eq = vec![(sizes.clone(), p_max)];
    let objective = Smooth {
        value: Box::new({
            let targets = targets.clone();
            move |q: &[f64]| {
                let mut v = 0.0;
                for (k, tk) in targets.iter().enumerate() {
                    for t in tk {
                        v -= (q[k] - t) * (q[k] - t);
                    }
                }
                v
            }
        }),
        grad: Box::new({
            let targets = targets.clone();
            move |q: &[f64], g: &mut [f64]| {
                for (k, tk) in targets.iter().enumerate() {
                    for t in tk {
                        g[k] += -2.0 * (q[k] - t);
                    }
                }
            }
        }),
        hess: Box::new({
            let counts = sizes.clone();
            move |_q: &[f64], h: &mut nalgebra::DMatrix<f64>| {
                for (k, c) in counts.iter().enumerate() {
                    h[(k, k)] += -2.0 * c;
                }
            }
        }),
    };
    let prog = ConvexProgram {
        dim: m,
        objective,
        ineq,
        eq,
        bounds: vec![(0.0, p_max); m],
        x0: q0,
    };
    let (q, _) = crate::convex::solve_convex(&prog, 1e-10).map_err(Error::Solver)?;
    let mut out = vec![0.0; n];
    for (k, &id) in chain.iter().enumerate() {
        for &u in &comps[id] {
            out[u] = q[k].max(0.0);
        }
    }
    // exact budget after clamping
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v *= p_max / total);
    }
    Ok(out)
}

/// Jointly optimize the SIC decoding order and power allocation for fixed
/// gains. Returns a binary order and a feasible allocation that is never
/// worse (in sum rate) than the initializer.
pub fn optimize_sic_power(
    gains: &[f64],
    noise: f64,
    w_init: &DecodingOrder,
    p_init: &PowerAlloc,
    cfg: &SolverConfig,
) -> Result<SicPowerResult> {
    let n = gains.len();
    let p_max = p_init.total();
    let gv = crate::channel::GainVector {
        gain: gains.to_vec(),
        rows: vec![],
    };
    let init_sum: f64 = rates(p_init, w_init, &gv, noise).iter().sum();

    if n == 1 {
        return Ok(SicPowerResult {
            order: DecodingOrder::identity(1),
            power: PowerAlloc::new(vec![p_max]),
            sum_rate: (1.0 + p_max * gains[0] / noise).log2(),
            trace: vec![],
            pre_round_gap: 0.0,
        });
    }

    // Seeds for the penalty loop. A single corner start cannot leave its own
    // basin, so three families are tried: the binary initializer; the neutral
    // fractional midpoint walked up a penalty-weight ramp (the relaxation
    // picks its decoding order before binariness is enforced); and one
    // power-tilted seed per user. The fairness constraint forces the decode
    // order to be the ascending-power sort, so the tilts seed exactly the
    // "user k carries the budget" basins.
    let uniform = vec![p_max / n as f64; n];
    let midpoint = {
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    w[i][j] = 0.5;
                }
            }
        }
        RelaxedOrder { w }
    };
    let mut attempts: Vec<(RelaxedOrder, Vec<f64>, Vec<f64>)> = vec![
        (
            RelaxedOrder::from_order(w_init),
            p_init.p.clone(),
            vec![cfg.zeta],
        ),
        (midpoint, uniform, vec![0.0, 0.25 * cfg.zeta, cfg.zeta]),
    ];
    for k in 0..n {
        let eps = 1e-4 * p_max;
        let mut p_tilt = vec![eps; n];
        p_tilt[k] = p_max - eps * (n as f64 - 1.0);
        // ascending-power tournament, ties broken by index
        let mut before = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    before[i][j] =
                        p_tilt[i] < p_tilt[j] || (p_tilt[i] == p_tilt[j] && i < j);
                }
            }
        }
        attempts.push((
            RelaxedOrder::from_order(&DecodingOrder::from_matrix(before)),
            p_tilt,
            vec![cfg.zeta],
        ));
    }

    let mut best: Option<SicPowerResult> = None;
    for (w_start, p_start, ladder) in attempts {
        let (w, p, trace) =
            penalty_sca_loop(w_start, p_start, gains, noise, p_max, &ladder, cfg)?;
        let pre_round_gap = w.binariness_gap();
        let order = round_order(&w, w_init);
        let mut p_round = p.clone();
        if violates_fairness(&order, &p_round, p_max) {
            p_round = project_powers(&order, &p_round, p_max)?;
        }
        let total: f64 = p_round.iter().sum();
        if total > 0.0 {
            p_round.iter_mut().for_each(|v| *v *= p_max / total);
        }
        // polish the powers under the rounded order (exact fairness rows)
        let polished = optimize_power_fixed_order(
            gains,
            noise,
            &order,
            &PowerAlloc::new(p_round),
            cfg,
        )?;
        let candidate = SicPowerResult {
            order,
            power: polished.power,
            sum_rate: polished.sum_rate,
            trace,
            pre_round_gap,
        };
        match &best {
            Some(b) if candidate.sum_rate <= b.sum_rate => {}
            _ => best = Some(candidate),
        }
    }
    let best = best.expect("at least one attempt");

    // never worse than the initializer
    if best.sum_rate < init_sum || !best.power.is_feasible(&best.order, p_max) {
        return Ok(SicPowerResult {
            order: w_init.clone(),
            power: PowerAlloc::new(p_init.p.clone()),
            sum_rate: init_sum,
            trace: best.trace,
            pre_round_gap: best.pre_round_gap,
        });
    }
    Ok(best)
}

/// The SCA loop over one start, walking a penalty-weight ladder. Returns the
/// final relaxed point plus the accepted-objective trace of the last rung.
fn penalty_sca_loop(
    mut w: RelaxedOrder,
    mut p: Vec<f64>,
    gains: &[f64],
    noise: f64,
    p_max: f64,
    ladder: &[f64],
    cfg: &SolverConfig,
) -> Result<(RelaxedOrder, Vec<f64>, Vec<f64>)> {
    let n = p.len();
    let mut trace = Vec::new();
    for (rung, &zeta) in ladder.iter().enumerate() {
        let last = rung + 1 == ladder.len();
        let mut obj = penalized_objective(&w, &p, gains, noise, zeta);
        if last {
            trace.push(obj);
        }
        for _iter in 0..cfg.max_power_iters {
            let lp = build_order_power_lp(&w, &p, gains, noise, p_max, zeta);
            let (x, _) = match solve_lp(&lp, cfg.tol) {
                Ok(sol) => sol,
                Err(SolverError::Infeasible(msg)) => {
                    return Err(Error::Solver(SolverError::Infeasible(format!(
                        "order/power LP lost feasibility (internal error): {msg}"
                    ))))
                }
                Err(e) => return Err(Error::Solver(e)),
            };
            let (p_new, w_new) = unpack(&x, n);
            let obj_new = penalized_objective(&w_new, &p_new, gains, noise, zeta);
            if obj_new <= obj + cfg.eps_power {
                if obj_new > obj {
                    w = w_new;
                    p = p_new;
                    if last {
                        trace.push(obj_new);
                    }
                }
                break;
            }
            w = w_new;
            p = p_new;
            obj = obj_new;
            if last {
                trace.push(obj);
            }
        }
    }
    Ok((w, p, trace))
}

/// Power-only variant used by the fixed-order baseline: the same loop with
/// the order variables substituted at their fixed binary values (the
/// fairness rows then reduce to the exact bilinear constraint).
pub fn optimize_power_fixed_order(
    gains: &[f64],
    noise: f64,
    w_fixed: &DecodingOrder,
    p_init: &PowerAlloc,
    cfg: &SolverConfig,
) -> Result<SicPowerResult> {
    let n = gains.len();
    let p_max = p_init.total();
    let gv = crate::channel::GainVector {
        gain: gains.to_vec(),
        rows: vec![],
    };
    let init_sum: f64 = rates(p_init, w_fixed, &gv, noise).iter().sum();
    if n == 1 {
        return Ok(SicPowerResult {
            order: DecodingOrder::identity(1),
            power: PowerAlloc::new(vec![p_max]),
            sum_rate: (1.0 + p_max * gains[0] / noise).log2(),
            trace: vec![],
            pre_round_gap: 0.0,
        });
    }

    let w = RelaxedOrder::from_order(w_fixed);
    let pairs = pair_index(n);
    let mut p = p_init.p.clone();
    let mut obj = penalized_objective(&w, &p, gains, noise, cfg.zeta);
    let mut trace = vec![obj];

    for _iter in 0..cfg.max_power_iters {
        let full = build_order_power_lp(&w, &p, gains, noise, p_max, cfg.zeta);
        // reduce to the power block by substituting the fixed order
        let mut cost = full.maximize[..n].to_vec();
        let mut constant = full.objective_constant;
        for (k, &(i, j)) in pairs.iter().enumerate() {
            constant += full.maximize[n + k] * w.w[i][j];
        }
        let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
        for (row, b) in &full.ineq {
            let r = row[..n].to_vec();
            let mut rhs = *b;
            for (k, &(i, j)) in pairs.iter().enumerate() {
                rhs -= row[n + k] * w.w[i][j];
            }
            if r.iter().any(|&v| v != 0.0) {
                ineq.push((r, rhs));
            }
        }
        let eq = vec![(vec![1.0; n], p_max)];
        let lp = LinearProgram {
            maximize: std::mem::take(&mut cost),
            ineq,
            eq,
            bounds: vec![(0.0, p_max); n],
            objective_constant: constant,
        };
        let (x, _) = solve_lp(&lp, cfg.tol)?;
        let p_new: Vec<f64> = x[..n].iter().map(|&v| v.max(0.0)).collect();
        let obj_new = penalized_objective(&w, &p_new, gains, noise, cfg.zeta);
        if obj_new <= obj + cfg.eps_power {
            if obj_new > obj {
                p = p_new;
                trace.push(obj_new);
            }
            break;
        }
        p = p_new;
        obj = obj_new;
        trace.push(obj);
    }

    let power = PowerAlloc::new(p);
    let sum_rate: f64 = rates(&power, w_fixed, &gv, noise).iter().sum();
    if sum_rate < init_sum || !power.is_feasible(w_fixed, p_max) {
        return Ok(SicPowerResult {
            order: w_fixed.clone(),
            power: PowerAlloc::new(p_init.p.clone()),
            sum_rate: init_sum,
            trace,
            pre_round_gap: 0.0,
        });
    }
    Ok(SicPowerResult {
        order: w_fixed.clone(),
        power,
        sum_rate,
        trace,
        pre_round_gap: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::GainVector;
    use crate::noma::{initial_order, initial_power};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn gv(g: &[f64]) -> GainVector {
        GainVector {
            gain: g.to_vec(),
            rows: vec![],
        }
    }

    #[test]
    fn lp_objective_tight_at_expansion() {
        let gains = [2e-9, 5e-10, 1.2e-9];
        let order = initial_order(&gv(&gains));
        let p0 = initial_power(3, 0.1);
        let w0 = RelaxedOrder::from_order(&order);
        let lp = build_order_power_lp(&w0, &p0.p, &gains, 1e-11, 0.1, 10.0);
        let pairs = pair_index(3);
        let mut x = p0.p.clone();
        for &(i, j) in &pairs {
            x.push(w0.w[i][j]);
        }
        let got = lp.objective_at(&x);
        let want = penalized_objective(&w0, &p0.p, &gains, 1e-11, 10.0);
        assert!(
            (got - want).abs() <= 1e-9 * (1.0 + want.abs()),
            "{got} vs {want}"
        );
    }

    #[test]
    fn fractional_expansion_stays_tight() {
        let gains = [2e-9, 5e-10];
        let w0 = RelaxedOrder {
            w: vec![vec![0.0, 0.7], vec![0.3, 0.0]],
        };
        let p0 = [0.04, 0.06];
        let lp = build_order_power_lp(&w0, &p0, &gains, 1e-11, 0.1, 10.0);
        let x = vec![0.04, 0.06, 0.7, 0.3];
        let got = lp.objective_at(&x);
        let want = penalized_objective(&w0, &p0, &gains, 1e-11, 10.0);
        assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
    }

    #[test]
    fn binary_expansion_has_zero_penalty() {
        let gains = [2e-9, 5e-10];
        let order = initial_order(&gv(&gains));
        let w0 = RelaxedOrder::from_order(&order);
        let with = penalized_objective(&w0, &[0.05, 0.05], &gains, 1e-11, 10.0);
        let without = penalized_objective(&w0, &[0.05, 0.05], &gains, 1e-11, 0.0);
        assert_eq!(with, without);
    }

    #[test]
    fn half_entries_penalty_value() {
        // w - w^2 = 0.25 per ordered off-diagonal entry at w = 0.5
        let w = RelaxedOrder {
            w: vec![vec![0.0, 0.5], vec![0.5, 0.0]],
        };
        let zeta = 10.0;
        let with = penalized_objective(&w, &[0.05, 0.05], &[1e-9, 1e-9], 1e-11, zeta);
        let without = penalized_objective(&w, &[0.05, 0.05], &[1e-9, 1e-9], 1e-11, 0.0);
        let ordered_entries = 2.0;
        assert!((without - with - zeta * 0.25 * ordered_entries).abs() < 1e-12);
    }

    #[test]
    fn single_user_closed_form() {
        let res = optimize_sic_power(
            &[1e-9],
            1e-11,
            &DecodingOrder::identity(1),
            &PowerAlloc::new(vec![0.1]),
            &cfg(),
        )
        .unwrap();
        assert_eq!(res.power.p, vec![0.1]);
        assert!((res.sum_rate - (1.0f64 + 0.1 * 1e-9 / 1e-11).log2()).abs() < 1e-12);
    }

    #[test]
    fn two_user_orders_become_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let g1: f64 = rng.random_range(1e-9..1e-7);
            let g2 = g1 * rng.random_range(1e-3..0.05);
            let gains = [g1, g2];
            let order = initial_order(&gv(&gains));
            let p0 = initial_power(2, 0.1);
            let res = optimize_sic_power(&gains, 1e-11, &order, &p0, &cfg()).unwrap();
            assert!(
                res.pre_round_gap <= 1e-3,
                "relaxed order not binary: gap {}",
                res.pre_round_gap
            );
            assert!(res.order.is_tournament());
            assert!(res.power.is_feasible(&res.order, 0.1));
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..20 {
            let n = if rng.random_bool(0.5) { 2 } else { 3 };
            let gains: Vec<f64> = (0..n).map(|_| rng.random_range(1e-10..1e-7)).collect();
            let order = initial_order(&gv(&gains));
            let p0 = initial_power(n, 0.1);
            let res = optimize_sic_power(&gains, 1e-11, &order, &p0, &cfg()).unwrap();
            for w in res.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "trace decreased: {:?}", res.trace);
            }
        }
    }

    #[test]
    fn never_worse_than_initializer() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..40 {
            let n = 1 + rng.random_range(1..3usize);
            let gains: Vec<f64> = (0..n).map(|_| rng.random_range(1e-11..1e-7)).collect();
            let order = initial_order(&gv(&gains));
            let p0 = initial_power(n, 0.1);
            let init_sum: f64 = rates(&p0, &order, &gv(&gains), 1e-11).iter().sum();
            let res = optimize_sic_power(&gains, 1e-11, &order, &p0, &cfg()).unwrap();
            assert!(res.sum_rate >= init_sum - 1e-9);
            assert!(res.power.is_feasible(&res.order, 0.1));
        }
    }

    #[test]
    fn matches_brute_force_two_users() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for trial in 0..10 {
            let g1: f64 = rng.random_range(1e-9..1e-7);
            let g2: f64 = rng.random_range(1e-10..1e-8);
            let gains = [g1, g2];
            let order = initial_order(&gv(&gains));
            let p0 = initial_power(2, 0.1);
            let res = optimize_sic_power(&gains, 1e-11, &order, &p0, &cfg()).unwrap();
            let best = crate::oracles::sic_brute_force(&gains, 1e-11, 0.1, 2000);
            assert!(
                res.sum_rate >= best - 1e-6,
                "trial {trial}: optimizer {} vs brute force {}",
                res.sum_rate,
                best
            );
        }
    }

    #[test]
    fn fixed_order_never_beats_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..10 {
            let gains: Vec<f64> = (0..3).map(|_| rng.random_range(1e-10..1e-7)).collect();
            let order = initial_order(&gv(&gains));
            let p0 = initial_power(3, 0.1);
            let joint = optimize_sic_power(&gains, 1e-11, &order, &p0, &cfg()).unwrap();
            let fixed = optimize_power_fixed_order(&gains, 1e-11, &order, &p0, &cfg()).unwrap();
            assert!(fixed.sum_rate <= joint.sum_rate + 1e-6);
            assert_eq!(fixed.order, order);
            assert!(fixed.power.is_feasible(&order, 0.1));
        }
    }

    #[test]
    fn projection_repairs_broken_fairness() {
        // order 0 < 1 < 2 with inverted powers
        let gains = [3e-9, 2e-9, 1e-9];
        let order = initial_order(&gv(&gains));
        let p = [0.06, 0.03, 0.01];
        assert!(violates_fairness(&order, &p, 0.1));
        let fixed = project_powers(&order, &p, 0.1).unwrap();
        assert!(!violates_fairness(&order, &fixed, 0.1));
        assert!((fixed.iter().sum::<f64>() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn cyclic_order_collapses_to_equal_powers() {
        // 0 -> 1 -> 2 -> 0 forces equal powers
        let before = vec![
            vec![false, true, false],
            vec![false, false, true],
            vec![true, false, false],
        ];
        let order = DecodingOrder::from_matrix(before);
        let fixed = project_powers(&order, &[0.05, 0.03, 0.02], 0.1).unwrap();
        for v in &fixed {
            assert!((v - 0.1 / 3.0).abs() < 1e-9);
        }
    }
}
