//! Per-slot UAV position update: a fractional-programming (ratio) outer loop
//! around a successive-convex-approximation inner loop.
//!
//! Each inner iteration maximizes a concave surrogate of sum-rate minus
//! ratio-times-power. The surrogate is built from first-order Taylor bounds
//! that are tight at the expansion point and never overstate the true
//! objective, giving monotone ascent; the outer loop updates the ratio
//! parameter to the achieved rate/power ratio until the residual vanishes.

use crate::channel::{composite_gain, segment_rows};
use crate::convex::{solve_convex, ConvexProgram, Smooth};
use crate::energy::{propulsion_power, V_FLOOR};
use crate::error::{Error, Result};
use crate::noma::{rates, DecodingOrder, PowerAlloc};
use crate::scenario::{Association, Point3, Scenario, SolverConfig};

/// Expansion velocity floor: slightly above the propulsion speed floor so
/// the speed-slack interval around it stays nonempty.
const EXPANSION_V_FLOOR: f64 = 1.05 * V_FLOOR;

/// Closed-form gain coefficients of one user as a function of its own slack
/// distances: direct / G^xi + array / R^2 + cross / (G^{xi/2} R).
/// Only the associated IRS contributes; its static IRS-user distance is
/// folded into the coefficients.
#[derive(Debug, Clone)]
pub struct GainModel {
    pub irs_of_user: Vec<usize>,
    pub direct: Vec<f64>,
    pub array: Vec<f64>,
    pub cross: Vec<f64>,
    /// Path-loss exponent on the UAV-user distance.
    pub xi: f64,
}

impl GainModel {
    pub fn new(assoc: &Association, sc: &Scenario) -> GainModel {
        let n = sc.n_users();
        let rows = segment_rows(assoc, sc.panel_rows);
        let k_ug = sc.rician_ug / (sc.rician_ug + 1.0);
        let k_rg = sc.rician_rg / (sc.rician_rg + 1.0);
        let mut direct = Vec::with_capacity(n);
        let mut array = Vec::with_capacity(n);
        let mut cross = Vec::with_capacity(n);
        let mut irs_of_user = Vec::with_capacity(n);
        for i in 0..n {
            let s = assoc.assign[i];
            irs_of_user.push(s);
            direct.push(sc.beta * k_ug);
            let d_rg = sc.irs[s].dist(&sc.users[i]);
            let elements = (sc.panel_cols * rows[s][i]) as f64;
            let amp =
                sc.amplitude * sc.beta * elements * k_rg.sqrt() / d_rg.powf(sc.xi_rg / 2.0);
            array.push(amp * amp);
            cross.push(2.0 * (sc.beta * k_ug).sqrt() * amp);
        }
        GainModel {
            irs_of_user,
            direct,
            array,
            cross,
            xi: sc.xi_ug,
        }
    }

    /// Gain of user `i` at slack distances (g, r); jointly convex in both.
    pub fn value(&self, i: usize, g: f64, r: f64) -> f64 {
        self.direct[i] / g.powf(self.xi)
            + self.array[i] / (r * r)
            + self.cross[i] / (g.powf(self.xi / 2.0) * r)
    }

    /// First-order Taylor expansion of [`GainModel::value`] about (g0, r0):
    /// a global under-estimator of the convex gain, tight at the expansion.
    pub fn linearize(&self, i: usize, g0: f64, r0: f64) -> AffineGain {
        let at = self.value(i, g0, r0);
        let dg = -self.xi * self.direct[i] / g0.powf(self.xi + 1.0)
            - 0.5 * self.xi * self.cross[i] / (g0.powf(self.xi / 2.0 + 1.0) * r0);
        let dr = -2.0 * self.array[i] / (r0 * r0 * r0)
            - self.cross[i] / (g0.powf(self.xi / 2.0) * r0 * r0);
        AffineGain {
            g0,
            r0,
            at_expansion: at,
            dg,
            dr,
        }
    }
}

/// Tangent plane of the per-user gain at one expansion point.
#[derive(Debug, Clone, Copy)]
pub struct AffineGain {
    pub g0: f64,
    pub r0: f64,
    pub at_expansion: f64,
    pub dg: f64,
    pub dr: f64,
}

impl AffineGain {
    pub fn value(&self, g: f64, r: f64) -> f64 {
        self.at_expansion + self.dg * (g - self.g0) + self.dr * (r - self.r0)
    }
}

/// Concave-in-H lower bound on log2(1 + p/H), tangent at `h0`.
#[derive(Debug, Clone, Copy)]
pub struct RateBound {
    pub h0: f64,
    pub p: f64,
    pub at_expansion: f64,
    pub slope: f64,
}

/// First-order Taylor bound of the per-user rate in its interference slack:
/// log2(1 + p/h0) - p log2(e) (h - h0) / (h0 (h0 + p)).
pub fn rate_taylor_bound(h0: f64, p: f64) -> RateBound {
    RateBound {
        h0,
        p,
        at_expansion: (1.0 + p / h0).log2(),
        slope: -p * std::f64::consts::LOG2_E / (h0 * (h0 + p)),
    }
}

impl RateBound {
    pub fn value(&self, h: f64) -> f64 {
        self.at_expansion + self.slope * (h - self.h0)
    }
}

/// SCA expansion point: position, slack distances, interference slack,
/// expansion velocity (floored) and speed slack, plus the gains used as
/// scaling anchors.
#[derive(Debug, Clone)]
pub struct SurrogatePoint {
    pub pos: Point3,
    /// Per-user slack distance (equals the true UAV-user distance).
    pub user_dist: Vec<f64>,
    /// Per-IRS slack distance (equals the true UAV-IRS distance).
    pub irs_dist: Vec<f64>,
    /// Per-user interference-plus-scaled-noise slack.
    pub sinr_denom: Vec<f64>,
    /// Per-user composite gain at the expansion (scaling anchor).
    pub gain: Vec<f64>,
    /// Expansion velocity, norm floored to [`EXPANSION_V_FLOOR`].
    pub vel: [f64; 2],
    /// Speed slack at the expansion.
    pub speed_slack: f64,
}

impl SurrogatePoint {
    /// Build the expansion at `pos` with incoming velocity `vel` (floored
    /// when shorter than the expansion floor; direction kept).
    pub fn at(
        pos: Point3,
        vel: [f64; 2],
        assoc: &Association,
        order: &DecodingOrder,
        power: &PowerAlloc,
        sc: &Scenario,
    ) -> Result<SurrogatePoint> {
        let gains = composite_gain(pos, assoc, sc)?;
        let n = sc.n_users();
        let user_dist: Vec<f64> = sc.users.iter().map(|u| pos.dist(u)).collect();
        let irs_dist: Vec<f64> = sc.irs.iter().map(|r| pos.dist(r)).collect();
        let mut sinr_denom = Vec::with_capacity(n);
        for i in 0..n {
            let interference: f64 = (0..n)
                .filter(|&j| j != i && order.decodes_before(j, i))
                .map(|j| power.p[j])
                .sum();
            sinr_denom.push(interference + sc.noise / gains.gain[i]);
        }
        let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
        let vel = if speed < EXPANSION_V_FLOOR {
            if speed < 1e-12 {
                [EXPANSION_V_FLOOR, 0.0]
            } else {
                [
                    vel[0] * EXPANSION_V_FLOOR / speed,
                    vel[1] * EXPANSION_V_FLOOR / speed,
                ]
            }
        } else {
            vel
        };
        let speed_slack = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt().max(V_FLOOR);
        Ok(SurrogatePoint {
            pos,
            user_dist,
            irs_dist,
            sinr_denom,
            gain: gains.gain.clone(),
            vel,
            speed_slack,
        })
    }
}

/// Variable layout of the per-slot surrogate program:
/// [x, y, z, G_0.., R_0.., H'_0.., B'_0.., Vs].
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    s: usize,
}

impl Layout {
    fn dim(&self) -> usize {
        3 + self.n + self.s + self.n + self.n + 1
    }
    fn g(&self, i: usize) -> usize {
        3 + i
    }
    fn r(&self, s: usize) -> usize {
        3 + self.n + s
    }
    fn h(&self, i: usize) -> usize {
        3 + self.n + self.s + i
    }
    fn b(&self, i: usize) -> usize {
        3 + self.n + self.s + self.n + i
    }
    fn vs(&self) -> usize {
        self.dim() - 1
    }
}

/// The assembled convex surrogate for one slot plus the metadata needed to
/// interpret and audit its solutions. Interference and gain variables are
/// normalized by their expansion values to keep the Newton systems well
/// conditioned.
pub struct SurrogateProblem<'a> {
    pub prog: ConvexProgram<'a>,
    pub point: SurrogatePoint,
    pub rate_bounds: Vec<RateBound>,
    layout: Layout,
    h_scale: Vec<f64>,
    b_scale: Vec<f64>,
}

impl SurrogateProblem<'_> {
    /// Surrogate objective evaluated exactly at the expansion point (all
    /// Taylor residuals vanish there).
    pub fn objective_at_expansion(&self) -> f64 {
        let x = self.expansion_vector();
        (self.prog.objective.value)(&x)
    }

    /// The expansion point embedded in solver coordinates.
    pub fn expansion_vector(&self) -> Vec<f64> {
        let l = self.layout;
        let mut x = vec![0.0; l.dim()];
        x[0] = self.point.pos.x;
        x[1] = self.point.pos.y;
        x[2] = self.point.pos.z;
        for i in 0..l.n {
            x[l.g(i)] = self.point.user_dist[i];
            x[l.h(i)] = self.point.sinr_denom[i] / self.h_scale[i];
            x[l.b(i)] = self.point.gain[i] / self.b_scale[i];
        }
        for s in 0..l.s {
            x[l.r(s)] = self.point.irs_dist[s];
        }
        x[l.vs()] = self.point.speed_slack;
        x
    }

    pub fn solution_position(&self, x: &[f64]) -> Point3 {
        Point3::new(x[0], x[1], x[2])
    }

    /// Surrogate sum rate at a solver point (for lower-bound audits).
    pub fn surrogate_rate_sum(&self, x: &[f64]) -> f64 {
        let l = self.layout;
        (0..l.n)
            .map(|i| self.rate_bounds[i].value(x[l.h(i)] * self.h_scale[i]))
            .sum()
    }
}

/// Assemble the convex surrogate program about `point` for ratio parameter
/// `omega`, anchored at the slot's starting position. Constraints: step
/// ball, altitude box, distance-slack relaxations, the gain-bound link, the
/// interference coupling, and the speed-slack linearization above its floor.
pub fn build_surrogate(
    point: &SurrogatePoint,
    omega: f64,
    assoc: &Association,
    power: &PowerAlloc,
    sc: &Scenario,
    anchor: Point3,
) -> SurrogateProblem<'static> {
    let n = sc.n_users();
    let s_count = sc.n_irs();
    let layout = Layout { n, s: s_count };
    let dim = layout.dim();
    let model = GainModel::new(assoc, sc);

    let h_scale = point.sinr_denom.clone();
    let b_scale = point.gain.clone();

    // --- objective: sum of rate bounds minus omega * (comm + propulsion) ---
    let rate_bounds: Vec<RateBound> = (0..n)
        .map(|i| rate_taylor_bound(point.sinr_denom[i], power.p[i]))
        .collect();
    let p_m = sc.eta * power.total();
    let pr = &sc.propulsion;
    let tip2 = (pr.omega * pr.rotor_radius).powi(2);
    let blade = pr.blade_power;
    let induced = pr.induced_power * pr.rotor_induced_velocity;
    let parasite = 0.5 * pr.drag_ratio * pr.air_density * pr.solidity * pr.disk_area;
    let tau = sc.tau;
    let (ax, ay) = (anchor.x, anchor.y);

    let objective = {
        let vb = rate_bounds.clone();
        let vh = h_scale.clone();
        let gb = rate_bounds.clone();
        let gh = h_scale.clone();
        Smooth {
            value: Box::new(move |x: &[f64]| {
                let l = Layout { n, s: s_count };
                let mut rate = 0.0;
                for i in 0..n {
                    rate += vb[i].value(x[l.h(i)] * vh[i]);
                }
                let vx = (x[0] - ax) / tau;
                let vy = (x[1] - ay) / tau;
                let sp2 = vx * vx + vy * vy;
                let p_fly = blade * (1.0 + 3.0 * sp2 / tip2)
                    + induced / x[l.vs()]
                    + parasite * sp2 * sp2.sqrt();
                rate - omega * (p_m + p_fly)
            }),
            grad: Box::new(move |x: &[f64], g: &mut [f64]| {
                let l = Layout { n, s: s_count };
                for i in 0..n {
                    g[l.h(i)] += gb[i].slope * gh[i];
                }
                let vx = (x[0] - ax) / tau;
                let vy = (x[1] - ay) / tau;
                let sp = (vx * vx + vy * vy).sqrt();
                let dvx = blade * 6.0 * vx / tip2 + 3.0 * parasite * sp * vx;
                let dvy = blade * 6.0 * vy / tip2 + 3.0 * parasite * sp * vy;
                g[0] += -omega * dvx / tau;
                g[1] += -omega * dvy / tau;
                let vs = x[l.vs()];
                g[l.vs()] += omega * induced / (vs * vs);
            }),
            hess: Box::new(move |x: &[f64], h: &mut nalgebra::DMatrix<f64>| {
                let l = Layout { n, s: s_count };
                let vx = (x[0] - ax) / tau;
                let vy = (x[1] - ay) / tau;
                let sp = (vx * vx + vy * vy).sqrt();
                let mut hxx = blade * 6.0 / tip2;
                let mut hyy = blade * 6.0 / tip2;
                let mut hxy = 0.0;
                if sp > 1e-12 {
                    hxx += 3.0 * parasite * (sp + vx * vx / sp);
                    hyy += 3.0 * parasite * (sp + vy * vy / sp);
                    hxy += 3.0 * parasite * vx * vy / sp;
                }
                let t2 = tau * tau;
                h[(0, 0)] += -omega * hxx / t2;
                h[(1, 1)] += -omega * hyy / t2;
                h[(0, 1)] += -omega * hxy / t2;
                h[(1, 0)] += -omega * hxy / t2;
                let vs = x[l.vs()];
                h[(l.vs(), l.vs())] += -2.0 * omega * induced / (vs * vs * vs);
            }),
        }
    };

    // --- constraints --------------------------------------------------------
    let mut ineq: Vec<Smooth> = Vec::new();
    let step = tau * sc.v_max;
    let ball = |cx: f64, cy: f64, cz: f64, rhs: f64, slack: Option<(usize, f64)>| Smooth {
        value: Box::new(move |x: &[f64]| {
            let d2 = (x[0] - cx).powi(2) + (x[1] - cy).powi(2) + (x[2] - cz).powi(2);
            match slack {
                Some((idx, g0)) => d2 - 2.0 * g0 * x[idx] + g0 * g0,
                None => d2 - rhs,
            }
        }),
        grad: Box::new(move |x: &[f64], g: &mut [f64]| {
            g[0] += 2.0 * (x[0] - cx);
            g[1] += 2.0 * (x[1] - cy);
            g[2] += 2.0 * (x[2] - cz);
            if let Some((idx, g0)) = slack {
                g[idx] += -2.0 * g0;
            }
        }),
        hess: Box::new(|_x: &[f64], h: &mut nalgebra::DMatrix<f64>| {
            for k in 0..3 {
                h[(k, k)] += 2.0;
            }
        }),
    };

    // movement limit per slot
    ineq.push(ball(anchor.x, anchor.y, anchor.z, step * step, None));
    // distance-slack relaxations: ||L - target||^2 <= 2 G0 G - G0^2
    for i in 0..n {
        let u = sc.users[i];
        ineq.push(ball(u.x, u.y, u.z, 0.0, Some((layout.g(i), point.user_dist[i]))));
    }
    for s in 0..s_count {
        let r = sc.irs[s];
        ineq.push(ball(r.x, r.y, r.z, 0.0, Some((layout.r(s), point.irs_dist[s]))));
    }

    // gain bound: scaled B under the tangent of the convex gain
    for i in 0..n {
        let lin = model.linearize(i, point.user_dist[i], point.irs_dist[model.irs_of_user[i]]);
        let bidx = layout.b(i);
        let gidx = layout.g(i);
        let ridx = layout.r(model.irs_of_user[i]);
        let bs = b_scale[i];
        let konst = lin.at_expansion - lin.dg * lin.g0 - lin.dr * lin.r0;
        ineq.push(Smooth {
            value: Box::new(move |x: &[f64]| {
                bs * x[bidx] - (konst + lin.dg * x[gidx] + lin.dr * x[ridx])
            }),
            grad: Box::new(move |_x: &[f64], g: &mut [f64]| {
                g[bidx] += bs;
                g[gidx] += -lin.dg;
                g[ridx] += -lin.dr;
            }),
            hess: Box::new(|_, _| {}),
        });
    }

    // interference coupling: I0 + noise / B <= H
    for i in 0..n {
        let interference = point.sinr_denom[i] - sc.noise / point.gain[i];
        let noise = sc.noise;
        let bidx = layout.b(i);
        let hidx = layout.h(i);
        let bs = b_scale[i];
        let hs = h_scale[i];
        ineq.push(Smooth {
            value: Box::new(move |x: &[f64]| {
                interference + noise / (bs * x[bidx]) - hs * x[hidx]
            }),
            grad: Box::new(move |x: &[f64], g: &mut [f64]| {
                g[bidx] += -noise / (bs * x[bidx] * x[bidx]);
                g[hidx] += -hs;
            }),
            hess: Box::new(move |x: &[f64], h: &mut nalgebra::DMatrix<f64>| {
                h[(bidx, bidx)] += 2.0 * noise / (bs * x[bidx] * x[bidx] * x[bidx]);
            }),
        });
    }

    // speed slack under the linearized speed: Vs^2 <= 2 v0.v - |v0|^2
    {
        let (v0x, v0y) = (point.vel[0], point.vel[1]);
        let vs_idx = layout.vs();
        let v0n2 = v0x * v0x + v0y * v0y;
        ineq.push(Smooth {
            value: Box::new(move |x: &[f64]| {
                let vx = (x[0] - ax) / tau;
                let vy = (x[1] - ay) / tau;
                x[vs_idx] * x[vs_idx] - (2.0 * (v0x * vx + v0y * vy) - v0n2)
            }),
            grad: Box::new(move |x: &[f64], g: &mut [f64]| {
                g[vs_idx] += 2.0 * x[vs_idx];
                g[0] += -2.0 * v0x / tau;
                g[1] += -2.0 * v0y / tau;
            }),
            hess: Box::new(move |_x: &[f64], h: &mut nalgebra::DMatrix<f64>| {
                h[(vs_idx, vs_idx)] += 2.0;
            }),
        });
    }

    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); dim];
    bounds[2] = (sc.z_min, sc.z_max);
    for i in 0..n {
        bounds[layout.g(i)] = (1e-3, f64::INFINITY);
        bounds[layout.h(i)] = (1e-9, f64::INFINITY);
        bounds[layout.b(i)] = (1e-9, f64::INFINITY);
    }
    for s in 0..s_count {
        bounds[layout.r(s)] = (1e-3, f64::INFINITY);
    }
    bounds[layout.vs()] = (V_FLOOR, f64::INFINITY);

    let prog = ConvexProgram {
        dim,
        objective,
        ineq,
        eq: vec![],
        bounds,
        x0: vec![0.0; dim], // installed by the caller
    };
    SurrogateProblem {
        prog,
        point: point.clone(),
        rate_bounds,
        layout,
        h_scale,
        b_scale,
    }
}

/// Strictly feasible start: extrapolate along the expansion velocity with a
/// shrinking factor ladder, then give every slack a positive margin.
pub fn find_strict_start(
    sp: &SurrogateProblem,
    model: &GainModel,
    sc: &Scenario,
    anchor: Point3,
) -> Option<Vec<f64>> {
    let point = &sp.point;
    let speed = (point.vel[0] * point.vel[0] + point.vel[1] * point.vel[1]).sqrt();
    let kappa_cap = if speed > 0.0 {
        (0.98 * sc.v_max / speed).min(1.0)
    } else {
        1.0
    };
    // the speed-slack interval needs (2 kappa - 1) |v0|^2 > floor^2
    let kappa_min = (0.5 * (1.0 + (1.02 * V_FLOOR / speed.max(1e-12)).powi(2))).min(kappa_cap);
    for shrink in 0..=5 {
        let kappa = kappa_cap - (kappa_cap - kappa_min) * (shrink as f64 / 5.0);
        if let Some(x) = strict_start_with(sp, model, sc, anchor, kappa) {
            return Some(x);
        }
    }
    None
}

fn strict_start_with(
    sp: &SurrogateProblem,
    model: &GainModel,
    sc: &Scenario,
    anchor: Point3,
    kappa: f64,
) -> Option<Vec<f64>> {
    let l = sp.layout;
    let point = &sp.point;
    let tau = sc.tau;
    let mut x = vec![0.0; l.dim()];
    x[0] = anchor.x + tau * kappa * point.vel[0];
    x[1] = anchor.y + tau * kappa * point.vel[1];
    let zspan = sc.z_max - sc.z_min;
    if !(zspan > 0.0) {
        return None;
    }
    let zmargin = (1e-6 * zspan.max(1.0)).min(0.25 * zspan);
    x[2] = point.pos.z.clamp(sc.z_min + zmargin, sc.z_max - zmargin);

    let step = tau * sc.v_max;
    let d2 = (x[0] - anchor.x).powi(2) + (x[1] - anchor.y).powi(2) + (x[2] - anchor.z).powi(2);
    if d2 >= 0.998 * step * step {
        return None;
    }
    let vx = (x[0] - anchor.x) / tau;
    let vy = (x[1] - anchor.y) / tau;
    let rhs = 2.0 * (point.vel[0] * vx + point.vel[1] * vy)
        - (point.vel[0] * point.vel[0] + point.vel[1] * point.vel[1]);
    if rhs <= V_FLOOR * V_FLOOR * 1.0002 {
        return None;
    }
    x[l.vs()] = 0.5 * (V_FLOOR + rhs.sqrt());

    let pos0 = Point3::new(x[0], x[1], x[2]);
    for i in 0..l.n {
        let d = pos0.dist(&sc.users[i]);
        let g0 = point.user_dist[i];
        x[l.g(i)] = ((d * d + g0 * g0) / (2.0 * g0)) * (1.0 + 1e-7) + 1e-9;
    }
    for s in 0..l.s {
        let d = pos0.dist(&sc.irs[s]);
        let r0 = point.irs_dist[s];
        x[l.r(s)] = ((d * d + r0 * r0) / (2.0 * r0)) * (1.0 + 1e-7) + 1e-9;
    }
    for i in 0..l.n {
        let lin = model.linearize(i, point.user_dist[i], point.irs_dist[model.irs_of_user[i]]);
        let cap = lin.value(x[l.g(i)], x[l.r(model.irs_of_user[i])]);
        let b_lo = 1e-9 * sp.b_scale[i];
        let b = cap * (1.0 - 1e-6);
        if !(b.is_finite() && b > b_lo * 1.01) {
            return None;
        }
        x[l.b(i)] = b / sp.b_scale[i];
        let interference = point.sinr_denom[i] - sc.noise / point.gain[i];
        let h = (interference + sc.noise / b) * (1.0 + 1e-6);
        x[l.h(i)] = h / sp.h_scale[i];
    }

    // final strictness audit against the actual program
    for g in &sp.prog.ineq {
        if !((g.value)(&x) < 0.0) {
            return None;
        }
    }
    for (i, &(lo, hi)) in sp.prog.bounds.iter().enumerate() {
        if (lo.is_finite() && x[i] <= lo) || (hi.is_finite() && x[i] >= hi) {
            return None;
        }
    }
    Some(x)
}

/// Per-inner-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct InnerDiag {
    /// Objective value reported by the surrogate solve.
    pub surrogate_obj: f64,
    /// True ratio-form objective at the accepted iterate.
    pub true_obj: f64,
}

/// Per-outer-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct OuterDiag {
    /// Ratio parameter in force during this outer iteration.
    pub omega: f64,
    /// Ratio achieved at the iteration's final position.
    pub omega_next: f64,
    /// Ratio-form residual at the final position under `omega`.
    pub residual: f64,
    pub inner: Vec<InnerDiag>,
}

/// Result of one per-slot trajectory update.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub next_pos: Point3,
    /// Final achieved energy-efficiency ratio at the returned position.
    pub omega: f64,
    pub trace: Vec<OuterDiag>,
}

/// True ratio-form objective at `pos`: (sum rate - omega * total power,
/// sum rate, total power), with the velocity implied by moving from `anchor`
/// to `pos` in one slot.
pub fn ratio_objective(
    pos: Point3,
    anchor: Point3,
    omega: f64,
    assoc: &Association,
    order: &DecodingOrder,
    power: &PowerAlloc,
    sc: &Scenario,
) -> Result<(f64, f64, f64)> {
    let gains = composite_gain(pos, assoc, sc)?;
    let r = rates(power, order, &gains, sc.noise);
    let sum_rate: f64 = r.iter().sum();
    let vel = [(pos.x - anchor.x) / sc.tau, (pos.y - anchor.y) / sc.tau];
    let p_sum = sc.eta * power.total() + propulsion_power(vel, sc);
    Ok((sum_rate - omega * p_sum, sum_rate, p_sum))
}

/// One per-slot position update. `prev_vel` is the velocity of the leg that
/// reached `pos` (zero at the first slot; it only seeds the expansion).
pub fn optimize_step(
    pos: Point3,
    prev_vel: [f64; 2],
    assoc: &Association,
    order: &DecodingOrder,
    power: &PowerAlloc,
    sc: &Scenario,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    // degenerate feasible set: the UAV cannot move at all
    if sc.tau * sc.v_max < 1e-9 {
        let (_, sum_rate, p_sum) = ratio_objective(pos, pos, 0.0, assoc, order, power, sc)?;
        let omega = sum_rate / p_sum;
        return Ok(StepResult {
            next_pos: pos,
            omega,
            trace: vec![OuterDiag {
                omega: 0.0,
                omega_next: omega,
                residual: 0.0,
                inner: vec![],
            }],
        });
    }

    let anchor = pos;
    let model = GainModel::new(assoc, sc);
    let mut omega = 0.0f64;
    let mut cur_pos = pos;
    let mut cur_vel = prev_vel;
    let mut trace: Vec<OuterDiag> = Vec::new();

    for _outer in 0..cfg.max_outer {
        let mut inner_diags: Vec<InnerDiag> = Vec::new();
        let (mut cur_obj, _, _) = ratio_objective(cur_pos, anchor, omega, assoc, order, power, sc)?;
        let mut exp_pos = cur_pos;
        let mut exp_vel = cur_vel;

        for _inner in 0..cfg.max_inner {
            let point = SurrogatePoint::at(exp_pos, exp_vel, assoc, order, power, sc)?;
            let mut sp = build_surrogate(&point, omega, assoc, power, sc, anchor);
            let x0 = find_strict_start(&sp, &model, sc, anchor)
                .ok_or_else(|| Error::Infeasible("no strict interior for the surrogate".into()))?;
            sp.prog.x0 = x0;
            let (x, surrogate_obj) = solve_convex(&sp.prog, cfg.tol)?;
            let cand = sp.solution_position(&x);
            let (cand_obj, _, _) = ratio_objective(cand, anchor, omega, assoc, order, power, sc)?;
            if cand_obj < cur_obj {
                // numerical guard: keep the current iterate, stop the loop
                break;
            }
            let improvement = cand_obj - cur_obj;
            cur_pos = cand;
            cur_vel = [(cand.x - anchor.x) / sc.tau, (cand.y - anchor.y) / sc.tau];
            cur_obj = cand_obj;
            exp_pos = cur_pos;
            exp_vel = cur_vel;
            inner_diags.push(InnerDiag {
                surrogate_obj,
                true_obj: cand_obj,
            });
            if improvement <= cfg.eps_inner {
                break;
            }
        }

        let (residual, sum_rate, p_sum) =
            ratio_objective(cur_pos, anchor, omega, assoc, order, power, sc)?;
        let omega_next = (sum_rate / p_sum).max(omega);
        trace.push(OuterDiag {
            omega,
            omega_next,
            residual,
            inner: inner_diags,
        });
        log::debug!(
            "trajectory outer {}: omega {:.6e} -> {:.6e}, residual {:.3e}",
            trace.len(),
            omega,
            omega_next,
            residual
        );
        omega = omega_next;
        if residual <= cfg.eps_outer {
            break;
        }
    }

    Ok(StepResult {
        next_pos: cur_pos,
        omega,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noma::{initial_order, initial_power};
    use crate::scenario::load_config;
    use crate::scenario::default_config_json;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Scenario, SolverConfig, Association) {
        let cfg = load_config(default_config_json()).unwrap();
        (cfg.scenario, cfg.solver, Association::new(vec![0, 1, 1]))
    }

    fn init_at(pos: Point3, assoc: &Association, sc: &Scenario) -> (DecodingOrder, PowerAlloc) {
        let gains = composite_gain(pos, assoc, sc).unwrap();
        (initial_order(&gains), initial_power(sc.n_users(), sc.p_max))
    }

    #[test]
    fn gain_linearization_tight_at_expansion() {
        let (sc, _, assoc) = setup();
        let model = GainModel::new(&assoc, &sc);
        for i in 0..3 {
            let (g0, r0) = (180.0, 140.0);
            let lin = model.linearize(i, g0, r0);
            let direct = model.value(i, g0, r0);
            assert!((lin.value(g0, r0) - direct).abs() <= 1e-15 * direct.abs());
        }
    }

    #[test]
    fn gain_linearization_never_overstates() {
        let (sc, _, assoc) = setup();
        let model = GainModel::new(&assoc, &sc);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (g0, r0) = (160.0, 120.0);
        for i in 0..3 {
            let lin = model.linearize(i, g0, r0);
            for _ in 0..1000 {
                let g = g0 + rng.random_range(0.0..300.0);
                let r = r0 + rng.random_range(0.0..300.0);
                assert!(lin.value(g, r) <= model.value(i, g, r) + 1e-18);
            }
        }
    }

    #[test]
    fn gated_gain_reduces_to_direct_linearization() {
        let (sc, _, assoc) = setup();
        let mut model = GainModel::new(&assoc, &sc);
        model.array = vec![0.0; 3];
        model.cross = vec![0.0; 3];
        let lin = model.linearize(0, 150.0, 100.0);
        assert_eq!(lin.dr, 0.0);
        let expect = -model.xi * model.direct[0] / 150.0f64.powf(model.xi + 1.0);
        assert!((lin.dg - expect).abs() <= 1e-15 * expect.abs());
    }

    #[test]
    fn rate_bound_examples() {
        let b = rate_taylor_bound(0.05, 0.033);
        assert!((b.value(0.05) - (1.0f64 + 0.033 / 0.05).log2()).abs() < 1e-15);
        assert!(b.value(0.06) < b.value(0.05));
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let h: f64 = rng.random_range(1e-4..1.0);
            let truth = (1.0 + 0.033 / h).log2();
            assert!(b.value(h) <= truth + 1e-12);
        }
    }

    #[test]
    fn surrogate_tight_at_expansion() {
        let (sc, _, assoc) = setup();
        // consistent expansion: pos reached from the anchor in one slot
        let vel = [3.0, 4.0];
        let pos = Point3::new(100.0, 80.0, 100.0);
        let anchor = Point3::new(pos.x - sc.tau * vel[0], pos.y - sc.tau * vel[1], pos.z);
        let (order, power) = init_at(pos, &assoc, &sc);
        let point = SurrogatePoint::at(pos, vel, &assoc, &order, &power, &sc).unwrap();
        for omega in [0.0, 0.05, 0.2] {
            let sp = build_surrogate(&point, omega, &assoc, &power, &sc, anchor);
            let got = sp.objective_at_expansion();
            let (want, _, _) =
                ratio_objective(pos, anchor, omega, &assoc, &order, &power, &sc).unwrap();
            assert!(
                (got - want).abs() <= 1e-9 * (1.0 + want.abs()),
                "omega={omega}: surrogate {got} vs true {want}"
            );
        }
    }

    #[test]
    fn zero_ratio_reduces_to_pure_rate_surrogate() {
        let (sc, _, assoc) = setup();
        let pos = Point3::new(100.0, 80.0, 100.0);
        let (order, power) = init_at(pos, &assoc, &sc);
        let point = SurrogatePoint::at(pos, [3.0, 4.0], &assoc, &order, &power, &sc).unwrap();
        let sp = build_surrogate(&point, 0.0, &assoc, &power, &sc, pos);
        let x = sp.expansion_vector();
        let obj = (sp.prog.objective.value)(&x);
        let rate_only = sp.surrogate_rate_sum(&x);
        assert!((obj - rate_only).abs() <= 1e-12 * (1.0 + rate_only.abs()));
    }

    #[test]
    fn solved_positions_obey_step_limit() {
        let (sc, cfg, assoc) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for trial in 0..100 {
            let pos = Point3::new(
                rng.random_range(0.0..500.0),
                rng.random_range(0.0..500.0),
                rng.random_range(55.0..145.0),
            );
            let (order, power) = init_at(pos, &assoc, &sc);
            let point =
                SurrogatePoint::at(pos, [1.0, -2.0], &assoc, &order, &power, &sc).unwrap();
            let mut sp = build_surrogate(&point, 0.1, &assoc, &power, &sc, pos);
            let model = GainModel::new(&assoc, &sc);
            let x0 = find_strict_start(&sp, &model, &sc, pos).unwrap();
            sp.prog.x0 = x0;
            let (x, _) = solve_convex(&sp.prog, cfg.tol).unwrap();
            let next = sp.solution_position(&x);
            let d = next.dist(&pos);
            assert!(
                d <= sc.tau * sc.v_max + 1e-9,
                "trial {trial}: step {d} exceeds limit"
            );
            assert!(next.z >= sc.z_min - 1e-9 && next.z <= sc.z_max + 1e-9);
        }
    }

    #[test]
    fn surrogate_never_overstates_true_rate() {
        let (sc, cfg, assoc) = setup();
        let pos = Point3::new(220.0, 150.0, 90.0);
        let (order, power) = init_at(pos, &assoc, &sc);
        let point = SurrogatePoint::at(pos, [2.0, 1.0], &assoc, &order, &power, &sc).unwrap();
        let mut sp = build_surrogate(&point, 0.05, &assoc, &power, &sc, pos);
        let model = GainModel::new(&assoc, &sc);
        sp.prog.x0 = find_strict_start(&sp, &model, &sc, pos).unwrap();
        let (x, _) = solve_convex(&sp.prog, cfg.tol).unwrap();
        let next = sp.solution_position(&x);
        let gains = composite_gain(next, &assoc, &sc).unwrap();
        let true_sum: f64 = rates(&power, &order, &gains, sc.noise).iter().sum();
        let surrogate_sum = sp.surrogate_rate_sum(&x);
        assert!(surrogate_sum <= true_sum + 1e-6);
    }

    #[test]
    fn degenerate_step_limit_fixes_point() {
        let (mut sc, cfg, assoc) = setup();
        sc.v_max = 0.0;
        let pos = Point3::new(150.0, 150.0, 100.0);
        let (order, power) = init_at(pos, &assoc, &sc);
        let res = optimize_step(pos, [0.0, 0.0], &assoc, &order, &power, &sc, &cfg).unwrap();
        assert_eq!(res.next_pos, pos);
        assert_eq!(res.trace.len(), 1);
        assert!((res.trace[0].residual).abs() <= 1e-12);
        let (f, _, _) = ratio_objective(pos, pos, res.omega, &assoc, &order, &power, &sc).unwrap();
        assert!(f.abs() <= 1e-9);
    }

    #[test]
    fn ratio_updates_are_monotone() {
        let (sc, cfg, assoc) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let pos = Point3::new(
                rng.random_range(0.0..500.0),
                rng.random_range(0.0..500.0),
                rng.random_range(55.0..145.0),
            );
            let (order, power) = init_at(pos, &assoc, &sc);
            let res = optimize_step(pos, [0.0, 0.0], &assoc, &order, &power, &sc, &cfg).unwrap();
            let omegas: Vec<f64> = res.trace.iter().map(|o| o.omega_next).collect();
            for w in omegas.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "ratio decreased: {omegas:?}");
            }
            let last = res.trace.last().unwrap();
            assert!(last.residual <= cfg.eps_outer, "residual {}", last.residual);
            for outer in &res.trace {
                for w in outer.inner.windows(2) {
                    assert!(w[1].true_obj >= w[0].true_obj - 1e-9);
                }
            }
        }
    }
}
