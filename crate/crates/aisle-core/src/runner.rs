//! Episode orchestration: the alternating per-slot pipeline, the fixed-order
//! and exhaustive-enumeration baselines, parameter sweeps, and result export.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::composite_gain;
use crate::energy::power_breakdown;
use crate::error::{Error, Result};
use crate::learn::QFunction;
use crate::noma::{initial_order, initial_power, rates, DecodingOrder};
use crate::scenario::{
    dbm_to_watts, enumerate_associations, Association, Point3, Scenario, SolverConfig,
};
use crate::sic::{optimize_power_fixed_order, optimize_sic_power};
use crate::trajectory::optimize_step;

/// Effective-throughput threshold (bits/s/Hz).
pub const R_MIN: f64 = 1.0;

/// Upper-bound runner refuses action sets larger than this.
pub const MAX_ENUMERATION: usize = 10_000;

/// Everything observed in one slot. Velocity is the outgoing leg; the slot
/// efficiency recomputes exactly from the stored fields.
#[derive(Debug, Clone, Serialize)]
pub struct SlotRecord {
    pub t: usize,
    pub pos: Point3,
    pub action: usize,
    pub assign: Vec<usize>,
    pub order: DecodingOrder,
    pub power: Vec<f64>,
    pub rates: Vec<f64>,
    pub vx: f64,
    pub vy: f64,
    pub p_fly: f64,
    pub p_sum: f64,
    pub ee: f64,
    pub effective: Vec<bool>,
}

/// One whole episode plus its summary metrics.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeResult {
    pub slots: Vec<SlotRecord>,
    /// Sum of per-slot efficiencies (bits/Joule/Hz).
    pub total_ee: f64,
    /// Mean over slots of the sum of per-user rates clearing [`R_MIN`].
    pub avg_effective_throughput: f64,
}

impl EpisodeResult {
    fn from_slots(slots: Vec<SlotRecord>) -> EpisodeResult {
        let total_ee = slots.iter().map(|s| s.ee).sum();
        let avg_effective_throughput = if slots.is_empty() {
            0.0
        } else {
            slots
                .iter()
                .map(|s| {
                    s.rates
                        .iter()
                        .zip(&s.effective)
                        .filter(|(_, &e)| e)
                        .map(|(r, _)| r)
                        .sum::<f64>()
                })
                .sum::<f64>()
                / slots.len() as f64
        };
        EpisodeResult {
            slots,
            total_ee,
            avg_effective_throughput,
        }
    }
}

/// Which SIC/power optimization the per-slot pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SicMode {
    Joint,
    FixedOrder,
}

/// The full per-slot pipeline for one candidate association: trajectory step
/// from `pos`, order/power optimization at `pos`, rates and efficiency with
/// the outgoing-leg velocity.
pub fn evaluate_slot(
    sc: &Scenario,
    solver: &SolverConfig,
    pos: Point3,
    prev_vel: [f64; 2],
    action: usize,
    assoc: &Association,
    mode: SicMode,
) -> Result<(SlotRecord, Point3)> {
    let gains = composite_gain(pos, assoc, sc)?;
    let w0 = initial_order(&gains);
    let p0 = initial_power(sc.n_users(), sc.p_max);
    let step = optimize_step(pos, prev_vel, assoc, &w0, &p0, sc, solver)?;
    let sic = match mode {
        SicMode::Joint => optimize_sic_power(&gains.gain, sc.noise, &w0, &p0, solver)?,
        SicMode::FixedOrder => {
            optimize_power_fixed_order(&gains.gain, sc.noise, &w0, &p0, solver)?
        }
    };
    let vel = [
        (step.next_pos.x - pos.x) / sc.tau,
        (step.next_pos.y - pos.y) / sc.tau,
    ];
    let r = rates(&sic.power, &sic.order, &gains, sc.noise);
    let breakdown = power_breakdown(&sic.power, vel, sc);
    let ee = r.iter().sum::<f64>() / breakdown.p_sum;
    let effective = r.iter().map(|&ri| ri >= R_MIN).collect();
    Ok((
        SlotRecord {
            t: 0,
            pos,
            action,
            assign: assoc.assign.clone(),
            order: sic.order,
            power: sic.power.p.clone(),
            rates: r,
            vx: vel[0],
            vy: vel[1],
            p_fly: breakdown.p_fly,
            p_sum: breakdown.p_sum,
            ee,
            effective,
        },
        step.next_pos,
    ))
}

fn run_episode<F>(
    sc: &Scenario,
    solver: &SolverConfig,
    mode: SicMode,
    mut choose: F,
) -> Result<EpisodeResult>
where
    F: FnMut(usize, Point3) -> Result<usize>,
{
    let actions = enumerate_associations(sc.n_users(), sc.n_irs(), sc.panel_rows);
    if actions.is_empty() {
        return Err(Error::Infeasible("no feasible association".into()));
    }
    let mut pos = sc.uav_start;
    let mut prev_vel = [0.0, 0.0];
    let mut slots = Vec::with_capacity(sc.slots);
    for t in 0..sc.slots {
        let a = choose(t, pos)?;
        let (mut record, next) =
            evaluate_slot(sc, solver, pos, prev_vel, a, &actions[a], mode).map_err(|e| {
                Error::Infeasible(format!("slot {t}: {e}"))
            })?;
        record.t = t;
        prev_vel = [record.vx, record.vy];
        slots.push(record);
        pos = next;
    }
    Ok(EpisodeResult::from_slots(slots))
}

/// Full pipeline with the learned greedy association policy.
pub fn run_aisle(
    sc: &Scenario,
    solver: &SolverConfig,
    q: &QFunction,
    _seed: u64,
) -> Result<EpisodeResult> {
    check_model(sc, q)?;
    run_episode(sc, solver, SicMode::Joint, |_, pos| Ok(q.greedy(pos)))
}

/// Baseline: identical to [`run_aisle`] but the decoding order stays frozen
/// at the initializer; only powers are optimized.
pub fn run_fsd(
    sc: &Scenario,
    solver: &SolverConfig,
    q: &QFunction,
    _seed: u64,
) -> Result<EpisodeResult> {
    check_model(sc, q)?;
    run_episode(sc, solver, SicMode::FixedOrder, |_, pos| Ok(q.greedy(pos)))
}

fn check_model(sc: &Scenario, q: &QFunction) -> Result<()> {
    let count = enumerate_associations(sc.n_users(), sc.n_irs(), sc.panel_rows).len();
    if q.actions != count {
        return Err(Error::Format(format!(
            "model has {} actions but the scenario enumerates {count}",
            q.actions
        )));
    }
    Ok(())
}

/// Per-slot exhaustive enumeration: every feasible association is pushed
/// through the identical downstream pipeline and the best recorded
/// efficiency wins. Guarded by [`MAX_ENUMERATION`].
pub fn run_upper_bound(sc: &Scenario, solver: &SolverConfig, _seed: u64) -> Result<EpisodeResult> {
    let actions = enumerate_associations(sc.n_users(), sc.n_irs(), sc.panel_rows);
    if actions.is_empty() {
        return Err(Error::Infeasible("no feasible association".into()));
    }
    if actions.len() > MAX_ENUMERATION {
        return Err(Error::Infeasible(format!(
            "action set of {} exceeds the enumeration guard {MAX_ENUMERATION}",
            actions.len()
        )));
    }
    let mut pos = sc.uav_start;
    let mut prev_vel = [0.0, 0.0];
    let mut slots = Vec::with_capacity(sc.slots);
    for t in 0..sc.slots {
        let mut best: Option<(SlotRecord, Point3)> = None;
        for (k, assoc) in actions.iter().enumerate() {
            let (record, next) =
                evaluate_slot(sc, solver, pos, prev_vel, k, assoc, SicMode::Joint)?;
            if best.as_ref().map_or(true, |(b, _)| record.ee > b.ee) {
                best = Some((record, next));
            }
        }
        let (mut record, next) = best.expect("nonempty action set");
        record.t = t;
        prev_vel = [record.vx, record.vy];
        slots.push(record);
        pos = next;
    }
    Ok(EpisodeResult::from_slots(slots))
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Flat per-slot CSV. Columns are fixed by the scenario's user count.
pub fn episode_to_csv(res: &EpisodeResult, n_users: usize) -> String {
    let mut header = String::from("schema_version,t,x,y,z,action");
    for i in 0..n_users {
        header.push_str(&format!(",assign_{i}"));
    }
    for i in 0..n_users {
        header.push_str(&format!(",p_{i}"));
    }
    for i in 0..n_users {
        header.push_str(&format!(",rate_{i}"));
    }
    for i in 0..n_users {
        header.push_str(&format!(",eff_{i}"));
    }
    for i in 0..n_users {
        for j in 0..n_users {
            if i != j {
                header.push_str(&format!(",w_{i}_{j}"));
            }
        }
    }
    header.push_str(",vx,vy,p_fly,p_sum,ee\n");
    let mut out = header;
    for s in &res.slots {
        out.push_str(&format!("1,{},{},{},{},{}", s.t, s.pos.x, s.pos.y, s.pos.z, s.action));
        for a in &s.assign {
            out.push_str(&format!(",{a}"));
        }
        for p in &s.power {
            out.push_str(&format!(",{p}"));
        }
        for r in &s.rates {
            out.push_str(&format!(",{r}"));
        }
        for e in &s.effective {
            out.push_str(&format!(",{}", *e as u8));
        }
        for i in 0..n_users {
            for j in 0..n_users {
                if i != j {
                    out.push_str(&format!(",{}", s.order.decodes_before(i, j) as u8));
                }
            }
        }
        out.push_str(&format!(
            ",{},{},{},{},{}\n",
            s.vx, s.vy, s.p_fly, s.p_sum, s.ee
        ));
    }
    out
}

/// Per-episode JSON summary.
pub fn episode_summary_json(res: &EpisodeResult, algorithm: &str, seed: u64) -> String {
    let doc = serde_json::json!({
        "schema_version": 1,
        "algorithm": algorithm,
        "seed": seed,
        "slots": res.slots.len(),
        "total_ee": res.total_ee,
        "avg_effective_throughput": res.avg_effective_throughput,
    });
    serde_json::to_string_pretty(&doc).expect("summary serialization cannot fail")
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Reflecting element rows and columns per panel.
    Elements,
    /// Transmit power budget in dBm.
    Power,
    /// Slots per episode.
    Slots,
    /// Start-corner index (0..3) of the scene bounding box.
    Start,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<SweepAxis> {
        match s {
            "elements" => Ok(SweepAxis::Elements),
            "power" => Ok(SweepAxis::Power),
            "slots" => Ok(SweepAxis::Slots),
            "start" => Ok(SweepAxis::Start),
            other => Err(Error::Config(format!(
                "unknown sweep axis '{other}' (elements|power|slots|start)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Elements => "elements",
            SweepAxis::Power => "power",
            SweepAxis::Slots => "slots",
            SweepAxis::Start => "start",
        }
    }
}

/// Apply one axis value to a copy of the template scenario.
pub fn scenario_with(sc: &Scenario, axis: SweepAxis, value: f64) -> Result<Scenario> {
    let mut out = sc.clone();
    match axis {
        SweepAxis::Elements => {
            let k = value.round() as usize;
            if k < sc.n_users() {
                return Err(Error::Config(format!(
                    "elements value {k} below the user count"
                )));
            }
            out.panel_rows = k;
            out.panel_cols = k;
        }
        SweepAxis::Power => {
            out.p_max = dbm_to_watts(value);
        }
        SweepAxis::Slots => {
            let k = value.round() as usize;
            if k < 1 {
                return Err(Error::Config("slots value below 1".into()));
            }
            out.slots = k;
        }
        SweepAxis::Start => {
            let corner = value.round() as usize;
            if corner > 3 {
                return Err(Error::Config("start corner index must be 0..3".into()));
            }
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for p in sc.users.iter().chain(sc.irs.iter()).chain([&sc.uav_start]) {
                lo[0] = lo[0].min(p.x);
                hi[0] = hi[0].max(p.x);
                lo[1] = lo[1].min(p.y);
                hi[1] = hi[1].max(p.y);
            }
            let x = if corner & 1 == 0 { lo[0] } else { hi[0] };
            let y = if corner & 2 == 0 { lo[1] } else { hi[1] };
            out.uav_start = Point3::new(x, y, sc.uav_start.z);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub algorithm: String,
    pub seed: u64,
    pub total_ee: f64,
    pub avg_effective_throughput: f64,
    pub status: String,
}

/// Run AISLE, the fixed-order baseline and the enumeration upper bound over
/// a grid of axis values and seeds. Cells run in parallel; failures are
/// recorded per row and the sweep continues.
pub fn sweep(
    sc: &Scenario,
    solver: &SolverConfig,
    q: &QFunction,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
) -> Vec<SweepRow> {
    let algos = ["aisle", "fsd", "upper"];
    let mut cells: Vec<(f64, u64, &str)> = Vec::new();
    for &v in values {
        for &seed in seeds {
            for algo in algos {
                cells.push((v, seed, algo));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(value, seed, algo)| {
            let run = || -> Result<EpisodeResult> {
                let scenario = scenario_with(sc, axis, value)?;
                match algo {
                    "aisle" => run_aisle(&scenario, solver, q, seed),
                    "fsd" => run_fsd(&scenario, solver, q, seed),
                    _ => run_upper_bound(&scenario, solver, seed),
                }
            };
            match run() {
                Ok(res) => SweepRow {
                    axis: axis.name().into(),
                    value,
                    algorithm: algo.into(),
                    seed,
                    total_ee: res.total_ee,
                    avg_effective_throughput: res.avg_effective_throughput,
                    status: "ok".into(),
                },
                Err(e) => SweepRow {
                    axis: axis.name().into(),
                    value,
                    algorithm: algo.into(),
                    seed,
                    total_ee: f64::NAN,
                    avg_effective_throughput: f64::NAN,
                    status: format!("error: {e}"),
                },
            }
        })
        .collect()
}

/// Tidy sweep CSV: one row per (value, algorithm, seed).
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("schema_version,axis,value,algorithm,seed,total_ee,avg_effective_throughput,status\n");
    for r in rows {
        out.push_str(&format!(
            "1,{},{},{},{},{},{},{}\n",
            r.axis, r.value, r.algorithm, r.seed, r.total_ee, r.avg_effective_throughput, r.status
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{default_config_json, load_config};

    fn small_setup() -> (Scenario, SolverConfig, QFunction) {
        let cfg = load_config(default_config_json()).unwrap();
        let mut sc = cfg.scenario;
        sc.slots = 3;
        let q = QFunction::new(&sc, 8, 8, 7);
        (sc, cfg.solver, q)
    }

    #[test]
    fn single_slot_obeys_step_limit() {
        let (mut sc, solver, q) = small_setup();
        sc.slots = 1;
        let res = run_aisle(&sc, &solver, &q, 0).unwrap();
        assert_eq!(res.slots.len(), 1);
        let s = &res.slots[0];
        assert_eq!(s.pos, sc.uav_start);
        let step = (s.vx * s.vx + s.vy * s.vy).sqrt() * sc.tau;
        assert!(step <= sc.tau * sc.v_max + 1e-9);
    }

    #[test]
    fn records_recompute_from_stored_fields() {
        let (sc, solver, q) = small_setup();
        let res = run_aisle(&sc, &solver, &q, 0).unwrap();
        for s in &res.slots {
            let assoc = Association::new(s.assign.clone());
            let gains = composite_gain(s.pos, &assoc, &sc).unwrap();
            let power = crate::noma::PowerAlloc::new(s.power.clone());
            let r = rates(&power, &s.order, &gains, sc.noise);
            for (a, b) in r.iter().zip(&s.rates) {
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
            let breakdown = power_breakdown(&power, [s.vx, s.vy], &sc);
            assert!((breakdown.p_sum - s.p_sum).abs() <= 1e-9 * s.p_sum);
            let ee = r.iter().sum::<f64>() / breakdown.p_sum;
            assert!((ee - s.ee).abs() <= 1e-9 * (1.0 + s.ee.abs()));
        }
        // positions chain within the step limit
        for w in res.slots.windows(2) {
            assert!(w[0].pos.dist(&w[1].pos) <= sc.tau * sc.v_max + 1e-9);
        }
    }

    #[test]
    fn episodes_are_bitwise_deterministic() {
        let (sc, solver, q) = small_setup();
        let a = run_aisle(&sc, &solver, &q, 5).unwrap();
        let b = run_aisle(&sc, &solver, &q, 5).unwrap();
        assert_eq!(episode_to_csv(&a, 3), episode_to_csv(&b, 3));
    }

    #[test]
    fn fixed_order_baseline_never_beats_joint() {
        let (sc, solver, q) = small_setup();
        let aisle = run_aisle(&sc, &solver, &q, 1).unwrap();
        let fsd = run_fsd(&sc, &solver, &q, 1).unwrap();
        assert!(fsd.total_ee <= aisle.total_ee + 1e-6);
    }

    #[test]
    fn upper_bound_dominates_any_policy_at_same_position() {
        let (mut sc, solver, q) = small_setup();
        sc.slots = 2;
        let upper = run_upper_bound(&sc, &solver, 0).unwrap();
        let actions = enumerate_associations(3, 2, sc.panel_rows);
        let mut prev_vel = [0.0, 0.0];
        for s in &upper.slots {
            let a = q.greedy(s.pos);
            let (rec, _) =
                evaluate_slot(&sc, &solver, s.pos, prev_vel, a, &actions[a], SicMode::Joint)
                    .unwrap();
            assert!(s.ee >= rec.ee - 1e-9);
            prev_vel = [s.vx, s.vy];
        }
    }

    #[test]
    fn single_user_fsd_equals_aisle() {
        let (mut sc, solver, _) = small_setup();
        sc.users = vec![Point3::new(150.0, 350.0, 0.0)];
        sc.slots = 2;
        let q = QFunction::new(&sc, 8, 2, 3);
        let aisle = run_aisle(&sc, &solver, &q, 0).unwrap();
        let fsd = run_fsd(&sc, &solver, &q, 0).unwrap();
        assert!((aisle.total_ee - fsd.total_ee).abs() <= 1e-12 * aisle.total_ee.abs());
    }

    #[test]
    fn sweep_emits_three_rows_per_cell() {
        let (mut sc, solver, q) = small_setup();
        sc.slots = 1;
        let rows = sweep(&sc, &solver, &q, SweepAxis::Elements, &[100.0], &[0]);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.status == "ok"));
        let csv = sweep_to_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn start_axis_moves_to_corners() {
        let (sc, _, _) = small_setup();
        let c0 = scenario_with(&sc, SweepAxis::Start, 0.0).unwrap();
        let c3 = scenario_with(&sc, SweepAxis::Start, 3.0).unwrap();
        assert!(c0.uav_start.x <= c3.uav_start.x);
        assert!(c0.uav_start.y <= c3.uav_start.y);
        assert_eq!(c0.uav_start.z, sc.uav_start.z);
    }

    #[test]
    fn enumeration_guard_trips() {
        let (mut sc, solver, _) = small_setup();
        // 6 users x 5 IRSs = 15625 assignments > the guard
        sc.users = (0..6)
            .map(|k| Point3::new(50.0 + 60.0 * k as f64, 100.0, 0.0))
            .collect();
        sc.irs = (0..5)
            .map(|k| Point3::new(100.0 + 60.0 * k as f64, 250.0, 30.0))
            .collect();
        match run_upper_bound(&sc, &solver, 0) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("enumeration guard")),
            other => panic!("expected guard error, got {other:?}"),
        }
    }
}
