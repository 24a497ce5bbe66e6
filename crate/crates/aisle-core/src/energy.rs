//! UAV propulsion and communication power, and the per-slot energy
//! efficiency objective.

use crate::noma::PowerAlloc;
use crate::scenario::Scenario;

/// Speed floor (m/s) applied to the induced-power term, which diverges as
/// speed goes to zero. Applied uniformly in simulation and optimization.
pub const V_FLOOR: f64 = 0.1;

/// Total UAV power split into its parts.
#[derive(Debug, Clone, Copy)]
pub struct PowerBreakdown {
    /// Propulsion power (W).
    pub p_fly: f64,
    /// Communication power eta * sum(p) (W).
    pub p_comm: f64,
    /// Sum of both (W).
    pub p_sum: f64,
}

/// Rotary-wing propulsion power at horizontal velocity `v` (m/s).
/// Blade and parasite terms use the raw speed; only the induced term is
/// floored at [`V_FLOOR`].
pub fn propulsion_power(v: [f64; 2], sc: &Scenario) -> f64 {
    let pr = &sc.propulsion;
    let speed2 = v[0] * v[0] + v[1] * v[1];
    let speed = speed2.sqrt();
    let tip = pr.omega * pr.rotor_radius;
    let blade = pr.blade_power * (1.0 + 3.0 * speed2 / (tip * tip));
    let induced = pr.induced_power * pr.rotor_induced_velocity / speed.max(V_FLOOR);
    let parasite = 0.5
        * pr.drag_ratio
        * pr.air_density
        * pr.solidity
        * pr.disk_area
        * speed2
        * speed;
    blade + induced + parasite
}

/// Full power accounting for one slot.
pub fn power_breakdown(p: &PowerAlloc, v: [f64; 2], sc: &Scenario) -> PowerBreakdown {
    let p_fly = propulsion_power(v, sc);
    let p_comm = sc.eta * p.total();
    PowerBreakdown {
        p_fly,
        p_comm,
        p_sum: p_fly + p_comm,
    }
}

/// System energy efficiency: sum rate over total power (bits/Joule/Hz).
pub fn energy_efficiency(rates: &[f64], p: &PowerAlloc, v: [f64; 2], sc: &Scenario) -> f64 {
    let sum_rate: f64 = rates.iter().sum();
    sum_rate / power_breakdown(p, v, sc).p_sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::composite_gain;
    use crate::noma::{initial_order, initial_power, rates};
    use crate::scenario::{default_config_json, load_scenario, Association};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn paper_scenario() -> Scenario {
        load_scenario(default_config_json()).unwrap()
    }

    #[test]
    fn speed_floor_rule() {
        let sc = paper_scenario();
        let at_zero = propulsion_power([0.0, 0.0], &sc);
        let at_floor = propulsion_power([V_FLOOR, 0.0], &sc);
        // identical up to the (negligible) blade/parasite contribution of the
        // floor speed itself; the induced term dominates and matches exactly
        let pr = &sc.propulsion;
        let induced = pr.induced_power * pr.rotor_induced_velocity / V_FLOOR;
        assert!((at_zero - (pr.blade_power + induced)).abs() < 1e-9);
        assert!(at_floor >= at_zero);
        assert!((at_floor - at_zero) < 0.01);
    }

    /// Plain term-by-term re-evaluation with the default constants.
    #[test]
    fn matches_independent_reevaluation_at_10ms() {
        let sc = paper_scenario();
        let got = propulsion_power([6.0, 8.0], &sc);
        let speed: f64 = 10.0;
        let blade = 79.86 * (1.0 + 3.0 * speed * speed / (120.0 * 120.0));
        let induced = 88.63 * 4.03 / speed;
        let parasite = 0.5 * 0.6 * 1.225 * 0.05 * 0.503 * speed.powi(3);
        let want = blade + induced + parasite;
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn term_wise_speed_scaling() {
        let sc = paper_scenario();
        let pr = &sc.propulsion;
        let tip2 = (pr.omega * pr.rotor_radius).powi(2);
        let blade = |s: f64| pr.blade_power * (1.0 + 3.0 * s * s / tip2);
        assert!((blade(20.0) / blade(10.0)
            - (1.0 + 3.0 * 400.0 / tip2) / (1.0 + 3.0 * 100.0 / tip2))
            .abs()
            < 1e-12);
        let drag = |s: f64| 0.5 * pr.drag_ratio * pr.air_density * pr.solidity * pr.disk_area * s.powi(3);
        assert!((drag(20.0) / drag(10.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn propulsion_is_convex_over_speed() {
        let sc = paper_scenario();
        let p = |s: f64| propulsion_power([s, 0.0], &sc);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = rng.random_range(V_FLOOR..sc.v_max);
            let b = rng.random_range(V_FLOOR..sc.v_max);
            assert!(p(0.5 * (a + b)) <= 0.5 * (p(a) + p(b)) + 1e-9);
        }
    }

    #[test]
    fn efficiency_is_a_plain_ratio() {
        let sc = paper_scenario();
        // choose a speed whose propulsion power we can aim near 100 W is not
        // necessary; assert the ratio identity directly
        let p = PowerAlloc::new(vec![0.0; 3]);
        let r = [4.0, 3.0, 3.0];
        let v = [10.0, 0.0];
        let ee = energy_efficiency(&r, &p, v, &sc);
        let psum = propulsion_power(v, &sc);
        assert!((ee - 10.0 / psum).abs() < 1e-12);
        assert_eq!(energy_efficiency(&[0.0, 0.0], &p, v, &sc), 0.0);
    }

    #[test]
    fn efficiency_decreases_with_propulsion_power() {
        let sc = paper_scenario();
        let p = initial_power(3, sc.p_max);
        let r = [1.0, 1.0, 1.0];
        let slow = energy_efficiency(&r, &p, [10.0, 0.0], &sc);
        let fast = energy_efficiency(&r, &p, [20.0, 0.0], &sc);
        assert!(propulsion_power([20.0, 0.0], &sc) > propulsion_power([10.0, 0.0], &sc));
        assert!(fast < slow);
    }

    /// End-to-end recomposition at the start position with hover-floor
    /// velocity: gain -> rates -> efficiency, recomputed from first
    /// principles in the test body.
    #[test]
    fn end_to_end_efficiency_oracle_at_start() {
        let sc = paper_scenario();
        let assoc = Association::new(vec![0, 1, 1]);
        let gains = composite_gain(sc.uav_start, &assoc, &sc).unwrap();
        let order = initial_order(&gains);
        let p = initial_power(3, sc.p_max);
        let r = rates(&p, &order, &gains, sc.noise);
        let got = energy_efficiency(&r, &p, [0.0, 0.0], &sc);

        // independent recomposition
        let mut sum_rate = 0.0;
        for i in 0..3 {
            let mut interf = 0.0;
            for j in 0..3 {
                if j != i && order.decodes_before(j, i) {
                    interf += p.p[j];
                }
            }
            sum_rate +=
                (1.0 + p.p[i] * gains.gain[i] / (gains.gain[i] * interf + sc.noise)).log2();
        }
        let pr = &sc.propulsion;
        let hover = pr.blade_power + pr.induced_power * pr.rotor_induced_velocity / V_FLOOR;
        let want = sum_rate / (sc.eta * sc.p_max + hover);
        assert!((got - want).abs() <= 1e-12 * want.abs());
    }
}
