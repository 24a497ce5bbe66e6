//! SIC decoding-order structures, power allocation, and the per-user rate.

use serde::{Deserialize, Serialize};

use crate::channel::GainVector;

/// Relative feasibility tolerance for power constraints, scaled by p_max.
pub const POWER_TOL: f64 = 1e-9;

/// Binary SIC tournament: `before[i][j]` means user `i` decodes before `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodingOrder {
    before: Vec<Vec<bool>>,
}

impl DecodingOrder {
    pub fn from_matrix(before: Vec<Vec<bool>>) -> Self {
        let n = before.len();
        debug_assert!(before.iter().all(|r| r.len() == n));
        Self { before }
    }

    /// Order with no users (the N=1 case has an empty tournament too in
    /// spirit; we keep the 1x1 all-false matrix for uniformity).
    pub fn identity(n: usize) -> Self {
        Self {
            before: vec![vec![false; n]; n],
        }
    }

    pub fn n_users(&self) -> usize {
        self.before.len()
    }

    pub fn decodes_before(&self, i: usize, j: usize) -> bool {
        self.before[i][j]
    }

    /// C7/C8: zero diagonal and w_ij + w_ji = 1 for every i != j.
    pub fn is_tournament(&self) -> bool {
        let n = self.n_users();
        for i in 0..n {
            if self.before[i][i] {
                return false;
            }
            for j in (i + 1)..n {
                if self.before[i][j] == self.before[j][i] {
                    return false;
                }
            }
        }
        true
    }

    /// Row-major flattened copy (for records and wire formats).
    pub fn flatten(&self) -> Vec<u8> {
        self.before
            .iter()
            .flat_map(|r| r.iter().map(|&b| b as u8))
            .collect()
    }
}

/// Per-user transmit powers on the scaled simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAlloc {
    pub p: Vec<f64>,
}

impl PowerAlloc {
    pub fn new(p: Vec<f64>) -> Self {
        Self { p }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    /// C9/C10/C11 feasibility at tolerance `POWER_TOL * p_max`.
    pub fn is_feasible(&self, order: &DecodingOrder, p_max: f64) -> bool {
        let tol = POWER_TOL * p_max;
        if self.p.iter().any(|&pi| pi < -tol) {
            return false;
        }
        if (self.total() - p_max).abs() > tol {
            return false;
        }
        let n = self.p.len();
        for i in 0..n {
            for j in 0..n {
                if i != j && order.decodes_before(i, j) && self.p[j] < self.p[i] - tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Per-user rate (bits/s/Hz): user i sees interference from every user that
/// decodes before it.
pub fn rates(p: &PowerAlloc, order: &DecodingOrder, gains: &GainVector, noise: f64) -> Vec<f64> {
    let n = p.p.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let g = gains.gain[i];
        let interference: f64 = (0..n)
            .filter(|&j| j != i && order.decodes_before(j, i))
            .map(|j| p.p[j])
            .sum();
        let sinr = p.p[i] * g / (g * interference + noise);
        out.push((1.0 + sinr).log2());
    }
    out
}

/// Descending-gain decoding order, ties broken by lower user index; always a
/// transitive tournament.
pub fn initial_order(gains: &GainVector) -> DecodingOrder {
    let n = gains.gain.len();
    let mut before = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            before[i][j] = gains.gain[i] > gains.gain[j]
                || (gains.gain[i] == gains.gain[j] && i < j);
        }
    }
    DecodingOrder::from_matrix(before)
}

/// Uniform power split; satisfies the fairness constraint with equality for
/// every tournament.
pub fn initial_power(n: usize, p_max: f64) -> PowerAlloc {
    assert!(n >= 1);
    PowerAlloc::new(vec![p_max / n as f64; n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gains(g: Vec<f64>) -> GainVector {
        GainVector {
            gain: g,
            rows: vec![],
        }
    }

    #[test]
    fn single_user_rate_closed_form() {
        let g = gains(vec![1e-9]);
        let p = PowerAlloc::new(vec![0.1]);
        let r = rates(&p, &DecodingOrder::identity(1), &g, 1e-11);
        assert!((r[0] - 11.0f64.log2()).abs() < 1e-12);
        assert!((r[0] - 3.4594316186372978).abs() < 1e-9);
    }

    #[test]
    fn zero_power_zero_rate() {
        let g = gains(vec![1e-9, 2e-9]);
        let p = PowerAlloc::new(vec![0.0, 0.1]);
        let order = initial_order(&g);
        let r = rates(&p, &order, &g, 1e-11);
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn interference_limited_rate_approaches_one() {
        // two users, equal gains/powers, g*p >> noise: the later-decoded user
        // sees SINR -> 1 from below, so its rate -> log2(2) = 1.
        let g = gains(vec![1e-6, 1e-6]);
        let p = PowerAlloc::new(vec![0.05, 0.05]);
        let mut before = vec![vec![false; 2]; 2];
        before[0][1] = true;
        let order = DecodingOrder::from_matrix(before);
        let r = rates(&p, &order, &g, 1e-13);
        assert!(r[1] < 1.0);
        assert!(r[1] > 1.0 - 1e-5);
    }

    #[test]
    fn initial_order_sorts_by_gain() {
        let order = initial_order(&gains(vec![3e-9, 2e-9, 1e-9]));
        assert!(order.decodes_before(0, 1));
        assert!(order.decodes_before(1, 2));
        assert!(order.decodes_before(0, 2));
        assert!(order.is_tournament());

        let order = initial_order(&gains(vec![1e-9, 3e-9, 2e-9]));
        assert!(order.decodes_before(1, 2));
        assert!(order.decodes_before(2, 0));
        assert!(order.decodes_before(1, 0));
    }

    #[test]
    fn equal_gains_fall_back_to_index_order() {
        let order = initial_order(&gains(vec![1e-9; 3]));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(order.decodes_before(i, j), i < j);
            }
        }
    }

    #[test]
    fn uniform_power_examples() {
        let p = initial_power(3, 0.1);
        for pi in &p.p {
            assert!((pi - 1.0 / 30.0).abs() < 1e-15);
        }
        assert_eq!(initial_power(1, 0.1).p, vec![0.1]);
    }

    #[test]
    fn uniform_power_feasible_for_any_tournament() {
        let p = initial_power(3, 0.1);
        for bits in 0..8u8 {
            let mut before = vec![vec![false; 3]; 3];
            let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
            for (k, &(i, j)) in pairs.iter().enumerate() {
                if bits >> k & 1 == 1 {
                    before[i][j] = true;
                } else {
                    before[j][i] = true;
                }
            }
            let order = DecodingOrder::from_matrix(before);
            assert!(order.is_tournament());
            assert!(p.is_feasible(&order, 0.1));
        }
    }

    /// Plain re-evaluation of the rate formula, structured differently from
    /// the implementation, as the independent oracle.
    fn rate_oracle(p: &[f64], before: &[Vec<bool>], g: &[f64], noise: f64) -> Vec<f64> {
        let n = p.len();
        (0..n)
            .map(|i| {
                let mut interf = 0.0;
                for j in 0..n {
                    if j != i && before[j][i] {
                        interf += p[j];
                    }
                }
                (1.0 + p[i] * g[i] / (g[i] * interf + noise)).ln() / 2.0f64.ln()
            })
            .collect()
    }

    #[test]
    fn rate_formula_matches_oracle_on_random_instances() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..=4);
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(1e-12..1e-6)).collect();
            let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x *= 0.1 / total);
            let gv = gains(g.clone());
            let order = initial_order(&gv);
            let got = rates(&PowerAlloc::new(p.clone()), &order, &gv, 1e-11);
            let mut before = vec![vec![false; n]; n];
            for i in 0..n {
                for j in 0..n {
                    before[i][j] = i != j && order.decodes_before(i, j);
                }
            }
            let want = rate_oracle(&p, &before, &g, 1e-11);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }

    proptest! {
        /// Multiplying every gain and the noise by the same positive constant
        /// leaves every rate unchanged.
        #[test]
        fn rate_scale_invariance(
            scale in 1e-3f64..1e3,
            g0 in 1e-12f64..1e-6,
            g1 in 1e-12f64..1e-6,
            split in 0.05f64..0.95
        ) {
            let gv = gains(vec![g0, g1]);
            let order = initial_order(&gv);
            let p = PowerAlloc::new(vec![0.1 * split, 0.1 * (1.0 - split)]);
            let base = rates(&p, &order, &gv, 1e-11);
            let scaled_g = gains(vec![g0 * scale, g1 * scale]);
            let scaled = rates(&p, &order, &scaled_g, 1e-11 * scale);
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12));
            }
        }

        /// Tournament closure of the initializer on random gains.
        #[test]
        fn initial_order_closure(g in proptest::collection::vec(1e-12f64..1e-6, 1..5)) {
            let order = initial_order(&gains(g));
            prop_assert!(order.is_tournament());
        }
    }
}
