//! Distances, IRS segmentation, passive-beamforming phases, and the composite
//! line-of-sight channel power gain per user.
//!
//! The closed-form gain assumes the aligned phase strategy; the brute-force
//! complex-vector oracle [`phase_oracle_gain`] exists to verify that claim
//! numerically and never feeds the production path.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::{Association, Point3, Scenario};

/// sin/cos of one arrival-angle pair. Azimuth convention when the link is
/// vertical (no horizontal offset): sin_phi = 0, cos_phi = 1.
#[derive(Debug, Clone, Copy)]
pub struct Angles {
    pub sin_theta: f64,
    pub sin_phi: f64,
    pub cos_phi: f64,
}

fn link_angles(dz: f64, dx: f64, dy: f64, dist: f64) -> Angles {
    let rho = (dx * dx + dy * dy).sqrt();
    if rho < 1e-12 {
        Angles {
            sin_theta: dz / dist,
            sin_phi: 0.0,
            cos_phi: 1.0,
        }
    } else {
        Angles {
            sin_theta: dz / dist,
            sin_phi: dx / rho,
            cos_phi: dy / rho,
        }
    }
}

/// All distances and angles for one UAV position.
#[derive(Debug, Clone)]
pub struct GeometrySlice {
    /// UAV-user distance per user (m).
    pub d_ug: Vec<f64>,
    /// UAV-IRS distance per IRS (m).
    pub d_ur: Vec<f64>,
    /// IRS-user distance per (IRS, user) (m).
    pub d_rg: Vec<Vec<f64>>,
    /// UAV->IRS arrival angles per IRS.
    pub ur: Vec<Angles>,
    /// IRS->user departure angles per (IRS, user).
    pub rg: Vec<Vec<Angles>>,
}

/// Distances and the angle expressions evaluated exactly as defined.
/// Errors on coincident points (zero distance).
pub fn geometry(uav_pos: Point3, sc: &Scenario) -> Result<GeometrySlice> {
    const MIN_DIST: f64 = 1e-9;
    let mut d_ug = Vec::with_capacity(sc.n_users());
    for (i, u) in sc.users.iter().enumerate() {
        let d = uav_pos.dist(u);
        if d < MIN_DIST {
            return Err(Error::Geometry(format!("UAV coincides with user {i}")));
        }
        d_ug.push(d);
    }
    let mut d_ur = Vec::with_capacity(sc.n_irs());
    let mut ur = Vec::with_capacity(sc.n_irs());
    for (s, r) in sc.irs.iter().enumerate() {
        let d = uav_pos.dist(r);
        if d < MIN_DIST {
            return Err(Error::Geometry(format!("UAV coincides with IRS {s}")));
        }
        d_ur.push(d);
        // vertical: (z_uav - z_s)/d; horizontal: toward the IRS in x, away in y
        ur.push(link_angles(uav_pos.z - r.z, r.x - uav_pos.x, uav_pos.y - r.y, d));
    }
    let mut d_rg = Vec::with_capacity(sc.n_irs());
    let mut rg = Vec::with_capacity(sc.n_irs());
    for (s, r) in sc.irs.iter().enumerate() {
        let mut row_d = Vec::with_capacity(sc.n_users());
        let mut row_a = Vec::with_capacity(sc.n_users());
        for (i, u) in sc.users.iter().enumerate() {
            let d = r.dist(u);
            if d < MIN_DIST {
                return Err(Error::Geometry(format!("IRS {s} coincides with user {i}")));
            }
            row_d.push(d);
            row_a.push(link_angles(r.z, u.x - r.x, u.y - r.y, d));
        }
        d_rg.push(row_d);
        rg.push(row_a);
    }
    Ok(GeometrySlice {
        d_ug,
        d_ur,
        d_rg,
        ur,
        rg,
    })
}

/// Rows assigned to each served (IRS, user) pair: the panel's rows divided
/// evenly (floor) among the users currently served by that IRS; 0 elsewhere.
pub fn segment_rows(assoc: &Association, panel_rows: usize) -> Vec<Vec<usize>> {
    let n = assoc.n_users();
    let n_irs = assoc.assign.iter().copied().max().map_or(1, |m| m + 1);
    let mut rows = vec![vec![0usize; n]; n_irs];
    for s in 0..n_irs {
        let served = assoc.served_count(s);
        if served == 0 {
            continue;
        }
        let share = panel_rows / served;
        for i in 0..n {
            if assoc.alpha(s, i) {
                rows[s][i] = share;
            }
        }
    }
    rows
}

/// Composite per-user channel power gains plus the segmentation that
/// produced them.
#[derive(Debug, Clone)]
pub struct GainVector {
    /// Composite LoS power gain per user (linear ratio).
    pub gain: Vec<f64>,
    /// Segment rows per (IRS, user).
    pub rows: Vec<Vec<usize>>,
}

/// The three closed-form gain components for one user: direct Rician-LoS
/// power, reflected array power, and the coherent cross term.
#[derive(Debug, Clone, Copy)]
pub struct GainTerms {
    pub direct: f64,
    pub reflected: f64,
    pub cross: f64,
}

impl GainTerms {
    pub fn total(&self) -> f64 {
        self.direct + self.reflected + self.cross
    }
}

/// Closed-form gain components for one user served through one IRS segment
/// with `seg_rows` rows (0 gates the reflected path off entirely).
pub fn gain_terms(
    sc: &Scenario,
    d_ug: f64,
    d_ur: f64,
    d_rg: f64,
    seg_rows: usize,
) -> GainTerms {
    let k_ug = sc.rician_ug / (sc.rician_ug + 1.0);
    let direct_amp = (sc.beta * k_ug).sqrt() / d_ug.powf(sc.xi_ug / 2.0);
    if seg_rows == 0 {
        return GainTerms {
            direct: direct_amp * direct_amp,
            reflected: 0.0,
            cross: 0.0,
        };
    }
    let k_rg = sc.rician_rg / (sc.rician_rg + 1.0);
    let elements = (sc.panel_cols * seg_rows) as f64;
    let refl_amp =
        sc.amplitude * sc.beta * elements * k_rg.sqrt() / (d_ur * d_rg.powf(sc.xi_rg / 2.0));
    GainTerms {
        direct: direct_amp * direct_amp,
        reflected: refl_amp * refl_amp,
        cross: 2.0 * direct_amp * refl_amp,
    }
}

/// Per-user composite LoS power gain under the aligned phase strategy.
/// Only the associated IRS contributes to each user's reflected path.
pub fn composite_gain(uav_pos: Point3, assoc: &Association, sc: &Scenario) -> Result<GainVector> {
    if assoc.n_users() != sc.n_users() || !assoc.is_feasible(sc.n_irs(), sc.panel_rows) {
        return Err(Error::Infeasible("association violates C1-C3".into()));
    }
    let geo = geometry(uav_pos, sc)?;
    let rows = segment_rows(assoc, sc.panel_rows);
    let mut gain = Vec::with_capacity(sc.n_users());
    for i in 0..sc.n_users() {
        let s = assoc.assign[i];
        let terms = gain_terms(sc, geo.d_ug[i], geo.d_ur[s], geo.d_rg[s][i], rows[s][i]);
        gain.push(terms.total());
    }
    Ok(GainVector { gain, rows })
}

/// Per-element phase ramp of a steering vector over a `cols x seg_rows`
/// segment, flattened with the column factor most significant.
fn steering_phase(sc: &Scenario, a: &Angles, m: usize, n: usize) -> f64 {
    let k = 2.0 * std::f64::consts::PI * sc.carrier_hz / sc.light_speed;
    k * (m as f64 * sc.col_spacing * a.sin_theta * a.cos_phi
        + n as f64 * sc.row_spacing * a.sin_theta * a.sin_phi)
}

/// Reflection phases that align every element's reflected path with the
/// direct path, flattened per user (`cols x seg_rows`, column-major factor
/// first). Segment indices run over the rows actually assigned to the user.
pub fn optimal_phases(uav_pos: Point3, assoc: &Association, sc: &Scenario) -> Result<Vec<Vec<f64>>> {
    let geo = geometry(uav_pos, sc)?;
    let rows = segment_rows(assoc, sc.panel_rows);
    let mut out = Vec::with_capacity(sc.n_users());
    for i in 0..sc.n_users() {
        let s = assoc.assign[i];
        let seg = rows[s][i];
        let mut phases = Vec::with_capacity(sc.panel_cols * seg);
        for m in 0..sc.panel_cols {
            for n in 0..seg {
                let chi_ur = steering_phase(sc, &geo.ur[s], m, n);
                let chi_rg = steering_phase(sc, &geo.rg[s][i], m, n);
                phases.push(chi_ur - chi_rg);
            }
        }
        out.push(phases);
    }
    Ok(out)
}

/// Brute-force oracle: build the Kronecker-structured steering vectors,
/// apply the given per-element reflection phases, and return |composite|^2
/// per user. `phases[i]` must hold `cols * seg_rows(i)` radians.
pub fn phase_oracle_gain(
    uav_pos: Point3,
    assoc: &Association,
    sc: &Scenario,
    phases: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if assoc.n_users() != sc.n_users() || !assoc.is_feasible(sc.n_irs(), sc.panel_rows) {
        return Err(Error::Infeasible("association violates C1-C3".into()));
    }
    if phases.len() != sc.n_users() {
        return Err(Error::Infeasible(format!(
            "phase sets: expected {} users, got {}",
            sc.n_users(),
            phases.len()
        )));
    }
    let geo = geometry(uav_pos, sc)?;
    let rows = segment_rows(assoc, sc.panel_rows);
    let k_ug = sc.rician_ug / (sc.rician_ug + 1.0);
    let k_rg = sc.rician_rg / (sc.rician_rg + 1.0);
    let mut out = Vec::with_capacity(sc.n_users());
    for i in 0..sc.n_users() {
        let s = assoc.assign[i];
        let seg = rows[s][i];
        let expected = sc.panel_cols * seg;
        if phases[i].len() != expected {
            return Err(Error::Infeasible(format!(
                "phase set for user {i}: expected {expected} elements, got {}",
                phases[i].len()
            )));
        }
        let direct = Complex64::new(
            (sc.beta * k_ug).sqrt() / geo.d_ug[i].powf(sc.xi_ug / 2.0),
            0.0,
        );
        let coeff = sc.amplitude * sc.beta * k_rg.sqrt()
            / (geo.d_ur[s] * geo.d_rg[s][i].powf(sc.xi_rg / 2.0));
        let mut sum = Complex64::new(0.0, 0.0);
        let mut idx = 0;
        for m in 0..sc.panel_cols {
            for n in 0..seg {
                let chi_ur = steering_phase(sc, &geo.ur[s], m, n);
                let chi_rg = steering_phase(sc, &geo.rg[s][i], m, n);
                sum += Complex64::from_polar(1.0, chi_rg + phases[i][idx] - chi_ur);
                idx += 1;
            }
        }
        let q = direct + coeff * sum;
        out.push(q.norm_sqr());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{default_config_json, load_scenario};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn paper_scenario() -> Scenario {
        load_scenario(default_config_json()).unwrap()
    }

    #[test]
    fn vertical_link_geometry() {
        let sc = paper_scenario();
        let geo = geometry(Point3::new(250.0, 250.0, 130.0), &sc).unwrap();
        assert!((geo.d_ur[0] - 100.0).abs() < 1e-12);
        assert!((geo.ur[0].sin_theta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn straight_down_distance() {
        let mut sc = paper_scenario();
        sc.users[0] = Point3::new(0.0, 0.0, 0.0);
        let geo = geometry(Point3::new(0.0, 0.0, 100.0), &sc).unwrap();
        assert!((geo.d_ug[0] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_point_is_an_error() {
        let sc = paper_scenario();
        let at_irs = sc.irs[0];
        assert!(geometry(at_irs, &sc).is_err());
    }

    /// Independent high-precision recomputation of every distance and angle,
    /// written against the raw definitions rather than the library helpers.
    #[test]
    fn geometry_matches_independent_recomputation() {
        let sc = paper_scenario();
        let uav = sc.uav_start;
        let geo = geometry(uav, &sc).unwrap();
        for (i, u) in sc.users.iter().enumerate() {
            let d = ((uav.x - u.x).powi(2) + (uav.y - u.y).powi(2) + (uav.z - u.z).powi(2)).sqrt();
            assert!((geo.d_ug[i] - d).abs() <= 1e-12 * d);
        }
        for (s, r) in sc.irs.iter().enumerate() {
            let d = ((uav.x - r.x).powi(2) + (uav.y - r.y).powi(2) + (uav.z - r.z).powi(2)).sqrt();
            assert!((geo.d_ur[s] - d).abs() <= 1e-12 * d);
            let rho = ((r.x - uav.x).powi(2) + (r.y - uav.y).powi(2)).sqrt();
            assert!((geo.ur[s].sin_theta - (uav.z - r.z) / d).abs() < 1e-12);
            assert!((geo.ur[s].sin_phi - (r.x - uav.x) / rho).abs() < 1e-12);
            assert!((geo.ur[s].cos_phi - (uav.y - r.y) / rho).abs() < 1e-12);
            for (i, u) in sc.users.iter().enumerate() {
                let drg =
                    ((r.x - u.x).powi(2) + (r.y - u.y).powi(2) + (r.z - u.z).powi(2)).sqrt();
                assert!((geo.d_rg[s][i] - drg).abs() <= 1e-12 * drg);
                let rho = ((r.x - u.x).powi(2) + (r.y - u.y).powi(2)).sqrt();
                assert!((geo.rg[s][i].sin_theta - r.z / drg).abs() < 1e-12);
                assert!((geo.rg[s][i].sin_phi - (u.x - r.x) / rho).abs() < 1e-12);
                assert!((geo.rg[s][i].cos_phi - (u.y - r.y) / rho).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn segment_rows_floor_division() {
        let a3 = Association::new(vec![0, 0, 0]);
        assert_eq!(segment_rows(&a3, 100)[0], vec![33, 33, 33]);
        let a1 = Association::new(vec![0]);
        assert_eq!(segment_rows(&a1, 100)[0], vec![100]);
        let a2 = Association::new(vec![0, 0]);
        assert_eq!(segment_rows(&a2, 7)[0], vec![3, 3]);
    }

    #[test]
    fn segmentation_never_exceeds_panel() {
        for assoc in crate::scenario::enumerate_associations(3, 2, 100) {
            let rows = segment_rows(&assoc, 100);
            for s in 0..2 {
                let used: usize = (0..3).filter(|&i| assoc.alpha(s, i)).map(|i| rows[s][i]).sum();
                assert!(used <= 100);
            }
        }
    }

    #[test]
    fn zero_rows_gates_reflected_terms_off() {
        let sc = paper_scenario();
        let t = gain_terms(&sc, 120.0, 80.0, 90.0, 0);
        let k = sc.rician_ug / (sc.rician_ug + 1.0);
        let expect = sc.beta * k / 120.0f64.powf(sc.xi_ug);
        assert!((t.total() - expect).abs() <= 1e-15 * expect);
        assert_eq!(t.reflected, 0.0);
        assert_eq!(t.cross, 0.0);
    }

    #[test]
    fn doubling_rows_scales_terms_homogeneously() {
        let sc = paper_scenario();
        let mut sc2 = sc.clone();
        sc2.panel_rows = 200;
        // one user per IRS: segment rows double with the panel
        let base = gain_terms(&sc, 150.0, 90.0, 110.0, sc.panel_rows);
        let dbl = gain_terms(&sc2, 150.0, 90.0, 110.0, sc2.panel_rows);
        assert!((dbl.direct - base.direct).abs() <= 1e-15 * base.direct);
        assert!((dbl.reflected - 4.0 * base.reflected).abs() <= 1e-12 * base.reflected);
        assert!((dbl.cross - 2.0 * base.cross).abs() <= 1e-12 * base.cross);
    }

    #[test]
    fn gain_decreases_with_distance() {
        let sc = paper_scenario();
        let mut prev = f64::INFINITY;
        for d_ug in [80.0, 120.0, 200.0, 400.0] {
            let g = gain_terms(&sc, d_ug, 90.0, 110.0, 50).total();
            assert!(g < prev);
            prev = g;
        }
        let mut prev = f64::INFINITY;
        for d_ur in [60.0, 100.0, 180.0, 350.0] {
            let g = gain_terms(&sc, 150.0, d_ur, 110.0, 50).total();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn single_element_constructive_addition() {
        let mut sc = paper_scenario();
        sc.users = vec![Point3::new(150.0, 350.0, 0.0)];
        sc.panel_rows = 1;
        sc.panel_cols = 1;
        let assoc = Association::new(vec![0]);
        let uav = Point3::new(100.0, 100.0, 120.0);
        let phases = optimal_phases(uav, &assoc, &sc).unwrap();
        let oracle = phase_oracle_gain(uav, &assoc, &sc, &phases).unwrap();
        let closed = composite_gain(uav, &assoc, &sc).unwrap();
        assert!((oracle[0] - closed.gain[0]).abs() <= 1e-12 * closed.gain[0]);
        let t = gain_terms(&sc, uav.dist(&sc.users[0]), uav.dist(&sc.irs[0]),
                           sc.irs[0].dist(&sc.users[0]), 1);
        let amp = t.direct.sqrt() + t.reflected.sqrt();
        assert!((oracle[0] - amp * amp).abs() <= 1e-12 * oracle[0]);
    }

    #[test]
    fn aligned_phases_reproduce_closed_form() {
        let mut sc = paper_scenario();
        sc.panel_rows = 16;
        sc.panel_cols = 16;
        let assoc = Association::new(vec![0, 1, 0]);
        let uav = Point3::new(120.0, 330.0, 90.0);
        let phases = optimal_phases(uav, &assoc, &sc).unwrap();
        let oracle = phase_oracle_gain(uav, &assoc, &sc, &phases).unwrap();
        let closed = composite_gain(uav, &assoc, &sc).unwrap();
        for i in 0..3 {
            assert!(
                (oracle[i] - closed.gain[i]).abs() <= 1e-9 * closed.gain[i],
                "user {i}: oracle {} vs closed {}",
                oracle[i],
                closed.gain[i]
            );
        }
    }

    #[test]
    fn random_phases_never_beat_aligned() {
        let mut sc = paper_scenario();
        sc.panel_rows = 12;
        sc.panel_cols = 12;
        let assoc = Association::new(vec![0, 1, 1]);
        let uav = Point3::new(300.0, 200.0, 110.0);
        let best = composite_gain(uav, &assoc, &sc).unwrap();
        let rows = segment_rows(&assoc, sc.panel_rows);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let phases: Vec<Vec<f64>> = (0..3)
                .map(|i| {
                    let s = assoc.assign[i];
                    (0..sc.panel_cols * rows[s][i])
                        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                        .collect()
                })
                .collect();
            let g = phase_oracle_gain(uav, &assoc, &sc, &phases).unwrap();
            for i in 0..3 {
                assert!(g[i] <= best.gain[i] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn phase_dimension_mismatch_rejected() {
        let sc = paper_scenario();
        let assoc = Association::new(vec![0, 1, 0]);
        let uav = sc.uav_start;
        let bad = vec![vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]];
        assert!(phase_oracle_gain(uav, &assoc, &sc, &bad).is_err());
    }

    proptest! {
        #[test]
        fn azimuth_pairs_stay_normalized(
            x in -400.0f64..900.0, y in -400.0f64..900.0, z in 51.0f64..149.0
        ) {
            let sc = paper_scenario();
            if let Ok(geo) = geometry(Point3::new(x, y, z), &sc) {
                for a in geo.ur.iter().chain(geo.rg.iter().flatten()) {
                    let s = a.sin_phi * a.sin_phi + a.cos_phi * a.cos_phi;
                    prop_assert!((s - 1.0).abs() < 1e-12);
                    prop_assert!(a.sin_theta.abs() <= 1.0 + 1e-12);
                }
            }
        }
    }
}
