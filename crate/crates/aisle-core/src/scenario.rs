//! Scenario configuration: world geometry, radio constants, panel layout,
//! power budgets and UAV limits.
//!
//! Everything downstream consumes a validated, immutable [`Scenario`].
//! Internal units are strictly SI linear (W, m, s, Hz); dB/dBm exist only
//! at the config-file boundary.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A point in 3D Euclidean space, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dist(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Horizontal (xy-plane) distance.
    pub fn dist_xy(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

/// Rotary-wing propulsion constants, SI units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Propulsion {
    /// Blade profile power in the flying state (W).
    pub blade_power: f64,
    /// Induced power in the hovering state (W).
    pub induced_power: f64,
    /// Mean rotor induced velocity in forward flight (m/s).
    pub rotor_induced_velocity: f64,
    /// Blade angular velocity (rad/s).
    pub omega: f64,
    /// Rotor radius (m).
    pub rotor_radius: f64,
    /// Rotor solidity (dimensionless).
    pub solidity: f64,
    /// Rotor disk area (m^2).
    pub disk_area: f64,
    /// Air density (kg/m^3).
    pub air_density: f64,
    /// Fuselage drag ratio (dimensionless).
    pub drag_ratio: f64,
}

/// Immutable world description. Safe to share read-only across workers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// Ground user positions (m).
    pub users: Vec<Point3>,
    /// IRS panel positions (m).
    pub irs: Vec<Point3>,
    /// UAV start position (m).
    pub uav_start: Point3,
    /// Altitude bounds (m).
    pub z_min: f64,
    pub z_max: f64,
    /// Maximum UAV speed (m/s).
    pub v_max: f64,
    /// Slot duration (s).
    pub tau: f64,
    /// Number of slots per episode.
    pub slots: usize,
    /// Path loss at one meter (linear power ratio).
    pub beta: f64,
    /// Carrier frequency (Hz).
    pub carrier_hz: f64,
    /// Propagation speed (m/s).
    pub light_speed: f64,
    /// Reflecting element rows per panel.
    pub panel_rows: usize,
    /// Reflecting element columns per panel.
    pub panel_cols: usize,
    /// Element row spacing (m).
    pub row_spacing: f64,
    /// Element column spacing (m).
    pub col_spacing: f64,
    /// IRS amplitude loss, in (0, 1).
    pub amplitude: f64,
    /// Rician factor UAV-user (linear).
    pub rician_ug: f64,
    /// Rician factor IRS-user (linear).
    pub rician_rg: f64,
    /// Path loss exponent UAV-user.
    pub xi_ug: f64,
    /// Path loss exponent IRS-user.
    pub xi_rg: f64,
    /// Noise power (W).
    pub noise: f64,
    /// Total transmit power budget (W).
    pub p_max: f64,
    /// Communication power correction factor.
    pub eta: f64,
    pub propulsion: Propulsion,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_irs(&self) -> usize {
        self.irs.len()
    }

    /// Per-axis (center, half-extent) of the scene bounding box, padded so
    /// agent-state normalization stays inside [-1, 1] for reachable positions.
    pub fn map_extents(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let all = self
            .users
            .iter()
            .chain(self.irs.iter())
            .chain(std::iter::once(&self.uav_start));
        for p in all {
            for (k, v) in [p.x, p.y, p.z].iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
        lo[2] = lo[2].min(self.z_min);
        hi[2] = hi[2].max(self.z_max);
        let mut center = [0.0; 3];
        let mut half = [0.0; 3];
        for k in 0..3 {
            center[k] = 0.5 * (lo[k] + hi[k]);
            half[k] = (0.6 * (hi[k] - lo[k])).max(1.0);
        }
        (center, half)
    }

    fn validate(&self) -> Result<(), Error> {
        let bad = |path: &str, msg: &str| Err(Error::Config(format!("{path}: {msg}")));
        if self.users.is_empty() {
            return bad("geometry.users", "at least one user required");
        }
        if self.irs.is_empty() {
            return bad("geometry.irs", "at least one IRS required");
        }
        for (i, p) in self.users.iter().enumerate() {
            if !p.is_finite() {
                return bad(&format!("geometry.users[{i}]"), "position not finite");
            }
        }
        for (s, p) in self.irs.iter().enumerate() {
            if !p.is_finite() {
                return bad(&format!("geometry.irs[{s}]"), "position not finite");
            }
        }
        if !self.uav_start.is_finite() {
            return bad("geometry.uav_start", "position not finite");
        }
        if self.z_min > self.z_max {
            return bad("geometry.z_min", "altitude bounds inverted");
        }
        if self.uav_start.z < self.z_min || self.uav_start.z > self.z_max {
            return bad("geometry.uav_start", "start altitude outside [z_min, z_max]");
        }
        if !(self.v_max > 0.0) {
            return bad("geometry.v_max", "must be positive");
        }
        if !(self.tau > 0.0) {
            return bad("geometry.tau", "must be positive");
        }
        if self.slots < 1 {
            return bad("geometry.slots", "at least one slot required");
        }
        if !(self.beta > 0.0) {
            return bad("radio.beta", "must be positive");
        }
        if !(self.carrier_hz > 0.0) {
            return bad("radio.carrier_hz", "must be positive");
        }
        if !(self.light_speed > 0.0) {
            return bad("radio.light_speed", "must be positive");
        }
        if !(self.noise > 0.0) {
            return bad("radio.noise_dbm", "noise power must be positive");
        }
        if !(self.rician_ug > 0.0) || !(self.rician_rg > 0.0) {
            return bad("radio.rician", "Rician factors must be positive");
        }
        if !(self.xi_ug > 0.0) || !(self.xi_rg > 0.0) {
            return bad("radio.xi", "path loss exponents must be positive");
        }
        if self.panel_rows < self.users.len() {
            return bad("irs.rows", "fewer rows than users; per-user segments need >= 1 row");
        }
        if self.panel_cols < 1 {
            return bad("irs.cols", "at least one column required");
        }
        if !(self.row_spacing > 0.0) || !(self.col_spacing > 0.0) {
            return bad("irs.spacing", "element spacings must be positive");
        }
        if !(self.amplitude > 0.0 && self.amplitude < 1.0) {
            return bad("irs.amplitude", "must lie strictly in (0, 1)");
        }
        if !(self.p_max > 0.0) {
            return bad("noma.p_max", "must be positive");
        }
        if !(self.eta >= 0.0) {
            return bad("noma.eta", "must be non-negative");
        }
        let pr = &self.propulsion;
        for (v, path) in [
            (pr.blade_power, "propulsion.blade_power"),
            (pr.induced_power, "propulsion.induced_power"),
            (pr.rotor_induced_velocity, "propulsion.rotor_induced_velocity"),
            (pr.omega, "propulsion.omega"),
            (pr.rotor_radius, "propulsion.rotor_radius"),
            (pr.solidity, "propulsion.solidity"),
            (pr.disk_area, "propulsion.disk_area"),
            (pr.air_density, "propulsion.air_density"),
            (pr.drag_ratio, "propulsion.drag_ratio"),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{path}: must be positive")));
            }
        }
        Ok(())
    }
}

/// dBm to watts: 10^((x - 30) / 10).
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Watts to dBm; inverse of [`dbm_to_watts`] up to rounding.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

// ---------------------------------------------------------------------------
// Config file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GeometrySection {
    users: Vec<Point3>,
    irs: Vec<Point3>,
    uav_start: Point3,
    z_min: f64,
    z_max: f64,
    v_max: f64,
    tau: f64,
    slots: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RadioSection {
    beta: f64,
    carrier_hz: f64,
    light_speed: f64,
    /// Noise power; exactly one of the two representations must be present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_w: Option<f64>,
    rician_ug: f64,
    rician_rg: f64,
    xi_ug: f64,
    xi_rg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IrsSection {
    rows: usize,
    cols: usize,
    row_spacing: f64,
    col_spacing: f64,
    amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NomaSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max_w: Option<f64>,
    eta: f64,
}

/// Learning hyperparameters (Q-network shape, optimizer settings).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub discount: f64,
    pub deflation: f64,
    pub train_steps: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-3,
            batch: 32,
            discount: 0.99,
            deflation: 1.0,
            train_steps: 4000,
        }
    }
}

/// Solver tolerances and iteration caps for the trajectory and SIC/power loops.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Interior-point tolerance.
    pub tol: f64,
    /// Ratio-update stopping tolerance of the outer fractional loop.
    pub eps_outer: f64,
    /// Objective-improvement stopping tolerance of the inner SCA loop.
    pub eps_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Penalty weight forcing the relaxed decoding order to binary values.
    pub zeta: f64,
    /// Objective-improvement stopping tolerance of the SIC/power loop.
    pub eps_power: f64,
    pub max_power_iters: usize,
    /// Binariness threshold checked before rounding.
    pub round_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            eps_outer: 1e-4,
            eps_inner: 1e-4,
            max_outer: 15,
            max_inner: 30,
            zeta: 10.0,
            eps_power: 1e-5,
            max_power_iters: 50,
            round_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfigFile {
    geometry: GeometrySection,
    radio: RadioSection,
    irs: IrsSection,
    noma: NomaSection,
    propulsion: Propulsion,
    #[serde(default)]
    learning: LearningConfig,
    #[serde(default)]
    solver: SolverConfig,
}

/// Fully parsed run configuration: the physical scenario plus tuning knobs.
#[derive(Debug, Clone)]
pub struct Config {
    pub scenario: Scenario,
    pub learning: LearningConfig,
    pub solver: SolverConfig,
}

fn scenario_from_file(f: &ConfigFile) -> Result<Scenario, Error> {
    let noise = match (f.radio.noise_w, f.radio.noise_dbm) {
        (Some(w), None) => w,
        (None, Some(dbm)) => dbm_to_watts(dbm),
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "radio: give exactly one of noise_w / noise_dbm".into(),
            ))
        }
        (None, None) => return Err(Error::Config("radio: noise_w or noise_dbm required".into())),
    };
    let p_max = match (f.noma.p_max_w, f.noma.p_max_dbm) {
        (Some(w), None) => w,
        (None, Some(dbm)) => dbm_to_watts(dbm),
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "noma: give exactly one of p_max_w / p_max_dbm".into(),
            ))
        }
        (None, None) => return Err(Error::Config("noma: p_max_w or p_max_dbm required".into())),
    };
    let s = Scenario {
        users: f.geometry.users.clone(),
        irs: f.geometry.irs.clone(),
        uav_start: f.geometry.uav_start,
        z_min: f.geometry.z_min,
        z_max: f.geometry.z_max,
        v_max: f.geometry.v_max,
        tau: f.geometry.tau,
        slots: f.geometry.slots,
        beta: f.radio.beta,
        carrier_hz: f.radio.carrier_hz,
        light_speed: f.radio.light_speed,
        panel_rows: f.irs.rows,
        panel_cols: f.irs.cols,
        row_spacing: f.irs.row_spacing,
        col_spacing: f.irs.col_spacing,
        amplitude: f.irs.amplitude,
        rician_ug: f.radio.rician_ug,
        rician_rg: f.radio.rician_rg,
        xi_ug: f.radio.xi_ug,
        xi_rg: f.radio.xi_rg,
        noise,
        p_max,
        eta: f.noma.eta,
        propulsion: f.propulsion.clone(),
    };
    s.validate()?;
    Ok(s)
}

impl ConfigFile {
    fn parse(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("parse failure: {e}")))
    }
}

/// Parse and validate a full config document.
pub fn load_config(text: &str) -> Result<Config, Error> {
    let f = ConfigFile::parse(text)?;
    Ok(Config {
        scenario: scenario_from_file(&f)?,
        learning: f.learning,
        solver: f.solver,
    })
}

/// Parse and validate the scenario portion of a config document.
pub fn load_scenario(text: &str) -> Result<Scenario, Error> {
    load_config(text).map(|c| c.scenario)
}

/// Serialize a scenario back to config-document form (linear power fields,
/// so a reload reproduces every field exactly).
pub fn scenario_to_config_json(s: &Scenario) -> String {
    let f = ConfigFile {
        geometry: GeometrySection {
            users: s.users.clone(),
            irs: s.irs.clone(),
            uav_start: s.uav_start,
            z_min: s.z_min,
            z_max: s.z_max,
            v_max: s.v_max,
            tau: s.tau,
            slots: s.slots,
        },
        radio: RadioSection {
            beta: s.beta,
            carrier_hz: s.carrier_hz,
            light_speed: s.light_speed,
            noise_dbm: None,
            noise_w: Some(s.noise),
            rician_ug: s.rician_ug,
            rician_rg: s.rician_rg,
            xi_ug: s.xi_ug,
            xi_rg: s.xi_rg,
        },
        irs: IrsSection {
            rows: s.panel_rows,
            cols: s.panel_cols,
            row_spacing: s.row_spacing,
            col_spacing: s.col_spacing,
            amplitude: s.amplitude,
        },
        noma: NomaSection {
            p_max_dbm: None,
            p_max_w: Some(s.p_max),
            eta: s.eta,
        },
        propulsion: s.propulsion.clone(),
        learning: LearningConfig::default(),
        solver: SolverConfig::default(),
    };
    serde_json::to_string_pretty(&f).expect("config serialization cannot fail")
}

/// The stock scenario shipped with the repository.
pub fn default_config_json() -> &'static str {
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../config/default.json"))
}

// ---------------------------------------------------------------------------
// IRS-user association
// ---------------------------------------------------------------------------

/// Binary IRS-user assignment: exactly one IRS per user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    /// Per-user IRS index, 0-based.
    pub assign: Vec<usize>,
}

impl Association {
    pub fn new(assign: Vec<usize>) -> Self {
        Self { assign }
    }

    pub fn n_users(&self) -> usize {
        self.assign.len()
    }

    /// 1 if user `i` is served by IRS `s`, else 0.
    pub fn alpha(&self, s: usize, i: usize) -> bool {
        self.assign[i] == s
    }

    /// Number of users served by IRS `s`.
    pub fn served_count(&self, s: usize) -> usize {
        self.assign.iter().filter(|&&a| a == s).count()
    }

    /// Checks the one-IRS-per-user and per-IRS capacity constraints.
    pub fn is_feasible(&self, n_irs: usize, panel_rows: usize) -> bool {
        self.assign.iter().all(|&a| a < n_irs)
            && (0..n_irs).all(|s| self.served_count(s) <= panel_rows)
    }
}

/// All feasible assignments of `n` users to `s` IRSs under the per-IRS
/// capacity `panel_rows`, in lexicographic order (user 0 most significant,
/// IRS index ascending). Deterministic; empty when infeasible.
pub fn enumerate_associations(n: usize, s: usize, panel_rows: usize) -> Vec<Association> {
    assert!(n >= 1 && s >= 1, "need at least one user and one IRS");
    let mut out = Vec::new();
    let mut assign = vec![0usize; n];
    loop {
        let assoc = Association::new(assign.clone());
        if assoc.is_feasible(s, panel_rows) {
            out.push(assoc);
        }
        // odometer increment, last user least significant
        let mut k = n;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            assign[k] += 1;
            if assign[k] < s {
                break;
            }
            assign[k] = 0;
        }
    }
}
