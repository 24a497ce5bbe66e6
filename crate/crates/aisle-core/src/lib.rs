//! Simulator and optimizer for a multi-IRS assisted UAV downlink NOMA system.
//!
//! The pipeline alternates three stages per time slot to maximize system
//! energy efficiency (sum rate over total UAV power):
//!
//! 1. [`learn`] — an inverse soft-Q imitation agent picks the IRS-user
//!    association, trained from exhaustively-enumerated expert decisions;
//! 2. [`trajectory`] — a fractional-programming outer loop around a
//!    successive-convex-approximation inner loop moves the UAV;
//! 3. [`sic`] — penalty-based SCA jointly picks the SIC decoding order and
//!    the per-user transmit powers, one small LP per iteration.
//!
//! [`runner`] orchestrates whole episodes, baselines and parameter sweeps;
//! [`convex`] hosts the self-contained barrier solver everything rides on.

pub mod channel;
pub mod convex;
pub mod energy;
pub mod error;
pub mod learn;
pub mod noma;
#[doc(hidden)]
pub mod oracles;
pub mod runner;
pub mod scenario;
pub mod sic;
pub mod trajectory;

pub use error::{Error, Result};
pub use scenario::{
    dbm_to_watts, enumerate_associations, load_config, load_scenario, Association, Config,
    Point3, Scenario,
};
