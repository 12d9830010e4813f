//! Online-to-PAC laboratory over finite hypothesis sets.
//!
//! The generalization error of a statistical learner is the regret of an
//! online learner against the learner's posterior, minus a martingale term.
//! This crate simulates that game exactly on finite environments, runs the
//! online learners whose regret bounds imply generalization bounds, and
//! evaluates and stress-tests the resulting certificates.
//!
//! Modules:
//!
//! * [`measures`]: probability vectors, divergences, weighted norms, Bregman
//!   divergences and the log-partition potential.
//! * [`transport`]: exact discrete Wasserstein-2, Gaussian smoothing and
//!   Monte-Carlo smoothed divergences.
//! * [`learners`]: EWA, optimistic second-order EWA, FTRL and optimistic FTRL
//!   with pathwise regret bounds.
//! * [`game`]: environments, statistical learners and the (conditional)
//!   generalization game engines.
//! * [`bounds`]: certificates, concentration formulas and coverage studies.
//! * [`audit`]: regret audits of the learners against adaptive adversaries.
//!
//! Randomness is always derived from a 64-bit seed through named streams
//! ([`rng`]), so every result is reproducible bit for bit.

pub mod audit;
pub mod bounds;
pub mod error;
pub mod game;
pub mod json;
pub mod learners;
pub mod measures;
pub mod numeric;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
