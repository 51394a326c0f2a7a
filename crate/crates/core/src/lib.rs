//! Simulators for synchronized undecided-state dynamics (USD) solving plurality
//! consensus among `n` agents holding `k` opinions, together with an
//! analysis-level phase oracle used to validate them.
//!
//! Three agent-level protocols are implemented:
//!
//! * [`population`]: sequential random pairwise interactions driven by a
//!   leaderless phase clock,
//! * [`gossip`]: synchronous rounds with a counter modulo `T_BC + 1`,
//! * [`uniform`]: a gossip variant that needs no knowledge of `n` or `k` and
//!   bootstraps its own phase length through init/count/sync/run stages.
//!
//! The [`oracle`] module gives the exact per-phase distributions (independent
//! binomials for the decision part, Pólya-Eggenberger for the boosting part)
//! plus goodness-of-fit utilities, so simulator output can be checked against
//! closed-form laws instead of against itself.
//!
//! All randomness flows through one explicitly seeded generator per trial (see
//! [`rng`]); identical parameters and seed reproduce a trial bit for bit.

pub mod config;
pub mod error;
pub mod gossip;
pub mod oracle;
pub mod params;
pub mod population;
pub mod rng;
pub mod scalar;
pub mod uniform;

/// Concrete scalar used by non-generic API surfaces (records, parameters).
pub type Real = f64;

pub use config::{Configuration, InitMode};
pub use error::{Error, Result};
pub use params::{ProtocolParams, TrialRecord, UniformDiagnostics};
pub use rng::{trial_rng, TrialRng};
