//! Protocol parameters and per-trial results shared by all simulators.

use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::Real;

/// Knobs common to the three protocols.
///
/// `tau` sizes the population phase clock (granularity `ceil(tau * log2 n)`),
/// `tbc_const` sizes the gossip broadcast window, and `xi_eff` is the
/// effective significance constant. The constant named in the source analysis
/// is built from unpublished concentration constants and is far too large to
/// be useful at desk scale, so the significance threshold keeps its shape
/// `x_max - c * sqrt(n ln n)` with `c = xi_eff` configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: u64,
    pub k: u64,
    /// Phase-clock constant; the clock runs modulo `6 * ceil(tau * log2 n)`.
    pub tau: Real,
    /// Multiplier for the gossip broadcast window `T_BC`.
    pub tbc_const: Real,
    /// Effective significance constant (default 3.0).
    pub xi_eff: Real,
    /// Whether an agent may draw itself as interaction partner.
    pub allow_self_interaction: bool,
    /// Population model only: reset the decision flag exactly where the
    /// transition table writes it (inside the undecided branch) instead of
    /// for every agent executing the boosting part.
    pub literal_pseudocode: bool,
    /// Give up after this many phases.
    pub max_phases: u64,
    pub seed: u64,
}

impl ProtocolParams {
    pub fn new(n: u64, k: u64) -> Self {
        Self {
            n,
            k,
            tau: 4.0,
            tbc_const: 4.0,
            xi_eff: 3.0,
            allow_self_interaction: true,
            literal_pseudocode: false,
            max_phases: 200,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParams("n must be >= 1".into()));
        }
        if self.k < 1 || self.k > self.n {
            return Err(Error::InvalidParams(format!(
                "need 1 <= k <= n, got k={}, n={}",
                self.k, self.n
            )));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::InvalidParams("tau must be > 0".into()));
        }
        if !self.tbc_const.is_finite() || self.tbc_const <= 0.0 {
            return Err(Error::InvalidParams("tbc_const must be > 0".into()));
        }
        if !self.xi_eff.is_finite() || self.xi_eff < 0.0 {
            return Err(Error::InvalidParams("xi_eff must be >= 0".into()));
        }
        if self.max_phases < 1 {
            return Err(Error::InvalidParams("max_phases must be >= 1".into()));
        }
        Ok(())
    }
}

/// Clock granularity `g = ceil(tau * log2 n)`, floored at 1 so the modulus
/// stays valid for n = 1.
pub fn clock_unit(tau: Real, n: u64) -> u32 {
    let g = (tau * (n as Real).log2()).ceil();
    (g as u32).max(1)
}

/// Phase-clock modulus `m = 6 * ceil(tau * log2 n)`.
pub fn clock_modulus(tau: Real, n: u64) -> u32 {
    6 * clock_unit(tau, n)
}

/// Gossip broadcast window: `ceil(c * (log2 k + log2 log2 n))` when `k` is
/// known, `ceil(c * log2 n)` otherwise, floored at 1.
pub fn broadcast_rounds(tbc_const: Real, n: u64, k: Option<u64>) -> u32 {
    let value = match k {
        Some(k) => {
            let loglog = (n as Real).log2().max(1.0).log2().max(0.0);
            tbc_const * ((k as Real).log2() + loglog)
        }
        None => tbc_const * (n as Real).log2(),
    };
    (value.ceil() as u32).max(1)
}

/// Extra diagnostics reported by the uniform protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformDiagnostics {
    /// Largest counter value held by any agent at the end of the run.
    pub t_final: u32,
    /// First round at which no agent was in the init or counting stage.
    pub rho_round: Option<u64>,
    /// First round from which on every agent held the final common counter.
    pub t_adoption_round: Option<u64>,
}

/// Outcome of a single trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub converged: bool,
    pub winner: Option<usize>,
    pub phases: u64,
    /// Population model: total pairwise interactions executed.
    pub interactions: u64,
    /// Gossip models: total synchronous rounds executed.
    pub rounds: u64,
    /// interactions / n, exactly.
    pub parallel_time: Real,
    /// Whether the winning opinion was significant in the initial
    /// configuration (false when the trial did not converge).
    pub winner_significant_initially: bool,
    pub initial_additive_bias: u64,
    /// Infinite when the initial second-largest support is zero.
    pub initial_multiplicative_bias: Real,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uniform: Option<UniformDiagnostics>,
}

impl TrialRecord {
    /// Common bookkeeping: biases from the initial configuration and the
    /// significance of the winner under `xi_eff`.
    pub fn build(
        init: &Configuration,
        xi_eff: Real,
        converged: bool,
        winner: Option<usize>,
        phases: u64,
        interactions: u64,
        rounds: u64,
    ) -> Self {
        let winner_significant_initially = match winner {
            Some(w) if converged && init.n() >= 2 => init
                .significant_set(xi_eff)
                .map(|s| s.contains(&w))
                .unwrap_or(false),
            Some(_) if converged => true, // n == 1: the only opinion is trivially significant
            _ => false,
        };
        Self {
            converged,
            winner,
            phases,
            interactions,
            rounds,
            parallel_time: interactions as Real / init.n() as Real,
            winner_significant_initially,
            initial_additive_bias: init.additive_bias(),
            initial_multiplicative_bias: init.multiplicative_bias(),
            uniform: None,
        }
    }
}
