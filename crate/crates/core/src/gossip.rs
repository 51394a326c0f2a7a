//! Synchronous gossip-model protocol.
//!
//! Every round, each agent contacts one uniformly random agent (self-contact
//! allowed by default) and updates against the partner's state as of the
//! round start; all writes land together after all reads. A shared counter
//! modulo `T_BC + 1` alternates one decision round (`round == 0`) with `T_BC`
//! boosting rounds.
//!
//! Snapshot semantics matter: they make the number of decided agents of
//! opinion `i` after the decision round exactly `Bin(x_i, x_i / n)` and each
//! boosting round a sum of independent binomials, which is what the oracle
//! module validates against.

use rand::Rng;

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::params::{broadcast_rounds, ProtocolParams, TrialRecord};
use crate::rng::{trial_rng, TrialRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GossipAgentState {
    /// Round counter in `[0, T_BC]`; identical across agents at all times.
    pub round: u32,
    pub opinion: u32,
    pub undecided: bool,
}

pub struct GossipSim {
    agents: Vec<GossipAgentState>,
    next: Vec<GossipAgentState>,
    draws: Vec<u32>,
    params: ProtocolParams,
    init: Configuration,
    tbc: u32,
    round_count: u64,
    rng: TrialRng,
    snapshots: Option<Vec<Configuration>>,
}

impl GossipSim {
    /// Builds a simulator with `T_BC` derived from the known opinion count,
    /// `ceil(tbc_const * (log2 k + log2 log2 n))`.
    pub fn new(params: &ProtocolParams, init: &Configuration) -> Result<Self> {
        let tbc = broadcast_rounds(params.tbc_const, params.n, Some(params.k));
        Self::with_tbc(params, init, tbc)
    }

    /// Builds a simulator with an explicit broadcast window. Useful when `k`
    /// is treated as unknown (`broadcast_rounds(c, n, None)`) or when a test
    /// needs the boosting part to run to exhaustion.
    pub fn with_tbc(params: &ProtocolParams, init: &Configuration, tbc: u32) -> Result<Self> {
        params.validate()?;
        if init.n() != params.n || init.k() as u64 != params.k {
            return Err(Error::InvalidParams(format!(
                "initial configuration is {}x{}, params say n={}, k={}",
                init.n(),
                init.k(),
                params.n,
                params.k
            )));
        }
        if params.n > u32::MAX as u64 {
            return Err(Error::InvalidParams("n exceeds u32 agent ids".into()));
        }
        if tbc < 1 {
            return Err(Error::InvalidParams("tbc must be >= 1".into()));
        }
        let mut agents = Vec::with_capacity(init.n() as usize);
        for (op, &c) in init.counts().iter().enumerate() {
            for _ in 0..c {
                agents.push(GossipAgentState {
                    round: 0,
                    opinion: op as u32,
                    undecided: false,
                });
            }
        }
        Ok(Self {
            next: agents.clone(),
            draws: vec![0; agents.len()],
            agents,
            params: params.clone(),
            init: init.clone(),
            tbc,
            round_count: 0,
            rng: trial_rng(params.seed),
            snapshots: None,
        })
    }

    pub fn record_snapshots(&mut self) {
        self.snapshots = Some(Vec::new());
    }

    pub fn snapshots(&self) -> &[Configuration] {
        self.snapshots.as_deref().unwrap_or(&[])
    }

    pub fn agents(&self) -> &[GossipAgentState] {
        &self.agents
    }

    pub fn tbc(&self) -> u32 {
        self.tbc
    }

    pub fn round_count(&self) -> u64 {
        self.round_count
    }

    /// Opinion-field counts, undecided agents included under their latent
    /// opinion.
    pub fn configuration(&self) -> Configuration {
        let mut counts = vec![0u64; self.params.k as usize];
        for a in &self.agents {
            counts[a.opinion as usize] += 1;
        }
        Configuration::new(counts).expect("counts sum to n")
    }

    pub fn undecided_count(&self) -> u64 {
        self.agents.iter().filter(|a| a.undecided).count() as u64
    }

    /// True at the start of a phase (shared round counter at zero).
    pub fn is_phase_boundary(&self) -> bool {
        self.agents[0].round == 0
    }

    pub fn is_consensus(&self) -> bool {
        let first = self.agents[0].opinion;
        self.agents
            .iter()
            .all(|a| !a.undecided && a.opinion == first)
    }

    /// One synchronous round with the given partner draws (`draws[i]` is the
    /// agent contacted by agent `i`); reads reference round-start state only.
    pub fn round_with_draws(&mut self, draws: &[u32]) {
        assert_eq!(draws.len(), self.agents.len());
        let phase_len = self.tbc + 1;
        for (i, &draw) in draws.iter().enumerate() {
            let me = self.agents[i];
            let vt = self.agents[draw as usize];
            let mut new = me;
            if me.round == 0 {
                new.undecided = me.opinion != vt.opinion;
            } else if me.undecided && !vt.undecided {
                new.opinion = vt.opinion;
                new.undecided = false;
            }
            new.round = (me.round + 1) % phase_len;
            self.next[i] = new;
        }
        std::mem::swap(&mut self.agents, &mut self.next);
        self.round_count += 1;
    }

    /// One synchronous round; partners are drawn in agent-id order.
    pub fn round(&mut self) {
        let n = self.params.n as usize;
        for i in 0..n {
            let mut v = self.rng.random_range(0..n);
            if !self.params.allow_self_interaction {
                while v == i {
                    v = self.rng.random_range(0..n);
                }
            }
            self.draws[i] = v as u32;
        }
        let draws = std::mem::take(&mut self.draws);
        self.round_with_draws(&draws);
        self.draws = draws;
    }

    /// Runs exactly one phase: the decision round plus `T_BC` boosting rounds.
    pub fn run_phase(&mut self) {
        for _ in 0..=self.tbc {
            self.round();
        }
    }

    /// Rounds until unanimity holds at a phase boundary, or until
    /// `max_phases` phases have elapsed.
    pub fn run(&mut self) -> TrialRecord {
        let phase_len = (self.tbc + 1) as u64;
        let cutoff = self.params.max_phases.saturating_mul(phase_len);
        let mut converged = false;
        loop {
            if self.is_phase_boundary() {
                if let Some(snaps) = self.snapshots.as_mut() {
                    let mut counts = vec![0u64; self.params.k as usize];
                    for a in &self.agents {
                        counts[a.opinion as usize] += 1;
                    }
                    snaps.push(Configuration::new(counts).expect("counts sum to n"));
                }
                if self.is_consensus() {
                    converged = true;
                    break;
                }
                if self.round_count >= cutoff {
                    break;
                }
            }
            self.round();
        }
        let winner = converged.then(|| self.agents[0].opinion as usize);
        TrialRecord::build(
            &self.init,
            self.params.xi_eff,
            converged,
            winner,
            self.round_count / phase_len,
            0,
            self.round_count,
        )
    }
}

/// Runs one trial and returns the record, the final configuration, and the
/// configuration at each phase boundary (the analysis object `X(t)`).
pub fn run_gossip(
    params: &ProtocolParams,
    init: &Configuration,
) -> Result<(TrialRecord, Configuration, Vec<Configuration>)> {
    let mut sim = GossipSim::new(params, init)?;
    sim.record_snapshots();
    let record = sim.run();
    let snaps = sim.snapshots().to_vec();
    Ok((record, sim.configuration(), snaps))
}
