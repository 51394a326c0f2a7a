//! Fully uniform gossip protocol: no agent knows `n` or `k`.
//!
//! Agents bootstrap a phase length themselves in four stages. In `init` a
//! two-step sampling pattern (hit your own opinion, then a different one)
//! promotes a small fraction of agents, who then infect the rest while
//! handing out alternating one-bit labels. In `count`, an agent increments a
//! counter `T` for as long as it keeps meeting its own label. In `sync` the
//! maximum counter is spread by broadcast, and everyone leaves for `run` at
//! round `1000 T`, opinions reset to their initial values. The `run` stage
//! is the synchronous undecided-state dynamics with phase length `1000 T`;
//! meeting a strictly larger `T` sends an agent back to `sync`.
//!
//! Rounds use the same snapshot semantics as the gossip module.

use rand::Rng;

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::params::{ProtocolParams, TrialRecord, UniformDiagnostics};
use crate::rng::{trial_rng, TrialRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Init,
    Count,
    Sync,
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformAgentState {
    pub stage: Stage,
    /// Counter approximating Theta(log n); non-decreasing over a run.
    pub t: u32,
    pub round: u32,
    pub opinion: u32,
    pub initial_opinion: u32,
    pub bit: bool,
    pub hit: bool,
    pub undecided: bool,
}

/// Threshold for leaving `sync` and modulus for `run`, clamped to 1 so an
/// agent whose counting stage ended at `T = 0` cannot wrap modulo zero; such
/// an agent keeps cycling decision rounds until the max-`T` broadcast reaches
/// it.
fn phase_span(t: u32) -> u32 {
    1000u32.saturating_mul(t).max(1)
}

/// Per-round aggregate of the agent vector, folded during the update pass.
#[derive(Debug, Clone, Copy)]
pub struct Survey {
    pub min_t: u32,
    pub max_t: u32,
    pub any_init_or_count: bool,
    pub all_run_at_round0: bool,
    pub any_undecided: bool,
    pub unanimous: bool,
}

impl Survey {
    fn of(agents: &[UniformAgentState]) -> Self {
        let first = agents[0];
        let mut s = Survey {
            min_t: u32::MAX,
            max_t: 0,
            any_init_or_count: false,
            all_run_at_round0: true,
            any_undecided: false,
            unanimous: true,
        };
        for a in agents {
            s.fold(a, first.opinion);
        }
        s
    }

    #[inline]
    fn fold(&mut self, a: &UniformAgentState, first_opinion: u32) {
        self.min_t = self.min_t.min(a.t);
        self.max_t = self.max_t.max(a.t);
        self.any_init_or_count |= matches!(a.stage, Stage::Init | Stage::Count);
        self.all_run_at_round0 &= a.stage == Stage::Run && a.round == 0;
        self.any_undecided |= a.undecided;
        self.unanimous &= a.opinion == first_opinion;
    }

    /// Consensus at a run-stage phase boundary: everyone running, counters
    /// agreed, decision round about to start, one opinion, nobody undecided.
    pub fn consensus(&self) -> bool {
        self.all_run_at_round0
            && self.min_t == self.max_t
            && self.unanimous
            && !self.any_undecided
    }
}

pub struct UniformSim {
    agents: Vec<UniformAgentState>,
    next: Vec<UniformAgentState>,
    draws: Vec<u32>,
    params: ProtocolParams,
    init: Configuration,
    round_count: u64,
    rng: TrialRng,
    /// Incrementally maintained aggregates. Counters move only upward per
    /// agent, so a histogram with a trailing min pointer suffices; stage
    /// transitions are rare per round and tracked where they happen.
    num_init_or_count: u32,
    num_run: u32,
    t_hist: Vec<u32>,
    min_t: u32,
    max_t: u32,
    consensus_at_boundary: bool,
    rho_round: Option<u64>,
    /// `(since_round, value)` while all agents hold the same counter.
    t_uniform_since: Option<(u64, u32)>,
    run_boundaries: u64,
}

impl UniformSim {
    pub fn new(params: &ProtocolParams, init: &Configuration) -> Result<Self> {
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
        if params.k < 2 {
            return Err(Error::InvalidParams(
                "the uniform protocol needs k >= 2 (init stage exits on differing opinions)"
                    .into(),
            ));
        }
        if params.n > u32::MAX as u64 {
            return Err(Error::InvalidParams("n exceeds u32 agent ids".into()));
        }
        let mut agents = Vec::with_capacity(init.n() as usize);
        for (op, &c) in init.counts().iter().enumerate() {
            for _ in 0..c {
                agents.push(UniformAgentState {
                    stage: Stage::Init,
                    t: 0,
                    round: 0,
                    opinion: op as u32,
                    initial_opinion: op as u32,
                    bit: false,
                    hit: false,
                    undecided: false,
                });
            }
        }
        let n = agents.len() as u32;
        let mut sim = Self {
            next: agents.clone(),
            draws: vec![0; agents.len()],
            agents,
            params: params.clone(),
            init: init.clone(),
            round_count: 0,
            rng: trial_rng(params.seed),
            num_init_or_count: n,
            num_run: 0,
            t_hist: vec![n],
            min_t: 0,
            max_t: 0,
            consensus_at_boundary: false,
            rho_round: None,
            t_uniform_since: None,
            run_boundaries: 0,
        };
        sim.observe();
        Ok(sim)
    }

    pub fn agents(&self) -> &[UniformAgentState] {
        &self.agents
    }

    pub fn round_count(&self) -> u64 {
        self.round_count
    }

    /// Full fold over the agent vector; the run loop itself relies on the
    /// incremental counters.
    pub fn survey(&self) -> Survey {
        Survey::of(&self.agents)
    }

    pub fn configuration(&self) -> Configuration {
        let mut counts = vec![0u64; self.params.k as usize];
        for a in &self.agents {
            counts[a.opinion as usize] += 1;
        }
        Configuration::new(counts).expect("counts sum to n")
    }

    fn sync_step(new: &mut UniformAgentState, vt: &UniformAgentState) {
        if new.t < vt.t {
            new.t = vt.t;
            new.round = vt.round;
            new.opinion = new.initial_opinion;
        }
        new.round += 1;
        if new.round >= phase_span(new.t) {
            new.round = 0;
            new.stage = Stage::Run;
        }
    }

    fn step_agent(me: UniformAgentState, vt: UniformAgentState) -> UniformAgentState {
        let mut new = me;
        match me.stage {
            Stage::Init => {
                if me.round.is_multiple_of(2) {
                    new.hit = me.initial_opinion == vt.initial_opinion;
                } else if me.hit && me.opinion != vt.opinion {
                    new.stage = Stage::Count;
                }
                // contagion is applied last so its bit assignment wins when
                // both triggers fire in the same round
                if vt.stage != Stage::Init {
                    new.stage = Stage::Count;
                    new.bit = !vt.bit;
                }
                new.round = me.round + 1;
            }
            Stage::Count => {
                if vt.stage != Stage::Init {
                    if me.bit == vt.bit {
                        new.t = me.t + 1;
                    } else {
                        new.stage = Stage::Sync;
                    }
                }
                new.round = me.round + 1;
            }
            Stage::Sync => {
                Self::sync_step(&mut new, &vt);
            }
            Stage::Run => {
                if me.t < vt.t {
                    new.stage = Stage::Sync;
                    Self::sync_step(&mut new, &vt);
                } else {
                    if me.t == vt.t {
                        if me.round == 0 {
                            new.undecided = me.opinion != vt.opinion;
                        } else if me.undecided && !vt.undecided {
                            new.opinion = vt.opinion;
                            new.undecided = false;
                        }
                    }
                    // the counter always advances, also against smaller-T
                    // partners, so agents holding the maximum stay in lockstep
                    new.round = (me.round + 1) % phase_span(me.t);
                }
            }
        }
        new
    }

    /// One synchronous round with explicit partner draws.
    pub fn round_with_draws(&mut self, draws: &[u32]) {
        assert_eq!(draws.len(), self.agents.len());
        for (i, &draw) in draws.iter().enumerate() {
            let me = self.agents[i];
            let new = Self::step_agent(me, self.agents[draw as usize]);
            if new.stage != me.stage {
                match (me.stage, new.stage) {
                    (Stage::Init, Stage::Count) => {}
                    (Stage::Init | Stage::Count, _) => self.num_init_or_count -= 1,
                    (Stage::Run, Stage::Sync) => self.num_run -= 1,
                    _ => {}
                }
                if new.stage == Stage::Run && me.stage != Stage::Run {
                    self.num_run += 1;
                }
            }
            if new.t != me.t {
                self.t_hist[me.t as usize] -= 1;
                if new.t as usize >= self.t_hist.len() {
                    self.t_hist.resize(new.t as usize + 1, 0);
                }
                self.t_hist[new.t as usize] += 1;
                if new.t > self.max_t {
                    self.max_t = new.t;
                }
            }
            self.next[i] = new;
        }
        std::mem::swap(&mut self.agents, &mut self.next);
        while self.t_hist[self.min_t as usize] == 0 {
            self.min_t += 1;
        }
        self.round_count += 1;
        self.observe();
    }

    /// One synchronous round; partners drawn in agent-id order.
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

    /// Diagnostics bookkeeping on the current state; O(n) work happens only
    /// at run-phase boundary candidates.
    fn observe(&mut self) {
        if self.rho_round.is_none() && self.num_init_or_count == 0 {
            self.rho_round = Some(self.round_count);
        }
        if self.min_t == self.max_t {
            match self.t_uniform_since {
                Some((_, value)) if value == self.max_t => {}
                _ => self.t_uniform_since = Some((self.round_count, self.max_t)),
            }
        } else {
            self.t_uniform_since = None;
        }
        self.consensus_at_boundary = false;
        if self.num_run == self.agents.len() as u32 && self.agents[0].round == 0 {
            let first = self.agents[0].opinion;
            let mut all_round0 = true;
            let mut unanimous = true;
            let mut any_undecided = false;
            for a in &self.agents {
                all_round0 &= a.round == 0;
                unanimous &= a.opinion == first;
                any_undecided |= a.undecided;
            }
            if all_round0 {
                self.run_boundaries += 1;
                self.consensus_at_boundary =
                    self.min_t == self.max_t && unanimous && !any_undecided;
            }
        }
    }

    pub fn diagnostics(&self) -> UniformDiagnostics {
        UniformDiagnostics {
            t_final: self.max_t,
            rho_round: self.rho_round,
            t_adoption_round: self.t_uniform_since.map(|(r, _)| r),
        }
    }

    /// Rounds until consensus at a run-stage phase boundary, or until
    /// `max_phases * 1000 * max(T, 1)` rounds have elapsed.
    pub fn run(&mut self) -> (TrialRecord, UniformDiagnostics) {
        let mut converged = false;
        loop {
            if self.consensus_at_boundary {
                converged = true;
                break;
            }
            let cutoff = self
                .params
                .max_phases
                .saturating_mul(1000)
                .saturating_mul(u64::from(self.max_t.max(1)));
            if self.round_count >= cutoff {
                break;
            }
            self.round();
        }
        let winner = converged.then(|| self.agents[0].opinion as usize);
        let mut record = TrialRecord::build(
            &self.init,
            self.params.xi_eff,
            converged,
            winner,
            self.run_boundaries.saturating_sub(1),
            0,
            self.round_count,
        );
        let diagnostics = self.diagnostics();
        record.uniform = Some(diagnostics);
        (record, diagnostics)
    }

    #[cfg(test)]
    fn force_agent(&mut self, idx: usize, state: UniformAgentState) {
        self.agents[idx] = state;
        self.num_init_or_count = 0;
        self.num_run = 0;
        self.t_hist.clear();
        for a in &self.agents {
            if matches!(a.stage, Stage::Init | Stage::Count) {
                self.num_init_or_count += 1;
            }
            if a.stage == Stage::Run {
                self.num_run += 1;
            }
            if a.t as usize >= self.t_hist.len() {
                self.t_hist.resize(a.t as usize + 1, 0);
            }
            self.t_hist[a.t as usize] += 1;
        }
        self.min_t = self.agents.iter().map(|a| a.t).min().unwrap();
        self.max_t = self.agents.iter().map(|a| a.t).max().unwrap();
    }
}

/// Runs one trial. A `k == 1` input is reported as trivially converged
/// without simulating (the init stage could never complete: no agent can
/// observe a differing opinion).
pub fn run_uniform(
    params: &ProtocolParams,
    init: &Configuration,
) -> Result<(TrialRecord, Configuration, UniformDiagnostics)> {
    if params.k == 1 {
        params.validate()?;
        let diagnostics = UniformDiagnostics {
            t_final: 0,
            rho_round: None,
            t_adoption_round: None,
        };
        let mut record = TrialRecord::build(init, params.xi_eff, true, Some(0), 0, 0, 0);
        record.uniform = Some(diagnostics);
        return Ok((record, init.clone(), diagnostics));
    }
    let mut sim = UniformSim::new(params, init)?;
    let (record, diagnostics) = sim.run();
    Ok((record, sim.configuration(), diagnostics))
}
