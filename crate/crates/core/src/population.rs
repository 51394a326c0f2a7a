//! Sequential population-model protocol.
//!
//! One uniformly random ordered pair `(u, v)` interacts per time step. The
//! initiator `u` runs the decision rule (first interaction of a phase decides
//! whether it goes undecided) or the boosting rule (undecided agents adopt
//! the partner's opinion), then the leaderless phase clock increments the
//! circularly smaller of the two clocks modulo `m = 6 * ceil(tau * log2 n)`.
//!
//! Phases are an analysis construct: the simulator flags a phase boundary
//! whenever the trailing edge of the clock distribution wraps past zero.
//! That bookkeeping never feeds back into the dynamics.

use rand::Rng;

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::params::{clock_modulus, clock_unit, ProtocolParams, TrialRecord};
use crate::rng::{trial_rng, TrialRng};

/// `a <= b` in the circular order modulo `m`: `(a <= b) XOR (|a - b| > m/2)`.
pub fn clock_leq_circular(a: u32, b: u32, m: u32) -> bool {
    // integer comparison `gap > m/2` matches the real-valued one exactly
    (a <= b) ^ (2 * a.abs_diff(b) > m)
}

/// Distance in the circular order modulo `m`: `min(|a - b|, m - |a - b|)`.
pub fn clock_dist_circular(a: u32, b: u32, m: u32) -> u32 {
    let gap = a.abs_diff(b);
    gap.min(m - gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PopulationAgentState {
    pub clock: u32,
    pub opinion: u32,
    pub decision_flag: bool,
    pub undecided: bool,
}

pub struct PopulationSim {
    agents: Vec<PopulationAgentState>,
    params: ProtocolParams,
    init: Configuration,
    /// Clock modulus `m` and granularity `g`; decision part is `clock < 2g`.
    modulus: u32,
    unit: u32,
    interaction_count: u64,
    phase_index: u64,
    rng: TrialRng,
    /// Opinion fields of all agents (undecided agents keep their last one).
    counts: Vec<u64>,
    undecided_count: u64,
    /// Clock histogram plus the trailing edge of the occupied arc, used for
    /// phase detection and the spread computation.
    hist: Vec<u64>,
    min_pos: u32,
    snapshots: Option<Vec<Configuration>>,
}

impl PopulationSim {
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
        if params.n > u32::MAX as u64 {
            return Err(Error::InvalidParams("n exceeds u32 agent ids".into()));
        }
        let mut agents = Vec::with_capacity(init.n() as usize);
        for (op, &c) in init.counts().iter().enumerate() {
            for _ in 0..c {
                agents.push(PopulationAgentState {
                    clock: 0,
                    opinion: op as u32,
                    decision_flag: false,
                    undecided: false,
                });
            }
        }
        let modulus = clock_modulus(params.tau, params.n);
        let mut hist = vec![0u64; modulus as usize];
        hist[0] = params.n;
        Ok(Self {
            agents,
            params: params.clone(),
            init: init.clone(),
            modulus,
            unit: clock_unit(params.tau, params.n),
            interaction_count: 0,
            phase_index: 0,
            rng: trial_rng(params.seed),
            counts: init.counts().to_vec(),
            undecided_count: 0,
            hist,
            min_pos: 0,
            snapshots: None,
        })
    }

    /// Record a configuration snapshot at every phase boundary.
    pub fn record_snapshots(&mut self) {
        self.snapshots = Some(Vec::new());
    }

    pub fn snapshots(&self) -> &[Configuration] {
        self.snapshots.as_deref().unwrap_or(&[])
    }

    pub fn agents(&self) -> &[PopulationAgentState] {
        &self.agents
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn clock_unit(&self) -> u32 {
        self.unit
    }

    pub fn clock_modulus(&self) -> u32 {
        self.modulus
    }

    pub fn interaction_count(&self) -> u64 {
        self.interaction_count
    }

    pub fn phase_index(&self) -> u64 {
        self.phase_index
    }

    pub fn undecided_count(&self) -> u64 {
        self.undecided_count
    }

    /// Current opinion-field counts (undecided agents included under their
    /// latent opinion).
    pub fn configuration(&self) -> Configuration {
        Configuration::new(self.counts.clone()).expect("counts sum to n")
    }

    /// All agents decided and holding the same opinion.
    pub fn is_consensus(&self) -> bool {
        self.undecided_count == 0 && self.counts[self.agents[0].opinion as usize] == self.params.n
    }

    /// One interaction of the ordered pair `(u, v)`. Only `u` updates its
    /// opinion and flags; the clock rule may advance either side.
    pub fn interact(&mut self, u: usize, v: usize) {
        let v_state = self.agents[v];
        let mut a = self.agents[u];
        let threshold = 2 * self.unit;

        if a.clock < threshold && !a.decision_flag {
            let undecided = a.opinion != v_state.opinion;
            if undecided != a.undecided {
                if undecided {
                    self.undecided_count += 1;
                } else {
                    self.undecided_count -= 1;
                }
            }
            a.undecided = undecided;
            a.decision_flag = true;
        }

        if a.clock >= threshold {
            // the literal transition table only touches the flag inside the
            // undecided branch, locking decided agents out of later phases
            if a.undecided || !self.params.literal_pseudocode {
                if a.undecided && !v_state.undecided {
                    a.undecided = false;
                    self.undecided_count -= 1;
                    self.counts[a.opinion as usize] -= 1;
                    self.counts[v_state.opinion as usize] += 1;
                    a.opinion = v_state.opinion;
                }
                a.decision_flag = false;
            }
        }

        self.agents[u] = a;

        let cu = a.clock;
        let cv = if u == v { cu } else { v_state.clock };
        if clock_leq_circular(cu, cv, self.modulus) {
            self.advance_clock(u);
        } else {
            self.advance_clock(v);
        }
    }

    fn advance_clock(&mut self, idx: usize) {
        let old = self.agents[idx].clock;
        let new = (old + 1) % self.modulus;
        self.agents[idx].clock = new;
        self.hist[old as usize] -= 1;
        self.hist[new as usize] += 1;
        if old == self.min_pos && self.hist[old as usize] == 0 {
            loop {
                self.min_pos = (self.min_pos + 1) % self.modulus;
                if self.min_pos == 0 {
                    // trailing edge completed a revolution
                    self.phase_index += 1;
                    if self.snapshots.is_some() {
                        let snap = self.configuration();
                        if let Some(snaps) = self.snapshots.as_mut() {
                            snaps.push(snap);
                        }
                    }
                }
                if self.hist[self.min_pos as usize] > 0 {
                    break;
                }
            }
        }
    }

    /// Draws an ordered pair uniformly at random and lets it interact.
    pub fn step(&mut self) {
        let n = self.params.n as usize;
        let u = self.rng.random_range(0..n);
        let mut v = self.rng.random_range(0..n);
        if !self.params.allow_self_interaction {
            while v == u {
                v = self.rng.random_range(0..n);
            }
        }
        self.interact(u, v);
        self.interaction_count += 1;
    }

    /// Largest circular clock distance over all agent pairs.
    pub fn max_clock_spread(&self) -> u32 {
        let m = self.modulus;
        let occupied: Vec<u32> = (0..m).filter(|&p| self.hist[p as usize] > 0).collect();
        if occupied.len() <= 1 {
            return 0;
        }
        let mut max_gap = occupied[0] + m - occupied[occupied.len() - 1];
        for w in occupied.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        let arc = m - max_gap;
        if 2 * arc <= m {
            // all clocks fit in an arc of length <= m/2; its endpoints realize
            // the maximum distance
            arc
        } else {
            let mut best = 0;
            for i in 0..occupied.len() {
                for j in i + 1..occupied.len() {
                    best = best.max(clock_dist_circular(occupied[i], occupied[j], m));
                }
            }
            best
        }
    }

    /// Steps until consensus or until the interaction cutoff
    /// `max_phases * m * n` is reached.
    pub fn run(&mut self) -> TrialRecord {
        let cutoff = self
            .params
            .max_phases
            .saturating_mul(self.modulus as u64)
            .saturating_mul(self.params.n);
        while !self.is_consensus() && self.interaction_count < cutoff {
            self.step();
        }
        let converged = self.is_consensus();
        let winner = converged.then(|| self.agents[0].opinion as usize);
        TrialRecord::build(
            &self.init,
            self.params.xi_eff,
            converged,
            winner,
            self.phase_index,
            self.interaction_count,
            0,
        )
    }

    /// Steps through `phases` additional phase boundaries regardless of
    /// consensus, invoking `checkpoint` every `every` interactions.
    pub fn run_phases<F: FnMut(&Self)>(&mut self, phases: u64, every: u64, mut checkpoint: F) {
        let target = self.phase_index + phases;
        while self.phase_index < target {
            self.step();
            if every > 0 && self.interaction_count.is_multiple_of(every) {
                checkpoint(self);
            }
        }
    }

    #[cfg(test)]
    fn force_agent(&mut self, idx: usize, state: PopulationAgentState) {
        self.agents[idx] = state;
        self.rebuild_bookkeeping();
    }

    #[cfg(test)]
    fn rebuild_bookkeeping(&mut self) {
        self.counts = vec![0; self.params.k as usize];
        self.undecided_count = 0;
        self.hist = vec![0; self.modulus as usize];
        for a in &self.agents {
            self.counts[a.opinion as usize] += 1;
            self.undecided_count += u64::from(a.undecided);
            self.hist[a.clock as usize] += 1;
        }
        self.min_pos = (0..self.modulus)
            .find(|&p| self.hist[p as usize] > 0)
            .unwrap();
    }
}

/// Runs one trial and returns the record, the final configuration, and the
/// per-phase snapshots.
pub fn run_population(
    params: &ProtocolParams,
    init: &Configuration,
) -> Result<(TrialRecord, Configuration, Vec<Configuration>)> {
    let mut sim = PopulationSim::new(params, init)?;
    sim.record_snapshots();
    let record = sim.run();
    let snaps = sim.snapshots().to_vec();
    Ok((record, sim.configuration(), snaps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{make_initial, InitMode};
    use proptest::prelude::*;

    fn sim(n: u64, k: u64, counts: Vec<u64>, seed: u64) -> PopulationSim {
        let params = ProtocolParams::new(n, k).with_seed(seed);
        let init = Configuration::new(counts).unwrap();
        PopulationSim::new(&params, &init).unwrap()
    }

    #[test]
    fn circular_order_examples() {
        assert!(clock_leq_circular(3, 5, 12));
        assert!(clock_leq_circular(10, 1, 12));
        assert!(!clock_leq_circular(1, 10, 12));
        // antipodal gap is not "greater than m/2"
        assert!(clock_leq_circular(3, 9, 12));
        assert!(!clock_leq_circular(9, 3, 12));
    }

    #[test]
    fn circular_distance_examples() {
        assert_eq!(clock_dist_circular(0, 0, 12), 0);
        assert_eq!(clock_dist_circular(1, 11, 12), 2);
        assert_eq!(clock_dist_circular(3, 9, 12), 6);
        assert_eq!(clock_dist_circular(11, 1, 12), 2);
    }

    #[test]
    fn decision_branch_marks_undecided_and_advances_initiator_clock() {
        let mut s = sim(2, 2, vec![1, 1], 0);
        s.interact(0, 1);
        let a = s.agents()[0];
        assert!(a.undecided);
        assert!(a.decision_flag);
        assert_eq!(a.clock, 1, "0 <= 0 circularly, so u's clock advances");
        assert_eq!(s.agents()[1].clock, 0);
        assert_eq!(s.undecided_count(), 1);
    }

    #[test]
    fn boosting_branch_adopts_from_decided_partner() {
        let mut s = sim(2, 2, vec![1, 1], 0);
        let threshold = 2 * s.clock_unit();
        s.force_agent(
            0,
            PopulationAgentState {
                clock: threshold,
                opinion: 0,
                decision_flag: true,
                undecided: true,
            },
        );
        s.interact(0, 1);
        let a = s.agents()[0];
        assert!(!a.undecided);
        assert_eq!(a.opinion, 1);
        assert!(!a.decision_flag, "flag resets in the boosting part");
        assert_eq!(s.configuration().counts(), &[0, 2]);
    }

    #[test]
    fn boosting_flag_reset_scope_differs_between_modes() {
        // decided agent in the boosting part: default mode re-arms the flag,
        // literal mode leaves it set
        for literal in [false, true] {
            let mut params = ProtocolParams::new(2, 2).with_seed(0);
            params.literal_pseudocode = literal;
            let init = Configuration::new(vec![1, 1]).unwrap();
            let mut s = PopulationSim::new(&params, &init).unwrap();
            let threshold = 2 * s.clock_unit();
            s.force_agent(
                0,
                PopulationAgentState {
                    clock: threshold,
                    opinion: 0,
                    decision_flag: true,
                    undecided: false,
                },
            );
            s.interact(0, 1);
            assert_eq!(s.agents()[0].decision_flag, literal);
        }
    }

    #[test]
    fn self_interaction_decides_the_agent() {
        let mut s = sim(2, 2, vec![1, 1], 0);
        s.force_agent(
            0,
            PopulationAgentState {
                clock: 0,
                opinion: 0,
                decision_flag: false,
                undecided: true,
            },
        );
        s.interact(0, 0);
        assert!(!s.agents()[0].undecided, "own opinion matches itself");
        assert_eq!(s.agents()[0].clock, 1);
    }

    #[test]
    fn single_agent_first_step_decides() {
        let mut s = sim(1, 1, vec![1], 3);
        s.step();
        assert!(!s.agents()[0].undecided);
        assert!(s.agents()[0].decision_flag);
        assert_eq!(s.interaction_count(), 1);
    }

    #[test]
    fn parallel_time_is_interactions_over_n() {
        let mut s = sim(16, 2, vec![8, 8], 9);
        for _ in 0..16 {
            s.step();
        }
        assert_eq!(s.interaction_count(), 16);
        let record = TrialRecord::build(&s.init, 3.0, false, None, 0, s.interaction_count(), 0);
        assert_eq!(record.parallel_time, 1.0);
    }

    #[test]
    fn fixed_seed_reproduces_the_interaction_sequence() {
        let run = |seed: u64| {
            let mut s = sim(32, 4, vec![8, 8, 8, 8], seed);
            for _ in 0..5000 {
                s.step();
            }
            (s.agents().to_vec(), s.phase_index())
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7).0, run(8).0);
    }

    #[test]
    fn unanimous_start_converges_immediately() {
        let params = ProtocolParams::new(20, 1).with_seed(0);
        let init = Configuration::new(vec![20]).unwrap();
        let mut s = PopulationSim::new(&params, &init).unwrap();
        let record = s.run();
        assert!(record.converged);
        assert_eq!(record.winner, Some(0));
        assert_eq!(record.phases, 0);
        assert_eq!(record.interactions, 0);
    }

    #[test]
    fn k1_self_interactions_never_go_undecided() {
        let mut s = sim(8, 1, vec![8], 5);
        for _ in 0..500 {
            s.step();
            assert_eq!(s.undecided_count(), 0);
        }
    }

    #[test]
    fn exactly_one_clock_advances_per_interaction() {
        let mut s = sim(16, 2, vec![8, 8], 2);
        for _ in 0..2000 {
            let before: Vec<u32> = s.agents().iter().map(|a| a.clock).collect();
            s.step();
            let after: Vec<u32> = s.agents().iter().map(|a| a.clock).collect();
            let changed: Vec<usize> = (0..before.len()).filter(|&i| before[i] != after[i]).collect();
            assert_eq!(changed.len(), 1);
            let i = changed[0];
            assert_eq!(after[i], (before[i] + 1) % s.clock_modulus());
        }
    }

    #[test]
    fn distinct_nonzero_opinions_never_increase() {
        let mut s = sim(64, 8, vec![8; 8], 13);
        let mut last = s.configuration().num_nonzero();
        for _ in 0..200_000 {
            s.step();
            let now = s.configuration().num_nonzero();
            assert!(now <= last);
            last = now;
            if s.is_consensus() {
                break;
            }
        }
    }

    #[test]
    fn decision_flag_matches_event_history() {
        // shadow model: the flag is set iff the agent executed a decision-part
        // interaction after its last boosting-part execution
        let mut s = sim(12, 3, vec![4, 4, 4], 21);
        let mut shadow = [false; 12];
        let mut pair_rng = crate::rng::trial_rng(99);
        let literal = s.params().literal_pseudocode;
        assert!(!literal);
        for _ in 0..50_000 {
            let u = pair_rng.random_range(0..12usize);
            let v = pair_rng.random_range(0..12usize);
            let threshold = 2 * s.clock_unit();
            let clock_u = s.agents()[u].clock;
            if clock_u < threshold && !s.agents()[u].decision_flag {
                shadow[u] = true;
            }
            if clock_u >= threshold {
                shadow[u] = false;
            }
            s.interact(u, v);
            assert_eq!(s.agents()[u].decision_flag, shadow[u], "agent {u}");
        }
    }

    #[test]
    fn spread_starts_at_zero_and_handles_antipodes() {
        let s = sim(4, 2, vec![2, 2], 0);
        assert_eq!(s.max_clock_spread(), 0);
        let mut s = sim(2, 2, vec![1, 1], 0);
        let m = s.clock_modulus();
        s.force_agent(
            1,
            PopulationAgentState {
                clock: m / 2,
                opinion: 1,
                decision_flag: false,
                undecided: false,
            },
        );
        assert_eq!(s.max_clock_spread(), m / 2);
    }

    #[test]
    fn one_each_converges_for_most_seeds() {
        // 128 agents, 128 opinions: all but a few seeds reach consensus well
        // within 40 * log2(n) phases
        let n = 128u64;
        let max_phases = 40 * 7;
        let mut converged = 0;
        for seed in 0..100 {
            let mut params = ProtocolParams::new(n, n).with_seed(seed);
            params.max_phases = max_phases;
            let init = make_initial(n, n, &InitMode::OneEach).unwrap();
            let mut s = PopulationSim::new(&params, &init).unwrap();
            let record = s.run();
            if record.converged {
                converged += 1;
                assert!(record.winner_significant_initially);
            }
        }
        assert!(converged >= 95, "only {converged}/100 converged");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spread_matches_brute_force(seed in 0u64..500, steps in 0usize..400) {
            let mut s = sim(10, 2, vec![5, 5], seed);
            for _ in 0..steps {
                s.step();
            }
            let m = s.clock_modulus();
            let clocks: Vec<u32> = s.agents().iter().map(|a| a.clock).collect();
            let mut brute = 0;
            for i in 0..clocks.len() {
                for j in i + 1..clocks.len() {
                    brute = brute.max(clock_dist_circular(clocks[i], clocks[j], m));
                }
            }
            prop_assert_eq!(s.max_clock_spread(), brute);
        }

        #[test]
        fn circular_distance_is_symmetric_and_zero_iff_equal(a in 0u32..24, b in 0u32..24) {
            let d = clock_dist_circular(a, b, 24);
            prop_assert_eq!(d, clock_dist_circular(b, a, 24));
            prop_assert_eq!(d == 0, a == b);
        }
    }
}
