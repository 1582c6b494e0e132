//! Tabu search over the N4 neighborhood with per-component expirations.
//!
//! Every pair variable carries the iteration at which its tabu status
//! expires. A neighbor is tabu while any component it changes is still
//! prohibited. The best non-tabu neighbor is taken (ties broken uniformly at
//! random); if every neighbor is tabu, the one expiring first is taken.
//!
//! The iteration counter starts at 1 and runs across epochs. Epochs only
//! segment logging and the guidance schedule; the search never restarts.

use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{changed_components_into, encode, BitVector, PairIndexSet};
use crate::instance::{Instance, Time};
use crate::schedule::{
    apply_move_in_place, random_solution, Evaluator, Makespan, Move, Solution,
};

/// Generator used for every run. Seeded with `seed_from_u64`.
pub type RunRng = ChaCha8Rng;

/// Inclusive range the per-iteration tenure is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenureRange {
    pub min: u32,
    pub max: u32,
}

impl TenureRange {
    pub fn new(min: u32, max: u32) -> Self {
        assert!(min <= max, "tenure range {min}..={max} is empty");
        TenureRange { min, max }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        rng.gen_range(self.min..=self.max)
    }
}

impl Default for TenureRange {
    fn default() -> Self {
        TenureRange { min: 5, max: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunParams {
    pub nepochs: u32,
    pub niters: u64,
    pub seed: u64,
    /// Wall-clock budget; the run stops at the first iteration past it.
    pub time_limit: Option<Duration>,
}

impl RunParams {
    pub fn new(nepochs: u32, niters: u64, seed: u64) -> Self {
        RunParams {
            nepochs,
            niters,
            seed,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabuState {
    pub tabu_exp: Vec<u64>,
    pub iter: u64,
    pub epoch: u32,
}

impl TabuState {
    pub fn new(n_components: usize) -> Self {
        TabuState {
            tabu_exp: vec![0; n_components],
            iter: 1,
            epoch: 1,
        }
    }

    pub fn is_tabu(&self, component: usize) -> bool {
        self.tabu_exp[component] > self.iter
    }
}

/// Expiration of a neighbor that changes `changed`: the latest expiration
/// among them, and at least the current iteration. Tabu iff `> state.iter`.
pub fn neighbor_expiration(state: &TabuState, changed: &[usize]) -> u64 {
    changed
        .iter()
        .map(|&j| state.tabu_exp[j])
        .fold(state.iter, u64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub makespan: Makespan,
    pub expiration: u64,
}

/// Index of the next incumbent, or `None` for an empty neighborhood.
///
/// Non-tabu candidates compete on makespan; when all are tabu, the earliest
/// expiration wins. Remaining ties are broken uniformly at random, drawing
/// from `rng` only when there is more than one contender.
pub fn select_next<R: Rng + ?Sized>(
    candidates: &[Candidate],
    iter: u64,
    rng: &mut R,
) -> Option<usize> {
    if candidates.is_empty() {
        return None;
    }
    let free = candidates.iter().any(|c| c.expiration <= iter);
    let key = |c: &Candidate| {
        if free {
            (c.expiration > iter, c.makespan, 0)
        } else {
            (true, Makespan::Finite(0), c.expiration)
        }
    };
    let best = candidates.iter().map(key).min()?;
    let ties: Vec<usize> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| key(c) == best)
        .map(|(i, _)| i)
        .collect();
    if ties.len() == 1 {
        Some(ties[0])
    } else {
        Some(ties[rng.gen_range(0..ties.len())])
    }
}

/// What an observer or policy sees after the next incumbent is chosen.
#[derive(Debug)]
pub struct StepInfo<'a> {
    pub iter: u64,
    pub epoch: u32,
    /// Binary encoding of the new incumbent.
    pub bits: &'a BitVector,
    pub makespan: Time,
    /// The new incumbent beats the best solution found before this step.
    pub improved: bool,
    pub best_makespan: Time,
    pub changed: &'a [usize],
    /// Every neighbor was tabu and the earliest-expiring one was taken.
    pub fallback: bool,
    /// Expirations after this step's update (before it, for policies).
    pub tabu_exp: &'a [u64],
    pub elapsed: Duration,
}

/// Decides how long changed components stay tabu.
pub trait TenurePolicy {
    /// Called once the next incumbent is known, before expirations are set.
    fn on_selected(&mut self, _step: &StepInfo<'_>) {}

    /// Expiration for `component`, which now has value `new_bit`.
    fn expiration(&self, component: usize, new_bit: bool, iter: u64, tenure: u32) -> u64;

    fn on_epoch_end(&mut self, _epoch: u32, _elapsed: Duration) {}

    /// Guidance parameter in effect, if the policy has one.
    fn theta(&self) -> Option<f64> {
        None
    }
}

/// Plain tabu search: every changed component is prohibited for the drawn
/// tenure.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatTenure;

impl TenurePolicy for FlatTenure {
    fn expiration(&self, _component: usize, _new_bit: bool, iter: u64, tenure: u32) -> u64 {
        iter + tenure as u64
    }
}

/// Receives every step and epoch boundary of a run.
pub trait SearchObserver {
    fn on_start(&mut self, _bits: &BitVector, _makespan: Time) {}
    fn on_step(&mut self, _step: &StepInfo<'_>) {}
    fn on_epoch_end(&mut self, _record: &EpochRecord) {}
}

impl SearchObserver for () {}

impl<A: SearchObserver, B: SearchObserver> SearchObserver for (A, B) {
    fn on_start(&mut self, bits: &BitVector, makespan: Time) {
        self.0.on_start(bits, makespan);
        self.1.on_start(bits, makespan);
    }
    fn on_step(&mut self, step: &StepInfo<'_>) {
        self.0.on_step(step);
        self.1.on_step(step);
    }
    fn on_epoch_end(&mut self, record: &EpochRecord) {
        self.0.on_epoch_end(record);
        self.1.on_epoch_end(record);
    }
}

/// Per-epoch summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    /// Iterations completed since the start of the run.
    pub iterations: u64,
    pub best_makespan: Time,
    /// Guidance parameter used during the epoch (guided runs only).
    pub theta: Option<f64>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Moved { makespan: Time, improved: bool },
    /// No feasible neighbor exists.
    Stuck,
}

/// Search state of one run: incumbent, best solution, tabu memory and RNG.
pub struct TabuSearch<'a> {
    idx: &'a PairIndexSet,
    evaluator: Evaluator,
    current: Solution,
    makespan: Time,
    bits: BitVector,
    best: Solution,
    best_makespan: Time,
    state: TabuState,
    tenure: TenureRange,
    rng: RunRng,
    started: Instant,
    moves: Vec<Move>,
    candidates: Vec<Candidate>,
    changed: Vec<usize>,
    changed_at: Vec<(usize, usize)>,
    scratch: Vec<usize>,
    kept: Vec<Move>,
    path: Vec<usize>,
    held: Vec<usize>,
}

impl<'a> TabuSearch<'a> {
    /// Seeds the RNG and draws the random initial solution from it.
    pub fn new(inst: &'a Instance, idx: &'a PairIndexSet, tenure: TenureRange, seed: u64) -> Self {
        let mut rng = RunRng::seed_from_u64(seed);
        let initial = random_solution(inst, &mut rng);
        Self::from_solution(inst, idx, tenure, initial, rng)
    }

    pub fn from_solution(
        inst: &'a Instance,
        idx: &'a PairIndexSet,
        tenure: TenureRange,
        initial: Solution,
        rng: RunRng,
    ) -> Self {
        let mut evaluator = Evaluator::new(inst);
        evaluator.load(&initial);
        let makespan = evaluator
            .loaded_makespan()
            .expect("initial solution must be feasible");
        let bits = encode(&initial, idx);
        TabuSearch {
            idx,
            evaluator,
            best_makespan: makespan,
            best: initial.clone(),
            current: initial,
            makespan,
            bits,
            state: TabuState::new(idx.len()),
            tenure,
            rng,
            started: Instant::now(),
            moves: Vec::new(),
            candidates: Vec::new(),
            changed: Vec::new(),
            changed_at: Vec::new(),
            scratch: Vec::new(),
            kept: Vec::new(),
            path: Vec::new(),
            held: Vec::new(),
        }
    }

    pub fn current(&self) -> &Solution {
        &self.current
    }

    pub fn current_makespan(&self) -> Time {
        self.makespan
    }

    pub fn bits(&self) -> &BitVector {
        &self.bits
    }

    pub fn best(&self) -> &Solution {
        &self.best
    }

    pub fn best_makespan(&self) -> Time {
        self.best_makespan
    }

    pub fn state(&self) -> &TabuState {
        &self.state
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    /// One tabu iteration.
    fn push_candidate(&mut self, mv: Move, makespan: Makespan, expiration: u64) {
        let start = self.changed.len();
        self.changed.extend_from_slice(&self.scratch);
        self.changed_at.push((start, self.changed.len()));
        self.candidates.push(Candidate { makespan, expiration });
        self.kept.push(mv);
    }

    pub fn step(
        &mut self,
        policy: &mut dyn TenurePolicy,
        observer: &mut dyn SearchObserver,
    ) -> StepOutcome {
        let iter = self.state.iter;
        let tenure = self.tenure.draw(&mut self.rng);

        self.evaluator.loaded_n4_moves(&mut self.path, &mut self.moves);
        self.candidates.clear();
        self.changed.clear();
        self.changed_at.clear();
        self.kept.clear();
        self.held.clear();
        // A tabu neighbor can only be chosen when no non-tabu neighbor is
        // feasible, and a neighbor worse than the best non-tabu one so far
        // can't be chosen at all.
        let mut limit = Time::MAX;
        for k in 0..self.moves.len() {
            let mv = &self.moves[k];
            changed_components_into(mv, &self.current, self.idx, &mut self.scratch);
            let expiration = neighbor_expiration(&self.state, &self.scratch);
            if expiration > iter {
                self.held.push(k);
                continue;
            }
            let Some(Makespan::Finite(t)) =
                self.evaluator.evaluate_move_within(&self.current, mv, limit)
            else {
                continue;
            };
            limit = limit.min(t);
            let mv = *mv;
            self.push_candidate(mv, Makespan::Finite(t), expiration);
        }
        if self.candidates.is_empty() {
            for i in 0..self.held.len() {
                let mv = self.moves[self.held[i]];
                let makespan = self.evaluator.evaluate_move(&self.current, &mv);
                if makespan.is_feasible() {
                    changed_components_into(&mv, &self.current, self.idx, &mut self.scratch);
                    let expiration = neighbor_expiration(&self.state, &self.scratch);
                    self.push_candidate(mv, makespan, expiration);
                }
            }
        }

        let Some(pick) = select_next(&self.candidates, iter, &mut self.rng) else {
            return StepOutcome::Stuck;
        };
        let fallback = self.candidates[pick].expiration > iter;
        let mv = self.kept[pick];
        let (a, b) = self.changed_at[pick];

        apply_move_in_place(&mut self.current, &mv).expect("generated move is valid");
        self.evaluator.load(&self.current);
        self.makespan = self
            .evaluator
            .loaded_makespan()
            .expect("selected neighbor is feasible");
        debug_assert_eq!(
            Makespan::Finite(self.makespan),
            self.candidates[pick].makespan
        );
        for &j in &self.changed[a..b] {
            self.bits.flip(j);
        }
        let makespan = self.makespan;
        let improved = makespan < self.best_makespan;
        let best_after = makespan.min(self.best_makespan);
        let elapsed = self.started.elapsed();

        policy.on_selected(&StepInfo {
            iter,
            epoch: self.state.epoch,
            bits: &self.bits,
            makespan,
            improved,
            best_makespan: best_after,
            changed: &self.changed[a..b],
            fallback,
            tabu_exp: &self.state.tabu_exp,
            elapsed,
        });
        for &j in &self.changed[a..b] {
            self.state.tabu_exp[j] = policy.expiration(j, self.bits.get(j), iter, tenure);
        }
        if improved {
            self.best = self.current.clone();
            self.best_makespan = makespan;
        }
        observer.on_step(&StepInfo {
            iter,
            epoch: self.state.epoch,
            bits: &self.bits,
            makespan,
            improved,
            best_makespan: self.best_makespan,
            changed: &self.changed[a..b],
            fallback,
            tabu_exp: &self.state.tabu_exp,
            elapsed,
        });
        self.state.iter += 1;
        StepOutcome::Moved { makespan, improved }
    }
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub best: Solution,
    pub best_makespan: Time,
    pub log: Vec<EpochRecord>,
    /// The neighborhood became empty before the iteration budget was spent.
    pub stopped_early: bool,
}

/// Drives `nepochs x niters` iterations (or until the time limit) with the
/// given policy, logging one record per epoch.
pub fn run_with_policy(
    inst: &Instance,
    idx: &PairIndexSet,
    params: &RunParams,
    tenure: TenureRange,
    policy: &mut dyn TenurePolicy,
    observer: &mut dyn SearchObserver,
) -> RunOutcome {
    let mut search = TabuSearch::new(inst, idx, tenure, params.seed);
    observer.on_start(&search.bits, search.current_makespan());
    let mut log = Vec::new();
    let mut stopped_early = false;
    let out_of_time = |s: &TabuSearch<'_>| params.time_limit.is_some_and(|t| s.elapsed() >= t);

    'epochs: for epoch in 1..=params.nepochs {
        search.state.epoch = epoch;
        let theta = policy.theta();
        let mut done = false;
        for _ in 0..params.niters {
            if out_of_time(&search) {
                done = true;
                break;
            }
            if search.step(policy, observer) == StepOutcome::Stuck {
                stopped_early = true;
                done = true;
                break;
            }
        }
        let elapsed = search.elapsed();
        let record = EpochRecord {
            epoch,
            iterations: search.state.iter - 1,
            best_makespan: search.best_makespan,
            theta,
            elapsed_ms: elapsed.as_millis() as u64,
        };
        observer.on_epoch_end(&record);
        log.push(record);
        if done || out_of_time(&search) {
            break 'epochs;
        }
        policy.on_epoch_end(epoch, elapsed);
    }
    RunOutcome {
        best: search.best,
        best_makespan: search.best_makespan,
        log,
        stopped_early,
    }
}

/// Plain tabu search.
pub fn run_tabu(
    inst: &Instance,
    idx: &PairIndexSet,
    params: &RunParams,
    tenure: TenureRange,
    observer: &mut dyn SearchObserver,
) -> RunOutcome {
    run_with_policy(inst, idx, params, tenure, &mut FlatTenure, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::parse_standard;

    fn cand(makespan: Time, expiration: u64) -> Candidate {
        Candidate {
            makespan: Makespan::Finite(makespan),
            expiration,
        }
    }

    #[test]
    fn expiration_examples() {
        let mut s = TabuState::new(4);
        s.iter = 20;
        assert_eq!(neighbor_expiration(&s, &[0, 1]), 20);
        s.tabu_exp[2] = 27;
        assert_eq!(neighbor_expiration(&s, &[2]), 27);
        s.tabu_exp[1] = 23;
        s.tabu_exp[3] = 29;
        assert_eq!(neighbor_expiration(&s, &[1, 3]), 29);
        assert!(s.is_tabu(3));
        assert!(!s.is_tabu(0));
    }

    #[test]
    fn select_prefers_non_tabu() {
        let mut rng = RunRng::seed_from_u64(0);
        // the non-tabu neighbor wins even with a worse makespan
        assert_eq!(select_next(&[cand(10, 15), cand(50, 5)], 10, &mut rng), Some(1));
        assert_eq!(select_next(&[cand(10, 12), cand(5, 15)], 10, &mut rng), Some(0));
        assert_eq!(select_next(&[cand(9, 10), cand(8, 10)], 10, &mut rng), Some(1));
        assert_eq!(select_next(&[], 10, &mut rng), None);
    }

    #[test]
    fn select_breaks_ties_uniformly() {
        let mut rng = RunRng::seed_from_u64(42);
        let cands = [cand(7, 0), cand(7, 0), cand(9, 0)];
        let trials = 10_000;
        let first = (0..trials)
            .filter(|_| select_next(&cands, 1, &mut rng) == Some(0))
            .count();
        let freq = first as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.02, "frequency {freq}");
    }

    #[test]
    fn single_operation_is_stuck() {
        let inst = parse_standard("1 1\n0 5").unwrap();
        let idx = PairIndexSet::build(&inst);
        let out = run_tabu(&inst, &idx, &RunParams::new(3, 10, 1), TenureRange::default(), &mut ());
        assert!(out.stopped_early);
        assert_eq!(out.best_makespan, 5);
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].iterations, 0);
    }

    #[test]
    fn zero_iterations_returns_initial() {
        let inst = parse_standard("3 3\n0 2 1 3 2 1\n2 2 0 4 1 1\n1 5 2 2 0 3").unwrap();
        let idx = PairIndexSet::build(&inst);
        let out = run_tabu(&inst, &idx, &RunParams::new(1, 0, 8), TenureRange::default(), &mut ());
        let mut rng = RunRng::seed_from_u64(8);
        let initial = random_solution(&inst, &mut rng);
        assert_eq!(out.best, initial);
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].iterations, 0);
    }

    /// Two operations on one machine: every iteration the only move is the
    /// swap, and it is always taken (through the fallback when tabu).
    #[test]
    fn two_jobs_one_machine_trace() {
        let inst = parse_standard("2 1\n0 3\n0 4").unwrap();
        let idx = PairIndexSet::build(&inst);

        struct Trace(Vec<(bool, bool, u64)>);
        impl SearchObserver for Trace {
            fn on_step(&mut self, s: &StepInfo<'_>) {
                self.0.push((s.bits.get(0), s.fallback, s.tabu_exp[0]));
            }
        }
        let mut trace = Trace(Vec::new());
        let mut search = TabuSearch::new(&inst, &idx, TenureRange::new(3, 3), 5);
        let first = search.bits().get(0);
        for _ in 0..20 {
            assert!(matches!(search.step(&mut FlatTenure, &mut trace), StepOutcome::Moved { .. }));
        }
        // hand simulation: the bit alternates, expiration is iter + 3, and the
        // swap is tabu at every iteration after the first
        for (k, &(bit, fallback, exp)) in trace.0.iter().enumerate() {
            let iter = k as u64 + 1;
            assert_eq!(bit, if k % 2 == 0 { !first } else { first });
            assert_eq!(fallback, k > 0);
            assert_eq!(exp, iter + 3);
        }
        assert_eq!(search.best_makespan(), 7);
    }

    #[test]
    fn runs_are_reproducible() {
        let inst = parse_standard("3 3\n0 2 1 3 2 1\n2 2 0 4 1 1\n1 5 2 2 0 3").unwrap();
        let idx = PairIndexSet::build(&inst);
        struct Makespans(Vec<Time>);
        impl SearchObserver for Makespans {
            fn on_step(&mut self, s: &StepInfo<'_>) {
                self.0.push(s.best_makespan);
            }
        }
        let params = RunParams::new(2, 200, 17);
        let mut a = Makespans(Vec::new());
        let mut b = Makespans(Vec::new());
        let ra = run_tabu(&inst, &idx, &params, TenureRange::default(), &mut a);
        let rb = run_tabu(&inst, &idx, &params, TenureRange::default(), &mut b);
        assert_eq!(a.0, b.0);
        assert_eq!(ra.best, rb.best);
        assert!(a.0.windows(2).all(|w| w[1] <= w[0]));
    }
}
