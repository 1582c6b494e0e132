//! Disjunctive graph evaluation, critical blocks and the N4 neighborhood.

use rand::Rng;
use thiserror::Error;

use crate::instance::{Instance, Time};

const NONE: u32 = u32::MAX;

/// Makespan of a selection of machine orders. `Infeasible` (a cyclic
/// selection) orders above every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Makespan {
    Finite(Time),
    Infeasible,
}

impl Makespan {
    pub fn finite(self) -> Option<Time> {
        match self {
            Makespan::Finite(t) => Some(t),
            Makespan::Infeasible => None,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, Makespan::Finite(_))
    }
}

impl From<Option<Time>> for Makespan {
    fn from(v: Option<Time>) -> Self {
        v.map_or(Makespan::Infeasible, Makespan::Finite)
    }
}

/// Per-machine processing orders. Sequences hold operation indices.
#[derive(Debug, Clone)]
pub struct Solution {
    sequences: Vec<Vec<usize>>,
    cached: Option<Makespan>,
}

impl PartialEq for Solution {
    fn eq(&self, other: &Self) -> bool {
        self.sequences == other.sequences
    }
}

impl Eq for Solution {}

impl Solution {
    pub fn new(sequences: Vec<Vec<usize>>) -> Self {
        Solution {
            sequences,
            cached: None,
        }
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    pub fn sequence(&self, machine: usize) -> &[usize] {
        &self.sequences[machine]
    }

    pub fn cached_makespan(&self) -> Option<Makespan> {
        self.cached
    }

    /// Evaluates the solution and stores the result in the cache.
    pub fn makespan(&mut self, inst: &Instance) -> Makespan {
        if let Some(m) = self.cached {
            return m;
        }
        let m = evaluate(inst, self).map(|t| t.makespan).into();
        self.cached = Some(m);
        m
    }

    /// Position of every operation inside its machine sequence.
    pub fn positions(&self, n_ops: usize) -> Vec<usize> {
        let mut pos = vec![0; n_ops];
        for seq in &self.sequences {
            for (p, &o) in seq.iter().enumerate() {
                pos[o] = p;
            }
        }
        pos
    }

    /// True if every machine sequence is a permutation of that machine's
    /// operations.
    pub fn is_complete_for(&self, inst: &Instance) -> bool {
        if self.sequences.len() != inst.n_machines() {
            return false;
        }
        self.sequences.iter().enumerate().all(|(m, seq)| {
            let mut a = seq.clone();
            a.sort_unstable();
            a == inst.machine_ops(m)
        })
    }
}

/// Earliest start times of a feasible solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleTimes {
    pub start: Vec<Time>,
    pub makespan: Time,
}

/// Longest-path evaluation with reusable buffers.
///
/// `load` fixes and evaluates a current solution; `evaluate_move` then scores
/// a single move against it without cloning the solution. Only the moved
/// segment and its descendants are recomputed: no other start time can change.
#[derive(Debug, Clone)]
pub struct Evaluator {
    dur: Vec<Time>,
    job_pred: Vec<u32>,
    job_succ: Vec<u32>,
    mach_pred: Vec<u32>,
    mach_succ: Vec<u32>,
    work_pred: Vec<u32>,
    work_succ: Vec<u32>,
    machine: Vec<u32>,
    mach_pos: Vec<u32>,
    indeg: Vec<u8>,
    queue: Vec<u32>,
    head: Vec<Time>,
    segment: Vec<usize>,
    lower_bound: Time,
    // state of the loaded solution
    base_ok: bool,
    base_makespan: Time,
    base_head: Vec<Time>,
    base_end: Vec<Time>,
    base_topo: Vec<u32>,
    topo_pos: Vec<u32>,
    prefix_end: Vec<Time>,
    mark: Vec<u32>,
    stamp: u32,
}

impl Evaluator {
    pub fn new(inst: &Instance) -> Self {
        let n = inst.n_ops();
        let to_u32 = |o: Option<usize>| o.map_or(NONE, |v| v as u32);
        Evaluator {
            dur: inst.ops().iter().map(|o| o.duration).collect(),
            job_pred: (0..n).map(|o| to_u32(inst.job_pred(o))).collect(),
            job_succ: (0..n).map(|o| to_u32(inst.job_succ(o))).collect(),
            mach_pred: vec![NONE; n],
            mach_succ: vec![NONE; n],
            work_pred: vec![NONE; n],
            work_succ: vec![NONE; n],
            machine: inst.ops().iter().map(|o| o.machine as u32).collect(),
            mach_pos: vec![0; n],
            indeg: vec![0; n],
            queue: Vec::with_capacity(n),
            head: vec![0; n],
            segment: Vec::new(),
            lower_bound: inst.lower_bound(),
            base_ok: false,
            base_makespan: 0,
            base_head: vec![0; n],
            base_end: vec![0; n],
            base_topo: Vec::with_capacity(n),
            topo_pos: vec![0; n],
            prefix_end: vec![0; n + 1],
            mark: vec![0; n],
            stamp: 0,
        }
    }

    /// Makes `sol` the current solution for `evaluate_move` and evaluates it.
    pub fn load(&mut self, sol: &Solution) {
        self.mach_pred.fill(NONE);
        self.mach_succ.fill(NONE);
        for seq in sol.sequences() {
            for w in seq.windows(2) {
                self.mach_succ[w[0]] = w[1] as u32;
                self.mach_pred[w[1]] = w[0] as u32;
            }
            for (k, &op) in seq.iter().enumerate() {
                self.mach_pos[op] = k as u32;
            }
        }
        self.work_pred.copy_from_slice(&self.mach_pred);
        self.work_succ.copy_from_slice(&self.mach_succ);
        match self.longest_paths() {
            Some(cmax) => {
                self.base_ok = true;
                self.base_makespan = cmax;
                self.base_head.copy_from_slice(&self.head);
                self.base_topo.clear();
                self.base_topo.extend_from_slice(&self.queue);
                for (k, &v) in self.base_topo.iter().enumerate() {
                    self.topo_pos[v as usize] = k as u32;
                    let end = self.head[v as usize] + self.dur[v as usize];
                    self.base_end[v as usize] = end;
                    self.prefix_end[k + 1] = self.prefix_end[k].max(end);
                }
            }
            None => self.base_ok = false,
        }
    }

    /// Evaluation of the loaded solution.
    pub fn evaluate_loaded(&self) -> Option<ScheduleTimes> {
        self.base_ok.then(|| ScheduleTimes {
            start: self.base_head.clone(),
            makespan: self.base_makespan,
        })
    }

    /// Makespan of the loaded solution, `None` if it is cyclic.
    pub fn loaded_makespan(&self) -> Option<Time> {
        self.base_ok.then_some(self.base_makespan)
    }

    /// Same path as [`critical_path`] for the loaded solution, written to
    /// `path`.
    ///
    /// # Panics
    /// If the loaded solution is cyclic.
    pub fn loaded_critical_path(&self, path: &mut Vec<usize>) {
        assert!(self.base_ok, "loaded solution is cyclic");
        path.clear();
        let Some(mut cur) = self.base_end.iter().position(|&e| e == self.base_makespan) else {
            return;
        };
        path.push(cur);
        while self.base_head[cur] > 0 {
            let s = self.base_head[cur];
            let tight = |p: u32| p != NONE && self.base_end[p as usize] == s;
            let (jp, mp) = (self.job_pred[cur], self.mach_pred[cur]);
            cur = if tight(jp) {
                jp as usize
            } else if tight(mp) {
                mp as usize
            } else {
                panic!("a positive start time has a tight predecessor");
            };
            path.push(cur);
        }
        path.reverse();
    }

    /// `n4_moves(&critical_blocks(..))` for the loaded solution, without
    /// allocating. `path` is scratch space.
    pub fn loaded_n4_moves(&self, path: &mut Vec<usize>, moves: &mut Vec<Move>) {
        self.loaded_critical_path(path);
        moves.clear();
        let mut a = 0;
        for b in 1..=path.len() {
            let joined = b < path.len() && {
                let (prev, op) = (path[b - 1], path[b]);
                self.machine[prev] == self.machine[op] && self.mach_pos[prev] + 1 == self.mach_pos[op]
            };
            if !joined {
                let op = path[a];
                let first_pos = self.mach_pos[op] as usize;
                push_block_moves(self.machine[op] as usize, first_pos, &path[a..b], moves);
                a = b;
            }
        }
    }

    /// Loads and evaluates `sol`.
    pub fn evaluate(&mut self, sol: &Solution) -> Option<ScheduleTimes> {
        self.load(sol);
        self.evaluate_loaded()
    }

    /// Makespan of the neighbor obtained by applying `mv` to the loaded
    /// solution `sol`. The loaded state is left untouched.
    pub fn evaluate_move(&mut self, sol: &Solution, mv: &Move) -> Makespan {
        self.evaluate_move_within(sol, mv, Time::MAX)
            .expect("no finite makespan exceeds Time::MAX")
    }

    /// Like [`Evaluator::evaluate_move`], but gives up with `None` as soon as
    /// the neighbor's makespan is known to exceed `limit`.
    pub fn evaluate_move_within(
        &mut self,
        sol: &Solution,
        mv: &Move,
        limit: Time,
    ) -> Option<Makespan> {
        let seq = sol.sequence(mv.machine);
        let (lo, hi) = (mv.from_pos.min(mv.to_pos), mv.from_pos.max(mv.to_pos));
        self.segment.clear();
        self.segment.extend_from_slice(&seq[lo..=hi]);
        if mv.from_pos < mv.to_pos {
            self.segment.rotate_left(1);
        } else {
            self.segment.rotate_right(1);
        }
        let before = if lo > 0 { seq[lo - 1] as u32 } else { NONE };
        let after = seq.get(hi + 1).map_or(NONE, |&o| o as u32);
        let len = self.segment.len();
        for i in 0..len {
            let op = self.segment[i];
            self.work_pred[op] = if i == 0 {
                before
            } else {
                self.segment[i - 1] as u32
            };
            self.work_succ[op] = if i + 1 == len {
                after
            } else {
                self.segment[i + 1] as u32
            };
        }
        if before != NONE {
            self.work_succ[before as usize] = self.segment[0] as u32;
        }
        if after != NONE {
            self.work_pred[after as usize] = self.segment[len - 1] as u32;
        }

        let result = if self.base_ok {
            self.affected_paths(&seq[lo..=hi], limit)
        } else {
            Some(self.longest_paths().into())
        };

        for &op in &seq[lo..=hi] {
            self.work_pred[op] = self.mach_pred[op];
            self.work_succ[op] = self.mach_succ[op];
        }
        if before != NONE {
            self.work_succ[before as usize] = self.mach_succ[before as usize];
        }
        if after != NONE {
            self.work_pred[after as usize] = self.mach_pred[after as usize];
        }
        result
    }

    /// Recomputes start times for the ops of `moved` and everything reachable
    /// from them, keeping the loaded start times elsewhere.
    ///
    /// Arcs leaving the moved set reach the same ops before and after the
    /// move, so the reachable set can be marked by one pass over the loaded
    /// topological order.
    ///
    /// Returns `None` once a completion time above `limit` is found.
    fn affected_paths(&mut self, moved: &[usize], limit: Time) -> Option<Makespan> {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.mark.fill(0);
            self.stamp = 1;
        }
        let stamp = self.stamp;
        let mut first = u32::MAX;
        for &op in moved {
            self.mark[op] = stamp;
            first = first.min(self.topo_pos[op]);
        }
        let first = first as usize;
        let mut cmax = self.prefix_end[first];
        let n_affected = self.mark_affected(first, stamp, &mut cmax);
        if cmax > limit {
            return None;
        }

        // Kahn's algorithm on the affected ops; unaffected preds contributed
        // their loaded completion times above.
        let (dur, mark, head, indeg) = (&self.dur[..], &self.mark[..], &mut self.head[..], &mut self.indeg[..]);
        let (job_succ, work_succ) = (&self.job_succ[..], &self.work_succ[..]);
        let queue = &mut self.queue;
        let mut qi = 0;
        while qi < queue.len() {
            let u = queue[qi] as usize;
            qi += 1;
            let end = head[u] + dur[u];
            if end > limit {
                return None;
            }
            cmax = cmax.max(end);
            for s in [job_succ[u], work_succ[u]] {
                if s != NONE && mark[s as usize] == stamp {
                    let s = s as usize;
                    head[s] = head[s].max(end);
                    indeg[s] -= 1;
                    if indeg[s] == 0 {
                        queue.push(s as u32);
                    }
                }
            }
        }
        if self.queue.len() < n_affected {
            return Some(Makespan::Infeasible);
        }
        Some(Makespan::Finite(cmax))
    }

    /// Marks everything reachable from the ops stamped so far, scanning the
    /// loaded order from position `first`, and seeds the queue with the
    /// affected ops that have no affected pred. Unaffected completion times
    /// are folded into `cmax`. Returns the number of affected ops.
    ///
    /// Preds of an op outside the moved set precede it in the loaded order,
    /// so their marks are final when it is reached.
    fn mark_affected(&mut self, first: usize, stamp: u32, cmax: &mut Time) -> usize {
        let (job_pred, work_pred) = (&self.job_pred[..], &self.work_pred[..]);
        let (mark, base_end) = (&mut self.mark[..], &self.base_end[..]);
        let (head, indeg) = (&mut self.head[..], &mut self.indeg[..]);
        let queue = &mut self.queue;
        queue.clear();
        let mut n_affected = 0;
        let mut unaffected_max = *cmax;
        for &v in &self.base_topo[first..] {
            let v = v as usize;
            let (jp, wp) = (job_pred[v], work_pred[v]);
            let mut d = 0u8;
            let mut start = 0;
            if jp != NONE {
                if mark[jp as usize] == stamp {
                    d += 1;
                } else {
                    start = base_end[jp as usize];
                }
            }
            if wp != NONE {
                if mark[wp as usize] == stamp {
                    d += 1;
                } else {
                    start = start.max(base_end[wp as usize]);
                }
            }
            if d > 0 || mark[v] == stamp {
                mark[v] = stamp;
                n_affected += 1;
                indeg[v] = d;
                head[v] = start;
                if d == 0 {
                    queue.push(v as u32);
                }
            } else {
                unaffected_max = unaffected_max.max(base_end[v]);
            }
        }
        *cmax = unaffected_max;
        n_affected
    }

    /// Kahn's algorithm over job arcs plus the working machine arcs. Leaves
    /// earliest start times in `head` and the topological order in `queue`;
    /// `None` if the graph has a cycle.
    fn longest_paths(&mut self) -> Option<Time> {
        let n = self.dur.len();
        self.queue.clear();
        for v in 0..n {
            let d = (self.job_pred[v] != NONE) as u8 + (self.work_pred[v] != NONE) as u8;
            self.indeg[v] = d;
            self.head[v] = 0;
            if d == 0 {
                self.queue.push(v as u32);
            }
        }
        let mut cmax = 0;
        let mut qi = 0;
        while qi < self.queue.len() {
            let u = self.queue[qi] as usize;
            qi += 1;
            let end = self.head[u] + self.dur[u];
            cmax = cmax.max(end);
            for s in [self.job_succ[u], self.work_succ[u]] {
                if s != NONE {
                    let s = s as usize;
                    if self.head[s] < end {
                        self.head[s] = end;
                    }
                    self.indeg[s] -= 1;
                    if self.indeg[s] == 0 {
                        self.queue.push(s as u32);
                    }
                }
            }
        }
        if self.queue.len() < n {
            return None;
        }
        debug_assert!(cmax >= self.lower_bound, "makespan below the lower bound");
        Some(cmax)
    }
}

/// Earliest start times and makespan, or `None` when the machine orders
/// together with the job chains contain a cycle.
pub fn evaluate(inst: &Instance, sol: &Solution) -> Option<ScheduleTimes> {
    Evaluator::new(inst).evaluate(sol)
}

/// A maximal run of consecutive same-machine operations on a critical path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticalBlock {
    pub machine: usize,
    /// Position of the first block operation in the machine sequence.
    pub first_pos: usize,
    pub ops: Vec<usize>,
}

/// Reconstructs one critical path and splits it into blocks.
///
/// The path ends at the lowest-index operation finishing at the makespan and
/// is traced backwards through tight arcs, preferring the job predecessor
/// over the machine predecessor.
pub fn critical_path(inst: &Instance, times: &ScheduleTimes, sol: &Solution) -> Vec<usize> {
    let n = inst.n_ops();
    if n == 0 {
        return Vec::new();
    }
    let mut mach_pred = vec![None; n];
    for seq in sol.sequences() {
        for w in seq.windows(2) {
            mach_pred[w[1]] = Some(w[0]);
        }
    }
    let end = |o: usize| times.start[o] + inst.duration(o);
    let mut cur = (0..n)
        .find(|&o| end(o) == times.makespan)
        .expect("some operation finishes at the makespan");
    let mut path = vec![cur];
    while times.start[cur] > 0 {
        let s = times.start[cur];
        let next = inst
            .job_pred(cur)
            .filter(|&p| end(p) == s)
            .or_else(|| mach_pred[cur].filter(|&p| end(p) == s))
            .expect("a positive start time has a tight predecessor");
        path.push(next);
        cur = next;
    }
    path.reverse();
    path
}

pub fn critical_blocks(inst: &Instance, times: &ScheduleTimes, sol: &Solution) -> Vec<CriticalBlock> {
    let path = critical_path(inst, times, sol);
    let pos = sol.positions(inst.n_ops());
    let mut blocks: Vec<CriticalBlock> = Vec::new();
    for (i, &op) in path.iter().enumerate() {
        let machine = inst.op(op).machine;
        let joined = i > 0 && {
            let prev = path[i - 1];
            inst.op(prev).machine == machine && pos[prev] + 1 == pos[op]
        };
        match blocks.last_mut() {
            Some(b) if joined => b.ops.push(op),
            _ => blocks.push(CriticalBlock {
                machine,
                first_pos: pos[op],
                ops: vec![op],
            }),
        }
    }
    blocks
}

/// Relocation of one operation inside its machine sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Move {
    pub machine: usize,
    pub op: usize,
    pub from_pos: usize,
    pub to_pos: usize,
}

/// N4 moves: every block operation except the first may move to the block's
/// front, every one except the last to its back. A two-operation block yields
/// a single swap.
pub fn n4_moves(blocks: &[CriticalBlock]) -> Vec<Move> {
    let mut moves = Vec::new();
    for b in blocks {
        push_block_moves(b.machine, b.first_pos, &b.ops, &mut moves);
    }
    moves
}

fn push_block_moves(machine: usize, first: usize, ops: &[usize], moves: &mut Vec<Move>) {
    if ops.len() < 2 {
        return;
    }
    let last = first + ops.len() - 1;
    for (i, &op) in ops.iter().enumerate().skip(1) {
        moves.push(Move {
            machine,
            op,
            from_pos: first + i,
            to_pos: first,
        });
    }
    // for two operations "first to back" is the same swap as "last to front"
    let to_back = if ops.len() == 2 { 0 } else { ops.len() - 1 };
    for (i, &op) in ops.iter().enumerate().take(to_back) {
        moves.push(Move {
            machine,
            op,
            from_pos: first + i,
            to_pos: last,
        });
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MoveError {
    #[error("machine {0} does not exist")]
    NoSuchMachine(usize),
    #[error("position {pos} out of range for a sequence of length {len}")]
    OutOfRange { pos: usize, len: usize },
    #[error("operation {op} is not at position {pos}")]
    WrongOperation { op: usize, pos: usize },
}

fn check_move(sol: &Solution, mv: &Move) -> Result<(), MoveError> {
    let seq = sol
        .sequences
        .get(mv.machine)
        .ok_or(MoveError::NoSuchMachine(mv.machine))?;
    for pos in [mv.from_pos, mv.to_pos] {
        if pos >= seq.len() {
            return Err(MoveError::OutOfRange {
                pos,
                len: seq.len(),
            });
        }
    }
    if seq[mv.from_pos] != mv.op {
        return Err(MoveError::WrongOperation {
            op: mv.op,
            pos: mv.from_pos,
        });
    }
    Ok(())
}

/// Applies `mv` in place and clears the cached makespan.
pub fn apply_move_in_place(sol: &mut Solution, mv: &Move) -> Result<(), MoveError> {
    check_move(sol, mv)?;
    let seq = &mut sol.sequences[mv.machine];
    if mv.from_pos < mv.to_pos {
        seq[mv.from_pos..=mv.to_pos].rotate_left(1);
    } else {
        seq[mv.to_pos..=mv.from_pos].rotate_right(1);
    }
    sol.cached = None;
    Ok(())
}

pub fn apply_move(sol: &Solution, mv: &Move) -> Result<Solution, MoveError> {
    let mut next = sol.clone();
    apply_move_in_place(&mut next, mv)?;
    Ok(next)
}

/// Randomized list scheduling: repeatedly append the next operation of a
/// uniformly chosen unfinished job. Always feasible.
pub fn random_solution<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Solution {
    let mut next: Vec<usize> = (0..inst.n_jobs()).map(|j| inst.job_ops(j).start).collect();
    let mut open: Vec<usize> = (0..inst.n_jobs())
        .filter(|&j| !inst.job_ops(j).is_empty())
        .collect();
    let mut sequences = vec![Vec::new(); inst.n_machines()];
    while !open.is_empty() {
        let k = rng.gen_range(0..open.len());
        let job = open[k];
        let op = next[job];
        sequences[inst.op(op).machine].push(op);
        next[job] += 1;
        if next[job] == inst.job_ops(job).end {
            open.swap_remove(k);
        }
    }
    Solution::new(sequences)
}
