//! Job shop instances and reference solutions.
//!
//! Two text layouts are understood:
//!
//! * the OR-Library "standard" layout: a `n_jobs n_machines` header followed by
//!   one row per job of `(machine, duration)` pairs, machines 0-based;
//! * Taillard's native layout: the same header, then an `n_jobs x n_machines`
//!   matrix of durations, then a matrix of machines numbered from 1.
//!
//! Operations are numbered job-major. The public id of an operation is 1-based
//! (`job * n_machines + pos + 1` for rectangular instances); everything inside
//! the crate indexes operations by `id - 1`.

use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

use crate::schedule::{evaluate, Solution};

/// Time unit used for durations, start times and makespans.
pub type Time = u32;

/// Where in the input a token was found. Lines and tokens are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub token: usize,
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}, token {}", self.line, self.token)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected end of input: expected {expected}")]
    Truncated { expected: &'static str },
    #[error("{at}: expected an integer, found `{found}`")]
    NotAnInteger { at: Position, found: String },
    #[error("{at}: negative duration {value}")]
    NegativeDuration { at: Position, value: i64 },
    #[error("{at}: machine {value} out of range (instance has {n_machines} machines)")]
    MachineOutOfRange {
        at: Position,
        value: i64,
        n_machines: usize,
    },
    #[error("{at}: machine index 0 in a 1-based machine matrix")]
    ZeroMachine { at: Position },
    #[error("{at}: dimension must be positive, found {value}")]
    BadDimension { at: Position, value: i64 },
    #[error("{at}: trailing data after the {what}")]
    Trailing { at: Position, what: &'static str },
    #[error("matrix dimension mismatch: expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReferenceError {
    #[error("expected {expected} machine lines, found {found}")]
    LineCount { expected: usize, found: usize },
    #[error("machine {machine}: `{found}` is not a job index")]
    NotAnInteger { machine: usize, found: String },
    #[error("machine {machine}: sequence is not a permutation of the jobs processed on it")]
    NotAPermutation { machine: usize },
    #[error("machine {machine}: job {job} has {count} operations on this machine")]
    Ambiguous {
        machine: usize,
        job: usize,
        count: usize,
    },
    #[error("infeasible reference: the machine orders induce a cycle")]
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Operation {
    pub job: usize,
    pub pos_in_job: usize,
    pub machine: usize,
    pub duration: Time,
}

/// An immutable job shop instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    n_jobs: usize,
    n_machines: usize,
    ops: Vec<Operation>,
    job_ranges: Vec<Range<usize>>,
    machine_ops: Vec<Vec<usize>>,
}

impl Instance {
    /// Builds an instance from per-job routes of `(machine, duration)`.
    ///
    /// Panics if a machine index is out of range; the parsers validate input
    /// before calling this.
    pub fn from_routes(n_machines: usize, routes: &[Vec<(usize, Time)>]) -> Self {
        let mut ops = Vec::new();
        let mut job_ranges = Vec::with_capacity(routes.len());
        let mut machine_ops = vec![Vec::new(); n_machines];
        for (job, route) in routes.iter().enumerate() {
            let start = ops.len();
            for (pos, &(machine, duration)) in route.iter().enumerate() {
                assert!(machine < n_machines, "machine {machine} out of range");
                machine_ops[machine].push(ops.len());
                ops.push(Operation {
                    job,
                    pos_in_job: pos,
                    machine,
                    duration,
                });
            }
            job_ranges.push(start..ops.len());
        }
        Instance {
            n_jobs: routes.len(),
            n_machines,
            ops,
            job_ranges,
            machine_ops,
        }
    }

    pub fn n_jobs(&self) -> usize {
        self.n_jobs
    }

    pub fn n_machines(&self) -> usize {
        self.n_machines
    }

    /// Total number of operations.
    pub fn n_ops(&self) -> usize {
        self.ops.len()
    }

    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn op(&self, index: usize) -> &Operation {
        &self.ops[index]
    }

    /// Public 1-based id of the operation stored at `index`.
    pub fn op_id(&self, index: usize) -> usize {
        index + 1
    }

    pub fn duration(&self, index: usize) -> Time {
        self.ops[index].duration
    }

    /// Operation indices of a job, in processing order.
    pub fn job_ops(&self, job: usize) -> Range<usize> {
        self.job_ranges[job].clone()
    }

    /// Operation indices assigned to a machine, in increasing index order.
    pub fn machine_ops(&self, machine: usize) -> &[usize] {
        &self.machine_ops[machine]
    }

    pub fn job_pred(&self, index: usize) -> Option<usize> {
        (self.ops[index].pos_in_job > 0).then(|| index - 1)
    }

    pub fn job_succ(&self, index: usize) -> Option<usize> {
        let job = self.ops[index].job;
        (index + 1 < self.job_ranges[job].end).then_some(index + 1)
    }

    /// Largest total processing time over machines.
    pub fn max_machine_load(&self) -> Time {
        self.machine_ops
            .iter()
            .map(|ops| ops.iter().map(|&o| self.ops[o].duration).sum::<Time>())
            .max()
            .unwrap_or(0)
    }

    /// Largest total processing time over jobs.
    pub fn max_job_length(&self) -> Time {
        self.job_ranges
            .iter()
            .map(|r| self.ops[r.clone()].iter().map(|o| o.duration).sum::<Time>())
            .max()
            .unwrap_or(0)
    }

    /// Classical lower bound: the larger of the machine and job bounds.
    pub fn lower_bound(&self) -> Time {
        self.max_machine_load().max(self.max_job_length())
    }

    pub fn total_duration(&self) -> u64 {
        self.ops.iter().map(|o| o.duration as u64).sum()
    }

    fn is_rectangular(&self) -> bool {
        self.job_ranges.iter().all(|r| r.len() == self.n_machines)
    }

    /// Writes the instance in the standard layout.
    pub fn to_standard_string(&self) -> String {
        let mut out = format!("{} {}\n", self.n_jobs, self.n_machines);
        for r in &self.job_ranges {
            let row: Vec<String> = self.ops[r.clone()]
                .iter()
                .map(|o| format!("{} {}", o.machine, o.duration))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Writes the instance in Taillard's layout. Only rectangular instances
    /// (every job has `n_machines` operations) can be expressed this way.
    pub fn to_taillard_string(&self) -> Option<String> {
        if !self.is_rectangular() {
            return None;
        }
        let mut out = format!("{} {}\n", self.n_jobs, self.n_machines);
        for r in &self.job_ranges {
            let row: Vec<String> = self.ops[r.clone()]
                .iter()
                .map(|o| o.duration.to_string())
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        for r in &self.job_ranges {
            let row: Vec<String> = self.ops[r.clone()]
                .iter()
                .map(|o| (o.machine + 1).to_string())
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        Some(out)
    }
}

struct Tokens<'a> {
    iter: Box<dyn Iterator<Item = (&'a str, Position)> + 'a>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let iter = text.lines().enumerate().flat_map(|(l, line)| {
            line.split_whitespace().enumerate().map(move |(t, tok)| {
                (
                    tok,
                    Position {
                        line: l + 1,
                        token: t + 1,
                    },
                )
            })
        });
        Tokens {
            iter: Box::new(iter),
        }
    }

    fn next_int(&mut self, expected: &'static str) -> Result<(i64, Position), ParseError> {
        let (tok, at) = self.iter.next().ok_or(ParseError::Truncated { expected })?;
        tok.parse::<i64>()
            .map(|v| (v, at))
            .map_err(|_| ParseError::NotAnInteger {
                at,
                found: tok.to_string(),
            })
    }

    fn finish(mut self, what: &'static str) -> Result<(), ParseError> {
        match self.iter.next() {
            None => Ok(()),
            Some((_, at)) => Err(ParseError::Trailing { at, what }),
        }
    }
}

fn dimension(tokens: &mut Tokens<'_>, expected: &'static str) -> Result<usize, ParseError> {
    let (v, at) = tokens.next_int(expected)?;
    if v <= 0 {
        return Err(ParseError::BadDimension { at, value: v });
    }
    Ok(v as usize)
}

fn duration(v: i64, at: Position) -> Result<Time, ParseError> {
    if v < 0 {
        return Err(ParseError::NegativeDuration { at, value: v });
    }
    Time::try_from(v).map_err(|_| ParseError::NotAnInteger {
        at,
        found: v.to_string(),
    })
}

/// Parses the standard layout (machines 0-based).
pub fn parse_standard(text: &str) -> Result<Instance, ParseError> {
    let mut tokens = Tokens::new(text);
    let n_jobs = dimension(&mut tokens, "number of jobs")?;
    let n_machines = dimension(&mut tokens, "number of machines")?;
    let mut routes = Vec::with_capacity(n_jobs);
    for _ in 0..n_jobs {
        let mut route = Vec::with_capacity(n_machines);
        for _ in 0..n_machines {
            let (m, at) = tokens.next_int("machine index")?;
            if m < 0 || m as usize >= n_machines {
                return Err(ParseError::MachineOutOfRange {
                    at,
                    value: m,
                    n_machines,
                });
            }
            let (p, at) = tokens.next_int("duration")?;
            route.push((m as usize, duration(p, at)?));
        }
        routes.push(route);
    }
    tokens.finish("job rows")?;
    Ok(Instance::from_routes(n_machines, &routes))
}

/// Parses Taillard's native layout (durations matrix, then 1-based machines).
pub fn parse_taillard(text: &str) -> Result<Instance, ParseError> {
    let mut tokens = Tokens::new(text);
    let n_jobs = dimension(&mut tokens, "number of jobs")?;
    let n_machines = dimension(&mut tokens, "number of machines")?;
    let cells = n_jobs * n_machines;

    let mut body = Vec::with_capacity(2 * cells);
    for (tok, at) in tokens.iter.by_ref() {
        let v = tok.parse::<i64>().map_err(|_| ParseError::NotAnInteger {
            at,
            found: tok.to_string(),
        })?;
        body.push((v, at));
    }
    if body.len() != 2 * cells {
        return Err(ParseError::DimensionMismatch {
            expected: 2 * cells,
            found: body.len(),
        });
    }
    let (times, machines) = body.split_at(cells);
    let mut routes = Vec::with_capacity(n_jobs);
    for j in 0..n_jobs {
        let mut route = Vec::with_capacity(n_machines);
        for k in 0..n_machines {
            let (p, pat) = times[j * n_machines + k];
            let (m, mat) = machines[j * n_machines + k];
            if m == 0 {
                return Err(ParseError::ZeroMachine { at: mat });
            }
            if m < 0 || m as usize > n_machines {
                return Err(ParseError::MachineOutOfRange {
                    at: mat,
                    value: m,
                    n_machines,
                });
            }
            route.push((m as usize - 1, duration(p, pat)?));
        }
        routes.push(route);
    }
    Ok(Instance::from_routes(n_machines, &routes))
}

/// A validated, feasible solution read from a reference file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSolution {
    pub solution: Solution,
    pub makespan: Time,
}

/// Parses `n_machines` lines of 0-based job indices, one machine per line.
///
/// Blank lines are ignored. Each job must have exactly one operation on every
/// machine it appears on.
pub fn parse_reference(text: &str, inst: &Instance) -> Result<ReferenceSolution, ReferenceError> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != inst.n_machines() {
        return Err(ReferenceError::LineCount {
            expected: inst.n_machines(),
            found: lines.len(),
        });
    }
    let mut sequences = Vec::with_capacity(inst.n_machines());
    for (machine, line) in lines.iter().enumerate() {
        // op index of each job on this machine
        let mut by_job = vec![None; inst.n_jobs()];
        for &o in inst.machine_ops(machine) {
            let job = inst.op(o).job;
            if by_job[job].is_some() {
                let count = inst
                    .machine_ops(machine)
                    .iter()
                    .filter(|&&x| inst.op(x).job == job)
                    .count();
                return Err(ReferenceError::Ambiguous {
                    machine,
                    job,
                    count,
                });
            }
            by_job[job] = Some(o);
        }
        let mut seq = Vec::with_capacity(inst.machine_ops(machine).len());
        for tok in line.split_whitespace() {
            let job: usize = tok.parse().map_err(|_| ReferenceError::NotAnInteger {
                machine,
                found: tok.to_string(),
            })?;
            let op = by_job
                .get_mut(job)
                .and_then(Option::take)
                .ok_or(ReferenceError::NotAPermutation { machine })?;
            seq.push(op);
        }
        if seq.len() != inst.machine_ops(machine).len() {
            return Err(ReferenceError::NotAPermutation { machine });
        }
        sequences.push(seq);
    }
    let solution = Solution::new(sequences);
    let times = evaluate(inst, &solution).ok_or(ReferenceError::Infeasible)?;
    Ok(ReferenceSolution {
        solution,
        makespan: times.makespan,
    })
}

/// Writes a solution in the reference layout (job indices per machine).
pub fn format_reference(inst: &Instance, sol: &Solution) -> String {
    let mut out = String::new();
    for seq in sol.sequences() {
        let row: Vec<String> = seq.iter().map(|&o| inst.op(o).job.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
