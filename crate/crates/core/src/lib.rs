//! Job shop scheduling with tabu search, a logistic model that learns from the
//! solutions a search visits, and the guided tabu search built on it.
//!
//! * [`instance`]: instance and reference-solution files.
//! * [`schedule`]: disjunctive-graph evaluation, critical blocks, N4 moves.
//! * [`encoding`]: the pair-variable (binary) view of a solution.
//! * [`tabu`]: the tabu search engine.
//! * [`learning`]: objective bounds, the one-parameter logistic model and its fit.
//! * [`gta`]: guided tabu search.
//! * [`dominance`]: probability dominance estimates with bootstrap intervals.
//! * [`harness`]: run orchestration and run logs.

pub mod dominance;
pub mod encoding;
pub mod gta;
pub mod harness;
pub mod instance;
pub mod learning;
pub mod schedule;
pub mod tabu;

pub use encoding::{encode, BitVector, PairIndexSet};
pub use instance::{parse_reference, parse_standard, parse_taillard, Instance, Time};
pub use schedule::{evaluate, Makespan, Solution};
