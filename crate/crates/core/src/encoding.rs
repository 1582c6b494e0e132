//! Binary view of a solution: one variable per pair of operations sharing a
//! machine. The variable for `(i, j)`, `i < j`, is 1 exactly when `i` is
//! processed before `j`.

use crate::instance::Instance;
use crate::schedule::{Move, Solution};

/// Sorted list of same-machine operation pairs `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndexSet {
    pairs: Vec<(usize, usize)>,
    n_ops: usize,
    // dense n_ops x n_ops lookup, u32::MAX where no pair exists
    index: Vec<u32>,
}

impl PairIndexSet {
    pub fn build(inst: &Instance) -> Self {
        let n = inst.n_ops();
        let mut pairs = Vec::new();
        for i in 0..n {
            let m = inst.op(i).machine;
            pairs.extend(
                inst.machine_ops(m)
                    .iter()
                    .filter(|&&j| j > i)
                    .map(|&j| (i, j)),
            );
        }
        pairs.sort_unstable();
        let mut index = vec![u32::MAX; n * n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            index[i * n + j] = k as u32;
            index[j * n + i] = k as u32;
        }
        PairIndexSet {
            pairs,
            n_ops: n,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Index of the pair formed by `a` and `b` in either order.
    pub fn index_of(&self, a: usize, b: usize) -> Option<usize> {
        let k = *self.index.get(a * self.n_ops + b)?;
        (k != u32::MAX).then_some(k as usize)
    }
}

/// Shorthand for [`PairIndexSet::build`].
pub fn build_index_set(inst: &Instance) -> PairIndexSet {
    PairIndexSet::build(inst)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitVector(pub Vec<bool>);

impl BitVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn flip(&mut self, j: usize) {
        self.0[j] = !self.0[j];
    }

    /// Indices where `self` and `other` differ.
    pub fn diff(&self, other: &BitVector) -> Vec<usize> {
        self.0
            .iter()
            .zip(&other.0)
            .enumerate()
            .filter_map(|(j, (a, b))| (a != b).then_some(j))
            .collect()
    }
}

pub fn encode(sol: &Solution, idx: &PairIndexSet) -> BitVector {
    let pos = sol.positions(idx.n_ops);
    BitVector(idx.pairs.iter().map(|&(i, j)| pos[i] < pos[j]).collect())
}

/// Pairs whose value flips under `mv`: the moved operation against every
/// operation it jumps over.
pub fn changed_components(mv: &Move, sol: &Solution, idx: &PairIndexSet) -> Vec<usize> {
    let mut out = Vec::with_capacity(mv.from_pos.abs_diff(mv.to_pos));
    changed_components_into(mv, sol, idx, &mut out);
    out
}

pub(crate) fn changed_components_into(
    mv: &Move,
    sol: &Solution,
    idx: &PairIndexSet,
    out: &mut Vec<usize>,
) {
    out.clear();
    let seq = sol.sequence(mv.machine);
    let over = if mv.from_pos < mv.to_pos {
        &seq[mv.from_pos + 1..=mv.to_pos]
    } else {
        &seq[mv.to_pos..mv.from_pos]
    };
    out.extend(over.iter().map(|&k| {
        idx.index_of(mv.op, k)
            .expect("operations on one machine form a pair")
    }));
}
