//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use gtajob_core::learning::{TrainingRow, TrainingTable};
use gtajob_core::{Instance, Solution, Time};
use rand::seq::SliceRandom;
use rand::Rng;

/// Every job visits every machine once, in a random order.
pub fn random_instance<R: Rng>(rng: &mut R, jobs: usize, machines: usize, max_dur: Time) -> Instance {
    let routes: Vec<Vec<(usize, Time)>> = (0..jobs)
        .map(|_| {
            let mut order: Vec<usize> = (0..machines).collect();
            order.shuffle(rng);
            order
                .into_iter()
                .map(|m| (m, rng.gen_range(1..=max_dur)))
                .collect()
        })
        .collect();
    Instance::from_routes(machines, &routes)
}

/// Independent random permutation on each machine; may contain a cycle.
pub fn random_orders<R: Rng>(rng: &mut R, inst: &Instance) -> Solution {
    let seqs = (0..inst.n_machines())
        .map(|m| {
            let mut s = inst.machine_ops(m).to_vec();
            s.shuffle(rng);
            s
        })
        .collect();
    Solution::new(seqs)
}

fn arcs(inst: &Instance, sol: &Solution) -> Vec<(usize, usize)> {
    let mut arcs = Vec::new();
    for o in 0..inst.n_ops() {
        let op = inst.op(o);
        if op.pos_in_job > 0 {
            arcs.push((o - 1, o));
        }
    }
    for seq in sol.sequences() {
        for w in seq.windows(2) {
            arcs.push((w[0], w[1]));
        }
    }
    arcs
}

/// Earliest starts by relaxing every arc until nothing changes. `None` when
/// the relaxation does not settle, which happens exactly on a cycle.
pub fn relax_starts(inst: &Instance, sol: &Solution) -> Option<Vec<Time>> {
    let n = inst.n_ops();
    let arcs = arcs(inst, sol);
    let mut s = vec![0 as Time; n];
    for _ in 0..=n {
        let mut changed = false;
        for &(a, b) in &arcs {
            let need = s[a] + inst.op(a).duration;
            if s[b] < need {
                s[b] = need;
                changed = true;
            }
        }
        if !changed {
            return Some(s);
        }
    }
    None
}

pub fn relax_makespan(inst: &Instance, sol: &Solution) -> Option<Time> {
    let s = relax_starts(inst, sol)?;
    (0..inst.n_ops()).map(|o| s[o] + inst.op(o).duration).max()
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Optimal makespan by enumerating every combination of machine orders.
pub fn exhaustive_optimum(inst: &Instance) -> Time {
    let per_machine: Vec<Vec<Vec<usize>>> = (0..inst.n_machines())
        .map(|m| permutations(inst.machine_ops(m)))
        .collect();
    let mut choice = vec![0usize; per_machine.len()];
    let mut best = Time::MAX;
    loop {
        let seqs = choice
            .iter()
            .zip(&per_machine)
            .map(|(&c, perms)| perms[c].clone())
            .collect();
        if let Some(ms) = relax_makespan(inst, &Solution::new(seqs)) {
            best = best.min(ms);
        }
        let mut k = 0;
        loop {
            if k == choice.len() {
                return best;
            }
            choice[k] += 1;
            if choice[k] < per_machine[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Log-likelihood written directly from the model definition.
pub fn naive_log_likelihood(theta: f64, table: &TrainingTable) -> f64 {
    table
        .rows
        .iter()
        .map(|r| {
            let z = theta * (r.d1 as f64 - r.d0 as f64);
            // ln p = -ln(1 + e^z), ln(1 - p) = -ln(1 + e^-z), evaluated stably
            let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
            if r.opt {
                -softplus(z)
            } else {
                -softplus(-z)
            }
        })
        .sum()
}

/// Maximizer of the log-likelihood over a grid of step `step` in [lo, hi].
pub fn grid_theta(table: &TrainingTable, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as i64;
    let mut best = (f64::NEG_INFINITY, lo);
    for k in 0..=n {
        let t = lo + k as f64 * step;
        let ll = naive_log_likelihood(t, table);
        if ll > best.0 {
            best = (ll, t);
        }
    }
    best.1
}

pub fn small_table() -> TrainingTable {
    let rows = [
        (1395, 1366, false),
        (1368, 1400, true),
        (1366, 1438, true),
        (1373, 1366, false),
        (1379, 1365, false),
        (1365, 1389, true),
    ];
    TrainingTable::new(
        rows.iter()
            .map(|&(d1, d0, opt)| TrainingRow { d1, d0, opt })
            .collect(),
    )
}

/// Win probability by explicit double loop.
pub fn nested_win(xs: &[f64], ys: &[f64]) -> f64 {
    let mut wins = 0usize;
    for x in xs {
        for y in ys {
            if x < y {
                wins += 1;
            }
        }
    }
    wins as f64 / (xs.len() * ys.len()) as f64
}
