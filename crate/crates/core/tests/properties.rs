mod common;

use gtajob_core::dominance::{
    aggregate, bootstrap_ci, estimate, pair_counts, tie_mass, win_prob, InstanceSamples,
};
use gtajob_core::encoding::changed_components;
use gtajob_core::learning::{fit_theta, predict, TrainingRow, TrainingTable};
use gtajob_core::schedule::{
    apply_move, critical_blocks, critical_path, evaluate, n4_moves, random_solution, Evaluator,
    Move,
};
use gtajob_core::{encode, Makespan, PairIndexSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn table_strategy() -> impl Strategy<Value = TrainingTable> {
    prop::collection::vec((1000u32..1100, 1000u32..1100, any::<bool>()), 1..20).prop_map(|rows| {
        TrainingTable::new(
            rows.into_iter()
                .map(|(d1, d0, opt)| TrainingRow { d1, d0, opt })
                .collect(),
        )
    })
}

fn samples_strategy() -> impl Strategy<Value = Vec<InstanceSamples>> {
    let runs = || prop::collection::vec(0u8..6, 1..8);
    prop::collection::vec((runs(), runs()), 1..6).prop_map(|v| {
        v.into_iter()
            .map(|(a, b)| InstanceSamples {
                a: a.into_iter().map(f64::from).collect(),
                b: b.into_iter().map(f64::from).collect(),
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn evaluate_matches_relaxation(seed in any::<u64>(), jobs in 1usize..5, machines in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, jobs, machines, 9);
        let sol = random_orders(&mut rng, &inst);
        let ours = evaluate(&inst, &sol);
        let oracle = relax_starts(&inst, &sol);
        prop_assert_eq!(ours.is_some(), oracle.is_some());
        if let (Some(t), Some(s)) = (ours, oracle) {
            prop_assert_eq!(&t.start, &s);
            prop_assert_eq!(Some(t.makespan), relax_makespan(&inst, &sol));
        }
    }

    #[test]
    fn move_scores_match_full_evaluation(seed in any::<u64>(), jobs in 2usize..7, machines in 1usize..6, feasible_base in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, jobs, machines, 9);
        let sol = if feasible_base { random_solution(&inst, &mut rng) } else { random_orders(&mut rng, &inst) };
        let mut ev = Evaluator::new(&inst);
        ev.load(&sol);
        for _ in 0..20 {
            let m = rng.gen_range(0..machines);
            let from = rng.gen_range(0..jobs);
            let to = rng.gen_range(0..jobs);
            if from == to {
                continue;
            }
            let mv = Move { machine: m, op: sol.sequence(m)[from], from_pos: from, to_pos: to };
            let next = apply_move(&sol, &mv).unwrap();
            prop_assert_eq!(ev.evaluate_move(&sol, &mv), Makespan::from(relax_makespan(&inst, &next)));
        }
        prop_assert_eq!(ev.evaluate_loaded().map(|t| t.makespan), relax_makespan(&inst, &sol));
    }

    #[test]
    fn bounded_scores_agree_with_unbounded(seed in any::<u64>(), jobs in 2usize..7, machines in 1usize..6, limit in 0u32..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, jobs, machines, 9);
        let sol = random_solution(&inst, &mut rng);
        let mut ev = Evaluator::new(&inst);
        ev.load(&sol);
        for _ in 0..20 {
            let m = rng.gen_range(0..machines);
            let (from, to) = (rng.gen_range(0..jobs), rng.gen_range(0..jobs));
            if from == to {
                continue;
            }
            let mv = Move { machine: m, op: sol.sequence(m)[from], from_pos: from, to_pos: to };
            let full = ev.evaluate_move(&sol, &mv);
            match ev.evaluate_move_within(&sol, &mv, limit) {
                Some(v) => prop_assert_eq!(v, full),
                None => prop_assert!(full > Makespan::Finite(limit), "pruned {:?} at {}", full, limit),
            }
        }
    }

    #[test]
    fn loaded_moves_match_block_moves(seed in any::<u64>(), jobs in 1usize..7, machines in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, jobs, machines, 9);
        let sol = random_solution(&inst, &mut rng);
        let times = evaluate(&inst, &sol).unwrap();
        let mut ev = Evaluator::new(&inst);
        ev.load(&sol);
        let (mut path, mut moves) = (Vec::new(), Vec::new());
        ev.loaded_n4_moves(&mut path, &mut moves);
        prop_assert_eq!(&path, &critical_path(&inst, &times, &sol));
        prop_assert_eq!(moves, n4_moves(&critical_blocks(&inst, &times, &sol)));
    }

    #[test]
    fn critical_path_is_tight(seed in any::<u64>(), jobs in 1usize..6, machines in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, jobs, machines, 9);
        let sol = random_solution(&inst, &mut rng);
        let times = evaluate(&inst, &sol).unwrap();
        let path = critical_path(&inst, &times, &sol);
        prop_assert_eq!(times.start[path[0]], 0);
        let last = *path.last().unwrap();
        prop_assert_eq!(times.start[last] + inst.duration(last), times.makespan);
        for w in path.windows(2) {
            prop_assert_eq!(times.start[w[0]] + inst.duration(w[0]), times.start[w[1]]);
        }
        let total: u32 = path.iter().map(|&o| inst.duration(o)).sum();
        prop_assert_eq!(total, times.makespan);
    }

    #[test]
    fn move_changes_exactly_the_reported_components(seed in any::<u64>(), jobs in 2usize..6, machines in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, jobs, machines, 9);
        let idx = PairIndexSet::build(&inst);
        let sol = random_solution(&inst, &mut rng);
        let times = evaluate(&inst, &sol).unwrap();
        let moves = n4_moves(&critical_blocks(&inst, &times, &sol));
        let before = encode(&sol, &idx);
        for mv in &moves {
            let next = apply_move(&sol, mv).unwrap();
            let mut changed = changed_components(mv, &sol, &idx);
            changed.sort_unstable();
            prop_assert_eq!(before.diff(&encode(&next, &idx)), changed);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fit_is_complement_invariant(table in table_strategy()) {
        let complement = TrainingTable::new(
            table.rows.iter().map(|r| TrainingRow { d1: r.d0, d0: r.d1, opt: !r.opt }).collect(),
        );
        let a = fit_theta(&table).unwrap();
        let b = fit_theta(&complement).unwrap();
        prop_assert!((a.model.theta - b.model.theta).abs() < 1e-9, "{} vs {}", a.model.theta, b.model.theta);
        prop_assert_eq!(a.separated, b.separated);
    }

    #[test]
    fn fit_is_zero_on_swap_symmetric_tables(table in table_strategy()) {
        let mut rows = table.rows.clone();
        rows.extend(table.rows.iter().map(|r| TrainingRow { d1: r.d0, d0: r.d1, opt: r.opt }));
        let fit = fit_theta(&TrainingTable::new(rows)).unwrap();
        prop_assert!(fit.model.theta.abs() < 1e-9, "theta = {}", fit.model.theta);
        prop_assert!(!fit.separated);
    }

    #[test]
    fn fit_is_at_least_as_good_as_a_coarse_grid(table in table_strategy()) {
        let fit = fit_theta(&table).unwrap();
        let grid = grid_theta(&table, -10.0, 10.0, 0.01);
        let ll_fit = naive_log_likelihood(fit.model.theta, &table);
        let ll_grid = naive_log_likelihood(grid, &table);
        prop_assert!(ll_fit >= ll_grid - 1e-9, "fit {} ll {} < grid {} ll {}", fit.model.theta, ll_fit, grid, ll_grid);
    }

    #[test]
    fn predictions_of_swapped_bounds_sum_to_one(theta in -20.0f64..20.0, a in 0u32..5000, b in 0u32..5000) {
        let s = predict(theta, a, b) + predict(theta, b, a);
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&predict(theta, a, b)));
    }

    #[test]
    fn win_tie_loss_partition(xs in prop::collection::vec(0u8..5, 1..10), ys in prop::collection::vec(0u8..5, 1..10)) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let ys: Vec<f64> = ys.into_iter().map(f64::from).collect();
        let (lt, gt, eq) = pair_counts(&xs, &ys).unwrap();
        prop_assert_eq!(lt + gt + eq, xs.len() * ys.len());
        let n = (xs.len() * ys.len()) as f64;
        prop_assert_eq!(win_prob(&xs, &ys).unwrap(), lt as f64 / n);
        prop_assert_eq!(win_prob(&ys, &xs).unwrap(), gt as f64 / n);
        prop_assert_eq!(tie_mass(&xs, &ys).unwrap(), eq as f64 / n);
        let total = win_prob(&xs, &ys).unwrap() + win_prob(&ys, &xs).unwrap() + tie_mass(&xs, &ys).unwrap();
        prop_assert!((total - 1.0).abs() <= 4.0 * f64::EPSILON);
        prop_assert_eq!(win_prob(&xs, &ys).unwrap(), nested_win(&xs, &ys));
    }

    #[test]
    fn estimator_depends_only_on_order(samples in samples_strategy()) {
        let moved: Vec<InstanceSamples> = samples
            .iter()
            .map(|s| InstanceSamples {
                a: s.a.iter().map(|v| 2.0 * v + 7.0).collect(),
                b: s.b.iter().map(|v| 2.0 * v + 7.0).collect(),
            })
            .collect();
        prop_assert_eq!(estimate(&samples).unwrap(), estimate(&moved).unwrap());
    }

    #[test]
    fn aggregate_ignores_instance_order(probs in prop::collection::vec(0.0f64..=1.0, 1..12), seed in any::<u64>()) {
        let mut shuffled = probs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rng);
        let (a, b) = (aggregate(&probs).unwrap(), aggregate(&shuffled).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn point_estimate_lies_in_interval(samples in samples_strategy(), seed in any::<u64>()) {
        let (ab, ba) = estimate(&samples).unwrap();
        let ci = bootstrap_ci(&samples, 1000, 0.95, seed).unwrap();
        prop_assert!(ci.a_lt_b.lo <= ci.a_lt_b.hi && ci.b_lt_a.lo <= ci.b_lt_a.hi);
        // percentile intervals can exclude the point estimate on tiny or
        // lopsided samples; with at least a few runs per side it stays inside
        if samples.len() >= 3 && samples.iter().all(|s| s.a.len() >= 4 && s.b.len() >= 4) {
            prop_assert!(ci.a_lt_b.contains(ab), "{ab} not in {:?}", ci.a_lt_b);
            prop_assert!(ci.b_lt_a.contains(ba), "{ba} not in {:?}", ci.b_lt_a);
        }
    }
}

#[test]
fn bootstrap_covers_the_null_under_identical_distributions() {
    // values uniform on 0..10: ties have mass 0.1, so P(A < B) = 0.45
    let null = 0.45;
    let mut covered = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let samples: Vec<InstanceSamples> = (0..8)
            .map(|_| InstanceSamples {
                a: (0..10).map(|_| rng.gen_range(0..10) as f64).collect(),
                b: (0..10).map(|_| rng.gen_range(0..10) as f64).collect(),
            })
            .collect();
        let ci = bootstrap_ci(&samples, 1000, 0.95, trial).unwrap();
        if ci.a_lt_b.contains(null) {
            covered += 1;
        }
    }
    assert!(covered >= 90, "covered {covered}/100");
}
