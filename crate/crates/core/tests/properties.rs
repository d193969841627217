use std::sync::Arc;

use flowshop_core::dispatch::{AttributeVector, DispatchConfig, StateFeature};
use flowshop_core::gbml::{
    crossover, fitness_from_objectives, init_population, mutate, select_rsswr,
};
use flowshop_core::{
    brute_force_optimal, dispatch_schedule, evaluate_timeline, evolve, johnson_sequence, makespan,
    Capacity, GbmlConfig, Instance, RuleSet, Sequence, StateDecomposition, TieBreak, WeightVector,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(max_n: usize, m: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Instance> {
    (1..=max_n, m).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prop::collection::vec(0u64..=12, m), n),
            prop::collection::vec(prop::option::of(0u32..=4), m - 1),
        )
            .prop_map(|(p, b)| {
                let buffers = b.into_iter().map(Capacity::from).collect();
                Instance::new("prop", p, buffers, None).unwrap()
            })
    })
}

fn with_order(
    inst: impl Strategy<Value = Instance>,
) -> impl Strategy<Value = (Instance, Vec<usize>)> {
    inst.prop_flat_map(|i| {
        let order = Just((0..i.jobs()).collect::<Vec<_>>()).prop_shuffle();
        (Just(i), order)
    })
}

fn uniform(inst: &Instance, cap: Capacity) -> Instance {
    inst.with_buffers(vec![cap; inst.machines() - 1]).unwrap()
}

fn two_machine_rules(cells: usize) -> impl Strategy<Value = Vec<WeightVector>> {
    prop::collection::vec(
        prop::collection::vec(-10i64..=10, 2).prop_map(WeightVector),
        cells,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn makespan_is_non_increasing_in_capacity((inst, order) in with_order(instance(10, 1..=4))) {
        let seq = Sequence::new(order, inst.jobs()).unwrap();
        let caps = [0, 1, 2, 3, 5];
        let mut prev = u64::MAX;
        for b in caps {
            let c = makespan(&uniform(&inst, Capacity::Bounded(b)), &seq);
            prop_assert!(c <= prev);
            prev = c;
        }
        prop_assert!(makespan(&uniform(&inst, Capacity::Unbounded), &seq) <= prev);
    }

    #[test]
    fn raising_one_stage_never_hurts((inst, order) in with_order(instance(8, 2..=4)), stage in 0usize..3) {
        let stage = stage % (inst.machines() - 1);
        let seq = Sequence::new(order, inst.jobs()).unwrap();
        let base = makespan(&inst, &seq);
        let mut raised = inst.buffers().to_vec();
        raised[stage] = match raised[stage] {
            Capacity::Bounded(b) => Capacity::Bounded(b + 1),
            Capacity::Unbounded => Capacity::Unbounded,
        };
        prop_assert!(makespan(&inst.with_buffers(raised).unwrap(), &seq) <= base);
    }

    #[test]
    fn saturated_buffers_equal_unbounded((inst, order) in with_order(instance(10, 1..=4))) {
        let seq = Sequence::new(order, inst.jobs()).unwrap();
        let free = evaluate_timeline(&uniform(&inst, Capacity::Unbounded), &seq);
        let full = evaluate_timeline(&uniform(&inst, Capacity::Bounded(inst.jobs() as u32 - 1)), &seq);
        prop_assert_eq!(free, full);
    }

    #[test]
    fn timeline_respects_precedence((inst, order) in with_order(instance(10, 1..=4))) {
        let tl = evaluate_timeline(&inst, &Sequence::new(order.clone(), inst.jobs()).unwrap());
        for (pos, &j) in order.iter().enumerate() {
            for k in 0..inst.machines() {
                prop_assert_eq!(tl.finish[j][k], tl.start[j][k] + inst.time(j, k));
                prop_assert!(tl.depart[j][k] >= tl.finish[j][k]);
                if k > 0 {
                    prop_assert!(tl.start[j][k] >= tl.depart[j][k - 1]);
                }
                if pos > 0 {
                    prop_assert!(tl.start[j][k] >= tl.depart[order[pos - 1]][k]);
                }
            }
        }
    }

    #[test]
    fn johnson_is_optimal_without_buffers(inst in instance(7, 2..=2)) {
        let inst = uniform(&inst, Capacity::Unbounded);
        let j = johnson_sequence(&inst).unwrap();
        let (_, best) = brute_force_optimal(&inst).unwrap();
        prop_assert_eq!(makespan(&inst, &j), best);
    }

    #[test]
    fn dispatch_emits_permutation_and_matching_timeline(
        inst in instance(30, 2..=2),
        weights in two_machine_rules(8),
        highest in any::<bool>(),
    ) {
        let rules = RuleSet::new(Arc::new(StateDecomposition::default_grid()), weights).unwrap();
        let tie = if highest { TieBreak::HighestIndex } else { TieBreak::LowestIndex };
        let (seq, tl) = dispatch_schedule(&inst, &rules, tie).unwrap();
        let mut sorted = seq.as_slice().to_vec();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..inst.jobs()).collect::<Vec<_>>());
        prop_assert_eq!(&tl, &evaluate_timeline(&inst, &seq));
        prop_assert_eq!(dispatch_schedule(&inst, &rules, tie).unwrap().0, seq);
    }

    #[test]
    fn single_cell_dispatch_is_a_stable_sort(inst in instance(100, 2..=2), w in two_machine_rules(1)) {
        let w = w.into_iter().next().unwrap();
        let (seq, _) = dispatch_schedule(&inst, &RuleSet::single(w.clone()), TieBreak::LowestIndex).unwrap();
        let alpha = |j: usize| {
            let a = AttributeVector(vec![inst.time(j, 0) as i64, inst.time(j, 1) as i64]);
            w.0.iter().zip(&a.0).map(|(x, y)| x * y).sum::<i64>()
        };
        let mut expected: Vec<usize> = (0..inst.jobs()).collect();
        expected.sort_by_key(|&j| std::cmp::Reverse(alpha(j)));
        prop_assert_eq!(seq.into_inner(), expected);
    }

    #[test]
    fn positive_scaling_preserves_dispatch(
        inst in instance(30, 2..=2),
        weights in two_machine_rules(8),
        cell in 0usize..8,
        factor in 1i64..=7,
    ) {
        let grid = Arc::new(StateDecomposition::default_grid());
        let mut scaled = weights.clone();
        scaled[cell].0.iter_mut().for_each(|w| *w *= factor);
        let a = dispatch_schedule(&inst, &RuleSet::new(grid.clone(), weights).unwrap(), TieBreak::LowestIndex).unwrap();
        let b = dispatch_schedule(&inst, &RuleSet::new(grid, scaled).unwrap(), TieBreak::LowestIndex).unwrap();
        prop_assert_eq!(a.0, b.0);
    }

    #[test]
    fn genetic_operators_respect_bounds(
        seed in any::<u64>(),
        len in 2usize..40,
        bound in 1i64..20,
        rate in 0.0f64..=1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = GbmlConfig { population_size: 4, weight_bound: bound, ..GbmlConfig::default() };
        let pop = init_population(&cfg, len, &mut rng);
        prop_assert!(pop.members.iter().all(|g| g.len() == len && g.within(bound)));
        let (c, d) = crossover(&pop.members[0], &pop.members[1], rate, &mut rng).unwrap();
        for child in [&c, &d] {
            prop_assert!(child.within(bound));
            prop_assert_eq!(child.len(), len);
        }
        // every gene of a child comes from the same locus of a parent
        for i in 0..len {
            let parents = [pop.members[0].0[i], pop.members[1].0[i]];
            prop_assert!(parents.contains(&c.0[i]) && parents.contains(&d.0[i]));
        }
        let m = mutate(&c, rate, bound, &mut rng);
        prop_assert!(m.within(bound));
        prop_assert_eq!(mutate(&c, 0.0, bound, &mut rng), c);
    }

    #[test]
    fn fitness_ratios_sum_to_population_times_problems(
        objectives in (1usize..30, 1usize..6).prop_flat_map(|(np, nh)| {
            prop::collection::vec(prop::collection::vec(1u64..500, nh), np)
        }),
    ) {
        let np = objectives.len();
        let nh = objectives[0].len();
        let report = fitness_from_objectives(objectives, 1.1 * nh as f64);
        let total: f64 = (0..np).map(|i| report.ratio_sum(i)).sum();
        let expected = (np * nh) as f64;
        prop_assert!(((total - expected) / expected).abs() < 1e-9);
        prop_assert!(report.fitness.iter().all(|&f| f >= 0.0));
    }

    #[test]
    fn selection_fills_pool_with_guaranteed_copies(
        fitness in prop::collection::vec(0.0f64..10.0, 1..60),
        seed in any::<u64>(),
    ) {
        let n = fitness.len();
        let sel = select_rsswr(&fitness, n, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(sel.pool.len(), n);
        prop_assert!(sel.pool.iter().all(|&i| i < n));
        let total: f64 = fitness.iter().sum();
        if total > 0.0 {
            for (i, &f) in fitness.iter().enumerate() {
                let floor = (n as f64 * f / total + 1e-9).floor() as usize;
                let count = sel.pool.iter().filter(|&&p| p == i).count();
                prop_assert_eq!(sel.guaranteed[i], floor);
                prop_assert!(count >= floor);
                if f == 0.0 {
                    prop_assert_eq!(count, 0);
                }
            }
        }
    }

    #[test]
    fn instance_json_round_trips(inst in instance(12, 1..=4)) {
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
        prop_assert_eq!(back, inst);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn elitism_keeps_best_objective_monotone(seed in any::<u64>(), b in prop::option::of(0u32..3)) {
        let inst = flowshop_core::bench::generate_instance(
            15,
            2,
            Default::default(),
            vec![Capacity::from(b)],
            seed,
        )
        .unwrap();
        let cfg = GbmlConfig { population_size: 12, generations: 25, seed, ..GbmlConfig::default() };
        let dispatcher = DispatchConfig::default().build().unwrap();
        let out = evolve(&cfg, &dispatcher, std::slice::from_ref(&inst), &mut ()).unwrap();
        prop_assert_eq!(out.history.len(), 25);
        for w in out.history.windows(2) {
            prop_assert!(w[1].best_objective <= w[0].best_objective);
        }
        prop_assert_eq!(out.best_objective, out.history.last().unwrap().best_objective);
        prop_assert_eq!(makespan(&inst, &out.best_sequence) as f64, out.best_objective);
        let again = evolve(&cfg, &dispatcher, std::slice::from_ref(&inst), &mut ()).unwrap();
        prop_assert_eq!(again.best_genome, out.best_genome);
    }
}

#[test]
fn grid_cells_partition_the_unit_square() {
    let grid = StateDecomposition::default_grid();
    assert_eq!(
        grid.features(),
        &[
            StateFeature::CompletionFraction,
            StateFeature::BufferOccupancy
        ]
    );
    for i in 0..=20 {
        for j in 0..=20 {
            let s = [i as f64 / 20.0, j as f64 / 20.0];
            let cell = grid.select_cell(&s).unwrap();
            let contains = |c: &flowshop_core::dispatch::Cell| {
                c.bounds
                    .iter()
                    .zip(&s)
                    .all(|(&(lo, hi), &x)| lo <= x && (x < hi || (hi == 1.0 && x == 1.0)))
            };
            let hits = grid.cells().iter().filter(|c| contains(c)).count();
            assert_eq!(hits, 1, "{s:?}");
            assert!(contains(&grid.cells()[cell]));
        }
    }
}
