use proptest::prelude::*;
use sil_core::ot::{cosine_cost_matrix, exact_ot_uniform_square, sinkhorn, transport_cost};
use sil_core::{CostMatrix, Marginals, SinkhornSettings};

/// Minimum mean assignment cost by depth-first search with a running bound.
fn assignment_oracle(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if acc >= *best {
            return;
        }
        if row == cost.len() {
            *best = acc;
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best / cost.len() as f64
}

fn cost_strategy(max: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1..=max, 1..=max).prop_flat_map(|(n, m)| (Just(n), Just(m), prop::collection::vec(0.0f64..2.0, n * m)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_plans_are_feasible_and_others_are_flagged((n, m, entries) in cost_strategy(24)) {
        let cost = CostMatrix::new(n, m, entries).unwrap();
        let marginals = Marginals::uniform(n, m);
        let settings = SinkhornSettings::default();
        let plan = sinkhorn(&cost, &marginals, &settings).unwrap();
        prop_assert!(plan.coupling().iter().all(|p| *p >= 0.0));
        // Near-permutation optima on small problems converge sublinearly and
        // may exhaust the budget; that must be reported, not hidden.
        if !plan.converged {
            prop_assert_eq!(plan.iterations_used, settings.max_iterations);
            prop_assert!(plan.marginal_violation > settings.tolerance);
            return Ok(());
        }
        prop_assert!(plan.marginal_violation <= settings.tolerance);
        let rows: f64 = plan.row_sums().iter().map(|s| (s - 1.0 / n as f64).abs()).sum();
        prop_assert!(rows <= 1e-6);
        let cols: f64 = plan.col_sums().iter().map(|s| (s - 1.0 / m as f64).abs()).sum();
        prop_assert!(cols <= 1e-9);
    }

    #[test]
    fn transposed_problem_gives_transposed_plan((n, m, entries) in cost_strategy(10)) {
        let cost = CostMatrix::new(n, m, entries).unwrap();
        let settings = SinkhornSettings { epsilon: 0.2, tolerance: 1e-12, max_iterations: 50_000 };
        let plan = sinkhorn(&cost, &Marginals::uniform(n, m), &settings).unwrap();
        let t = cost.transpose();
        let plan_t = sinkhorn(&t, &Marginals::uniform(m, n), &settings).unwrap();
        prop_assert!(plan.converged && plan_t.converged, "{} {}", plan.marginal_violation, plan_t.marginal_violation);
        for i in 0..n {
            for j in 0..m {
                prop_assert!((plan.get(i, j) - plan_t.get(j, i)).abs() < 1e-8);
            }
        }
        let v = transport_cost(&plan, &cost).unwrap();
        let vt = transport_cost(&plan_t, &t).unwrap();
        prop_assert!((v - vt).abs() < 1e-8);
    }

    #[test]
    fn transport_value_grows_with_epsilon((n, m, entries) in cost_strategy(8)) {
        let cost = CostMatrix::new(n, m, entries).unwrap();
        let marginals = Marginals::uniform(n, m);
        let value = |epsilon: f64| {
            let settings = SinkhornSettings { epsilon, tolerance: 1e-12, max_iterations: 200_000 };
            transport_cost(&sinkhorn(&cost, &marginals, &settings).unwrap(), &cost).unwrap()
        };
        let values: Vec<f64> = [0.02, 0.05, 0.2, 1.0].iter().map(|&e| value(e)).collect();
        for w in values.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-9, "{values:?}");
        }
        // Large epsilon tends to the independent coupling.
        let mean_cost = cost.entries().iter().sum::<f64>() / (n * m) as f64;
        prop_assert!(values[3] <= mean_cost + 1e-9);
    }

    #[test]
    fn exact_solver_agrees_with_search(n in 1usize..7, entries in prop::collection::vec(0.0f64..2.0, 36)) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| entries[i * 6..i * 6 + n].to_vec()).collect();
        let cost = CostMatrix::from_rows(&rows).unwrap();
        let exact = exact_ot_uniform_square(&cost).unwrap();
        prop_assert!((exact - assignment_oracle(&rows)).abs() < 1e-12);
    }

    #[test]
    fn cosine_cost_is_bounded_and_symmetric(
        left in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..6),
        right in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..6),
    ) {
        let (c, _) = cosine_cost_matrix(&left, &right).unwrap();
        let (ct, _) = cosine_cost_matrix(&right, &left).unwrap();
        prop_assert!(c.entries().iter().all(|v| (0.0..=2.0).contains(v)));
        for i in 0..left.len() {
            for j in 0..right.len() {
                prop_assert!((c.get(i, j) - ct.get(j, i)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sinkhorn_approaches_search_optimum() {
    use rand::Rng;
    let mut rng = sil_core::rng::seeded(17);
    let settings = SinkhornSettings {
        epsilon: 1e-3,
        ..SinkhornSettings::default()
    };
    for _ in 0..50 {
        let n = rng.random_range(1..=6);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let cost = CostMatrix::from_rows(&rows).unwrap();
        let plan = sinkhorn(&cost, &Marginals::uniform(n, n), &settings).unwrap();
        let value = transport_cost(&plan, &cost).unwrap();
        let optimum = assignment_oracle(&rows);
        assert!((value - optimum).abs() <= 0.02 * (1.0 + optimum), "{value} vs {optimum}");
    }
}
