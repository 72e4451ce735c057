use hotda_core::ot::{
    entropy, exact_ot_uniform, sinkhorn, squared_euclidean_cost, transport_cost, CostMatrix, SinkhornParams,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn square_costs(max_n: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.0..1.0f64, n * n).prop_map(move |v| Array2::from_shape_vec((n, n), v).unwrap())
    })
}

fn simplex(len: usize) -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(0.05..1.0f64, len).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn instance() -> impl Strategy<Value = (Array2<f64>, Array1<f64>, Array1<f64>)> {
    (1..=8usize, 1..=8usize).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(0.0..3.0f64, n * m).prop_map(move |v| Array2::from_shape_vec((n, m), v).unwrap()),
            simplex(n),
            simplex(m),
        )
    })
}

fn uniform(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

/// Minimum of the mean matched cost over every permutation (Heap's algorithm).
fn brute_force_assignment(c: &Array2<f64>) -> f64 {
    let n = c.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let score = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>() / n as f64;
    let mut best = score(&perm);
    let mut counters = vec![0; n];
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(score(&perm));
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

#[test]
fn exact_matches_brute_force_on_five_by_five() {
    let mut state = 0x2545_f491_u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..20 {
        let c = Array2::from_shape_fn((5, 5), |_| next());
        let cost = CostMatrix::new(c.clone()).unwrap();
        let exact = transport_cost(&exact_ot_uniform(&cost).unwrap(), &cost).unwrap();
        assert!((exact - brute_force_assignment(&c)).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sinkhorn_plans_are_feasible((c, a, b) in instance(), eps in 0.01..5.0f64) {
        let sol = sinkhorn(&CostMatrix::new(c).unwrap(), &a, &b, &SinkhornParams::new(eps).unwrap()).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(sol.plan.marginal_violation() <= 1e-9);
        prop_assert!(sol.plan.coupling().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sinkhorn_approaches_the_exact_optimum(c in square_costs(6)) {
        let cost = CostMatrix::new(c).unwrap();
        let n = cost.shape().0;
        let eps = (1e-3 * cost.mean()).max(1e-12);
        let sol = sinkhorn(&cost, &uniform(n), &uniform(n), &SinkhornParams::new(eps).unwrap()).unwrap();
        let entropic = transport_cost(&sol.plan, &cost).unwrap();
        let exact = transport_cost(&exact_ot_uniform(&cost).unwrap(), &cost).unwrap();
        prop_assert!(entropic - exact >= -1e-9, "{entropic} < {exact}");
        prop_assert!(entropic - exact <= 0.01 * exact + 1e-12, "{entropic} vs {exact}");
    }

    #[test]
    fn entropy_grows_with_epsilon((c, a, b) in instance(), e1 in 0.05..1.0f64, factor in 1.5..10.0f64) {
        let cost = CostMatrix::new(c).unwrap();
        let low = sinkhorn(&cost, &a, &b, &SinkhornParams::new(e1).unwrap()).unwrap();
        let high = sinkhorn(&cost, &a, &b, &SinkhornParams::new(e1 * factor).unwrap()).unwrap();
        prop_assert!(entropy(&low.plan) <= entropy(&high.plan) + 1e-9);
    }

    #[test]
    fn transposed_problem_gives_transposed_plan((c, a, b) in instance(), eps in 0.05..2.0f64) {
        let params = SinkhornParams::new(eps).unwrap();
        let cost = CostMatrix::new(c).unwrap();
        let forward = sinkhorn(&cost, &a, &b, &params).unwrap().plan;
        let backward = sinkhorn(&cost.transpose(), &b, &a, &params).unwrap().plan;
        let diff = (&forward.coupling().t() - &backward.coupling()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(diff <= 1e-8, "{diff}");
    }

    #[test]
    fn a_measure_is_at_distance_zero_from_itself(points in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 1..=7)) {
        let n = points.len();
        let x = Array2::from_shape_fn((n, 2), |(i, j)| points[i][j]);
        let cost = squared_euclidean_cost(x.view(), x.view()).unwrap();
        let plan = exact_ot_uniform(&cost).unwrap();
        prop_assert!(transport_cost(&plan, &cost).unwrap() <= 1e-9);
    }
}
