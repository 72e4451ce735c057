use hotda_core::classify::{accuracy, fit_1nn};
use hotda_core::datasets::{gen_moons, load_labeled, save_labeled, MoonsConfig};
use hotda_core::hotda::{adapt, adapt_with_target_partition, hard_matching, solve_hot, AdaptConfig};
use hotda_core::measures::{structures_from_partition, LabeledDataset, Partition};
use hotda_core::ot::{squared_euclidean_cost, transport_cost, CostMatrix, SinkhornParams};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;

fn moons(seed: u64, angle: f64, per_class: usize) -> LabeledDataset {
    gen_moons(&MoonsConfig {
        samples_per_class: per_class,
        noise_std: 0.05,
        rotation_deg: angle,
        seed,
    })
    .unwrap()
}

fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn hot_result_is_consistent_with_its_inner_plans() {
    let source = moons(1, 0.0, 25);
    let target = moons(2, 30.0, 20);
    let out = adapt(&source, target.points(), &AdaptConfig::new(0.1, 0.1).unwrap()).unwrap();
    let src = structures_from_partition(source.points(), &source.partition()).unwrap();
    let tgt = structures_from_partition(target.points(), &out.target_partition).unwrap();
    for h in 0..2 {
        for l in 0..2 {
            let cost = squared_euclidean_cost(src.structures()[h].support(), tgt.structures()[l].support()).unwrap();
            let w = transport_cost(&out.hot.inner_plans[h][l], &cost).unwrap();
            assert!((out.hot.w_matrix.entries()[[h, l]] - w).abs() <= 1e-9);
        }
    }
    let plan = &out.hot.outer_plan;
    let alpha = plan.coupling().sum_axis(Axis(1));
    let beta = plan.coupling().sum_axis(Axis(0));
    assert!((&alpha - src.meta_weights()).iter().all(|v| v.abs() <= 1e-9));
    assert!((&beta - tgt.meta_weights()).iter().all(|v| v.abs() <= 1e-9));
}

#[test]
fn transported_points_are_convex_combinations_of_their_cluster() {
    let source = moons(3, 0.0, 30);
    let target = moons(4, 20.0, 30);
    let out = adapt(&source, target.points(), &AdaptConfig::new(0.1, 1e-2).unwrap()).unwrap();
    let tgt = structures_from_partition(target.points(), &out.target_partition).unwrap();
    for (h, members) in source.partition().members().iter().enumerate() {
        let l = out.matching.map[h];
        let plan = out.hot.inner_plans[h][l].coupling();
        let cluster = tgt.structures()[l].support();
        for (row, &i) in members.iter().enumerate() {
            let coefficients = plan.row(row).to_owned() / plan.row(row).sum();
            assert!(coefficients.iter().all(|&c| c >= 0.0));
            assert!((coefficients.sum() - 1.0).abs() <= 1e-12);
            let combination = coefficients.dot(&cluster);
            let moved = out.transported_source.points().row(i).to_owned();
            assert!((&combination - &moved).iter().all(|v| v.abs() <= 1e-12));
        }
    }
}

#[test]
fn identity_adaptation_keeps_classes_in_place() {
    let blob = |cx: f64, cy: f64, i: usize| [cx + 0.3 * (i as f64 * 1.3).sin(), cy + 0.3 * (i as f64 * 2.1).cos()];
    let rows: Vec<[f64; 2]> = (0..40).map(|i| if i < 20 { blob(0.0, 0.0, i) } else { blob(6.0, 1.0, i) }).collect();
    let points = Array2::from_shape_fn((40, 2), |(i, d)| rows[i][d]);
    let source = LabeledDataset::new(points, (0..40).map(|i| i / 20).collect()).unwrap();
    let out = adapt(&source, source.points(), &AdaptConfig::new(0.1, 0.1).unwrap()).unwrap();
    assert!(!out.matching.collisions_resolved);
    for (h, members) in source.partition().members().iter().enumerate() {
        let l = out.matching.map[h];
        let cluster: Vec<usize> = (0..source.len()).filter(|&i| out.target_partition.assignment()[i] == l).collect();
        assert_eq!(&cluster, members);
        let class_points = source.points().select(Axis(0), members);
        let lo = class_points.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
        let hi = class_points.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
        for &i in members {
            let p = out.transported_source.points().row(i).to_owned();
            assert!((0..2).all(|d| p[d] >= lo[d] - 1e-12 && p[d] <= hi[d] + 1e-12));
        }
    }
}

#[test]
fn forty_degree_moons_reach_the_nearest_neighbour_target() {
    let mut total = 0.0;
    for seed in 0..10 {
        let source = moons(3 * seed, 0.0, 150);
        let target = moons(3 * seed + 1, 40.0, 150);
        let test = moons(3 * seed + 2, 40.0, 500);
        let out = adapt(&source, target.points(), &AdaptConfig::new(0.1, 0.1).unwrap().with_seed(seed)).unwrap();
        let predictions = fit_1nn(&out.transported_source).unwrap().predict(test.points()).unwrap();
        total += accuracy(&predictions, test.labels()).unwrap();
    }
    assert!(total / 10.0 >= 0.95, "{}", total / 10.0);
}

#[test]
fn scaling_both_domains_scales_costs_and_keeps_the_plan() {
    let source = moons(6, 0.0, 20);
    let target = moons(7, 35.0, 20);
    let partition = Partition::new(target.labels().to_vec(), 2).unwrap();
    let base = adapt_with_target_partition(&source, target.points(), &partition, &AdaptConfig::new(0.1, 0.1).unwrap())
        .unwrap();
    for s in [0.1, 3.0, 25.0] {
        let scaled_source = LabeledDataset::new(&source.points() * s, source.labels().to_vec()).unwrap();
        let config = AdaptConfig::new(0.1 * s * s, 0.1 * s * s).unwrap();
        let scaled = adapt_with_target_partition(&scaled_source, (&target.points() * s).view(), &partition, &config)
            .unwrap();
        let w = base.hot.w_matrix.entries().to_owned() * (s * s);
        assert!(max_abs(&w, &scaled.hot.w_matrix.entries().to_owned()) <= 1e-9 * w.sum());
        let gamma = base.hot.outer_plan.coupling().to_owned();
        assert!(max_abs(&gamma, &scaled.hot.outer_plan.coupling().to_owned()) <= 1e-9);
        assert_eq!(base.matching, scaled.matching);
    }
}

#[test]
fn csv_round_trip_feeds_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("source.csv");
    let source = moons(8, 0.0, 15);
    save_labeled(&path, &source).unwrap();
    let (loaded, map) = load_labeled(&path).unwrap();
    assert_eq!(loaded.points(), source.points());
    assert_eq!(map.to_original(loaded.labels()), source.labels().iter().map(|&l| l as i64).collect::<Vec<_>>());
}

fn square_costs() -> impl Strategy<Value = Array2<f64>> {
    (1..=5usize).prop_flat_map(|k| {
        prop::collection::vec(0.0..10.0f64, k * k).prop_map(move |v| Array2::from_shape_vec((k, k), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn permuting_target_clusters_permutes_gamma_and_matching(w in square_costs(), eps in 0.05..2.0f64, rot in 0..5usize) {
        let k = w.nrows();
        let perm: Vec<usize> = (0..k).map(|j| (j + rot) % k).collect();
        let uniform = Array1::from_elem(k, 1.0 / k as f64);
        let params = SinkhornParams::new(eps).unwrap();
        let base = solve_hot(&CostMatrix::new(w.clone()).unwrap(), &uniform, &uniform, &params).unwrap();
        let permuted_w = w.select(Axis(1), &perm);
        let permuted = solve_hot(&CostMatrix::new(permuted_w).unwrap(), &uniform, &uniform, &params).unwrap();
        let expected = base.plan.coupling().select(Axis(1), &perm);
        prop_assert!(max_abs(&expected, &permuted.plan.coupling().to_owned()) <= 1e-8);
        let m = hard_matching(&base.plan);
        let mp = hard_matching(&permuted.plan);
        prop_assert!(mp.map.iter().all(|&j| j < k));
        // column j of the permuted problem is column perm[j] of the original
        let near_tie = {
            let g = base.plan.coupling();
            (0..k).any(|h| {
                let mut row: Vec<f64> = g.row(h).to_vec();
                row.sort_by(|a, b| b.total_cmp(a));
                row.len() > 1 && row[0] - row[1] < 1e-6
            })
        };
        if !near_tie {
            prop_assert_eq!(mp.map.iter().map(|&j| perm[j]).collect::<Vec<_>>(), m.map);
        }
    }

    #[test]
    fn labels_and_counts_survive_adaptation(n0 in 3..25usize, n1 in 3..25usize, angle in 0.0..60.0f64, seed in 0..100u64) {
        let full = moons(seed, 0.0, n0.max(n1));
        let keep: Vec<usize> = (0..full.len())
            .filter(|&i| if full.labels()[i] == 0 { i < n0 } else { i - full.len() / 2 < n1 })
            .collect();
        let source = LabeledDataset::new(full.points().select(Axis(0), &keep), keep.iter().map(|&i| full.labels()[i]).collect()).unwrap();
        let target = moons(seed + 1000, angle, 15);
        let out = adapt(&source, target.points(), &AdaptConfig::new(0.1, 0.1).unwrap().with_seed(seed)).unwrap();
        prop_assert_eq!(out.transported_source.labels(), source.labels());
        prop_assert_eq!(out.transported_source.points().dim(), source.points().dim());
        let mut seen = [false; 2];
        prop_assert!(out.matching.map.iter().all(|&j| !std::mem::replace(&mut seen[j], true)));
    }

    #[test]
    fn adaptation_is_deterministic(seed in 0..50u64, angle in 0.0..90.0f64) {
        let source = moons(seed, 0.0, 12);
        let target = moons(seed + 1, angle, 12);
        let config = AdaptConfig::new(0.1, 0.1).unwrap().with_seed(seed);
        let a = adapt(&source, target.points(), &config).unwrap();
        let b = adapt(&source, target.points(), &config).unwrap();
        prop_assert_eq!(a.transported_source.points(), b.transported_source.points());
        prop_assert_eq!(a.matching, b.matching);
    }
}
