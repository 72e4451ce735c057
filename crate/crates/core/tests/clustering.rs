use hotda_core::classify::adjusted_rand_index;
use hotda_core::datasets::gen_two_circles;
use hotda_core::measures::Partition;
use hotda_core::wspectral::{
    barycenter_objective_check, gaussian_affinity, lloyd_barycenter_kmeans, ncut_objective, normalize_affinity,
    spectral_embed, wasserstein_spectral_cluster, Bandwidth, WSpectralConfig,
};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(per_blob: usize, centers: &[[f64; 2]], std: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std).unwrap();
    let m = per_blob * centers.len();
    let x = Array2::from_shape_fn((m, 2), |(i, j)| centers[i / per_blob][j] + noise.sample(&mut rng));
    (x, (0..m).map(|i| i / per_blob).collect())
}

fn point_cloud() -> impl Strategy<Value = Array2<f64>> {
    (3..=40usize, 1..=3usize).prop_flat_map(|(m, d)| {
        prop::collection::vec(-10.0..10.0f64, m * d).prop_map(move |v| Array2::from_shape_vec((m, d), v).unwrap())
    })
}

/// Largest Rayleigh quotient seen along a power iteration from `start`.
fn power_iteration_peak(k: ArrayView2<f64>, start: Array1<f64>, steps: usize) -> f64 {
    let mut v = start;
    let mut peak = f64::NEG_INFINITY;
    for _ in 0..steps {
        let w = k.dot(&v);
        peak = peak.max(v.dot(&w) / v.dot(&v));
        let norm = w.dot(&w).sqrt();
        v = w / norm;
    }
    peak
}

#[test]
fn block_kernel_embeds_to_two_locations() {
    let mut k = Array2::zeros((7, 7));
    for i in 0..7 {
        for j in 0..7 {
            if (i < 3) == (j < 3) {
                k[[i, j]] = 1.0;
            }
        }
    }
    let e = spectral_embed(k.view(), 2).unwrap();
    let constant_over = |range: std::ops::Range<usize>| {
        range.clone().all(|i| (&e.rows.row(i) - &e.rows.row(range.start)).iter().all(|v| v.abs() < 1e-9))
    };
    assert!(constant_over(0..3) && constant_over(3..7));
    let gap = &e.rows.row(0) - &e.rows.row(3);
    assert!(gap.dot(&gap) > 1.0);
}

#[test]
fn separated_blobs_are_recovered() {
    let (x, truth) = blobs(30, &[[0.0, 0.0], [8.0, 8.0]], 0.5, 3);
    let out = wasserstein_spectral_cluster(x.view(), 2, &WSpectralConfig::default()).unwrap();
    let ari = adjusted_rand_index(&out.partition, &Partition::new(truth, 2).unwrap()).unwrap();
    assert_eq!(ari, 1.0);
}

#[test]
fn circles_cut_is_smaller_for_the_truth_than_for_kmeans() {
    let data = gen_two_circles(100, (1.0, 3.0), 0.05, 1).unwrap();
    let sigma = Bandwidth::Auto.resolve(data.points()).unwrap();
    let affinity = gaussian_affinity(data.points(), sigma).unwrap();
    let kmeans = lloyd_barycenter_kmeans(data.points(), 2, 1, 10).unwrap();
    let truth = ncut_objective(&data.partition(), &affinity).unwrap();
    let raw = ncut_objective(&kmeans.partition, &affinity).unwrap();
    assert!(truth <= raw, "{truth} > {raw}");
}

#[test]
fn wspectral_splits_the_circles_and_kmeans_does_not() {
    let data = gen_two_circles(100, (1.0, 3.0), 0.05, 2).unwrap();
    let truth = data.partition();
    let out = wasserstein_spectral_cluster(data.points(), 2, &WSpectralConfig::default()).unwrap();
    let kmeans = lloyd_barycenter_kmeans(data.points(), 2, 2, 10).unwrap();
    assert!(adjusted_rand_index(&out.partition, &truth).unwrap() >= 0.99);
    assert!(adjusted_rand_index(&kmeans.partition, &truth).unwrap() <= 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_kernel_has_leading_eigenvalue_one(x in point_cloud(), sigma in 0.5..20.0f64) {
        let affinity = gaussian_affinity(x.view(), sigma).unwrap();
        let kernel = normalize_affinity(&affinity).unwrap();
        // sqrt(degree) is an eigenvector with eigenvalue 1 ...
        let root_degree = affinity.entries().sum_axis(Axis(1)).mapv(f64::sqrt);
        let image = kernel.dot(&root_degree);
        prop_assert!((&image - &root_degree).iter().all(|v| v.abs() <= 1e-9 * root_degree.dot(&root_degree).sqrt()));
        // ... and no power iterate climbs above it
        let m = kernel.nrows();
        let start = Array1::from_shape_fn(m, |i| 1.0 + (i as f64 * 0.7).sin());
        let peak = power_iteration_peak(kernel.view(), start, 500);
        prop_assert!(peak <= 1.0 + 1e-9, "{peak}");
        prop_assert!(power_iteration_peak(kernel.view(), root_degree, 5) >= 1.0 - 1e-9);
    }

    #[test]
    fn embedding_rows_have_unit_norm(x in point_cloud(), k in 1..=3usize) {
        let out = wasserstein_spectral_cluster(x.view(), k, &WSpectralConfig::default()).unwrap();
        for (i, row) in out.embedding.rows.outer_iter().enumerate() {
            if !out.embedding.small_norm_rows.contains(&i) {
                prop_assert!((row.dot(&row).sqrt() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn centers_are_member_means(x in point_cloud(), k in 1..=3usize, seed in 0..1000u64) {
        let r = lloyd_barycenter_kmeans(x.view(), k, seed, 5).unwrap();
        prop_assert!(r.objective >= 0.0);
        for (c, members) in r.partition.members().iter().enumerate() {
            let mean = x.select(Axis(0), members).mean_axis(Axis(0)).unwrap();
            prop_assert!((&mean - &r.centers.row(c)).iter().all(|v| v.abs() <= 1e-9));
        }
    }

    #[test]
    fn objective_equals_wasserstein_to_the_pushforward(x in point_cloud(), k in 1..=3usize, seed in 0..1000u64) {
        let r = lloyd_barycenter_kmeans(x.view(), k, seed, 5).unwrap();
        let (mse, w) = barycenter_objective_check(x.view(), &r).unwrap();
        prop_assert!((mse - w).abs() <= 1e-3 * mse.max(1.0), "{mse} vs {w}");
    }

    #[test]
    fn permuting_points_permutes_the_partition(x in point_cloud(), k in 1..=3usize, shift in 1..40usize) {
        let m = x.nrows();
        let perm: Vec<usize> = (0..m).map(|i| (i + shift) % m).collect();
        let config = WSpectralConfig::default();
        let a = wasserstein_spectral_cluster(x.view(), k, &config).unwrap();
        let b = wasserstein_spectral_cluster(x.select(Axis(0), &perm).view(), k, &config).unwrap();
        for (pos, &orig) in perm.iter().enumerate() {
            prop_assert_eq!(b.partition.assignment()[pos], a.partition.assignment()[orig]);
        }
    }

    #[test]
    fn clustering_is_deterministic(x in point_cloud(), k in 1..=3usize, seed in 0..1000u64) {
        let config = WSpectralConfig { seed, ..Default::default() };
        let a = wasserstein_spectral_cluster(x.view(), k, &config).unwrap();
        let b = wasserstein_spectral_cluster(x.view(), k, &config).unwrap();
        prop_assert_eq!(a.partition, b.partition);
    }
}
