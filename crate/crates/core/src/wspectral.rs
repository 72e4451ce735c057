//! Wasserstein-spectral clustering.
//!
//! Spectral clustering with affinity `K̃` is the search for a support-size-`k`
//! 2-Wasserstein barycenter of the empirical measure of the embedded points
//! `ξ(x_i)`, where `ξ` is given by the leading eigenvectors of
//! `K = D̃^{-1/2} K̃ D̃^{-1/2}`. Lloyd's algorithm on the embedding computes
//! that barycenter: for a Voronoi-consistent clustering the k-means objective
//! equals `W_2^2(ρ̂_m, π_C # ρ̂_m)`, which [`barycenter_objective_check`]
//! evaluates independently with Sinkhorn.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::measures::{check_finite, DiscreteMeasure, Partition};
use crate::ot::{sinkhorn, squared_distance, squared_euclidean_cost, transport_cost, SinkhornParams};
use crate::{Error, Result};

/// Neighbour rank used by [`Bandwidth::Auto`].
pub const AUTO_NEIGHBOR_RANK: usize = 7;
pub const DEFAULT_RESTARTS: usize = 10;
pub const LLOYD_MAX_ITERATIONS: usize = 300;
const SMALL_ROW_NORM: f64 = 1e-12;
const EIGEN_GAP_TOLERANCE: f64 = 1e-10;

/// Gaussian kernel width selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median over points of the distance to the 7th nearest neighbour
    /// (clamped to `m − 1` neighbours on tiny inputs).
    Auto,
    /// Median of all pairwise Euclidean distances.
    MedianPairwise,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, x: ArrayView2<f64>) -> Result<f64> {
        let sigma = match self {
            Bandwidth::Fixed(s) => s,
            Bandwidth::Auto => knn_median_distance(x, AUTO_NEIGHBOR_RANK),
            Bandwidth::MedianPairwise => median_pairwise_distance(x),
        };
        if sigma.is_finite() && sigma > 0.0 {
            Ok(sigma)
        } else {
            Err(Error::NonPositiveSigma(sigma))
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len().is_multiple_of(2) {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    }
}

fn median_pairwise_distance(x: ArrayView2<f64>) -> f64 {
    let m = x.nrows();
    let mut d = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            d.push(squared_distance(x.row(i), x.row(j)).sqrt());
        }
    }
    median(&mut d)
}

fn knn_median_distance(x: ArrayView2<f64>, rank: usize) -> f64 {
    let m = x.nrows();
    if m < 2 {
        return 0.0;
    }
    let rank = rank.min(m - 1);
    let mut kth: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..m)
                .filter(|&j| j != i)
                .map(|j| squared_distance(x.row(i), x.row(j)))
                .collect();
            d.select_nth_unstable_by(rank - 1, f64::total_cmp);
            d[rank - 1].sqrt()
        })
        .collect();
    median(&mut kth)
}

/// Symmetric `m × m` affinity with entries in `[0, 1]` and unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(Array2<f64>);

impl AffinityMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (m, n) = entries.dim();
        if m != n {
            return Err(Error::ShapeMismatch {
                expected: (m, m),
                found: (m, n),
            });
        }
        for i in 0..m {
            for j in 0..m {
                let v = entries[[i, j]];
                if !(0.0..=1.0).contains(&v) || (v - entries[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "affinity entry ({i}, {j}) = {v} is out of range or asymmetric"
                    )));
                }
            }
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }
}

/// `K̃_ij = exp(−‖x_i − x_j‖² / (2σ²))`.
pub fn gaussian_affinity(x: ArrayView2<f64>, sigma: f64) -> Result<AffinityMatrix> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let m = x.nrows();
    let scale = 1.0 / (2.0 * sigma * sigma);
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|j| (-squared_distance(x.row(i), x.row(j)) * scale).exp())
                .collect()
        })
        .collect();
    let entries = Array2::from_shape_fn((m, m), |(i, j)| rows[i][j]);
    Ok(AffinityMatrix(entries))
}

/// `K = D̃^{-1/2} K̃ D̃^{-1/2}` with `d_i = Σ_j K̃_ij`.
pub fn normalize_affinity(affinity: &AffinityMatrix) -> Result<Array2<f64>> {
    let k = affinity.entries();
    let degrees = k.sum_axis(Axis(1));
    if let Some(i) = degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::ZeroDegree(i));
    }
    let m = k.nrows();
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let v = k[[i, j]] / (degrees[i] * degrees[j]).sqrt();
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}

/// Rows of the `k` leading eigenvectors, normalized to unit length.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub rows: Array2<f64>,
    /// The `k` leading eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Rows whose norm before normalization was below 1e-12; left as is.
    pub small_norm_rows: Vec<usize>,
    /// `λ_k` and `λ_{k+1}` coincide, so the embedding is not unique.
    pub degenerate_spectrum: bool,
}

/// Embeds each sample with the eigenvectors of the `k` largest eigenvalues of
/// the symmetric matrix `kernel`. Equal eigenvalues keep the solver's order.
pub fn spectral_embed(kernel: ArrayView2<f64>, k: usize) -> Result<SpectralEmbedding> {
    let (m, n) = kernel.dim();
    if m != n {
        return Err(Error::ShapeMismatch {
            expected: (m, m),
            found: (m, n),
        });
    }
    if k == 0 || k > m {
        return Err(Error::InvalidParameter(format!("need 1 <= k <= {m}, got {k}")));
    }
    let matrix = DMatrix::from_fn(m, m, |i, j| kernel[[i, j]]);
    let eig = SymmetricEigen::try_new(matrix, 1e-14, 0)
        .ok_or_else(|| Error::EigenFailure(format!("no convergence on a {m}×{m} matrix")))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues: Vec<f64> = order[..k].iter().map(|&c| eig.eigenvalues[c]).collect();
    let degenerate_spectrum = k < m && {
        let gap = eig.eigenvalues[order[k - 1]] - eig.eigenvalues[order[k]];
        gap <= EIGEN_GAP_TOLERANCE * eigenvalues[0].abs().max(1.0)
    };
    if degenerate_spectrum {
        log::warn!("eigenvalues {k} and {} coincide; the spectral embedding is not unique", k + 1);
    }

    let mut rows = Array2::from_shape_fn((m, k), |(i, c)| eig.eigenvectors[(i, order[c])]);
    let mut small_norm_rows = Vec::new();
    for (i, mut row) in rows.outer_iter_mut().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < SMALL_ROW_NORM {
            small_norm_rows.push(i);
        } else {
            row /= norm;
        }
    }
    if !small_norm_rows.is_empty() {
        log::warn!("{} embedded rows have near-zero norm", small_norm_rows.len());
    }
    Ok(SpectralEmbedding {
        rows,
        eigenvalues,
        small_norm_rows,
        degenerate_spectrum,
    })
}

/// Output of Lloyd's algorithm.
#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub partition: Partition,
    /// `k × d`; each center is the mean of its members.
    pub centers: Array2<f64>,
    /// Mean squared distance of every point to its assigned center.
    pub objective: f64,
}

fn count_distinct_rows(points: ArrayView2<f64>) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .outer_iter()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// k-means (support-size-`k` barycenter of the empirical measure) by Lloyd
/// iterations from `restarts` k-means++ seedings; keeps the lowest objective.
/// Restart `r` draws from stream `r` of a ChaCha8 generator seeded with
/// `seed`, so the result depends only on the inputs.
pub fn lloyd_barycenter_kmeans(
    points: ArrayView2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusteringResult> {
    let m = points.nrows();
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidParameter("k and restarts must be >= 1".into()));
    }
    check_finite(points)?;
    let distinct = count_distinct_rows(points);
    if k > distinct {
        return Err(Error::KExceedsDistinctPoints { k, distinct });
    }
    debug_assert!(m >= k);
    let runs: Vec<Result<ClusteringResult>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd_once(points, k, &mut rng)
        })
        .collect();
    let mut best: Option<ClusteringResult> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn plus_plus_init(points: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let m = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..m)));
    let mut nearest: Vec<f64> = points
        .outer_iter()
        .map(|p| squared_distance(p, centers.row(0)))
        .collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a center
            Err(_) => rng.random_range(0..m),
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.outer_iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(p, centers.row(c)));
        }
    }
    centers
}

fn nearest_center(p: ndarray::ArrayView1<f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.outer_iter().enumerate() {
        let d = squared_distance(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd_once(points: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<ClusteringResult> {
    let m = points.nrows();
    let mut centers = plus_plus_init(points, k, rng);
    let mut assignment = vec![usize::MAX; m];
    for _ in 0..LLOYD_MAX_ITERATIONS {
        let mut changed = false;
        let mut dist = vec![0.0; m];
        for (i, p) in points.outer_iter().enumerate() {
            let (c, d) = nearest_center(p, &centers);
            dist[i] = d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        changed |= repair_empty_clusters(points, &mut centers, &mut assignment, &mut dist)?;
        if !changed {
            break;
        }
        centers = cluster_means(points, &assignment, k);
    }
    centers = cluster_means(points, &assignment, k);
    let objective = assignment
        .iter()
        .zip(points.outer_iter())
        .map(|(&c, p)| squared_distance(p, centers.row(c)))
        .sum::<f64>()
        / m as f64;
    Ok(ClusteringResult {
        partition: Partition::new(assignment, k)?,
        centers,
        objective,
    })
}

/// Moves each empty center onto the point farthest from its own center.
fn repair_empty_clusters(
    points: ArrayView2<f64>,
    centers: &mut Array2<f64>,
    assignment: &mut [usize],
    dist: &mut [f64],
) -> Result<bool> {
    let k = centers.nrows();
    let mut sizes = vec![0usize; k];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    let mut repaired = false;
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..assignment.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .ok_or(Error::EmptyCluster(empty))?;
        sizes[assignment[donor]] -= 1;
        sizes[empty] = 1;
        assignment[donor] = empty;
        dist[donor] = 0.0;
        centers.row_mut(empty).assign(&points.row(donor));
        repaired = true;
    }
    Ok(repaired)
}

fn cluster_means(points: ArrayView2<f64>, assignment: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (p, &c) in points.outer_iter().zip(assignment) {
        let mut row = sums.row_mut(c);
        row += &p;
        counts[c] += 1;
    }
    for (mut row, &n) in sums.outer_iter_mut().zip(&counts) {
        if n > 0 {
            row /= n as f64;
        }
    }
    sums
}

/// Both sides of the k-means / Wasserstein identity: the mean squared error
/// of the assignment and `W_2^2` between the empirical measure and its
/// pushforward onto the centers, the latter solved by Sinkhorn at
/// `ε = 1e-4 · mean(C)`.
pub fn barycenter_objective_check(
    points: ArrayView2<f64>,
    result: &ClusteringResult,
) -> Result<(f64, f64)> {
    let m = points.nrows();
    if m != result.partition.len() {
        return Err(Error::LengthMismatch {
            left: m,
            right: result.partition.len(),
        });
    }
    let assignment = result.partition.assignment();
    let mse = points
        .outer_iter()
        .zip(assignment)
        .map(|(p, &c)| squared_distance(p, result.centers.row(c)))
        .sum::<f64>()
        / m as f64;

    let sizes = result.partition.group_sizes();
    let occupied: Vec<usize> = (0..sizes.len()).filter(|&c| sizes[c] > 0).collect();
    let centers = result.centers.select(Axis(0), &occupied);
    let pushforward = DiscreteMeasure::new(
        centers,
        occupied.iter().map(|&c| sizes[c] as f64 / m as f64).collect(),
    )?;
    let empirical = DiscreteMeasure::uniform(points.to_owned())?;
    let cost = squared_euclidean_cost(empirical.support(), pushforward.support())?;
    let epsilon = (1e-4 * cost.mean()).max(1e-12);
    let params = SinkhornParams::new(epsilon)?.with_max_iterations(100_000)?;
    let solution = sinkhorn(&cost, empirical.weights(), pushforward.weights(), &params)?;
    let wasserstein = transport_cost(&solution.plan, &cost)?;
    Ok((mse, wasserstein))
}

/// Settings for [`wasserstein_spectral_cluster`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WSpectralConfig {
    pub bandwidth: Bandwidth,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for WSpectralConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Auto,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WSpectralOutcome {
    pub partition: Partition,
    pub sigma: f64,
    /// Embedding and clustering are in the caller's point order.
    pub embedding: SpectralEmbedding,
    pub clustering: ClusteringResult,
}

/// Gaussian affinity → normalization → spectral embedding → Lloyd barycenter.
///
/// Points are processed in a canonical (lexicographic) order and cluster ids
/// are numbered by first appearance in that order, so permuting the input
/// permutes the output assignment identically.
pub fn wasserstein_spectral_cluster(
    x: ArrayView2<f64>,
    k: usize,
    config: &WSpectralConfig,
) -> Result<WSpectralOutcome> {
    let m = x.nrows();
    if k == 0 || m < k {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= k <= number of points ({m}), got {k}"
        )));
    }
    check_finite(x)?;
    let order = canonical_order(x);
    let sorted = x.select(Axis(0), &order);

    let sigma = config.bandwidth.resolve(sorted.view())?;
    let affinity = gaussian_affinity(sorted.view(), sigma)?;
    let kernel = normalize_affinity(&affinity)?;
    let embedding = spectral_embed(kernel.view(), k)?;
    let clustering = match lloyd_barycenter_kmeans(embedding.rows.view(), k, config.seed, config.restarts) {
        Err(Error::EmptyCluster(c)) => {
            log::warn!("cluster {c} emptied; retrying with a new seed");
            lloyd_barycenter_kmeans(
                embedding.rows.view(),
                k,
                config.seed.wrapping_add(1),
                config.restarts,
            )?
        }
        other => other?,
    };

    // relabel by first appearance, then undo the canonical ordering
    let mut relabel = vec![usize::MAX; k];
    let mut next = 0;
    for &c in clustering.partition.assignment() {
        if relabel[c] == usize::MAX {
            relabel[c] = next;
            next += 1;
        }
    }
    let mut assignment = vec![0; m];
    let mut inverse = vec![0; m];
    for (pos, &orig) in order.iter().enumerate() {
        assignment[orig] = relabel[clustering.partition.assignment()[pos]];
        inverse[orig] = pos;
    }
    let partition = Partition::new(assignment, k)?;
    if let Some(g) = partition.first_empty_group() {
        return Err(Error::EmptyCluster(g));
    }

    let mut centers = Array2::zeros(clustering.centers.dim());
    for (c, &to) in relabel.iter().enumerate() {
        centers.row_mut(to).assign(&clustering.centers.row(c));
    }
    let embedding = SpectralEmbedding {
        rows: embedding.rows.select(Axis(0), &inverse),
        small_norm_rows: embedding.small_norm_rows.iter().map(|&p| order[p]).collect(),
        ..embedding
    };
    let clustering = ClusteringResult {
        partition: partition.clone(),
        centers,
        objective: clustering.objective,
    };
    Ok(WSpectralOutcome {
        partition,
        sigma,
        embedding,
        clustering,
    })
}

/// Row indices sorted lexicographically by coordinates.
fn canonical_order(x: ArrayView2<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b).iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Normalized cut `Σ_l links(V_l, V̄_l) / degree(V_l)`.
pub fn ncut_objective(part: &Partition, affinity: &AffinityMatrix) -> Result<f64> {
    let m = affinity.len();
    if part.len() != m {
        return Err(Error::LengthMismatch {
            left: part.len(),
            right: m,
        });
    }
    if let Some(g) = part.first_empty_group() {
        return Err(Error::EmptyGroup(g));
    }
    let k = affinity.entries();
    let a = part.assignment();
    let mut links = Array1::<f64>::zeros(part.k());
    let mut degree = Array1::<f64>::zeros(part.k());
    for i in 0..m {
        for j in 0..m {
            let w = k[[i, j]];
            degree[a[i]] += w;
            if a[i] != a[j] {
                links[a[i]] += w;
            }
        }
    }
    Ok(links
        .iter()
        .zip(degree.iter())
        .map(|(l, d)| if *d > 0.0 { l / d } else { 0.0 })
        .sum())
}
