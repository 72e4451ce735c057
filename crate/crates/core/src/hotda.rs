//! Hierarchical optimal transport between source classes and target clusters,
//! and barycentric transport of each class onto its matched cluster.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::matching::max_weight_perfect_matching;
use crate::measures::{structures_from_partition, DiscreteMeasure, LabeledDataset, Partition, StructuredDomain};
use crate::ot::{sinkhorn, squared_euclidean_cost, transport_cost, CostMatrix, SinkhornParams, SinkhornSolution, TransportPlan};
use crate::wspectral::{wasserstein_spectral_cluster, Bandwidth, WSpectralConfig, DEFAULT_RESTARTS};
use crate::{Error, Result};

const ZERO_ROW_MASS: f64 = 1e-15;

/// Outer plan Γ, the structure cost matrix 𝒲 and every inner plan.
#[derive(Debug, Clone)]
pub struct HotResult {
    pub outer_plan: TransportPlan,
    /// `w_matrix[h][l] = ⟨γ_{h,l}, C_{h,l}⟩`, a squared 2-Wasserstein value.
    pub w_matrix: CostMatrix,
    /// `inner_plans[h][l]` couples source structure `h` with target structure `l`.
    pub inner_plans: Vec<Vec<TransportPlan>>,
    pub outer_converged: bool,
}

/// Bijection from source structures to target structures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// `map[h]` is the target structure matched to source structure `h`.
    pub map: Vec<usize>,
    /// Row-wise argmax collided and a maximum-weight matching was used.
    pub collisions_resolved: bool,
}

/// Structure costs, inner plans, and the `(h, l, error)` of each inner solve
/// that stopped before converging.
pub type PairwiseWasserstein = (CostMatrix, Vec<Vec<TransportPlan>>, Vec<(usize, usize, Error)>);

/// Pairwise entropic `W_2^2` between every source and target structure.
/// Non-converged inner solves are kept (with a warning) since the barycentric
/// map normalizes rows anyway; they are reported in the returned list.
pub fn pairwise_wasserstein(
    source: &StructuredDomain,
    target: &StructuredDomain,
    inner: &SinkhornParams,
) -> Result<PairwiseWasserstein> {
    let (ks, kt) = (source.k(), target.k());
    let sdim = source.structures()[0].dim();
    let tdim = target.structures()[0].dim();
    if sdim != tdim {
        return Err(Error::DimensionMismatch {
            expected: sdim,
            found: tdim,
        });
    }
    let solves: Vec<Result<(f64, TransportPlan, Option<Error>)>> = (0..ks * kt)
        .into_par_iter()
        .map(|idx| {
            let (h, l) = (idx / kt, idx % kt);
            solve_pair(&source.structures()[h], &target.structures()[l], inner).map_err(|e| {
                Error::InnerTransport {
                    source_index: h,
                    target_index: l,
                    error: Box::new(e),
                }
            })
        })
        .collect();

    let mut w = Array2::zeros((ks, kt));
    let mut plans: Vec<Vec<TransportPlan>> = Vec::with_capacity(ks);
    let mut warnings = Vec::new();
    let mut iter = solves.into_iter();
    for h in 0..ks {
        let mut row = Vec::with_capacity(kt);
        for l in 0..kt {
            let (cost, plan, warning) = iter.next().expect("k² solves")?;
            w[[h, l]] = cost;
            if let Some(warning) = warning {
                log::warn!("inner problem ({h}, {l}): {warning}");
                warnings.push((h, l, warning));
            }
            row.push(plan);
        }
        plans.push(row);
    }
    Ok((CostMatrix::new(w)?, plans, warnings))
}

fn solve_pair(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    params: &SinkhornParams,
) -> Result<(f64, TransportPlan, Option<Error>)> {
    let cost = squared_euclidean_cost(mu.support(), nu.support())?;
    let solution = sinkhorn(&cost, mu.weights(), nu.weights(), params)?;
    let w = transport_cost(&solution.plan, &cost)?;
    let warning = solution.warning();
    Ok((w, solution.plan, warning))
}

/// Entropic OT between the meta weights with cost 𝒲.
pub fn solve_hot(
    w_matrix: &CostMatrix,
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    outer: &SinkhornParams,
) -> Result<SinkhornSolution> {
    sinkhorn(w_matrix, alpha, beta, outer)
}

/// Hard assignment from the outer plan: the row-wise argmax when it is
/// injective, otherwise the bijection carrying the most Γ-mass.
pub fn hard_matching(outer_plan: &TransportPlan) -> Matching {
    let gamma = outer_plan.coupling();
    let (k, kt) = gamma.dim();
    assert_eq!(k, kt, "hard matching needs a square plan");
    let map: Vec<usize> = gamma
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    let mut seen = vec![false; k];
    let injective = map.iter().all(|&j| !std::mem::replace(&mut seen[j], true));
    if injective {
        return Matching {
            map,
            collisions_resolved: false,
        };
    }
    log::warn!("row-wise argmax of the outer plan is not one-to-one ({map:?}); using a maximum-weight matching");
    Matching {
        map: max_weight_perfect_matching(gamma),
        collisions_resolved: true,
    }
}

fn check_plan_shape(source: &DiscreteMeasure, target: &DiscreteMeasure, plan: &TransportPlan) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
        });
    }
    if plan.shape() != (source.len(), target.len()) {
        return Err(Error::ShapeMismatch {
            expected: (source.len(), target.len()),
            found: plan.shape(),
        });
    }
    Ok(())
}

/// Row-normalized barycentric map: point `i` goes to
/// `Σ_j γ_ij y_j / Σ_j γ_ij`.
pub fn barycentric_transport(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    plan: &TransportPlan,
) -> Result<Array2<f64>> {
    check_plan_shape(source, target, plan)?;
    let gamma = plan.coupling();
    let mut mapped = gamma.dot(&target.support());
    for (i, mut row) in mapped.outer_iter_mut().enumerate() {
        let mass = gamma.row(i).sum();
        if mass < ZERO_ROW_MASS {
            return Err(Error::ZeroRow(i));
        }
        row /= mass;
    }
    Ok(mapped)
}

/// Linear form `|C_h| · γ · Y` of the barycentric map, valid when the source
/// weights are exactly uniform (every coupling row then sums to `1/|C_h|`).
pub fn barycentric_transport_uniform(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    plan: &TransportPlan,
) -> Result<Array2<f64>> {
    check_plan_shape(source, target, plan)?;
    if !source.is_uniform() {
        return Err(Error::InvalidWeights("linear barycentric map needs uniform source weights".into()));
    }
    Ok(plan.coupling().dot(&target.support()) * source.len() as f64)
}

/// Settings for [`adapt`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptConfig {
    /// ε for the outer problem between structures.
    pub outer: SinkhornParams,
    /// ε′ for the inner problems between points.
    pub inner: SinkhornParams,
    pub bandwidth: Bandwidth,
    pub seed: u64,
    pub restarts: usize,
}

impl AdaptConfig {
    pub fn new(eps_outer: f64, eps_inner: f64) -> Result<Self> {
        Ok(Self {
            outer: SinkhornParams::new(eps_outer)?,
            inner: SinkhornParams::new(eps_inner)?,
            bandwidth: Bandwidth::Auto,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct AdaptationOutput {
    /// Source points after transport, in input order, with their labels.
    pub transported_source: LabeledDataset,
    pub matching: Matching,
    pub hot: HotResult,
    pub target_partition: Partition,
    /// Kernel width used to cluster the target.
    pub sigma: Option<f64>,
    pub warnings: Vec<String>,
    pub elapsed: Duration,
}

/// The full pipeline: cluster the target into `k` structures, match them to
/// the `k` source classes through hierarchical OT, and move each class onto
/// its cluster with the inner plan already computed for that pair.
pub fn adapt(source: &LabeledDataset, target: ArrayView2<f64>, config: &AdaptConfig) -> Result<AdaptationOutput> {
    let started = Instant::now();
    let k = source.n_classes();
    check_source(source)?;
    if target.nrows() < k {
        return Err(Error::InvalidParameter(format!(
            "target has {} points but {k} clusters are needed",
            target.nrows()
        )));
    }
    if target.ncols() != source.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: target.ncols(),
        });
    }
    let clustered = wasserstein_spectral_cluster(
        target,
        k,
        &WSpectralConfig {
            bandwidth: config.bandwidth,
            seed: config.seed,
            restarts: config.restarts,
        },
    )?;
    let mut out = adapt_with_target_partition(source, target, &clustered.partition, config)?;
    out.sigma = Some(clustered.sigma);
    if clustered.embedding.degenerate_spectrum {
        out.warnings
            .push("target affinity spectrum is degenerate at k; clustering is not unique".into());
    }
    out.elapsed = started.elapsed();
    Ok(out)
}

fn check_source(source: &LabeledDataset) -> Result<()> {
    if source.n_classes() == 0 || source.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let mut sizes = vec![0usize; source.n_classes()];
    for &l in source.labels() {
        sizes[l] += 1;
    }
    match sizes.iter().position(|&s| s == 0) {
        Some(h) => Err(Error::EmptyClass(h)),
        None => Ok(()),
    }
}

/// Steps after clustering, with a caller-provided target partition.
pub fn adapt_with_target_partition(
    source: &LabeledDataset,
    target: ArrayView2<f64>,
    target_partition: &Partition,
    config: &AdaptConfig,
) -> Result<AdaptationOutput> {
    let started = Instant::now();
    check_source(source)?;
    let k = source.n_classes();
    if target_partition.k() != k {
        return Err(Error::InvalidParameter(format!(
            "target partition has {} groups, source has {k} classes",
            target_partition.k()
        )));
    }
    let source_domain = structures_from_partition(source.points(), &source.partition())?;
    let target_domain = structures_from_partition(target, target_partition)?;

    let (w_matrix, inner_plans, inner_warnings) = pairwise_wasserstein(&source_domain, &target_domain, &config.inner)?;
    let mut warnings: Vec<String> = inner_warnings
        .iter()
        .map(|(h, l, e)| format!("inner problem ({h}, {l}): {e}"))
        .collect();

    let outer = solve_hot(
        &w_matrix,
        source_domain.meta_weights(),
        target_domain.meta_weights(),
        &config.outer,
    )?;
    if let Some(w) = outer.warning() {
        warnings.push(format!("outer problem: {w}"));
    }
    let matching = hard_matching(&outer.plan);
    if matching.collisions_resolved {
        warnings.push("hard assignment collided; resolved by maximum-weight matching".into());
    }

    let mut transported = Array2::zeros((source.len(), source.dim()));
    let moved: Vec<Result<Array2<f64>>> = (0..k)
        .into_par_iter()
        .map(|h| {
            let l = matching.map[h];
            barycentric_transport(
                &source_domain.structures()[h],
                &target_domain.structures()[l],
                &inner_plans[h][l],
            )
        })
        .collect();
    for (h, points) in moved.into_iter().enumerate() {
        let points = points?;
        for (local, &row) in source_domain.members()[h].iter().enumerate() {
            transported.row_mut(row).assign(&points.row(local));
        }
    }
    let transported_source = LabeledDataset::with_classes(transported, source.labels().to_vec(), k)?;

    Ok(AdaptationOutput {
        transported_source,
        matching,
        hot: HotResult {
            outer_converged: outer.converged,
            outer_plan: outer.plan,
            w_matrix,
            inner_plans,
        },
        target_partition: target_partition.clone(),
        sigma: None,
        warnings,
        elapsed: started.elapsed(),
    })
}
