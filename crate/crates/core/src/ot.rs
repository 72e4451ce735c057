//! Discrete optimal transport.
//!
//! The ground cost is always the squared Euclidean distance, so every
//! transport cost computed here is a `W_2^2` value (the exponent `p` is fixed
//! to 2 throughout the crate).
//!
//! [`sinkhorn`] solves the entropic problem
//!
//! ```text
//! min_{γ ∈ U(a,b)} ⟨γ, C⟩ − ε H(γ),   H(γ) = −Σ γ_ij (log γ_ij − 1)
//! ```
//!
//! in the log domain on the dual potentials `(f, g)`, with
//! `γ_ij = exp((f_i + g_j − C_ij) / ε)`. `ε` is an absolute regularizer on the
//! raw cost; no normalization of `C` takes place.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::measures::{check_simplex, DiscreteMeasure};
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Marginal tolerance a [`TransportPlan`] must satisfy on construction.
pub const PLAN_MARGINAL_TOLERANCE: f64 = 1e-6;

/// Largest instance [`exact_ot_uniform`] will enumerate.
pub const EXACT_MAX_N: usize = 8;

/// Non-negative, finite `n × m` cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if let Some(v) = entries.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "cost entries must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn mean(&self) -> f64 {
        self.0.mean().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.t().to_owned())
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// `C_ij = ‖x_i − y_j‖²`.
pub fn squared_euclidean_cost(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<CostMatrix> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            found: y.ncols(),
        });
    }
    let mut c = Array2::zeros((x.nrows(), y.nrows()));
    for (i, xi) in x.outer_iter().enumerate() {
        for (j, yj) in y.outer_iter().enumerate() {
            c[[i, j]] = squared_distance(xi, yj);
        }
    }
    CostMatrix::new(c)
}

pub(crate) fn squared_distance(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Entropic solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    /// Regularization strength ε (absolute, same units as the cost).
    pub epsilon: f64,
    /// Stop once both marginal violations (∞-norm) are at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SinkhornParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        Self {
            epsilon,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
        .validated()
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        self.tolerance = tolerance;
        self.validated()
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Result<Self> {
        self.max_iterations = max_iterations;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        Ok(self)
    }
}

/// A coupling with its prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    coupling: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl TransportPlan {
    /// Validates non-negativity and both marginals to
    /// [`PLAN_MARGINAL_TOLERANCE`].
    pub fn new(coupling: Array2<f64>, a: Array1<f64>, b: Array1<f64>) -> Result<Self> {
        let plan = Self::unchecked(coupling, a, b)?;
        if plan.coupling.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("coupling must be non-negative".into()));
        }
        let violation = plan.marginal_violation();
        if violation > PLAN_MARGINAL_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "coupling marginals off by {violation:e}"
            )));
        }
        Ok(plan)
    }

    fn unchecked(coupling: Array2<f64>, a: Array1<f64>, b: Array1<f64>) -> Result<Self> {
        if coupling.dim() != (a.len(), b.len()) {
            return Err(Error::ShapeMismatch {
                expected: (a.len(), b.len()),
                found: coupling.dim(),
            });
        }
        Ok(Self {
            coupling,
            row_marginal: a,
            col_marginal: b,
        })
    }

    pub fn coupling(&self) -> ArrayView2<'_, f64> {
        self.coupling.view()
    }

    pub fn row_marginal(&self) -> &Array1<f64> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Array1<f64> {
        &self.col_marginal
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coupling.dim()
    }

    pub fn row_violation(&self) -> f64 {
        self.coupling
            .outer_iter()
            .zip(self.row_marginal.iter())
            .map(|(row, a)| (row.sum() - a).abs())
            .fold(0.0, f64::max)
    }

    pub fn col_violation(&self) -> f64 {
        self.coupling
            .columns()
            .into_iter()
            .zip(self.col_marginal.iter())
            .map(|(col, b)| (col.sum() - b).abs())
            .fold(0.0, f64::max)
    }

    /// ∞-norm of both marginal errors.
    pub fn marginal_violation(&self) -> f64 {
        self.row_violation().max(self.col_violation())
    }

    pub fn transpose(&self) -> Self {
        Self {
            coupling: self.coupling.t().to_owned(),
            row_marginal: self.col_marginal.clone(),
            col_marginal: self.row_marginal.clone(),
        }
    }
}

/// Outcome of [`sinkhorn`]. A run that hits `max_iterations` still returns
/// its last iterate; inspect [`converged`](Self::converged) or call
/// [`into_converged`](Self::into_converged).
#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub plan: TransportPlan,
    /// Dual potentials `(f, g)` at the final ε.
    pub potentials: (Array1<f64>, Array1<f64>),
    pub iterations: usize,
    /// Marginal ∞-norm violation of `plan`.
    pub residual: f64,
    pub converged: bool,
}

impl SinkhornSolution {
    /// `NonConvergence` if the tolerance was not reached.
    pub fn warning(&self) -> Option<Error> {
        (!self.converged).then_some(Error::NonConvergence {
            iterations: self.iterations,
            residual: self.residual,
        })
    }

    pub fn into_converged(self) -> Result<TransportPlan> {
        match self.warning() {
            Some(err) => Err(err),
            None => Ok(self.plan),
        }
    }
}

/// Log-domain Sinkhorn for the entropic transport problem.
///
/// When ε is small relative to the cost range the solve is warm-started
/// through a geometric ε-schedule starting at `max(C)`; only the last stage
/// runs at the requested ε and to the requested tolerance. All stages share
/// the `max_iterations` budget.
pub fn sinkhorn(
    cost: &CostMatrix,
    a: &Array1<f64>,
    b: &Array1<f64>,
    params: &SinkhornParams,
) -> Result<SinkhornSolution> {
    let (n, m) = cost.shape();
    if (a.len(), b.len()) != (n, m) {
        return Err(Error::ShapeMismatch {
            expected: (n, m),
            found: (a.len(), b.len()),
        });
    }
    check_simplex(a.as_slice().expect("contiguous"))?;
    check_simplex(b.as_slice().expect("contiguous"))?;
    let params = params.validated()?;

    let c = cost.entries();
    let ct = c.t().to_owned();
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);

    let schedule = epsilon_schedule(cost.max(), params.epsilon);
    let mut iterations = 0;
    let mut buf = vec![0.0; m.max(n)];
    for (stage, &eps) in schedule.iter().enumerate() {
        let last = stage + 1 == schedule.len();
        let remaining = params.max_iterations.saturating_sub(iterations);
        // every stage ends on a row update, so row sums are exact and the
        // column residual is the one measured
        let (stage_tol, stage_budget) = if last {
            (params.tolerance, remaining)
        } else {
            (WARM_START_TOLERANCE, WARM_START_ITERATIONS.min(remaining.saturating_sub(1)))
        };
        let mut stage_iters = 0;
        let mut new_g = Array1::zeros(m);
        while stage_iters < stage_budget {
            if last && stage_iters > 0 && stage_iters % NEWTON_INTERVAL == 0 && n + m <= NEWTON_MAX_DIM {
                let budget = (stage_budget - stage_iters - 1).min(NEWTON_MAX_STEPS);
                stage_iters += newton_polish(c, a, b, &mut f, &mut g, eps, params.tolerance, budget);
            }
            for i in 0..n {
                let lse = log_sum_exp(g.iter().zip(c.row(i)).map(|(gj, cij)| (gj - cij) / eps), &mut buf);
                f[i] = eps * (log_a[i] - lse);
            }
            stage_iters += 1;
            let mut col_residual: f64 = 0.0;
            for j in 0..m {
                let lse = log_sum_exp(f.iter().zip(ct.row(j)).map(|(fi, cij)| (fi - cij) / eps), &mut buf);
                col_residual = col_residual.max(((g[j] / eps + lse).exp() - b[j]).abs());
                new_g[j] = eps * (log_b[j] - lse);
            }
            if col_residual <= stage_tol || stage_iters == stage_budget {
                break;
            }
            std::mem::swap(&mut g, &mut new_g);
        }
        iterations += stage_iters;
    }

    let eps = params.epsilon;
    let mut coupling = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            coupling[[i, j]] = ((f[i] + g[j] - c[[i, j]]) / eps).exp();
        }
    }
    let plan = TransportPlan::unchecked(coupling, a.clone(), b.clone())?;
    let residual = plan.marginal_violation();
    let converged = residual <= params.tolerance;
    if !converged {
        log::warn!(
            "sinkhorn stopped after {iterations} iterations with residual {residual:e} (ε = {eps})"
        );
    }
    Ok(SinkhornSolution {
        plan,
        potentials: (f, g),
        iterations,
        residual,
        converged,
    })
}

const WARM_START_TOLERANCE: f64 = 1e-4;
/// Sinkhorn iterations of the final stage between Newton attempts.
const NEWTON_INTERVAL: usize = 200;
const NEWTON_MAX_STEPS: usize = 50;
/// Relative diagonal shift keeping the Newton system definite when some
/// blocks of the plan are numerically decoupled.
const NEWTON_DAMPING: f64 = 1e-10;
/// Largest `n + m` for which the dense Newton system is formed.
const NEWTON_MAX_DIM: usize = 1000;
const WARM_START_ITERATIONS: usize = 100;
const SCHEDULE_FACTOR: f64 = 0.5;

fn epsilon_schedule(cost_scale: f64, epsilon: f64) -> Vec<f64> {
    let mut schedule = Vec::new();
    let mut e = cost_scale;
    while e > 4.0 * epsilon {
        schedule.push(e);
        e *= SCHEDULE_FACTOR;
    }
    schedule.push(epsilon);
    schedule
}

/// Gibbs coupling of the potentials with its row and column sums.
fn gibbs(c: ArrayView2<f64>, f: &Array1<f64>, g: &Array1<f64>, eps: f64) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let (n, m) = c.dim();
    let gamma = Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - c[[i, j]]) / eps).exp());
    let rows = gamma.sum_axis(Axis(1));
    let cols = gamma.sum_axis(Axis(0));
    (gamma, rows, cols)
}

/// Newton steps on the dual `⟨f,a⟩ + ⟨g,b⟩ − ε Σ exp((f_i + g_j − C_ij)/ε)`,
/// with `g_{m−1}` pinned to remove the constant shift and a small diagonal
/// damping. Sinkhorn stalls when
/// the plan is close to a permutation whose cycles are only weakly coupled;
/// the Newton system resolves that mode directly. Steps are accepted only if
/// they shrink the marginal gradient, so a failed attempt leaves `f, g` as
/// they were. Returns the number of steps taken.
#[allow(clippy::too_many_arguments)]
fn newton_polish(
    c: ArrayView2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    f: &mut Array1<f64>,
    g: &mut Array1<f64>,
    eps: f64,
    tolerance: f64,
    max_steps: usize,
) -> usize {
    let (n, m) = c.dim();
    let dim = n + m - 1;
    let gradient = |rows: &Array1<f64>, cols: &Array1<f64>| -> (DVector<f64>, f64) {
        let grad = DVector::from_fn(dim, |k, _| if k < n { a[k] - rows[k] } else { b[k - n] - cols[k - n] });
        let col_last = (b[m - 1] - cols[m - 1]).abs();
        let norm = grad.amax().max(col_last);
        (grad, norm)
    };
    let (mut gamma, mut rows, mut cols) = gibbs(c, f, g, eps);
    let (mut grad, mut norm) = gradient(&rows, &cols);
    for step in 0..max_steps {
        if norm <= tolerance {
            return step;
        }
        let shift = NEWTON_DAMPING * rows.iter().chain(cols.iter()).fold(0.0, |acc: f64, &v| acc.max(v));
        let hessian = DMatrix::from_fn(dim, dim, |p, q| {
            let v = match (p < n, q < n) {
                (true, true) => if p == q { rows[p] } else { 0.0 },
                (true, false) => gamma[[p, q - n]],
                (false, true) => gamma[[q, p - n]],
                (false, false) => if p == q { cols[p - n] } else { 0.0 },
            };
            (v + if p == q { shift } else { 0.0 }) / eps
        });
        let Some(chol) = hessian.cholesky() else {
            return step;
        };
        let delta = chol.solve(&grad);
        let mut t = 1.0;
        let accepted = loop {
            let f_try = Array1::from_shape_fn(n, |i| f[i] + t * delta[i]);
            let g_try = Array1::from_shape_fn(m, |j| if j + 1 < m { g[j] + t * delta[n + j] } else { g[j] });
            let (gm, r, s) = gibbs(c, &f_try, &g_try, eps);
            let (gr, nr) = gradient(&r, &s);
            if nr.is_finite() && nr < norm {
                *f = f_try;
                *g = g_try;
                (gamma, rows, cols, grad, norm) = (gm, r, s, gr, nr);
                break true;
            }
            t *= 0.5;
            if t < 1e-6 {
                break false;
            }
        };
        if !accepted {
            return step;
        }
    }
    max_steps
}

/// `log Σ exp(v)`, treating `-inf` terms as zero mass.
fn log_sum_exp(values: impl Iterator<Item = f64>, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(values);
    let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = buf.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Exact optimum for square, uniform-marginal problems, by enumerating every
/// permutation in lexicographic order. Returns `P_σ / n` for the cheapest σ;
/// ties keep the lexicographically smallest permutation.
pub fn exact_ot_uniform(cost: &CostMatrix) -> Result<TransportPlan> {
    let (n, m) = cost.shape();
    if n != m {
        return Err(Error::ShapeMismatch {
            expected: (n, n),
            found: (n, m),
        });
    }
    if n > EXACT_MAX_N {
        return Err(Error::TooLarge(n));
    }
    if n == 0 {
        return Err(Error::EmptyMeasure);
    }
    let c = cost.entries();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum();
        if total < best_cost {
            best_cost = total;
            best.clone_from(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let w = 1.0 / n as f64;
    let mut coupling = Array2::zeros((n, n));
    for (i, &j) in best.iter().enumerate() {
        coupling[[i, j]] = w;
    }
    let marginal = Array1::from_elem(n, w);
    TransportPlan::new(coupling, marginal.clone(), marginal)
}

/// Advances to the next permutation in lexicographic order.
pub(crate) fn next_permutation(perm: &mut [usize]) -> bool {
    let Some(i) = perm.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = perm.iter().rposition(|&v| v > perm[i]).expect("pivot has a successor");
    perm.swap(i, j);
    perm[i + 1..].reverse();
    true
}

/// Frobenius product `⟨γ, C⟩`.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    if plan.shape() != cost.shape() {
        return Err(Error::ShapeMismatch {
            expected: plan.shape(),
            found: cost.shape(),
        });
    }
    Ok(plan
        .coupling()
        .iter()
        .zip(cost.entries().iter())
        .map(|(g, c)| g * c)
        .sum())
}

/// `H(γ) = −Σ γ_ij (log γ_ij − 1)` with `0 log 0 = 0`.
pub fn entropy(plan: &TransportPlan) -> f64 {
    plan.coupling()
        .iter()
        .filter(|&&g| g > 0.0)
        .map(|&g| -g * (g.ln() - 1.0))
        .sum()
}

/// Entropic `W_2^2` between two measures: the squared-Euclidean transport cost
/// of the Sinkhorn plan.
pub fn entropic_w2_squared(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    params: &SinkhornParams,
) -> Result<(f64, SinkhornSolution)> {
    let cost = squared_euclidean_cost(mu.support(), nu.support())?;
    let solution = sinkhorn(&cost, mu.weights(), nu.weights(), params)?;
    Ok((transport_cost(&solution.plan, &cost)?, solution))
}
