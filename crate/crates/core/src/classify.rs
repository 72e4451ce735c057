//! Downstream classifiers trained on the transported source, and the
//! evaluation metrics used by the harness.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::measures::{LabeledDataset, Partition};
use crate::ot::squared_distance;
use crate::{Error, Result};

/// Ridge added to the kernel matrix of [`fit_rbf_ls`].
pub const DEFAULT_RIDGE: f64 = 1e-3;
const RIDGE_RETRY_FACTOR: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    NearestNeighbor,
    RbfLeastSquares,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::NearestNeighbor => "1nn",
            ClassifierKind::RbfLeastSquares => "rbf-ls",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1nn" => Ok(ClassifierKind::NearestNeighbor),
            "rbf-ls" => Ok(ClassifierKind::RbfLeastSquares),
            other => Err(Error::InvalidParameter(format!("unknown classifier `{other}`"))),
        }
    }
}

/// Which variance `V` feeds the width rule `σ = 1 / (2V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelWidth {
    /// `V` = mean of the per-coordinate variances of the training points.
    MeanCoordinateVariance,
    /// `V` = sum of the per-coordinate variances.
    TotalVariance,
    Fixed(f64),
}

impl KernelWidth {
    pub fn resolve(self, points: ArrayView2<f64>) -> Result<f64> {
        let variance = |total: bool| {
            let var = points.var_axis(Axis(0), 0.0);
            if total {
                var.sum()
            } else {
                var.mean().unwrap_or(0.0)
            }
        };
        let sigma = match self {
            KernelWidth::Fixed(s) => s,
            KernelWidth::MeanCoordinateVariance => 1.0 / (2.0 * variance(false)),
            KernelWidth::TotalVariance => 1.0 / (2.0 * variance(true)),
        };
        if sigma.is_finite() && sigma > 0.0 {
            Ok(sigma)
        } else {
            Err(Error::NonPositiveSigma(sigma))
        }
    }
}

/// Fitted 1-nearest-neighbour rule.
#[derive(Debug, Clone)]
pub struct NearestNeighbor {
    points: Array2<f64>,
    labels: Vec<usize>,
}

pub fn fit_1nn(train: &LabeledDataset) -> Result<NearestNeighbor> {
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    Ok(NearestNeighbor {
        points: train.points().to_owned(),
        labels: train.labels().to_vec(),
    })
}

impl NearestNeighbor {
    /// Label of the closest training point; ties go to the smallest index.
    pub fn predict(&self, queries: ArrayView2<f64>) -> Result<Vec<usize>> {
        check_dim(self.points.ncols(), queries)?;
        Ok((0..queries.nrows())
            .into_par_iter()
            .map(|qi| {
                let q = queries.row(qi);
                let mut best = (0, f64::INFINITY);
                for (i, p) in self.points.outer_iter().enumerate() {
                    let d = squared_distance(q, p);
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                self.labels[best.0]
            })
            .collect())
    }
}

fn check_dim(expected: usize, queries: ArrayView2<f64>) -> Result<()> {
    if queries.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: queries.ncols(),
        });
    }
    Ok(())
}

/// One-vs-rest kernel ridge regression on ±1 targets with a Gaussian kernel.
#[derive(Debug, Clone)]
pub struct RbfLeastSquares {
    points: Array2<f64>,
    /// `n × classes` dual coefficients.
    coefficients: DMatrix<f64>,
    sigma: f64,
    ridge: f64,
}

/// Solves `(K + λI) A = Y` by Cholesky. A failed factorization retries once
/// with `λ · 1e4` before giving up.
pub fn fit_rbf_ls(train: &LabeledDataset, width: KernelWidth, ridge: f64) -> Result<RbfLeastSquares> {
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if train.n_classes() < 2 {
        return Err(Error::InvalidParameter("kernel classifier needs at least 2 classes".into()));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge must be non-negative, got {ridge}")));
    }
    let sigma = width.resolve(train.points())?;
    let points = train.points().to_owned();
    let n = points.nrows();
    let gram = kernel_matrix(points.view(), points.view(), sigma);
    let targets = DMatrix::from_fn(n, train.n_classes(), |i, c| {
        if train.labels()[i] == c {
            1.0
        } else {
            -1.0
        }
    });
    let solve = |lambda: f64| {
        let mut system = gram.clone();
        for i in 0..n {
            system[(i, i)] += lambda;
        }
        system.cholesky().map(|chol| chol.solve(&targets))
    };
    let (coefficients, ridge) = match solve(ridge) {
        Some(a) => (a, ridge),
        None => {
            let retry = (ridge * RIDGE_RETRY_FACTOR).max(1e-4);
            log::warn!("kernel system singular with ridge {ridge:e}; retrying with {retry:e}");
            (solve(retry).ok_or(Error::SingularSystem(retry))?, retry)
        }
    };
    Ok(RbfLeastSquares {
        points,
        coefficients,
        sigma,
        ridge,
    })
}

fn kernel_matrix(x: ArrayView2<f64>, y: ArrayView2<f64>, sigma: f64) -> DMatrix<f64> {
    let scale = 1.0 / (2.0 * sigma * sigma);
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| x.row(i))
        .map(|xi| y.outer_iter().map(|yj| (-squared_distance(xi, yj) * scale).exp()).collect())
        .collect();
    DMatrix::from_fn(x.nrows(), y.nrows(), |i, j| rows[i][j])
}

impl RbfLeastSquares {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Per-class scores, `queries × classes`.
    pub fn decision_function(&self, queries: ArrayView2<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.points.ncols(), queries)?;
        Ok(kernel_matrix(queries, self.points.view(), self.sigma) * &self.coefficients)
    }

    /// Class with the highest score; ties go to the smallest class id.
    pub fn predict(&self, queries: ArrayView2<f64>) -> Result<Vec<usize>> {
        let scores = self.decision_function(queries)?;
        Ok(scores
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

/// A fitted classifier of either kind.
#[derive(Debug, Clone)]
pub enum Classifier {
    NearestNeighbor(NearestNeighbor),
    RbfLeastSquares(RbfLeastSquares),
}

impl Classifier {
    /// Fits `kind` with its default settings (variance width rule and
    /// [`DEFAULT_RIDGE`] for the kernel machine).
    pub fn fit(kind: ClassifierKind, train: &LabeledDataset) -> Result<Self> {
        Self::fit_with(kind, train, KernelWidth::MeanCoordinateVariance, DEFAULT_RIDGE)
    }

    pub fn fit_with(kind: ClassifierKind, train: &LabeledDataset, width: KernelWidth, ridge: f64) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::NearestNeighbor => Classifier::NearestNeighbor(fit_1nn(train)?),
            ClassifierKind::RbfLeastSquares => Classifier::RbfLeastSquares(fit_rbf_ls(train, width, ridge)?),
        })
    }

    pub fn predict(&self, queries: ArrayView2<f64>) -> Result<Vec<usize>> {
        match self {
            Classifier::NearestNeighbor(c) => c.predict(queries),
            Classifier::RbfLeastSquares(c) => c.predict(queries),
        }
    }
}

/// Fraction of positions where `pred` and `truth` agree.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index. `NaN` when the index is undefined, i.e. when both
/// partitions are trivial in the same way (all one group or all singletons),
/// which makes the expected and maximal index coincide.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    let mut table = vec![vec![0usize; b.k()]; a.k()];
    for (&x, &y) in a.assignment().iter().zip(b.assignment()) {
        table[x][y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = a.group_sizes().into_iter().map(choose2).sum();
    let cols: f64 = b.group_sizes().into_iter().map(choose2).sum();
    let total = choose2(n);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = 0.5 * (rows + cols);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(f64::NAN);
    }
    Ok((index - expected) / denom)
}
