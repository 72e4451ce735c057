//! Discrete probability measures, labeled datasets and the nested
//! (measure-of-measures) view of a domain.
//!
//! Point clouds are stored as `n × d` row-major matrices: one row per point.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::{Error, Result};

/// Tolerance on `Σ weights = 1`.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Stacks rows into an `n × d` matrix, rejecting ragged or non-finite input.
pub fn points_from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let first = rows.first().ok_or(Error::EmptyMeasure)?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::InvalidParameter("points must have dimension >= 1".into()));
    }
    let mut flat = Vec::with_capacity(rows.len() * dim);
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        flat.extend_from_slice(row);
    }
    let points = Array2::from_shape_vec((rows.len(), dim), flat)
        .expect("row lengths checked above");
    check_finite(points.view())?;
    Ok(points)
}

pub(crate) fn check_finite(points: ArrayView2<f64>) -> Result<()> {
    for (i, row) in points.outer_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
    }
    Ok(())
}

/// Checks that `weights` is a probability vector.
pub fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidWeights(format!("entry {w} is negative or non-finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// A weighted point cloud `Σ_i w_i δ_{x_i}` with weights on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    support: Array2<f64>,
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        if support.nrows() == 0 {
            return Err(Error::EmptyMeasure);
        }
        if support.nrows() != weights.len() {
            return Err(Error::LengthMismatch {
                left: support.nrows(),
                right: weights.len(),
            });
        }
        check_finite(support.view())?;
        check_simplex(weights.as_slice().expect("owned vector is contiguous"))?;
        Ok(Self { support, weights })
    }

    /// Uniform weights `1/n` on the rows of `support`.
    pub fn uniform(support: Array2<f64>) -> Result<Self> {
        let n = support.nrows();
        if n == 0 {
            return Err(Error::EmptyMeasure);
        }
        check_finite(support.view())?;
        Ok(Self {
            support,
            weights: Array1::from_elem(n, 1.0 / n as f64),
        })
    }

    pub fn support(&self) -> ArrayView2<'_, f64> {
        self.support.view()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.support.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    /// True when every weight equals `1/n` exactly.
    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&v| v == w)
    }
}

/// Empirical measure with uniform weights on a list of points.
pub fn empirical_uniform(points: &[Vec<f64>]) -> Result<DiscreteMeasure> {
    DiscreteMeasure::uniform(points_from_rows(points)?)
}

/// Points with dense class ids `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabeledDataset {
    /// Builds a dataset whose class count is `max(label) + 1`.
    pub fn new(points: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::with_classes(points, labels, n_classes)
    }

    pub fn with_classes(points: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: points.nrows(),
                right: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, k: n_classes });
        }
        check_finite(points.view())?;
        Ok(Self {
            points,
            labels,
            n_classes,
        })
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Class ids as a partition of the points.
    pub fn partition(&self) -> Partition {
        Partition {
            assignment: self.labels.clone(),
            k: self.n_classes,
        }
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>) {
        (self.points, self.labels)
    }
}

/// Assignment of `n` items to `k` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(assignment: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&label) = assignment.iter().find(|&&g| g >= k) {
            return Err(Error::LabelOutOfRange { label, k });
        }
        Ok(Self { assignment, k })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &g in &self.assignment {
            sizes[g] += 1;
        }
        sizes
    }

    /// Indices of the members of each group, in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &g) in self.assignment.iter().enumerate() {
            members[g].push(i);
        }
        members
    }

    /// First empty group, if any.
    pub fn first_empty_group(&self) -> Option<usize> {
        self.group_sizes().iter().position(|&s| s == 0)
    }
}

/// A domain seen as a measure over `k` structures (classes or clusters).
///
/// Structure `h` is the uniform measure on its members and carries the meta
/// weight `|C_h| / n`. `members[h]` records the original row of every atom so
/// transported points can be written back in input order.
#[derive(Debug, Clone)]
pub struct StructuredDomain {
    structures: Vec<DiscreteMeasure>,
    meta_weights: Array1<f64>,
    members: Vec<Vec<usize>>,
}

impl StructuredDomain {
    pub fn structures(&self) -> &[DiscreteMeasure] {
        &self.structures
    }

    pub fn meta_weights(&self) -> &Array1<f64> {
        &self.meta_weights
    }

    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn k(&self) -> usize {
        self.structures.len()
    }

    pub fn total_points(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    /// Collapses the hierarchy back into one measure, in original point order:
    /// atom `i` of structure `h` gets weight `meta_weights[h] * w_i`.
    pub fn flatten(&self) -> DiscreteMeasure {
        let n = self.total_points();
        let dim = self.structures[0].dim();
        let mut support = Array2::zeros((n, dim));
        let mut weights = Array1::zeros(n);
        for (h, structure) in self.structures.iter().enumerate() {
            for (local, &row) in self.members[h].iter().enumerate() {
                support.row_mut(row).assign(&structure.support().row(local));
                weights[row] = self.meta_weights[h] * structure.weights()[local];
            }
        }
        DiscreteMeasure { support, weights }
    }
}

/// Splits `points` into the structures of `part`, each weighted uniformly,
/// with meta weights proportional to the group sizes.
pub fn structures_from_partition(
    points: ArrayView2<f64>,
    part: &Partition,
) -> Result<StructuredDomain> {
    if points.nrows() != part.len() {
        return Err(Error::LengthMismatch {
            left: points.nrows(),
            right: part.len(),
        });
    }
    if part.k() == 0 || points.nrows() == 0 {
        return Err(Error::EmptyMeasure);
    }
    if let Some(h) = part.first_empty_group() {
        return Err(Error::EmptyStructure(h));
    }
    let n = points.nrows() as f64;
    let members = part.members();
    let structures = members
        .iter()
        .map(|rows| DiscreteMeasure::uniform(points.select(Axis(0), rows)))
        .collect::<Result<Vec<_>>>()?;
    let meta_weights = members.iter().map(|rows| rows.len() as f64 / n).collect();
    Ok(StructuredDomain {
        structures,
        meta_weights,
        members,
    })
}
