//! Synthetic generators, rotations and CSV feature files.
//!
//! Randomness comes from `ChaCha8Rng` seeded with the caller's seed, which
//! produces the same stream on every platform.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::measures::LabeledDataset;
use crate::{Error, Result};

pub const DEFAULT_MOONS_NOISE: f64 = 0.05;
pub const DEFAULT_MOONS_PER_CLASS: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoonsConfig {
    pub samples_per_class: usize,
    pub noise_std: f64,
    /// Anticlockwise rotation about the origin, in degrees.
    pub rotation_deg: f64,
    pub seed: u64,
}

impl Default for MoonsConfig {
    fn default() -> Self {
        Self {
            samples_per_class: DEFAULT_MOONS_PER_CLASS,
            noise_std: DEFAULT_MOONS_NOISE,
            rotation_deg: 0.0,
            seed: 0,
        }
    }
}

fn gaussian(std: f64) -> Result<Normal<f64>> {
    if std.is_nan() || std < 0.0 {
        return Err(Error::InvalidParameter(format!("noise std must be >= 0, got {std}")));
    }
    Normal::new(0.0, std).map_err(|_| Error::InvalidParameter(format!("noise std must be >= 0, got {std}")))
}

fn linspace(start: f64, end: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (end - start) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| start + step * i as f64)
}

/// Two interleaving half circles. Class 0 is the upper unit arc
/// `(cos t, sin t)`, class 1 the lower arc `(1 − cos t, 0.5 − sin t)`, with
/// `t` evenly spaced on `[0, π]`. The union is shifted to mean zero, Gaussian
/// noise is added and the result is rotated about the origin.
pub fn gen_moons(cfg: &MoonsConfig) -> Result<LabeledDataset> {
    let n = cfg.samples_per_class;
    if n == 0 {
        return Err(Error::InvalidParameter("samples_per_class must be >= 1".into()));
    }
    let noise = gaussian(cfg.noise_std)?;
    let mut points = Array2::zeros((2 * n, 2));
    for (i, t) in linspace(0.0, std::f64::consts::PI, n).enumerate() {
        points[[i, 0]] = t.cos();
        points[[i, 1]] = t.sin();
        points[[n + i, 0]] = 1.0 - t.cos();
        points[[n + i, 1]] = 0.5 - t.sin();
    }
    let mean = points.mean_axis(ndarray::Axis(0)).expect("non-empty");
    points -= &mean;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    points.mapv_inplace(|v| v + noise.sample(&mut rng));
    let labels = (0..2 * n).map(|i| i / n).collect();
    let data = LabeledDataset::with_classes(points, labels, 2)?;
    rotate(&data, cfg.rotation_deg)
}

/// Two concentric circles; label = circle index (0 = inner).
pub fn gen_two_circles(n_per_circle: usize, radii: (f64, f64), noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    let (inner, outer) = radii;
    if !(inner > 0.0 && inner < outer && outer.is_finite()) {
        return Err(Error::InvalidRadii(inner, outer));
    }
    if n_per_circle == 0 {
        return Err(Error::InvalidParameter("n_per_circle must be >= 1".into()));
    }
    let noise = gaussian(noise_std)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_circle;
    let mut points = Array2::zeros((2 * n, 2));
    for (c, r) in [inner, outer].into_iter().enumerate() {
        for i in 0..n {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            points[[c * n + i, 0]] = r * t.cos() + noise.sample(&mut rng);
            points[[c * n + i, 1]] = r * t.sin() + noise.sample(&mut rng);
        }
    }
    LabeledDataset::with_classes(points, (0..2 * n).map(|i| i / n).collect(), 2)
}

/// Anticlockwise rotation of 2-D points about the origin.
pub fn rotate_points(points: ArrayView2<f64>, degrees: f64) -> Result<Array2<f64>> {
    if points.ncols() != 2 {
        return Err(Error::NotTwoDimensional(points.ncols()));
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let mut out = Array2::zeros(points.dim());
    for (i, p) in points.outer_iter().enumerate() {
        out[[i, 0]] = cos * p[0] - sin * p[1];
        out[[i, 1]] = sin * p[0] + cos * p[1];
    }
    Ok(out)
}

pub fn rotate(data: &LabeledDataset, degrees: f64) -> Result<LabeledDataset> {
    let points = rotate_points(data.points(), degrees)?;
    LabeledDataset::with_classes(points, data.labels().to_vec(), data.n_classes())
}

/// Contents of a feature CSV: `f0..f{d-1}` and an optional integer `label`
/// column, kept exactly as written.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub points: Array2<f64>,
    pub labels: Option<Vec<i64>>,
}

/// Mapping between dense class ids `0..k` and the labels found in a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    /// `original[c]` is the file label of dense class `c`, in ascending order.
    pub original: Vec<i64>,
}

impl LabelMap {
    pub fn to_original(&self, dense: &[usize]) -> Vec<i64> {
        dense.iter().map(|&c| self.original[c]).collect()
    }
}

impl FeatureTable {
    /// Dataset with labels remapped to dense ids (ascending file label order).
    pub fn labeled(&self) -> Result<(LabeledDataset, LabelMap)> {
        let labels = self.labels.as_ref().ok_or(Error::MissingLabelColumn)?;
        let index: BTreeMap<i64, usize> = labels
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(dense, raw)| (raw, dense))
            .collect();
        let dense = labels.iter().map(|l| index[l]).collect();
        let data = LabeledDataset::with_classes(self.points.clone(), dense, index.len())?;
        Ok((data, LabelMap { original: index.into_keys().collect() }))
    }
}

fn parse_error(line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Reads a feature CSV. A last header column named `label` is parsed as
/// integers; every other column must be named `f0`, `f1`, … in order.
pub fn read_features(reader: impl Read) -> Result<FeatureTable> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| parse_error(1, 1, e.to_string()))?
        .clone();
    let has_label = headers.iter().next_back() == Some("label");
    let dim = headers.len() - usize::from(has_label);
    if dim == 0 {
        return Err(parse_error(1, 1, "no feature columns"));
    }
    for (c, name) in headers.iter().take(dim).enumerate() {
        if name != format!("f{c}") {
            return Err(parse_error(1, c + 1, format!("expected header `f{c}`, found `{name}`")));
        }
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, 1, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(parse_error(
                line,
                record.len().min(headers.len()) + 1,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (c, field) in record.iter().take(dim).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_error(line, c + 1, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(line, c + 1, format!("`{field}` is not finite")));
            }
            values.push(v);
        }
        if has_label {
            let field = &record[dim];
            let l: i64 = field
                .trim()
                .parse()
                .map_err(|_| parse_error(line, dim + 1, format!("`{field}` is not an integer label")))?;
            labels.push(l);
        }
    }
    let rows = values.len() / dim;
    Ok(FeatureTable {
        points: Array2::from_shape_vec((rows, dim), values).expect("rows have equal width"),
        labels: has_label.then_some(labels),
    })
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureTable> {
    read_features(File::open(path)?)
}

/// Loads a file whose `label` column is required, densifying labels.
pub fn load_labeled(path: impl AsRef<Path>) -> Result<(LabeledDataset, LabelMap)> {
    load_features(path)?.labeled()
}

/// 17 significant digits: enough to round-trip any `f64`.
fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_features(writer: impl Write, points: ArrayView2<f64>, labels: Option<&[i64]>) -> Result<()> {
    if let Some(labels) = labels {
        if labels.len() != points.nrows() {
            return Err(Error::LengthMismatch {
                left: points.nrows(),
                right: labels.len(),
            });
        }
    }
    let mut out = BufWriter::new(writer);
    let mut header: Vec<String> = (0..points.ncols()).map(|c| format!("f{c}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in points.outer_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        if let Some(labels) = labels {
            fields.push(labels[i].to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_features(path: impl AsRef<Path>, points: ArrayView2<f64>, labels: Option<&[i64]>) -> Result<()> {
    write_features(File::create(path)?, points, labels)
}

/// Writes a labeled dataset with its dense ids as labels.
pub fn save_labeled(path: impl AsRef<Path>, data: &LabeledDataset) -> Result<()> {
    let labels: Vec<i64> = data.labels().iter().map(|&l| l as i64).collect();
    save_features(path, data.points(), Some(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};

    fn moons(rotation_deg: f64, noise_std: f64, seed: u64) -> LabeledDataset {
        gen_moons(&MoonsConfig {
            samples_per_class: 150,
            noise_std,
            rotation_deg,
            seed,
        })
        .unwrap()
    }

    fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn moons_are_balanced_and_centered() {
        let d = moons(0.0, 0.0, 1);
        assert_eq!(d.len(), 300);
        assert_eq!(d.labels().iter().filter(|&&l| l == 0).count(), 150);
        let mean = d.points().mean_axis(Axis(0)).unwrap();
        assert!(mean.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn moons_class_means_mirror_through_origin() {
        let d = moons(0.0, 0.0, 0);
        let m0 = d.points().slice(ndarray::s![..150, ..]).mean_axis(Axis(0)).unwrap();
        let m1 = d.points().slice(ndarray::s![150.., ..]).mean_axis(Axis(0)).unwrap();
        assert!((m0[0] + m1[0]).abs() < 1e-9 && (m0[1] + m1[1]).abs() < 1e-9);
    }

    #[test]
    fn moons_full_turn_is_identity() {
        let a = moons(0.0, 0.05, 5);
        let b = moons(360.0, 0.05, 5);
        assert!(max_abs_diff(a.points(), b.points()) < 1e-9);
    }

    #[test]
    fn moons_quarter_turn() {
        let a = moons(0.0, 0.05, 5);
        let b = moons(90.0, 0.05, 5);
        for (p, q) in a.points().outer_iter().zip(b.points().outer_iter()) {
            assert!((q[0] + p[1]).abs() < 1e-12 && (q[1] - p[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn moons_are_deterministic() {
        assert_eq!(moons(30.0, 0.1, 9), moons(30.0, 0.1, 9));
        assert_ne!(moons(30.0, 0.1, 9), moons(30.0, 0.1, 10));
    }

    #[test]
    fn moons_reject_bad_config() {
        let cfg = MoonsConfig {
            samples_per_class: 0,
            ..Default::default()
        };
        assert!(gen_moons(&cfg).is_err());
        let cfg = MoonsConfig {
            noise_std: -1.0,
            ..Default::default()
        };
        assert!(gen_moons(&cfg).is_err());
    }

    #[test]
    fn circles_without_noise_lie_on_their_radius() {
        let d = gen_two_circles(100, (1.0, 3.0), 0.0, 0).unwrap();
        for (p, &l) in d.points().outer_iter().zip(d.labels()) {
            let r = p.dot(&p).sqrt();
            let expect = if l == 0 { 1.0 } else { 3.0 };
            assert!((r - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn circles_are_well_separated() {
        let noise = 0.05;
        let d = gen_two_circles(100, (1.0, 3.0), noise, 4).unwrap();
        let points = d.points();
        let (inner, outer): (Vec<_>, Vec<_>) = points.outer_iter().zip(d.labels()).partition(|(_, &l)| l == 0);
        let mut min = f64::INFINITY;
        for (p, _) in &inner {
            for (q, _) in &outer {
                min = min.min(crate::ot::squared_distance(p.view(), q.view()).sqrt());
            }
        }
        assert!(min > 4.0 * noise, "{min}");
    }

    #[test]
    fn circles_edge_cases() {
        assert_eq!(gen_two_circles(1, (1.0, 3.0), 0.0, 0).unwrap().len(), 2);
        assert!(matches!(gen_two_circles(5, (3.0, 1.0), 0.0, 0), Err(Error::InvalidRadii(..))));
        assert!(matches!(gen_two_circles(5, (0.0, 1.0), 0.0, 0), Err(Error::InvalidRadii(..))));
    }

    #[test]
    fn rotation_examples() {
        let p = rotate_points(array![[1.0, 0.0]].view(), 90.0).unwrap();
        assert!((p[[0, 0]]).abs() < 1e-12 && (p[[0, 1]] - 1.0).abs() < 1e-12);
        let d = moons(0.0, 0.05, 2);
        assert_eq!(rotate(&d, 0.0).unwrap(), d);
        let back = rotate(&rotate(&d, 37.0).unwrap(), -37.0).unwrap();
        assert!(max_abs_diff(back.points(), d.points()) < 1e-9);
        assert_eq!(back.labels(), d.labels());
        assert!(matches!(
            rotate_points(array![[1.0, 0.0, 0.0]].view(), 10.0),
            Err(Error::NotTwoDimensional(3))
        ));
    }

    #[test]
    fn csv_single_row() {
        let t = read_features("f0,f1,label\n0.5,1.0,2\n".as_bytes()).unwrap();
        assert_eq!(t.points, array![[0.5, 1.0]]);
        assert_eq!(t.labels, Some(vec![2]));
        let (data, map) = t.labeled().unwrap();
        assert_eq!(data.labels(), &[0]);
        assert_eq!(map.to_original(data.labels()), vec![2]);
    }

    #[test]
    fn csv_without_labels() {
        let t = read_features("f0\n1\n2\n".as_bytes()).unwrap();
        assert_eq!(t.labels, None);
        assert!(matches!(t.labeled(), Err(Error::MissingLabelColumn)));
    }

    #[test]
    fn csv_malformed_row_names_line() {
        let err = read_features("f0,f1,label\n0.5,1.0,0\n0.5,abc,1\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, column, message } => {
                assert_eq!((line, column), (3, 2));
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = read_features("f0,f1\n0.5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = read_features("x,y\n0.5,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = read_features("f0,label\n0.5,1.5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 2, .. }));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let points = array![[0.1, -1.0 / 3.0], [1e-300, 12345.678901234567], [f64::MAX, -0.0]];
        let labels = vec![3, -1, 3];
        let mut buf = Vec::new();
        write_features(&mut buf, points.view(), Some(&labels)).unwrap();
        let t = read_features(buf.as_slice()).unwrap();
        assert_eq!(t.points, points);
        assert_eq!(t.labels, Some(labels));
        let (data, map) = t.labeled().unwrap();
        assert_eq!(data.labels(), &[1, 0, 1]);
        assert_eq!(map.original, vec![-1, 3]);
    }
}
