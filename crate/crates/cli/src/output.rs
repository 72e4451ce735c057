//! File helpers with path context in every error.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use hotda_core::datasets::{load_features, FeatureTable};
use ndarray::{Array2, ArrayView2};

use crate::svg::{Frame, Plot};

pub fn read_table(path: &Path) -> anyhow::Result<FeatureTable> {
    load_features(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// CSV with one integer column per `(name, values)` pair.
pub fn write_columns(path: &Path, columns: &[(&str, Vec<i64>)]) -> anyhow::Result<()> {
    let mut out = Vec::new();
    let header: Vec<&str> = columns.iter().map(|c| c.0).collect();
    writeln!(out, "{}", header.join(","))?;
    let rows = columns.first().map_or(0, |c| c.1.len());
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| c.1[i].to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    write_text(path, std::str::from_utf8(&out)?)
}

/// Metric value as printed in summaries; undefined values read `nan`.
pub fn metric(value: f64) -> String {
    if value.is_nan() {
        "nan".to_string()
    } else {
        format!("{value:.4}")
    }
}

pub fn can_plot(dim: usize, path: &Path) -> bool {
    if dim == 2 {
        return true;
    }
    log::warn!("plot {} skipped: data has {dim} dimensions, plots need 2", path.display());
    false
}

/// Predicted regions over the bounding box of `points`, with the points on top.
pub fn decision_plot(
    points: ArrayView2<f64>,
    labels: &[usize],
    title: &str,
    predict: impl Fn(ArrayView2<f64>) -> hotda_core::Result<Vec<usize>>,
) -> anyhow::Result<String> {
    const NX: usize = 80;
    const NY: usize = 60;
    let frame = Frame::around(points);
    let (min, max) = frame.data_bounds();
    let xs: Vec<f64> = (0..NX).map(|i| min[0] + (i as f64 + 0.5) * (max[0] - min[0]) / NX as f64).collect();
    let ys: Vec<f64> = (0..NY).map(|i| min[1] + (i as f64 + 0.5) * (max[1] - min[1]) / NY as f64).collect();
    let grid = Array2::from_shape_fn((NX * NY, 2), |(r, d)| if d == 0 { xs[r % NX] } else { ys[r / NX] });
    let regions = predict(grid.view())?;
    let mut plot = Plot::new(frame, title);
    plot.regions(&xs, &ys, &regions);
    plot.points(points, labels);
    Ok(plot.render())
}
