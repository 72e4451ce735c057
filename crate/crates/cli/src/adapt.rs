use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use hotda_core::classify::{accuracy, Classifier, ClassifierKind};
use hotda_core::datasets::save_features;
use hotda_core::hotda::{adapt, AdaptConfig, AdaptationOutput};
use hotda_core::measures::LabeledDataset;
use hotda_core::wspectral::DEFAULT_RESTARTS;
use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{parse_classifier, Solver};
use crate::output::{can_plot, decision_plot, read_table, write_columns, write_text};
use crate::{Context, UsageError};

#[derive(Debug, Args)]
pub struct AdaptArgs {
    /// Labeled source CSV.
    source: PathBuf,
    /// Target CSV; its label column is ignored unless `--grid` needs it.
    target: PathBuf,
    /// `1nn` or `rbf-ls` (default rbf-ls).
    #[arg(long)]
    classifier: Option<String>,
    /// Search axis, e.g. `eps=1..100` or `eps-inner=0.1,0.5`. Selection uses
    /// half of the labeled target; the other half reports test accuracy.
    #[arg(long, value_name = "AXIS=VALUES")]
    grid: Vec<String>,
    /// SVG of the target colored by prediction over the decision regions (2-D only).
    #[arg(long, value_name = "PATH")]
    plot: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = ".")]
    output: PathBuf,
}

/// Values of one `--grid` axis: `a..b` (integers from a to b) or `x,y,z`.
fn parse_values(text: &str) -> Result<Vec<f64>, UsageError> {
    let bad = || UsageError(format!("invalid grid values `{text}`"));
    let values: Vec<f64> = if let Some((a, b)) = text.split_once("..") {
        let (a, b): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..=b).map(|v| v as f64).collect()
    } else {
        text.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(bad());
    }
    Ok(values)
}

/// Candidate `(ε, ε′)` pairs. A lone `eps` axis moves both together.
fn parse_grid(entries: &[String], solver: &Solver) -> Result<Vec<(f64, f64)>, UsageError> {
    let (mut outer, mut inner) = (None, None);
    for entry in entries {
        let (axis, values) = entry
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--grid expects AXIS=VALUES, got `{entry}`")))?;
        let slot = match axis.trim() {
            "eps" => &mut outer,
            "eps-inner" => &mut inner,
            other => return Err(UsageError(format!("unknown grid axis `{other}`; use `eps` or `eps-inner`"))),
        };
        *slot = Some(parse_values(values)?);
    }
    Ok(match (outer, inner) {
        (Some(o), None) => o.into_iter().map(|e| (e, e)).collect(),
        (None, Some(i)) => i.into_iter().map(|e| (solver.eps, e)).collect(),
        (Some(o), Some(i)) => o.iter().flat_map(|&a| i.iter().map(move |&b| (a, b))).collect(),
        (None, None) => Vec::new(),
    })
}

/// Validation and test halves of `0..n`, shuffled by `seed`.
fn split_halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n / 2);
    (idx, test)
}

fn run_once(
    source: &LabeledDataset,
    target: ArrayView2<f64>,
    kind: ClassifierKind,
    solver: &Solver,
    eps: f64,
    eps_inner: f64,
) -> anyhow::Result<(AdaptationOutput, Classifier, Vec<usize>)> {
    let config = AdaptConfig {
        outer: solver.params(eps)?,
        inner: solver.params(eps_inner)?,
        bandwidth: solver.sigma,
        seed: solver.seed,
        restarts: DEFAULT_RESTARTS,
    };
    let out = adapt(source, target, &config)?;
    let classifier = Classifier::fit(kind, &out.transported_source)?;
    let predictions = classifier.predict(target)?;
    Ok((out, classifier, predictions))
}

fn subset(values: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| values[i]).collect()
}

fn matrix_json(m: ArrayView2<f64>) -> Value {
    Value::from(m.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

pub fn run(args: &AdaptArgs, ctx: &Context) -> anyhow::Result<()> {
    let kind = parse_classifier(args.classifier.as_deref().or(ctx.file.classifier.as_deref()).unwrap_or("rbf-ls"))?;
    let solver = ctx.solver;
    let candidates = parse_grid(&args.grid, &solver)?;
    let (source, source_labels) = read_table(&args.source)?
        .labeled()
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.source.display()))?;
    let target_table = read_table(&args.target)?;
    let target = target_table.points.view();

    let mut warnings = Vec::new();
    let (eps, eps_inner, grid_report) = if candidates.is_empty() {
        if target_table.labels.is_some() {
            log::warn!("{}: label column ignored", args.target.display());
            warnings.push("target label column ignored".to_string());
        }
        (solver.eps, solver.eps_inner, Value::Null)
    } else {
        let (truth, truth_map) = target_table.labeled().map_err(|_| {
            UsageError(format!("--grid needs a label column in {} for validation", args.target.display()))
        })?;
        // Score against source label ids: translate target file labels through the source map.
        let truth: Vec<usize> = truth_map
            .to_original(truth.labels())
            .iter()
            .map(|l| source_labels.original.iter().position(|s| s == l).unwrap_or(usize::MAX))
            .collect();
        let (validation, test) = split_halves(truth.len(), solver.seed);
        let mut scores = Vec::with_capacity(candidates.len());
        let mut best: Option<(f64, f64, f64, f64)> = None;
        for &(e, ei) in &candidates {
            let (_, _, predictions) = run_once(&source, target, kind, &solver, e, ei)?;
            let val = accuracy(&subset(&predictions, &validation), &subset(&truth, &validation))?;
            let test_acc = accuracy(&subset(&predictions, &test), &subset(&truth, &test))?;
            log::info!("grid eps = {e}, eps-inner = {ei}: validation accuracy {val:.4}");
            scores.push(json!({ "eps": e, "eps_inner": ei, "validation_acc": val }));
            if best.is_none_or(|b| val > b.2) {
                best = Some((e, ei, val, test_acc));
            }
        }
        let (e, ei, val, test_acc) = best.expect("grid is non-empty");
        println!("selected eps = {e}, eps-inner = {ei}: validation accuracy {val:.4}, test accuracy {test_acc:.4}");
        let report = json!({
            "split_seed": solver.seed,
            "validation_size": validation.len(),
            "test_size": test.len(),
            "candidates": scores,
            "selected": { "eps": e, "eps_inner": ei },
            "validation_acc": val,
            "test_acc": test_acc,
        });
        (e, ei, report)
    };

    let (out, classifier, predictions) = run_once(&source, target, kind, &solver, eps, eps_inner)?;
    for w in &out.warnings {
        log::warn!("{w}");
    }
    warnings.extend(out.warnings.iter().cloned());

    let transported = &out.transported_source;
    std::fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    save_features(
        args.output.join("transported.csv"),
        transported.points(),
        Some(&source_labels.to_original(transported.labels())),
    )
    .map_err(|e| anyhow::anyhow!("writing {}: {e}", args.output.join("transported.csv").display()))?;
    write_columns(&args.output.join("predictions.csv"), &[("label", source_labels.to_original(&predictions))])?;

    let report = json!({
        "eps": eps,
        "eps_inner": eps_inner,
        "sigma": out.sigma,
        "seed": solver.seed,
        "classifier": kind.to_string(),
        "gamma": matrix_json(out.hot.outer_plan.coupling()),
        "w": matrix_json(out.hot.w_matrix.entries()),
        "matching": out.matching.map,
        "collisions_resolved": out.matching.collisions_resolved,
        "outer_converged": out.hot.outer_converged,
        "elapsed_s": out.elapsed.as_secs_f64(),
        "warnings": warnings,
        "grid": grid_report,
    });
    let report_path = args.output.join("report.json");
    write_text(&report_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    println!("{}", report_path.display());

    if let Some(path) = &args.plot {
        plot(path, target, &predictions, &classifier)?;
    }
    Ok(())
}

fn plot(path: &Path, target: ArrayView2<f64>, predictions: &[usize], classifier: &Classifier) -> anyhow::Result<()> {
    if can_plot(target.ncols(), path) {
        let svg = decision_plot(target, predictions, "Target predictions after adaptation", |q| classifier.predict(q))?;
        write_text(path, &svg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hotda_core::wspectral::Bandwidth;

    fn solver() -> Solver {
        Solver {
            eps: 0.1,
            eps_inner: 0.2,
            tolerance: 1e-9,
            max_iter: 1000,
            sigma: Bandwidth::Auto,
            seed: 0,
        }
    }

    #[test]
    fn ranges_are_inclusive_integers() {
        assert_eq!(parse_values("1..4").unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(parse_values("0.5, 2").unwrap(), vec![0.5, 2.0]);
        assert!(parse_values("0..2").is_err());
        assert!(parse_values("3..2").is_err());
        assert!(parse_values("a").is_err());
    }

    #[test]
    fn lone_eps_axis_moves_both() {
        let g = parse_grid(&["eps=1,2".into()], &solver()).unwrap();
        assert_eq!(g, vec![(1.0, 1.0), (2.0, 2.0)]);
        let g = parse_grid(&["eps-inner=3".into()], &solver()).unwrap();
        assert_eq!(g, vec![(0.1, 3.0)]);
        let g = parse_grid(&["eps=1,2".into(), "eps-inner=3,4".into()], &solver()).unwrap();
        assert_eq!(g, vec![(1.0, 3.0), (1.0, 4.0), (2.0, 3.0), (2.0, 4.0)]);
        assert!(parse_grid(&["sigma=1".into()], &solver()).is_err());
        assert!(parse_grid(&["eps".into()], &solver()).is_err());
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (v, t) = split_halves(11, 3);
        assert_eq!((v.len(), t.len()), (5, 6));
        let mut all: Vec<usize> = v.iter().chain(&t).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(split_halves(11, 3), (v, t));
    }
}
