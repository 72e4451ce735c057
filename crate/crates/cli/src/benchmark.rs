use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::Context as _;
use clap::Args;
use hotda_core::bench::{MoonsBenchmark, DEFAULT_ANGLES};
use hotda_core::datasets::DEFAULT_MOONS_NOISE;

use crate::config::parse_classifier;
use crate::output::{decision_plot, write_text};
use crate::{Context, UsageError};

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Realizations per angle (default 10).
    #[arg(long)]
    repeats: Option<usize>,
    /// `1nn` or `rbf-ls` (default rbf-ls).
    #[arg(long)]
    classifier: Option<String>,
    /// Rotation angles in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ANGLES)]
    angles: Vec<f64>,
    /// Standard deviation of the moons noise.
    #[arg(long, default_value_t = DEFAULT_MOONS_NOISE)]
    noise: f64,
    /// Decision regions of the first realization at the last angle.
    #[arg(long, value_name = "PATH")]
    plot: Option<PathBuf>,
    /// Results CSV (default: standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn run(args: &BenchmarkArgs, ctx: &Context) -> anyhow::Result<()> {
    let repeats = args.repeats.or(ctx.file.repeats).unwrap_or(10);
    if repeats == 0 {
        return Err(UsageError("--repeats must be at least 1".into()).into());
    }
    if args.angles.is_empty() || args.angles.iter().any(|a| !a.is_finite()) {
        return Err(UsageError("--angles must be a list of finite numbers".into()).into());
    }
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(UsageError(format!("--noise must be non-negative, got {}", args.noise)).into());
    }
    let kind = parse_classifier(args.classifier.as_deref().or(ctx.file.classifier.as_deref()).unwrap_or("rbf-ls"))?;
    let solver = ctx.solver;
    let bench = MoonsBenchmark {
        angles: args.angles.clone(),
        repeats,
        outer: solver.outer()?,
        inner: solver.inner()?,
        bandwidth: solver.sigma,
        noise_std: args.noise,
        seed: solver.seed,
        ..MoonsBenchmark::new(solver.eps, solver.eps_inner, kind)?
    };

    let mut out: Box<dyn Write> = match &args.output {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(File::create(path).with_context(|| format!("writing {}", path.display()))?)
        }
        None => Box::new(io::stdout()),
    };
    writeln!(out, "angle,mean_acc,std_acc,runtime_s")?;
    out.flush()?;
    let mut write_error = None;
    bench.run(|row| {
        if row.collisions > 0 {
            log::warn!("angle {}: {} of {repeats} matchings needed collision resolution", row.angle, row.collisions);
        }
        let line = writeln!(out, "{},{:.6},{:.6},{:.3}", row.angle, row.mean_acc, row.std_acc, row.runtime_s)
            .and_then(|_| out.flush());
        if let Err(e) = line {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e).context("writing benchmark results");
    }

    if let Some(path) = &args.plot {
        let angle = *bench.angles.last().expect("angles are non-empty");
        let trial = bench.trial(angle, 0)?;
        let title = format!("Decision regions at {angle} degrees, accuracy {:.3}", trial.accuracy);
        let svg = decision_plot(trial.test.points(), trial.test.labels(), &title, |q| trial.classifier.predict(q))?;
        write_text(path, &svg)?;
    }
    Ok(())
}
