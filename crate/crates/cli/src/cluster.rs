use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hotda_core::classify::adjusted_rand_index;
use hotda_core::measures::Partition;
use hotda_core::wspectral::{
    gaussian_affinity, lloyd_barycenter_kmeans, ncut_objective, wasserstein_spectral_cluster, WSpectralConfig,
    DEFAULT_RESTARTS,
};

use crate::output::{can_plot, metric, read_table, write_columns, write_text};
use crate::{svg, Context, UsageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Kmeans,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Input CSV; a `label` column, if present, is used only for scoring.
    input: PathBuf,
    /// Number of clusters (default 2).
    #[arg(long)]
    k: Option<usize>,
    /// Also run a baseline on the raw points and report the agreement.
    #[arg(long)]
    compare: Option<Baseline>,
    /// Write a scatter plot colored by cluster (2-D input only).
    #[arg(long, value_name = "PATH")]
    plot: Option<PathBuf>,
    /// Output CSV of cluster ids.
    #[arg(short, long, default_value = "clusters.csv")]
    output: PathBuf,
}

pub fn run(args: &ClusterArgs, ctx: &Context) -> anyhow::Result<()> {
    let k = args.k.or(ctx.file.k).unwrap_or(2);
    if k == 0 {
        return Err(UsageError("--k must be at least 1".into()).into());
    }
    let table = read_table(&args.input)?;
    let points = table.points.view();
    let seed = ctx.solver.seed;
    let config = WSpectralConfig {
        bandwidth: ctx.solver.sigma,
        seed,
        restarts: DEFAULT_RESTARTS,
    };
    let outcome = wasserstein_spectral_cluster(points, k, &config)?;
    if outcome.embedding.degenerate_spectrum {
        log::warn!("affinity spectrum is degenerate at k = {k}; the partition is not unique");
    }
    let affinity = gaussian_affinity(points, outcome.sigma)?;
    println!("sigma = {}", outcome.sigma);
    println!("ncut(wspectral) = {}", metric(ncut_objective(&outcome.partition, &affinity)?));

    let mut columns = vec![("cluster", to_i64(&outcome.partition))];
    let truth = match table.labeled() {
        Ok((data, _)) => Some(data.partition()),
        Err(_) => None,
    };
    if let Some(truth) = &truth {
        println!("ARI(wspectral, labels) = {}", metric(ari(&outcome.partition, truth)?));
    }
    if args.compare == Some(Baseline::Kmeans) {
        let kmeans = lloyd_barycenter_kmeans(points, k, seed, DEFAULT_RESTARTS)?;
        println!(
            "ARI(wspectral, kmeans) = {}",
            metric(ari(&outcome.partition, &kmeans.partition)?)
        );
        if let Some(truth) = &truth {
            println!("ARI(kmeans, labels) = {}", metric(ari(&kmeans.partition, truth)?));
        }
        columns.push(("kmeans", to_i64(&kmeans.partition)));
    }
    write_columns(&args.output, &columns)?;

    if let Some(path) = &args.plot {
        if can_plot(points.ncols(), path) {
            let title = format!("Wasserstein-spectral clustering, k = {k}");
            write_text(path, &svg::scatter(points, outcome.partition.assignment(), &title))?;
        }
    }
    Ok(())
}

/// ARI for the summary. A comparison involving a single-group partition says
/// nothing about agreement and is reported as undefined.
fn ari(a: &Partition, b: &Partition) -> hotda_core::Result<f64> {
    let occupied = |p: &Partition| p.group_sizes().iter().filter(|&&s| s > 0).count();
    if occupied(a) < 2 || occupied(b) < 2 {
        return Ok(f64::NAN);
    }
    adjusted_rand_index(a, b)
}

fn to_i64(p: &Partition) -> Vec<i64> {
    p.assignment().iter().map(|&c| c as i64).collect()
}
