use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hotda_core::datasets::{gen_moons, gen_two_circles, save_labeled, MoonsConfig, DEFAULT_MOONS_NOISE};

use crate::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    Moons,
    Circles,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    dataset: Dataset,
    /// Points per class (moons, default 150) or per circle (circles, default 100).
    #[arg(long)]
    n: Option<usize>,
    /// Anticlockwise rotation in degrees (moons).
    #[arg(long, default_value_t = 0.0)]
    angle: f64,
    /// Standard deviation of the Gaussian coordinate noise.
    #[arg(long, default_value_t = DEFAULT_MOONS_NOISE)]
    noise: f64,
    /// Inner and outer radius (circles).
    #[arg(long, num_args = 2, value_delimiter = ',', default_values_t = [1.0, 3.0])]
    radii: Vec<f64>,
    /// Output CSV (default: `<dataset>.csv`).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn run(args: &GenArgs, ctx: &Context) -> anyhow::Result<()> {
    let seed = ctx.solver.seed;
    let (data, default_name) = match args.dataset {
        Dataset::Moons => (
            gen_moons(&MoonsConfig {
                samples_per_class: args.n.unwrap_or(150),
                noise_std: args.noise,
                rotation_deg: args.angle,
                seed,
            })?,
            "moons.csv",
        ),
        Dataset::Circles => (
            gen_two_circles(args.n.unwrap_or(100), (args.radii[0], args.radii[1]), args.noise, seed)?,
            "circles.csv",
        ),
    };
    let path = args.output.clone().unwrap_or_else(|| PathBuf::from(default_name));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_labeled(&path, &data).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}
