//! Rotated-moons adaptation benchmark.
//!
//! For every angle and repeat: a 300-point source, a 300-point target rotated
//! by the angle, and an independent 1000-point test set drawn from the target
//! distribution. The classifier is trained on the transported source and
//! scored on the test set.

use std::time::Instant;

use rayon::prelude::*;

use crate::classify::{accuracy, Classifier, ClassifierKind};
use crate::datasets::{gen_moons, MoonsConfig, DEFAULT_MOONS_NOISE, DEFAULT_MOONS_PER_CLASS};
use crate::hotda::{adapt, AdaptConfig, AdaptationOutput};
use crate::measures::LabeledDataset;
use crate::ot::SinkhornParams;
use crate::wspectral::Bandwidth;
use crate::Result;

pub const DEFAULT_ANGLES: [f64; 7] = [10.0, 20.0, 30.0, 40.0, 50.0, 70.0, 90.0];
pub const TEST_PER_CLASS: usize = 500;

#[derive(Debug, Clone)]
pub struct MoonsBenchmark {
    pub angles: Vec<f64>,
    pub repeats: usize,
    pub classifier: ClassifierKind,
    pub outer: SinkhornParams,
    pub inner: SinkhornParams,
    pub bandwidth: Bandwidth,
    pub noise_std: f64,
    pub samples_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl MoonsBenchmark {
    pub fn new(eps_outer: f64, eps_inner: f64, classifier: ClassifierKind) -> Result<Self> {
        Ok(Self {
            angles: DEFAULT_ANGLES.to_vec(),
            repeats: 10,
            classifier,
            outer: SinkhornParams::new(eps_outer)?,
            inner: SinkhornParams::new(eps_inner)?,
            bandwidth: Bandwidth::Auto,
            noise_std: DEFAULT_MOONS_NOISE,
            samples_per_class: DEFAULT_MOONS_PER_CLASS,
            test_per_class: TEST_PER_CLASS,
            seed: 0,
        })
    }

    fn trial_seed(&self, repeat: usize, role: u64) -> u64 {
        self.seed
            .wrapping_mul(1_000_003)
            .wrapping_add(repeat as u64 * 3 + role)
    }

    /// Source, target and test sets of one repeat at one angle.
    pub fn datasets(&self, angle: f64, repeat: usize) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
        let moons = |n, rotation_deg, role| {
            gen_moons(&MoonsConfig {
                samples_per_class: n,
                noise_std: self.noise_std,
                rotation_deg,
                seed: self.trial_seed(repeat, role),
            })
        };
        Ok((
            moons(self.samples_per_class, 0.0, 0)?,
            moons(self.samples_per_class, angle, 1)?,
            moons(self.test_per_class, angle, 2)?,
        ))
    }

    /// Runs one repeat; returns the adaptation, the fitted classifier and its
    /// test accuracy.
    pub fn trial(&self, angle: f64, repeat: usize) -> Result<Trial> {
        let (source, target, test) = self.datasets(angle, repeat)?;
        let config = AdaptConfig {
            outer: self.outer,
            inner: self.inner,
            bandwidth: self.bandwidth,
            seed: self.trial_seed(repeat, 0),
            restarts: crate::wspectral::DEFAULT_RESTARTS,
        };
        let adaptation = adapt(&source, target.points(), &config)?;
        let classifier = Classifier::fit(self.classifier, &adaptation.transported_source)?;
        let predictions = classifier.predict(test.points())?;
        let accuracy = accuracy(&predictions, test.labels())?;
        Ok(Trial {
            accuracy,
            adaptation,
            classifier,
            test,
        })
    }

    /// Runs every angle in order. Repeats of one angle run in parallel on the
    /// current rayon pool; `on_row` sees each finished row before the next
    /// angle starts.
    pub fn run(&self, mut on_row: impl FnMut(&BenchmarkRow)) -> Result<Vec<BenchmarkRow>> {
        let mut rows = Vec::with_capacity(self.angles.len());
        for &angle in &self.angles {
            let started = Instant::now();
            let trials: Vec<Result<(f64, bool)>> = (0..self.repeats)
                .into_par_iter()
                .map(|r| {
                    let t = self.trial(angle, r)?;
                    Ok((t.accuracy, t.adaptation.matching.collisions_resolved))
                })
                .collect();
            let trials = trials.into_iter().collect::<Result<Vec<_>>>()?;
            let accuracies: Vec<f64> = trials.iter().map(|t| t.0).collect();
            let (mean_acc, std_acc) = mean_std(&accuracies);
            let row = BenchmarkRow {
                angle,
                mean_acc,
                std_acc,
                runtime_s: started.elapsed().as_secs_f64(),
                collisions: trials.iter().filter(|t| t.1).count(),
                accuracies,
            };
            on_row(&row);
            rows.push(row);
        }
        Ok(rows)
    }
}

pub struct Trial {
    pub accuracy: f64,
    pub adaptation: AdaptationOutput,
    pub classifier: Classifier,
    pub test: LabeledDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub angle: f64,
    pub mean_acc: f64,
    /// Population standard deviation over repeats.
    pub std_acc: f64,
    pub runtime_s: f64,
    /// Repeats whose hard assignment needed collision resolution.
    pub collisions: usize,
    pub accuracies: Vec<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_example() {
        let (m, s) = mean_std(&[1.0, 0.0, 1.0, 0.0]);
        assert_eq!((m, s), (0.5, 0.5));
    }

    #[test]
    fn datasets_have_expected_sizes() {
        let b = MoonsBenchmark::new(0.1, 0.1, ClassifierKind::NearestNeighbor).unwrap();
        let (s, t, test) = b.datasets(40.0, 3).unwrap();
        assert_eq!((s.len(), t.len(), test.len()), (300, 300, 1000));
        assert_ne!(s.points(), t.points());
    }
}
