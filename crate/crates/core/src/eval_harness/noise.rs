//! Measurement-noise robustness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::cv::kfold_cv;
use super::metrics::evaluate;
use super::sweep::{SweepAxis, SweepPoint, SweepResult};
use crate::ghm_boost::{Ensemble, TrainingConfig};
use crate::transient_sim::Dataset;
use crate::util::derive_seed;
use crate::{Error, Result};

pub const DEFAULT_NOISE_LEVELS: [f64; 4] = [0.0, 1.0, 2.0, 3.0];

/// Population standard deviation of every feature column.
pub fn feature_std(dataset: &Dataset) -> Vec<f64> {
    let n = dataset.len() as f64;
    (0..dataset.n_features())
        .map(|f| {
            let mean = dataset.samples.iter().map(|s| s.features[f]).sum::<f64>() / n;
            let var = dataset
                .samples
                .iter()
                .map(|s| (s.features[f] - mean).powi(2))
                .sum::<f64>()
                / n;
            var.sqrt()
        })
        .collect()
}

/// Adds Gaussian noise with standard deviation `level_percent`% of each
/// feature's own spread. Labels and metadata are untouched.
pub fn inject_noise(dataset: &Dataset, level_percent: f64, seed: u64) -> Result<Dataset> {
    if !(level_percent >= 0.0 && level_percent.is_finite()) {
        return Err(Error::Config(format!(
            "noise level {level_percent} must be a finite non-negative percentage"
        )));
    }
    let mut out = dataset.clone();
    if level_percent == 0.0 || dataset.is_empty() {
        return Ok(out);
    }
    let scale: Vec<f64> = feature_std(dataset)
        .iter()
        .map(|s| s * level_percent / 100.0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in out.samples.iter_mut() {
        for (x, &sc) in s.features.iter_mut().zip(&scale) {
            let z: f64 = StandardNormal.sample(&mut rng);
            if sc > 0.0 {
                *x += sc * z;
            }
        }
    }
    Ok(out)
}

/// Cross-validated metrics on noisy copies of the dataset, one point per level.
pub fn noise_sweep(
    dataset: &Dataset,
    levels: &[f64],
    config: &TrainingConfig,
    k: usize,
    seed: u64,
) -> Result<SweepResult> {
    let mut points = Vec::with_capacity(levels.len());
    for (i, &level) in levels.iter().enumerate() {
        let noisy = inject_noise(dataset, level, derive_seed(seed, i as u64))?;
        let cv = kfold_cv(&noisy, k, config, seed)?;
        points.push(SweepPoint {
            setting: level,
            report: cv.mean,
            note: None,
        });
    }
    SweepResult::new(SweepAxis::NoiseLevel, points)
}

/// A fixed model scored on noisy copies of the dataset.
pub fn noise_sweep_model(
    model: &Ensemble,
    dataset: &Dataset,
    levels: &[f64],
    seed: u64,
) -> Result<SweepResult> {
    let mut points = Vec::with_capacity(levels.len());
    for (i, &level) in levels.iter().enumerate() {
        let noisy = inject_noise(dataset, level, derive_seed(seed, i as u64))?;
        let report = evaluate(model, &noisy.rows(), &noisy.labels())?;
        points.push(SweepPoint {
            setting: level,
            report,
            note: None,
        });
    }
    SweepResult::new(SweepAxis::NoiseLevel, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval_harness::cv::tests::toy_dataset;

    #[test]
    fn zero_level_is_identity() {
        let ds = toy_dataset(50, 1);
        assert_eq!(inject_noise(&ds, 0.0, 5).unwrap(), ds);
        assert!(inject_noise(&ds, -1.0, 5).is_err());
    }

    #[test]
    fn constant_column_is_untouched() {
        let mut ds = toy_dataset(50, 1);
        for s in ds.samples.iter_mut() {
            s.features[2] = -0.0;
        }
        let noisy = inject_noise(&ds, 100.0, 5).unwrap();
        for (a, b) in noisy.samples.iter().zip(&ds.samples) {
            assert_eq!(a.features[2].to_bits(), b.features[2].to_bits());
            assert_ne!(a.features[0], b.features[0]);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn perturbation_scale_matches_one_percent() {
        let ds = toy_dataset(20_000, 3);
        let sd = feature_std(&ds);
        let noisy = inject_noise(&ds, 1.0, 11).unwrap();
        for f in 0..3 {
            let d: Vec<f64> = noisy
                .samples
                .iter()
                .zip(&ds.samples)
                .map(|(a, b)| a.features[f] - b.features[f])
                .collect();
            let m = d.iter().sum::<f64>() / d.len() as f64;
            let emp = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
            assert!(
                (emp / (0.01 * sd[f]) - 1.0).abs() < 0.05,
                "feature {f}: {emp} vs {}",
                0.01 * sd[f]
            );
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = toy_dataset(40, 2);
        assert_eq!(
            inject_noise(&ds, 2.0, 8).unwrap(),
            inject_noise(&ds, 2.0, 8).unwrap()
        );
        assert_ne!(
            inject_noise(&ds, 2.0, 8).unwrap(),
            inject_noise(&ds, 2.0, 9).unwrap()
        );
    }
}
