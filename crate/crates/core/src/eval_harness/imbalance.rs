//! Class-imbalance sweep: train at chosen stable:unstable ratios, test on a
//! fixed held-out set with the dataset's natural class mix.

use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::metrics::evaluate;
use super::sweep::{SweepAxis, SweepPoint, SweepResult};
use crate::ghm_boost::{fit, TrainingConfig};
use crate::transient_sim::Dataset;
use crate::{Error, Result};

pub const DEFAULT_STABLE_RATIOS: [f64; 4] = [1.0, 3.0, 9.0, 19.0];
pub const DEFAULT_TRAIN_SIZE: usize = 4000;
pub const DEFAULT_TEST_SIZE: usize = 1897;

/// How one requested ratio was realized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioPlan {
    pub ratio: f64,
    pub n_stable: usize,
    pub n_unstable: usize,
    /// True when the pools could not supply `train_size` samples at this ratio.
    pub scaled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceResult {
    pub with_ghm: SweepResult,
    pub without_ghm: SweepResult,
    pub plans: Vec<RatioPlan>,
    pub skipped: Vec<f64>,
    pub test_indices: Vec<usize>,
}

/// Fixed test set and per-class training pools, all drawn from one shuffle.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceSplit {
    pub test: Vec<usize>,
    pub stable_pool: Vec<usize>,
    pub unstable_pool: Vec<usize>,
}

pub fn imbalance_split(labels: &[u8], test_size: usize, seed: u64) -> Result<ImbalanceSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stable: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut unstable: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    stable.shuffle(&mut rng);
    unstable.shuffle(&mut rng);
    if test_size >= labels.len() {
        return Err(Error::Evaluation(format!(
            "test size {test_size} leaves no training data out of {}",
            labels.len()
        )));
    }
    let n_test_unstable =
        ((test_size as f64) * unstable.len() as f64 / labels.len() as f64).round() as usize;
    let n_test_stable = test_size - n_test_unstable;
    if n_test_stable > stable.len() || n_test_unstable > unstable.len() {
        return Err(Error::Evaluation(
            "dataset too small for the requested test set".into(),
        ));
    }
    let mut test: Vec<usize> = stable[..n_test_stable]
        .iter()
        .chain(&unstable[..n_test_unstable])
        .copied()
        .collect();
    test.sort_unstable();
    Ok(ImbalanceSplit {
        test,
        stable_pool: stable[n_test_stable..].to_vec(),
        unstable_pool: unstable[n_test_unstable..].to_vec(),
    })
}

/// Training composition for `ratio` stable per unstable sample, shrunk
/// proportionally when a pool runs short. `None` if either class would be empty.
pub fn plan_ratio(
    ratio: f64,
    train_size: usize,
    n_stable_pool: usize,
    n_unstable_pool: usize,
) -> Option<RatioPlan> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return None;
    }
    let split = |t: usize| {
        let u = (t as f64 / (ratio + 1.0)).round() as usize;
        (t - u.min(t), u.min(t))
    };
    let mut t = train_size;
    let (mut s, mut u) = split(t);
    let scaled = s > n_stable_pool || u > n_unstable_pool;
    if scaled {
        let cap = (n_stable_pool as f64 * (ratio + 1.0) / ratio)
            .min(n_unstable_pool as f64 * (ratio + 1.0));
        t = (cap.floor() as usize).min(train_size);
        loop {
            (s, u) = split(t);
            if (s <= n_stable_pool && u <= n_unstable_pool) || t == 0 {
                break;
            }
            t -= 1;
        }
    }
    (s > 0 && u > 0).then_some(RatioPlan {
        ratio,
        n_stable: s,
        n_unstable: u,
        scaled,
    })
}

pub fn imbalance_experiment(
    dataset: &Dataset,
    train_size: usize,
    test_size: usize,
    stable_ratios: &[f64],
    with_ghm: &TrainingConfig,
    without_ghm: &TrainingConfig,
    seed: u64,
) -> Result<ImbalanceResult> {
    let labels = dataset.labels();
    let rows = dataset.rows();
    let split = imbalance_split(&labels, test_size, seed)?;
    let test_x: Vec<&[f64]> = split.test.iter().map(|&i| rows[i]).collect();
    let test_y: Vec<u8> = split.test.iter().map(|&i| labels[i]).collect();

    let (mut on, mut off, mut plans, mut skipped) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &ratio in stable_ratios {
        let Some(plan) = plan_ratio(
            ratio,
            train_size,
            split.stable_pool.len(),
            split.unstable_pool.len(),
        ) else {
            warn!("stable ratio {ratio}:1 is infeasible on this dataset; skipped");
            skipped.push(ratio);
            continue;
        };
        let note = plan.scaled.then(|| {
            let n = plan.n_stable + plan.n_unstable;
            warn!("stable ratio {ratio}:1 scaled to {n} training samples");
            format!(
                "training set scaled to {n} ({} stable, {} unstable)",
                plan.n_stable, plan.n_unstable
            )
        });
        let idx: Vec<usize> = split.stable_pool[..plan.n_stable]
            .iter()
            .chain(&split.unstable_pool[..plan.n_unstable])
            .copied()
            .collect();
        let tr_x: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
        let tr_y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        for (cfg, out) in [(with_ghm, &mut on), (without_ghm, &mut off)] {
            let start = Instant::now();
            let model = fit(&tr_x, &tr_y, cfg)?;
            let elapsed = start.elapsed().as_secs_f64();
            let mut report = evaluate(&model, &test_x, &test_y)?;
            report.wall_time_s = elapsed;
            out.push(SweepPoint {
                setting: ratio,
                report,
                note: note.clone(),
            });
        }
        plans.push(plan);
    }
    if plans.is_empty() {
        return Err(Error::Evaluation("no stable ratio was feasible".into()));
    }
    Ok(ImbalanceResult {
        with_ghm: SweepResult::new(SweepAxis::StableRatio, on)?,
        without_ghm: SweepResult::new(SweepAxis::StableRatio, off)?,
        plans,
        skipped,
        test_indices: split.test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval_harness::cv::tests::toy_dataset;
    use crate::ghm_boost::GHMConfig;

    #[test]
    fn plans_respect_pools() {
        let p = plan_ratio(9.0, 4000, 5000, 1000).unwrap();
        assert_eq!((p.n_stable, p.n_unstable, p.scaled), (3600, 400, false));
        let p = plan_ratio(1.0, 4000, 5000, 1000).unwrap();
        assert_eq!((p.n_stable, p.n_unstable, p.scaled), (1000, 1000, true));
        let p = plan_ratio(19.0, 4000, 2000, 1000).unwrap();
        assert!(p.scaled && p.n_stable <= 2000 && p.n_unstable == 105);
        assert!(plan_ratio(3.0, 4000, 100, 0).is_none());
        assert!(plan_ratio(0.0, 4000, 100, 100).is_none());
    }

    #[test]
    fn test_set_keeps_natural_mix_and_is_disjoint() {
        let labels: Vec<u8> = (0..1000).map(|i| (i % 5 != 0) as u8).collect();
        let s = imbalance_split(&labels, 300, 4).unwrap();
        assert_eq!(s.test.len(), 300);
        assert_eq!(s.test.iter().filter(|&&i| labels[i] == 0).count(), 60);
        assert!(s
            .stable_pool
            .iter()
            .chain(&s.unstable_pool)
            .all(|i| !s.test.contains(i)));
        assert_eq!(s, imbalance_split(&labels, 300, 4).unwrap());
    }

    #[test]
    fn balanced_separable_case_is_easy_for_both() {
        let ds = toy_dataset(900, 6);
        let base = TrainingConfig {
            n_iterations: 80,
            depth: 3,
            ..TrainingConfig::default()
        };
        let ghm = TrainingConfig {
            ghm: Some(GHMConfig::default()),
            ..base.clone()
        };
        let r = imbalance_experiment(&ds, 300, 300, &[1.0, 3.0], &ghm, &base, 1).unwrap();
        let (a, b) = (
            &r.with_ghm.points[0].report,
            &r.without_ghm.points[0].report,
        );
        assert!(a.acc > 0.95 && b.acc > 0.95);
        assert!((a.acc - b.acc).abs() < 0.01 + 1e-12);
        assert_eq!(r.plans.len(), 2);
        assert_eq!(r.test_indices.len(), 300);
    }
}
