//! Stratified k-fold cross-validation.

use std::time::Instant;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{evaluate, MetricsReport};
use crate::ghm_boost::{fit, TrainingConfig};
use crate::transient_sim::Dataset;
use crate::util::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// Fold-averaged metrics; `wall_time_s` is the mean training time.
    pub mean: MetricsReport,
    pub folds: Vec<MetricsReport>,
    /// Test fold of every sample.
    pub fold_of: Vec<usize>,
}

/// Fold index per sample. Each class is shuffled and dealt round-robin,
/// continuing where the previous class stopped so fold sizes stay balanced.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Evaluation(format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut offset = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            return Err(Error::Evaluation(format!(
                "class {class} has {} samples, fewer than k = {k}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            fold_of[i] = (offset + j) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok(fold_of)
}

/// `(train, test)` indices with `fraction` of each class held out.
pub fn stratified_holdout(
    labels: &[u8],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Evaluation(format!(
            "hold-out fraction {fraction} outside [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_test = (fraction * idx.len() as f64).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn kfold_cv(
    dataset: &Dataset,
    k: usize,
    config: &TrainingConfig,
    seed: u64,
) -> Result<CvReport> {
    let labels = dataset.labels();
    if labels.len() < k {
        return Err(Error::Evaluation(format!(
            "{} samples cannot form {k} folds",
            labels.len()
        )));
    }
    let fold_of = stratified_folds(&labels, k, seed)?;
    let rows = dataset.rows();
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut tr_x, mut tr_y, mut te_x, mut te_y) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, &f) in fold_of.iter().enumerate() {
            if f == fold {
                te_x.push(rows[i]);
                te_y.push(labels[i]);
            } else {
                tr_x.push(rows[i]);
                tr_y.push(labels[i]);
            }
        }
        let cfg = TrainingConfig {
            rng_seed: derive_seed(config.rng_seed, fold as u64),
            ..config.clone()
        };
        let start = Instant::now();
        let model = fit(&tr_x, &tr_y, &cfg)?;
        let train_time = start.elapsed().as_secs_f64();
        let mut report = evaluate(&model, &te_x, &te_y)?;
        report.wall_time_s = train_time;
        debug!(
            "fold {fold}: acc {:.4} ({} test samples)",
            report.acc,
            te_y.len()
        );
        folds.push(report);
    }
    Ok(CvReport {
        mean: MetricsReport::mean(&folds),
        folds,
        fold_of,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::transient_sim::SampleRecord;

    pub(crate) fn toy_dataset(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|i| {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                let label = (a + 0.3 * b > 0.1) as u8;
                SampleRecord {
                    features: vec![a, b, rng.random_range(0.0..1.0)],
                    tsi: if label == 1 { 0.5 } else { -0.5 },
                    label,
                    scenario_id: i as u64,
                    fault_branch: 0,
                    fault_position: 0.5,
                    clearing_time: 0.1,
                }
            })
            .collect();
        Dataset {
            samples,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            case_digest: None,
        }
    }

    fn small_config() -> TrainingConfig {
        TrainingConfig {
            n_iterations: 60,
            depth: 3,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<u8> = (0..103).map(|i| (i % 4 != 0) as u8).collect();
        let folds = stratified_folds(&labels, 5, 7).unwrap();
        let n1 = labels.iter().filter(|&&y| y == 1).count() as f64;
        let n0 = labels.len() as f64 - n1;
        let mut sizes = [0usize; 5];
        for f in 0..5 {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == f).collect();
            sizes[f] = members.len();
            let c1 = members.iter().filter(|&&i| labels[i] == 1).count() as f64;
            let c0 = members.len() as f64 - c1;
            assert!((c1 - n1 / 5.0).abs() <= 1.0 && (c0 - n0 / 5.0).abs() <= 1.0);
        }
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(folds, stratified_folds(&labels, 5, 7).unwrap());
    }

    #[test]
    fn holdout_keeps_class_shares() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 4 != 0) as u8).collect();
        let (train, test) = stratified_holdout(&labels, 0.2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 5);
        assert!(train.iter().all(|i| !test.contains(i)));
        assert_eq!(stratified_holdout(&labels, 0.0, 1).unwrap().1.len(), 0);
        assert!(stratified_holdout(&labels, 1.0, 1).is_err());
    }

    #[test]
    fn small_class_is_an_error() {
        let labels = [1, 1, 1, 1, 1, 0, 0];
        assert!(stratified_folds(&labels, 3, 0).is_err());
        assert!(stratified_folds(&labels, 1, 0).is_err());
    }

    #[test]
    fn separable_toy_set_scores_perfectly() {
        let mut ds = toy_dataset(300, 1);
        // axis-aligned classes with a gap, so any fold's training set pins the boundary
        ds.samples.retain(|s| s.features[0].abs() > 0.05);
        for s in ds.samples.iter_mut() {
            s.label = (s.features[0] > 0.0) as u8;
        }
        // enough candidates that the gap itself is a candidate threshold
        let cfg = TrainingConfig {
            threshold_candidates_per_feature: 254,
            ..small_config()
        };
        let r = kfold_cv(&ds, 5, &cfg, 3).unwrap();
        assert_eq!(r.mean.acc, 1.0);
        assert_eq!(r.folds.len(), 5);
    }

    #[test]
    fn leave_one_out_runs_every_sample() {
        let mut ds = toy_dataset(10, 2);
        for s in ds.samples.iter_mut() {
            s.label = 1;
        }
        let r = kfold_cv(&ds, 10, &small_config(), 0).unwrap();
        assert_eq!(r.folds.len(), 10);
        assert!(r.folds.iter().all(|f| f.counts.total() == 1));
        assert_eq!(r.mean.counts.total(), 10);
    }

    #[test]
    fn same_seed_same_report() {
        let ds = toy_dataset(120, 4);
        let a = kfold_cv(&ds, 4, &small_config(), 9).unwrap();
        let b = kfold_cv(&ds, 4, &small_config(), 9).unwrap();
        assert_eq!(a.fold_of, b.fold_of);
        assert_eq!(a.mean.acc, b.mean.acc);
        assert_eq!(a.mean.counts, b.mean.counts);
    }
}
