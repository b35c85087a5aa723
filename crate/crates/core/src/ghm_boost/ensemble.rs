//! Boosting loop, prediction and feature importance.

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ghm::{gradient_stats, GHMConfig, SmoothedDensity};
use super::loss::{mean_loss, residual, sigmoid};
use super::tree::{
    grow_structure, leaf_means, ObliviousTree, QuantizedFeatures, MAX_BORDERS, MAX_DEPTH,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostingMode {
    Plain,
    /// Tree structure is chosen on gradients from per-permutation prefix
    /// models, so no sample's own label leaks into its gradient.
    Ordered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub n_iterations: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub boosting_mode: BoostingMode,
    pub n_permutations: usize,
    pub ghm: Option<GHMConfig>,
    pub threshold_candidates_per_feature: usize,
    pub min_samples_per_leaf: usize,
    pub rng_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            n_iterations: 500,
            depth: 6,
            learning_rate: 0.1,
            boosting_mode: BoostingMode::Plain,
            n_permutations: 4,
            ghm: None,
            threshold_candidates_per_feature: 32,
            min_samples_per_leaf: 1,
            rng_seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_iterations < 1 {
            return bad("n_iterations must be at least 1".into());
        }
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return bad(format!(
                "depth must be in 1..={MAX_DEPTH}, got {}",
                self.depth
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "learning rate must be in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if self.boosting_mode == BoostingMode::Ordered && self.n_permutations < 1 {
            return bad("ordered boosting needs at least one permutation".into());
        }
        if !(1..=MAX_BORDERS).contains(&self.threshold_candidates_per_feature) {
            return bad(format!("threshold candidates must be in 1..={MAX_BORDERS}"));
        }
        if self.min_samples_per_leaf < 1 {
            return bad("min_samples_per_leaf must be at least 1".into());
        }
        if let Some(g) = &self.ghm {
            g.validate()?;
        }
        Ok(())
    }

    pub fn ghm_enabled(&self) -> bool {
        self.ghm.is_some_and(|g| g.enabled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub config: TrainingConfig,
    pub n_samples: usize,
    pub n_positive: usize,
    /// Mean training cross-entropy of the prior alone.
    pub initial_loss: f64,
    /// Mean training cross-entropy after each iteration.
    pub losses: Vec<f64>,
    /// Set when the training labels were all one class.
    pub single_class: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub trees: Vec<ObliviousTree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub feature_count: usize,
    /// Present on freshly trained models; not persisted.
    pub training_meta: Option<TrainingMeta>,
}

impl Ensemble {
    pub fn raw_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_count {
            return Err(Error::FeatureLength {
                expected: self.feature_count,
                actual: x.len(),
            });
        }
        Ok(self.raw_score_unchecked(x))
    }

    fn raw_score_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_score, |f, t| {
            f + self.learning_rate * t.predict(x)
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.raw_score(x).map(sigmoid)
    }

    pub fn predict_proba_batch<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| self.predict_proba(r.as_ref()))
            .collect()
    }

    /// Class labels at the 0.5 probability threshold.
    pub fn predict_labels<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba_batch(rows)?
            .into_iter()
            .map(|p| (p >= 0.5) as u8)
            .collect())
    }
}

pub fn predict_proba(ensemble: &Ensemble, x: &[f64]) -> Result<f64> {
    ensemble.predict_proba(x)
}

fn check_inputs<R: AsRef<[f64]>>(rows: &[R], labels: &[u8]) -> Result<usize> {
    if rows.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if rows.len() < 2 {
        return Err(Error::Config("training needs at least two samples".into()));
    }
    let d = rows[0].as_ref().len();
    if d == 0 {
        return Err(Error::Config("training rows have no features".into()));
    }
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != d {
            return Err(Error::FeatureLength {
                expected: d,
                actual: r.len(),
            });
        }
        if let Some(c) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                row: i + 1,
                column: c,
            });
        }
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Config(format!("label {y} is not 0 or 1")));
    }
    Ok(d)
}

/// Sample weights for one set of raw scores.
struct Weigher {
    ghm: Option<GHMConfig>,
    smoother: Option<SmoothedDensity>,
}

impl Weigher {
    fn new(ghm: Option<GHMConfig>) -> Self {
        let ghm = ghm.filter(|g| g.enabled);
        let smoother = ghm.and_then(|g| g.ema_momentum).map(SmoothedDensity::new);
        Weigher { ghm, smoother }
    }

    fn residuals_and_weights(&mut self, scores: &[f64], labels: &[u8]) -> (Vec<f64>, Vec<f64>) {
        let p: Vec<f64> = scores.iter().map(|&f| sigmoid(f)).collect();
        let r = p
            .iter()
            .zip(labels)
            .map(|(&p, &y)| residual(p, y))
            .collect();
        let w = match self.ghm {
            None => vec![1.0; scores.len()],
            Some(g) => {
                let mut stats = gradient_stats(&p, labels, g.z_bins).expect("validated GHM config");
                if let Some(s) = self.smoother.as_mut() {
                    s.apply(&mut stats);
                }
                stats.beta
            }
        };
        (r, w)
    }
}

/// Per-permutation scores of models that have not seen each sample's label.
struct OrderedState {
    perms: Vec<Vec<usize>>,
    scores: Vec<Vec<f64>>,
    ghm: Option<GHMConfig>,
}

impl OrderedState {
    fn new(n: usize, n_perms: usize, base: f64, seed: u64, ghm: Option<GHMConfig>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = (0..n_perms)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        OrderedState {
            perms,
            scores: vec![vec![base; n]; n_perms],
            ghm: ghm.filter(|g| g.enabled),
        }
    }

    fn gradients(&self, q: usize, labels: &[u8]) -> (Vec<f64>, Vec<f64>) {
        Weigher {
            ghm: self.ghm,
            smoother: None,
        }
        .residuals_and_weights(&self.scores[q], labels)
    }

    /// Each sample moves by the running leaf mean over the samples ahead of it
    /// in the permutation.
    fn advance(&mut self, leaf: &[u32], n_leaves: usize, labels: &[u8], lr: f64) {
        for q in 0..self.perms.len() {
            let (r, w) = self.gradients(q, labels);
            let mut s = vec![0.0; n_leaves];
            let mut sw = vec![0.0; n_leaves];
            let scores = &mut self.scores[q];
            for &i in &self.perms[q] {
                let j = leaf[i] as usize;
                if sw[j] > 0.0 {
                    scores[i] += lr * (s[j] / sw[j]);
                }
                s[j] += w[i] * r[i];
                sw[j] += w[i];
            }
        }
    }
}

/// Trains a boosted ensemble on `rows` (one feature vector per sample) and 0/1 `labels`.
pub fn fit<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    labels: &[u8],
    config: &TrainingConfig,
) -> Result<Ensemble> {
    config.validate()?;
    let d = check_inputs(rows, labels)?;
    let n = rows.len();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    let single_class = n_pos == 0 || n_neg == 0;
    let base_score = if single_class {
        warn!(
            "training labels are all {}; the model will predict that class",
            labels[0]
        );
        ((n_pos as f64 + 0.5) / (n_neg as f64 + 0.5)).ln()
    } else {
        (n_pos as f64 / n_neg as f64).ln()
    };

    let q = QuantizedFeatures::new(rows, config.threshold_candidates_per_feature)?;
    let n_leaves = 1usize << config.depth;
    let lr = config.learning_rate;
    let mut scores = vec![base_score; n];
    let initial_loss = mean_loss(&scores, labels);
    let mut losses = Vec::with_capacity(config.n_iterations);
    let mut trees = Vec::with_capacity(config.n_iterations);
    let mut weigher = Weigher::new(config.ghm);
    let mut ordered = (config.boosting_mode == BoostingMode::Ordered).then(|| {
        OrderedState::new(
            n,
            config.n_permutations,
            base_score,
            config.rng_seed,
            config.ghm,
        )
    });

    for m in 0..config.n_iterations {
        let (r, w) = weigher.residuals_and_weights(&scores, labels);
        let (mut tree, leaf) = match &ordered {
            None => grow_structure(&q, &r, &w, config.depth, config.min_samples_per_leaf),
            Some(state) => {
                let (ro, wo) = state.gradients(m % state.perms.len(), labels);
                grow_structure(&q, &ro, &wo, config.depth, config.min_samples_per_leaf)
            }
        };
        tree.leaf_values = leaf_means(&leaf, &r, &w, n_leaves);
        for (f, &j) in scores.iter_mut().zip(&leaf) {
            *f += lr * tree.leaf_values[j as usize];
        }
        if let Some(state) = ordered.as_mut() {
            state.advance(&leaf, n_leaves, labels, lr);
        }
        let loss = mean_loss(&scores, labels);
        if m % 100 == 0 {
            debug!("iteration {m}: training loss {loss:.6}");
        }
        losses.push(loss);
        trees.push(tree);
    }

    Ok(Ensemble {
        trees,
        learning_rate: lr,
        base_score,
        feature_count: d,
        training_meta: Some(TrainingMeta {
            config: config.clone(),
            n_samples: n,
            n_positive: n_pos,
            initial_loss,
            losses,
            single_class,
        }),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportanceReport {
    /// Share of total split gain per feature, summing to 100 (all zero when no split has gain).
    pub scores: Vec<f64>,
    /// Feature indices by descending score, lower index first on ties; empty when all scores are zero.
    pub ranking: Vec<usize>,
}

impl FeatureImportanceReport {
    /// `(rank, feature index, score)` for the `top` highest-scoring features, ranks from 1.
    pub fn top(&self, top: usize) -> Vec<(usize, usize, f64)> {
        self.ranking
            .iter()
            .take(top)
            .enumerate()
            .map(|(r, &f)| (r + 1, f, self.scores[f]))
            .collect()
    }
}

pub fn feature_importance(ensemble: &Ensemble) -> FeatureImportanceReport {
    let mut raw = vec![0.0; ensemble.feature_count];
    for t in &ensemble.trees {
        for (&(f, thr), &g) in t.levels.iter().zip(&t.gains) {
            if thr != f64::MAX {
                raw[f] += g;
            }
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return FeatureImportanceReport {
            scores: vec![0.0; ensemble.feature_count],
            ranking: Vec::new(),
        };
    }
    let scores: Vec<f64> = raw.iter().map(|v| 100.0 * v / total).collect();
    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    FeatureImportanceReport { scores, ranking }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghm_boost::loss::ce_loss;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        while rows.len() < n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let margin = a + 0.5 * b;
            if margin.abs() < 0.05 {
                continue;
            }
            rows.push(vec![a, b]);
            y.push((margin > 0.0) as u8);
        }
        (rows, y)
    }

    fn accuracy(e: &Ensemble, rows: &[Vec<f64>], y: &[u8]) -> f64 {
        let p = e.predict_labels(rows).unwrap();
        p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    fn cfg(iters: usize, depth: usize) -> TrainingConfig {
        TrainingConfig {
            n_iterations: iters,
            depth,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn prior_only_predictions() {
        let mut e = Ensemble {
            trees: vec![],
            learning_rate: 0.1,
            base_score: 0.0,
            feature_count: 2,
            training_meta: None,
        };
        assert_eq!(e.predict_proba(&[1.0, 2.0]).unwrap(), 0.5);
        e.base_score = 3f64.ln();
        assert!((e.predict_proba(&[1.0, 2.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(
            e.predict_proba(&[1.0]),
            Err(Error::FeatureLength {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn single_tree_routing_by_hand() {
        let tree = ObliviousTree {
            levels: vec![(1, 0.5), (0, -2.0)],
            leaf_values: vec![1.0, 2.0, 3.0, 4.0],
            gains: vec![0.0, 0.0],
        };
        let e = Ensemble {
            trees: vec![tree],
            learning_rate: 0.1,
            base_score: 0.0,
            feature_count: 2,
            training_meta: None,
        };
        // x[1] = 0.7 > 0.5 -> bit0 = 1; x[0] = -3 <= -2 -> bit1 = 0; leaf 1
        let p = e.predict_proba(&[-3.0, 0.7]).unwrap();
        assert_eq!(p, sigmoid(0.1 * 2.0));
    }

    #[test]
    fn separable_set_is_learned() {
        let (rows, y) = separable(200, 3);
        let e = fit(&rows, &y, &cfg(50, 6)).unwrap();
        assert_eq!(accuracy(&e, &rows, &y), 1.0);
        assert_eq!(e.trees.len(), 50);
        assert!(
            (e.base_score
                - (y.iter().filter(|&&v| v == 1).count() as f64
                    / y.iter().filter(|&&v| v == 0).count() as f64)
                    .ln())
            .abs()
                < 1e-15
        );
    }

    #[test]
    fn single_class_is_flagged_and_moves_towards_that_class() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y = vec![1u8; 30];
        let e = fit(&rows, &y, &cfg(20, 2)).unwrap();
        let meta = e.training_meta.as_ref().unwrap();
        assert!(meta.single_class);
        let mut prev = meta.initial_loss;
        for &l in &meta.losses {
            assert!(l < prev);
            prev = l;
        }
        let p: Vec<f64> = rows.iter().map(|r| e.predict_proba(r).unwrap()).collect();
        assert!(p.iter().all(|&v| v > sigmoid(e.base_score) && v == p[0]));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![f64::NAN, 1.0], vec![0.0, 0.0]];
        let err = fit(&rows, &[0, 1, 0], &cfg(3, 2)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFeature { row: 2, column: 0 }));
        assert!(fit(&[vec![1.0]], &[1], &cfg(3, 2)).is_err());
        assert!(fit(&[vec![1.0], vec![2.0]], &[0, 2], &cfg(3, 2)).is_err());
        assert!(fit(
            &[vec![1.0], vec![2.0]],
            &[0, 1],
            &TrainingConfig {
                depth: 17,
                ..cfg(3, 2)
            }
        )
        .is_err());
        assert!(fit(
            &[vec![1.0], vec![2.0]],
            &[0, 1],
            &TrainingConfig {
                learning_rate: 0.0,
                ..cfg(3, 2)
            }
        )
        .is_err());
    }

    #[test]
    fn one_ghm_bin_matches_unweighted_training() {
        let (rows, y) = separable(150, 11);
        let plain = fit(&rows, &y, &cfg(15, 3)).unwrap();
        let ghm = TrainingConfig {
            ghm: Some(GHMConfig {
                z_bins: 1,
                ..GHMConfig::default()
            }),
            ..cfg(15, 3)
        };
        let weighted = fit(&rows, &y, &ghm).unwrap();
        assert_eq!(plain.trees, weighted.trees);
    }

    #[test]
    fn ghm_changes_the_fit_on_imbalanced_data() {
        let (rows, mut y) = separable(300, 5);
        for (i, v) in y.iter_mut().enumerate() {
            if i % 5 != 0 {
                *v = 1;
            }
        }
        let off = fit(&rows, &y, &cfg(10, 3)).unwrap();
        let on = fit(
            &rows,
            &y,
            &TrainingConfig {
                ghm: Some(GHMConfig::default()),
                ..cfg(10, 3)
            },
        )
        .unwrap();
        assert_ne!(off.trees, on.trees);
    }

    #[test]
    fn training_is_deterministic() {
        let (rows, y) = separable(120, 8);
        for mode in [BoostingMode::Plain, BoostingMode::Ordered] {
            let c = TrainingConfig {
                boosting_mode: mode,
                ghm: Some(GHMConfig::default()),
                rng_seed: 4,
                ..cfg(10, 3)
            };
            assert_eq!(fit(&rows, &y, &c).unwrap(), fit(&rows, &y, &c).unwrap());
        }
    }

    #[test]
    fn ordered_mode_is_robust_to_row_order() {
        let (rows, y) = separable(400, 21);
        let (test_rows, test_y) = separable(400, 22);
        let c = TrainingConfig {
            boosting_mode: BoostingMode::Ordered,
            rng_seed: 9,
            ..cfg(60, 4)
        };
        let a = fit(&rows, &y, &c).unwrap();
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(77));
        let srows: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
        let sy: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
        let b = fit(&srows, &sy, &c).unwrap();
        let (acc_a, acc_b) = (
            accuracy(&a, &test_rows, &test_y),
            accuracy(&b, &test_rows, &test_y),
        );
        assert!(acc_a > 0.95, "{acc_a}");
        assert!((acc_a - acc_b).abs() < 0.005, "{acc_a} vs {acc_b}");
    }

    #[test]
    fn ordered_prefix_scores_exclude_own_label() {
        // With a single permutation, the first sample in it never moves.
        let (rows, y) = separable(50, 2);
        let base = 0.3;
        let mut st = OrderedState::new(50, 1, base, 1, None);
        let first = st.perms[0][0];
        let leaf = vec![0u32; 50];
        st.advance(&leaf, 1, &y, 0.1);
        assert_eq!(st.scores[0][first], base);
        let second = st.perms[0][1];
        let expected = base + 0.1 * residual(sigmoid(base), y[first]);
        assert!((st.scores[0][second] - expected).abs() < 1e-15);
        let _ = rows;
    }

    #[test]
    fn importance_concentrates_on_the_informative_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<u8> = rows.iter().map(|r| (r[2] > 0.4) as u8).collect();
        let e = fit(&rows, &y, &cfg(40, 3)).unwrap();
        let imp = feature_importance(&e);
        assert!(imp.scores[2] > 90.0, "{:?}", imp.scores);
        assert_eq!(imp.ranking[0], 2);
        assert!((imp.scores.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        assert_eq!(imp.top(1), vec![(1, 2, imp.scores[2])]);
    }

    #[test]
    fn importance_of_an_empty_ensemble_is_zero() {
        let e = Ensemble {
            trees: vec![],
            learning_rate: 0.1,
            base_score: 0.0,
            feature_count: 4,
            training_meta: None,
        };
        let imp = feature_importance(&e);
        assert_eq!(imp.scores, vec![0.0; 4]);
        assert!(imp.ranking.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn plain_training_loss_never_increases(seed in any::<u64>(), n in 20usize..120, d in 1usize..6, depth in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let y: Vec<u8> = (0..n).map(|i| if i < 2 { i as u8 } else { rng.random_range(0..2u8) }).collect();
            let e = fit(&rows, &y, &cfg(40, depth)).unwrap();
            let meta = e.training_meta.clone().unwrap();
            let mut prev = meta.initial_loss;
            for &l in &meta.losses {
                prop_assert!(l <= prev + 1e-12, "{} > {}", l, prev);
                prev = l;
            }
            let direct: f64 = rows.iter().zip(&y).map(|(r, &v)| ce_loss(e.predict_proba(r).unwrap(), v)).sum::<f64>() / n as f64;
            prop_assert!((direct - prev).abs() < 1e-12);
        }
    }
}
