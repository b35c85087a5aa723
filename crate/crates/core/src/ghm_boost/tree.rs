//! Oblivious (symmetric) regression trees over quantized features.
//!
//! Every node at a given depth shares one `(feature, threshold)` test, so a
//! tree of depth `d` is a list of `d` tests and `2^d` leaf values. Bit `l` of
//! a leaf index is the outcome of level `l` (0 when `x[f] <= t`).

use rayon::prelude::*;

use crate::{Error, Result};

/// Largest supported number of candidate thresholds per feature (bins fit in a byte).
pub const MAX_BORDERS: usize = 254;
pub const MAX_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ObliviousTree {
    pub levels: Vec<(usize, f64)>,
    pub leaf_values: Vec<f64>,
    /// Weighted squared-error reduction achieved by each level's split.
    pub gains: Vec<f64>,
}

impl ObliviousTree {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        self.levels
            .iter()
            .enumerate()
            .fold(0, |idx, (l, &(f, t))| idx | (((x[f] > t) as usize) << l))
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaf_values[self.leaf_index(x)]
    }
}

/// Candidate split thresholds per feature, and each sample's bin under them.
///
/// A value's bin is the number of borders strictly below it, so
/// `bin <= k` exactly when `x <= borders[k]`.
#[derive(Debug, Clone)]
pub struct QuantizedFeatures {
    pub borders: Vec<Vec<f64>>,
    /// Column-major bins: `bins[f][i]`.
    pub bins: Vec<Vec<u8>>,
    pub n_rows: usize,
}

impl QuantizedFeatures {
    pub fn new<R: AsRef<[f64]> + Sync>(rows: &[R], max_borders: usize) -> Result<Self> {
        if !(1..=MAX_BORDERS).contains(&max_borders) {
            return Err(Error::Config(format!(
                "threshold candidates must be in 1..={MAX_BORDERS}, got {max_borders}"
            )));
        }
        let n_rows = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let borders: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|f| {
                let mut col: Vec<f64> = rows.iter().map(|r| r.as_ref()[f]).collect();
                col.sort_by(f64::total_cmp);
                quantile_borders(&col, max_borders)
            })
            .collect();
        let bins = borders
            .par_iter()
            .enumerate()
            .map(|(f, b)| rows.iter().map(|r| bin_value(b, r.as_ref()[f])).collect())
            .collect();
        Ok(QuantizedFeatures {
            borders,
            bins,
            n_rows,
        })
    }

    pub fn n_features(&self) -> usize {
        self.borders.len()
    }
}

fn bin_value(borders: &[f64], x: f64) -> u8 {
    borders.partition_point(|&b| b < x) as u8
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// Borders between distinct values of the sorted column. When there are more
/// gaps than `max_borders`, gaps are picked at evenly spaced sample quantiles.
fn quantile_borders(sorted: &[f64], max_borders: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut gaps: Vec<usize> = (1..n).filter(|&i| sorted[i] > sorted[i - 1]).collect();
    if gaps.len() > max_borders {
        let mut picked = Vec::with_capacity(max_borders);
        for k in 1..=max_borders {
            let target = (k * n) as f64 / (max_borders + 1) as f64;
            // first gap at or after the target rank
            let j = gaps
                .partition_point(|&g| (g as f64) < target)
                .min(gaps.len() - 1);
            if picked.last() != Some(&gaps[j]) {
                picked.push(gaps[j]);
            }
        }
        gaps = picked;
    }
    gaps.iter()
        .map(|&i| midpoint(sorted[i - 1], sorted[i]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub depth: usize,
    pub threshold_candidates: usize,
    pub min_samples_per_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            depth: 6,
            threshold_candidates: 32,
            min_samples_per_leaf: 1,
        }
    }
}

/// Weighted least-squares oblivious tree fitted to `targets`.
pub fn build_oblivious_tree<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    targets: &[f64],
    weights: &[f64],
    params: &TreeParams,
) -> Result<ObliviousTree> {
    if rows.len() != targets.len() || rows.len() != weights.len() {
        return Err(Error::Config(
            "rows, targets and weights differ in length".into(),
        ));
    }
    if rows.is_empty() || rows[0].as_ref().is_empty() {
        return Err(Error::Config(
            "tree needs at least one row and one feature".into(),
        ));
    }
    if !(1..=MAX_DEPTH).contains(&params.depth) {
        return Err(Error::Config(format!("depth must be in 1..={MAX_DEPTH}")));
    }
    let q = QuantizedFeatures::new(rows, params.threshold_candidates)?;
    let (structure, leaves) = grow_structure(
        &q,
        targets,
        weights,
        params.depth,
        params.min_samples_per_leaf,
    );
    let leaf_values = leaf_means(&leaves, targets, weights, 1 << params.depth);
    Ok(ObliviousTree {
        leaf_values,
        ..structure
    })
}

/// Greedy level-wise split search. Returns the tree (leaf values unset) and
/// each sample's leaf index.
pub(crate) fn grow_structure(
    q: &QuantizedFeatures,
    targets: &[f64],
    weights: &[f64],
    depth: usize,
    min_leaf: usize,
) -> (ObliviousTree, Vec<u32>) {
    let n = q.n_rows;
    let mut leaf = vec![0u32; n];
    let mut levels = Vec::with_capacity(depth);
    let mut gains = Vec::with_capacity(depth);
    let wr: Vec<f64> = targets.iter().zip(weights).map(|(t, w)| t * w).collect();

    for l in 0..depth {
        let n_leaves = 1usize << l;
        let per_feature: Vec<Option<(f64, usize)>> = (0..q.n_features())
            .into_par_iter()
            .map(|f| best_threshold(q, f, &leaf, &wr, weights, n_leaves, min_leaf))
            .collect();
        // sequential reduction keeps the lowest-feature tie-break independent of scheduling
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, cand) in per_feature.into_iter().enumerate() {
            if let Some((gain, k)) = cand {
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, k));
                }
            }
        }
        match best {
            Some((gain, f, k)) => {
                let bins = &q.bins[f];
                for i in 0..n {
                    leaf[i] |= ((bins[i] as usize > k) as u32) << l;
                }
                levels.push((f, q.borders[f][k]));
                gains.push(gain.max(0.0));
            }
            None => {
                // nothing splittable: a test every sample passes
                levels.push((0, f64::MAX));
                gains.push(0.0);
            }
        }
    }
    (
        ObliviousTree {
            levels,
            leaf_values: Vec::new(),
            gains,
        },
        leaf,
    )
}

#[inline]
fn score(s: f64, w: f64) -> f64 {
    if w > 0.0 {
        s * s / w
    } else {
        0.0
    }
}

fn best_threshold(
    q: &QuantizedFeatures,
    f: usize,
    leaf: &[u32],
    wr: &[f64],
    w: &[f64],
    n_leaves: usize,
    min_leaf: usize,
) -> Option<(f64, usize)> {
    let nb = q.borders[f].len();
    if nb == 0 {
        return None;
    }
    let stride = nb + 1;
    let mut hs = vec![0.0; n_leaves * stride];
    let mut hw = vec![0.0; n_leaves * stride];
    let mut hc = vec![0usize; n_leaves * stride];
    for (i, &b) in q.bins[f].iter().enumerate() {
        let at = leaf[i] as usize * stride + b as usize;
        hs[at] += wr[i];
        hw[at] += w[i];
        hc[at] += 1;
    }
    let mut tot = vec![(0.0, 0.0, 0usize); n_leaves];
    let mut parent = 0.0;
    for (j, t) in tot.iter_mut().enumerate() {
        let r = j * stride..(j + 1) * stride;
        *t = (
            hs[r.clone()].iter().sum(),
            hw[r.clone()].iter().sum(),
            hc[r].iter().sum(),
        );
        parent += score(t.0, t.1);
    }
    let mut left = vec![(0.0, 0.0, 0usize); n_leaves];
    let mut best: Option<(f64, usize)> = None;
    for k in 0..nb {
        let mut children = 0.0;
        let mut valid = true;
        for j in 0..n_leaves {
            let at = j * stride + k;
            let lf = &mut left[j];
            lf.0 += hs[at];
            lf.1 += hw[at];
            lf.2 += hc[at];
            let (s, ww, c) = tot[j];
            let (rc, lc) = (c - lf.2, lf.2);
            if (lc > 0 && lc < min_leaf) || (rc > 0 && rc < min_leaf) {
                valid = false;
            }
            children += score(lf.0, lf.1) + score(s - lf.0, ww - lf.1);
        }
        if !valid {
            continue;
        }
        let gain = children - parent;
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, k));
        }
    }
    best
}

/// Weighted mean of `values` per leaf; empty leaves get 0.
pub(crate) fn leaf_means(
    leaf: &[u32],
    values: &[f64],
    weights: &[f64],
    n_leaves: usize,
) -> Vec<f64> {
    let mut s = vec![0.0; n_leaves];
    let mut w = vec![0.0; n_leaves];
    for i in 0..leaf.len() {
        s[leaf[i] as usize] += weights[i] * values[i];
        w[leaf[i] as usize] += weights[i];
    }
    s.iter()
        .zip(&w)
        .map(|(&s, &w)| if w > 0.0 { s / w } else { 0.0 })
        .collect()
}
