//! Gradient harmonizing weights.
//!
//! Samples are binned by gradient modulus into `Z` equal-width regions of
//! `[0, 1]`. A bin's occupancy times `Z` is the gradient density of its
//! members, and each sample is weighted by `n / density`, so crowded regions
//! (typically the many easy samples) are down-weighted.

use super::loss::{ce_loss, gradient_modulus};
use crate::{Error, Result};

pub const DEFAULT_Z_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GHMConfig {
    pub z_bins: usize,
    pub enabled: bool,
    /// Exponential smoothing of bin counts across iterations. `None` (the
    /// default) uses the raw counts of the current iteration.
    pub ema_momentum: Option<f64>,
}

impl Default for GHMConfig {
    fn default() -> Self {
        GHMConfig {
            z_bins: DEFAULT_Z_BINS,
            enabled: true,
            ema_momentum: None,
        }
    }
}

impl GHMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.z_bins < 1 {
            return Err(Error::Config("GHM bin count must be at least 1".into()));
        }
        if let Some(m) = self.ema_momentum {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Config(format!("GHM momentum {m} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientStats {
    /// Predicted probabilities; empty when built from moduli alone.
    pub p: Vec<f64>,
    pub g: Vec<f64>,
    pub beta: Vec<f64>,
    pub bin_counts: Vec<usize>,
}

impl GradientStats {
    /// Gradient density of sample `i`.
    pub fn density(&self, i: usize) -> f64 {
        self.bin_counts[bin_of(self.g[i], self.bin_counts.len())] as f64
            * self.bin_counts.len() as f64
    }
}

#[inline]
pub fn bin_of(g: f64, z: usize) -> usize {
    ((g * z as f64).floor() as usize).min(z - 1)
}

pub fn ghm_weights(g: &[f64], z_bins: usize) -> Result<GradientStats> {
    if z_bins < 1 {
        return Err(Error::Config("GHM bin count must be at least 1".into()));
    }
    if g.is_empty() {
        return Err(Error::Config("GHM weights need at least one sample".into()));
    }
    if let Some(bad) = g.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Config(format!(
            "gradient modulus {bad} outside [0, 1]"
        )));
    }
    let mut bin_counts = vec![0usize; z_bins];
    for &v in g {
        bin_counts[bin_of(v, z_bins)] += 1;
    }
    let n = g.len() as f64;
    let beta = g
        .iter()
        .map(|&v| n / (bin_counts[bin_of(v, z_bins)] * z_bins) as f64)
        .collect();
    Ok(GradientStats {
        p: Vec::new(),
        g: g.to_vec(),
        beta,
        bin_counts,
    })
}

/// Harmonizing weights for predictions `p` against `labels`.
pub fn gradient_stats(p: &[f64], labels: &[u8], z_bins: usize) -> Result<GradientStats> {
    let g: Vec<f64> = p
        .iter()
        .zip(labels)
        .map(|(&p, &y)| gradient_modulus(p, y))
        .collect();
    let mut stats = ghm_weights(&g, z_bins)?;
    stats.p = p.to_vec();
    Ok(stats)
}

/// Harmonized cross-entropy `(1/n) Σ β_i L(p_i, y_i)`.
pub fn harmonized_loss(stats: &GradientStats, labels: &[u8]) -> f64 {
    let n = labels.len() as f64;
    stats
        .p
        .iter()
        .zip(labels)
        .zip(&stats.beta)
        .map(|((&p, &y), &b)| b * ce_loss(p, y))
        .sum::<f64>()
        / n
}

/// Bin-count smoother carried across boosting iterations.
#[derive(Debug, Clone)]
pub(crate) struct SmoothedDensity {
    momentum: f64,
    counts: Option<Vec<f64>>,
}

impl SmoothedDensity {
    pub(crate) fn new(momentum: f64) -> Self {
        SmoothedDensity {
            momentum,
            counts: None,
        }
    }

    /// Rewrites `stats.beta` from counts smoothed with previous iterations.
    pub(crate) fn apply(&mut self, stats: &mut GradientStats) {
        let z = stats.bin_counts.len();
        let fresh = stats.bin_counts.iter().map(|&c| c as f64);
        let counts = match self.counts.take() {
            None => fresh.collect::<Vec<_>>(),
            Some(prev) => prev
                .iter()
                .zip(fresh)
                .map(|(&a, b)| self.momentum * a + (1.0 - self.momentum) * b)
                .collect(),
        };
        let n = stats.g.len() as f64;
        for (b, &g) in stats.beta.iter_mut().zip(&stats.g) {
            *b = n / (counts[bin_of(g, z)] * z as f64);
        }
        self.counts = Some(counts);
    }
}
