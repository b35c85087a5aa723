use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GridCase;

pub const LOAD_FACTOR_MIN: f64 = 0.7;
pub const LOAD_FACTOR_MAX: f64 = 1.3;
/// Extra generation scheduled on top of the scaled load, as a fraction of base generation.
pub const LOSS_ALLOWANCE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingScenario {
    /// Multiplier applied to both P and Q load at each bus, in case order.
    pub load_factors: Vec<f64>,
    /// Multiplier applied to every generator's scheduled output.
    pub gen_scale: f64,
}

impl LoadingScenario {
    pub fn base(case: &GridCase) -> Self {
        LoadingScenario {
            load_factors: vec![1.0; case.n_buses()],
            gen_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadVariation {
    /// One independent factor per bus.
    #[default]
    PerBus,
    /// A single factor shared by all buses.
    Global,
}

/// Draws a scenario from a fresh generator seeded with `rng_seed`.
pub fn sample_loading(case: &GridCase, rng_seed: u64) -> LoadingScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_loading_with(case, &mut rng, LoadVariation::PerBus)
}

pub fn sample_loading_with<R: Rng + ?Sized>(
    case: &GridCase,
    rng: &mut R,
    variation: LoadVariation,
) -> LoadingScenario {
    let n = case.n_buses();
    let load_factors: Vec<f64> = match variation {
        LoadVariation::PerBus => (0..n)
            .map(|_| rng.random_range(LOAD_FACTOR_MIN..=LOAD_FACTOR_MAX))
            .collect(),
        LoadVariation::Global => vec![rng.random_range(LOAD_FACTOR_MIN..=LOAD_FACTOR_MAX); n],
    };
    let scaled_load: f64 = case
        .buses
        .iter()
        .zip(&load_factors)
        .map(|(b, f)| b.p_load * f)
        .sum();
    let base_gen: f64 = case.generators.iter().map(|g| g.p_gen).sum();
    let gen_scale = if base_gen > 0.0 {
        (scaled_load + LOSS_ALLOWANCE * base_gen) / base_gen
    } else {
        1.0
    };
    LoadingScenario {
        load_factors,
        gen_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_per_seed() {
        let case = GridCase::ne39();
        assert_eq!(sample_loading(&case, 17), sample_loading(&case, 17));
        assert_ne!(sample_loading(&case, 17), sample_loading(&case, 18));
    }

    #[test]
    fn uniform_statistics() {
        let case = GridCase::ne39();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| sample_loading_with(&case, &mut rng, LoadVariation::Global).load_factors[0])
            .collect();
        let min = draws.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(min >= 0.7 && max <= 1.3);
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn zero_load_scales_to_allowance() {
        let text = "[SYSTEM]\nmva_base=100\n[BUS]\n1 SLACK 0 0 0 0 1\n2 PV 0 0 0 0 1\n\
                    [BRANCH]\n1 2 0 0.1 0 1\n[GEN]\n1 1 1 5 0 0.2 100\n2 3 1 5 0 0.2 100\n";
        let case = crate::grid_case::parse_case(text).unwrap();
        let s = sample_loading(&case, 1);
        assert!((s.gen_scale - LOSS_ALLOWANCE).abs() < 1e-15);
        assert!(s.gen_scale > 0.0);
    }

    proptest! {
        #[test]
        fn factors_stay_in_band(seed in any::<u64>()) {
            let case = GridCase::ne39();
            let s = sample_loading(&case, seed);
            prop_assert!(s.load_factors.iter().all(|f| (LOAD_FACTOR_MIN..=LOAD_FACTOR_MAX).contains(f)));
            prop_assert!(s.gen_scale > 0.0);
        }
    }
}
