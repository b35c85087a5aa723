//! PMU placement: which features a set of instrumented buses observes, and
//! how accuracy holds up on those features alone.

use serde::Serialize;

use super::cv::kfold_cv;
use super::sweep::{SweepAxis, SweepPoint, SweepResult};
use crate::ghm_boost::{FeatureImportanceReport, TrainingConfig};
use crate::grid_case::GridCase;
use crate::transient_sim::{feature_count, feature_index, feature_kind, Dataset, FeatureKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PMUPlan {
    pub scheme_id: u32,
    pub buses: Vec<u32>,
}

impl PMUPlan {
    /// Drops repeated buses, keeping first occurrences in order.
    pub fn new(scheme_id: u32, buses: &[u32]) -> Result<Self> {
        let mut unique = Vec::with_capacity(buses.len());
        for &b in buses {
            if !unique.contains(&b) {
                unique.push(b);
            }
        }
        if unique.is_empty() {
            return Err(Error::Evaluation(format!(
                "PMU scheme {scheme_id} has no buses"
            )));
        }
        Ok(PMUPlan {
            scheme_id,
            buses: unique,
        })
    }

    pub fn validate(&self, case: &GridCase) -> Result<()> {
        match self.buses.iter().find(|&&b| case.bus_index(b).is_none()) {
            Some(&b) => Err(Error::UnknownBus(b)),
            None => Ok(()),
        }
    }
}

/// The four published placement schemes for the 39-bus system. Scheme 4 lists
/// buses 14 and 9 twice; the repeats are dropped.
pub fn reference_schemes() -> Vec<PMUPlan> {
    const S1: [u32; 5] = [8, 5, 6, 7, 14];
    const S2: [u32; 5] = [9, 1, 39, 17, 12];
    const S3: [u32; 5] = [2, 13, 25, 16, 18];
    const S4: [u32; 5] = [14, 11, 9, 4, 10];
    let mut acc = Vec::new();
    let mut plans = Vec::new();
    for (id, extra) in [S1, S2, S3, S4].iter().enumerate() {
        acc.extend_from_slice(extra);
        plans.push(PMUPlan::new(id as u32 + 1, &acc).expect("non-empty"));
    }
    plans
}

/// Sorted feature columns observed by PMUs at the plan's buses: each bus's
/// voltage magnitude and angle plus P and Q of every incident branch.
pub fn pmu_feature_subset(plan: &PMUPlan, case: &GridCase) -> Result<Vec<usize>> {
    plan.validate(case)?;
    let mut cols = Vec::new();
    for &bus in &plan.buses {
        let k = case.bus_index(bus).expect("validated");
        cols.push(feature_index(case, FeatureKind::VoltageMagnitude(k)));
        cols.push(feature_index(case, FeatureKind::VoltageAngle(k)));
        for br in case.incident_branches(bus) {
            cols.push(feature_index(case, FeatureKind::ActivePower(br)));
            cols.push(feature_index(case, FeatureKind::ReactivePower(br)));
        }
    }
    cols.sort_unstable();
    cols.dedup();
    Ok(cols)
}

/// Cross-validated accuracy per scheme. Setting 0 is the full-feature baseline.
pub fn pmu_study(
    dataset: &Dataset,
    case: &GridCase,
    schemes: &[PMUPlan],
    config: &TrainingConfig,
    k: usize,
    seed: u64,
) -> Result<SweepResult> {
    if schemes.is_empty() {
        return Err(Error::Evaluation("no PMU schemes given".into()));
    }
    if dataset.n_features() != feature_count(case) {
        return Err(Error::FeatureLength {
            expected: feature_count(case),
            actual: dataset.n_features(),
        });
    }
    let mut points = vec![SweepPoint {
        setting: 0.0,
        report: kfold_cv(dataset, k, config, seed)?.mean,
        note: Some("all features".into()),
    }];
    for plan in schemes {
        let cols = pmu_feature_subset(plan, case)?;
        let report = kfold_cv(&dataset.select_features(&cols), k, config, seed)?.mean;
        points.push(SweepPoint {
            setting: plan.scheme_id as f64,
            report,
            note: Some(format!(
                "{} buses, {} features",
                plan.buses.len(),
                cols.len()
            )),
        });
    }
    SweepResult::new(SweepAxis::PMUScheme, points)
}

/// Importance aggregated per bus: voltage features count fully toward their
/// bus, branch flows half toward each end. Returned in case bus order.
pub fn bus_scores(importance: &FeatureImportanceReport, case: &GridCase) -> Vec<f64> {
    let mut score = vec![0.0; case.n_buses()];
    for (f, &s) in importance.scores.iter().enumerate() {
        match feature_kind(case, f) {
            Some(FeatureKind::VoltageMagnitude(k)) | Some(FeatureKind::VoltageAngle(k)) => {
                score[k] += s
            }
            Some(FeatureKind::ActivePower(b)) | Some(FeatureKind::ReactivePower(b)) => {
                let (i, j) = case.branch_ends(&case.branches[b]);
                score[i] += s / 2.0;
                score[j] += s / 2.0;
            }
            None => {}
        }
    }
    score
}

/// The `count` buses with the highest aggregated importance, lower id first on ties.
pub fn rank_pmu_buses(
    importance: &FeatureImportanceReport,
    case: &GridCase,
    count: usize,
) -> Result<PMUPlan> {
    if count < 1 {
        return Err(Error::Evaluation("PMU count must be at least 1".into()));
    }
    let score = bus_scores(importance, case);
    let mut order: Vec<usize> = (0..case.n_buses()).collect();
    order.sort_by(|&a, &b| {
        score[b]
            .total_cmp(&score[a])
            .then(case.buses[a].id.cmp(&case.buses[b].id))
    });
    let buses: Vec<u32> = order
        .iter()
        .take(count)
        .map(|&k| case.buses[k].id)
        .collect();
    PMUPlan::new(0, &buses)
}
