//! Confusion counts and ACC/FAR/FRR, with the stable class (y = 1) as positive.

use serde::Serialize;

use crate::ghm_boost::Ensemble;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Share of unstable samples classified as stable; `None` without unstable samples.
    pub fn false_alarm_rate(&self) -> Option<f64> {
        let d = self.fp + self.tn;
        (d > 0).then(|| self.fp as f64 / d as f64)
    }

    /// Share of stable samples classified as unstable; `None` without stable samples.
    pub fn false_rejection_rate(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.fn_ as f64 / d as f64)
    }

    fn add(&mut self, o: &ConfusionMatrix) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub counts: ConfusionMatrix,
    pub wall_time_s: f64,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionMatrix, wall_time_s: f64) -> Self {
        MetricsReport {
            acc: counts.accuracy(),
            far: counts.false_alarm_rate(),
            frr: counts.false_rejection_rate(),
            counts,
            wall_time_s,
        }
    }

    /// Element-wise mean of several reports. Rates average over the reports
    /// where they are defined; counts are summed.
    pub fn mean(reports: &[MetricsReport]) -> MetricsReport {
        assert!(!reports.is_empty(), "mean of no reports");
        let n = reports.len() as f64;
        let mean_opt = |get: fn(&MetricsReport) -> Option<f64>| {
            let vals: Vec<f64> = reports.iter().filter_map(get).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let mut counts = ConfusionMatrix::default();
        for r in reports {
            counts.add(&r.counts);
        }
        MetricsReport {
            acc: reports.iter().map(|r| r.acc).sum::<f64>() / n,
            far: mean_opt(|r| r.far),
            frr: mean_opt(|r| r.frr),
            counts,
            wall_time_s: reports.iter().map(|r| r.wall_time_s).sum::<f64>() / n,
        }
    }

    /// One comparison-table row: `name, ACC%, FAR%, FRR%, time`.
    pub fn table_row(&self, name: &str) -> String {
        let pct =
            |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}%", 100.0 * x));
        format!(
            "{name}, {:.2}%, {}, {}, {:.2}s",
            100.0 * self.acc,
            pct(self.far),
            pct(self.frr),
            self.wall_time_s
        )
    }
}

pub fn confusion_and_metrics(predicted: &[u8], actual: &[u8]) -> Result<MetricsReport> {
    if predicted.len() != actual.len() {
        return Err(Error::Evaluation(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Evaluation("no samples to evaluate".into()));
    }
    let mut c = ConfusionMatrix::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            _ => {
                return Err(Error::Evaluation(format!(
                    "labels must be 0 or 1, got ({p}, {a})"
                )))
            }
        }
    }
    Ok(MetricsReport::from_counts(c, 0.0))
}

/// Scores `rows` with the model at the 0.5 threshold.
pub fn evaluate<R: AsRef<[f64]>>(
    model: &Ensemble,
    rows: &[R],
    labels: &[u8],
) -> Result<MetricsReport> {
    confusion_and_metrics(&model.predict_labels(rows)?, labels)
}
