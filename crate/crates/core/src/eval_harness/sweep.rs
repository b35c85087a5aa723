//! Sweep results and their CSV / JSON / gnuplot renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::metrics::MetricsReport;
use crate::util::fmt_sig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    NoiseLevel,
    StableRatio,
    PMUScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub setting: f64,
    pub report: MetricsReport,
    /// Free-text remark, e.g. a scaled-down training size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

pub const CSV_HEADER: &str = "setting,acc,far,frr,wall_time_s";

impl SweepResult {
    pub fn new(axis: SweepAxis, points: Vec<SweepPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Evaluation("sweep has no points".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if points[..i].iter().any(|q| q.setting == p.setting) {
                return Err(Error::Evaluation(format!(
                    "duplicate sweep setting {}",
                    p.setting
                )));
            }
        }
        Ok(SweepResult { axis, points })
    }

    pub fn point(&self, setting: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.setting == setting)
    }

    /// One row per point; undefined rates are left empty.
    pub fn to_csv_string(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| fmt_sig(x, 9)).unwrap_or_default();
        let mut s = format!("{CSV_HEADER}\n");
        for p in &self.points {
            let r = &p.report;
            writeln!(
                s,
                "{},{},{},{},{}",
                fmt_sig(p.setting, 9),
                fmt_sig(r.acc, 9),
                opt(r.far),
                opt(r.frr),
                fmt_sig(r.wall_time_s, 6)
            )
            .unwrap();
        }
        s
    }

    /// Whitespace-separated columns for plotting; undefined rates become `NaN`.
    pub fn to_gnuplot_string(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |x| fmt_sig(x, 9));
        let mut s = format!("# {:?}\n# {}\n", self.axis, CSV_HEADER.replace(',', " "));
        for p in &self.points {
            let r = &p.report;
            writeln!(
                s,
                "{} {} {} {} {}",
                fmt_sig(p.setting, 9),
                fmt_sig(r.acc, 9),
                opt(r.far),
                opt(r.frr),
                fmt_sig(r.wall_time_s, 6)
            )
            .unwrap();
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("sweep serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.dat` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<()> {
        for (ext, body) in [
            ("csv", self.to_csv_string()),
            ("dat", self.to_gnuplot_string()),
        ] {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
