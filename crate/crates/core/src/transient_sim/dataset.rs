use std::io::{Read, Write};
use std::path::Path;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    build_stage_networks, compute_tsi, feature_names, integrate_swing, label_from_tsi,
    snapshot_features, FaultScenario, CLEARING_TIME_RANGE, DEFAULT_DT, DEFAULT_HORIZON,
    FAULT_POSITION_RANGE,
};
use crate::grid_case::{
    sample_loading_with, solve_power_flow, GridCase, LoadVariation, VOLTAGE_SCREEN_MAX,
    VOLTAGE_SCREEN_MIN,
};
use crate::util::{derive_seed, fmt_sig};
use crate::{Error, Result};

/// Redraws allowed per scenario when the operating point fails the voltage screen.
pub const MAX_LOADING_REDRAWS: usize = 50;
/// Generation aborts when more than this fraction of scenarios fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

const TRAILER_COLUMNS: [&str; 6] = [
    "label",
    "tsi",
    "scenario_id",
    "fault_branch",
    "fault_pos",
    "clear_time",
];

/// One labelled post-fault observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub features: Vec<f64>,
    pub tsi: f64,
    pub label: u8,
    pub scenario_id: u64,
    pub fault_branch: usize,
    pub fault_position: f64,
    pub clearing_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<SampleRecord>,
    pub feature_names: Vec<String>,
    /// Digest of the generating case, when known.
    pub case_digest: Option<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.features.as_slice()).collect()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Samples at the given positions, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            case_digest: self.case_digest.clone(),
        }
    }

    /// Keeps only the listed feature columns.
    pub fn select_features(&self, columns: &[usize]) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .map(|s| SampleRecord {
                    features: columns.iter().map(|&c| s.features[c]).collect(),
                    ..s.clone()
                })
                .collect(),
            feature_names: columns
                .iter()
                .map(|&c| self.feature_names[c].clone())
                .collect(),
            case_digest: self.case_digest.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Dataset(e.to_string());
        let header: Vec<&str> = self
            .feature_names
            .iter()
            .map(String::as_str)
            .chain(TRAILER_COLUMNS)
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.features.iter().map(|&x| fmt_sig(x, 9)).collect();
            row.push(s.label.to_string());
            row.push(fmt_sig(s.tsi, 9));
            row.push(s.scenario_id.to_string());
            row.push(s.fault_branch.to_string());
            row.push(fmt_sig(s.fault_position, 9));
            row.push(fmt_sig(s.clearing_time, 9));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Dataset(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 output")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses the dataset CSV. Row numbers in errors count data rows from 1.
    pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(input);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Dataset(format!("header: {e}")))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header.len() < TRAILER_COLUMNS.len()
            || header[header.len() - TRAILER_COLUMNS.len()..] != TRAILER_COLUMNS
        {
            return Err(Error::Dataset(format!(
                "header must end with {}",
                TRAILER_COLUMNS.join(",")
            )));
        }
        let n_features = header.len() - TRAILER_COLUMNS.len();
        let feature_names = header[..n_features].to_vec();
        let mut samples = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::DatasetRow {
                row,
                message: e.to_string(),
            })?;
            if record.len() != header.len() {
                return Err(Error::DatasetRow {
                    row,
                    message: format!("expected {} columns, found {}", header.len(), record.len()),
                });
            }
            let real = |col: usize| -> Result<f64> {
                let cell = record[col].trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::DatasetRow {
                        row,
                        message: format!(
                            "column {} (`{}`): not a finite number: `{cell}`",
                            col + 1,
                            header[col]
                        ),
                    })
            };
            let integer = |col: usize| -> Result<u64> {
                let cell = record[col].trim();
                cell.parse::<u64>().map_err(|_| Error::DatasetRow {
                    row,
                    message: format!(
                        "column {} (`{}`): not an integer: `{cell}`",
                        col + 1,
                        header[col]
                    ),
                })
            };
            let features = (0..n_features).map(real).collect::<Result<Vec<_>>>()?;
            let label = integer(n_features)?;
            if label > 1 {
                return Err(Error::DatasetRow {
                    row,
                    message: format!("label must be 0 or 1, got {label}"),
                });
            }
            samples.push(SampleRecord {
                features,
                label: label as u8,
                tsi: real(n_features + 1)?,
                scenario_id: integer(n_features + 2)?,
                fault_branch: integer(n_features + 3)? as usize,
                fault_position: real(n_features + 4)?,
                clearing_time: real(n_features + 5)?,
            });
        }
        Ok(Dataset {
            samples,
            feature_names,
            case_digest: None,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    pub n_scenarios: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub load_variation: LoadVariation,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl GenerationOptions {
    pub fn new(n_scenarios: usize, seed: u64) -> Self {
        GenerationOptions {
            n_scenarios,
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            seed,
            load_variation: LoadVariation::PerBus,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFailure {
    pub scenario_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationReport {
    pub requested: usize,
    pub accepted: usize,
    pub failures: Vec<ScenarioFailure>,
    /// Loading draws rejected by the voltage screen or power-flow failure.
    pub loading_redraws: usize,
    pub n_stable: usize,
    pub n_unstable: usize,
    pub case_digest: String,
}

/// Simulates scenario `scenario_id`; returns the record and the number of loading redraws.
pub fn simulate_scenario(
    case: &GridCase,
    scenario_id: u64,
    opts: &GenerationOptions,
) -> Result<(SampleRecord, usize)> {
    let scenario_seed = derive_seed(opts.seed, scenario_id);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed);

    let mut redraws = 0;
    let (loading, solution) = loop {
        let loading = sample_loading_with(case, &mut rng, opts.load_variation);
        match solve_power_flow(case, &loading) {
            Ok(sol) if sol.within_voltage_band(VOLTAGE_SCREEN_MIN, VOLTAGE_SCREEN_MAX) => {
                break (loading, sol)
            }
            Ok(_) | Err(Error::PowerFlowDiverged { .. }) | Err(Error::Singular(_)) => {
                if redraws == MAX_LOADING_REDRAWS {
                    return Err(Error::InvalidScenario(format!(
                        "no acceptable operating point after {MAX_LOADING_REDRAWS} redraws"
                    )));
                }
                redraws += 1;
            }
            Err(e) => return Err(e),
        }
    };

    let in_service: Vec<usize> = case
        .status_mask()
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| i)
        .collect();
    let fault_branch = in_service[rng.random_range(0..in_service.len())];
    let fault_position = rng.random_range(FAULT_POSITION_RANGE.0..=FAULT_POSITION_RANGE.1);
    let clearing_time = rng.random_range(CLEARING_TIME_RANGE.0..=CLEARING_TIME_RANGE.1);
    let scenario = FaultScenario {
        loading,
        fault_branch,
        fault_position,
        clearing_time,
        sim_horizon: opts.horizon,
        rng_seed: scenario_seed,
    };

    let (nets, init) = build_stage_networks(case, &solution, &scenario)?;
    let traj = integrate_swing(&init, &nets, &scenario, opts.dt)?;
    if traj.diverged {
        debug!(
            "scenario {scenario_id}: trajectory diverged at t = {:.3}s",
            traj.times.last().unwrap()
        );
    }
    let state = traj.state_at(traj.clearing_index.min(traj.len() - 1), &init);
    let features = snapshot_features(case, &nets, &state)?;
    let tsi = compute_tsi(&traj, clearing_time);
    Ok((
        SampleRecord {
            features,
            tsi,
            label: label_from_tsi(tsi),
            scenario_id,
            fault_branch,
            fault_position,
            clearing_time,
        },
        redraws,
    ))
}

pub fn generate_dataset(
    case: &GridCase,
    n_scenarios: usize,
    dt: f64,
    seed: u64,
) -> Result<Dataset> {
    let opts = GenerationOptions {
        dt,
        ..GenerationOptions::new(n_scenarios, seed)
    };
    generate_dataset_with(case, &opts).map(|(d, _)| d)
}

/// Runs every scenario (in parallel), keeping scenario order in the output.
pub fn generate_dataset_with(
    case: &GridCase,
    opts: &GenerationOptions,
) -> Result<(Dataset, GenerationReport)> {
    if opts.n_scenarios == 0 {
        return Err(Error::Config("n_scenarios must be at least 1".into()));
    }
    let run = || -> Vec<Result<(SampleRecord, usize)>> {
        (0..opts.n_scenarios as u64)
            .into_par_iter()
            .map(|id| simulate_scenario(case, id, opts))
            .collect()
    };
    let results = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    };

    let digest = case.digest();
    let mut report = GenerationReport {
        requested: opts.n_scenarios,
        case_digest: digest.clone(),
        ..Default::default()
    };
    let mut samples = Vec::with_capacity(results.len());
    for (id, res) in results.into_iter().enumerate() {
        match res {
            Ok((record, redraws)) => {
                report.loading_redraws += redraws;
                samples.push(record);
            }
            Err(e) => {
                warn!("scenario {id} skipped: {e}");
                report.failures.push(ScenarioFailure {
                    scenario_id: id as u64,
                    reason: e.to_string(),
                });
            }
        }
    }
    report.accepted = samples.len();
    report.n_stable = samples.iter().filter(|s| s.label == 1).count();
    report.n_unstable = report.accepted - report.n_stable;
    info!(
        "generated {} of {} scenarios ({} stable, {} unstable, {} loading redraws)",
        report.accepted,
        report.requested,
        report.n_stable,
        report.n_unstable,
        report.loading_redraws
    );
    if report.failures.len() as f64 > MAX_FAILURE_FRACTION * opts.n_scenarios as f64 {
        return Err(Error::GenerationFailed {
            failed: report.failures.len(),
            total: opts.n_scenarios,
        });
    }
    let dataset = Dataset {
        samples,
        feature_names: feature_names(case),
        case_digest: Some(digest),
    };
    Ok((dataset, report))
}
