//! Classical-model transient simulation of line faults and dataset generation.
//!
//! Loads become constant admittances at the pre-fault voltages, generators are
//! EMFs behind transient reactance, and the network is Kron-reduced to the
//! generator internal nodes for each stage of the disturbance.

mod dataset;
mod features;
mod kron;
mod network;
mod swing;

pub use dataset::{
    generate_dataset, generate_dataset_with, simulate_scenario, Dataset, GenerationOptions,
    GenerationReport, SampleRecord, ScenarioFailure, MAX_FAILURE_FRACTION, MAX_LOADING_REDRAWS,
};
pub use features::{
    compute_tsi, describe_feature, feature_count, feature_index, feature_kind, feature_names,
    features_from_network, label_from_tsi, max_angle_spread, snapshot_features, solve_bus_voltages,
    tsi_from_delta_max, wrap_angle, FeatureKind,
};
pub use kron::kron_reduce;
pub use network::{
    build_stage_networks, build_stage_networks_with, electrical_power, full_network,
    initial_machine_state, load_admittances, FaultPoint, FullNetwork, MachineParams, MachineState,
    ReducedNetwork, Stage, StageNetworks,
};
pub use swing::{integrate_segments, integrate_swing, Trajectory};

use crate::grid_case::{GridCase, LoadingScenario};
use crate::{Error, Result};

pub const NOMINAL_FREQUENCY_HZ: f64 = 60.0;
/// Synchronous speed ω_s in electrical rad/s.
pub const SYNCHRONOUS_SPEED: f64 = 2.0 * std::f64::consts::PI * NOMINAL_FREQUENCY_HZ;
/// Shunt conductance, per-unit, used to model a bolted three-phase fault.
pub const BOLTED_FAULT_CONDUCTANCE: f64 = 1e6;
pub const DEFAULT_DT: f64 = 0.005;
pub const DEFAULT_HORIZON: f64 = 10.0;
pub const FAULT_POSITION_RANGE: (f64, f64) = (0.1, 0.9);
pub const CLEARING_TIME_RANGE: (f64, f64) = (0.1, 0.3);

#[derive(Debug, Clone, PartialEq)]
pub struct FaultScenario {
    pub loading: LoadingScenario,
    pub fault_branch: usize,
    /// Fraction of line length from the from-end.
    pub fault_position: f64,
    /// Seconds after fault inception.
    pub clearing_time: f64,
    pub sim_horizon: f64,
    pub rng_seed: u64,
}

impl FaultScenario {
    pub fn validate(&self, case: &GridCase) -> Result<()> {
        if self.fault_branch >= case.n_branches() {
            return Err(Error::InvalidScenario(format!(
                "fault branch {} out of range",
                self.fault_branch
            )));
        }
        if !(0.0 < self.fault_position && self.fault_position < 1.0) {
            return Err(Error::InvalidScenario(format!(
                "fault position {} must lie strictly inside the line",
                self.fault_position
            )));
        }
        if !(self.clearing_time > 0.0) || self.sim_horizon < self.clearing_time {
            return Err(Error::InvalidScenario(format!(
                "clearing time {} with horizon {}",
                self.clearing_time, self.sim_horizon
            )));
        }
        if self.loading.load_factors.len() != case.n_buses() {
            return Err(Error::InvalidScenario(
                "load factor count does not match bus count".into(),
            ));
        }
        Ok(())
    }
}
