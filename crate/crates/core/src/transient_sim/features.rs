use nalgebra::DVector;
use num_complex::Complex64;

use super::{FullNetwork, MachineState, StageNetworks, Trajectory};
use crate::grid_case::{branch_flows, GridCase};
use crate::{Error, Result};

/// Which physical quantity a feature column carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Voltage magnitude at a bus (case-order position).
    VoltageMagnitude(usize),
    /// Voltage phase angle at a bus (case-order position).
    VoltageAngle(usize),
    ActivePower(usize),
    ReactivePower(usize),
}

/// Length of the `[V | θ | P | Q]` feature vector.
pub fn feature_count(case: &GridCase) -> usize {
    2 * case.n_buses() + 2 * case.n_branches()
}

pub fn feature_kind(case: &GridCase, index: usize) -> Option<FeatureKind> {
    let (a, b) = (case.n_buses(), case.n_branches());
    match index {
        i if i < a => Some(FeatureKind::VoltageMagnitude(i)),
        i if i < 2 * a => Some(FeatureKind::VoltageAngle(i - a)),
        i if i < 2 * a + b => Some(FeatureKind::ActivePower(i - 2 * a)),
        i if i < 2 * a + 2 * b => Some(FeatureKind::ReactivePower(i - 2 * a - b)),
        _ => None,
    }
}

pub fn feature_index(case: &GridCase, kind: FeatureKind) -> usize {
    let (a, b) = (case.n_buses(), case.n_branches());
    match kind {
        FeatureKind::VoltageMagnitude(k) => k,
        FeatureKind::VoltageAngle(k) => a + k,
        FeatureKind::ActivePower(j) => 2 * a + j,
        FeatureKind::ReactivePower(j) => 2 * a + b + j,
    }
}

/// CSV column names: `V_<bus>`, `TH_<bus>`, `P_<branch>`, `Q_<branch>` (1-based branch number).
pub fn feature_names(case: &GridCase) -> Vec<String> {
    let mut names = Vec::with_capacity(feature_count(case));
    names.extend(case.buses.iter().map(|b| format!("V_{}", b.id)));
    names.extend(case.buses.iter().map(|b| format!("TH_{}", b.id)));
    names.extend((1..=case.n_branches()).map(|j| format!("P_{j}")));
    names.extend((1..=case.n_branches()).map(|j| format!("Q_{j}")));
    names
}

/// Readable label such as `Voltage phase angle of bus 8` or `Active power of line 8-9`.
pub fn describe_feature(case: &GridCase, index: usize) -> String {
    let line = |j: usize| {
        let br = &case.branches[j];
        format!("{}-{}", br.from_bus, br.to_bus)
    };
    match feature_kind(case, index) {
        Some(FeatureKind::VoltageMagnitude(k)) => {
            format!("Voltage magnitude of bus {}", case.buses[k].id)
        }
        Some(FeatureKind::VoltageAngle(k)) => {
            format!("Voltage phase angle of bus {}", case.buses[k].id)
        }
        Some(FeatureKind::ActivePower(j)) => format!("Active power of line {}", line(j)),
        Some(FeatureKind::ReactivePower(j)) => format!("Reactive power of line {}", line(j)),
        None => format!("feature {index}"),
    }
}

/// Bus voltages of a full network driven by the generator internal EMFs.
pub fn solve_bus_voltages(
    case: &GridCase,
    full: &FullNetwork,
    state: &MachineState,
) -> Result<Vec<Complex64>> {
    let a = case.n_buses();
    let ng = case.n_generators();
    let y_bb = full.y.view((0, 0), (a, a)).into_owned();
    let y_bg = full.y.view((0, a), (a, ng)).into_owned();
    let emf = DVector::from_iterator(
        ng,
        state
            .delta
            .iter()
            .zip(&state.e_mag)
            .map(|(&d, &m)| Complex64::from_polar(m, d)),
    );
    let rhs = -(y_bg * emf);
    let v = y_bb
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("post-fault network solve"))?;
    if v.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::Singular("post-fault network solve"));
    }
    Ok(v.iter().copied().collect())
}

/// Angle folded into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a - TAU * ((a + PI) / TAU).floor();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// `[V | θ | P | Q]` of an arbitrary full network; angles are relative to the slack bus. at the given machine state.
pub fn features_from_network(
    case: &GridCase,
    full: &FullNetwork,
    state: &MachineState,
) -> Result<Vec<f64>> {
    let v = solve_bus_voltages(case, full, state)?;
    let flows = branch_flows(case, &v, &full.in_service);
    let mut out = Vec::with_capacity(feature_count(case));
    out.extend(v.iter().map(|x| x.norm()));
    let reference = v[case.slack_index()].arg();
    out.extend(v.iter().map(|x| wrap_angle(x.arg() - reference)));
    out.extend(flows.iter().map(|f| f.0));
    out.extend(flows.iter().map(|f| f.1));
    Ok(out)
}

/// Features observed right after clearing: the post-fault network (faulted line
/// removed, its P and Q reported as zero) solved at the clearing-instant state.
pub fn snapshot_features(
    case: &GridCase,
    nets: &StageNetworks,
    state: &MachineState,
) -> Result<Vec<f64>> {
    features_from_network(case, &nets.post_full, state)
}

/// `(360 − δmax)/(360 + δmax)` with `δmax` in degrees.
pub fn tsi_from_delta_max(delta_max_deg: f64) -> f64 {
    let d = delta_max_deg.max(0.0);
    ((360.0 - d) / (360.0 + d)).max(-1.0)
}

/// Largest pairwise rotor-angle spread, degrees, over samples at or after `t_clear`.
pub fn max_angle_spread(traj: &Trajectory, clearing_time: f64) -> f64 {
    traj.times
        .iter()
        .zip(&traj.delta)
        .filter(|(t, _)| **t >= clearing_time - 1e-12)
        .map(|(_, d)| {
            let (lo, hi) = d
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                });
            (hi - lo).to_degrees()
        })
        .fold(0.0, f64::max)
}

/// Stability index of a trajectory. A diverged run is never reported as stable.
pub fn compute_tsi(traj: &Trajectory, clearing_time: f64) -> f64 {
    let tsi = tsi_from_delta_max(max_angle_spread(traj, clearing_time));
    if traj.diverged {
        tsi.min(0.0)
    } else {
        tsi
    }
}

/// Stable (1) iff the index is strictly positive.
pub fn label_from_tsi(tsi: f64) -> u8 {
    u8::from(tsi > 0.0)
}
