use nalgebra::DMatrix;
use num_complex::Complex64;

use super::network::electrical_power_raw;
use super::{FaultScenario, MachineState, Stage, StageNetworks, SYNCHRONOUS_SPEED};
use crate::{Error, Result};

/// Rotor angles and speeds at successive integration instants.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub delta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    /// Index of the sample taken at the clearing instant.
    pub clearing_index: usize,
    /// A non-finite state was produced; the trajectory stops before it.
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Machine state at sample `k`, with the constant EMFs and mechanical powers of `init`.
    pub fn state_at(&self, k: usize, init: &MachineState) -> MachineState {
        MachineState {
            delta: self.delta[k].clone(),
            omega: self.omega[k].clone(),
            e_mag: init.e_mag.clone(),
            p_mech: init.p_mech.clone(),
        }
    }
}

struct SwingModel<'a> {
    y: &'a DMatrix<Complex64>,
    e_mag: &'a [f64],
    p_mech: &'a [f64],
    two_h: Vec<f64>,
    damping: &'a [f64],
}

impl SwingModel<'_> {
    /// dδ/dt = ω_s ω,  2H dω/dt = Pm − Pe − D ω.
    fn derivative(&self, delta: &[f64], omega: &[f64], d_delta: &mut [f64], d_omega: &mut [f64]) {
        let pe = electrical_power_raw(delta, self.e_mag, self.y);
        for i in 0..delta.len() {
            d_delta[i] = SYNCHRONOUS_SPEED * omega[i];
            d_omega[i] = (self.p_mech[i] - pe[i] - self.damping[i] * omega[i]) / self.two_h[i];
        }
    }

    fn rk4_step(&self, delta: &mut [f64], omega: &mut [f64], h: f64) {
        let n = delta.len();
        let mut kd = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut kw = kd.clone();
        let (mut td, mut tw) = (vec![0.0; n], vec![0.0; n]);
        self.derivative(delta, omega, &mut kd[0], &mut kw[0]);
        for stage in 1..4 {
            let c = if stage == 3 { h } else { 0.5 * h };
            for i in 0..n {
                td[i] = delta[i] + c * kd[stage - 1][i];
                tw[i] = omega[i] + c * kw[stage - 1][i];
            }
            self.derivative(&td, &tw, &mut kd[stage], &mut kw[stage]);
        }
        for i in 0..n {
            delta[i] += h / 6.0 * (kd[0][i] + 2.0 * kd[1][i] + 2.0 * kd[2][i] + kd[3][i]);
            omega[i] += h / 6.0 * (kw[0][i] + 2.0 * kw[1][i] + 2.0 * kw[2][i] + kw[3][i]);
        }
    }
}

/// Fixed-step RK4 through the fault-on interval `[0, t_clear]` and the
/// post-fault interval `[t_clear, horizon]`.
///
/// Each interval ends with a shortened step so the network switch happens
/// exactly at the clearing time.
pub fn integrate_swing(
    init: &MachineState,
    nets: &StageNetworks,
    scenario: &FaultScenario,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidScenario(format!(
            "integration step must be positive, got {dt}"
        )));
    }
    let segments = [
        (Stage::FaultOn, 0.0, scenario.clearing_time),
        (
            Stage::PostFault,
            scenario.clearing_time,
            scenario.sim_horizon,
        ),
    ];
    Ok(integrate_segments(init, nets, &segments, dt))
}

/// Integrates through consecutive `(stage, t_start, t_end)` segments.
pub fn integrate_segments(
    init: &MachineState,
    nets: &StageNetworks,
    segments: &[(Stage, f64, f64)],
    dt: f64,
) -> Trajectory {
    let mut delta = init.delta.clone();
    let mut omega = init.omega.clone();
    let mut traj = Trajectory {
        times: vec![0.0],
        delta: vec![delta.clone()],
        omega: vec![omega.clone()],
        clearing_index: 0,
        diverged: false,
    };
    let two_h: Vec<f64> = nets.machines.inertia_h.iter().map(|h| 2.0 * h).collect();

    for (seg, &(stage, t0, t1)) in segments.iter().enumerate() {
        let model = SwingModel {
            y: &nets.stage(stage).y_reduced,
            e_mag: &init.e_mag,
            p_mech: &init.p_mech,
            two_h: two_h.clone(),
            damping: &nets.machines.damping_d,
        };
        let span = t1 - t0;
        let full_steps = ((span / dt) + 1e-9).floor() as usize;
        let remainder = span - full_steps as f64 * dt;
        let mut steps: Vec<f64> = vec![dt; full_steps];
        if remainder > 1e-12 {
            steps.push(remainder);
        }
        let mut t = t0;
        for (s, h) in steps.iter().enumerate() {
            model.rk4_step(&mut delta, &mut omega, *h);
            t = if s + 1 == steps.len() { t1 } else { t + h };
            if delta.iter().chain(&omega).any(|v| !v.is_finite()) {
                traj.diverged = true;
                return traj;
            }
            traj.times.push(t);
            traj.delta.push(delta.clone());
            traj.omega.push(omega.clone());
        }
        if seg == 0 {
            traj.clearing_index = traj.times.len() - 1;
        }
    }
    traj
}
