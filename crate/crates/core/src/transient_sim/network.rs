use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{kron_reduce, FaultScenario, BOLTED_FAULT_CONDUCTANCE};
use crate::grid_case::{
    branch_admittance, build_ybus, GridCase, LoadingScenario, PowerFlowSolution,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    PreFault,
    FaultOn,
    PostFault,
}

/// Admittance matrix over generator internal nodes, in generator order.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    pub y_reduced: DMatrix<Complex64>,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    /// Rotor angles, radians, synchronous reference frame.
    pub delta: Vec<f64>,
    /// Speed deviation, per-unit of synchronous speed.
    pub omega: Vec<f64>,
    pub e_mag: Vec<f64>,
    pub p_mech: Vec<f64>,
}

/// Inertia and damping per generator on the system base.
#[derive(Debug, Clone)]
pub struct MachineParams {
    pub inertia_h: Vec<f64>,
    pub damping_d: Vec<f64>,
}

/// Unreduced network: buses in case order followed by generator internal nodes.
#[derive(Debug, Clone)]
pub struct FullNetwork {
    pub y: DMatrix<Complex64>,
    pub in_service: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct StageNetworks {
    pub pre_fault: ReducedNetwork,
    pub fault_on: ReducedNetwork,
    pub post_fault: ReducedNetwork,
    pub machines: MachineParams,
    /// Post-fault network with loads, used to recover bus voltages.
    pub post_full: FullNetwork,
}

impl StageNetworks {
    pub fn stage(&self, stage: Stage) -> &ReducedNetwork {
        match stage {
            Stage::PreFault => &self.pre_fault,
            Stage::FaultOn => &self.fault_on,
            Stage::PostFault => &self.post_fault,
        }
    }
}

/// Constant-impedance load admittances `conj(S_load)/|V|²` at the solved voltages.
pub fn load_admittances(
    case: &GridCase,
    solution: &PowerFlowSolution,
    loading: &LoadingScenario,
) -> Vec<Complex64> {
    case.buses
        .iter()
        .enumerate()
        .map(|(i, bus)| {
            let f = loading.load_factors[i];
            let v2 = solution.v_mag[i] * solution.v_mag[i];
            Complex64::new(bus.p_load * f, -bus.q_load * f) / v2
        })
        .collect()
}

/// Where and how a line fault is inserted into the full network.
#[derive(Debug, Clone, Copy)]
pub struct FaultPoint {
    pub branch: usize,
    /// Fraction of the line length measured from the from-end.
    pub position: f64,
    pub conductance: f64,
}

/// Full network over buses and internal nodes (plus the fault node when `fault` is set).
///
/// The faulted branch is replaced by two π sections meeting at the fault node.
pub fn full_network(
    case: &GridCase,
    load_adm: &[Complex64],
    in_service: &[bool],
    fault: Option<FaultPoint>,
) -> DMatrix<Complex64> {
    let a = case.n_buses();
    let ng = case.n_generators();
    let size = a + ng + usize::from(fault.is_some());
    let mut mask = in_service.to_vec();
    if let Some(fp) = fault {
        mask[fp.branch] = false;
    }
    let ybus = build_ybus(case, &mask);
    let mut y = DMatrix::from_element(size, size, Complex64::new(0.0, 0.0));
    y.view_mut((0, 0), (a, a)).copy_from(&ybus);
    for (k, adm) in load_adm.iter().enumerate() {
        y[(k, k)] += adm;
    }
    let sys = case.system_mva_base;
    for (g, gen) in case.generators.iter().enumerate() {
        let k = case.bus_index(gen.bus).unwrap();
        let yg = Complex64::new(0.0, gen.xd_prime_system(sys)).inv();
        stamp_series(&mut y, k, a + g, yg);
    }
    if let Some(fp) = fault {
        let br = &case.branches[fp.branch];
        let (f, t) = case.branch_ends(br);
        let node = a + ng;
        for (end, frac) in [(f, fp.position), (t, 1.0 - fp.position)] {
            let (ys, ysh) = branch_admittance(br.r * frac, br.x * frac, br.b_charging * frac);
            stamp_series(&mut y, end, node, ys);
            y[(end, end)] += ysh;
            y[(node, node)] += ysh;
        }
        y[(node, node)] += Complex64::new(fp.conductance, 0.0);
    }
    y
}

fn stamp_series(y: &mut DMatrix<Complex64>, i: usize, j: usize, adm: Complex64) {
    y[(i, i)] += adm;
    y[(j, j)] += adm;
    y[(i, j)] -= adm;
    y[(j, i)] -= adm;
}

fn reduce_to_internal(
    case: &GridCase,
    y: &DMatrix<Complex64>,
    stage: Stage,
) -> Result<ReducedNetwork> {
    let a = case.n_buses();
    let keep: Vec<usize> = (a..a + case.n_generators()).collect();
    Ok(ReducedNetwork {
        y_reduced: kron_reduce(y, &keep)?,
        stage,
    })
}

/// Machine initial conditions from the solved operating point.
///
/// The internal EMF sits behind the transient reactance; mechanical power equals
/// the generator's electrical output so the pre-fault state is an equilibrium.
pub fn initial_machine_state(
    case: &GridCase,
    solution: &PowerFlowSolution,
    loading: &LoadingScenario,
) -> MachineState {
    let sys = case.system_mva_base;
    let v = solution.voltages();
    let ng = case.n_generators();
    let mut state = MachineState {
        delta: Vec::with_capacity(ng),
        omega: vec![0.0; ng],
        e_mag: Vec::with_capacity(ng),
        p_mech: Vec::with_capacity(ng),
    };
    for gen in &case.generators {
        let k = case.bus_index(gen.bus).unwrap();
        let bus = &case.buses[k];
        let f = loading.load_factors[k];
        let s_gen = Complex64::new(
            solution.p_inj[k] + bus.p_load * f,
            solution.q_inj[k] + bus.q_load * f,
        );
        let current = (s_gen / v[k]).conj();
        let emf = v[k] + Complex64::new(0.0, gen.xd_prime_system(sys)) * current;
        state.delta.push(emf.arg());
        state.e_mag.push(emf.norm());
        state.p_mech.push((emf * current.conj()).re);
    }
    state
}

/// Pre-fault, fault-on and post-fault reduced networks plus the initial machine state.
pub fn build_stage_networks(
    case: &GridCase,
    solution: &PowerFlowSolution,
    scenario: &FaultScenario,
) -> Result<(StageNetworks, MachineState)> {
    build_stage_networks_with(case, solution, scenario, BOLTED_FAULT_CONDUCTANCE)
}

/// As [`build_stage_networks`] with an explicit fault shunt conductance.
pub fn build_stage_networks_with(
    case: &GridCase,
    solution: &PowerFlowSolution,
    scenario: &FaultScenario,
    fault_conductance: f64,
) -> Result<(StageNetworks, MachineState)> {
    scenario.validate(case)?;
    if !solution.converged {
        return Err(Error::InvalidScenario("power flow not converged".into()));
    }
    let load_adm = load_admittances(case, solution, &scenario.loading);
    let base_mask = case.status_mask();
    let fault = FaultPoint {
        branch: scenario.fault_branch,
        position: scenario.fault_position,
        conductance: fault_conductance,
    };
    let mut post_mask = base_mask.clone();
    post_mask[scenario.fault_branch] = false;

    let pre_full = full_network(case, &load_adm, &base_mask, None);
    let on_full = full_network(case, &load_adm, &base_mask, Some(fault));
    let post_full = full_network(case, &load_adm, &post_mask, None);

    let sys = case.system_mva_base;
    let nets = StageNetworks {
        pre_fault: reduce_to_internal(case, &pre_full, Stage::PreFault)?,
        fault_on: reduce_to_internal(case, &on_full, Stage::FaultOn)?,
        post_fault: reduce_to_internal(case, &post_full, Stage::PostFault)?,
        machines: MachineParams {
            inertia_h: case.generators.iter().map(|g| g.h_system(sys)).collect(),
            damping_d: case.generators.iter().map(|g| g.d_system(sys)).collect(),
        },
        post_full: FullNetwork {
            y: post_full,
            in_service: post_mask,
        },
    };
    Ok((
        nets,
        initial_machine_state(case, solution, &scenario.loading),
    ))
}

/// `Pe_i = Σ_j E_i E_j (G_ij cos(δ_i − δ_j) + B_ij sin(δ_i − δ_j))`.
pub fn electrical_power(state: &MachineState, net: &ReducedNetwork) -> Vec<f64> {
    electrical_power_raw(&state.delta, &state.e_mag, &net.y_reduced)
}

pub(crate) fn electrical_power_raw(
    delta: &[f64],
    e_mag: &[f64],
    y: &DMatrix<Complex64>,
) -> Vec<f64> {
    let n = delta.len();
    assert_eq!(y.nrows(), n, "network dimension");
    let (sin, cos): (Vec<f64>, Vec<f64>) = delta.iter().map(|d| d.sin_cos()).unzip();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                let yij = y[(i, j)];
                let cos_ij = cos[i] * cos[j] + sin[i] * sin[j];
                let sin_ij = sin[i] * cos[j] - cos[i] * sin[j];
                acc += e_mag[j] * (yij.re * cos_ij + yij.im * sin_ij);
            }
            e_mag[i] * acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_case::{parse_case, sample_loading, solve_power_flow};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scenario_for(case: &GridCase, seed: u64, branch: usize) -> FaultScenario {
        FaultScenario {
            loading: sample_loading(case, seed),
            fault_branch: branch,
            fault_position: 0.5,
            clearing_time: 0.15,
            sim_horizon: 10.0,
            rng_seed: seed,
        }
    }

    #[test]
    fn prefault_equilibrium() {
        let case = GridCase::ne39();
        for (seed, branch) in [(1, 15), (2, 0), (3, 40)] {
            let sc = scenario_for(&case, seed, branch);
            let sol = solve_power_flow(&case, &sc.loading).unwrap();
            let (nets, init) = build_stage_networks(&case, &sol, &sc).unwrap();
            let pe = electrical_power(&init, &nets.pre_fault);
            for (p, pm) in pe.iter().zip(&init.p_mech) {
                assert!((p - pm).abs() < 1e-8, "{p} vs {pm}");
            }
            for net in [&nets.pre_fault, &nets.fault_on, &nets.post_fault] {
                let y = &net.y_reduced;
                assert_eq!(y.nrows(), case.n_generators());
                for i in 0..y.nrows() {
                    for j in 0..y.nrows() {
                        assert!((y[(i, j)] - y[(j, i)]).norm() < 1e-9 * y[(i, j)].norm().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn midpoint_split_gives_equal_halves() {
        let case = GridCase::ne39();
        let adm = vec![Complex64::new(0.0, 0.0); case.n_buses()];
        let fp = FaultPoint {
            branch: 15,
            position: 0.5,
            conductance: 0.0,
        };
        let y = full_network(&case, &adm, &case.all_in_service(), Some(fp));
        let node = case.n_buses() + case.n_generators();
        let (f, t) = case.branch_ends(&case.branches[15]);
        assert_eq!(y[(f, node)], y[(t, node)]);
        let br = &case.branches[15];
        let half = Complex64::new(br.r / 2.0, br.x / 2.0).inv();
        assert!((y[(f, node)] + half).norm() < 1e-9);
    }

    /// SMIB: generator (x'd) on bus 1, two parallel lines to bus 2, infinite source (x_s) on bus 2.
    pub(crate) const SMIB: &str = "[SYSTEM]\nmva_base=100\n\
        [BUS]\n1 PV 0 0 0 0 1.0\n2 SLACK 0 0 0 0 1.0\n\
        [BRANCH]\n1 2 0 0.5 0 1\n1 2 0 0.5 0 1\n\
        [GEN]\n1 0.9 1.0 5 0 0.3 100\n2 0 1.0 100000 0 0.0001 100\n";

    /// Chain two-port ABCD matrices; the B element is the transfer impedance.
    fn abcd_transfer(x_gen: f64, x_line: f64, x_inf: f64, alpha: f64) -> Complex64 {
        type M = [[Complex64; 2]; 2];
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let series = |z: Complex64| -> M { [[one, z], [zero, one]] };
        let shunt = |y: Complex64| -> M { [[one, zero], [y, one]] };
        let mul = |a: M, b: M| -> M {
            let mut r = [[zero; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
                }
            }
            r
        };
        let j = Complex64::new(0.0, 1.0);
        // With the fault node grounded, each section becomes a shunt at its end bus.
        let chain = [
            series(j * x_gen),
            shunt((j * alpha * x_line).inv()),
            series(j * x_line),
            shunt((j * (1.0 - alpha) * x_line).inv()),
            series(j * x_inf),
        ];
        let m = chain.into_iter().reduce(mul).unwrap();
        m[0][1]
    }

    #[test]
    fn smib_fault_on_transfer_admittance() {
        let case = parse_case(SMIB).unwrap();
        let alpha = 0.3;
        let mut sc = scenario_for(&case, 0, 0);
        sc.loading = LoadingScenario::base(&case);
        sc.fault_position = alpha;
        let sol = solve_power_flow(&case, &sc.loading).unwrap();
        let (nets, _) = build_stage_networks(&case, &sol, &sc).unwrap();
        let expected = -abcd_transfer(0.3, 0.5, 0.0001, alpha).inv();
        let got = nets.fault_on.y_reduced[(0, 1)];
        assert!(
            (got - expected).norm() / expected.norm() < 1e-4,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn electrical_power_special_cases() {
        let mut y = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        y[(0, 0)] = Complex64::new(0.0, -3.0);
        y[(1, 1)] = Complex64::new(0.0, -3.0);
        y[(0, 1)] = Complex64::new(0.0, 2.0);
        y[(1, 0)] = Complex64::new(0.0, 2.0);
        let pe = electrical_power_raw(&[0.4, 0.4], &[1.1, 0.9], &y);
        assert!(pe.iter().all(|p| p.abs() < 1e-15));

        let pe = electrical_power_raw(&[std::f64::consts::FRAC_PI_2, 0.0], &[1.1, 0.9], &y);
        assert!((pe[0] - 1.1 * 0.9 * 2.0).abs() < 1e-12);
        assert!((pe[1] + pe[0]).abs() < 1e-12);
    }

    /// Σ Pe equals the real power absorbed by the network, Re(Eᴴ Y E).
    #[test]
    fn total_power_matches_complex_injection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        for _ in 0..20 {
            let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
            for i in 0..n {
                for j in i..n {
                    let v =
                        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-5.0..5.0));
                    y[(i, j)] = v;
                    y[(j, i)] = v;
                }
            }
            let delta: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.8..1.2)).collect();
            let ev = DVector::from_iterator(
                n,
                delta
                    .iter()
                    .zip(&e)
                    .map(|(&d, &m)| Complex64::from_polar(m, d)),
            );
            let current = &y * &ev;
            let absorbed: f64 = ev
                .iter()
                .zip(current.iter())
                .map(|(v, i)| (v * i.conj()).re)
                .sum();
            let pe: f64 = electrical_power_raw(&delta, &e, &y).iter().sum();
            assert!((pe - absorbed).abs() < 1e-10);
        }
    }
}
