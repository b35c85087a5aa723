use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{build_ybus, BusKind, GridCase, LoadingScenario};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the largest |ΔP| or |ΔQ|, per-unit.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: 1e-6,
            max_iterations: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    /// Radians, slack bus at zero.
    pub v_ang: Vec<f64>,
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.v_mag
            .iter()
            .zip(&self.v_ang)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    pub fn within_voltage_band(&self, lo: f64, hi: f64) -> bool {
        self.v_mag.iter().all(|&v| (lo..=hi).contains(&v))
    }
}

/// Scheduled net injections `(P, Q)` per bus under a loading scenario.
pub(crate) fn scheduled_injections(
    case: &GridCase,
    scenario: &LoadingScenario,
) -> (Vec<f64>, Vec<f64>) {
    let mut p: Vec<f64> = case
        .buses
        .iter()
        .zip(&scenario.load_factors)
        .map(|(b, lf)| -b.p_load * lf)
        .collect();
    let q: Vec<f64> = case
        .buses
        .iter()
        .zip(&scenario.load_factors)
        .map(|(b, lf)| -b.q_load * lf)
        .collect();
    for gen in &case.generators {
        p[case.bus_index(gen.bus).unwrap()] += gen.p_gen * scenario.gen_scale;
    }
    (p, q)
}

fn injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let current: Complex64 = (0..n).map(|k| y[(i, k)] * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

/// Per-bus `(ΔP, ΔQ)` = computed minus scheduled injection at the given voltages.
///
/// The slack row and PV-bus reactive rows are reported but carry no schedule.
pub fn power_mismatch(
    case: &GridCase,
    scenario: &LoadingScenario,
    v_mag: &[f64],
    v_ang: &[f64],
) -> Vec<(f64, f64)> {
    let y = build_ybus(case, &case.status_mask());
    let v: Vec<Complex64> = v_mag
        .iter()
        .zip(v_ang)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    let (p_sched, q_sched) = scheduled_injections(case, scenario);
    injections(&y, &v)
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s.re - p_sched[i], s.im - q_sched[i]))
        .collect()
}

pub fn solve_power_flow(case: &GridCase, scenario: &LoadingScenario) -> Result<PowerFlowSolution> {
    solve_power_flow_with(case, scenario, &PowerFlowOptions::default())
}

/// Newton-Raphson on the polar mismatch equations from a flat start at the setpoints.
pub fn solve_power_flow_with(
    case: &GridCase,
    scenario: &LoadingScenario,
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution> {
    if scenario.load_factors.len() != case.n_buses() {
        return Err(Error::InvalidScenario(format!(
            "{} load factors for {} buses",
            scenario.load_factors.len(),
            case.n_buses()
        )));
    }
    let n = case.n_buses();
    let y = build_ybus(case, &case.status_mask());
    let (p_sched, q_sched) = scheduled_injections(case, scenario);

    let non_slack: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind != BusKind::Slack)
        .collect();
    let pq: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind == BusKind::PQ)
        .collect();
    let (n_ang, n_unknown) = (non_slack.len(), non_slack.len() + pq.len());

    let mut vm: Vec<f64> = case
        .buses
        .iter()
        .map(|b| {
            if b.v_setpoint > 0.0 {
                b.v_setpoint
            } else {
                1.0
            }
        })
        .collect();
    let mut va = vec![0.0; n];

    for iter in 0..=opts.max_iterations {
        let v: Vec<Complex64> = vm
            .iter()
            .zip(&va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect();
        let s = injections(&y, &v);
        let mut mismatch = DVector::zeros(n_unknown);
        for (row, &i) in non_slack.iter().enumerate() {
            mismatch[row] = s[i].re - p_sched[i];
        }
        for (row, &i) in pq.iter().enumerate() {
            mismatch[n_ang + row] = s[i].im - q_sched[i];
        }
        let max_mismatch = mismatch.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if !max_mismatch.is_finite() {
            return Err(Error::PowerFlowDiverged {
                iterations: iter,
                max_mismatch,
            });
        }
        if max_mismatch < opts.tolerance {
            return Ok(PowerFlowSolution {
                v_mag: vm,
                v_ang: va,
                p_inj: s.iter().map(|x| x.re).collect(),
                q_inj: s.iter().map(|x| x.im).collect(),
                converged: true,
                iterations: iter,
                max_mismatch,
            });
        }
        if iter == opts.max_iterations {
            return Err(Error::PowerFlowDiverged {
                iterations: iter,
                max_mismatch,
            });
        }

        let current: Vec<Complex64> = (0..n)
            .map(|i| (0..n).map(|k| y[(i, k)] * v[k]).sum())
            .collect();
        let unit: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
        let j = Complex64::new(0.0, 1.0);
        // dS_i/dθ_k and dS_i/d|V_k|
        let ds_dang = |i: usize, k: usize| {
            let diag = if i == k {
                current[i]
            } else {
                Complex64::new(0.0, 0.0)
            };
            j * v[i] * (diag - y[(i, k)] * v[k]).conj()
        };
        let ds_dmag = |i: usize, k: usize| {
            let mut d = v[i] * (y[(i, k)] * unit[k]).conj();
            if i == k {
                d += current[i].conj() * unit[i];
            }
            d
        };
        let mut jac = DMatrix::zeros(n_unknown, n_unknown);
        for (r, &i) in non_slack.iter().enumerate() {
            for (c, &k) in non_slack.iter().enumerate() {
                jac[(r, c)] = ds_dang(i, k).re;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(r, n_ang + c)] = ds_dmag(i, k).re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in non_slack.iter().enumerate() {
                jac[(n_ang + r, c)] = ds_dang(i, k).im;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(n_ang + r, n_ang + c)] = ds_dmag(i, k).im;
            }
        }
        let step = jac
            .lu()
            .solve(&(-mismatch))
            .ok_or(Error::Singular("power-flow Jacobian"))?;
        for (r, &i) in non_slack.iter().enumerate() {
            va[i] += step[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] += step[n_ang + r];
        }
    }
    unreachable!("loop returns on the final iteration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_case::{branch_flows, parse_case, LoadingScenario};

    fn unit_scenario(case: &GridCase) -> LoadingScenario {
        LoadingScenario {
            load_factors: vec![1.0; case.n_buses()],
            gen_scale: 1.0,
        }
    }

    #[test]
    fn flat_network_is_already_solved() {
        let text =
            "[SYSTEM]\nmva_base=100\n[BUS]\n1 SLACK 0 0 0 0 1\n2 PV 0 0 0 0 1\n3 PQ 0 0 0 0 1\n\
                    [BRANCH]\n1 2 0.01 0.1 0 1\n2 3 0.01 0.1 0 1\n\
                    [GEN]\n1 0 1 5 0 0.2 100\n2 0 1 5 0 0.2 100\n";
        let case = parse_case(text).unwrap();
        let sol = solve_power_flow(&case, &unit_scenario(&case)).unwrap();
        assert!(sol.iterations <= 1);
        for i in 0..3 {
            assert!((sol.v_mag[i] - 1.0).abs() < 1e-9);
            assert!(sol.v_ang[i].abs() < 1e-9);
        }
    }

    /// Closed form for a lossless two-bus system: slack |V1| = 1, load P at bus 2, line x.
    /// With V2 = v∠θ: P = v sinθ / x (into bus 2 is −P), 0 = (v² − v cosθ)/x for Q = 0.
    /// So cosθ = v and v² sin²θ = (P x)², i.e. v²(1 − v²) = (P x)², v² = (1 + sqrt(1 − 4(Px)²))/2.
    #[test]
    fn two_bus_closed_form() {
        let text = "[SYSTEM]\nmva_base=100\n[BUS]\n1 SLACK 0 0 0 0 1\n2 PQ 0.5 0 0 0 1\n\
                    [BRANCH]\n1 2 0 0.1 0 1\n[GEN]\n1 0 1 5 0 0.2 100\n";
        let case = parse_case(text).unwrap();
        let sol = solve_power_flow(&case, &unit_scenario(&case)).unwrap();
        let px: f64 = 0.5 * 0.1;
        let v = ((1.0 + (1.0 - 4.0 * px * px).sqrt()) / 2.0).sqrt();
        let theta = -(v.acos());
        assert!((sol.v_mag[1] - v).abs() < 1e-7, "{} vs {v}", sol.v_mag[1]);
        assert!(
            (sol.v_ang[1] - theta).abs() < 1e-7,
            "{} vs {theta}",
            sol.v_ang[1]
        );

        let flows = branch_flows(&case, &sol.voltages(), &[true]);
        assert!((flows[0].0 - 0.5).abs() < 1e-6, "from-end P {}", flows[0].0);
    }

    #[test]
    fn ne39_base_case() {
        let case = GridCase::ne39();
        let scenario = unit_scenario(&case);
        let sol = solve_power_flow(&case, &scenario).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 10, "{} iterations", sol.iterations);
        assert!(sol.max_mismatch < 1e-6);
        assert_eq!(sol.v_ang[case.slack_index()], 0.0);

        // Residuals at the solution.
        let mism = power_mismatch(&case, &scenario, &sol.v_mag, &sol.v_ang);
        for (i, bus) in case.buses.iter().enumerate() {
            match bus.kind {
                BusKind::Slack => {}
                BusKind::PV => assert!(mism[i].0.abs() < 1e-6),
                BusKind::PQ => assert!(mism[i].0.abs() < 1e-6 && mism[i].1.abs() < 1e-6),
            }
        }

        // Injection total equals series plus shunt losses.
        let mask = case.all_in_service();
        let v = sol.voltages();
        let flows = branch_flows(&case, &v, &mask);
        let reversed = crate::grid_case::GridCase::new(
            case.system_mva_base,
            case.buses.clone(),
            case.branches
                .iter()
                .map(|b| crate::grid_case::Branch {
                    from_bus: b.to_bus,
                    to_bus: b.from_bus,
                    ..b.clone()
                })
                .collect(),
            case.generators.clone(),
        )
        .unwrap();
        let back = branch_flows(&reversed, &v, &mask);
        let branch_losses: f64 = flows.iter().zip(&back).map(|(f, t)| f.0 + t.0).sum();
        let shunt_losses: f64 = case
            .buses
            .iter()
            .zip(&sol.v_mag)
            .map(|(b, vm)| b.g_shunt * vm * vm)
            .sum();
        let total: f64 = sol.p_inj.iter().sum();
        assert!((total - branch_losses - shunt_losses).abs() < 1e-8);
    }

    #[test]
    fn unconverged_reports_mismatch() {
        let case = GridCase::ne39();
        let mut scenario = unit_scenario(&case);
        scenario.load_factors.iter_mut().for_each(|f| *f = 8.0);
        scenario.gen_scale = 8.0;
        match solve_power_flow(&case, &scenario) {
            Err(Error::PowerFlowDiverged { max_mismatch, .. }) => {
                assert!(max_mismatch > 1e-6 || max_mismatch.is_nan())
            }
            Err(Error::Singular(_)) => {}
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
