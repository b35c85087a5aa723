//! Static network description of the test system: case parsing, admittance
//! matrices, Newton-Raphson power flow and randomized loading scenarios.

mod parse;
mod powerflow;
mod scenario;
mod ybus;

use std::collections::HashMap;

pub use parse::parse_case;
pub use powerflow::{
    power_mismatch, solve_power_flow, solve_power_flow_with, PowerFlowOptions, PowerFlowSolution,
};
pub use scenario::{
    sample_loading, sample_loading_with, LoadVariation, LoadingScenario, LOAD_FACTOR_MAX,
    LOAD_FACTOR_MIN, LOSS_ALLOWANCE,
};
pub use ybus::{branch_admittance, branch_flows, build_ybus};

/// Bundled New England 39-bus case in the case-file format.
pub const NE39_CASE: &str = include_str!("../../data/ne39.case");

/// Lower bound of the accepted bus-voltage band for generated operating points.
pub const VOLTAGE_SCREEN_MIN: f64 = 0.95;
/// Upper bound of the accepted bus-voltage band for generated operating points.
pub const VOLTAGE_SCREEN_MAX: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub v_setpoint: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchStatus {
    InService,
    Out,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub index: usize,
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    pub status: BranchStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: u32,
    pub p_gen: f64,
    pub v_setpoint: f64,
    /// Inertia constant in seconds on the machine base.
    pub inertia_h: f64,
    /// Damping in per-unit power per per-unit speed, machine base.
    pub damping_d: f64,
    /// Transient reactance, per-unit on the machine base.
    pub xd_prime: f64,
    pub mva_base: f64,
}

impl Generator {
    fn to_system(&self, system_mva: f64) -> f64 {
        self.mva_base / system_mva
    }

    /// Inertia constant converted to the system MVA base.
    pub fn h_system(&self, system_mva: f64) -> f64 {
        self.inertia_h * self.to_system(system_mva)
    }

    pub fn d_system(&self, system_mva: f64) -> f64 {
        self.damping_d * self.to_system(system_mva)
    }

    /// Transient reactance converted to the system MVA base.
    pub fn xd_prime_system(&self, system_mva: f64) -> f64 {
        self.xd_prime / self.to_system(system_mva)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    pub system_mva_base: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    bus_lookup: HashMap<u32, usize>,
}

impl GridCase {
    /// Assembles and validates a case. Bus, branch and generator order is kept.
    pub fn new(
        system_mva_base: f64,
        buses: Vec<Bus>,
        mut branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> crate::Result<Self> {
        use crate::Error::CaseValidation as invalid;

        if !(system_mva_base > 0.0) {
            return Err(invalid(format!(
                "mva_base must be positive, got {system_mva_base}"
            )));
        }
        let mut bus_lookup = HashMap::with_capacity(buses.len());
        for (pos, bus) in buses.iter().enumerate() {
            if bus.id == 0 {
                return Err(invalid("bus ids are 1-based; found bus 0".into()));
            }
            if bus_lookup.insert(bus.id, pos).is_some() {
                return Err(invalid(format!("duplicate bus id {}", bus.id)));
            }
            if bus.kind != BusKind::PQ && !(bus.v_setpoint > 0.0) {
                return Err(invalid(format!(
                    "bus {} has non-positive voltage setpoint",
                    bus.id
                )));
            }
        }
        match buses.iter().filter(|b| b.kind == BusKind::Slack).count() {
            0 => return Err(invalid("case has no slack bus".into())),
            1 => {}
            n => {
                return Err(invalid(format!(
                    "case has {n} slack buses, expected exactly one"
                )))
            }
        }
        for (pos, br) in branches.iter_mut().enumerate() {
            br.index = pos;
            if br.from_bus == br.to_bus {
                return Err(invalid(format!(
                    "branch {pos} connects bus {} to itself",
                    br.from_bus
                )));
            }
            for end in [br.from_bus, br.to_bus] {
                if !bus_lookup.contains_key(&end) {
                    return Err(invalid(format!(
                        "branch {pos} references unknown bus {end}"
                    )));
                }
            }
            if br.x == 0.0 {
                return Err(invalid(format!("branch {pos} has zero reactance")));
            }
        }
        let mut gen_buses = std::collections::HashSet::new();
        for gen in &generators {
            let Some(&pos) = bus_lookup.get(&gen.bus) else {
                return Err(invalid(format!(
                    "generator references unknown bus {}",
                    gen.bus
                )));
            };
            if !gen_buses.insert(gen.bus) {
                return Err(invalid(format!(
                    "more than one generator at bus {}",
                    gen.bus
                )));
            }
            if buses[pos].kind == BusKind::PQ {
                return Err(invalid(format!("generator at PQ bus {}", gen.bus)));
            }
            if !(gen.inertia_h > 0.0) || !(gen.xd_prime > 0.0) || !(gen.mva_base > 0.0) {
                return Err(invalid(format!(
                    "generator at bus {} needs positive h, xd_prime and mva_base",
                    gen.bus
                )));
            }
        }
        for bus in &buses {
            if bus.kind != BusKind::PQ && !gen_buses.contains(&bus.id) {
                return Err(invalid(format!(
                    "{:?} bus {} has no generator",
                    bus.kind, bus.id
                )));
            }
        }

        let case = GridCase {
            system_mva_base,
            buses,
            branches,
            generators,
            bus_lookup,
        };
        if !case.is_connected(&case.all_in_service()) {
            return Err(invalid(
                "network is not connected with all branches in service".into(),
            ));
        }
        Ok(case)
    }

    /// Number of buses (`a` in the feature layout).
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Number of branches (`b` in the feature layout).
    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Position of a bus id in case order.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.bus_lookup.get(&id).copied()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    /// Case-order positions of the two branch endpoints.
    pub fn branch_ends(&self, branch: &Branch) -> (usize, usize) {
        (
            self.bus_lookup[&branch.from_bus],
            self.bus_lookup[&branch.to_bus],
        )
    }

    /// Status mask taken from the case file.
    pub fn status_mask(&self) -> Vec<bool> {
        self.branches
            .iter()
            .map(|b| b.status == BranchStatus::InService)
            .collect()
    }

    pub fn all_in_service(&self) -> Vec<bool> {
        vec![true; self.branches.len()]
    }

    pub fn is_connected(&self, in_service: &[bool]) -> bool {
        let n = self.buses.len();
        if n == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for (br, &on) in self.branches.iter().zip(in_service) {
            if on {
                let (f, t) = self.branch_ends(br);
                adj[f].push(t);
                adj[t].push(f);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for &m in &adj[k] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Branch indices incident to the given bus id, in case order.
    pub fn incident_branches(&self, id: u32) -> Vec<usize> {
        self.branches
            .iter()
            .filter(|b| b.from_bus == id || b.to_bus == id)
            .map(|b| b.index)
            .collect()
    }

    /// Generator owning each bus position, if any.
    pub fn generator_at(&self) -> Vec<Option<usize>> {
        let mut at = vec![None; self.buses.len()];
        for (g, gen) in self.generators.iter().enumerate() {
            at[self.bus_lookup[&gen.bus]] = Some(g);
        }
        at
    }

    /// CRC-32 of the canonical text rendering, as 8 hex digits.
    pub fn digest(&self) -> String {
        format!(
            "{:08x}",
            crc32fast::hash(parse::render_case(self).as_bytes())
        )
    }

    /// Canonical case-file text for this case.
    pub fn to_case_text(&self) -> String {
        parse::render_case(self)
    }

    /// The bundled 39-bus system.
    pub fn ne39() -> Self {
        parse_case(NE39_CASE).expect("bundled case is valid")
    }
}
