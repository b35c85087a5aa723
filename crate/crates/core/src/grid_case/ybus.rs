use nalgebra::DMatrix;
use num_complex::Complex64;

use super::GridCase;

/// Series admittance `1/(r + jx)` and half line charging `j b/2` of a π section.
pub fn branch_admittance(r: f64, x: f64, b_charging: f64) -> (Complex64, Complex64) {
    (
        Complex64::new(r, x).inv(),
        Complex64::new(0.0, 0.5 * b_charging),
    )
}

/// Bus admittance matrix for the branches enabled in `in_service`, plus bus shunts.
pub fn build_ybus(case: &GridCase, in_service: &[bool]) -> DMatrix<Complex64> {
    assert_eq!(in_service.len(), case.n_branches(), "branch mask length");
    let n = case.n_buses();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (k, bus) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(bus.g_shunt, bus.b_shunt);
    }
    for (br, _) in case.branches.iter().zip(in_service).filter(|(_, &on)| on) {
        let (f, t) = case.branch_ends(br);
        let (ys, ysh) = branch_admittance(br.r, br.x, br.b_charging);
        y[(f, f)] += ys + ysh;
        y[(t, t)] += ys + ysh;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    y
}

/// From-end `(P, Q)` of every branch for the given complex bus voltages; zero when out.
pub fn branch_flows(
    case: &GridCase,
    voltages: &[Complex64],
    in_service: &[bool],
) -> Vec<(f64, f64)> {
    assert_eq!(voltages.len(), case.n_buses(), "voltage vector length");
    case.branches
        .iter()
        .zip(in_service)
        .map(|(br, &on)| {
            if !on {
                return (0.0, 0.0);
            }
            let (f, t) = case.branch_ends(br);
            let (ys, ysh) = branch_admittance(br.r, br.x, br.b_charging);
            let current = (ys + ysh) * voltages[f] - ys * voltages[t];
            let s = voltages[f] * current.conj();
            (s.re, s.im)
        })
        .collect()
}
