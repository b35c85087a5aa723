use std::fmt::Write as _;

use super::{Branch, BranchStatus, Bus, BusKind, Generator, GridCase};
use crate::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    System,
    Bus,
    Branch,
    Gen,
}

/// Parses the sectioned case-file text (`[SYSTEM]`, `[BUS]`, `[BRANCH]`, `[GEN]`).
pub fn parse_case(text: &str) -> Result<GridCase> {
    let mut section = Section::None;
    let mut mva_base = None;
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut generators = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[SYSTEM]" => Section::System,
                "[BUS]" => Section::Bus,
                "[BRANCH]" => Section::Branch,
                "[GEN]" => Section::Gen,
                other => {
                    return Err(parse_err(
                        line_no,
                        format!("unknown section header {other}"),
                    ))
                }
            };
            continue;
        }
        let err = |msg: String| parse_err(line_no, msg);
        match section {
            Section::None => return Err(err("data before the first section header".into())),
            Section::System => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
                match key.trim() {
                    "mva_base" => mva_base = Some(real(value.trim(), "mva_base", line_no)?),
                    other => return Err(err(format!("unknown system key `{other}`"))),
                }
            }
            Section::Bus => {
                let f = fields(line, 7, line_no)?;
                let kind = match f[1].to_ascii_uppercase().as_str() {
                    "SLACK" => BusKind::Slack,
                    "PV" => BusKind::PV,
                    "PQ" => BusKind::PQ,
                    other => return Err(err(format!("unknown bus kind `{other}`"))),
                };
                buses.push(Bus {
                    id: integer(f[0], "bus id", line_no)?,
                    kind,
                    p_load: real(f[2], "p_load", line_no)?,
                    q_load: real(f[3], "q_load", line_no)?,
                    g_shunt: real(f[4], "g_shunt", line_no)?,
                    b_shunt: real(f[5], "b_shunt", line_no)?,
                    v_setpoint: real(f[6], "v_setpoint", line_no)?,
                });
            }
            Section::Branch => {
                let f = fields(line, 6, line_no)?;
                let status = match f[5].to_ascii_uppercase().as_str() {
                    "1" | "IN" | "INSERVICE" => BranchStatus::InService,
                    "0" | "OUT" => BranchStatus::Out,
                    other => return Err(err(format!("unknown branch status `{other}`"))),
                };
                branches.push(Branch {
                    index: branches.len(),
                    from_bus: integer(f[0], "from bus", line_no)?,
                    to_bus: integer(f[1], "to bus", line_no)?,
                    r: real(f[2], "r", line_no)?,
                    x: real(f[3], "x", line_no)?,
                    b_charging: real(f[4], "b_charging", line_no)?,
                    status,
                });
            }
            Section::Gen => {
                let f = fields(line, 7, line_no)?;
                generators.push(Generator {
                    bus: integer(f[0], "generator bus", line_no)?,
                    p_gen: real(f[1], "p_gen", line_no)?,
                    v_setpoint: real(f[2], "v_setpoint", line_no)?,
                    inertia_h: real(f[3], "h", line_no)?,
                    damping_d: real(f[4], "d", line_no)?,
                    xd_prime: real(f[5], "xd_prime", line_no)?,
                    mva_base: real(f[6], "mva_base", line_no)?,
                });
            }
        }
    }

    let mva_base =
        mva_base.ok_or_else(|| Error::CaseValidation("[SYSTEM] mva_base missing".into()))?;
    let case = GridCase::new(mva_base, buses, branches, generators)?;
    for gen in &case.generators {
        let bus = &case.buses[case.bus_index(gen.bus).unwrap()];
        if (bus.v_setpoint - gen.v_setpoint).abs() > 1e-9 {
            return Err(Error::CaseValidation(format!(
                "bus {} setpoint {} disagrees with its generator setpoint {}",
                bus.id, bus.v_setpoint, gen.v_setpoint
            )));
        }
    }
    Ok(case)
}

fn parse_err(line: usize, message: String) -> Error {
    Error::CaseParse { line, message }
}

fn fields(line: &str, expected: usize, line_no: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != expected {
        return Err(parse_err(
            line_no,
            format!("expected {expected} columns, found {}", f.len()),
        ));
    }
    Ok(f)
}

fn real(token: &str, what: &str, line_no: usize) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(line_no, format!("invalid {what} `{token}`"))),
    }
}

fn integer(token: &str, what: &str, line_no: usize) -> Result<u32> {
    token
        .parse::<u32>()
        .map_err(|_| parse_err(line_no, format!("invalid {what} `{token}`")))
}

pub(super) fn render_case(case: &GridCase) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "[SYSTEM]\nmva_base={:?}\n\n[BUS]",
        case.system_mva_base
    );
    for b in &case.buses {
        let kind = match b.kind {
            BusKind::Slack => "SLACK",
            BusKind::PV => "PV",
            BusKind::PQ => "PQ",
        };
        let _ = writeln!(
            out,
            "{} {} {:?} {:?} {:?} {:?} {:?}",
            b.id, kind, b.p_load, b.q_load, b.g_shunt, b.b_shunt, b.v_setpoint
        );
    }
    out.push_str("\n[BRANCH]\n");
    for br in &case.branches {
        let status = u8::from(br.status == BranchStatus::InService);
        let _ = writeln!(
            out,
            "{} {} {:?} {:?} {:?} {}",
            br.from_bus, br.to_bus, br.r, br.x, br.b_charging, status
        );
    }
    out.push_str("\n[GEN]\n");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "{} {:?} {:?} {:?} {:?} {:?} {:?}",
            g.bus, g.p_gen, g.v_setpoint, g.inertia_h, g.damping_d, g.xd_prime, g.mva_base
        );
    }
    out
}
