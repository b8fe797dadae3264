use cfqp_core::linalg::Matrix;
use cfqp_core::{MpQpProblem, ParameterPoint, ProblemData, VariableGroup};
use serde::{Deserialize, Serialize};

use crate::case::PowerCase;
use crate::error::{CaseError, Result};

pub const GENERATION_GROUP: &str = "P_g";
pub const ANGLE_GROUP: &str = "δ";

/// Per-line flow limits in MW, ordered as the case lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowLimits {
    pub f_plus: Vec<f64>,
}

impl FlowLimits {
    pub fn uniform(case: &PowerCase, limit: f64) -> Result<Self> {
        let l = FlowLimits {
            f_plus: vec![limit; case.lines.len()],
        };
        l.check(case)?;
        Ok(l)
    }

    /// Limits taken from the case lines; every line must carry one.
    pub fn from_case(case: &PowerCase) -> Result<Self> {
        let f_plus = case
            .lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.limit
                    .ok_or_else(|| CaseError::InvalidLimits(format!("line {i} has no limit")))
            })
            .collect::<Result<Vec<_>>>()?;
        let l = FlowLimits { f_plus };
        l.check(case)?;
        Ok(l)
    }

    fn check(&self, case: &PowerCase) -> Result<()> {
        if self.f_plus.len() != case.lines.len() {
            return Err(CaseError::Dimension {
                expected: case.lines.len(),
                got: self.f_plus.len(),
            });
        }
        if let Some(v) = self.f_plus.iter().find(|v| !(**v > 0.0)) {
            return Err(CaseError::InvalidLimits(format!(
                "limits must be positive, got {v}"
            )));
        }
        Ok(())
    }
}

/// Correspondence between case entities and problem indices.
///
/// Variables are `[P_g per generator | δ per non-slack bus]`. Inequality rows
/// come in (upper, lower) pairs: one pair per generator, then one pair per
/// line when flow limits are present. Equality row `i` and θ_e entry `i` belong
/// to bus `i` in case order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexMap {
    pub bus_ids: Vec<u32>,
    pub slack: usize,
    pub angle_vars: Vec<Option<usize>>,
    pub generators: usize,
    pub lines: usize,
    pub with_limits: bool,
}

impl IndexMap {
    pub fn generation_var(&self, g: usize) -> usize {
        g
    }

    /// 1-based inequality indices (upper, lower) of generator `g`.
    pub fn box_constraints(&self, g: usize) -> (usize, usize) {
        (2 * g + 1, 2 * g + 2)
    }

    /// 1-based inequality indices (upper, lower) of line `l`.
    pub fn flow_constraints(&self, l: usize) -> Option<(usize, usize)> {
        self.with_limits
            .then(|| (2 * (self.generators + l) + 1, 2 * (self.generators + l) + 2))
    }

    pub fn generation<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[..self.generators]
    }

    /// Angles for every bus, with zero at the slack bus.
    pub fn full_angles(&self, x: &[f64]) -> Vec<f64> {
        self.angle_vars
            .iter()
            .map(|v| v.map_or(0.0, |j| x[j]))
            .collect()
    }

    /// Line flows in MW, positive from `from` to `to`.
    pub fn line_flows(&self, case: &PowerCase, x: &[f64]) -> Result<Vec<f64>> {
        let delta = self.full_angles(x);
        case.lines
            .iter()
            .map(|l| {
                Ok(case.line_admittance(l)
                    * (delta[case.bus_index(l.from)?] - delta[case.bus_index(l.to)?]))
            })
            .collect()
    }

    /// θ_e for the given per-bus demand.
    pub fn theta_for_demand(
        &self,
        problem: &MpQpProblem,
        case: &PowerCase,
        demand: &[f64],
    ) -> Result<ParameterPoint> {
        if demand.len() != case.buses.len() {
            return Err(CaseError::Dimension {
                expected: case.buses.len(),
                got: demand.len(),
            });
        }
        let theta_e: Vec<f64> = demand
            .iter()
            .zip(&case.buses)
            .map(|(d, b)| d - b.demand)
            .collect();
        Ok(ParameterPoint::from_parts(
            problem,
            &vec![0.0; problem.n()],
            &theta_e,
            &vec![0.0; problem.m2()],
        )?)
    }

    /// Stacked parameter coordinate of bus `i`'s demand perturbation.
    pub fn demand_coord(&self, problem: &MpQpProblem, i: usize) -> usize {
        problem.eq_column(i)
    }

    /// Power-balance mismatch per bus, `P_d + θ_e − P + Bδ`.
    pub fn balance_residual(
        &self,
        case: &PowerCase,
        x: &[f64],
        theta: &ParameterPoint,
    ) -> Result<Vec<f64>> {
        let b = case.susceptance_matrix()?;
        let delta = self.full_angles(x);
        let mut r: Vec<f64> = case
            .buses
            .iter()
            .zip(theta.theta_e())
            .map(|(bus, t)| bus.demand + t)
            .collect();
        for (g, gen) in case.generators.iter().enumerate() {
            r[case.bus_index(gen.bus)?] -= x[g];
        }
        for (i, ri) in r.iter_mut().enumerate() {
            *ri += b.row(i).iter().zip(&delta).map(|(a, d)| a * d).sum::<f64>();
        }
        Ok(r)
    }
}

/// Network without flow limits.
pub fn build_dcopf(case: &PowerCase) -> Result<(MpQpProblem, IndexMap)> {
    build(case, None)
}

/// Network with two flow rows per line.
pub fn build_dcopf_with_lines(
    case: &PowerCase,
    limits: &FlowLimits,
) -> Result<(MpQpProblem, IndexMap)> {
    limits.check(case)?;
    build(case, Some(limits))
}

fn build(case: &PowerCase, limits: Option<&FlowLimits>) -> Result<(MpQpProblem, IndexMap)> {
    case.validate()?;
    let nb = case.buses.len();
    let ng = case.generators.len();
    let slack = case.slack_index()?;
    let mut angle_vars = vec![None; nb];
    let mut next = ng;
    for (i, v) in angle_vars.iter_mut().enumerate() {
        if i != slack {
            *v = Some(next);
            next += 1;
        }
    }
    let n = next;
    let bmat = case.susceptance_matrix()?;

    let mut q = vec![vec![0.0; n]; n];
    let mut c = vec![0.0; n];
    for (g, gen) in case.generators.iter().enumerate() {
        q[g][g] = gen.cost_q;
        c[g] = gen.cost_c;
    }

    let mut a_e = vec![vec![0.0; n]; nb];
    for (g, gen) in case.generators.iter().enumerate() {
        a_e[case.bus_index(gen.bus)?][g] = 1.0;
    }
    for (i, row) in a_e.iter_mut().enumerate() {
        for (k, v) in angle_vars.iter().enumerate() {
            if let Some(j) = v {
                row[*j] = -bmat[(i, k)];
            }
        }
    }
    let b_e = case.demands();

    let mut a_c = Vec::new();
    let mut b_c = Vec::new();
    for (g, gen) in case.generators.iter().enumerate() {
        let mut up = vec![0.0; n];
        up[g] = -1.0;
        a_c.push(up);
        b_c.push(-gen.p_max);
        let mut lo = vec![0.0; n];
        lo[g] = 1.0;
        a_c.push(lo);
        b_c.push(gen.p_min);
    }
    if let Some(limits) = limits {
        for (l, line) in case.lines.iter().enumerate() {
            let y = case.line_admittance(line);
            let mut flow = vec![0.0; n];
            if let Some(j) = angle_vars[case.bus_index(line.from)?] {
                flow[j] += y;
            }
            if let Some(j) = angle_vars[case.bus_index(line.to)?] {
                flow[j] -= y;
            }
            a_c.push(flow.iter().map(|v| -v).collect());
            b_c.push(-limits.f_plus[l]);
            a_c.push(flow);
            b_c.push(-limits.f_plus[l]);
        }
    }

    let groups = vec![
        VariableGroup {
            name: GENERATION_GROUP.into(),
            start: 0,
            len: ng,
        },
        VariableGroup {
            name: ANGLE_GROUP.into(),
            start: ng,
            len: n - ng,
        },
    ];
    let problem = MpQpProblem::new(ProblemData {
        q,
        c,
        c0: 0.0,
        a_e,
        b_e,
        a_c,
        b_c,
        groups,
    })?;
    let map = IndexMap {
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
        slack,
        angle_vars,
        generators: ng,
        lines: case.lines.len(),
        with_limits: limits.is_some(),
    };
    Ok((problem, map))
}

/// Line incidence `H` (lines × buses) with +1 at the sending and −1 at the receiving bus.
pub fn line_incidence(case: &PowerCase) -> Result<Matrix<f64>> {
    let mut h = Matrix::zeros(case.lines.len(), case.buses.len());
    for (l, line) in case.lines.iter().enumerate() {
        h[(l, case.bus_index(line.from)?)] = 1.0;
        h[(l, case.bus_index(line.to)?)] = -1.0;
    }
    Ok(h)
}
