use cfqp_core::{MpQpProblem, ParameterPoint};
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::case::PowerCase;
use crate::error::{CaseError, Result};

/// Exponential draws clipped at `cap`, in per unit of the case power base.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CappedExponential {
    pub rate: f64,
    pub cap: f64,
}

impl Default for CappedExponential {
    fn default() -> Self {
        CappedExponential {
            rate: 1.25,
            cap: 1.5,
        }
    }
}

impl CappedExponential {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let exp = Exp::new(self.rate).expect("rate is positive");
        exp.sample(rng).min(self.cap)
    }

    pub fn mean(&self) -> f64 {
        (1.0 - (-self.rate * self.cap).exp()) / self.rate
    }
}

/// Buses hosting renewables: the case list, or every bus with demand when the list is empty.
pub fn renewable_buses(case: &PowerCase) -> Result<Vec<usize>> {
    if case.renewable_buses.is_empty() {
        return Ok((0..case.buses.len())
            .filter(|&i| case.buses[i].demand > 0.0)
            .collect());
    }
    case.renewable_buses
        .iter()
        .map(|&id| case.bus_index(id))
        .collect()
}

/// One renewable output draw per bus in MW; zero where no renewable is installed.
pub fn sample_renewable<R: Rng + ?Sized>(
    case: &PowerCase,
    dist: &CappedExponential,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; case.buses.len()];
    for i in renewable_buses(case)? {
        out[i] = dist.sample(rng) * case.base_mva;
    }
    Ok(out)
}

/// Renewable output lowers the net demand seen by each bus balance row.
pub fn inject_renewable(
    problem: &MpQpProblem,
    theta_e_base: &[f64],
    p_ren: &[f64],
) -> Result<ParameterPoint> {
    let m1 = problem.m1();
    for v in [theta_e_base.len(), p_ren.len()] {
        if v != m1 {
            return Err(CaseError::Dimension {
                expected: m1,
                got: v,
            });
        }
    }
    let theta_e: Vec<f64> = theta_e_base.iter().zip(p_ren).map(|(t, r)| t - r).collect();
    Ok(ParameterPoint::from_parts(
        problem,
        &vec![0.0; problem.n()],
        &theta_e,
        &vec![0.0; problem.m2()],
    )?)
}
