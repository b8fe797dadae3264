//! Parameter datasets over a built network.
//!
//! Every draw uses its own ChaCha stream selected by the draw index, so results
//! do not depend on thread scheduling and scaled batches share the same ratios.

use cfqp_core::{is_feasible, MpQpProblem, ParameterPoint, ORACLE_MAX_M2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::build::{build_dcopf, build_dcopf_with_lines, FlowLimits, IndexMap};
use crate::case::PowerCase;
use crate::error::{CaseError, Result};
use crate::renewable::{inject_renewable, sample_renewable, CappedExponential};

pub const LOCAL_RATIO: (f64, f64) = (0.6, 1.4);
pub const EXTREME_OTHER_LOAD: f64 = 0.01;

/// Hourly demand multipliers applied to base loads in planning sweeps.
pub const DAILY_LOAD_PROFILE: [f64; 24] = [
    0.67, 0.63, 0.60, 0.59, 0.59, 0.60, 0.74, 0.86, 0.95, 0.96, 0.96, 0.95, 0.95, 0.95, 0.93, 0.94,
    0.99, 1.00, 1.00, 0.96, 0.91, 0.83, 0.73, 0.63,
];

/// A case reduced to an mp-QP together with its index map.
#[derive(Clone, Debug)]
pub struct Network {
    pub case: PowerCase,
    pub problem: MpQpProblem,
    pub map: IndexMap,
}

impl Network {
    pub fn new(case: PowerCase) -> Result<Self> {
        let (problem, map) = build_dcopf(&case)?;
        Ok(Network { case, problem, map })
    }

    pub fn with_lines(case: PowerCase, limits: &FlowLimits) -> Result<Self> {
        let (problem, map) = build_dcopf_with_lines(&case, limits)?;
        Ok(Network { case, problem, map })
    }

    pub fn theta_for_demand(&self, demand: &[f64]) -> Result<ParameterPoint> {
        self.map.theta_for_demand(&self.problem, &self.case, demand)
    }

    /// Buses with positive base demand.
    pub fn load_buses(&self) -> Vec<usize> {
        (0..self.case.buses.len())
            .filter(|&i| self.case.buses[i].demand > 0.0)
            .collect()
    }

    fn feasible(&self, theta: &ParameterPoint) -> Result<bool> {
        if self.problem.m2() > ORACLE_MAX_M2 {
            return Err(cfqp_core::Error::OracleTooLarge {
                m2: self.problem.m2(),
                limit: ORACLE_MAX_M2,
            }
            .into());
        }
        Ok(is_feasible(&self.problem, theta))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub scale: f64,
    pub hour: Option<u32>,
    pub theta: ParameterPoint,
    pub feasible: bool,
}

fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn ratios(rng: &mut ChaCha8Rng, buses: usize) -> Vec<f64> {
    (0..buses)
        .map(|_| rng.random_range(LOCAL_RATIO.0..LOCAL_RATIO.1))
        .collect()
}

fn sample(net: &Network, demand: &[f64], scale: f64, hour: Option<u32>) -> Result<Sample> {
    let theta = net.theta_for_demand(demand)?;
    let feasible = net.feasible(&theta)?;
    Ok(Sample {
        scale,
        hour,
        theta,
        feasible,
    })
}

/// Base demand times an independent `Uniform(0.6, 1.4)` ratio per bus.
pub fn local_perturbation_dataset(net: &Network, count: usize, seed: u64) -> Result<Vec<Sample>> {
    scaled_dataset(net, &[1.0], count, seed)
}

/// One sweep per bus from zero to the total generation capacity, other loads held at 0.01 MW.
pub fn extreme_dataset(net: &Network, steps: usize) -> Result<Vec<Sample>> {
    if steps < 2 {
        return Err(CaseError::InvalidLimits(format!(
            "extreme sweeps need at least 2 steps, got {steps}"
        )));
    }
    let nb = net.case.buses.len();
    let top = net.case.total_capacity();
    (0..nb * steps)
        .into_par_iter()
        .map(|idx| {
            let (bus, i) = (idx / steps, idx % steps);
            let mut demand = vec![EXTREME_OTHER_LOAD; nb];
            demand[bus] = top * i as f64 / (steps - 1) as f64;
            sample(net, &demand, 1.0, None)
        })
        .collect()
}

/// `count` draws per scale with demand `k · r_j · P_d`; draw `j` uses the same ratios `r_j` at every scale.
pub fn scaled_dataset(
    net: &Network,
    scales: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if scales.is_empty() || scales.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CaseError::InvalidLimits(
            "scales must be nonempty and ascending".into(),
        ));
    }
    let base = net.case.demands();
    let nb = base.len();
    let draws: Vec<Vec<f64>> = (0..count)
        .map(|j| ratios(&mut stream(seed, j), nb))
        .collect();
    let jobs: Vec<(f64, &Vec<f64>)> = scales
        .iter()
        .flat_map(|&k| draws.iter().map(move |r| (k, r)))
        .collect();
    jobs.into_par_iter()
        .map(|(k, r)| {
            let demand: Vec<f64> = base.iter().zip(r).map(|(d, r)| k * r * d).collect();
            sample(net, &demand, k, None)
        })
        .collect()
}

/// Hourly base load from `DAILY_LOAD_PROFILE` minus sampled renewable output, `samples` draws per hour.
pub fn renewable_planning_dataset(
    net: &Network,
    hours: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let dist = CappedExponential::default();
    let base = net.case.demands();
    (0..hours * samples)
        .into_par_iter()
        .map(|idx| {
            let hour = idx / samples;
            let mut rng = stream(seed, idx);
            let ren = sample_renewable(&net.case, &dist, &mut rng)?;
            let factor = DAILY_LOAD_PROFILE[hour % 24];
            let theta_e: Vec<f64> = base.iter().map(|d| (factor - 1.0) * d).collect();
            let theta = inject_renewable(&net.problem, &theta_e, &ren)?;
            let feasible = net.feasible(&theta)?;
            Ok(Sample {
                scale: factor,
                hour: Some(hour as u32),
                theta,
                feasible,
            })
        })
        .collect()
}

/// Feasible draws per scale, in scale order.
pub fn survival_counts(samples: &[Sample]) -> Vec<(f64, usize, usize)> {
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for s in samples {
        match out.last_mut() {
            Some(last) if last.0 == s.scale => {
                last.1 += s.feasible as usize;
                last.2 += 1;
            }
            _ => out.push((s.scale, s.feasible as usize, 1)),
        }
    }
    out
}
