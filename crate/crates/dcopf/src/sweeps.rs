use cfqp_core::{feasible_ray_pattern, AxisRay, Error as CoreError, SearchPattern};
use log::warn;

use crate::datasets::Network;
use crate::error::{CaseError, Result};

/// Demand sweeps around scaled base loads.
///
/// For each scale `k` the sweeps start at demand `k · P_d` and move one load
/// bus at a time: upward to the feasible limit (at most the total generation
/// capacity) and, when `two_sided`, downward to zero demand at that bus.
/// Scales whose starting point is infeasible are skipped and returned.
pub fn demand_sweep_pattern(
    net: &Network,
    scales: &[f64],
    steps: usize,
    two_sided: bool,
) -> Result<(SearchPattern, Vec<f64>)> {
    if scales.is_empty() || scales.windows(2).any(|w| w[1] < w[0]) {
        return Err(CaseError::InvalidLimits(
            "scales must be nonempty and ascending".into(),
        ));
    }
    let base = net.case.demands();
    let top = net.case.total_capacity();
    let loads = net.load_buses();
    let mut pattern = SearchPattern::default();
    let mut skipped = Vec::new();
    for &k in scales {
        let demand: Vec<f64> = base.iter().map(|d| k * d).collect();
        let start = net.theta_for_demand(&demand)?;
        let mut rays = Vec::new();
        for &i in &loads {
            let coord = net.map.demand_coord(&net.problem, i);
            rays.push(AxisRay {
                coord,
                sign: 1.0,
                cap: top,
            });
            if two_sided {
                rays.push(AxisRay {
                    coord,
                    sign: -1.0,
                    cap: demand[i],
                });
            }
        }
        match feasible_ray_pattern(&net.problem, &start, &rays, steps) {
            Ok(p) => pattern.extend(p),
            Err(CoreError::InfeasibleStart) => {
                warn!("demand scale {k} is infeasible, no sweeps from it");
                skipped.push(k);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((pattern, skipped))
}
