//! Two-sided facet tests for the primal solution map.
//!
//! Along a segment the model's region label is sampled, every change is
//! bisected down to a facet point, and `x` is compared at `facet ± ε·u` with
//! `u` the unit segment direction. The gap must stay within the slope bound
//! `ε (‖G_a u‖∞ + ‖G_b u‖∞)` of the two neighbouring regions.

use serde::{Deserialize, Serialize};

use crate::model::ClosedFormModel;
use crate::problem::{ActiveSet, ParameterPoint};
use crate::real::Real;

const BISECTIONS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetCheck {
    pub from: ActiveSet,
    pub to: ActiveSet,
    pub facet: ParameterPoint,
    pub eps: f64,
    pub gap: f64,
    pub bound: f64,
    pub passed: bool,
}

fn slope_along<T: Real>(model: &ClosedFormModel<T>, region: usize, u: &[f64]) -> f64 {
    let g = &model.regions()[region].slopes.grad_x;
    (0..g.rows())
        .map(|r| {
            g.row(r)
                .iter()
                .zip(u)
                .map(|(a, b)| a.to_f64_lossless() * b)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Facet tests at every region change met by `samples` evenly spaced points from `a` to `b`.
pub fn segment_continuity<T: Real>(
    model: &ClosedFormModel<T>,
    a: &ParameterPoint,
    b: &ParameterPoint,
    samples: usize,
    eps: &[f64],
) -> Vec<FacetCheck> {
    let delta: Vec<f64> = b
        .stacked()
        .iter()
        .zip(a.stacked())
        .map(|(x, y)| x - y)
        .collect();
    let len = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len == 0.0 || samples < 2 {
        return Vec::new();
    }
    let u: Vec<f64> = delta.iter().map(|v| v / len).collect();
    let at = |t: f64| a.lerp(b, t);
    let mut out = Vec::new();
    let mut prev = (0.0, model.classify(a));
    for i in 1..samples {
        let t = i as f64 / (samples - 1) as f64;
        let r = model.classify(&at(t));
        if r != prev.1 {
            let (mut lo, mut hi) = (prev.0, t);
            for _ in 0..BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if model.classify(&at(mid)) == prev.1 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let facet = at(0.5 * (lo + hi));
            let after = model.classify(&at(hi));
            let slope = slope_along(model, prev.1, &u) + slope_along(model, after, &u);
            for &e in eps {
                let xa = model.forward(&facet.offset(&u, -e)).to_f64().x;
                let xb = model.forward(&facet.offset(&u, e)).to_f64().x;
                let gap = xa
                    .iter()
                    .zip(&xb)
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max);
                let scale = xa.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let noise = 64.0 * T::epsilon().to_f64_lossless() * scale;
                let bound = e * slope * (1.0 + 1e-6) + noise;
                out.push(FacetCheck {
                    from: model.regions()[prev.1].active_set.clone(),
                    to: model.regions()[after].active_set.clone(),
                    facet: facet.clone(),
                    eps: e,
                    gap,
                    bound,
                    passed: gap <= bound,
                });
            }
        }
        prev = (t, r);
    }
    out
}

/// Facet tests on the segment between the witnesses of every parent and child region.
pub fn tree_continuity<T: Real>(
    model: &ClosedFormModel<T>,
    samples: usize,
    eps: &[f64],
) -> Vec<FacetCheck> {
    model
        .regions()
        .iter()
        .filter_map(|r| r.parent.map(|p| (&model.regions()[p].witness, &r.witness)))
        .flat_map(|(a, b)| segment_continuity(model, a, b, samples, eps))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::{discover, DiscoveryOptions};
    use crate::fixtures::{transport_2d, transport_theta, TRANSPORT_AXES};
    use crate::pattern::feasible_axis_pattern;

    #[test]
    fn transport_facets_are_continuous() {
        let p = transport_2d();
        let t0 = transport_theta(&p, 20.0, 20.0);
        let pattern = feasible_axis_pattern(&p, &t0, &TRANSPORT_AXES, 200, 1e6).unwrap();
        let model = discover::<f64>(&p, &t0, &pattern, &DiscoveryOptions::default())
            .unwrap()
            .model;
        let checks = tree_continuity(&model, 400, &[1e-4, 1e-6]);
        assert!(checks.len() >= 6);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
        assert!(checks.iter().any(|c| c.gap > 0.0));
    }

    #[test]
    fn no_facets_on_a_constant_segment() {
        let p = transport_2d();
        let t0 = transport_theta(&p, 20.0, 20.0);
        let model =
            crate::model::init_model::<f64>(&p, &ActiveSet::new(vec![3, 4], 6).unwrap(), &t0)
                .unwrap();
        assert!(
            segment_continuity(&model, &t0, &transport_theta(&p, 40.0, 30.0), 50, &[1e-4])
                .is_empty()
        );
    }
}
