//! Search patterns: straight-line sweeps through parameter space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::is_feasible;
use crate::problem::{MpQpProblem, ParameterPoint};

/// Relative resolution of [`feasible_extent`].
pub const EXTENT_RESOLUTION: f64 = 1e-6;

/// Points `start + i · step` for `i = 0..=max_steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub start: ParameterPoint,
    pub step: Vec<f64>,
    pub max_steps: usize,
}

impl Direction {
    pub fn point(&self, i: usize) -> ParameterPoint {
        self.start.offset(&self.step, i as f64)
    }

    pub fn points(&self) -> impl Iterator<Item = ParameterPoint> + '_ {
        (0..=self.max_steps).map(|i| self.point(i))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchPattern {
    pub directions: Vec<Direction>,
}

impl SearchPattern {
    pub fn point_count(&self) -> usize {
        self.directions.iter().map(|d| d.max_steps + 1).sum()
    }

    pub fn validate(&self, problem: &MpQpProblem) -> Result<()> {
        for (i, d) in self.directions.iter().enumerate() {
            if d.max_steps < 1 {
                return Err(Error::InvalidPattern(format!("direction {i} has no steps")));
            }
            if d.step.iter().all(|&s| s == 0.0) {
                return Err(Error::InvalidPattern(format!(
                    "direction {i} has a zero step"
                )));
            }
            if d.step.len() != problem.d() || !d.start.matches(problem) {
                return Err(Error::InvalidPattern(format!(
                    "direction {i} does not match the problem dimension"
                )));
            }
        }
        Ok(())
    }

    pub fn extend(&mut self, other: SearchPattern) {
        self.directions.extend(other.directions);
    }
}

/// Sweep length along one stacked parameter coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisExtent {
    pub coord: usize,
    pub extent: f64,
}

fn sweep(start: &ParameterPoint, axis: AxisExtent, steps: usize) -> Result<Option<Direction>> {
    if axis.coord >= start.len() {
        return Err(Error::InvalidPattern(format!(
            "coordinate {} outside 0..{}",
            axis.coord,
            start.len()
        )));
    }
    if axis.extent == 0.0 {
        return Ok(None);
    }
    if !axis.extent.is_finite() {
        return Err(Error::InvalidPattern(format!(
            "extent of coordinate {} is not finite",
            axis.coord
        )));
    }
    let mut step = vec![0.0; start.len()];
    step[axis.coord] = axis.extent / (steps - 1) as f64;
    Ok(Some(Direction {
        start: start.clone(),
        step,
        max_steps: steps - 1,
    }))
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < 2 {
        return Err(Error::InvalidPattern(format!(
            "steps must be at least 2, got {steps}"
        )));
    }
    Ok(())
}

/// One direction per axis from `theta0`, `steps` evenly spaced points covering `[0, extent]`.
///
/// Axes with zero extent are omitted.
pub fn axis_sweep_pattern(
    theta0: &ParameterPoint,
    axes: &[AxisExtent],
    steps: usize,
) -> Result<SearchPattern> {
    check_steps(steps)?;
    let mut directions = Vec::new();
    for &a in axes {
        directions.extend(sweep(theta0, a, steps)?);
    }
    Ok(SearchPattern { directions })
}

/// Axis sweeps repeated from the scaled bases `origin + k · (base − origin)`, one block per scale.
pub fn scaled_base_pattern(
    origin: &ParameterPoint,
    base: &ParameterPoint,
    scales: &[f64],
    axes: &[AxisExtent],
    steps: usize,
) -> Result<SearchPattern> {
    check_scales(scales)?;
    let mut pattern = SearchPattern::default();
    for &k in scales {
        pattern.extend(axis_sweep_pattern(&origin.lerp(base, k), axes, steps)?);
    }
    Ok(pattern)
}

fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::InvalidPattern("no scales given".into()));
    }
    if scales.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidPattern("scales must be ascending".into()));
    }
    Ok(())
}

/// Largest `t <= cap` such that `theta0 + t · direction` is feasible, by bisection against the oracle.
pub fn feasible_extent(
    problem: &MpQpProblem,
    theta0: &ParameterPoint,
    direction: &[f64],
    cap: f64,
) -> Result<f64> {
    if !is_feasible(problem, theta0) {
        return Err(Error::InfeasibleStart);
    }
    if direction.iter().all(|&v| v == 0.0) || direction.len() != problem.d() {
        return Err(Error::InvalidPattern(
            "direction must be nonzero and match the problem".into(),
        ));
    }
    let feasible = |t: f64| is_feasible(problem, &theta0.offset(direction, t));
    let (mut lo, mut hi) = (0.0, 1.0f64.min(cap));
    while feasible(hi) {
        if hi >= cap {
            return Ok(cap);
        }
        lo = hi;
        hi = (2.0 * hi).min(cap);
    }
    while hi - lo > EXTENT_RESOLUTION * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// A sweep along one coordinate, toward `+` or `−` according to `sign`, no longer than `cap`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisRay {
    pub coord: usize,
    pub sign: f64,
    pub cap: f64,
}

/// One direction per ray, each running to the feasible limit or its cap; rays with zero reach are omitted.
pub fn feasible_ray_pattern(
    problem: &MpQpProblem,
    theta0: &ParameterPoint,
    rays: &[AxisRay],
    steps: usize,
) -> Result<SearchPattern> {
    let mut axes = Vec::with_capacity(rays.len());
    for r in rays {
        if r.coord >= problem.d() {
            return Err(Error::InvalidPattern(format!(
                "coordinate {} outside 0..{}",
                r.coord,
                problem.d()
            )));
        }
        if r.sign != 1.0 && r.sign != -1.0 {
            return Err(Error::InvalidPattern(format!(
                "ray sign must be +1 or -1, got {}",
                r.sign
            )));
        }
        if r.cap <= 0.0 {
            continue;
        }
        let mut dir = vec![0.0; problem.d()];
        dir[r.coord] = r.sign;
        let extent = feasible_extent(problem, theta0, &dir, r.cap)?;
        axes.push(AxisExtent {
            coord: r.coord,
            extent: r.sign * extent,
        });
    }
    axis_sweep_pattern(theta0, &axes, steps)
}

/// [`axis_sweep_pattern`] with each extent set to the feasible limit along the positive axis.
pub fn feasible_axis_pattern(
    problem: &MpQpProblem,
    theta0: &ParameterPoint,
    coords: &[usize],
    steps: usize,
    cap: f64,
) -> Result<SearchPattern> {
    let rays: Vec<AxisRay> = coords
        .iter()
        .map(|&coord| AxisRay {
            coord,
            sign: 1.0,
            cap,
        })
        .collect();
    feasible_ray_pattern(problem, theta0, &rays, steps)
}

/// Scaled-base pattern whose sweeps run to the feasible limit from each scaled base.
///
/// Scales whose base is infeasible are skipped and returned.
pub fn feasible_scaled_pattern(
    problem: &MpQpProblem,
    origin: &ParameterPoint,
    base: &ParameterPoint,
    scales: &[f64],
    coords: &[usize],
    steps: usize,
    cap: f64,
) -> Result<(SearchPattern, Vec<f64>)> {
    check_scales(scales)?;
    let mut pattern = SearchPattern::default();
    let mut skipped = Vec::new();
    for &k in scales {
        let start = origin.lerp(base, k);
        match feasible_axis_pattern(problem, &start, coords, steps, cap) {
            Ok(p) => pattern.extend(p),
            Err(Error::InfeasibleStart) => skipped.push(k),
            Err(e) => return Err(e),
        }
    }
    Ok((pattern, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{transport_2d, transport_theta, TRANSPORT_AXES};

    fn unit(len: usize, coord: usize) -> Vec<f64> {
        let mut e = vec![0.0; len];
        e[coord] = 1.0;
        e
    }

    #[test]
    fn axis_sweep_counts_and_omits_zero_extent() {
        let p = transport_2d();
        let t0 = transport_theta(&p, 100.0, 100.0);
        let axes = [
            AxisExtent {
                coord: 6,
                extent: 10.0,
            },
            AxisExtent {
                coord: 7,
                extent: 20.0,
            },
        ];
        let pat = axis_sweep_pattern(&t0, &axes, 5).unwrap();
        assert_eq!(pat.directions.len(), 2);
        assert_eq!(pat.point_count(), 10);
        assert_eq!(pat.directions[1].point(4).theta_ineq()[3], 120.0);
        let one = axis_sweep_pattern(
            &t0,
            &[
                axes[0],
                AxisExtent {
                    coord: 7,
                    extent: 0.0,
                },
            ],
            5,
        )
        .unwrap();
        assert_eq!(one.directions.len(), 1);
        assert!(axis_sweep_pattern(&t0, &axes, 1).is_err());
    }

    #[test]
    fn scaled_pattern_cardinality() {
        let p = transport_2d();
        let base = transport_theta(&p, 100.0, 100.0);
        let origin = ParameterPoint::zeros(&p);
        let axes = [
            AxisExtent {
                coord: 6,
                extent: 10.0,
            },
            AxisExtent {
                coord: 7,
                extent: 10.0,
            },
        ];
        let pat = scaled_base_pattern(&origin, &base, &[1.0, 1.5, 2.0], &axes, 10).unwrap();
        assert_eq!(pat.directions.len(), 6);
        assert_eq!(pat.directions[2].start, transport_theta(&p, 150.0, 150.0));
        let single = scaled_base_pattern(&origin, &base, &[1.0], &axes, 10).unwrap();
        assert_eq!(single, axis_sweep_pattern(&base, &axes, 10).unwrap());
        assert!(scaled_base_pattern(&origin, &base, &[2.0, 1.0], &axes, 10).is_err());
    }

    #[test]
    fn extent_reaches_supply_limit() {
        let p = transport_2d();
        let t0 = transport_theta(&p, 100.0, 100.0);
        let e = feasible_extent(&p, &t0, &unit(p.d(), TRANSPORT_AXES[0]), 1e6).unwrap();
        assert!((e - 750.0).abs() <= 750.0 * 2e-6, "{e}");
        let bad = transport_theta(&p, 600.0, 600.0);
        assert!(matches!(
            feasible_extent(&p, &bad, &unit(p.d(), 6), 1e6),
            Err(Error::InfeasibleStart)
        ));
    }

    #[test]
    fn extent_returns_cap_when_unbounded() {
        let p = transport_2d();
        let t0 = transport_theta(&p, 100.0, 100.0);
        let mut down = unit(p.d(), 6);
        down[6] = -1.0;
        assert_eq!(feasible_extent(&p, &t0, &down, 500.0).unwrap(), 500.0);
    }

    #[test]
    fn rays_run_both_ways() {
        let p = transport_2d();
        let t0 = transport_theta(&p, 100.0, 100.0);
        let rays = [
            AxisRay {
                coord: 6,
                sign: -1.0,
                cap: 40.0,
            },
            AxisRay {
                coord: 6,
                sign: 1.0,
                cap: 1e6,
            },
            AxisRay {
                coord: 7,
                sign: -1.0,
                cap: 0.0,
            },
        ];
        let pat = feasible_ray_pattern(&p, &t0, &rays, 5).unwrap();
        assert_eq!(pat.directions.len(), 2);
        assert_eq!(pat.directions[0].point(4).theta_ineq()[2], 60.0);
        assert!((pat.directions[1].point(4).theta_ineq()[2] - 850.0).abs() < 1e-3);
    }
}
