//! Ground truth by exhaustive active-set enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::{kkt_report, KktReport};
use crate::linalg::{row_rank, LuFactors, Matrix};
use crate::problem::{ActiveSet, MpQpProblem, ParameterPoint, PrimalDualSolution};
use crate::solve::{assemble_base_jacobian, solve_active_set};

pub const ORACLE_MAX_M2: usize = 24;

/// Relative acceptance tolerance for dual negativity and primal violation.
pub const ORACLE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub solution: PrimalDualSolution<f64>,
    pub active_set: ActiveSet,
    pub report: KktReport,
    /// Set when an active multiplier is numerically zero or an inactive row is tight.
    pub degenerate: bool,
}

/// Residuals `b_C + θ_C − A_C x` and the scale each one is compared against.
pub(crate) fn inequality_residuals(
    problem: &MpQpProblem,
    x: &[f64],
    theta: &ParameterPoint,
) -> Vec<(f64, f64)> {
    (0..problem.m2())
        .map(|k| {
            let row = problem.a_c().row(k);
            let rhs = problem.b_c()[k] + theta.theta_ineq()[k];
            let ax: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            let scale =
                1.0 + rhs.abs() + row.iter().zip(x).map(|(a, v)| (a * v).abs()).sum::<f64>();
            (rhs - ax, scale)
        })
        .collect()
}

/// Visits `k`-subsets of `0..m` in lexicographic order as bitmasks.
fn for_each_subset(m: usize, k: usize, mut f: impl FnMut(u32) -> bool) -> bool {
    if k > m {
        return false;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mask = idx.iter().fold(0u32, |acc, &i| acc | 1 << i);
        if f(mask) {
            return true;
        }
        let Some(i) = (0..k).rev().find(|&i| idx[i] < m - k + i) else {
            return false;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Screening tolerance; looser than [`ORACLE_TOL`] so that screening never drops a set the direct check accepts.
const SCREEN_TOL: f64 = 1e2 * ORACLE_TOL;

/// Candidate solutions by Schur complement on the base system, which is factored once per point.
///
/// With `K` the base Jacobian and `W = K⁻¹ [A_Cᵀ; 0]`, the set `S` gives
/// `μ_S = G_SS⁻¹ r_S` where `G = A_C W_x` and `r = b_C + θ_C − A_C x0`.
struct Screen {
    x0: Vec<f64>,
    w: Matrix<f64>,
    g: Matrix<f64>,
    r0: Vec<f64>,
}

impl Screen {
    fn new(problem: &MpQpProblem, theta: &ParameterPoint) -> Option<Self> {
        let (n, m1, m2) = (problem.n(), problem.m1(), problem.m2());
        let lu = LuFactors::factorize(&assemble_base_jacobian::<f64>(problem)).ok()?;
        let z = theta.model_input::<f64>(problem);
        let y0 = lu.solve(&z[..n + m1]);
        let x0 = y0[..n].to_vec();
        let mut w = Matrix::zeros(n, m2);
        let mut col = vec![0.0; n + m1];
        for k in 0..m2 {
            col[..n].copy_from_slice(problem.a_c().row(k));
            for (i, v) in lu.solve(&col)[..n].iter().enumerate() {
                w[(i, k)] = *v;
            }
        }
        let mut g = Matrix::zeros(m2, m2);
        for i in 0..m2 {
            let a = problem.a_c().row(i);
            for j in 0..m2 {
                g[(i, j)] = (0..n).map(|c| a[c] * w[(c, j)]).sum();
            }
        }
        let r0 = inequality_residuals(problem, &x0, theta)
            .into_iter()
            .map(|(r, _)| r)
            .collect();
        Some(Screen { x0, w, g, r0 })
    }

    /// `None` when the reduced system is singular.
    fn passes(
        &self,
        problem: &MpQpProblem,
        set: &ActiveSet,
        theta: &ParameterPoint,
    ) -> Option<bool> {
        let rows: Vec<usize> = set.rows().collect();
        let mut mu = vec![0.0; problem.m2()];
        if !rows.is_empty() {
            let mut s = Matrix::zeros(rows.len(), rows.len());
            for (a, &i) in rows.iter().enumerate() {
                for (b, &j) in rows.iter().enumerate() {
                    s[(a, b)] = self.g[(i, j)];
                }
            }
            let lu = LuFactors::factorize(&s).ok()?;
            let rhs: Vec<f64> = rows.iter().map(|&k| self.r0[k]).collect();
            for (&k, v) in rows.iter().zip(lu.solve(&rhs)) {
                mu[k] = v;
            }
        }
        let scale = 1.0 + mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rows.iter().any(|&k| mu[k] < -SCREEN_TOL * scale) {
            return Some(false);
        }
        let x: Vec<f64> = (0..problem.n())
            .map(|i| self.x0[i] + rows.iter().map(|&k| self.w[(i, k)] * mu[k]).sum::<f64>())
            .collect();
        Some(
            inequality_residuals(problem, &x, theta)
                .iter()
                .all(|&(r, s)| r <= SCREEN_TOL * s),
        )
    }
}

/// Solves the mp-QP at `theta` by trying active sets in order of cardinality, then lexicographically.
///
/// The first set whose solution is primal and dual feasible is returned, which
/// makes ties on region boundaries resolve to the smallest set.
pub fn brute_force_solve(problem: &MpQpProblem, theta: &ParameterPoint) -> Result<OracleSolution> {
    theta.check(problem)?;
    let m2 = problem.m2();
    if m2 > ORACLE_MAX_M2 {
        return Err(Error::OracleTooLarge {
            m2,
            limit: ORACLE_MAX_M2,
        });
    }
    enumerate(problem, theta, Screen::new(problem, theta).as_ref())
}

fn enumerate(
    problem: &MpQpProblem,
    theta: &ParameterPoint,
    screen: Option<&Screen>,
) -> Result<OracleSolution> {
    let m2 = problem.m2();
    let max_card = m2.min(problem.n().saturating_sub(problem.m1()));
    let mut dependent: Vec<u32> = Vec::new();
    let mut found: Option<(PrimalDualSolution, ActiveSet)> = None;
    for card in 0..=max_card {
        let done = for_each_subset(m2, card, |mask| {
            if dependent.iter().any(|&d| mask & d == d) {
                return false;
            }
            let set = ActiveSet::from_mask(mask);
            if let Some(Some(false)) = screen.map(|s| s.passes(problem, &set, theta)) {
                return false;
            }
            match solve_active_set::<f64>(problem, &set, theta) {
                Ok(sol) => {
                    if accepts(problem, &sol, &set, theta) {
                        found = Some((sol, set));
                        return true;
                    }
                }
                Err(Error::SingularActiveJacobian { .. }) => {
                    if rows_dependent(problem, &set) {
                        dependent.push(mask);
                    }
                }
                Err(_) => {}
            }
            false
        });
        if done {
            break;
        }
    }
    let (solution, active_set) = found.ok_or(Error::Infeasible)?;
    let report = kkt_report(problem, &solution, theta);
    let degenerate = is_degenerate(problem, &solution, &active_set, theta);
    Ok(OracleSolution {
        solution,
        active_set,
        report,
        degenerate,
    })
}

fn rows_dependent(problem: &MpQpProblem, set: &ActiveSet) -> bool {
    let rows: Vec<Vec<f64>> = (0..problem.m1())
        .map(|i| problem.a_e().row(i).to_vec())
        .chain(set.rows().map(|k| problem.a_c().row(k).to_vec()))
        .collect();
    let m = Matrix::from_rows(&rows, problem.n()).expect("rows have n entries");
    row_rank(&m, 1e-10) < rows.len()
}

fn mu_scale(sol: &PrimalDualSolution) -> f64 {
    1.0 + sol.mu.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn accepts(
    problem: &MpQpProblem,
    sol: &PrimalDualSolution,
    set: &ActiveSet,
    theta: &ParameterPoint,
) -> bool {
    let dual_floor = -ORACLE_TOL * mu_scale(sol);
    if set.rows().any(|k| sol.mu[k] < dual_floor) {
        return false;
    }
    inequality_residuals(problem, &sol.x, theta)
        .iter()
        .all(|&(r, s)| r <= ORACLE_TOL * s)
}

fn is_degenerate(
    problem: &MpQpProblem,
    sol: &PrimalDualSolution,
    set: &ActiveSet,
    theta: &ParameterPoint,
) -> bool {
    let weak = ORACLE_TOL * mu_scale(sol);
    if set.rows().any(|k| sol.mu[k] <= weak) {
        return true;
    }
    inequality_residuals(problem, &sol.x, theta)
        .iter()
        .enumerate()
        .any(|(k, &(r, s))| !set.contains_row(k) && r.abs() <= ORACLE_TOL * s)
}

/// True iff [`brute_force_solve`] finds a KKT point.
pub fn is_feasible(problem: &MpQpProblem, theta: &ParameterPoint) -> bool {
    brute_force_solve(problem, theta).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemData;

    #[test]
    fn screening_returns_the_unscreened_set() {
        let p = crate::fixtures::transport_2d();
        for (t1, t2) in [
            (20.0, 20.0),
            (340.0, 10.0),
            (300.0, 600.0),
            (500.0, 449.0),
            (0.0, 0.0),
        ] {
            let theta = crate::fixtures::transport_theta(&p, t1, t2);
            let screen = Screen::new(&p, &theta).unwrap();
            let (a, b) = (
                enumerate(&p, &theta, Some(&screen)).unwrap(),
                enumerate(&p, &theta, None).unwrap(),
            );
            assert_eq!(a, b);
        }
        let far = crate::fixtures::transport_theta(&p, 900.0, 900.0);
        assert!(matches!(
            enumerate(&p, &far, Screen::new(&p, &far).as_ref()),
            Err(Error::Infeasible)
        ));
    }

    #[test]
    fn screening_agrees_on_random_problems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let (n, m2) = (rng.random_range(2..6), rng.random_range(1..9));
            let mut g = |r: usize, c: usize| -> Vec<Vec<f64>> {
                (0..r)
                    .map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect()
            };
            let l = g(n, n);
            let a_c = g(m2, n);
            let q = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            (0..n).map(|k| l[i][k] * l[j][k]).sum::<f64>()
                                + if i == j { 0.3 } else { 0.0 }
                        })
                        .collect()
                })
                .collect();
            let c = g(1, n).remove(0);
            let b_c = (0..m2).map(|_| rng.random_range(-1.0..0.5)).collect();
            let p = MpQpProblem::new(ProblemData {
                q,
                c,
                c0: 0.0,
                a_e: vec![],
                b_e: vec![],
                a_c,
                b_c,
                groups: vec![],
            })
            .unwrap();
            let theta = ParameterPoint::from_stacked(
                &p,
                (0..p.d()).map(|_| rng.random_range(-0.5..0.5)).collect(),
            )
            .unwrap();
            let screened = enumerate(&p, &theta, Screen::new(&p, &theta).as_ref());
            let plain = enumerate(&p, &theta, None);
            assert_eq!(screened.ok(), plain.ok());
        }
    }

    #[test]
    fn subsets_in_lexicographic_order() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |m| {
            seen.push(ActiveSet::from_mask(m).to_string());
            false
        });
        assert_eq!(seen, ["{1,2}", "{1,3}", "{1,4}", "{2,3}", "{2,4}", "{3,4}"]);
        let mut empty = 0;
        for_each_subset(3, 0, |_| {
            empty += 1;
            false
        });
        assert_eq!(empty, 1);
        let mut all = 0;
        for_each_subset(3, 3, |_| {
            all += 1;
            false
        });
        assert_eq!(all, 1);
    }

    #[test]
    fn inactive_bound_gives_empty_set() {
        let p = MpQpProblem::new(ProblemData {
            q: vec![vec![1.0]],
            c: vec![0.0],
            a_e: vec![vec![1.0]],
            b_e: vec![0.0],
            a_c: vec![vec![-1.0]],
            b_c: vec![-10.0],
            ..Default::default()
        })
        .unwrap();
        let theta = ParameterPoint::from_parts(&p, &[0.0], &[2.0], &[0.0]).unwrap();
        let s = brute_force_solve(&p, &theta).unwrap();
        assert!(s.active_set.is_empty());
        assert!((s.solution.x[0] - 2.0).abs() < 1e-14);
        assert!(!s.degenerate);
        let beyond = ParameterPoint::from_parts(&p, &[0.0], &[12.0], &[0.0]).unwrap();
        assert!(matches!(
            brute_force_solve(&p, &beyond),
            Err(Error::Infeasible)
        ));
        assert!(!is_feasible(&p, &beyond));
    }

    #[test]
    fn guard_on_large_m2() {
        let m2 = ORACLE_MAX_M2 + 1;
        let p = MpQpProblem::new(ProblemData {
            q: vec![vec![1.0]],
            c: vec![0.0],
            a_c: vec![vec![1.0]; m2],
            b_c: vec![0.0; m2],
            ..Default::default()
        })
        .unwrap();
        let r = brute_force_solve(&p, &ParameterPoint::zeros(&p));
        assert!(matches!(r, Err(Error::OracleTooLarge { .. })));
    }
}
