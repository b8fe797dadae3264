//! Jacobian assembly and the linear solves behind every region's affine map.

use crate::error::{Error, Result};
use crate::linalg::{CompensatedSum, LuFactors, Matrix};
use crate::problem::{ActiveSet, MpQpProblem, ParameterPoint, PrimalDualSolution, RegionSlopes};
use crate::real::Real;

/// Factorized base Jacobian `J`.
#[derive(Clone, Debug)]
pub struct JacobianFactors<T> {
    lu: LuFactors<T>,
    jacobian: Matrix<T>,
}

impl<T: Real> JacobianFactors<T> {
    /// Solves `J z = rhs` with one step of iterative refinement.
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut z = self.lu.solve(rhs);
        let r: Vec<T> = (0..rhs.len())
            .map(|i| {
                let mut acc = CompensatedSum::new();
                acc.add(rhs[i]);
                for (&a, &zk) in self.jacobian.row(i).iter().zip(&z) {
                    if a != T::zero() {
                        acc.add_product(-a, zk);
                    }
                }
                acc.value()
            })
            .collect();
        for (zi, d) in z.iter_mut().zip(self.lu.solve(&r)) {
            *zi = *zi + d;
        }
        z
    }

    /// Explicit inverse, refined once against the assembled Jacobian.
    pub fn inverse(&self) -> Matrix<T> {
        self.lu.refined_inverse(&self.jacobian)
    }

    pub fn dim(&self) -> usize {
        self.lu.dim()
    }
}

/// `J = [[2Q, −A_eᵀ], [−A_e, 0]]`
pub fn assemble_base_jacobian<T: Real>(problem: &MpQpProblem) -> Matrix<T> {
    assemble_active_jacobian(problem, &ActiveSet::empty())
}

/// `J_B = [[2Q, −A_eᵀ, −A_Bᵀ], [−A_e, 0, 0], [−A_B, 0, 0]]`
pub fn assemble_active_jacobian<T: Real>(problem: &MpQpProblem, set: &ActiveSet) -> Matrix<T> {
    let (n, m1) = (problem.n(), problem.m1());
    let size = n + m1 + set.len();
    let mut j = Matrix::zeros(size, size);
    for r in 0..n {
        for c in 0..n {
            j[(r, c)] = T::of(2.0 * problem.q()[(r, c)]);
        }
    }
    let constraint_rows = (0..m1)
        .map(|i| problem.a_e().row(i))
        .chain(set.rows().map(|k| problem.a_c().row(k)));
    for (i, row) in constraint_rows.enumerate() {
        for (c, &a) in row.iter().enumerate() {
            j[(n + i, c)] = T::of(-a);
            j[(c, n + i)] = T::of(-a);
        }
    }
    j
}

pub fn factorize<T: Real>(j: &Matrix<T>) -> Result<JacobianFactors<T>> {
    Ok(JacobianFactors {
        lu: LuFactors::factorize(j)?,
        jacobian: j.clone(),
    })
}

/// Right-hand side `[−C − θ_c + A_Cᵀμ; −b_e − θ_e]` of the solver function.
pub fn solver_rhs<T: Real>(problem: &MpQpProblem, mu: &[T], theta: &ParameterPoint) -> Vec<T> {
    let mut rhs: Vec<T> = (0..problem.n())
        .map(|i| {
            let mut acc = CompensatedSum::new();
            acc.add(T::of(-problem.c()[i]));
            acc.add(T::of(-theta.theta_c()[i]));
            for (k, &m) in mu.iter().enumerate() {
                let a = problem.a_c()[(k, i)];
                if a != 0.0 && m != T::zero() {
                    acc.add_product(T::of(a), m);
                }
            }
            acc.value()
        })
        .collect();
    rhs.extend(
        problem
            .b_e()
            .iter()
            .zip(theta.theta_e())
            .map(|(b, t)| T::of(-b) - T::of(*t)),
    );
    rhs
}

/// Solves for `(x, λ)` given the inequality multipliers.
pub fn solve_with_mu<T: Real>(
    problem: &MpQpProblem,
    factors: &JacobianFactors<T>,
    mu: &[T],
    theta: &ParameterPoint,
) -> Result<(Vec<T>, Vec<T>)> {
    theta.check(problem)?;
    if mu.len() != problem.m2() || factors.dim() != problem.n() + problem.m1() {
        return Err(Error::Dimension(
            "mu or factors do not match the problem".into(),
        ));
    }
    let mut z = factors.solve(&solver_rhs(problem, mu, theta));
    let lambda = z.split_off(problem.n());
    Ok((z, lambda))
}

fn factor_active<T: Real>(problem: &MpQpProblem, set: &ActiveSet) -> Result<JacobianFactors<T>> {
    if set.indices().last().is_some_and(|&k| k > problem.m2()) {
        return Err(Error::Dimension(format!(
            "active set {set} exceeds m2 = {}",
            problem.m2()
        )));
    }
    factorize(&assemble_active_jacobian(problem, set)).map_err(|_| Error::SingularActiveJacobian {
        active_set: set.clone(),
    })
}

/// Solves the KKT equality system with the rows of `set` held active.
pub fn solve_active_set<T: Real>(
    problem: &MpQpProblem,
    set: &ActiveSet,
    theta: &ParameterPoint,
) -> Result<PrimalDualSolution<T>> {
    theta.check(problem)?;
    let lu = factor_active::<T>(problem, set)?;
    let z = theta.model_input::<T>(problem);
    let (n, m1) = (problem.n(), problem.m1());
    let mut rhs: Vec<T> = z[..n + m1].to_vec();
    rhs.extend(set.rows().map(|k| z[problem.ineq_column(k)]));
    let sol = lu.solve(&rhs);
    let x = sol[..n].to_vec();
    let lambda = sol[n..n + m1].to_vec();
    let mut mu = vec![T::zero(); problem.m2()];
    for (i, k) in set.rows().enumerate() {
        mu[k] = sol[n + m1 + i];
    }
    let objective = objective_value(problem, &x, theta);
    Ok(PrimalDualSolution {
        x,
        lambda,
        mu,
        objective,
    })
}

/// Zero-padded slopes of `(x, λ, μ)` with respect to `−B − θ` for one active set.
pub fn region_slopes<T: Real>(problem: &MpQpProblem, set: &ActiveSet) -> Result<RegionSlopes<T>> {
    let inv = factor_active::<T>(problem, set)?.inverse();
    let (n, m1, m2, d) = (problem.n(), problem.m1(), problem.m2(), problem.d());
    let columns: Vec<usize> = (0..n + m1)
        .chain(set.rows().map(|k| problem.ineq_column(k)))
        .collect();
    let scatter = |first_row: usize, rows: usize| {
        let mut g = Matrix::zeros(rows, d);
        for r in 0..rows {
            for (i, &col) in columns.iter().enumerate() {
                g[(r, col)] = inv[(first_row + r, i)];
            }
        }
        g
    };
    let grad_x = scatter(0, n);
    let grad_lambda = scatter(n, m1);
    let mut grad_mu = Matrix::zeros(m2, d);
    for (i, k) in set.rows().enumerate() {
        for (j, &col) in columns.iter().enumerate() {
            grad_mu[(k, col)] = inv[(n + m1 + i, j)];
        }
    }
    Ok(RegionSlopes {
        grad_x,
        grad_lambda,
        grad_mu,
        active_set: set.clone(),
    })
}

/// Partial derivatives of the Lagrangian, evaluated with compensated sums and without clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianGradients<T = f64> {
    pub dl_dx: Vec<T>,
    pub dl_dlambda: Vec<T>,
    pub dl_dmu: Vec<T>,
}

pub fn lagrangian_gradients<T: Real>(
    problem: &MpQpProblem,
    sol: &PrimalDualSolution<T>,
    theta: &ParameterPoint,
) -> LagrangianGradients<T> {
    let x = &sol.x;
    let dl_dx = (0..problem.n())
        .map(|i| {
            let mut acc = CompensatedSum::new();
            acc.add(T::of(problem.c()[i]));
            acc.add(T::of(theta.theta_c()[i]));
            for (&q, &xj) in problem.q().row(i).iter().zip(x) {
                acc.add_product(T::of(2.0 * q), xj);
            }
            for (k, &l) in sol.lambda.iter().enumerate() {
                acc.add_product(T::of(-problem.a_e()[(k, i)]), l);
            }
            for (k, &m) in sol.mu.iter().enumerate() {
                acc.add_product(T::of(-problem.a_c()[(k, i)]), m);
            }
            acc.value()
        })
        .collect();
    let residual = |a: &Matrix<f64>, b: &[f64], t: &[f64]| -> Vec<T> {
        (0..a.rows())
            .map(|k| {
                let mut acc = CompensatedSum::new();
                acc.add(T::of(b[k]));
                acc.add(T::of(t[k]));
                for (&a, &xj) in a.row(k).iter().zip(x) {
                    acc.add_product(T::of(-a), xj);
                }
                acc.value()
            })
            .collect()
    };
    let dl_dlambda = residual(problem.a_e(), problem.b_e(), theta.theta_e());
    let dl_dmu = residual(problem.a_c(), problem.b_c(), theta.theta_ineq());
    LagrangianGradients {
        dl_dx,
        dl_dlambda,
        dl_dmu,
    }
}

/// `xᵀQx + (C + θ_c)ᵀx + C0`
pub fn objective_value<T: Real>(problem: &MpQpProblem, x: &[T], theta: &ParameterPoint) -> T {
    let mut z = T::of(problem.c0());
    for i in 0..problem.n() {
        let qx = problem
            .q()
            .row(i)
            .iter()
            .zip(x)
            .fold(T::zero(), |s, (&q, &xj)| s + T::of(q) * xj);
        z = z + x[i] * qx + T::of(problem.c()[i] + theta.theta_c()[i]) * x[i];
    }
    z
}
