//! The closed-form solver network.
//!
//! The shadow-price part stacks one candidate `μ` per region (`h_i = W0_i z`,
//! `z = −B − θ`), combines each region with its discovery parent through the
//! incidence layer, and sums the rectified differences with the direction
//! signs:
//!
//! ```text
//! μ = ReLU(h_root) + Σ_j  s_j ⊙ ReLU(s_j ⊙ (h_j − h_parent(j)))
//! ```
//!
//! With [`RootTerm::Linear`] the root enters as `h_root` without the ReLU.
//!
//! A zero sign leaves that neuron out of the region's term. Expansion uses it
//! when the existing network already bends at the new facet, as happens when a
//! multiplier that earlier terms rectify is dropped.
//!
//! The solution part then maps `μ` to `(x, λ)` through the base inverse Jacobian.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_accurate, norm_inf, CompensatedSum, Matrix};
use crate::problem::{ActiveSet, MpQpProblem, ParameterPoint, PrimalDualSolution, RegionSlopes};
use crate::real::{cast_vec, Precision, Real};
use crate::solve::{assemble_base_jacobian, factorize, region_slopes};

/// How the sign of a new incidence column is chosen from the probe point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignRule {
    /// One sign per output neuron, taken from that entry of the slope difference.
    #[default]
    PerEntry,
    /// A single sign per region, taken from the largest-magnitude entry.
    Block,
}

/// Activation of the root region's term in the shadow-price sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootTerm {
    /// `ReLU(h_root)`.
    #[default]
    Rectified,
    /// `h_root` unclipped; every bend comes from the region terms.
    ///
    /// Needed when a multiplier active at the root is dropped further down
    /// the tree, where the clipped root would bend inside a later region.
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionEntry<T = f64> {
    pub id: usize,
    pub active_set: ActiveSet,
    pub slopes: RegionSlopes<T>,
    pub parent: Option<usize>,
    pub witness: ParameterPoint,
}

/// One nonzero block of the incidence matrix: a diagonal of `±1` or `0` over the `m2` neurons.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidenceEntry {
    pub row: usize,
    pub col: usize,
    pub signs: Vec<i8>,
}

/// Problem coefficients in the model's working precision.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Coefficients<T> {
    pub neg_b: Vec<T>,
    pub q: Matrix<T>,
    pub c: Vec<T>,
    pub c0: T,
    pub a_c: Matrix<T>,
    pub jacobian: Matrix<T>,
}

impl<T: Real> Coefficients<T> {
    pub fn new(problem: &MpQpProblem) -> Self {
        Coefficients {
            neg_b: problem.stacked_b().iter().map(|b| T::of(-b)).collect(),
            q: problem.q().cast(),
            c: cast_vec(problem.c()),
            c0: T::of(problem.c0()),
            a_c: problem.a_c().cast(),
            jacobian: assemble_base_jacobian(problem),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormModel<T: Real = f64> {
    pub(crate) digest: String,
    pub(crate) dims: (usize, usize, usize),
    pub(crate) sign_rule: SignRule,
    pub(crate) root_term: RootTerm,
    pub(crate) regions: Vec<RegionEntry<T>>,
    pub(crate) direction: Vec<Vec<i8>>,
    pub(crate) base_inverse: Matrix<T>,
    pub(crate) coef: Coefficients<T>,
}

/// One-region model rooted at `set`, the active set at `theta0`.
pub fn init_model<T: Real>(
    problem: &MpQpProblem,
    set: &ActiveSet,
    theta0: &ParameterPoint,
) -> Result<ClosedFormModel<T>> {
    ClosedFormModel::new(problem, set, theta0, SignRule::default())
}

impl<T: Real> ClosedFormModel<T> {
    pub fn new(
        problem: &MpQpProblem,
        set: &ActiveSet,
        theta0: &ParameterPoint,
        sign_rule: SignRule,
    ) -> Result<Self> {
        theta0.check(problem)?;
        let base_inverse = factorize(&assemble_base_jacobian::<T>(problem))?.inverse();
        let slopes = region_slopes::<T>(problem, set)?;
        Ok(ClosedFormModel {
            digest: problem.digest().to_string(),
            dims: (problem.n(), problem.m1(), problem.m2()),
            sign_rule,
            root_term: RootTerm::default(),
            regions: vec![RegionEntry {
                id: 0,
                active_set: set.clone(),
                slopes,
                parent: None,
                witness: theta0.clone(),
            }],
            direction: vec![vec![1; problem.m2()]],
            base_inverse,
            coef: Coefficients::new(problem),
        })
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn sign_rule(&self) -> SignRule {
        self.sign_rule
    }

    pub fn root_term(&self) -> RootTerm {
        self.root_term
    }

    /// Switches the root activation; only meaningful before regions are added.
    pub fn with_root_term(mut self, root_term: RootTerm) -> Self {
        self.root_term = root_term;
        self
    }

    pub fn regions(&self) -> &[RegionEntry<T>] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn base_inverse(&self) -> &Matrix<T> {
        &self.base_inverse
    }

    /// First-layer block of region `i` (its zero-padded `μ` slopes).
    pub fn w0_block(&self, i: usize) -> &Matrix<T> {
        &self.regions[i].slopes.grad_mu
    }

    /// Direction signs, one row of `m2` entries per region.
    pub fn direction(&self) -> &[Vec<i8>] {
        &self.direction
    }

    /// The direction entry of region `j` when all its neurons share one sign.
    pub fn uniform_direction(&self, j: usize) -> Option<i8> {
        let row = &self.direction[j];
        match row.first() {
            Some(&s) if row.iter().all(|&v| v == s) => Some(s),
            None => Some(1),
            _ => None,
        }
    }

    /// Nonzero incidence blocks as `(row, col, signs)` triplets, column by column.
    pub fn incidence(&self) -> Vec<IncidenceEntry> {
        let mut out = Vec::with_capacity(2 * self.regions.len());
        for r in &self.regions {
            let s = &self.direction[r.id];
            if let Some(p) = r.parent {
                out.push(IncidenceEntry {
                    row: p,
                    col: r.id,
                    signs: s.iter().map(|v| -v).collect(),
                });
            }
            out.push(IncidenceEntry {
                row: r.id,
                col: r.id,
                signs: s.clone(),
            });
        }
        out
    }

    pub fn find_region(&self, set: &ActiveSet) -> Option<usize> {
        self.regions.iter().position(|r| &r.active_set == set)
    }

    pub fn check_problem(&self, problem: &MpQpProblem) -> Result<()> {
        if problem.digest() != self.digest {
            return Err(Error::DigestMismatch {
                model: self.digest.clone(),
                problem: problem.digest().to_string(),
            });
        }
        Ok(())
    }

    /// Model input `−B − θ` as `hi + lo` pairs, exact up to the width of two words.
    fn input(&self, theta: &ParameterPoint) -> Input<T> {
        let mut z = Input::default();
        self.fill_input(theta, &mut z);
        z
    }

    fn fill_input(&self, theta: &ParameterPoint, z: &mut Input<T>) {
        z.hi.clear();
        z.lo.clear();
        for (&b, &t) in self.coef.neg_b.iter().zip(theta.stacked()) {
            let mut acc = CompensatedSum::new();
            acc.add(b);
            acc.add(-T::of(t));
            let (h, l) = acc.parts();
            z.hi.push(h);
            z.lo.push(l);
        }
    }

    fn candidate(&self, i: usize, z: &Input<T>) -> Vec<(T, T)> {
        let mut h = vec![(T::zero(), T::zero()); self.dims.2];
        self.fill_candidate(i, z, &mut h);
        h
    }

    fn fill_candidate(&self, i: usize, z: &Input<T>, out: &mut [(T, T)]) {
        let r = &self.regions[i];
        out.fill((T::zero(), T::zero()));
        for k in r.active_set.rows() {
            out[k] = z.dot(r.slopes.grad_mu.row(k));
        }
    }

    /// All candidates, region after region, `m2` entries each.
    fn fill_candidates(&self, z: &Input<T>, h: &mut Vec<(T, T)>) {
        let m2 = self.dims.2;
        h.clear();
        h.resize(self.regions.len() * m2, (T::zero(), T::zero()));
        if m2 == 0 {
            return;
        }
        for (i, block) in h.chunks_mut(m2).enumerate() {
            self.fill_candidate(i, z, block);
        }
    }

    /// First-layer output: one candidate `μ` per region.
    pub fn candidates(&self, theta: &ParameterPoint) -> Vec<Vec<T>> {
        let z = self.input(theta);
        (0..self.regions.len())
            .map(|i| self.candidate(i, &z).into_iter().map(|p| p.0).collect())
            .collect()
    }

    fn combine(&self, h: &[(T, T)], acc: &mut Vec<CompensatedSum<T>>, mu: &mut Vec<(T, T)>) {
        let m2 = self.dims.2;
        acc.clear();
        acc.extend(h[..m2].iter().map(|&(hi, lo)| {
            let mut a = CompensatedSum::new();
            if self.root_term == RootTerm::Linear
                || hi > T::zero()
                || (hi == T::zero() && lo > T::zero())
            {
                a.add(hi);
                a.add(lo);
            }
            a
        }));
        for r in &self.regions[1..] {
            let p = r.parent.expect("non-root region has a parent");
            let (hj, hp) = (&h[r.id * m2..(r.id + 1) * m2], &h[p * m2..(p + 1) * m2]);
            for (e, a) in acc.iter_mut().enumerate() {
                let (j, q) = (hj[e], hp[e]);
                if j == q {
                    continue;
                }
                let diff = (j.0 - q.0) + (j.1 - q.1);
                let active = match self.direction[r.id][e] {
                    0 => false,
                    s if s > 0 => diff > T::zero(),
                    _ => diff < T::zero(),
                };
                if active {
                    a.add(j.0);
                    a.add(j.1);
                    a.add(-q.0);
                    a.add(-q.1);
                }
            }
        }
        mu.clear();
        mu.extend(acc.iter().map(|a| a.parts()));
    }

    pub fn forward_mu(&self, theta: &ParameterPoint) -> Vec<T> {
        self.mu_parts(theta).into_iter().map(|p| p.0).collect()
    }

    fn mu_parts(&self, theta: &ParameterPoint) -> Vec<(T, T)> {
        let mut s = Scratch::default();
        self.fill_mu(theta, &mut s);
        s.mu
    }

    fn fill_mu(&self, theta: &ParameterPoint, s: &mut Scratch<T>) {
        self.fill_input(theta, &mut s.z);
        self.fill_candidates(&s.z, &mut s.h);
        self.combine(&s.h, &mut s.acc, &mut s.mu);
    }

    /// `(x, λ)` from the solver function given `μ`.
    pub fn solve_with_mu(&self, mu: &[T], theta: &ParameterPoint) -> (Vec<T>, Vec<T>) {
        let parts: Vec<(T, T)> = mu.iter().map(|&m| (m, T::zero())).collect();
        self.solve_with_mu_parts(&parts, theta, &mut Scratch::default())
    }

    fn solve_with_mu_parts(
        &self,
        mu: &[(T, T)],
        theta: &ParameterPoint,
        s: &mut Scratch<T>,
    ) -> (Vec<T>, Vec<T>) {
        let (n, m1, _) = self.dims;
        s.acc.clear();
        s.acc.extend(
            self.coef.neg_b[..n + m1]
                .iter()
                .zip(theta.theta_c().iter().chain(theta.theta_e()))
                .map(|(&b, &t)| {
                    let mut a = CompensatedSum::new();
                    a.add(b);
                    a.add(-T::of(t));
                    a
                }),
        );
        for (k, &(hi, lo)) in mu.iter().enumerate() {
            if hi == T::zero() && lo == T::zero() {
                continue;
            }
            for (r, &a) in s.acc.iter_mut().zip(self.coef.a_c.row(k)) {
                if a != T::zero() {
                    r.add_product(a, hi);
                    r.add_product(a, lo);
                }
            }
        }
        let rhs = &mut s.rhs;
        rhs.hi.clear();
        rhs.lo.clear();
        for a in &s.acc {
            let (h, l) = a.parts();
            rhs.hi.push(h);
            rhs.lo.push(l);
        }
        let mut x: Vec<T> = (0..n + m1)
            .map(|i| {
                self.base_inverse
                    .row(i)
                    .iter()
                    .zip(rhs.hi.iter().zip(&rhs.lo))
                    .fold(T::zero(), |a, (&w, (&h, &l))| a + w * (h + l))
            })
            .collect();
        let res = &mut s.res;
        res.hi.clear();
        res.lo.clear();
        for i in 0..n + m1 {
            let mut acc = CompensatedSum::new();
            acc.add(rhs.hi[i]);
            acc.add(rhs.lo[i]);
            for (&j, &zk) in self.coef.jacobian.row(i).iter().zip(&x) {
                if j != T::zero() {
                    acc.add_product(-j, zk);
                }
            }
            res.hi.push(acc.value());
            res.lo.push(T::zero());
        }
        for (i, xi) in x.iter_mut().enumerate() {
            let d = self
                .base_inverse
                .row(i)
                .iter()
                .zip(&res.hi)
                .fold(T::zero(), |a, (&w, &r)| a + w * r);
            *xi = *xi + d;
        }
        let lambda = x[n..].to_vec();
        x.truncate(n);
        (x, lambda)
    }

    pub fn objective(&self, x: &[T], theta: &ParameterPoint) -> T {
        let mut z = self.coef.c0;
        for (i, &xi) in x.iter().enumerate() {
            let qx = dot_accurate(self.coef.q.row(i), x);
            z = z + xi * qx + (self.coef.c[i] + T::of(theta.theta_c()[i])) * xi;
        }
        z
    }

    pub fn forward(&self, theta: &ParameterPoint) -> PrimalDualSolution<T> {
        self.forward_with(theta, &mut Scratch::default())
    }

    fn forward_with(&self, theta: &ParameterPoint, s: &mut Scratch<T>) -> PrimalDualSolution<T> {
        self.fill_mu(theta, s);
        let mu = std::mem::take(&mut s.mu);
        let (x, lambda) = self.solve_with_mu_parts(&mu, theta, s);
        let objective = self.objective(&x, theta);
        let out = PrimalDualSolution {
            x,
            lambda,
            mu: mu.iter().map(|p| p.0).collect(),
            objective,
        };
        s.mu = mu;
        out
    }

    /// Forward pass that first checks the model belongs to `problem`.
    pub fn forward_checked(
        &self,
        problem: &MpQpProblem,
        theta: &ParameterPoint,
    ) -> Result<PrimalDualSolution<T>> {
        self.check_problem(problem)?;
        theta.check(problem)?;
        Ok(self.forward(theta))
    }

    /// Parallel [`forward`](Self::forward) over a batch, order preserved.
    pub fn batch_forward(&self, thetas: &[ParameterPoint]) -> Vec<PrimalDualSolution<T>> {
        thetas
            .par_iter()
            .map_init(Scratch::default, |s, t| self.forward_with(t, s))
            .collect()
    }

    /// Region whose candidate is closest to the network output at `theta`.
    pub fn classify(&self, theta: &ParameterPoint) -> usize {
        let mut s = Scratch::default();
        self.fill_mu(theta, &mut s);
        let m2 = self.dims.2;
        let mut best = (0, T::infinity());
        for i in 0..self.regions.len() {
            let hi = &s.h[i * m2..(i + 1) * m2];
            let d = hi.iter().zip(&s.mu).fold(T::zero(), |m, (&a, &b)| {
                m.max(((a.0 - b.0) + (a.1 - b.1)).abs())
            });
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// The affine solution of region `i` evaluated at `theta`, ignoring the rest of the network.
    pub fn region_solution(&self, i: usize, theta: &ParameterPoint) -> PrimalDualSolution<T> {
        let z = self.input(theta);
        let s = &self.regions[i].slopes;
        let eval = |m: &Matrix<T>| -> Vec<T> { (0..m.rows()).map(|r| z.dot(m.row(r)).0).collect() };
        let (x, lambda, mu) = (eval(&s.grad_x), eval(&s.grad_lambda), eval(&s.grad_mu));
        let objective = self.objective(&x, theta);
        PrimalDualSolution {
            x,
            lambda,
            mu,
            objective,
        }
    }

    /// Adds a region for `set` below `parent`, with signs read off at `probe`.
    ///
    /// Returns the new region id, or [`Error::DuplicateRegion`] leaving the model unchanged.
    pub fn expand(
        &mut self,
        problem: &MpQpProblem,
        parent: usize,
        set: &ActiveSet,
        probe: &ParameterPoint,
    ) -> Result<usize> {
        self.check_problem(problem)?;
        probe.check(problem)?;
        if parent >= self.regions.len() {
            return Err(Error::UnknownRegion(parent));
        }
        if self.find_region(set).is_some() {
            return Err(Error::DuplicateRegion(set.clone()));
        }
        let slopes = region_slopes::<T>(problem, set)?;
        let z = self.input(probe);
        let id = self.regions.len();
        let m2 = self.dims.2;
        let parent_h = self.candidate(parent, &z);
        let new_h: Vec<(T, T)> = (0..m2)
            .map(|k| {
                if set.contains_row(k) {
                    z.dot(slopes.grad_mu.row(k))
                } else {
                    (T::zero(), T::zero())
                }
            })
            .collect();
        let delta: Vec<T> = new_h
            .iter()
            .zip(&parent_h)
            .map(|(a, b)| (a.0 - b.0) + (a.1 - b.1))
            .collect();
        let mut signs = sign_vector(&delta, self.sign_rule);
        if self.sign_rule == SignRule::PerEntry {
            let current = self.mu_parts(probe);
            let floor = T::of(1e3) * T::epsilon();
            for (k, s) in signs.iter_mut().enumerate() {
                let (c, h) = (current[k], new_h[k]);
                let scale = T::one() + c.0.abs() + h.0.abs();
                let settled = ((c.0 - h.0) + (c.1 - h.1)).abs() <= floor * scale;
                if settled && delta[k].abs() > floor * scale {
                    *s = 0;
                }
            }
        }
        self.regions.push(RegionEntry {
            id,
            active_set: set.clone(),
            slopes,
            parent: Some(parent),
            witness: probe.clone(),
        });
        self.direction.push(signs);
        Ok(id)
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.regions.truncate(len.max(1));
        self.direction.truncate(len.max(1));
    }

    pub fn set_witness(&mut self, id: usize, theta: ParameterPoint) {
        self.regions[id].witness = theta;
    }

    /// Same network in another precision; weights are rounded once from their stored values.
    pub fn cast<U: Real>(&self) -> ClosedFormModel<U> {
        ClosedFormModel {
            digest: self.digest.clone(),
            dims: self.dims,
            sign_rule: self.sign_rule,
            root_term: self.root_term,
            regions: self
                .regions
                .iter()
                .map(|r| RegionEntry {
                    id: r.id,
                    active_set: r.active_set.clone(),
                    slopes: r.slopes.cast(),
                    parent: r.parent,
                    witness: r.witness.clone(),
                })
                .collect(),
            direction: self.direction.clone(),
            base_inverse: self.base_inverse.cast(),
            coef: Coefficients {
                neg_b: cast_vec(&self.coef.neg_b),
                q: self.coef.q.cast(),
                c: cast_vec(&self.coef.c),
                c0: U::of(self.coef.c0.to_f64_lossless()),
                a_c: self.coef.a_c.cast(),
                jacobian: self.coef.jacobian.cast(),
            },
        }
    }
}

/// A vector held as unevaluated `hi + lo` pairs.
#[derive(Default)]
struct Input<T> {
    hi: Vec<T>,
    lo: Vec<T>,
}

/// Buffers reused across forward passes.
#[derive(Default)]
struct Scratch<T> {
    z: Input<T>,
    h: Vec<(T, T)>,
    acc: Vec<CompensatedSum<T>>,
    mu: Vec<(T, T)>,
    rhs: Input<T>,
    res: Input<T>,
}

impl<T: Real> Input<T> {
    fn dot(&self, w: &[T]) -> (T, T) {
        let mut acc = CompensatedSum::new();
        for ((&a, &h), &l) in w.iter().zip(&self.hi).zip(&self.lo) {
            if a != T::zero() {
                acc.add_product(a, h);
                if l != T::zero() {
                    acc.add_product(a, l);
                }
            }
        }
        acc.parts()
    }
}

fn sign_vector<T: Real>(delta: &[T], rule: SignRule) -> Vec<i8> {
    let sign = |v: T| if v < T::zero() { -1 } else { 1 };
    match rule {
        SignRule::PerEntry => delta.iter().map(|&v| sign(v)).collect(),
        SignRule::Block => {
            let s = if norm_inf(delta) == T::zero() {
                1
            } else {
                let big =
                    delta
                        .iter()
                        .copied()
                        .fold(T::zero(), |m, v| if v.abs() > m.abs() { v } else { m });
                sign(big)
            };
            vec![s; delta.len()]
        }
    }
}
