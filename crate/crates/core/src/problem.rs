use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{row_rank, symmetric_eigenvalues, Matrix};
use crate::real::Real;

/// Largest `n` for which positive semidefiniteness of `Q` is checked by eigenvalues.
pub const PSD_CHECK_MAX_N: usize = 120;

/// A contiguous block of primal variables reported as one KKT1 column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Multiparametric QP
///
/// ```text
/// min  xᵀQx + (C + θ_c)ᵀx + C0
/// s.t. A_e x  = b_e + θ_e
///      A_C x >= b_C + θ_C
/// ```
///
/// The inequality rows are written so that their multipliers `μ` enter the
/// Lagrangian as `μᵀ(b_C + θ_C − A_C x)` with `μ >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpQpProblem {
    n: usize,
    m1: usize,
    m2: usize,
    q: Matrix<f64>,
    c: Vec<f64>,
    c0: f64,
    a_e: Matrix<f64>,
    b_e: Vec<f64>,
    a_c: Matrix<f64>,
    b_c: Vec<f64>,
    groups: Vec<VariableGroup>,
    digest: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    n: usize,
    m1: usize,
    m2: usize,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<f64>,
    #[serde(rename = "C0")]
    c0: f64,
    #[serde(rename = "A_e")]
    a_e: Vec<Vec<f64>>,
    b_e: Vec<f64>,
    #[serde(rename = "A_C")]
    a_c: Vec<Vec<f64>>,
    #[serde(rename = "b_C")]
    b_c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    groups: Vec<VariableGroup>,
}

/// Coefficients of an [`MpQpProblem`] before validation.
#[derive(Clone, Debug, Default)]
pub struct ProblemData {
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub c0: f64,
    pub a_e: Vec<Vec<f64>>,
    pub b_e: Vec<f64>,
    pub a_c: Vec<Vec<f64>>,
    pub b_c: Vec<f64>,
    pub groups: Vec<VariableGroup>,
}

fn matrix(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<Matrix<f64>> {
    if rows.len() != r {
        return Err(Error::InvalidProblem(format!(
            "{name} has {} rows, expected {r}",
            rows.len()
        )));
    }
    Matrix::from_rows(rows, c).map_err(|e| Error::InvalidProblem(format!("{name}: {e}")))
}

fn vector(name: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::InvalidProblem(format!(
            "{name} has {} entries, expected {len}",
            v.len()
        )));
    }
    Ok(())
}

impl MpQpProblem {
    pub fn new(data: ProblemData) -> Result<Self> {
        let n = data.c.len();
        let m1 = data.b_e.len();
        let m2 = data.b_c.len();
        Self::from_file(ProblemFile {
            n,
            m1,
            m2,
            q: data.q,
            c: data.c,
            c0: data.c0,
            a_e: data.a_e,
            b_e: data.b_e,
            a_c: data.a_c,
            b_c: data.b_c,
            groups: data.groups,
        })
    }

    fn from_file(f: ProblemFile) -> Result<Self> {
        let (n, m1, m2) = (f.n, f.m1, f.m2);
        if n == 0 {
            return Err(Error::InvalidProblem("n must be positive".into()));
        }
        let q = matrix("Q", &f.q, n, n)?;
        vector("C", &f.c, n)?;
        let a_e = matrix("A_e", &f.a_e, m1, n)?;
        vector("b_e", &f.b_e, m1)?;
        let a_c = matrix("A_C", &f.a_c, m2, n)?;
        vector("b_C", &f.b_c, m2)?;
        let all_finite = q
            .as_slice()
            .iter()
            .chain(&f.c)
            .chain(std::iter::once(&f.c0))
            .chain(a_e.as_slice())
            .chain(&f.b_e)
            .chain(a_c.as_slice())
            .chain(&f.b_c)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidProblem("coefficients must be finite".into()));
        }
        if !q.is_symmetric(1e-12) {
            return Err(Error::InvalidProblem("Q is not symmetric".into()));
        }
        if n <= PSD_CHECK_MAX_N {
            let ev = symmetric_eigenvalues(&q);
            let scale = q.max_abs().max(1.0);
            if ev.first().is_some_and(|&l| l < -1e-10 * scale) {
                return Err(Error::InvalidProblem(format!(
                    "Q is not positive semidefinite (eigenvalue {:.3e})",
                    ev[0]
                )));
            }
        }
        if m1 > 0 && row_rank(&a_e, 1e-10) < m1 {
            return Err(Error::InvalidProblem(
                "A_e does not have full row rank".into(),
            ));
        }
        for g in &f.groups {
            if g.len == 0 || g.start + g.len > n {
                return Err(Error::InvalidProblem(format!(
                    "variable group {} is out of range",
                    g.name
                )));
            }
        }
        let mut covered = vec![false; n];
        for g in &f.groups {
            for c in &mut covered[g.start..g.start + g.len] {
                if *c {
                    return Err(Error::InvalidProblem(format!(
                        "variable group {} overlaps another group",
                        g.name
                    )));
                }
                *c = true;
            }
        }
        let digest = {
            let canonical = ProblemFile {
                groups: Vec::new(),
                ..f.clone_shallow()
            };
            hex::encode(Sha256::digest(serde_json::to_vec(&canonical)?))
        };
        Ok(MpQpProblem {
            n,
            m1,
            m2,
            q,
            c: f.c,
            c0: f.c0,
            a_e,
            b_e: f.b_e,
            a_c,
            b_c: f.b_c,
            groups: f.groups,
            digest,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ProblemFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidProblem(e.to_string()))?;
        Self::from_file(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("problem serializes")
    }

    fn to_file(&self) -> ProblemFile {
        ProblemFile {
            n: self.n,
            m1: self.m1,
            m2: self.m2,
            q: self.q.to_rows(),
            c: self.c.clone(),
            c0: self.c0,
            a_e: self.a_e.to_rows(),
            b_e: self.b_e.clone(),
            a_c: self.a_c.to_rows(),
            b_c: self.b_c.clone(),
            groups: self.groups.clone(),
        }
    }

    pub fn with_groups(mut self, groups: Vec<VariableGroup>) -> Result<Self> {
        let mut f = self.to_file();
        f.groups = groups;
        self = Self::from_file(f)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    /// Stacked parameter dimension `n + m1 + m2`.
    pub fn d(&self) -> usize {
        self.n + self.m1 + self.m2
    }

    pub fn q(&self) -> &Matrix<f64> {
        &self.q
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn a_e(&self) -> &Matrix<f64> {
        &self.a_e
    }

    pub fn b_e(&self) -> &[f64] {
        &self.b_e
    }

    pub fn a_c(&self) -> &Matrix<f64> {
        &self.a_c
    }

    pub fn b_c(&self) -> &[f64] {
        &self.b_c
    }

    pub fn groups(&self) -> &[VariableGroup] {
        &self.groups
    }

    /// SHA-256 of the canonical coefficient JSON, hex encoded.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Stacked coefficient vector `B = [C, b_e, b_C]`.
    pub fn stacked_b(&self) -> Vec<f64> {
        self.c
            .iter()
            .chain(&self.b_e)
            .chain(&self.b_c)
            .copied()
            .collect()
    }

    /// Column offset of inequality row `k` (0-based) in the stacked layout.
    pub fn ineq_column(&self, k: usize) -> usize {
        self.n + self.m1 + k
    }

    pub fn eq_column(&self, k: usize) -> usize {
        self.n + k
    }
}

impl ProblemFile {
    fn clone_shallow(&self) -> ProblemFile {
        ProblemFile {
            n: self.n,
            m1: self.m1,
            m2: self.m2,
            q: self.q.clone(),
            c: self.c.clone(),
            c0: self.c0,
            a_e: self.a_e.clone(),
            b_e: self.b_e.clone(),
            a_c: self.a_c.clone(),
            b_c: self.b_c.clone(),
            groups: Vec::new(),
        }
    }
}

/// Parameter vector `θ = (θ_c, θ_e, θ_C)` stored in the stacked layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    n: usize,
    m1: usize,
    values: Vec<f64>,
}

impl ParameterPoint {
    pub fn zeros(problem: &MpQpProblem) -> Self {
        ParameterPoint {
            n: problem.n,
            m1: problem.m1,
            values: vec![0.0; problem.d()],
        }
    }

    pub fn from_parts(
        problem: &MpQpProblem,
        theta_c: &[f64],
        theta_e: &[f64],
        theta_ineq: &[f64],
    ) -> Result<Self> {
        if theta_c.len() != problem.n
            || theta_e.len() != problem.m1
            || theta_ineq.len() != problem.m2
        {
            return Err(Error::Dimension(format!(
                "theta parts ({}, {}, {}) do not match problem ({}, {}, {})",
                theta_c.len(),
                theta_e.len(),
                theta_ineq.len(),
                problem.n,
                problem.m1,
                problem.m2
            )));
        }
        let values = theta_c
            .iter()
            .chain(theta_e)
            .chain(theta_ineq)
            .copied()
            .collect();
        Ok(ParameterPoint {
            n: problem.n,
            m1: problem.m1,
            values,
        })
    }

    pub fn from_stacked(problem: &MpQpProblem, values: Vec<f64>) -> Result<Self> {
        if values.len() != problem.d() {
            return Err(Error::Dimension(format!(
                "theta has {} entries, expected {}",
                values.len(),
                problem.d()
            )));
        }
        Ok(ParameterPoint {
            n: problem.n,
            m1: problem.m1,
            values,
        })
    }

    pub fn theta_c(&self) -> &[f64] {
        &self.values[..self.n]
    }

    pub fn theta_e(&self) -> &[f64] {
        &self.values[self.n..self.n + self.m1]
    }

    pub fn theta_ineq(&self) -> &[f64] {
        &self.values[self.n + self.m1..]
    }

    pub fn stacked(&self) -> &[f64] {
        &self.values
    }

    pub fn stacked_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn matches(&self, problem: &MpQpProblem) -> bool {
        self.n == problem.n && self.m1 == problem.m1 && self.values.len() == problem.d()
    }

    pub fn check(&self, problem: &MpQpProblem) -> Result<()> {
        if self.matches(problem) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "theta of length {} does not fit problem with d = {}",
                self.values.len(),
                problem.d()
            )))
        }
    }

    /// Model input `−B − θ`.
    pub fn model_input<T: Real>(&self, problem: &MpQpProblem) -> Vec<T> {
        problem
            .stacked_b()
            .iter()
            .zip(&self.values)
            .map(|(b, t)| T::of(-b - t))
            .collect()
    }

    /// `self + t · delta`
    pub fn offset(&self, delta: &[f64], t: f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(delta)
            .map(|(a, d)| a + t * d)
            .collect();
        ParameterPoint {
            n: self.n,
            m1: self.m1,
            values,
        }
    }

    /// Point at fraction `w` of the way from `self` to `other`.
    pub fn lerp(&self, other: &ParameterPoint, w: f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + w * (b - a))
            .collect();
        ParameterPoint {
            n: self.n,
            m1: self.m1,
            values,
        }
    }
}

/// Sorted, duplicate-free set of inequality indices, 1-based.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn empty() -> Self {
        ActiveSet(Vec::new())
    }

    /// Validates and normalizes 1-based indices against `m2`.
    pub fn new(mut indices: Vec<usize>, m2: usize) -> Result<Self> {
        indices.sort_unstable();
        let before = indices.len();
        indices.dedup();
        if indices.len() != before {
            return Err(Error::InvalidProblem(
                "active set has duplicate indices".into(),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&k| k == 0 || k > m2) {
            return Err(Error::InvalidProblem(format!(
                "active set index {bad} outside 1..={m2}"
            )));
        }
        Ok(ActiveSet(indices))
    }

    pub fn from_mask(mask: u32) -> Self {
        ActiveSet(
            (0..32)
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| b as usize + 1)
                .collect(),
        )
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// 0-based row indices into `A_C`.
    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|k| k - 1)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Membership of a 0-based row.
    pub fn contains_row(&self, row: usize) -> bool {
        self.0.binary_search(&(row + 1)).is_ok()
    }

    pub fn with_row(&self, row: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&(row + 1)) {
            v.insert(pos, row + 1);
        }
        ActiveSet(v)
    }

    pub fn without_row(&self, row: usize) -> Self {
        ActiveSet(self.0.iter().copied().filter(|&k| k != row + 1).collect())
    }

    pub fn symmetric_difference(&self, other: &ActiveSet) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .0
            .iter()
            .filter(|k| !other.0.contains(k))
            .copied()
            .collect();
        out.extend(other.0.iter().filter(|k| !self.0.contains(k)));
        out.sort_unstable();
        out
    }
}

impl fmt::Display for ActiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "}}")
    }
}

/// Primal and dual solution with its objective value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualSolution<T = f64> {
    pub x: Vec<T>,
    pub lambda: Vec<T>,
    pub mu: Vec<T>,
    pub objective: T,
}

impl<T: Real> PrimalDualSolution<T> {
    pub fn to_f64(&self) -> PrimalDualSolution<f64> {
        PrimalDualSolution {
            x: self.x.iter().map(|v| v.to_f64_lossless()).collect(),
            lambda: self.lambda.iter().map(|v| v.to_f64_lossless()).collect(),
            mu: self.mu.iter().map(|v| v.to_f64_lossless()).collect(),
            objective: self.objective.to_f64_lossless(),
        }
    }
}

/// Affine maps from the model input `−B − θ` to `x`, `λ` and `μ` inside one region.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSlopes<T = f64> {
    pub grad_x: Matrix<T>,
    pub grad_lambda: Matrix<T>,
    pub grad_mu: Matrix<T>,
    pub active_set: ActiveSet,
}

impl<T: Real> RegionSlopes<T> {
    pub fn cast<U: Real>(&self) -> RegionSlopes<U> {
        RegionSlopes {
            grad_x: self.grad_x.cast(),
            grad_lambda: self.grad_lambda.cast(),
            grad_mu: self.grad_mu.cast(),
            active_set: self.active_set.clone(),
        }
    }

    /// Evaluates the region's affine solution at model input `z = −B − θ`.
    pub fn evaluate(&self, z: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        (
            self.grad_x.mul_vec(z),
            self.grad_lambda.mul_vec(z),
            self.grad_mu.mul_vec(z),
        )
    }
}
