//! KKT violation metric: per-condition vectors, their mean, and dataset tables.

use serde::{Deserialize, Serialize};

use crate::problem::{MpQpProblem, ParameterPoint, PrimalDualSolution};
use crate::real::Real;
use crate::solve::lagrangian_gradients;

/// Elementwise KKT violations of one solution.
///
/// `kkt3` is left unsquared; the other four vectors are squared residuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub kkt1: Vec<f64>,
    pub kkt2_eq: Vec<f64>,
    pub kkt2_ineq: Vec<f64>,
    pub kkt3: Vec<f64>,
    pub kkt4: Vec<f64>,
    pub scalar: f64,
}

impl KktReport {
    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.kkt1
            .iter()
            .chain(&self.kkt2_eq)
            .chain(&self.kkt2_ineq)
            .chain(&self.kkt3)
            .chain(&self.kkt4)
            .copied()
    }

    pub fn max_entry(&self) -> f64 {
        self.entries().fold(0.0, f64::max)
    }
}

/// Evaluates the KKT conditions in 64-bit arithmetic; 32-bit solutions are widened losslessly first.
pub fn kkt_report<T: Real>(
    problem: &MpQpProblem,
    sol: &PrimalDualSolution<T>,
    theta: &ParameterPoint,
) -> KktReport {
    let sol = sol.to_f64();
    let g = lagrangian_gradients(problem, &sol, theta);
    let kkt1: Vec<f64> = g.dl_dx.iter().map(|v| v * v).collect();
    let kkt2_eq: Vec<f64> = g.dl_dlambda.iter().map(|v| v * v).collect();
    let kkt2_ineq: Vec<f64> = g.dl_dmu.iter().map(|v| v.max(0.0).powi(2)).collect();
    let kkt3: Vec<f64> = sol.mu.iter().map(|m| (-m).max(0.0)).collect();
    let kkt4: Vec<f64> = sol
        .mu
        .iter()
        .zip(&g.dl_dmu)
        .map(|(m, r)| (m * r).powi(2))
        .collect();
    let count = kkt1.len() + kkt2_eq.len() + 3 * kkt3.len();
    let total: f64 = kkt1
        .iter()
        .chain(&kkt2_eq)
        .chain(&kkt2_ineq)
        .chain(&kkt3)
        .chain(&kkt4)
        .sum();
    KktReport {
        kkt1,
        kkt2_eq,
        kkt2_ineq,
        kkt3,
        kkt4,
        scalar: total / count as f64,
    }
}

/// Shorthand for the aggregate of [`kkt_report`].
pub fn kkt_scalar<T: Real>(
    problem: &MpQpProblem,
    sol: &PrimalDualSolution<T>,
    theta: &ParameterPoint,
) -> f64 {
    kkt_report(problem, sol, theta).scalar
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub worst: f64,
    #[serde(skip)]
    sum: f64,
    #[serde(skip)]
    count: usize,
}

impl ColumnStats {
    fn new(name: String) -> Self {
        ColumnStats {
            name,
            mean: 0.0,
            worst: 0.0,
            sum: 0.0,
            count: 0,
        }
    }

    fn push(&mut self, values: &[f64]) {
        for &v in values {
            self.sum += v;
            self.worst = self.worst.max(v);
        }
        self.count += values.len();
        self.mean = if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        };
    }

    fn merge(&mut self, other: &ColumnStats) {
        self.sum += other.sum;
        self.count += other.count;
        self.worst = self.worst.max(other.worst);
        self.mean = if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        };
    }

    pub fn entries(&self) -> usize {
        self.count
    }
}

/// Mean and worst entry per KKT column over a dataset.
///
/// KKT1 is split into one column per declared variable group (`KKT1-<name>`),
/// or a single `KKT1` column when the problem declares none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktTable {
    pub samples: usize,
    pub excluded: usize,
    pub columns: Vec<ColumnStats>,
    #[serde(skip)]
    groups: Vec<(usize, usize)>,
}

pub const KKT_TAIL_COLUMNS: [&str; 5] = ["KKT2(=)", "KKT2(≤)", "KKT3", "KKT4", "scalar"];

impl KktTable {
    pub fn new(problem: &MpQpProblem) -> Self {
        let mut columns = Vec::new();
        let mut groups = Vec::new();
        if problem.groups().is_empty() {
            columns.push(ColumnStats::new("KKT1".into()));
            groups.push((0, problem.n()));
        } else {
            for g in problem.groups() {
                columns.push(ColumnStats::new(format!("KKT1-{}", g.name)));
                groups.push((g.start, g.len));
            }
        }
        columns.extend(
            KKT_TAIL_COLUMNS
                .iter()
                .map(|c| ColumnStats::new((*c).into())),
        );
        KktTable {
            samples: 0,
            excluded: 0,
            columns,
            groups,
        }
    }

    pub fn push(&mut self, report: &KktReport) {
        let g = self.groups.len();
        for (i, &(start, len)) in self.groups.iter().enumerate() {
            self.columns[i].push(&report.kkt1[start..start + len]);
        }
        self.columns[g].push(&report.kkt2_eq);
        self.columns[g + 1].push(&report.kkt2_ineq);
        self.columns[g + 2].push(&report.kkt3);
        self.columns[g + 3].push(&report.kkt4);
        self.columns[g + 4].push(&[report.scalar]);
        self.samples += 1;
    }

    pub fn exclude(&mut self) {
        self.excluded += 1;
    }

    pub fn merge(mut self, other: KktTable) -> KktTable {
        for (a, b) in self.columns.iter_mut().zip(&other.columns) {
            a.merge(b);
        }
        self.samples += other.samples;
        self.excluded += other.excluded;
        self
    }

    pub fn column(&self, name: &str) -> Option<&ColumnStats> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Columns that hold per-condition entries (everything but `scalar`).
    pub fn condition_columns(&self) -> impl Iterator<Item = &ColumnStats> {
        self.columns.iter().filter(|c| c.name != "scalar")
    }
}
