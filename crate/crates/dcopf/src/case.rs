//! Power network description.
//!
//! Case files are JSON:
//!
//! | field | meaning |
//! |---|---|
//! | `name` | free text |
//! | `base_mva` | power base used to turn per-unit susceptances into MW/rad |
//! | `buses` | `[{ "id", "demand" }]`, demand in MW |
//! | `generators` | `[{ "bus", "cost_q", "cost_c", "p_min", "p_max" }]`, cost `cost_q·P² + cost_c·P` with P in MW |
//! | `lines` | `[{ "from", "to", "susceptance", "limit" }]`, susceptance per unit, optional limit in MW |
//! | `slack_bus` | bus id whose angle is fixed to zero |
//! | `renewable_buses` | optional bus ids hosting nondispatchable generation |

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use cfqp_core::linalg::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CaseError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    pub demand: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: u32,
    pub cost_q: f64,
    pub cost_c: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: u32,
    pub to: u32,
    pub susceptance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCase {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub lines: Vec<Line>,
    pub slack_bus: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub renewable_buses: Vec<u32>,
}

impl PowerCase {
    pub fn from_json(text: &str) -> Result<Self> {
        let case: PowerCase = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    /// Position of a bus id in `buses`.
    pub fn bus_index(&self, id: u32) -> Result<usize> {
        self.buses
            .iter()
            .position(|b| b.id == id)
            .ok_or(CaseError::UnknownBus(id))
    }

    pub fn slack_index(&self) -> Result<usize> {
        self.bus_index(self.slack_bus)
            .map_err(|_| CaseError::MissingSlack(self.slack_bus))
    }

    pub fn demands(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.demand).collect()
    }

    pub fn total_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum()
    }

    /// Line susceptance in MW per radian.
    pub fn line_admittance(&self, line: &Line) -> f64 {
        self.base_mva * line.susceptance
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0 && self.base_mva.is_finite()) {
            return Err(CaseError::InvalidLimits(format!(
                "base_mva must be positive, got {}",
                self.base_mva
            )));
        }
        let mut seen = HashMap::new();
        for b in &self.buses {
            if seen.insert(b.id, ()).is_some() {
                return Err(CaseError::DuplicateBus(b.id));
            }
            if !b.demand.is_finite() {
                return Err(CaseError::Parse {
                    line: 0,
                    message: format!("bus {} has a non-finite demand", b.id),
                });
            }
        }
        self.slack_index()?;
        if self.generators.is_empty() {
            return Err(CaseError::NoGenerators);
        }
        for (index, g) in self.generators.iter().enumerate() {
            self.bus_index(g.bus)?;
            let reason = if !(g.cost_q > 0.0) {
                Some(format!("quadratic cost must be positive, got {}", g.cost_q))
            } else if !(g.p_min <= g.p_max)
                || !g.p_min.is_finite()
                || !g.p_max.is_finite()
                || !g.cost_c.is_finite()
            {
                Some(format!(
                    "limits [{}, {}] are not an interval",
                    g.p_min, g.p_max
                ))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(CaseError::InvalidGenerator { index, reason });
            }
        }
        for (index, l) in self.lines.iter().enumerate() {
            let (f, t) = (self.bus_index(l.from)?, self.bus_index(l.to)?);
            let reason = if f == t {
                Some("line connects a bus to itself".to_string())
            } else if !(l.susceptance > 0.0 && l.susceptance.is_finite()) {
                Some(format!(
                    "susceptance must be positive, got {}",
                    l.susceptance
                ))
            } else if l.limit.is_some_and(|v| !(v > 0.0)) {
                Some(format!("flow limit must be positive, got {:?}", l.limit))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(CaseError::InvalidLine { index, reason });
            }
        }
        for &r in &self.renewable_buses {
            self.bus_index(r)?;
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            let (f, t) = (self.bus_index(l.from)?, self.bus_index(l.to)?);
            adj[f].push(t);
            adj[t].push(f);
        }
        let start = self.slack_index()?;
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|&s| !s) {
            Some(i) => Err(CaseError::DisconnectedNetwork {
                bus: self.buses[i].id,
            }),
            None => Ok(()),
        }
    }

    /// Bus susceptance matrix in MW/rad, ordered as `buses`.
    pub fn susceptance_matrix(&self) -> Result<Matrix<f64>> {
        let n = self.buses.len();
        let mut b = Matrix::zeros(n, n);
        for l in &self.lines {
            let (f, t) = (self.bus_index(l.from)?, self.bus_index(l.to)?);
            let y = self.line_admittance(l);
            b[(f, f)] += y;
            b[(t, t)] += y;
            b[(f, t)] -= y;
            b[(t, f)] -= y;
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> PowerCase {
        PowerCase {
            name: "two".into(),
            base_mva: 100.0,
            buses: vec![
                Bus { id: 1, demand: 0.0 },
                Bus {
                    id: 2,
                    demand: 50.0,
                },
            ],
            generators: vec![Generator {
                bus: 1,
                cost_q: 0.01,
                cost_c: 10.0,
                p_min: 0.0,
                p_max: 100.0,
            }],
            lines: vec![Line {
                from: 1,
                to: 2,
                susceptance: 10.0,
                limit: None,
            }],
            slack_bus: 1,
            renewable_buses: vec![],
        }
    }

    #[test]
    fn susceptance_rows_sum_to_zero() {
        let b = two_bus().susceptance_matrix().unwrap();
        assert_eq!(b[(0, 0)], 1000.0);
        for i in 0..2 {
            assert_eq!(b.row(i).iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn missing_slack() {
        let mut c = two_bus();
        c.slack_bus = 9;
        assert!(matches!(c.validate(), Err(CaseError::MissingSlack(9))));
    }

    #[test]
    fn disconnected() {
        let mut c = two_bus();
        c.buses.push(Bus { id: 3, demand: 1.0 });
        assert!(matches!(
            c.validate(),
            Err(CaseError::DisconnectedNetwork { bus: 3 })
        ));
    }

    #[test]
    fn inverted_limits() {
        let mut c = two_bus();
        c.generators[0].p_min = 200.0;
        assert!(matches!(
            c.validate(),
            Err(CaseError::InvalidGenerator { index: 0, .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let c = two_bus();
        assert_eq!(PowerCase::from_json(&c.to_json()).unwrap(), c);
    }
}
