//! Importer for MATPOWER-style `.m` case files.
//!
//! Reads `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch` and `mpc.gencost`
//! and keeps only what the DC dispatch model needs: real demand, generator
//! real-power limits and polynomial costs, branch reactance and `RATE_A`.
//! Out-of-service generators and branches are dropped; `RATE_A = 0` means no limit.

use crate::case::{Bus, Generator, Line, PowerCase};
use crate::error::{CaseError, Result};

const REF_BUS: f64 = 3.0;
const POLYNOMIAL: f64 = 2.0;

struct Table {
    rows: Vec<(usize, Vec<f64>)>,
}

impl Table {
    fn get(&self, row: usize, col: usize, name: &str) -> Result<f64> {
        let (line, values) = &self.rows[row];
        values.get(col).copied().ok_or_else(|| CaseError::Parse {
            line: *line,
            message: format!(
                "{name} row has {} columns, needs at least {}",
                values.len(),
                col + 1
            ),
        })
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('%').next().unwrap_or("")
}

fn parse_scalar(text: &str, key: &str) -> Result<f64> {
    for (i, line) in text.lines().enumerate() {
        let line = strip_comment(line);
        if let Some(rest) = line.trim().strip_prefix(key) {
            let value = rest
                .trim_start()
                .trim_start_matches('=')
                .trim()
                .trim_end_matches(';')
                .trim();
            return value.parse().map_err(|_| CaseError::Parse {
                line: i + 1,
                message: format!("cannot read {key} from {value:?}"),
            });
        }
    }
    Err(CaseError::Parse {
        line: 0,
        message: format!("{key} not found"),
    })
}

fn parse_table(text: &str, key: &str) -> Result<Option<Table>> {
    let mut rows = Vec::new();
    let mut inside = false;
    for (i, raw) in text.lines().enumerate() {
        let mut line = strip_comment(raw).trim();
        if !inside {
            let Some(rest) = line.strip_prefix(key) else {
                continue;
            };
            let Some(open) = rest.find('[') else { continue };
            if !rest[..open].trim().starts_with('=') {
                continue;
            }
            inside = true;
            line = &rest[open + 1..];
        }
        let (body, done) = match line.find(']') {
            Some(end) => (&line[..end], true),
            None => (line, false),
        };
        for chunk in body.split(';') {
            let values: Vec<f64> = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|_| CaseError::Parse {
                        line: i + 1,
                        message: format!("bad number {t:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            if !values.is_empty() {
                rows.push((i + 1, values));
            }
        }
        if done {
            return Ok(Some(Table { rows }));
        }
    }
    if inside {
        return Err(CaseError::Parse {
            line: text.lines().count(),
            message: format!("{key} is not closed"),
        });
    }
    Ok(None)
}

fn required(text: &str, key: &str) -> Result<Table> {
    parse_table(text, key)?.ok_or_else(|| CaseError::Parse {
        line: 0,
        message: format!("{key} not found"),
    })
}

fn bus_id(v: f64, line: usize) -> Result<u32> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(CaseError::Parse {
            line,
            message: format!("bus id {v} is not a nonnegative integer"),
        });
    }
    Ok(v as u32)
}

pub fn import_matpower(text: &str, name: &str) -> Result<PowerCase> {
    let base_mva = parse_scalar(text, "mpc.baseMVA")?;
    let bus = required(text, "mpc.bus")?;
    let gen = required(text, "mpc.gen")?;
    let branch = required(text, "mpc.branch")?;
    let gencost = required(text, "mpc.gencost")?;

    let mut buses = Vec::new();
    let mut slack = None;
    for r in 0..bus.rows.len() {
        let id = bus_id(bus.get(r, 0, "bus")?, bus.rows[r].0)?;
        if bus.get(r, 1, "bus")? == REF_BUS && slack.is_none() {
            slack = Some(id);
        }
        buses.push(Bus {
            id,
            demand: bus.get(r, 2, "bus")?,
        });
    }
    let slack_bus = slack.ok_or(CaseError::Parse {
        line: 0,
        message: "no reference bus (type 3)".into(),
    })?;

    if gencost.rows.len() < gen.rows.len() {
        return Err(CaseError::Parse {
            line: 0,
            message: format!(
                "{} generators but {} cost rows",
                gen.rows.len(),
                gencost.rows.len()
            ),
        });
    }
    let mut generators = Vec::new();
    for r in 0..gen.rows.len() {
        let line = gen.rows[r].0;
        if gen.get(r, 7, "gen")? <= 0.0 {
            continue;
        }
        let cline = gencost.rows[r].0;
        if gencost.get(r, 0, "gencost")? != POLYNOMIAL {
            return Err(CaseError::Parse {
                line: cline,
                message: "only polynomial costs are supported".into(),
            });
        }
        let ncost = gencost.get(r, 3, "gencost")? as usize;
        let coeff = |k: usize| -> Result<f64> {
            if k >= ncost {
                return Ok(0.0);
            }
            gencost.get(r, 4 + ncost - 1 - k, "gencost")
        };
        if ncost > 3 {
            return Err(CaseError::Parse {
                line: cline,
                message: format!("cost polynomial of degree {} is not quadratic", ncost - 1),
            });
        }
        generators.push(Generator {
            bus: bus_id(gen.get(r, 0, "gen")?, line)?,
            cost_q: coeff(2)?,
            cost_c: coeff(1)?,
            p_min: gen.get(r, 9, "gen")?,
            p_max: gen.get(r, 8, "gen")?,
        });
    }

    let mut lines = Vec::new();
    for r in 0..branch.rows.len() {
        let line = branch.rows[r].0;
        if branch.get(r, 10, "branch")? <= 0.0 {
            continue;
        }
        let x = branch.get(r, 3, "branch")?;
        if x == 0.0 {
            return Err(CaseError::Parse {
                line,
                message: "branch reactance is zero".into(),
            });
        }
        let rate = branch.get(r, 5, "branch")?;
        lines.push(Line {
            from: bus_id(branch.get(r, 0, "branch")?, line)?,
            to: bus_id(branch.get(r, 1, "branch")?, line)?,
            susceptance: 1.0 / x.abs(),
            limit: (rate > 0.0).then_some(rate),
        });
    }

    let case = PowerCase {
        name: name.to_string(),
        base_mva,
        buses,
        generators,
        lines,
        slack_bus,
        renewable_buses: vec![],
    };
    case.validate()?;
    Ok(case)
}
