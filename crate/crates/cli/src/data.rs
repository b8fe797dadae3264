//! Dataset files.
//!
//! CSV files carry one θ per row. Stacked θ entries live in columns
//! `theta_0 … theta_{d-1}`; `feasible`, `scale` and `hour` are optional.
//! Files ending in `.jsonl` hold one serialized sample per line instead.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use cfqp_core::{MpQpProblem, ParameterPoint};
use cfqp_dcopf::Sample;

use crate::exit::InputError;

/// A dataset row as read from disk; `feasible` is `None` when the file has no such column.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub theta: ParameterPoint,
    pub feasible: Option<bool>,
    pub scale: Option<f64>,
    pub hour: Option<u32>,
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    if is_jsonl(path) {
        let mut w = BufWriter::new(file);
        for s in samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(file);
    let d = samples.first().map_or(0, |s| s.theta.len());
    let mut header = vec!["scale".to_string(), "hour".into(), "feasible".into()];
    header.extend((0..d).map(|i| format!("theta_{i}")));
    w.write_record(&header)?;
    for s in samples {
        let mut rec = vec![
            s.scale.to_string(),
            s.hour.map(|h| h.to_string()).unwrap_or_default(),
            s.feasible.to_string(),
        ];
        rec.extend(s.theta.stacked().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn bad(path: &Path, line: u64, msg: impl std::fmt::Display) -> anyhow::Error {
    InputError(format!("{}:{line}: {msg}", path.display())).into()
}

pub fn read_rows(path: &Path, problem: &MpQpProblem) -> Result<Vec<Row>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    if is_jsonl(path) {
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample = serde_json::from_str(&line).map_err(|e| bad(path, i as u64 + 1, e))?;
            s.theta
                .check(problem)
                .map_err(|e| bad(path, i as u64 + 1, e))?;
            rows.push(Row {
                theta: s.theta,
                feasible: Some(s.feasible),
                scale: Some(s.scale),
                hour: s.hour,
            });
        }
        return Ok(rows);
    }
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let theta_cols = (0..problem.d())
        .map(|i| {
            col(&format!("theta_{i}"))
                .ok_or_else(|| bad(path, 1, format!("missing column theta_{i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (feasible_col, scale_col, hour_col) = (col("feasible"), col("scale"), col("hour"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        let mut values = Vec::with_capacity(theta_cols.len());
        for (i, &c) in theta_cols.iter().enumerate() {
            values.push(
                field(c)
                    .parse::<f64>()
                    .map_err(|e| bad(path, line, format!("theta_{i} {:?}: {e}", field(c))))?,
            );
        }
        let feasible = match feasible_col.map(field) {
            None => None,
            Some("true" | "1") => Some(true),
            Some("false" | "0") => Some(false),
            Some(v) => return Err(bad(path, line, format!("feasible {v:?} is not a boolean"))),
        };
        let scale = match scale_col.map(field) {
            None | Some("") => None,
            Some(v) => Some(
                v.parse()
                    .map_err(|e| bad(path, line, format!("scale {v:?}: {e}")))?,
            ),
        };
        let hour = match hour_col.map(field) {
            None | Some("") => None,
            Some(v) => Some(
                v.parse()
                    .map_err(|e| bad(path, line, format!("hour {v:?}: {e}")))?,
            ),
        };
        rows.push(Row {
            theta: ParameterPoint::from_stacked(problem, values)?,
            feasible,
            scale,
            hour,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cfqp_core::fixtures::{transport_2d, transport_theta};

    fn samples(p: &MpQpProblem) -> Vec<Sample> {
        vec![
            Sample {
                scale: 1.0,
                hour: None,
                theta: transport_theta(p, 123.456, 50.0),
                feasible: true,
            },
            Sample {
                scale: 1.5,
                hour: Some(3),
                theta: transport_theta(p, 900.0, 900.0),
                feasible: false,
            },
        ]
    }

    #[test]
    fn csv_and_jsonl_round_trip() {
        let p = transport_2d();
        let dir = tempfile::tempdir().unwrap();
        for name in ["d.csv", "d.jsonl"] {
            let path = dir.path().join(name);
            write_samples(&path, &samples(&p)).unwrap();
            let rows = read_rows(&path, &p).unwrap();
            assert_eq!(rows.len(), 2);
            assert_eq!(rows[0].theta, samples(&p)[0].theta);
            assert_eq!(rows[1].feasible, Some(false));
            assert_eq!(rows[1].hour, Some(3));
        }
    }

    #[test]
    fn bad_number_reports_its_line() {
        let p = transport_2d();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let header: Vec<String> = (0..p.d()).map(|i| format!("theta_{i}")).collect();
        let good = vec!["0"; p.d()].join(",");
        let mut broken = vec!["0"; p.d()];
        broken[3] = "abc";
        std::fs::write(
            &path,
            format!(
                "{}\n{good}\n{good}\n{}\n",
                header.join(","),
                broken.join(",")
            ),
        )
        .unwrap();
        let err = read_rows(&path, &p).unwrap_err().to_string();
        assert!(err.contains(":4:") && err.contains("theta_3"), "{err}");
    }

    #[test]
    fn missing_theta_column_is_rejected() {
        let p = transport_2d();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.csv");
        std::fs::write(&path, "theta_0\n1\n").unwrap();
        assert!(read_rows(&path, &p)
            .unwrap_err()
            .to_string()
            .contains("theta_1"));
    }
}
