use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cfqp_core::model_io::AnyModel;
use cfqp_core::{
    brute_force_solve, is_feasible, kkt_report, ClosedFormModel, KktTable, MpQpProblem,
    ParameterPoint, Precision, Real, ORACLE_MAX_M2,
};
use clap::Args;
use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::read_rows;
use crate::parse_precision;
use crate::source::{SourceArgs, Workspace};

#[derive(Args, Clone, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Model file; required unless --oracle.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset with θ columns and feasibility flags.
    #[arg(long)]
    pub data: PathBuf,
    /// Only this precision (default: 64 and 32).
    #[arg(long, value_parser = parse_precision)]
    pub precision: Option<Precision>,
    /// Report the oracle's solutions instead of a model's.
    #[arg(long)]
    pub oracle: bool,
    /// Drop points whose optimal active set is not a model region, and count them.
    #[arg(long)]
    pub discovered_only: bool,
    /// Table as CSV.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Table as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelledTable {
    pub label: String,
    pub table: KktTable,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct KktSummary {
    pub tables: Vec<LabelledTable>,
    pub evaluated: usize,
    pub infeasible: usize,
    pub undiscovered: usize,
}

impl KktSummary {
    pub fn table(&self, label: &str) -> Option<&KktTable> {
        self.tables
            .iter()
            .find(|t| t.label == label)
            .map(|t| &t.table)
    }
}

fn model_table<T: Real>(
    model: &ClosedFormModel<T>,
    problem: &MpQpProblem,
    thetas: &[ParameterPoint],
) -> KktTable {
    let sols = model.batch_forward(thetas);
    let reports: Vec<_> = sols
        .par_iter()
        .zip(thetas)
        .map(|(s, t)| kkt_report(problem, s, t))
        .collect();
    let mut table = KktTable::new(problem);
    for r in &reports {
        table.push(r);
    }
    table
}

fn label(p: Precision) -> String {
    format!("CF{}", p.bits())
}

/// KKT tables over feasible points.
///
/// With `discovered_only` the oracle's active set at every point is looked up
/// in the model; points outside every discovered region are dropped and counted.
pub fn evaluate(
    problem: &MpQpProblem,
    model: Option<&AnyModel>,
    thetas: &[ParameterPoint],
    precisions: &[Precision],
    oracle: bool,
    discovered_only: bool,
) -> Result<KktSummary> {
    let needs_oracle = oracle || discovered_only;
    if needs_oracle && problem.m2() > ORACLE_MAX_M2 {
        return Err(cfqp_core::Error::OracleTooLarge {
            m2: problem.m2(),
            limit: ORACLE_MAX_M2,
        }
        .into());
    }
    let solved = if needs_oracle {
        Some(
            thetas
                .par_iter()
                .map(|t| brute_force_solve(problem, t))
                .collect::<cfqp_core::Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let mut keep: Vec<usize> = (0..thetas.len()).collect();
    let mut undiscovered = 0;
    if discovered_only {
        let Some(model) = model else {
            bail!("--discovered-only needs a model")
        };
        let known = model.to_double();
        let solved = solved.as_ref().expect("oracle ran");
        keep.retain(|&i| known.find_region(&solved[i].active_set).is_some());
        undiscovered = thetas.len() - keep.len();
    }
    let kept: Vec<ParameterPoint> = keep.iter().map(|&i| thetas[i].clone()).collect();
    let mut tables = Vec::new();
    if oracle {
        let solved = solved.as_ref().expect("oracle ran");
        let mut table = KktTable::new(problem);
        for &i in &keep {
            table.push(&solved[i].report);
        }
        tables.push(LabelledTable {
            label: "oracle".into(),
            table,
        });
    } else {
        let Some(model) = model else {
            bail!("a model is needed unless the oracle is reported")
        };
        for &p in precisions {
            let table = match p {
                Precision::Double => model_table(&model.to_double(), problem, &kept),
                Precision::Single => model_table(&model.to_single(), problem, &kept),
            };
            tables.push(LabelledTable {
                label: label(p),
                table,
            });
        }
    }
    Ok(KktSummary {
        tables,
        evaluated: kept.len(),
        infeasible: 0,
        undiscovered,
    })
}

pub fn print_table(s: &KktSummary) {
    let Some(first) = s.tables.first() else {
        println!("(empty table)");
        return;
    };
    let names: Vec<&str> = first
        .table
        .columns
        .iter()
        .map(|c| c.name.as_str())
        .collect();
    print!("{:<8} {:<6}", "", "");
    for n in &names {
        print!(" {n:>11}");
    }
    println!();
    for t in &s.tables {
        for (stat, pick) in [("mean", true), ("worst", false)] {
            print!("{:<8} {:<6}", t.label, stat);
            for c in &t.table.columns {
                print!(" {:>11.3e}", if pick { c.mean } else { c.worst });
            }
            println!();
        }
    }
    println!(
        "{} points evaluated, {} infeasible excluded, {} outside discovered regions",
        s.evaluated, s.infeasible, s.undiscovered
    );
}

pub fn write_csv(s: &KktSummary, w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    if let Some(first) = s.tables.first() {
        let mut header = vec!["table".to_string(), "stat".into()];
        header.extend(first.table.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for t in &s.tables {
            for stat in ["mean", "worst"] {
                let mut rec = vec![t.label.clone(), stat.to_string()];
                rec.extend(
                    t.table
                        .columns
                        .iter()
                        .map(|c| if stat == "mean" { c.mean } else { c.worst }.to_string()),
                );
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &ReportArgs) -> Result<KktSummary> {
    let ws = Workspace::open(&args.source)?;
    let problem = ws.problem();
    let rows = read_rows(&args.data, problem)?;
    if rows.is_empty() {
        warn!("dataset {} is empty", args.data.display());
    }
    let missing = rows.iter().filter(|r| r.feasible.is_none()).count();
    if missing > 0 && problem.m2() > ORACLE_MAX_M2 {
        bail!("{missing} rows lack a feasible flag and the problem is too large to check them");
    }
    let (feasible, infeasible): (Vec<_>, Vec<_>) = rows
        .into_iter()
        .partition(|r| r.feasible.unwrap_or_else(|| is_feasible(problem, &r.theta)));
    let thetas: Vec<ParameterPoint> = feasible.into_iter().map(|r| r.theta).collect();
    let model = match &args.model {
        Some(path) => Some(
            AnyModel::load(path, problem)
                .with_context(|| format!("loading model {}", path.display()))?,
        ),
        None => None,
    };
    let precisions = match args.precision {
        Some(p) => vec![p],
        None => vec![Precision::Double, Precision::Single],
    };
    let mut summary = evaluate(
        problem,
        model.as_ref(),
        &thetas,
        &precisions,
        args.oracle,
        args.discovered_only,
    )?;
    summary.infeasible = infeasible.len();
    for t in &mut summary.tables {
        for _ in 0..infeasible.len() {
            t.table.exclude();
        }
    }
    print_table(&summary);
    if let Some(path) = &args.out {
        write_csv(
            &summary,
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )?;
    }
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&summary)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(summary)
}
