use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use cfqp_core::model_io::AnyModel;
use cfqp_core::{
    kkt_report, ClosedFormModel, KktTable, MpQpProblem, ParameterPoint, Precision,
    PrimalDualSolution, Real,
};
use clap::Args;

use crate::data::read_rows;
use crate::parse_precision;
use crate::source::{SourceArgs, Workspace};

#[derive(Args, Clone, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Model file from `discover`.
    #[arg(long)]
    pub model: PathBuf,
    /// θ dataset (CSV or JSON lines).
    #[arg(long)]
    pub thetas: PathBuf,
    /// Evaluate at this precision instead of the model's own.
    #[arg(long, value_parser = parse_precision)]
    pub precision: Option<Precision>,
    /// Solutions CSV (stdout when omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub region: usize,
    pub active_set: String,
    pub solution: PrimalDualSolution<f64>,
    /// Mean KKT entry per report column, in [`KktTable`] column order.
    pub kkt: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PredictOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Prediction>,
    pub batch_time_s: f64,
}

/// Model at the requested precision, or at its stored precision.
pub fn at_precision(model: &AnyModel, precision: Option<Precision>) -> AnyModel {
    match precision.unwrap_or(model.precision()) {
        Precision::Single => AnyModel::Single(model.to_single()),
        Precision::Double => AnyModel::Double(model.to_double()),
    }
}

fn predict_with<T: Real>(
    model: &ClosedFormModel<T>,
    problem: &MpQpProblem,
    thetas: &[ParameterPoint],
) -> PredictOutput {
    let start = Instant::now();
    let sols = model.batch_forward(thetas);
    let batch_time_s = start.elapsed().as_secs_f64();
    let columns: Vec<String> = KktTable::new(problem)
        .columns
        .iter()
        .map(|c| c.name.clone())
        .collect();
    let rows = sols
        .iter()
        .zip(thetas)
        .map(|(s, t)| {
            let mut table = KktTable::new(problem);
            table.push(&kkt_report(problem, s, t));
            let region = model.classify(t);
            Prediction {
                region,
                active_set: model.regions()[region].active_set.to_string(),
                solution: s.to_f64(),
                kkt: table.columns.iter().map(|c| c.mean).collect(),
            }
        })
        .collect();
    PredictOutput {
        columns,
        rows,
        batch_time_s,
    }
}

pub fn predict(
    model: &AnyModel,
    problem: &MpQpProblem,
    thetas: &[ParameterPoint],
) -> PredictOutput {
    match model {
        AnyModel::Single(m) => predict_with(m, problem, thetas),
        AnyModel::Double(m) => predict_with(m, problem, thetas),
    }
}

pub fn write_csv(out: &PredictOutput, problem: &MpQpProblem, w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec![
        "index".to_string(),
        "region".into(),
        "active_set".into(),
        "objective".into(),
    ];
    header.extend((0..problem.n()).map(|i| format!("x_{i}")));
    header.extend((0..problem.m1()).map(|i| format!("lambda_{i}")));
    header.extend((0..problem.m2()).map(|i| format!("mu_{i}")));
    header.extend(out.columns.iter().cloned());
    w.write_record(&header)?;
    for (i, p) in out.rows.iter().enumerate() {
        let s = &p.solution;
        let mut rec = vec![
            i.to_string(),
            p.region.to_string(),
            p.active_set.clone(),
            s.objective.to_string(),
        ];
        rec.extend(
            s.x.iter()
                .chain(&s.lambda)
                .chain(&s.mu)
                .chain(&p.kkt)
                .map(|v| v.to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &PredictArgs) -> Result<PredictOutput> {
    let ws = Workspace::open(&args.source)?;
    let problem = ws.problem();
    let model = AnyModel::load(&args.model, problem)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let model = at_precision(&model, args.precision);
    let thetas: Vec<ParameterPoint> = read_rows(&args.thetas, problem)?
        .into_iter()
        .map(|r| r.theta)
        .collect();
    let out = predict(&model, problem, &thetas);
    match &args.out {
        Some(path) => write_csv(
            &out,
            problem,
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )?,
        None => write_csv(&out, problem, std::io::stdout().lock())?,
    }
    eprintln!(
        "batch of {} θ evaluated in {:.6} s",
        out.rows.len(),
        out.batch_time_s
    );
    Ok(out)
}
