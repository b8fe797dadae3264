use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use cfqp_core::model_io::AnyModel;
use cfqp_core::{brute_force_solve, MpQpProblem, ParameterPoint, Precision, ORACLE_MAX_M2};
use clap::Args;
use serde::Serialize;

use crate::parse_precision;
use crate::predict::at_precision;
use crate::source::{SourceArgs, Workspace};

/// Shortest model batch time for which a speedup ratio is reported.
pub const MIN_TIMED_S: f64 = 1e-5;

#[derive(Args, Clone, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Feasible θ to evaluate.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repetitions; medians are reported.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, value_parser = parse_precision)]
    pub precision: Option<Precision>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub count: usize,
    pub reps: usize,
    pub precision: u8,
    pub model_batch_s: f64,
    pub oracle_total_s: Option<f64>,
    pub speedup: Option<f64>,
    pub notice: Option<String>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall time of one model batch against the oracle solving the same points one at a time.
pub fn bench(
    problem: &MpQpProblem,
    model: &AnyModel,
    thetas: &[ParameterPoint],
    reps: usize,
) -> Result<BenchReport> {
    let reps = reps.max(1);
    let model_batch_s = median(
        (0..reps)
            .map(|_| {
                let start = Instant::now();
                match model {
                    AnyModel::Single(m) => drop(std::hint::black_box(m.batch_forward(thetas))),
                    AnyModel::Double(m) => drop(std::hint::black_box(m.batch_forward(thetas))),
                }
                start.elapsed().as_secs_f64()
            })
            .collect(),
    );
    let mut notice = None;
    let oracle_total_s = if problem.m2() > ORACLE_MAX_M2 {
        notice = Some(format!(
            "m2 = {} exceeds the oracle limit of {ORACLE_MAX_M2}; model timed alone",
            problem.m2()
        ));
        None
    } else {
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let start = Instant::now();
            for t in thetas {
                std::hint::black_box(brute_force_solve(problem, t)?);
            }
            times.push(start.elapsed().as_secs_f64());
        }
        Some(median(times))
    };
    let speedup = match oracle_total_s {
        Some(o) if thetas.len() > 1 && model_batch_s >= MIN_TIMED_S => Some(o / model_batch_s),
        Some(_) => {
            notice = Some("batch too small to time reliably; no speedup ratio".into());
            None
        }
        None => None,
    };
    Ok(BenchReport {
        count: thetas.len(),
        reps,
        precision: model.precision().bits(),
        model_batch_s,
        oracle_total_s,
        speedup,
        notice,
    })
}

pub fn print_report(r: &BenchReport) {
    println!(
        "{} θ, {}-bit, median of {} runs",
        r.count, r.precision, r.reps
    );
    println!("model batch: {:.6} s", r.model_batch_s);
    if let Some(o) = r.oracle_total_s {
        println!("oracle:      {o:.6} s");
    }
    if let Some(s) = r.speedup {
        println!("speedup:     {s:.1}x");
    }
    if let Some(n) = &r.notice {
        println!("note: {n}");
    }
}

pub fn run(args: &BenchArgs) -> Result<BenchReport> {
    let ws = Workspace::open(&args.source)?;
    let problem = ws.problem();
    let model = AnyModel::load(&args.model, problem)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let model = at_precision(&model, args.precision);
    let thetas = ws.feasible_samples(args.count, args.seed)?;
    let report = bench(problem, &model, &thetas, args.reps)?;
    print_report(&report);
    Ok(report)
}
