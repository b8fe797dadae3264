use std::path::PathBuf;

use anyhow::Result;
use cfqp_dcopf::{survival_counts, Sample};
use clap::Args;

use crate::data::write_samples;
use crate::source::{parse_scales, scale_range, DataKind, DataOptions, SourceArgs, Workspace};

#[derive(Args, Clone, Debug)]
pub struct GenDataArgs {
    #[arg(value_enum)]
    pub kind: DataKind,
    #[command(flatten)]
    pub source: SourceArgs,
    /// Draws (per scale for `scaled`, per hour for `renewable`).
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Load scales for `scaled`, `a,b,c` or `start:end:step`.
    #[arg(long, value_parser = parse_scales)]
    pub scales: Option<::std::vec::Vec<f64>>,
    /// Points per bus sweep for `extreme`.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Hours for `renewable`.
    #[arg(long, default_value_t = 24)]
    pub hours: usize,
    /// Output file; `.jsonl` for JSON lines, CSV otherwise.
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &GenDataArgs) -> Result<Vec<Sample>> {
    let ws = Workspace::open(&args.source)?;
    let opts = DataOptions {
        count: args.count,
        seed: args.seed,
        scales: args
            .scales
            .clone()
            .unwrap_or_else(|| scale_range(1.0, 2.0, 0.125)),
        steps: args.steps,
        hours: args.hours,
    };
    let samples = ws.dataset(args.kind, &opts)?;
    write_samples(&args.out, &samples)?;
    let feasible = samples.iter().filter(|s| s.feasible).count();
    println!(
        "{} samples written to {} ({feasible} feasible)",
        samples.len(),
        args.out.display()
    );
    if args.kind == DataKind::Scaled {
        for (k, f, n) in survival_counts(&samples) {
            println!("  k = {k:<6} feasible {f}/{n}");
        }
    }
    Ok(samples)
}
