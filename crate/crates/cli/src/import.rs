use std::path::PathBuf;

use anyhow::{Context, Result};
use cfqp_dcopf::{import_matpower, PowerCase};
use clap::Args;

#[derive(Args, Clone, Debug)]
pub struct ImportArgs {
    /// MATPOWER-style case file.
    #[arg(long)]
    pub matpower: PathBuf,
    /// Case name (default: file stem).
    #[arg(long)]
    pub name: Option<String>,
    /// Case JSON to write.
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &ImportArgs) -> Result<PowerCase> {
    let text = std::fs::read_to_string(&args.matpower)
        .with_context(|| format!("reading {}", args.matpower.display()))?;
    let name = args.name.clone().unwrap_or_else(|| {
        args.matpower
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let case = import_matpower(&text, &name)?;
    std::fs::write(&args.out, case.to_json())
        .with_context(|| format!("writing {}", args.out.display()))?;
    let limited = case.lines.iter().filter(|l| l.limit.is_some()).count();
    println!(
        "{}: {} buses, {} generators, {} lines ({limited} with limits) written to {}",
        case.name,
        case.buses.len(),
        case.generators.len(),
        case.lines.len(),
        args.out.display()
    );
    Ok(case)
}
