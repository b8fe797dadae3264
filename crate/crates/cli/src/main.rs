use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfqp_cli::{bench, discover, exit, gendata, import, predict, report};

/// Closed-form solution functions for multiparametric QPs and DC-OPF studies.
///
/// Exit codes: 0 success, 1 other failure, 2 usage, 3 bad input file,
/// 4 invalid problem or case, 5 infeasible, 6 discovery failed,
/// 7 model/problem mismatch, 8 oracle size limit.
#[derive(Parser)]
#[command(name = "cfqp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover the critical regions along a search pattern and write the model.
    Discover(discover::DiscoverArgs),
    /// Evaluate a model on a θ dataset.
    Predict(predict::PredictArgs),
    /// Mean and worst KKT residual per condition over a dataset.
    KktReport(report::ReportArgs),
    /// Generate a parameter dataset.
    GenData(gendata::GenDataArgs),
    /// Time model batches against the oracle.
    Bench(bench::BenchArgs),
    /// Convert a MATPOWER-style case to case JSON.
    ImportCase(import::ImportArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Discover(a) => discover::run(a).map(|d| discover::print_summary(&d.summary)),
        Command::Predict(a) => predict::run(a).map(drop),
        Command::KktReport(a) => report::run(a).map(drop),
        Command::GenData(a) => gendata::run(a).map(drop),
        Command::Bench(a) => bench::run(a).map(drop),
        Command::ImportCase(a) => import::run(a).map(drop),
    };
    match result {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::Cli;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn scale_lists_parse_as_one_value() {
        use clap::Parser;
        let cli = Cli::try_parse_from([
            "cfqp",
            "discover",
            "--builtin",
            "six-bus",
            "--scales",
            "0.1:2.0:0.1",
        ])
        .unwrap();
        let super::Command::Discover(a) = cli.command else {
            panic!("discover expected")
        };
        assert_eq!(a.scales.map(|s| s.len()), Some(20));
    }
}
