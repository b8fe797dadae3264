use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use cfqp_core::model_io::{serialize, AnyModel};
use cfqp_core::{
    audit_oracle_transitions, audit_transitions, discover, DiscoveryOptions, DiscoveryOutcome,
    Precision, Real, RootTerm, SignRule, TransitionAudit, UnresolvedPolicy, ORACLE_MAX_M2,
};
use clap::{Args, ValueEnum};
use log::info;
use serde::Serialize;

use crate::parse_precision;
use crate::source::{parse_scales, SourceArgs, Workspace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SignRuleArg {
    PerEntry,
    Block,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RootTermArg {
    /// `ReLU(h_root)`.
    Rectified,
    /// `h_root` without the ReLU; needed when a root multiplier is dropped deeper in the tree.
    Linear,
}

#[derive(Args, Clone, Debug)]
pub struct DiscoverArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value = "64", value_parser = parse_precision)]
    pub precision: Precision,
    /// KKT tolerance (default depends on precision).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Points per sweep.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Base scales, `a,b,c` or `start:end:step`.
    #[arg(long, value_parser = parse_scales)]
    pub scales: Option<::std::vec::Vec<f64>>,
    /// Also sweep each load downward (power cases).
    #[arg(long)]
    pub two_sided: bool,
    /// Record unresolved points and keep going instead of failing.
    #[arg(long)]
    pub skip_unresolved: bool,
    #[arg(long, value_enum, default_value = "per-entry")]
    pub sign_rule: SignRuleArg,
    #[arg(long, value_enum, default_value = "rectified")]
    pub root_term: RootTermArg,
    /// Keep expansions even when they break earlier points.
    #[arg(long)]
    pub no_guard: bool,
    /// Check that region changes along every sweep swap one constraint.
    #[arg(long)]
    pub audit: bool,
    /// Bisection depth of the transition audit.
    #[arg(long, default_value_t = 20)]
    pub halvings: usize,
    /// Model file to write.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// JSON-lines discovery log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Summary JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

impl DiscoverArgs {
    pub fn new(source: SourceArgs) -> Self {
        DiscoverArgs {
            source,
            precision: Precision::Double,
            tol: None,
            steps: 200,
            scales: None,
            two_sided: false,
            skip_unresolved: false,
            sign_rule: SignRuleArg::PerEntry,
            root_term: RootTermArg::Rectified,
            no_guard: false,
            audit: false,
            halvings: 20,
            out: None,
            log: None,
            summary: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditSummary {
    pub model: TransitionAudit,
    /// The oracle's own active sets along the same sweeps; absent above the oracle size limit.
    pub oracle: Option<TransitionAudit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscoverSummary {
    pub precision: u8,
    pub tol: f64,
    pub regions: usize,
    pub active_sets: Vec<String>,
    pub pattern_directions: usize,
    pub pattern_points: usize,
    pub passing_points: usize,
    pub infeasible_points: usize,
    pub unresolved: usize,
    pub rejected: Vec<String>,
    pub oracle_calls: usize,
    pub wall_time_s: f64,
    pub audit: Option<AuditSummary>,
}

pub struct Discovered {
    pub workspace: Workspace,
    pub model: AnyModel,
    pub summary: DiscoverSummary,
    pub log_jsonl: String,
}

fn run_at<T: Real>(
    args: &DiscoverArgs,
    ws: &Workspace,
) -> Result<(DiscoveryOutcome<T>, DiscoverSummary)> {
    let problem = ws.problem();
    let (pattern, theta0) = ws.pattern(args.scales.as_deref(), args.steps, args.two_sided)?;
    let opts = DiscoveryOptions {
        tol: args.tol,
        on_unresolved: if args.skip_unresolved {
            UnresolvedPolicy::Skip
        } else {
            UnresolvedPolicy::Abort
        },
        sign_rule: match args.sign_rule {
            SignRuleArg::PerEntry => SignRule::PerEntry,
            SignRuleArg::Block => SignRule::Block,
        },
        root_term: match args.root_term {
            RootTermArg::Rectified => RootTerm::Rectified,
            RootTermArg::Linear => RootTerm::Linear,
        },
        guard_regressions: !args.no_guard,
        ..Default::default()
    };
    let start = Instant::now();
    let out = discover::<T>(problem, &theta0, &pattern, &opts).context("discovery")?;
    let wall_time_s = start.elapsed().as_secs_f64();
    info!(
        "discovered {} regions in {wall_time_s:.3} s",
        out.model.len()
    );
    let audit = args.audit.then(|| -> Result<AuditSummary> {
        let model = audit_transitions(problem, &out.model, &pattern, out.tol, args.halvings);
        let oracle = if problem.m2() <= ORACLE_MAX_M2 {
            Some(audit_oracle_transitions(problem, &pattern, args.halvings)?)
        } else {
            None
        };
        Ok(AuditSummary { model, oracle })
    });
    let summary = DiscoverSummary {
        precision: out.model.precision().bits(),
        tol: out.tol,
        regions: out.model.len(),
        active_sets: out
            .model
            .regions()
            .iter()
            .map(|r| r.active_set.to_string())
            .collect(),
        pattern_directions: pattern.directions.len(),
        pattern_points: pattern.point_count(),
        passing_points: out.passing_points,
        infeasible_points: out.infeasible_points,
        unresolved: out.unresolved.len(),
        rejected: out.rejected.iter().map(|s| s.to_string()).collect(),
        oracle_calls: out.oracle_calls,
        wall_time_s,
        audit: audit.transpose()?,
    };
    Ok((out, summary))
}

/// Runs discovery and writes whichever output files were requested.
pub fn run(args: &DiscoverArgs) -> Result<Discovered> {
    let workspace = Workspace::open(&args.source)?;
    let (model, bytes, summary, log_jsonl) = match args.precision {
        Precision::Double => {
            let (out, summary) = run_at::<f64>(args, &workspace)?;
            let (bytes, log) = (serialize(&out.model), out.log_jsonl());
            (AnyModel::Double(out.model), bytes, summary, log)
        }
        Precision::Single => {
            let (out, summary) = run_at::<f32>(args, &workspace)?;
            let (bytes, log) = (serialize(&out.model), out.log_jsonl());
            (AnyModel::Single(out.model), bytes, summary, log)
        }
    };
    if let Some(path) = &args.out {
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.log {
        std::fs::write(path, &log_jsonl).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.summary {
        std::fs::write(path, serde_json::to_string_pretty(&summary)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Discovered {
        workspace,
        model,
        summary,
        log_jsonl,
    })
}

pub fn print_summary(s: &DiscoverSummary) {
    println!("regions: {}", s.regions);
    for (i, set) in s.active_sets.iter().enumerate() {
        println!("  {i}: {set}");
    }
    println!(
        "pattern: {} directions, {} points ({} passing, {} infeasible, {} unresolved)",
        s.pattern_directions, s.pattern_points, s.passing_points, s.infeasible_points, s.unresolved
    );
    if !s.rejected.is_empty() {
        println!("rejected expansions: {}", s.rejected.join(" "));
    }
    println!("oracle calls: {}", s.oracle_calls);
    if let Some(a) = &s.audit {
        let line = |name: &str, t: &TransitionAudit| {
            println!(
                "audit ({name}): {} pairs, {} region changes, {} resolved by halving, {} violations ({} degenerate)",
                t.pairs_checked,
                t.region_changes,
                t.resolved_by_halving,
                t.violations.len(),
                t.degenerate_violations()
            )
        };
        line("model", &a.model);
        if let Some(o) = &a.oracle {
            line("oracle", o);
        }
    }
    println!("wall time: {:.3} s", s.wall_time_s);
}
