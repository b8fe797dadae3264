//! Where a command's problem comes from, and the patterns and datasets that go with it.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cfqp_core::fixtures::{transport_2d, transport_theta, TRANSPORT_AXES};
use cfqp_core::{
    feasible_axis_pattern, feasible_extent, feasible_scaled_pattern, is_feasible, MpQpProblem,
    ParameterPoint, SearchPattern,
};
use cfqp_dcopf::{
    demand_sweep_pattern, extreme_dataset, local_perturbation_dataset, renewable_planning_dataset,
    scaled_dataset, six_bus, synthetic_57, FlowLimits, Network, PowerCase, Sample,
};
use clap::{Args, ValueEnum};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    /// Two plants, two markets; demands are the parameters.
    Transport,
    /// Six-bus grid with three generators.
    SixBus,
    /// 57-bus synthetic grid with seven generators.
    Synthetic57,
}

#[derive(Args, Clone, Debug, Default)]
#[group(skip)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["problem", "case", "builtin"]))]
pub struct SourceArgs {
    /// mp-QP problem JSON.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Power case JSON.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Bundled input.
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
    /// Add flow limit rows for every line of a power case.
    #[arg(long)]
    pub lines: bool,
    /// Uniform line limit in MW instead of the case ratings (implies --lines).
    #[arg(long)]
    pub limit: Option<f64>,
    /// Starting θ for problem inputs, stacked and comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
    /// Stacked θ coordinates swept for problem inputs (default: all).
    #[arg(long, value_delimiter = ',')]
    pub axes: Option<Vec<usize>>,
    /// Longest sweep along one axis for problem inputs.
    #[arg(long, default_value_t = 1e6)]
    pub cap: f64,
}

impl SourceArgs {
    pub fn builtin(b: Builtin) -> Self {
        SourceArgs {
            builtin: Some(b),
            cap: 1e6,
            ..Default::default()
        }
    }

    pub fn with_lines(mut self) -> Self {
        self.lines = true;
        self
    }
}

/// Comma-separated values or an inclusive `start:end:step` range.
pub fn parse_scales(s: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let out = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err("range must be start:end:step".into());
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err("range needs start <= end and a positive step".into());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| a + step * i as f64).collect()
    } else {
        s.split(',')
            .map(num)
            .collect::<std::result::Result<Vec<_>, _>>()?
    };
    if out.is_empty() || out.windows(2).any(|w| w[1] <= w[0]) {
        return Err("scales must be ascending".into());
    }
    Ok(out)
}

pub fn scale_range(start: f64, end: f64, step: f64) -> Vec<f64> {
    parse_scales(&format!("{start}:{end}:{step}")).expect("valid range")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    /// Base demand times Uniform(0.6, 1.4) per load (box samples for problem inputs).
    Local,
    /// One bus at a time from zero to total capacity.
    Extreme,
    /// Local ratios at each of --scales.
    Scaled,
    /// Hourly profile minus renewable output.
    Renewable,
}

#[derive(Clone, Debug)]
pub struct DataOptions {
    pub count: usize,
    pub seed: u64,
    pub scales: Vec<f64>,
    pub steps: usize,
    pub hours: usize,
}

/// A loaded problem, with its grid when it came from a power case.
#[derive(Clone, Debug)]
pub enum Workspace {
    Problem {
        problem: MpQpProblem,
        theta0: ParameterPoint,
        axes: Vec<usize>,
        cap: f64,
    },
    Grid(Network),
}

impl Workspace {
    pub fn open(args: &SourceArgs) -> Result<Self> {
        let case = match (&args.problem, &args.case, args.builtin) {
            (Some(path), _, _) => {
                let problem = MpQpProblem::load(path)
                    .with_context(|| format!("reading problem {}", path.display()))?;
                let theta0 = match &args.theta0 {
                    Some(v) => ParameterPoint::from_stacked(&problem, v.clone())?,
                    None => ParameterPoint::zeros(&problem),
                };
                let axes = args
                    .axes
                    .clone()
                    .unwrap_or_else(|| (0..problem.d()).collect());
                return Ok(Workspace::Problem {
                    problem,
                    theta0,
                    axes,
                    cap: args.cap,
                });
            }
            (_, Some(path), _) => {
                PowerCase::load(path).with_context(|| format!("reading case {}", path.display()))?
            }
            (_, _, Some(Builtin::Transport)) => {
                let problem = transport_2d();
                let theta0 = match &args.theta0 {
                    Some(v) => ParameterPoint::from_stacked(&problem, v.clone())?,
                    None => transport_theta(&problem, 20.0, 20.0),
                };
                let axes = args.axes.clone().unwrap_or_else(|| TRANSPORT_AXES.to_vec());
                return Ok(Workspace::Problem {
                    problem,
                    theta0,
                    axes,
                    cap: args.cap,
                });
            }
            (_, _, Some(Builtin::SixBus)) => six_bus(),
            (_, _, Some(Builtin::Synthetic57)) => synthetic_57(),
            _ => bail!("no input: pass --problem, --case or --builtin"),
        };
        let net = match args.limit {
            Some(l) => Network::with_lines(case.clone(), &FlowLimits::uniform(&case, l)?)?,
            None if args.lines => {
                Network::with_lines(case.clone(), &FlowLimits::from_case(&case)?)?
            }
            None => Network::new(case)?,
        };
        Ok(Workspace::Grid(net))
    }

    pub fn problem(&self) -> &MpQpProblem {
        match self {
            Workspace::Problem { problem, .. } => problem,
            Workspace::Grid(net) => &net.problem,
        }
    }

    pub fn network(&self) -> Option<&Network> {
        match self {
            Workspace::Grid(net) => Some(net),
            Workspace::Problem { .. } => None,
        }
    }

    /// Scales used when none are given: up to 2× base load with line limits, 1.4× without.
    pub fn default_scales(&self) -> Vec<f64> {
        match self {
            Workspace::Grid(net) if net.map.with_limits => scale_range(0.1, 2.0, 0.1),
            _ => scale_range(0.1, 1.4, 0.1),
        }
    }

    /// Discovery pattern and its starting point.
    ///
    /// Grids sweep each load upward from every scaled base demand and start at
    /// the first scale. Problems sweep the axes from θ0, or from `k · θ0` for
    /// each scale when scales are given.
    pub fn pattern(
        &self,
        scales: Option<&[f64]>,
        steps: usize,
        two_sided: bool,
    ) -> Result<(SearchPattern, ParameterPoint)> {
        match self {
            Workspace::Problem {
                problem,
                theta0,
                axes,
                cap,
            } => match scales {
                None => Ok((
                    feasible_axis_pattern(problem, theta0, axes, steps, *cap)?,
                    theta0.clone(),
                )),
                Some(scales) => {
                    let origin = ParameterPoint::zeros(problem);
                    let (pattern, skipped) = feasible_scaled_pattern(
                        problem, &origin, theta0, scales, axes, steps, *cap,
                    )?;
                    let first = scales
                        .iter()
                        .find(|k| !skipped.contains(k))
                        .ok_or(cfqp_core::Error::InfeasibleStart)?;
                    Ok((pattern, origin.lerp(theta0, *first)))
                }
            },
            Workspace::Grid(net) => {
                let scales = scales
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| self.default_scales());
                let (pattern, skipped) = demand_sweep_pattern(net, &scales, steps, two_sided)?;
                if !skipped.is_empty() {
                    warn!("{} infeasible scales skipped: {skipped:?}", skipped.len());
                }
                let first = scales
                    .iter()
                    .find(|k| !skipped.contains(k))
                    .ok_or(cfqp_core::Error::InfeasibleStart)?;
                let demand: Vec<f64> = net.case.demands().iter().map(|d| first * d).collect();
                Ok((pattern, net.theta_for_demand(&demand)?))
            }
        }
    }

    pub fn dataset(&self, kind: DataKind, opts: &DataOptions) -> Result<Vec<Sample>> {
        match (self, kind) {
            (Workspace::Grid(net), DataKind::Local) => {
                Ok(local_perturbation_dataset(net, opts.count, opts.seed)?)
            }
            (Workspace::Grid(net), DataKind::Extreme) => Ok(extreme_dataset(net, opts.steps)?),
            (Workspace::Grid(net), DataKind::Scaled) => {
                Ok(scaled_dataset(net, &opts.scales, opts.count, opts.seed)?)
            }
            (Workspace::Grid(net), DataKind::Renewable) => Ok(renewable_planning_dataset(
                net, opts.hours, opts.count, opts.seed,
            )?),
            (Workspace::Problem { .. }, DataKind::Local) => self.box_dataset(opts.count, opts.seed),
            (Workspace::Problem { .. }, k) => bail!("{k:?} datasets need a power case input"),
        }
    }

    /// Uniform draws over `[θ0, θ0 + extent]` on each swept axis, where the extent is the feasible reach along it.
    fn box_dataset(&self, count: usize, seed: u64) -> Result<Vec<Sample>> {
        let Workspace::Problem {
            problem,
            theta0,
            axes,
            cap,
        } = self
        else {
            unreachable!()
        };
        let mut reach = Vec::with_capacity(axes.len());
        for &a in axes {
            let mut dir = vec![0.0; problem.d()];
            dir[a] = 1.0;
            reach.push(feasible_extent(problem, theta0, &dir, *cap)?);
        }
        Ok((0..count)
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                let mut theta = theta0.clone();
                for (&a, &r) in axes.iter().zip(&reach) {
                    theta.stacked_mut()[a] += rng.random_range(0.0..=r);
                }
                let feasible = is_feasible(problem, &theta);
                Sample {
                    scale: 1.0,
                    hour: None,
                    theta,
                    feasible,
                }
            })
            .collect())
    }

    /// `count` feasible local draws, drawing further batches until enough are found.
    pub fn feasible_samples(&self, count: usize, seed: u64) -> Result<Vec<ParameterPoint>> {
        let mut out = Vec::with_capacity(count);
        let mut batch = count.max(64);
        let mut round = 0u64;
        let mut empty = 0;
        while out.len() < count {
            let opts = DataOptions {
                count: batch,
                seed: seed.wrapping_add(round),
                scales: vec![1.0],
                steps: 2,
                hours: 24,
            };
            let drawn = self.dataset(DataKind::Local, &opts)?;
            let before = out.len();
            out.extend(
                drawn
                    .into_iter()
                    .filter(|s| s.feasible)
                    .map(|s| s.theta)
                    .take(count - before),
            );
            if out.len() == before {
                empty += 1;
                if empty == 4 {
                    bail!("no feasible point among {batch} local draws");
                }
            } else {
                empty = 0;
            }
            round += 1;
            batch *= 2;
        }
        info!("{count} feasible points after {round} batches");
        Ok(out)
    }
}
