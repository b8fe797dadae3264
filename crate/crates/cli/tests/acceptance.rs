//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeSet;
use std::time::Instant;

use anyhow::{ensure, Result};
use cfqp_cli::bench::bench;
use cfqp_cli::discover::{self, DiscoverArgs, Discovered, RootTermArg};
use cfqp_cli::report::{evaluate, KktSummary};
use cfqp_cli::source::{scale_range, Builtin, SourceArgs};
use cfqp_core::model_io::{deserialize, serialize};
use cfqp_core::*;
use cfqp_dcopf::{renewable_planning_dataset, scaled_dataset, survival_counts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        passed,
        detail: detail.into(),
    })
}

struct Models {
    transport: Discovered,
    six_bus: Discovered,
    six_bus_lines: Discovered,
}

fn model64(d: &Discovered) -> ClosedFormModel<f64> {
    d.model.to_double()
}

fn discover_all() -> Result<Models> {
    let transport = discover::run(&DiscoverArgs {
        audit: true,
        ..DiscoverArgs::new(SourceArgs::builtin(Builtin::Transport))
    })?;
    let six_bus = discover::run(&DiscoverArgs {
        audit: true,
        scales: Some(scale_range(0.1, 1.4, 0.1)),
        ..DiscoverArgs::new(SourceArgs::builtin(Builtin::SixBus))
    })?;
    let six_bus_lines = discover::run(&DiscoverArgs {
        audit: true,
        skip_unresolved: true,
        scales: Some(scale_range(0.1, 2.0, 0.1)),
        ..DiscoverArgs::new(SourceArgs::builtin(Builtin::SixBus).with_lines())
    })?;
    Ok(Models {
        transport,
        six_bus,
        six_bus_lines,
    })
}

fn sets(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn columns_within(s: &KktSummary, label: &str, mean: f64, worst: f64) -> (bool, String) {
    let t = s.table(label).expect("table present");
    let mut ok = true;
    let mut parts = Vec::new();
    for c in t.condition_columns() {
        ok &= c.mean <= mean && c.worst <= worst;
        parts.push(format!("{} {:.1e}/{:.1e}", c.name, c.mean, c.worst));
    }
    (ok, parts.join(", "))
}

fn bundled(m: &Models) -> [(&'static str, &Discovered); 2] {
    [("2D", &m.transport), ("6-bus", &m.six_bus)]
}

fn criterion_1() -> Result<Verdict> {
    let start = Instant::now();
    let d = discover::run(&DiscoverArgs::new(SourceArgs::builtin(Builtin::Transport)))?;
    let secs = start.elapsed().as_secs_f64();
    let found: BTreeSet<String> = d.summary.active_sets.iter().cloned().collect();
    let want = sets(&["{3,4}", "{1,3,4}", "{1,3,4,5}", "{1,3,4,6}"]);
    verdict(
        found == want && d.summary.regions == 4 && secs < 5.0,
        format!("regions {found:?} in {secs:.2} s"),
    )
}

fn criterion_2(m: &Models) -> Result<Verdict> {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, d) in bundled(m) {
        let thetas = d.workspace.feasible_samples(1000, SEED)?;
        let problem = d.workspace.problem();
        let oracle = evaluate(problem, None, &thetas, &[], true, false)?;
        ensure!(
            oracle.evaluated == 1000,
            "oracle certified {} points",
            oracle.evaluated
        );
        let s = evaluate(
            problem,
            Some(&d.model),
            &thetas,
            &[Precision::Double],
            false,
            false,
        )?;
        let (pass, cols) = columns_within(&s, "CF64", 1e-18, 1e-12);
        ok &= pass;
        detail.push(format!("{name}: {cols}"));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        ok && secs < 60.0,
        format!("{}; {secs:.2} s", detail.join("; ")),
    )
}

fn criterion_3(m: &Models) -> Result<Verdict> {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, d) in bundled(m) {
        let thetas = d.workspace.feasible_samples(1000, SEED)?;
        let s = evaluate(
            d.workspace.problem(),
            Some(&d.model),
            &thetas,
            &[Precision::Double, Precision::Single],
            false,
            false,
        )?;
        let (pass, cols) = columns_within(&s, "CF32", 1e-6, 1e-2);
        let (t64, t32) = (s.table("CF64").unwrap(), s.table("CF32").unwrap());
        let mut ordered = true;
        for (a, b) in t32.condition_columns().zip(t64.condition_columns()) {
            let nonzero = a.mean > 0.0 || b.mean > 0.0;
            ordered &= if nonzero {
                a.mean > b.mean
            } else {
                a.mean >= b.mean
            };
        }
        ok &= pass && ordered;
        detail.push(format!(
            "{name} CF32: {cols}; ordering {}",
            if ordered { "holds" } else { "broken" }
        ));
    }
    verdict(ok, detail.join("; "))
}

fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * scale)
}

fn criterion_4(m: &Models) -> Result<Verdict> {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, d) in bundled(m) {
        let problem = d.workspace.problem();
        let model = model64(d);
        let thetas = d.workspace.feasible_samples(1000, SEED + 1)?;
        let (mut compared, mut degenerate, mut wrong) = (0, 0, 0);
        for t in &thetas {
            let o = brute_force_solve(problem, t)?;
            if o.degenerate {
                degenerate += 1;
                continue;
            }
            let f = model.forward(t);
            let s = &o.solution;
            compared += 1;
            if !(close(&f.x, &s.x, 1e-8)
                && close(&f.lambda, &s.lambda, 1e-8)
                && close(&f.mu, &s.mu, 1e-8))
            {
                wrong += 1;
            }
        }
        ok &= wrong == 0;
        detail.push(format!(
            "{name}: {compared} compared, {degenerate} degenerate skipped, {wrong} mismatched"
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        ok && secs < 120.0,
        format!("{}; {secs:.2} s", detail.join("; ")),
    )
}

fn criterion_5(m: &Models) -> Result<Verdict> {
    let checks = tree_continuity(&model64(&m.transport), 400, &[1e-4, 1e-6]);
    let failed = checks.iter().filter(|c| !c.passed).count();
    let worst = checks.iter().map(|c| c.gap / c.bound).fold(0.0, f64::max);
    verdict(
        !checks.is_empty() && failed == 0,
        format!(
            "{} facet tests, {failed} failed, largest gap/bound {worst:.3}",
            checks.len()
        ),
    )
}

fn criterion_6(m: &Models) -> Result<Verdict> {
    let mut regular = 0;
    let mut detail = Vec::new();
    for (name, d) in [
        ("2D", &m.transport),
        ("6-bus", &m.six_bus),
        ("6-bus lines", &m.six_bus_lines),
    ] {
        let a = d.summary.audit.as_ref().expect("audit requested");
        let oracle = a.oracle.as_ref().expect("oracle audit within limits");
        regular += a.model.regular_violations() + oracle.regular_violations();
        detail.push(format!(
            "{name}: model {} changes/{} violations, oracle {} changes/{} violations ({} at degenerate facets)",
            a.model.region_changes,
            a.model.violations.len(),
            oracle.region_changes,
            oracle.violations.len(),
            oracle.degenerate_violations() + a.model.degenerate_violations()
        ));
    }
    verdict(regular == 0, detail.join("; "))
}

fn criterion_7(m: &Models) -> Result<Verdict> {
    let d = &m.six_bus_lines;
    let net = d.workspace.network().expect("grid input");
    let scales = scale_range(1.0, 2.0, 0.125);
    let data = scaled_dataset(net, &scales, 1000, SEED)?;
    let counts = survival_counts(&data);
    let monotone = counts.windows(2).all(|w| w[1].1 <= w[0].1);
    let mut ok = monotone;
    let mut per_scale = Vec::new();
    let mut worst_mean = 0.0f64;
    for &(k, feasible, _) in &counts {
        let thetas: Vec<ParameterPoint> = data
            .iter()
            .filter(|s| s.scale == k && s.feasible)
            .map(|s| s.theta.clone())
            .collect();
        let s = evaluate(
            &net.problem,
            Some(&d.model),
            &thetas,
            &[Precision::Double],
            false,
            true,
        )?;
        let t = s.table("CF64").unwrap();
        let mean = t.condition_columns().map(|c| c.mean).fold(0.0, f64::max);
        worst_mean = worst_mean.max(mean);
        ok &= mean <= 1e-12;
        per_scale.push(format!(
            "k={k}: {feasible} feasible, {} undiscovered",
            s.undiscovered
        ));
    }
    verdict(
        ok,
        format!(
            "survival {:?} ({}); largest column mean {worst_mean:.1e} in discovered regions; rejected {:?}; {}",
            counts.iter().map(|c| c.1).collect::<Vec<_>>(),
            if monotone { "non-increasing" } else { "NOT monotone" },
            d.summary.rejected,
            per_scale.join(", ")
        ),
    )
}

fn criterion_8(m: &Models) -> Result<Verdict> {
    let big = discover::run(&DiscoverArgs {
        steps: 20,
        root_term: RootTermArg::Linear,
        scales: Some(vec![0.5, 1.0]),
        ..DiscoverArgs::new(SourceArgs::builtin(Builtin::Synthetic57))
    })?;
    let n = big.workspace.problem().n();
    let thetas = big.workspace.feasible_samples(1000, SEED)?;
    let model = model64(&big);
    let start = Instant::now();
    let out = model.batch_forward(&thetas);
    let batch = start.elapsed().as_secs_f64();
    ensure!(out.len() == 1000);
    let lines = &m.six_bus_lines;
    let heavy = bench(
        lines.workspace.problem(),
        &lines.model,
        &lines.workspace.feasible_samples(1000, SEED)?,
        3,
    )?;
    let small = &m.transport;
    let light = bench(
        small.workspace.problem(),
        &small.model,
        &small.workspace.feasible_samples(1000, SEED)?,
        5,
    )?;
    let speedup = heavy.speedup.unwrap_or(0.0);
    verdict(
        batch < 1.0 && speedup > 100.0,
        format!(
            "n = {n}, {} regions: 1000 θ in {batch:.4} s; bench speedup {speedup:.0}x on 6-bus with limits (m2 = {}), {:.0}x on 2D",
            model.len(),
            lines.workspace.problem().m2(),
            light.speedup.unwrap_or(0.0)
        ),
    )
}

fn criterion_9(m: &Models) -> Result<Verdict> {
    let d = &m.six_bus;
    let net = d.workspace.network().expect("grid input");
    let data = renewable_planning_dataset(net, 24, 500, SEED)?;
    ensure!(data.len() == 12_000);
    let thetas: Vec<ParameterPoint> = data
        .iter()
        .filter(|s| s.feasible)
        .map(|s| s.theta.clone())
        .collect();
    let model = model64(d);
    let start = Instant::now();
    let sols = model.batch_forward(&thetas);
    let mut table = KktTable::new(&net.problem);
    for (s, t) in sols.iter().zip(&thetas) {
        table.push(&kkt_report(&net.problem, s, t));
    }
    let secs = start.elapsed().as_secs_f64();
    let covered = evaluate(
        &net.problem,
        Some(&d.model),
        &thetas,
        &[Precision::Double],
        false,
        true,
    )?;
    let t = covered.table("CF64").unwrap();
    let mean = t.condition_columns().map(|c| c.mean).fold(0.0, f64::max);
    verdict(
        secs < 5.0 && mean <= 1e-18,
        format!(
            "{} feasible of {} θ evaluated with KKT in {secs:.3} s; largest column mean {mean:.1e}; {} undiscovered",
            thetas.len(),
            data.len(),
            covered.undiscovered
        ),
    )
}

fn random_problem(rng: &mut ChaCha8Rng) -> MpQpProblem {
    let n = rng.random_range(2..6);
    let m1 = rng.random_range(0..2);
    let m2 = rng.random_range(1..7);
    let mut g = |r: usize, c: usize| -> Vec<Vec<f64>> {
        (0..r)
            .map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    };
    let l = g(n, n);
    let a_e = g(m1, n);
    let a_c = g(m2, n);
    let q = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n).map(|k| l[i][k] * l[j][k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let c = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let b_e = (0..m1).map(|_| rng.random_range(-0.5..0.5)).collect();
    let b_c = (0..m2).map(|_| rng.random_range(-1.5..-0.1)).collect();
    MpQpProblem::new(ProblemData {
        q,
        c,
        c0: 0.0,
        a_e,
        b_e,
        a_c,
        b_c,
        groups: vec![],
    })
    .unwrap()
}

fn criterion_10() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut exact, mut digest, mut truncated) = (0, 0, 0);
    for _ in 0..100 {
        let p = random_problem(&mut rng);
        let theta = |rng: &mut ChaCha8Rng| {
            ParameterPoint::from_stacked(
                &p,
                (0..p.d()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };
        let t0 = theta(&mut rng);
        let mut model = init_model::<f64>(&p, &ActiveSet::empty(), &t0)?;
        for _ in 0..rng.random_range(0..4) {
            let parent = rng.random_range(0..model.len());
            let k = rng.random_range(0..=(p.n() - p.m1()).min(p.m2()));
            let mut rows: Vec<usize> = (1..=p.m2()).collect();
            for i in (1..rows.len()).rev() {
                rows.swap(i, rng.random_range(0..=i));
            }
            let set = ActiveSet::new(rows[..k].to_vec(), p.m2())?;
            let probe = theta(&mut rng);
            let _ = model.expand(&p, parent, &set, &probe);
        }
        let single: ClosedFormModel<f32> = model.cast();
        let bytes = serialize(&model);
        let back: ClosedFormModel<f64> = deserialize(&bytes, &p)?;
        let back32: ClosedFormModel<f32> = deserialize(&serialize(&single), &p)?;
        let t = theta(&mut rng);
        let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits());
        if back == model && back32 == single && same(&back.forward(&t).x, &model.forward(&t).x) {
            exact += 1;
        }
        let mut c = p.c().to_vec();
        c[0] += 1e-9;
        let other = MpQpProblem::new(ProblemData {
            q: p.q().to_rows(),
            c,
            c0: p.c0(),
            a_e: p.a_e().to_rows(),
            b_e: p.b_e().to_vec(),
            a_c: p.a_c().to_rows(),
            b_c: p.b_c().to_vec(),
            groups: vec![],
        })?;
        if matches!(
            deserialize::<f64>(&bytes, &other),
            Err(Error::DigestMismatch { .. })
        ) {
            digest += 1;
        }
        if deserialize::<f64>(&bytes[..rng.random_range(0..bytes.len())], &p).is_err() {
            truncated += 1;
        }
    }
    verdict(
        exact == 100 && digest == 100 && truncated == 100,
        format!("bit-exact {exact}/100, digest mismatch rejected {digest}/100, truncation rejected {truncated}/100"),
    )
}

fn main() {
    let _ = env_logger::builder()
        .is_test(true)
        .filter_level(log::LevelFilter::Error)
        .try_init();
    let models = discover_all();
    let needs = |f: &dyn Fn(&Models) -> Result<Verdict>| -> Result<Verdict> {
        match &models {
            Ok(m) => f(m),
            Err(e) => Err(anyhow::anyhow!("discovery failed: {e:#}")),
        }
    };
    let results: Vec<(u8, &str, Result<Verdict>)> = vec![
        (1, "2D region recovery", criterion_1()),
        (2, "64-bit exactness", needs(&criterion_2)),
        (3, "32-bit degradation bound", needs(&criterion_3)),
        (4, "oracle equivalence", needs(&criterion_4)),
        (5, "continuity", needs(&criterion_5)),
        (6, "transition structure", needs(&criterion_6)),
        (7, "line-limit pattern", needs(&criterion_7)),
        (8, "batch throughput", needs(&criterion_8)),
        (9, "renewable planning sweep", needs(&criterion_9)),
        (10, "serialization", criterion_10()),
    ];
    let mut failed = 0;
    for (id, name, r) in results {
        let (passed, detail) = match r {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!passed);
        println!(
            "criterion {id:>2} {}: {name}: {detail}",
            if passed { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
