use std::path::Path;
use std::process::{Command, Output};

use cfqp_core::fixtures::{transport_2d, transport_theta};
use cfqp_core::model_io::AnyModel;
use cfqp_core::{MpQpProblem, ProblemData};

fn cfqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfqp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn transport_model(dir: &Path) -> String {
    let m = path(dir, "m.json");
    let o = cfqp(&["discover", "--builtin", "transport", "-o", &m]);
    assert!(o.status.success(), "{}", text(&o));
    m
}

#[test]
fn equality_only_problem_has_one_region() {
    let dir = tempfile::tempdir().unwrap();
    let p = MpQpProblem::new(ProblemData {
        q: vec![vec![2.0, 0.0], vec![0.0, 1.0]],
        c: vec![1.0, -1.0],
        c0: 0.0,
        a_e: vec![vec![1.0, 1.0]],
        b_e: vec![3.0],
        a_c: vec![],
        b_c: vec![],
        groups: vec![],
    })
    .unwrap();
    let file = path(dir.path(), "p.json");
    std::fs::write(&file, p.to_json()).unwrap();
    let summary = path(dir.path(), "s.json");
    let o = cfqp(&[
        "discover",
        "--problem",
        &file,
        "--steps",
        "10",
        "--cap",
        "10",
        "--summary",
        &summary,
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    assert_eq!(s["regions"], 1);
}

#[test]
fn infeasible_start_exits_with_code_5() {
    let o = cfqp(&[
        "discover",
        "--builtin",
        "transport",
        "--theta0",
        "0,0,0,0,0,0,900,900,0,0",
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", text(&o));
}

#[test]
fn malformed_csv_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let m = transport_model(dir.path());
    let data = path(dir.path(), "bad.csv");
    let header: Vec<String> = (0..10).map(|i| format!("theta_{i}")).collect();
    std::fs::write(
        &data,
        format!(
            "{}\n{}\n{}\n",
            header.join(","),
            ["0"; 10].join(","),
            "0,0,0,0,0,0,x,0,0,0"
        ),
    )
    .unwrap();
    let o = cfqp(&[
        "kkt-report",
        "--builtin",
        "transport",
        "--model",
        &m,
        "--data",
        &data,
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
    assert!(text(&o).contains("bad.csv:3:"), "{}", text(&o));
}

#[test]
fn empty_dataset_reports_nothing_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let m = transport_model(dir.path());
    let data = path(dir.path(), "empty.csv");
    let header: Vec<String> = (0..10).map(|i| format!("theta_{i}")).collect();
    std::fs::write(&data, format!("feasible,{}\n", header.join(","))).unwrap();
    let o = cfqp(&[
        "kkt-report",
        "--builtin",
        "transport",
        "--model",
        &m,
        "--data",
        &data,
    ]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("0 points evaluated"), "{}", text(&o));
}

#[test]
fn oracle_report_is_tight() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "d.csv");
    let o = cfqp(&[
        "gen-data",
        "local",
        "--builtin",
        "transport",
        "--count",
        "200",
        "--seed",
        "4",
        "-o",
        &data,
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let json = path(dir.path(), "r.json");
    let o = cfqp(&[
        "kkt-report",
        "--builtin",
        "transport",
        "--oracle",
        "--data",
        &data,
        "--json",
        &json,
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    let table = &r["tables"][0];
    assert_eq!(table["label"], "oracle");
    for c in table["table"]["columns"].as_array().unwrap() {
        if c["name"] != "scalar" {
            assert!(c["mean"].as_f64().unwrap() <= 1e-16, "{c}");
        }
    }
}

#[test]
fn predict_matches_forward_on_one_point() {
    let dir = tempfile::tempdir().unwrap();
    let m = transport_model(dir.path());
    let p = transport_2d();
    let theta = transport_theta(&p, 137.0, 45.5);
    let data = path(dir.path(), "one.csv");
    let header: Vec<String> = (0..p.d()).map(|i| format!("theta_{i}")).collect();
    let row: Vec<String> = theta.stacked().iter().map(|v| v.to_string()).collect();
    std::fs::write(&data, format!("{}\n{}\n", header.join(","), row.join(","))).unwrap();
    let out = path(dir.path(), "pred.csv");
    let o = cfqp(&[
        "predict",
        "--builtin",
        "transport",
        "--model",
        &m,
        "--thetas",
        &data,
        "-o",
        &out,
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let want = AnyModel::load(&m, &p).unwrap().to_double().forward(&theta);
    let mut r = csv::Reader::from_path(&out).unwrap();
    let headers = r.headers().unwrap().clone();
    let rec = r.records().next().unwrap().unwrap();
    let col = |name: &str| {
        rec[headers.iter().position(|h| h == name).unwrap()]
            .parse::<f64>()
            .unwrap()
    };
    for (i, x) in want.x.iter().enumerate() {
        assert_eq!(col(&format!("x_{i}")), *x);
    }
    for (i, mu) in want.mu.iter().enumerate() {
        assert_eq!(col(&format!("mu_{i}")), *mu);
    }
}

#[test]
fn single_point_bench_makes_no_ratio_claim() {
    let dir = tempfile::tempdir().unwrap();
    let m = transport_model(dir.path());
    let o = cfqp(&[
        "bench",
        "--builtin",
        "transport",
        "--model",
        &m,
        "--count",
        "1",
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let out = text(&o);
    assert!(
        out.contains("model batch") && out.contains("oracle"),
        "{out}"
    );
    assert!(!out.contains("speedup:"), "{out}");
}

#[test]
fn model_for_another_problem_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let m = transport_model(dir.path());
    let data = path(dir.path(), "d.csv");
    assert!(cfqp(&[
        "gen-data",
        "local",
        "--builtin",
        "six-bus",
        "--count",
        "5",
        "-o",
        &data
    ])
    .status
    .success());
    let o = cfqp(&[
        "kkt-report",
        "--builtin",
        "six-bus",
        "--model",
        &m,
        "--data",
        &data,
    ]);
    assert_eq!(o.status.code(), Some(7), "{}", text(&o));
}

#[test]
fn imported_case_feeds_discovery() {
    let dir = tempfile::tempdir().unwrap();
    let src = path(dir.path(), "t.m");
    std::fs::write(
        &src,
        "function mpc = t\nmpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;\n2 1 80 0 0 0 1 1 0 230 1 1.1 0.9;\n];\n\
mpc.gen = [\n1 0 0 100 -100 1 100 1 150 0;\n2 0 0 100 -100 1 100 1 60 0;\n];\nmpc.branch = [\n1 2 0 0.1 0 90 90 90 0 0 1 -360 360;\n];\n\
mpc.gencost = [\n2 0 0 3 0.02 12 0;\n2 0 0 3 0.05 14 0;\n];\n",
    )
    .unwrap();
    let case = path(dir.path(), "t.json");
    let o = cfqp(&["import-case", "--matpower", &src, "-o", &case]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(
        text(&o).contains("2 buses, 2 generators, 1 lines"),
        "{}",
        text(&o)
    );
    let o = cfqp(&["discover", "--case", &case, "--lines", "--steps", "50"]);
    assert!(o.status.success(), "{}", text(&o));
}

#[test]
fn usage_errors_exit_with_code_2() {
    assert_eq!(cfqp(&["discover"]).status.code(), Some(2));
    assert_eq!(
        cfqp(&["discover", "--builtin", "transport", "--steps", "many"])
            .status
            .code(),
        Some(2)
    );
}
