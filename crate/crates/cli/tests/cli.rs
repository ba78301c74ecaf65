use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn diffuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// A 400-node network, a one-bump profile, and one simulated contagion.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let f = Fixture { dir };
        ok(&diffuse(&[
            "net-gen",
            "--nodes",
            "400",
            "--m",
            "3",
            "--seed",
            "1",
            "--out",
            path_str(&f.path("edges.tsv")),
        ]));
        let profile: String = (0..=40)
            .map(|k| {
                let t = k as f64;
                format!("{t},{}\n", 0.05 * (-(t - 12.0f64).powi(2) / 32.0).exp())
            })
            .collect();
        fs::write(f.path("profile.csv"), format!("t,lambda\n{profile}")).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn simulate(&self, seed: &str, out: &Path) {
        ok(&diffuse(&[
            "simulate",
            "--edges",
            path_str(&self.path("edges.tsv")),
            "--rho1",
            "0.2",
            "--rho2",
            "2",
            "--profile",
            path_str(&self.path("profile.csv")),
            "--hazard",
            "linear:1",
            "--horizon",
            "40",
            "--seed",
            seed,
            "--out",
            path_str(out),
            "--truth",
            path_str(&self.path("truth.json")),
        ]));
    }
}

#[test]
fn net_gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    for p in [&a, &b] {
        ok(&diffuse(&[
            "net-gen",
            "--nodes",
            "100",
            "--m",
            "2",
            "--seed",
            "1",
            "--out",
            path_str(p),
        ]));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 6 + 97 * 2);
    assert!(text.lines().all(|l| l.split('\t').count() == 2));
}

#[test]
fn net_gen_rejects_too_few_nodes() {
    let out = diffuse(&["net-gen", "--nodes", "1", "--m", "2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("m >= nodes"));
}

#[test]
fn net_gen_writes_stdout_without_out() {
    let out = diffuse(&["net-gen", "--nodes", "3", "--m", "2"]);
    ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 6);
}

#[test]
fn zero_profile_gives_empty_trace() {
    let f = Fixture::new();
    fs::write(f.path("zero.csv"), "t,lambda\n0,0\n10,0\n").unwrap();
    let trace = f.path("trace.tsv");
    ok(&diffuse(&[
        "simulate",
        "--edges",
        path_str(&f.path("edges.tsv")),
        "--rho1",
        "0.5",
        "--rho2",
        "1",
        "--profile",
        path_str(&f.path("zero.csv")),
        "--hazard",
        "constant:1",
        "--horizon",
        "10",
        "--out",
        path_str(&trace),
        "--truth",
        path_str(&f.path("truth.json")),
    ]));
    assert_eq!(fs::read_to_string(&trace).unwrap(), "");
    let truth = read_json(&f.path("truth.json"));
    assert_eq!(truth["rho2"], 1.0);
    assert!(truth["external_infections"].as_array().unwrap().is_empty());
}

#[test]
fn oversized_step_is_an_error() {
    let f = Fixture::new();
    let out = diffuse(&[
        "simulate",
        "--edges",
        path_str(&f.path("edges.tsv")),
        "--rho1",
        "0.5",
        "--rho2",
        "1",
        "--profile",
        path_str(&f.path("profile.csv")),
        "--hazard",
        "constant:5",
        "--dt",
        "1",
        "--horizon",
        "10",
        "--out",
        path_str(&f.path("trace.tsv")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("time step too large"));
}

#[test]
fn simulate_is_deterministic() {
    let f = Fixture::new();
    f.simulate("3", &f.path("a.tsv"));
    f.simulate("3", &f.path("b.tsv"));
    let a = fs::read_to_string(f.path("a.tsv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, fs::read_to_string(f.path("b.tsv")).unwrap());
}

#[test]
fn infer_baseline_evaluate_pipeline() {
    let f = Fixture::new();
    let trace = f.path("trace.tsv");
    f.simulate("2", &trace);
    let edges = f.path("edges.tsv");
    let result = f.path("result.json");
    ok(&diffuse(&[
        "infer",
        "--edges",
        path_str(&edges),
        "--infections",
        path_str(&trace),
        "--hazard",
        "linear:1",
        "--rho2-max",
        "5",
        "--node-splits",
        "--out",
        path_str(&result),
    ]));
    let r = read_json(&result);
    let keys: Vec<&str> = r.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    for key in [
        "rho1",
        "rho2",
        "log_likelihood",
        "converged",
        "anchors",
        "external_fraction",
        "n_infections",
        "duration_hours",
    ] {
        assert!(keys.contains(&key), "missing {key}");
    }
    assert_eq!(r["anchors"].as_array().unwrap().len(), 20);
    let splits = fs::read_to_string(f.path("result.nodes.csv")).unwrap();
    assert!(splits.starts_with("node,time,external,internal\n"));
    assert_eq!(
        splits.lines().count() - 1,
        r["n_infections"].as_u64().unwrap() as usize
    );

    let base = f.path("baseline.json");
    ok(&diffuse(&[
        "baseline",
        "--edges",
        path_str(&edges),
        "--infections",
        path_str(&trace),
        "--bins",
        "20",
        "--out",
        path_str(&base),
    ]));
    let b = read_json(&base);
    assert!(b["lambda_naive"].as_array().unwrap().len() >= 20);
    assert!(b["eta_naive"].is_array());

    let eval = f.path("eval.json");
    ok(&diffuse(&[
        "evaluate",
        "--result",
        path_str(&result),
        "--truth",
        path_str(&f.path("truth.json")),
        "--baseline",
        path_str(&base),
        "--out",
        path_str(&eval),
    ]));
    let e = read_json(&eval);
    for key in [
        "l2_model",
        "l2_baseline",
        "peak_times_model",
        "peak_times_truth",
        "rho1_rel_err",
        "rho2_exact",
    ] {
        assert!(e.get(key).is_some(), "missing {key}");
    }
    assert!(e["l2_model"].as_f64().unwrap() >= 0.0);

    let stdout = diffuse(&[
        "evaluate",
        "--result",
        path_str(&result),
        "--truth",
        path_str(&f.path("truth.json")),
    ]);
    ok(&stdout);
    let e: Value = serde_json::from_slice(&stdout.stdout).unwrap();
    assert!(e["l2_baseline"].is_null());
}

#[test]
fn infer_needs_two_infections() {
    let f = Fixture::new();
    let trace = f.path("one.tsv");
    fs::write(&trace, "5\t1.0\n").unwrap();
    let out = diffuse(&[
        "infer",
        "--edges",
        path_str(&f.path("edges.tsv")),
        "--infections",
        path_str(&trace),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2 infections"));
}

#[test]
fn batch_infer_skips_failures_and_report_aggregates() {
    let f = Fixture::new();
    let traces = f.path("traces");
    fs::create_dir(&traces).unwrap();
    for seed in ["4", "5"] {
        f.simulate(seed, &traces.join(format!("c{seed}.tsv")));
    }
    fs::write(traces.join("broken.tsv"), "not a trace\n").unwrap();
    let results = f.path("results");
    let out = diffuse(&[
        "infer",
        "--edges",
        path_str(&f.path("edges.tsv")),
        "--infections",
        path_str(&traces),
        "--hazard",
        "linear:1",
        "--rho2-max",
        "4",
        "--jobs",
        "2",
        "--node-splits",
        "--out",
        path_str(&results),
    ]);
    assert_eq!(out.status.code(), Some(2), "partial failure exit code");
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.tsv"));
    assert!(results.join("c4.json").is_file());
    assert!(results.join("c5.json").is_file());
    assert!(!results.join("broken.json").exists());

    let labels = f.path("labels.csv");
    fs::write(&labels, "file,category\nc4.json,news\nc5,sports\n").unwrap();
    let report = f.path("report.csv");
    let figures = f.path("figures");
    ok(&diffuse(&[
        "report",
        "--results",
        path_str(&results),
        "--labels",
        path_str(&labels),
        "--out",
        path_str(&report),
        "--figures",
        path_str(&figures),
    ]));
    let text = fs::read_to_string(&report).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "category,n,rho1_mean,rho1_se,rho2_mean,rho2_se,duration_mean,duration_se,ext_frac_mean,ext_frac_se"
    );
    let cats: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert!(cats.contains(&"news") && cats.contains(&"sports"));
    for name in [
        "rho1_histogram.csv",
        "rho2_histogram.csv",
        "order_vs_internal.csv",
        "exposure_scatter.csv",
    ] {
        assert!(figures.join(name).is_file(), "missing {name}");
    }
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = TempDir::new().unwrap();
    let out = diffuse(&["report", "--results", path_str(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no result files"));
}

#[test]
fn bad_hazard_spec_is_rejected() {
    let f = Fixture::new();
    let out = diffuse(&[
        "infer",
        "--edges",
        path_str(&f.path("edges.tsv")),
        "--infections",
        path_str(&f.path("edges.tsv")),
        "--hazard",
        "weibull:2",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hazard"));
}
