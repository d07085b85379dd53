use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tvam_core::cli::main_with_args;
use tvam_core::io;
use tvam_core::sweep::{select_pw_optimal, Method, Status, SweepGrid, SweepRecord, SweepSummary, WRule};
use tvam_core::Error;

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["tvam"];
    v.extend_from_slice(args);
    main_with_args(v)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--nx", "32", "--n-angles", "30", "--iters", "100"];

fn plan(out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["plan", "-o", p(out)];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    run(&args)
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

#[test]
fn plan_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan");
    let code = plan(
        &out,
        &["--geometry", "disk", "--method", "ospw", "--w", "0", "--tau-lower", "0.70", "--tau-upper", "0.90"],
    );
    assert_eq!(code, 0);
    for f in ["geometry.u8", "plan.f32", "dose.f32", "history.csv", "metrics.csv", "histogram.csv", "run_config.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let dose = io::load_dose(out.join("dose.f32")).unwrap();
    let geom = io::load_geometry(out.join("geometry.u8")).unwrap();
    assert_eq!((dose.nx, geom.nx()), (32, 32));
    let plan = io::load_sinogram(out.join("plan.f32")).unwrap();
    assert!(plan.values.iter().all(|&v| v >= 0.0));
    let plan_header = io::read_header(out.join("plan.f32")).unwrap();
    assert_eq!(plan_header.extra["n_angles"], 30);
    assert_eq!(plan_header.extra["angle_offset"], 0.0);
    let dose_header = io::read_header(out.join("dose.f32")).unwrap();
    assert_eq!(dose_header.extra["tau_lower"], 0.7);
    let hist = io::load_history(out.join("history.csv")).unwrap();
    assert_eq!(hist.last().unwrap().0, 100);
    let rows = io::load_metrics(out.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].method, "ospw(w=0)");
}

#[test]
fn invalid_parameters_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    assert_eq!(plan(&out, &["--tau-lower", "0.9", "--tau-upper", "0.7"]), 2);
    assert!(!out.join("dose.f32").exists());
    assert_eq!(plan(&out, &["--tau-lower", "2"]), 2);
    assert_eq!(plan(&out, &["--method", "bogus"]), 2);
    assert_eq!(run(&["plan", "--no-such-flag"]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["--version"]), 0);
}

#[test]
fn osmo_collapse_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("osmo");
    let code = run(&[
        "plan", "-o", p(&out), "--nx", "32", "--n-angles", "45", "--iters", "300", "--method", "osmo",
        "--tau-lower", "0.04", "--tau-upper", "0.08",
    ]);
    assert_eq!(code, 3);
    assert!(!out.join("dose.f32").exists());
}

#[test]
fn missing_inputs_exit_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["plan", "--config", p(&missing)]), 4);
    let png = dir.path().join("nope.png");
    assert_eq!(run(&["plan", "-o", p(dir.path()), "--geometry", "file", "--input", p(&png)]), 4);
    assert_eq!(
        run(&["metrics", "--dose", p(&dir.path().join("d.f32")), "--labels", p(&dir.path().join("g.u8"))]),
        4
    );
}

#[test]
fn plan_reruns_from_its_config_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(plan(&a, &["--geometry", "gyroid", "--nz", "3", "--method", "osp"]), 0);
    let cfg = a.join("run_config.json");
    assert_eq!(run(&["plan", "--config", p(&cfg), "-o", p(&b)]), 0);
    for f in file_names(&a) {
        if f == "run_config.json" {
            continue;
        }
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f}");
    }
    let (mut ca, mut cb) = (read_json(&cfg), read_json(b.join("run_config.json")));
    ca["output"] = Value::Null;
    cb["output"] = Value::Null;
    assert_eq!(ca, cb);
}

#[test]
fn config_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert_eq!(plan(&a, &["--method", "l2n"]), 0);
    let b = dir.path().join("b");
    assert_eq!(run(&["plan", "--config", p(&a.join("run_config.json")), "-o", p(&b), "--tau-upper", "0.95"]), 0);
    let cfg = read_json(b.join("run_config.json"));
    assert_eq!(cfg["method"]["tau_upper"], 0.95);
    assert_eq!(cfg["method"]["method"], "l2n");
}

fn sweep(out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["sweep", "-o", p(out), "--nx", "32", "--n-angles", "30", "--iters", "60"];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn three_value_grid_gives_three_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    assert_eq!(sweep(&out, &["--method", "ospw", "--w", "0", "--grid", "0.5,0.7,0.9", "--png"]), 0);
    let grid = io::load_sweep(out.join("sweep.csv")).unwrap();
    assert_eq!(grid.records.len(), 3);
    let pairs: Vec<(u32, u32)> = grid.records.iter().map(|r| (r.tau_lower, r.tau_upper)).collect();
    assert_eq!(pairs, vec![(50, 70), (50, 90), (70, 90)]);
    assert!(grid.records.iter().all(|r| r.status == Status::Ok));
    for m in ["pw", "ipdr", "ver"] {
        assert!(out.join(format!("colormap_{m}.csv")).exists());
        assert!(out.join(format!("colormap_{m}.png")).exists());
    }
    let summary: SweepSummary = io::load_json(out.join("summary.json")).unwrap();
    assert_eq!(summary.n_records, 3);
    assert!(summary.exclude_overdose);
    let (l, u) = select_pw_optimal(&grid, true).unwrap();
    assert_eq!(summary.optimal_pair, Some([l, u]));

    // The sweep is deterministic, including its sidecars.
    let again = dir.path().join("s2");
    assert_eq!(run(&["sweep", "--config", p(&out.join("run_config.json")), "-o", p(&again)]), 0);
    for f in ["sweep.csv", "sweep.csv.json", "colormap_pw.csv", "colormap_pw.png", "summary.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn overdose_filter_can_be_disabled() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    assert_eq!(sweep(&out, &["--method", "osp", "--grid", "0.6,0.9,0.99", "--exclude-overdose=false"]), 0);
    let summary: SweepSummary = io::load_json(out.join("summary.json")).unwrap();
    assert!(!summary.exclude_overdose);
    let grid = io::load_sweep(out.join("sweep.csv")).unwrap();
    let (l, u) = select_pw_optimal(&grid, false).unwrap();
    assert_eq!(summary.optimal_pair, Some([l, u]));
    assert_eq!(sweep(&dir.path().join("t"), &["--exclude-overdose", "maybe"]), 2);
}

fn record(l: u32, u: u32, pw: f64, max_dose: f64) -> SweepRecord {
    SweepRecord {
        tau_lower: l,
        tau_upper: u,
        w: 0.0,
        status: Status::Ok,
        pw: Some(pw),
        ipdr: Some(0.1),
        ver: Some(0.0),
        max_dose: Some(max_dose),
        message: None,
    }
}

#[test]
fn overdose_filter_skips_pairs_above_unit_dose() {
    let grid = SweepGrid {
        tau_values: vec![60, 80, 96],
        method: Method::Ospw { w: WRule::Fixed(0.0) },
        geometry: "disk".into(),
        iters: 10,
        alpha: 0.025,
        records: vec![record(60, 80, 0.15, 0.95), record(60, 96, 0.25, 1.2), record(80, 96, 0.15, 0.99)],
    };
    assert_eq!(select_pw_optimal(&grid, false).unwrap(), (0.60, 0.96));
    // Equal PW ties go to the larger upper threshold.
    assert_eq!(select_pw_optimal(&grid, true).unwrap(), (0.80, 0.96));
    let none = SweepGrid {
        records: vec![record(60, 80, 0.1, 1.5)],
        ..grid
    };
    assert!(matches!(select_pw_optimal(&none, true), Err(Error::NoAdmissiblePair)));
}

fn write_config(path: &Path, v: &Value) -> PathBuf {
    fs::write(path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

#[test]
fn compare_shares_one_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(plan(&a, &["--method", "osp"]), 0);
    assert_eq!(plan(&b, &["--method", "ospw", "--w", "0"]), 0);
    let (ca, cb) = (a.join("run_config.json"), b.join("run_config.json"));

    let out = dir.path().join("cmp");
    assert_eq!(run(&["compare", "--a", p(&ca), "--b", p(&cb), "-o", p(&out)]), 0);
    let rows = io::load_metrics(out.join("compare.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].geometry, rows[1].geometry);
    assert_eq!((rows[0].method.as_str(), rows[1].method.as_str()), ("osp", "ospw(w=0)"));
    // Rows match the standalone plans.
    assert_eq!(rows[0], io::load_metrics(a.join("metrics.csv")).unwrap()[0]);

    let same = dir.path().join("same");
    assert_eq!(run(&["compare", "--a", p(&ca), "--b", p(&ca), "-o", p(&same)]), 0);
    let rows = io::load_metrics(same.join("compare.csv")).unwrap();
    assert_eq!(rows[0], rows[1]);

    // A saved compare configuration reproduces the output.
    let again = dir.path().join("again");
    assert_eq!(run(&["compare", "--config", p(&out.join("run_config.json")), "-o", p(&again)]), 0);
    assert_eq!(fs::read(out.join("compare.csv")).unwrap(), fs::read(again.join("compare.csv")).unwrap());
}

#[test]
fn compare_refuses_different_geometries() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert_eq!(plan(&a, &["--method", "osp"]), 0);
    let mut other = read_json(a.join("run_config.json"));
    other["geometry"]["nx"] = 40.into();
    other["projection"]["n_bins"] = Value::Null;
    let cb = write_config(&dir.path().join("b.json"), &other);
    let out = dir.path().join("cmp");
    assert_eq!(run(&["compare", "--a", p(&a.join("run_config.json")), "--b", p(&cb), "-o", p(&out)]), 2);
    assert!(!out.join("compare.csv").exists());
    assert_eq!(run(&["compare", "--a", p(&cb)]), 2);
}

#[test]
fn metrics_command_matches_plan_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert_eq!(plan(&a, &["--method", "ospw", "--w", "0"]), 0);
    let out = dir.path().join("m");
    let code = run(&[
        "metrics", "--dose", p(&a.join("dose.f32")), "--labels", p(&a.join("geometry.u8")), "-o", p(&out),
    ]);
    assert_eq!(code, 0);
    let got = io::load_metrics(out.join("metrics.csv")).unwrap();
    let want = io::load_metrics(a.join("metrics.csv")).unwrap();
    assert_eq!(got[0].report, want[0].report);
    assert_eq!(got[0].tau_lower, 0.7);
    assert!(out.join("histogram.csv").exists());

    let untrimmed = dir.path().join("m0");
    let code = run(&[
        "metrics", "--dose", p(&a.join("dose.f32")), "--labels", p(&a.join("geometry.u8")), "--alpha", "0",
        "-o", p(&untrimmed),
    ]);
    assert_eq!(code, 0);
    let raw = io::load_metrics(untrimmed.join("metrics.csv")).unwrap();
    assert!(raw[0].report.pw <= got[0].report.pw);
    assert_eq!(
        run(&["metrics", "--dose", p(&a.join("dose.f32")), "--labels", p(&a.join("geometry.u8")), "--alpha", "60"]),
        2
    );
}

#[test]
fn gen_geometry_writes_labels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let code = run(&["gen-geometry", "-o", p(&out), "--geometry", "gyroid", "--nx", "48", "--nz", "4"]);
    assert_eq!(code, 0);
    let g = io::load_geometry(out.join("geometry.u8")).unwrap();
    assert_eq!((g.nx(), g.nz()), (48, 4));
    assert!(out.join("run_config.json").exists());
    assert_eq!(run(&["gen-geometry", "-o", p(&out), "--geometry", "disk", "--radius-fraction", "1.5"]), 2);
}
