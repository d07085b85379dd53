//! Command-line front end: argument parsing, configuration merging and the
//! `plan`, `sweep`, `compare`, `metrics` and `gen-geometry` commands.
//!
//! Every command writes its fully resolved configuration to
//! `<output>/run_config.json`; passing that file back with `--config`
//! reproduces the outputs byte for byte.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{GeometryKind, MethodKind, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::TargetGeometry;
use crate::io::{self, MetricRow, Provenance};
use crate::metrics::{self, MetricReport};
use crate::osmo::solve_osmo;
use crate::projector::{DoseImage, Projector};
use crate::solver::{solve_volume, SolveResult};
use crate::sweep::{self, Metric, SweepGrid, SweepOptions, SweepSummary};

pub const CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Parser)]
#[command(name = "tvam", version, about = "Illumination-plan optimization for tomographic volumetric printing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one illumination plan and write plan, dose, history, metrics and histogram.
    Plan(RunArgs),
    /// Evaluate a method over a grid of threshold pairs.
    Sweep(SweepArgs),
    /// Run two configurations on the same geometry and tabulate their metrics.
    Compare(CompareArgs),
    /// Recompute metrics from a saved dose and geometry.
    Metrics(MetricsArgs),
    /// Write a built-in or imported geometry as a label volume.
    GenGeometry(GenGeometryArgs),
}

/// Flags mirroring [`RunConfig`]; each overrides the value from `--config`.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// JSON configuration supplying any subset of the fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,

    /// disk, gyroid, logo, resolution-test, illustration or file.
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nz: Option<usize>,
    #[arg(long)]
    pub radius_fraction: Option<f64>,
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub solid_fraction: Option<f64>,
    /// Image file for `--geometry file`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,

    #[arg(long)]
    pub n_angles: Option<usize>,
    #[arg(long)]
    pub n_bins: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub angle_offset: Option<f64>,

    /// l2n, osp, ospw or osmo.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub tau_lower: Option<f64>,
    #[arg(long)]
    pub tau_upper: Option<f64>,
    /// OSPW dead-zone width, or `complement` for `1 - tau_upper`.
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<String>,
    #[arg(long)]
    pub min_projection_value: Option<f64>,

    #[arg(long)]
    pub iters: Option<usize>,
    /// Step size, or `auto`.
    #[arg(long)]
    pub step: Option<String>,
    /// zeros or clipped_fbp.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub norm_iters: Option<usize>,

    /// Percent trimmed from each end of the dose distributions.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub histogram_bins: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated threshold values, multiples of 0.01.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Skip pairs whose maximum dose exceeds 1 when selecting the optimum.
    #[arg(long, num_args = 1)]
    pub exclude_overdose: Option<bool>,
    /// Also render PNG colour maps.
    #[arg(long)]
    pub png: bool,
    /// Upper end of the VER colour scale in the PNG.
    #[arg(long)]
    pub ver_max_scale: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct CompareArgs {
    /// A resolved comparison written by a previous run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// First run configuration.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Second run configuration.
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct MetricsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dose file written by `plan`.
    #[arg(long)]
    pub dose: Option<PathBuf>,
    /// Geometry file written by `plan` or `gen-geometry`.
    #[arg(long = "labels")]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub histogram_bins: Option<usize>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct GenGeometryArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

fn set(root: &mut Value, path: &[&str], v: Value) {
    let mut cur = root;
    for key in &path[..path.len() - 1] {
        if !cur.get(*key).is_some_and(Value::is_object) {
            cur[*key] = json!({});
        }
        cur = cur.get_mut(*key).unwrap();
    }
    cur[path[path.len() - 1]] = v;
}

fn read_config_value(path: &Path) -> Result<Value> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    if !v.is_object() {
        return Err(Error::Config(vec![format!("{}: expected a JSON object", path.display())]));
    }
    Ok(v)
}

fn number_or_string(s: &str) -> Value {
    match s.parse::<f64>() {
        Ok(x) => json!(x),
        Err(_) => json!(s),
    }
}

impl RunArgs {
    /// Config file (if any) with every given flag applied on top.
    pub fn to_value(&self) -> Result<Value> {
        let mut v = match &self.config {
            Some(p) => read_config_value(p)?,
            None => json!({}),
        };
        macro_rules! put {
            ($field:expr, $path:expr) => {
                if let Some(x) = &$field {
                    set(&mut v, $path, json!(x));
                }
            };
        }
        put!(self.output, &["output"]);
        put!(self.geometry, &["geometry", "kind"]);
        put!(self.nx, &["geometry", "nx"]);
        put!(self.nz, &["geometry", "nz"]);
        put!(self.radius_fraction, &["geometry", "radius_fraction"]);
        put!(self.cells, &["geometry", "cells"]);
        put!(self.solid_fraction, &["geometry", "solid_fraction"]);
        put!(self.input, &["geometry", "path"]);
        put!(self.threshold, &["geometry", "threshold"]);
        put!(self.n_angles, &["projection", "n_angles"]);
        put!(self.n_bins, &["projection", "n_bins"]);
        put!(self.angle_offset, &["projection", "angle_offset"]);
        put!(self.method, &["method", "method"]);
        put!(self.tau_lower, &["method", "tau_lower"]);
        put!(self.tau_upper, &["method", "tau_upper"]);
        if let Some(w) = &self.w {
            set(&mut v, &["method", "w"], number_or_string(w));
        }
        put!(self.min_projection_value, &["method", "min_projection_value"]);
        put!(self.iters, &["solve", "max_iters"]);
        if let Some(s) = &self.step {
            set(&mut v, &["solve", "step"], number_or_string(s));
        }
        put!(self.init, &["solve", "init"]);
        put!(self.record_every, &["solve", "record_every"]);
        put!(self.seed, &["solve", "seed"]);
        put!(self.norm_iters, &["solve", "norm_iters"]);
        put!(self.alpha, &["alpha"]);
        put!(self.histogram_bins, &["histogram_bins"]);
        Ok(v)
    }

    pub fn to_config(&self) -> Result<RunConfig> {
        RunConfig::from_value(self.to_value()?)
    }
}

impl SweepArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut v = self.run.to_value()?;
        if let Some(g) = &self.grid {
            set(&mut v, &["sweep", "grid"], json!(g));
        }
        if let Some(b) = self.exclude_overdose {
            set(&mut v, &["sweep", "exclude_overdose"], json!(b));
        }
        if self.png {
            set(&mut v, &["sweep", "png"], json!(true));
        }
        if let Some(s) = self.ver_max_scale {
            set(&mut v, &["sweep", "ver_max_scale"], json!(s));
        }
        RunConfig::from_value(v)
    }
}

/// Label identifying a geometry in tables: kind plus a content-hash prefix.
pub fn geometry_tag(kind: GeometryKind, geom: &TargetGeometry) -> String {
    format!("{}-{}", kind.name(), &geom.content_hash()[..12])
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_config<T: Serialize>(dir: &Path, cfg: &T) -> Result<()> {
    io::save_json(dir.join(CONFIG_FILE), cfg)
}

/// Plan, dose and metrics of one configuration, computed in memory.
pub struct Planned {
    pub config: RunConfig,
    pub geometry: TargetGeometry,
    pub tag: String,
    pub result: SolveResult,
    pub rows: Vec<MetricRow>,
}

impl Planned {
    pub fn volume_report(&self) -> &MetricReport {
        &self.rows[0].report
    }
}

fn metric_rows(
    dose: &DoseImage,
    geom: &TargetGeometry,
    tag: &str,
    method: &str,
    (tau_lower, tau_upper, w): (f64, f64, f64),
    alpha: f64,
) -> Result<Vec<MetricRow>> {
    let row = |report| MetricRow {
        geometry: tag.to_string(),
        method: method.to_string(),
        tau_lower,
        tau_upper,
        w,
        report,
    };
    let mut rows = vec![row(metrics::evaluate(dose, geom, alpha)?)];
    if geom.nz() > 1 {
        rows.extend(metrics::evaluate_slices(dose, geom, alpha)?.into_iter().map(row));
    }
    Ok(rows)
}

/// Resolves `cfg` and runs its method.
pub fn run_plan(cfg: RunConfig) -> Result<Planned> {
    let (cfg, geom) = cfg.resolve()?;
    run_resolved(cfg, geom)
}

fn run_resolved(cfg: RunConfig, geom: TargetGeometry) -> Result<Planned> {
    let projector = Projector::new(cfg.projection_geometry(&geom)?)?;
    let result = match cfg.method.method {
        MethodKind::Osmo => solve_osmo(&geom, &projector, &cfg.method.osmo(&cfg.solve)?)?,
        _ => {
            let penalty = cfg.method.penalty()?.expect("penalty method");
            solve_volume(&geom, &projector, &penalty, &cfg.solve)?
        }
    };
    let tag = geometry_tag(cfg.geometry.kind, &geom);
    let (l, u) = cfg.method.thresholds();
    let rows = metric_rows(&result.dose, &geom, &tag, &cfg.method.label(), (l, u, cfg.method.w()), cfg.alpha)?;
    Ok(Planned {
        config: cfg,
        geometry: geom,
        tag,
        result,
        rows,
    })
}

/// Dose-sidecar fields that let `metrics` label its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DoseLabels {
    geometry: String,
    method: String,
    tau_lower: f64,
    tau_upper: f64,
    w: f64,
}

/// `plan`: writes `geometry.u8`, `plan.f32`, `dose.f32`, `history.csv`,
/// `metrics.csv`, `histogram.csv` (binary and table files with sidecars)
/// and the resolved configuration.
pub fn cmd_plan(cfg: RunConfig) -> Result<Planned> {
    let p = run_plan(cfg)?;
    let dir = p.config.output.clone();
    create_dir(&dir)?;
    let prov = Provenance::new(p.config.method.label(), p.config.hash());
    io::save_geometry(dir.join("geometry.u8"), &p.geometry, &prov)?;
    io::save_sinogram(dir.join("plan.f32"), &p.result.plan, &prov)?;
    io::save_dose(dir.join("dose.f32"), &p.result.dose, &prov)?;
    let (l, u) = p.config.method.thresholds();
    let labels = DoseLabels {
        geometry: p.tag.clone(),
        method: p.config.method.label(),
        tau_lower: l,
        tau_upper: u,
        w: p.config.method.w(),
    };
    set_extra(&dir.join("dose.f32"), serde_json::to_value(&labels).expect("labels serialize"))?;
    let pg = p.config.projection_geometry(&p.geometry)?;
    set_extra(&dir.join("plan.f32"), serde_json::to_value(pg).expect("geometry serializes"))?;
    io::save_history(dir.join("history.csv"), &p.result.history, &prov)?;
    io::save_metrics(dir.join("metrics.csv"), &p.rows, &prov)?;
    let hist = metrics::histogram(&p.result.dose, &p.geometry, p.config.histogram_bins)?;
    io::save_histogram(dir.join("histogram.csv"), &hist)?;
    write_config(&dir, &p.config)?;
    Ok(p)
}

fn set_extra(path: &Path, extra: Value) -> Result<()> {
    let mut header = io::read_header(path)?;
    header.extra = extra;
    io::save_json(io::sidecar_path(path), &header)
}

/// Resolved sweep plus its outcome.
pub struct Swept {
    pub config: RunConfig,
    pub grid: SweepGrid,
    pub summary: SweepSummary,
}

/// `sweep`: writes `sweep.csv`, `colormap_{pw,ipdr,ver}.csv` (and PNGs when
/// requested), `summary.json` and the resolved configuration.
pub fn cmd_sweep(cfg: RunConfig) -> Result<Swept> {
    let (cfg, geom) = cfg.resolve()?;
    let projector = Projector::new(cfg.projection_geometry(&geom)?)?;
    let tag = geometry_tag(cfg.geometry.kind, &geom);
    let opts = SweepOptions {
        grid: cfg.sweep.grid_hundredths()?,
        alpha: cfg.alpha,
        solve: cfg.solve,
        min_projection_value: cfg.method.min_projection_value,
    };
    let grid = sweep::run_sweep(&geom, &projector, cfg.method.sweep_method(), &tag, &opts)?;
    let summary = grid.summary(cfg.sweep.exclude_overdose);

    let dir = cfg.output.clone();
    create_dir(&dir)?;
    let prov = Provenance::new(grid.method.to_string(), cfg.hash());
    io::save_sweep(dir.join("sweep.csv"), &grid, &prov)?;
    for m in Metric::ALL {
        sweep::export_colormap(&grid, m, dir.join(format!("colormap_{}.csv", m.name())))?;
        if cfg.sweep.png {
            let scale = if m == Metric::Ver { cfg.sweep.ver_max_scale } else { None };
            sweep::export_colormap_png(&grid, m, dir.join(format!("colormap_{}.png", m.name())), scale, 12)?;
        }
    }
    io::save_json(dir.join("summary.json"), &summary)?;
    write_config(&dir, &cfg)?;
    Ok(Swept {
        config: cfg,
        grid,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub a: RunConfig,
    pub b: RunConfig,
    pub output: PathBuf,
}

/// `compare`: runs both configurations and writes `compare.csv` with one
/// whole-volume metric row each. Refuses geometries that differ.
pub fn cmd_compare(cfg: CompareConfig) -> Result<(Planned, Planned)> {
    let (ca, ga) = cfg.a.resolve()?;
    let (cb, gb) = cfg.b.resolve()?;
    if ga.content_hash() != gb.content_hash() {
        let describe = |c: &RunConfig, g: &TargetGeometry| {
            format!("{} ({}x{}x{})", geometry_tag(c.geometry.kind, g), g.nx(), g.nx(), g.nz())
        };
        return Err(Error::Shape(format!(
            "compare needs one geometry, got {} and {}",
            describe(&ca, &ga),
            describe(&cb, &gb)
        )));
    }
    let a = run_resolved(ca, ga)?;
    let b = run_resolved(cb, gb)?;
    let dir = cfg.output.clone();
    create_dir(&dir)?;
    let resolved = CompareConfig {
        a: a.config.clone(),
        b: b.config.clone(),
        output: dir.clone(),
    };
    let hash = io::config_hash(&(&resolved.a.hash(), &resolved.b.hash()));
    let rows = [a.rows[0].clone(), b.rows[0].clone()];
    io::save_metrics(dir.join("compare.csv"), &rows, &Provenance::new("compare", hash))?;
    write_config(&dir, &resolved)?;
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub dose: PathBuf,
    pub labels: PathBuf,
    pub alpha: f64,
    pub histogram_bins: usize,
    pub output: PathBuf,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            dose: PathBuf::from("dose.f32"),
            labels: PathBuf::from("geometry.u8"),
            alpha: 0.0,
            histogram_bins: 100,
            output: PathBuf::from("out"),
        }
    }
}

/// `metrics`: recomputes `metrics.csv` and `histogram.csv` from saved files.
pub fn cmd_metrics(cfg: MetricsConfig) -> Result<Vec<MetricRow>> {
    let mut errs = Vec::new();
    if !(0.0..50.0).contains(&cfg.alpha) {
        errs.push(format!("alpha must lie in [0, 50), got {}", cfg.alpha));
    }
    if cfg.histogram_bins < 2 {
        errs.push("histogram_bins must be >= 2".into());
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let dose = io::load_dose(&cfg.dose)?;
    let geom = io::load_geometry(&cfg.labels)?;
    let header = io::read_header(&cfg.dose)?;
    let labels: DoseLabels = serde_json::from_value(header.extra.clone()).unwrap_or(DoseLabels {
        geometry: format!("file-{}", &geom.content_hash()[..12]),
        method: header.provenance.method.clone(),
        tau_lower: f64::NAN,
        tau_upper: f64::NAN,
        w: f64::NAN,
    });
    let rows = metric_rows(
        &dose,
        &geom,
        &labels.geometry,
        &labels.method,
        (labels.tau_lower, labels.tau_upper, labels.w),
        cfg.alpha,
    )?;
    let dir = cfg.output.clone();
    create_dir(&dir)?;
    let prov = Provenance::new(labels.method.clone(), io::config_hash(&(&cfg.alpha, &cfg.histogram_bins, &header)));
    io::save_metrics(dir.join("metrics.csv"), &rows, &prov)?;
    io::save_histogram(dir.join("histogram.csv"), &metrics::histogram(&dose, &geom, cfg.histogram_bins)?)?;
    write_config(&dir, &cfg)?;
    Ok(rows)
}

/// `gen-geometry`: writes `geometry.u8` and the resolved configuration.
pub fn cmd_gen_geometry(cfg: RunConfig) -> Result<TargetGeometry> {
    let mut errs = Vec::new();
    let g = cfg.geometry.clone();
    let geom = match g.build() {
        Ok(geom) => geom,
        Err(e) => {
            errs.push(format!("geometry: {e}"));
            return Err(Error::Config(errs));
        }
    };
    let mut resolved = cfg;
    resolved.geometry.nx = geom.nx();
    resolved.geometry.nz = geom.nz();
    let dir = resolved.output.clone();
    create_dir(&dir)?;
    let prov = Provenance::new(resolved.geometry.kind.name(), io::config_hash(&resolved.geometry));
    io::save_geometry(dir.join("geometry.u8"), &geom, &prov)?;
    write_config(&dir, &resolved)?;
    Ok(geom)
}

fn summary_line(r: &MetricReport, max_dose: f64) -> String {
    format!(
        "pw={:.4} ipdr={:.4} ver={:.6} max_dose={:.4} (alpha={})",
        r.pw, r.ipdr, r.ver, max_dose, r.alpha
    )
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan(args) => {
            let p = cmd_plan(args.to_config()?)?;
            let max = metrics::max_dose(&p.result.dose, &p.geometry)?;
            println!("{} {}: {}", p.tag, p.config.method.label(), summary_line(p.volume_report(), max));
        }
        Command::Sweep(args) => {
            let s = cmd_sweep(args.to_config()?)?;
            let best = match (s.summary.optimal_pair, s.summary.optimal_pw) {
                (Some([l, u]), Some(pw)) => format!("optimal pair ({l:.2}, {u:.2}) pw={pw:.4}"),
                _ => "no admissible pair".to_string(),
            };
            println!(
                "{} {}: {} records, {} failed, {}",
                s.grid.geometry,
                s.grid.method,
                s.grid.records.len(),
                s.summary.n_failed,
                best
            );
        }
        Command::Compare(args) => {
            let cfg = match (&args.config, &args.a, &args.b) {
                (Some(path), _, _) => {
                    let mut c: CompareConfig = serde_json::from_value(read_config_value(path)?)
                        .map_err(|e| Error::Config(vec![e.to_string()]))?;
                    if let Some(o) = &args.output {
                        c.output = o.clone();
                    }
                    c
                }
                (None, Some(a), Some(b)) => CompareConfig {
                    a: RunConfig::from_value(read_config_value(a)?)?,
                    b: RunConfig::from_value(read_config_value(b)?)?,
                    output: args.output.clone().unwrap_or_else(|| PathBuf::from("out")),
                },
                _ => {
                    return Err(Error::Config(vec![
                        "compare needs --config, or both --a and --b".into(),
                    ]))
                }
            };
            let (a, b) = cmd_compare(cfg)?;
            for p in [&a, &b] {
                let max = metrics::max_dose(&p.result.dose, &p.geometry)?;
                println!("{} {}: {}", p.tag, p.config.method.label(), summary_line(p.volume_report(), max));
            }
        }
        Command::Metrics(args) => {
            let mut v = match &args.config {
                Some(p) => read_config_value(p)?,
                None => json!({}),
            };
            if let Some(d) = &args.dose {
                set(&mut v, &["dose"], json!(d));
            }
            if let Some(g) = &args.labels {
                set(&mut v, &["labels"], json!(g));
            }
            if let Some(a) = args.alpha {
                set(&mut v, &["alpha"], json!(a));
            }
            if let Some(b) = args.histogram_bins {
                set(&mut v, &["histogram_bins"], json!(b));
            }
            if let Some(o) = &args.output {
                set(&mut v, &["output"], json!(o));
            }
            let cfg: MetricsConfig =
                serde_json::from_value(v).map_err(|e| Error::Config(vec![e.to_string()]))?;
            let rows = cmd_metrics(cfg)?;
            let r = &rows[0];
            println!("{} {}: pw={:.4} ipdr={:.4} ver={:.6} (alpha={})", r.geometry, r.method, r.report.pw, r.report.ipdr, r.report.ver, r.report.alpha);
        }
        Command::GenGeometry(args) => {
            let cfg = args.run.to_config()?;
            let g = cmd_gen_geometry(cfg)?;
            println!(
                "{}x{}x{}: {} in, {} out, {} external",
                g.nx(),
                g.nx(),
                g.nz(),
                g.n_in(),
                g.n_out(),
                g.n_ext()
            );
        }
    }
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
