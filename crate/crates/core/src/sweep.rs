//! Threshold-pair sweeps and PW-optimal selection.
//!
//! Threshold values are stored as integer hundredths so grid keys are exact
//! in every output. The default grid is `0.00, 0.04, …, 1.00` (26 values),
//! giving 325 ordered pairs `τ_lower < τ_upper`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TargetGeometry;
use crate::metrics::DoseSplit;
use crate::osmo::{solve_osmo_batch, OsmoLane, OsmoOptions};
use crate::penalty::{Lane, PenaltyConfig, PenaltyFamily};
use crate::projector::Projector;
use crate::solver::{check_geometry, solve_batch, SolveOptions, SolveResult};

/// How the OSPW dead-zone width follows the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WRule {
    Fixed(f64),
    /// `w = max(0, 1 − τ_upper)`.
    Complement,
}

pub fn apply_w_rule(tau_upper: f64, rule: WRule) -> f64 {
    match rule {
        WRule::Fixed(w) => w,
        WRule::Complement => (1.0 - tau_upper).max(0.0),
    }
}

impl fmt::Display for WRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WRule::Fixed(w) => write!(f, "{w}"),
            WRule::Complement => f.write_str("complement"),
        }
    }
}

impl FromStr for WRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("complement") {
            return Ok(WRule::Complement);
        }
        let w: f64 = s
            .parse()
            .map_err(|_| Error::Parameter(format!("w must be a number or \"complement\", got {s:?}")))?;
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Parameter(format!("w must be >= 0, got {w}")));
        }
        Ok(WRule::Fixed(w))
    }
}

impl Serialize for WRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            WRule::Fixed(w) => s.serialize_f64(*w),
            WRule::Complement => s.serialize_str("complement"),
        }
    }
}

impl<'de> Deserialize<'de> for WRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(w) => Ok(WRule::Fixed(w)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Planning method evaluated at each threshold pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    L2n,
    Osp,
    Ospw { w: WRule },
    Osmo,
}

impl Method {
    /// Penalty configuration for a pair, `None` for OSMO.
    pub fn penalty(&self, tau_lower: f64, tau_upper: f64) -> Result<Option<PenaltyConfig>> {
        let (family, w) = match *self {
            Method::L2n => (PenaltyFamily::L2n, 0.0),
            Method::Osp => (PenaltyFamily::Osp, 0.0),
            Method::Ospw { w } => (PenaltyFamily::Ospw, apply_w_rule(tau_upper, w)),
            Method::Osmo => return Ok(None),
        };
        PenaltyConfig::new(family, tau_lower, tau_upper, w).map(Some)
    }

    /// Dead-zone width recorded for a pair.
    pub fn w_for(&self, tau_upper: f64) -> f64 {
        match *self {
            Method::Ospw { w } => apply_w_rule(tau_upper, w),
            _ => 0.0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::L2n => f.write_str("l2n"),
            Method::Osp => f.write_str("osp"),
            Method::Ospw { w } => write!(f, "ospw(w={w})"),
            Method::Osmo => f.write_str("osmo"),
        }
    }
}

/// The default 26-value grid in hundredths.
pub fn default_grid() -> Vec<u32> {
    (0..=25).map(|k| 4 * k).collect()
}

/// Parses a threshold to hundredths, rejecting values off the 0.01 lattice.
pub fn to_hundredths(v: f64) -> Result<u32> {
    let h = (v * 100.0).round();
    if !(0.0..=100.0).contains(&h) || (h / 100.0 - v).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "grid values must be multiples of 0.01 in [0, 1], got {v}"
        )));
    }
    Ok(h as u32)
}

pub fn hundredths(h: u32) -> f64 {
    h as f64 / 100.0
}

/// All pairs `(lower, upper)` with `lower < upper`, lower-major.
pub fn grid_pairs(grid: &[u32]) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for (i, &l) in grid.iter().enumerate() {
        for &u in &grid[i + 1..] {
            pairs.push((l, u));
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Hundredths.
    pub tau_lower: u32,
    /// Hundredths.
    pub tau_upper: u32,
    pub w: f64,
    pub status: Status,
    pub pw: Option<f64>,
    pub ipdr: Option<f64>,
    pub ver: Option<f64>,
    /// Maximum dose over IN ∪ OUT.
    pub max_dose: Option<f64>,
    pub message: Option<String>,
}

impl SweepRecord {
    pub fn tau_lower(&self) -> f64 {
        hundredths(self.tau_lower)
    }

    pub fn tau_upper(&self) -> f64 {
        hundredths(self.tau_upper)
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Pw => self.pw,
            Metric::Ipdr => self.ipdr,
            Metric::Ver => self.ver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Hundredths, ascending.
    pub tau_values: Vec<u32>,
    pub method: Method,
    pub geometry: String,
    pub iters: usize,
    pub alpha: f64,
    pub records: Vec<SweepRecord>,
}

impl SweepGrid {
    pub fn n_failed(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn record(&self, tau_lower: u32, tau_upper: u32) -> Option<&SweepRecord> {
        self.records
            .iter()
            .find(|r| r.tau_lower == tau_lower && r.tau_upper == tau_upper)
    }

    /// PW-maximizing successful record; with `exclude_overdose`, records
    /// whose maximum dose exceeds 1 are skipped. Ties go to the larger
    /// `τ_upper`, then the larger `τ_lower`.
    pub fn best(&self, exclude_overdose: bool) -> Option<&SweepRecord> {
        self.records
            .iter()
            .filter(|r| r.is_ok() && r.pw.is_some())
            .filter(|r| !exclude_overdose || r.max_dose.is_some_and(|m| m <= 1.0))
            .max_by(|a, b| {
                a.pw.unwrap()
                    .total_cmp(&b.pw.unwrap())
                    .then(a.tau_upper.cmp(&b.tau_upper))
                    .then(a.tau_lower.cmp(&b.tau_lower))
            })
    }

    pub fn summary(&self, exclude_overdose: bool) -> SweepSummary {
        let best = self.best(exclude_overdose);
        SweepSummary {
            method: self.method.to_string(),
            geometry: self.geometry.clone(),
            optimal_pair: best.map(|r| [r.tau_lower(), r.tau_upper()]),
            optimal_pw: best.and_then(|r| r.pw),
            n_records: self.records.len(),
            n_failed: self.n_failed(),
            exclude_overdose,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub method: String,
    pub geometry: String,
    pub optimal_pair: Option<[f64; 2]>,
    pub optimal_pw: Option<f64>,
    pub n_records: usize,
    pub n_failed: usize,
    pub exclude_overdose: bool,
}

/// Returns `(τ_lower, τ_upper)` of [`SweepGrid::best`].
pub fn select_pw_optimal(grid: &SweepGrid, exclude_overdose: bool) -> Result<(f64, f64)> {
    grid.best(exclude_overdose)
        .map(|r| (r.tau_lower(), r.tau_upper()))
        .ok_or(Error::NoAdmissiblePair)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Hundredths; sorted and deduplicated before use.
    pub grid: Vec<u32>,
    pub alpha: f64,
    /// Iteration count, seed and step for every pair.
    pub solve: SolveOptions,
    /// OSMO floor on sinogram values.
    #[serde(default)]
    pub min_projection_value: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            grid: default_grid(),
            alpha: 0.0,
            solve: SolveOptions::default(),
            min_projection_value: 0.0,
        }
    }
}

/// Runs `method` at every pair of the grid on a single-slice geometry.
/// Failures at individual pairs are recorded and never abort the sweep.
pub fn run_sweep(
    geom: &TargetGeometry,
    projector: &Projector,
    method: Method,
    geometry_tag: &str,
    opts: &SweepOptions,
) -> Result<SweepGrid> {
    if geom.nz() != 1 {
        return Err(Error::Shape(format!("sweeps need one slice, got {}", geom.nz())));
    }
    check_geometry(geom, projector)?;
    if opts.solve.max_iters == 0 {
        return Err(Error::Parameter("sweep iterations must be >= 1".into()));
    }
    if !(0.0..50.0).contains(&opts.alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 50), got {}", opts.alpha)));
    }
    let mut grid = opts.grid.clone();
    grid.sort_unstable();
    grid.dedup();
    if grid.iter().any(|&h| h > 100) {
        return Err(Error::Parameter("grid values must lie in [0, 1]".into()));
    }
    let pairs = grid_pairs(&grid);
    if pairs.is_empty() {
        return Err(Error::Parameter("grid needs at least two values".into()));
    }

    let labels = geom.labels();
    let results: Vec<Result<SolveResult>> = match method {
        Method::Osmo => {
            let lanes: Vec<OsmoLane<'_>> = pairs
                .iter()
                .map(|&(l, u)| OsmoLane {
                    labels,
                    tau_lower: hundredths(l),
                    tau_upper: hundredths(u),
                })
                .collect();
            let osmo = OsmoOptions {
                tau_lower: hundredths(pairs[0].0),
                tau_upper: hundredths(pairs[0].1),
                max_iters: opts.solve.max_iters,
                min_projection_value: opts.min_projection_value,
                record_every: opts.solve.record_every,
            };
            solve_osmo_batch(projector, &lanes, &osmo)?
        }
        _ => {
            let mut lanes = Vec::with_capacity(pairs.len());
            for &(l, u) in &pairs {
                let cfg = method.penalty(hundredths(l), hundredths(u))?.unwrap();
                lanes.push(Lane { labels, cfg });
            }
            solve_batch(projector, &lanes, &opts.solve)?
        }
    };

    let records = pairs
        .iter()
        .zip(results)
        .map(|(&(l, u), r)| {
            let w = method.w_for(hundredths(u));
            match r.and_then(|s| DoseSplit::new(&s.dose.values, labels)) {
                Ok(split) => SweepRecord {
                    tau_lower: l,
                    tau_upper: u,
                    w,
                    status: Status::Ok,
                    pw: Some(split.process_window(opts.alpha)),
                    ipdr: Some(split.in_part_dose_range(opts.alpha)),
                    ver: Some(split.voxel_error_rate(opts.alpha)),
                    max_dose: Some(split.max()),
                    message: None,
                },
                Err(e) => SweepRecord {
                    tau_lower: l,
                    tau_upper: u,
                    w,
                    status: Status::Failed,
                    pw: None,
                    ipdr: None,
                    ver: None,
                    max_dose: None,
                    message: Some(e.to_string()),
                },
            }
        })
        .collect();

    Ok(SweepGrid {
        tau_values: grid,
        method,
        geometry: geometry_tag.to_string(),
        iters: opts.solve.max_iters,
        alpha: opts.alpha,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Pw,
    Ipdr,
    Ver,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Pw, Metric::Ipdr, Metric::Ver];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Pw => "pw",
            Metric::Ipdr => "ipdr",
            Metric::Ver => "ver",
        }
    }
}

/// Dense colour-map matrix: rows follow `τ_lower`, columns `τ_upper`;
/// `None` where no successful record exists.
pub fn colormap_matrix(grid: &SweepGrid, metric: Metric) -> Vec<Vec<Option<f64>>> {
    grid.tau_values
        .iter()
        .map(|&l| {
            grid.tau_values
                .iter()
                .map(|&u| grid.record(l, u).filter(|r| r.is_ok()).and_then(|r| r.metric(metric)))
                .collect()
        })
        .collect()
}

/// Colour-map CSV text; failed and undefined cells are empty fields.
pub fn colormap_csv(grid: &SweepGrid, metric: Metric) -> String {
    let mut out = String::from("tau_lower\\tau_upper");
    for &u in &grid.tau_values {
        out.push_str(&format!(",{:.2}", hundredths(u)));
    }
    out.push('\n');
    for (row, &l) in colormap_matrix(grid, metric).iter().zip(&grid.tau_values) {
        out.push_str(&format!("{:.2}", hundredths(l)));
        for cell in row {
            out.push(',');
            if let Some(v) = cell {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn export_colormap(grid: &SweepGrid, metric: Metric, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if grid.records.is_empty() {
        return Err(Error::Parameter("cannot export an empty sweep".into()));
    }
    fs::write(path, colormap_csv(grid, metric)).map_err(|e| Error::io(path, e))
}

/// Renders a colour map as a PNG with `cell` pixels per grid value.
/// Values are mapped linearly from the smallest value to `max_scale` (or
/// the largest value) and saturate above it; empty cells are white.
/// Rows run bottom-up so `τ_lower` increases upwards.
pub fn export_colormap_png(
    grid: &SweepGrid,
    metric: Metric,
    path: impl AsRef<Path>,
    max_scale: Option<f64>,
    cell: u32,
) -> Result<()> {
    let path = path.as_ref();
    let m = colormap_matrix(grid, metric);
    let values: Vec<f64> = m.iter().flatten().flatten().copied().collect();
    if values.is_empty() {
        return Err(Error::Parameter("colour map has no filled cells".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = max_scale.unwrap_or_else(|| values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let n = m.len() as u32;
    let cell = cell.max(1);
    let mut img = image::RgbImage::new(n * cell, n * cell);
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let rgb = match v {
                Some(v) => {
                    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
                    ramp(t)
                }
                None => [255, 255, 255],
            };
            let y0 = (n - 1 - i as u32) * cell;
            let x0 = j as u32 * cell;
            for dy in 0..cell {
                for dx in 0..cell {
                    img.put_pixel(x0 + dx, y0 + dy, image::Rgb(rgb));
                }
            }
        }
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Dark blue to yellow.
fn ramp(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 4] = [
        [68.0, 1.0, 84.0],
        [49.0, 104.0, 142.0],
        [53.0, 183.0, 121.0],
        [253.0, 231.0, 37.0],
    ];
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(l: u32, u: u32, pw: f64, max_dose: f64) -> SweepRecord {
        SweepRecord {
            tau_lower: l,
            tau_upper: u,
            w: 0.0,
            status: Status::Ok,
            pw: Some(pw),
            ipdr: Some(0.0),
            ver: Some(0.0),
            max_dose: Some(max_dose),
            message: None,
        }
    }

    fn grid_of(records: Vec<SweepRecord>) -> SweepGrid {
        SweepGrid {
            tau_values: default_grid(),
            method: Method::Ospw { w: WRule::Fixed(0.0) },
            geometry: "test".into(),
            iters: 1,
            alpha: 0.0,
            records,
        }
    }

    #[test]
    fn default_grid_has_325_pairs() {
        let g = default_grid();
        assert_eq!(g.len(), 26);
        assert_eq!(grid_pairs(&g).len(), 325);
        assert_eq!(grid_pairs(&[20, 40, 60]).len(), 3);
    }

    #[test]
    fn w_rules() {
        assert!((apply_w_rule(0.9, WRule::Complement) - 0.1).abs() < 1e-12);
        assert!((apply_w_rule(0.96, WRule::Complement) - 0.04).abs() < 1e-12);
        assert_eq!(apply_w_rule(0.3, WRule::Fixed(0.0)), 0.0);
        assert_eq!(apply_w_rule(1.2, WRule::Complement), 0.0);
    }

    #[test]
    fn selection_excludes_overdose_then_takes_argmax() {
        let g = grid_of(vec![rec(30, 50, 0.1, 0.9), rec(70, 90, 0.2, 0.95), rec(10, 90, 0.2, 1.2)]);
        assert_eq!(select_pw_optimal(&g, true).unwrap(), (0.7, 0.9));
        assert_eq!(select_pw_optimal(&g, false).unwrap(), (0.7, 0.9));
        let single = grid_of(vec![rec(30, 50, -0.3, 0.9)]);
        assert_eq!(select_pw_optimal(&single, true).unwrap(), (0.3, 0.5));
    }

    #[test]
    fn ties_prefer_larger_upper_then_lower() {
        let g = grid_of(vec![rec(40, 80, 0.2, 1.0), rec(60, 80, 0.2, 1.0), rec(20, 76, 0.2, 1.0)]);
        assert_eq!(select_pw_optimal(&g, true).unwrap(), (0.6, 0.8));
    }

    #[test]
    fn no_admissible_pair_is_an_error() {
        let g = grid_of(vec![rec(30, 50, 0.1, 1.5)]);
        assert!(matches!(select_pw_optimal(&g, true), Err(Error::NoAdmissiblePair)));
    }

    #[test]
    fn failed_cells_are_blank() {
        let mut failed = rec(0, 4, 0.0, 0.0);
        failed.status = Status::Failed;
        failed.pw = None;
        let g = grid_of(vec![failed, rec(0, 8, 0.25, 0.5)]);
        let csv = colormap_csv(&g, Metric::Pw);
        let row0 = csv.lines().nth(1).unwrap();
        let cells: Vec<&str> = row0.split(',').collect();
        assert_eq!(cells[0], "0.00");
        assert_eq!(cells[2], "");
        assert_eq!(cells[3], "0.25");
    }

    #[test]
    fn w_rule_parses_and_round_trips() {
        assert_eq!("complement".parse::<WRule>().unwrap(), WRule::Complement);
        assert_eq!("0.1".parse::<WRule>().unwrap(), WRule::Fixed(0.1));
        let m = Method::Ospw { w: WRule::Complement };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<Method>(&s).unwrap(), m);
        assert!(to_hundredths(0.333).is_err());
        assert_eq!(to_hundredths(0.96).unwrap(), 96);
    }
}
