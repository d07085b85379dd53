//! Artifact persistence.
//!
//! Arrays are raw little-endian files (`f32` or `u8`) next to a JSON
//! sidecar named `<file>.json` holding an [`ArtifactHeader`]. Tables
//! (histories, metric rows, sweep records) are UTF-8 CSV with the same kind
//! of sidecar. Floats in CSV are written in shortest round-trip form, so
//! loading reproduces every value bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Label, TargetGeometry};
use crate::metrics::{Histogram, MetricReport, Scope};
use crate::projector::{DoseImage, Sinogram};
use crate::sweep::{Method, Status, SweepGrid, SweepRecord};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Geometry,
    Sinogram,
    Dose,
    History,
    Metrics,
    Sweep,
}

impl ArtifactKind {
    fn name(&self) -> &'static str {
        match self {
            ArtifactKind::Geometry => "geometry",
            ArtifactKind::Sinogram => "sinogram",
            ArtifactKind::Dose => "dose",
            ArtifactKind::History => "history",
            ArtifactKind::Metrics => "metrics",
            ArtifactKind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub config_hash: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(method: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Provenance {
            method: method.into(),
            config_hash: config_hash.into(),
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub kind: ArtifactKind,
    pub shape: Vec<usize>,
    /// `"f32"`, `"u8"` or `"csv"`.
    pub dtype: String,
    pub version: u32,
    pub provenance: Provenance,
    /// Kind-specific metadata.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

impl ArtifactHeader {
    fn new(kind: ArtifactKind, shape: Vec<usize>, dtype: &str, provenance: &Provenance) -> Self {
        ArtifactHeader {
            kind,
            shape,
            dtype: dtype.to_string(),
            version: FORMAT_VERSION,
            provenance: provenance.clone(),
            extra: serde_json::Value::Null,
        }
    }
}

/// SHA-256 of the compact JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_header(path: &Path, header: &ArtifactHeader) -> Result<()> {
    let text = serde_json::to_string_pretty(header).expect("header serializes");
    write(&sidecar_path(path), text + "\n")
}

/// Reads and checks the sidecar of `path`.
pub fn read_header(path: impl AsRef<Path>) -> Result<ArtifactHeader> {
    let side = sidecar_path(path.as_ref());
    let bytes = read(&side)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| Error::CorruptSidecar {
        path: side.clone(),
        msg: e.to_string(),
    })?;
    // Version is checked before the full schema so newer layouts report a
    // version error rather than a parse error.
    if let Some(v) = value.get("version").and_then(|v| v.as_u64()) {
        if v != FORMAT_VERSION as u64 {
            return Err(Error::Version {
                path: side,
                expected: FORMAT_VERSION,
                found: v as u32,
            });
        }
    }
    serde_json::from_value(value).map_err(|e| Error::CorruptSidecar {
        path: side,
        msg: e.to_string(),
    })
}

fn expect_header(path: &Path, kind: ArtifactKind, dtype: &str) -> Result<ArtifactHeader> {
    let h = read_header(path)?;
    if h.kind != kind {
        return Err(Error::Kind {
            path: sidecar_path(path),
            expected: kind.name().into(),
            found: h.kind.name().into(),
        });
    }
    if h.dtype != dtype {
        return Err(Error::DType {
            path: sidecar_path(path),
            expected: dtype.into(),
            found: h.dtype.clone(),
        });
    }
    Ok(h)
}

fn shape_error(path: &Path, msg: String) -> Error {
    Error::Shape(format!("{}: {msg}", path.display()))
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_f32(path: &Path, count: usize) -> Result<Vec<f32>> {
    let bytes = read(path)?;
    if bytes.len() != count * 4 {
        return Err(shape_error(
            path,
            format!("sidecar shape needs {} bytes, file has {}", count * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn shape3(path: &Path, h: &ArtifactHeader) -> Result<[usize; 3]> {
    match h.shape[..] {
        [a, b, c] if a > 0 && b > 0 && c > 0 => Ok([a, b, c]),
        _ => Err(shape_error(path, format!("expected 3 positive dims, got {:?}", h.shape))),
    }
}

/// Shape `[nz, n_angles, n_bins]`.
pub fn save_sinogram(path: impl AsRef<Path>, s: &Sinogram, prov: &Provenance) -> Result<()> {
    let path = path.as_ref();
    write(path, f32_bytes(&s.values))?;
    let h = ArtifactHeader::new(ArtifactKind::Sinogram, vec![s.nz, s.n_angles, s.n_bins], "f32", prov);
    write_header(path, &h)
}

pub fn load_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    let path = path.as_ref();
    let h = expect_header(path, ArtifactKind::Sinogram, "f32")?;
    let [nz, na, nb] = shape3(path, &h)?;
    let values = read_f32(path, nz * na * nb)?;
    Sinogram::from_values(na, nb, nz, values)
}

/// Shape `[nz, nx, nx]`.
pub fn save_dose(path: impl AsRef<Path>, d: &DoseImage, prov: &Provenance) -> Result<()> {
    let path = path.as_ref();
    write(path, f32_bytes(&d.values))?;
    let h = ArtifactHeader::new(ArtifactKind::Dose, vec![d.nz, d.nx, d.nx], "f32", prov);
    write_header(path, &h)
}

pub fn load_dose(path: impl AsRef<Path>) -> Result<DoseImage> {
    let path = path.as_ref();
    let h = expect_header(path, ArtifactKind::Dose, "f32")?;
    let [nz, ny, nx] = shape3(path, &h)?;
    if ny != nx {
        return Err(shape_error(path, format!("slices must be square, got {ny}x{nx}")));
    }
    let values = read_f32(path, nz * nx * nx)?;
    DoseImage::from_values(nx, nz, values)
}

/// Labels as `u8` (0 external, 1 out-of-part, 2 in-part), shape `[nz, nx, nx]`.
pub fn save_geometry(path: impl AsRef<Path>, g: &TargetGeometry, prov: &Provenance) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = g.labels().iter().map(|&l| l as u8).collect();
    write(path, bytes)?;
    let mut h = ArtifactHeader::new(ArtifactKind::Geometry, vec![g.nz(), g.nx(), g.nx()], "u8", prov);
    h.extra = serde_json::json!({ "content_hash": g.content_hash() });
    write_header(path, &h)
}

pub fn load_geometry(path: impl AsRef<Path>) -> Result<TargetGeometry> {
    let path = path.as_ref();
    let h = expect_header(path, ArtifactKind::Geometry, "u8")?;
    let [nz, ny, nx] = shape3(path, &h)?;
    if ny != nx {
        return Err(shape_error(path, format!("slices must be square, got {ny}x{nx}")));
    }
    let bytes = read(path)?;
    if bytes.len() != nz * nx * nx {
        return Err(shape_error(
            path,
            format!("sidecar shape needs {} bytes, file has {}", nz * nx * nx, bytes.len()),
        ));
    }
    let labels = bytes
        .iter()
        .map(|&b| {
            Label::from_u8(b).ok_or_else(|| Error::Decode {
                path: path.to_path_buf(),
                msg: format!("invalid label byte {b}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TargetGeometry::from_labels(nx, nz, labels)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn decode(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    }
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| decode(path, line, format!("bad number {s:?}")))
}

fn parse_opt(path: &Path, line: usize, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(path, line, s).map(Some)
    }
}

fn parse_usize(path: &Path, line: usize, s: &str) -> Result<usize> {
    s.parse().map_err(|_| decode(path, line, format!("bad integer {s:?}")))
}

/// Data rows of a CSV file after checking its header line.
fn csv_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = String::from_utf8(read(path)?).map_err(|e| decode(path, 0, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => return Err(decode(path, 1, format!("unexpected header {h:?}"))),
        None => return Err(decode(path, 1, "empty file")),
    }
    let n = header.split(',').count();
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let cells: Vec<String> = l.split(',').map(str::to_string).collect();
            if cells.len() != n {
                return Err(decode(path, i + 2, format!("expected {n} fields, got {}", cells.len())));
            }
            Ok((i + 2, cells))
        })
        .collect()
}

const HISTORY_HEADER: &str = "iter,objective";

pub fn save_history(path: impl AsRef<Path>, history: &[(usize, f64)], prov: &Provenance) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{HISTORY_HEADER}\n");
    for (k, v) in history {
        out.push_str(&format!("{k},{v}\n"));
    }
    write(path, out)?;
    write_header(path, &ArtifactHeader::new(ArtifactKind::History, vec![history.len()], "csv", prov))
}

pub fn load_history(path: impl AsRef<Path>) -> Result<Vec<(usize, f64)>> {
    let path = path.as_ref();
    let h = expect_header(path, ArtifactKind::History, "csv")?;
    let rows = csv_rows(path, HISTORY_HEADER)?;
    if h.shape != [rows.len()] {
        return Err(shape_error(path, format!("sidecar shape {:?} but {} rows", h.shape, rows.len())));
    }
    rows.iter()
        .map(|(ln, c)| Ok((parse_usize(path, *ln, &c[0])?, parse_f64(path, *ln, &c[1])?)))
        .collect()
}

/// One line of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub geometry: String,
    pub method: String,
    pub tau_lower: f64,
    pub tau_upper: f64,
    pub w: f64,
    pub report: MetricReport,
}

pub const METRICS_HEADER: &str = "geometry,method,tau_lower,tau_upper,w,alpha,pw,ipdr,ver,slice,n_in,n_out";

fn check_field(s: &str) -> Result<()> {
    if s.contains([',', '\n', '\r']) {
        return Err(Error::Parameter(format!("CSV field {s:?} contains a separator")));
    }
    Ok(())
}

pub fn metrics_csv(rows: &[MetricRow]) -> Result<String> {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        check_field(&r.geometry)?;
        check_field(&r.method)?;
        let slice = match r.report.scope {
            Scope::Volume => String::new(),
            Scope::Slice(i) => i.to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.geometry,
            r.method,
            r.tau_lower,
            r.tau_upper,
            r.w,
            r.report.alpha,
            r.report.pw,
            r.report.ipdr,
            r.report.ver,
            slice,
            r.report.n_in,
            r.report.n_out
        ));
    }
    Ok(out)
}

pub fn save_metrics(path: impl AsRef<Path>, rows: &[MetricRow], prov: &Provenance) -> Result<()> {
    let path = path.as_ref();
    write(path, metrics_csv(rows)?)?;
    write_header(path, &ArtifactHeader::new(ArtifactKind::Metrics, vec![rows.len()], "csv", prov))
}

pub fn load_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let path = path.as_ref();
    let h = expect_header(path, ArtifactKind::Metrics, "csv")?;
    let rows = csv_rows(path, METRICS_HEADER)?;
    if h.shape != [rows.len()] {
        return Err(shape_error(path, format!("sidecar shape {:?} but {} rows", h.shape, rows.len())));
    }
    rows.iter()
        .map(|(ln, c)| {
            let f = |i: usize| parse_f64(path, *ln, &c[i]);
            let scope = if c[9].is_empty() {
                Scope::Volume
            } else {
                Scope::Slice(parse_usize(path, *ln, &c[9])?)
            };
            Ok(MetricRow {
                geometry: c[0].clone(),
                method: c[1].clone(),
                tau_lower: f(2)?,
                tau_upper: f(3)?,
                w: f(4)?,
                report: MetricReport {
                    alpha: f(5)?,
                    pw: f(6)?,
                    ipdr: f(7)?,
                    ver: f(8)?,
                    scope,
                    n_in: parse_usize(path, *ln, &c[10])?,
                    n_out: parse_usize(path, *ln, &c[11])?,
                },
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "tau_lower,tau_upper,w,status,pw,ipdr,ver,max_dose,message";

/// Grid-level fields stored in the sweep sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SweepMeta {
    tau_values: Vec<u32>,
    method: Method,
    geometry: String,
    iters: usize,
    alpha: f64,
}

pub fn sweep_csv(grid: &SweepGrid) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in &grid.records {
        let status = match r.status {
            Status::Ok => "ok",
            Status::Failed => "failed",
        };
        let msg = r
            .message
            .as_deref()
            .unwrap_or("")
            .replace([',', '\n', '\r'], ";");
        out.push_str(&format!(
            "{:.2},{:.2},{},{},{},{},{},{},{}\n",
            r.tau_lower(),
            r.tau_upper(),
            r.w,
            status,
            fmt_opt(r.pw),
            fmt_opt(r.ipdr),
            fmt_opt(r.ver),
            fmt_opt(r.max_dose),
            msg
        ));
    }
    out
}

/// Record CSV plus a sidecar carrying the grid, method and settings.
/// Failure messages have separators replaced by `;`.
pub fn save_sweep(path: impl AsRef<Path>, grid: &SweepGrid, prov: &Provenance) -> Result<()> {
    let path = path.as_ref();
    write(path, sweep_csv(grid))?;
    let mut h = ArtifactHeader::new(ArtifactKind::Sweep, vec![grid.records.len()], "csv", prov);
    h.extra = serde_json::to_value(SweepMeta {
        tau_values: grid.tau_values.clone(),
        method: grid.method,
        geometry: grid.geometry.clone(),
        iters: grid.iters,
        alpha: grid.alpha,
    })
    .expect("sweep metadata serializes");
    write_header(path, &h)
}

pub fn load_sweep(path: impl AsRef<Path>) -> Result<SweepGrid> {
    let path = path.as_ref();
    let h = expect_header(path, ArtifactKind::Sweep, "csv")?;
    let meta: SweepMeta = serde_json::from_value(h.extra.clone()).map_err(|e| Error::CorruptSidecar {
        path: sidecar_path(path),
        msg: e.to_string(),
    })?;
    let rows = csv_rows(path, SWEEP_HEADER)?;
    if h.shape != [rows.len()] {
        return Err(shape_error(path, format!("sidecar shape {:?} but {} rows", h.shape, rows.len())));
    }
    let records = rows
        .iter()
        .map(|(ln, c)| {
            let hund = |s: &str| -> Result<u32> {
                crate::sweep::to_hundredths(parse_f64(path, *ln, s)?).map_err(|e| decode(path, *ln, e))
            };
            let status = match c[3].as_str() {
                "ok" => Status::Ok,
                "failed" => Status::Failed,
                other => return Err(decode(path, *ln, format!("bad status {other:?}"))),
            };
            Ok(SweepRecord {
                tau_lower: hund(&c[0])?,
                tau_upper: hund(&c[1])?,
                w: parse_f64(path, *ln, &c[2])?,
                status,
                pw: parse_opt(path, *ln, &c[4])?,
                ipdr: parse_opt(path, *ln, &c[5])?,
                ver: parse_opt(path, *ln, &c[6])?,
                max_dose: parse_opt(path, *ln, &c[7])?,
                message: if c[8].is_empty() { None } else { Some(c[8].clone()) },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepGrid {
        tau_values: meta.tau_values,
        method: meta.method,
        geometry: meta.geometry,
        iters: meta.iters,
        alpha: meta.alpha,
        records,
    })
}

/// Histogram table `bin_lower,bin_upper,in_count,out_count`.
pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_lower,bin_upper,in_count,out_count\n");
    for b in 0..h.bins() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.edge(b),
            h.edge(b + 1),
            h.in_counts[b],
            h.out_counts[b]
        ));
    }
    out
}

pub fn save_histogram(path: impl AsRef<Path>, h: &Histogram) -> Result<()> {
    write(path.as_ref(), histogram_csv(h))
}

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    write(path.as_ref(), text + "\n")
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    serde_json::from_slice(&read(path)?).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
