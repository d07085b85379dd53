//! Run configurations shared by the command-line front end and library
//! callers.
//!
//! A configuration file may hold any subset of the fields; missing fields
//! take defaults. [`RunConfig::resolve`] fills every derived value (bin
//! count, method-specific threshold defaults) so the written configuration
//! fully determines a rerun.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, TargetGeometry};
use crate::io;
use crate::osmo::OsmoOptions;
use crate::penalty::{validate_thresholds, PenaltyConfig, PenaltyFamily};
use crate::projector::ProjectionGeometry;
use crate::solver::SolveOptions;
use crate::sweep::{self, Method, WRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    Disk,
    Gyroid,
    Logo,
    ResolutionTest,
    Illustration,
    File,
}

impl GeometryKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeometryKind::Disk => "disk",
            GeometryKind::Gyroid => "gyroid",
            GeometryKind::Logo => "logo",
            GeometryKind::ResolutionTest => "resolution-test",
            GeometryKind::Illustration => "illustration",
            GeometryKind::File => "file",
        }
    }
}

/// Target geometry: a built-in generator with its parameters, or an image
/// file with a binarization threshold. Fields unused by `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    pub nx: usize,
    pub nz: usize,
    pub radius_fraction: f64,
    pub cells: usize,
    pub solid_fraction: f64,
    pub path: Option<PathBuf>,
    pub threshold: f64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec {
            kind: GeometryKind::Disk,
            nx: 128,
            nz: 1,
            radius_fraction: 0.5,
            cells: 2,
            solid_fraction: 0.3,
            path: None,
            threshold: 0.5,
        }
    }
}

impl GeometrySpec {
    pub fn build(&self) -> Result<TargetGeometry> {
        match self.kind {
            GeometryKind::Disk => geometry::make_disk(self.nx, self.radius_fraction),
            GeometryKind::Gyroid => {
                geometry::make_gyroid(self.nx, self.nz, self.cells, self.solid_fraction)
            }
            GeometryKind::Logo => geometry::make_logo(self.nx),
            GeometryKind::ResolutionTest => geometry::make_resolution_test(self.nx),
            GeometryKind::Illustration => geometry::make_illustration(self.nx),
            GeometryKind::File => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config(vec!["geometry.path is required for kind \"file\"".into()]))?;
                geometry::load_target(path, self.threshold)
            }
        }
    }

    fn check(&self, errs: &mut Vec<String>) {
        match self.kind {
            GeometryKind::File => {
                if self.path.is_none() {
                    errs.push("geometry.path is required for kind \"file\"".into());
                }
                if !self.threshold.is_finite() {
                    errs.push("geometry.threshold must be finite".into());
                }
            }
            GeometryKind::Disk => {
                if self.nx < 8 {
                    errs.push(format!("geometry.nx must be >= 8 for a disk, got {}", self.nx));
                }
                if !(self.radius_fraction > 0.0 && self.radius_fraction < 1.0) {
                    errs.push(format!(
                        "geometry.radius_fraction must lie in (0, 1), got {}",
                        self.radius_fraction
                    ));
                }
            }
            GeometryKind::Gyroid => {
                if self.nx < 32 {
                    errs.push(format!("geometry.nx must be >= 32 for a gyroid, got {}", self.nx));
                }
                if self.nz == 0 || self.cells == 0 {
                    errs.push("geometry.nz and geometry.cells must be >= 1".into());
                }
                if !(self.solid_fraction > 0.0 && self.solid_fraction < 1.0) {
                    errs.push(format!(
                        "geometry.solid_fraction must lie in (0, 1), got {}",
                        self.solid_fraction
                    ));
                }
            }
            GeometryKind::Logo | GeometryKind::Illustration => {
                if self.nx < 32 {
                    errs.push(format!("geometry.nx must be >= 32, got {}", self.nx));
                }
            }
            GeometryKind::ResolutionTest => {
                if self.nx < 64 {
                    errs.push(format!("geometry.nx must be >= 64 for the resolution test, got {}", self.nx));
                }
            }
        }
    }

    /// Only the fields the kind reads, for stable hashing and output.
    fn canonical(&self) -> GeometrySpec {
        let d = GeometrySpec::default();
        let mut c = GeometrySpec {
            kind: self.kind,
            nx: self.nx,
            ..d.clone()
        };
        match self.kind {
            GeometryKind::Disk => c.radius_fraction = self.radius_fraction,
            GeometryKind::Gyroid => {
                c.nz = self.nz;
                c.cells = self.cells;
                c.solid_fraction = self.solid_fraction;
            }
            GeometryKind::File => {
                c.path = self.path.clone();
                c.threshold = self.threshold;
            }
            _ => {}
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSpec {
    pub n_angles: usize,
    /// Defaults to the smallest diagonal-covering count with `nx`'s parity.
    pub n_bins: Option<usize>,
    pub angle_offset: f64,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        ProjectionSpec {
            n_angles: 360,
            n_bins: None,
            angle_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    L2n,
    Osp,
    Ospw,
    Osmo,
}

impl MethodKind {
    pub fn default_thresholds(&self) -> (f64, f64) {
        match self {
            MethodKind::Osmo => (0.85, 0.90),
            _ => (0.70, 0.90),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSpec {
    pub method: MethodKind,
    /// Defaults to 0.70 for penalty methods and 0.85 for OSMO.
    pub tau_lower: Option<f64>,
    /// Defaults to 0.90.
    pub tau_upper: Option<f64>,
    /// OSPW dead-zone width: a number or `"complement"`.
    pub w: WRule,
    pub min_projection_value: f64,
}

impl Default for MethodSpec {
    fn default() -> Self {
        MethodSpec {
            method: MethodKind::Ospw,
            tau_lower: None,
            tau_upper: None,
            w: WRule::Fixed(0.0),
            min_projection_value: 0.0,
        }
    }
}

impl MethodSpec {
    pub fn thresholds(&self) -> (f64, f64) {
        let (l, u) = self.method.default_thresholds();
        (self.tau_lower.unwrap_or(l), self.tau_upper.unwrap_or(u))
    }

    pub fn sweep_method(&self) -> Method {
        match self.method {
            MethodKind::L2n => Method::L2n,
            MethodKind::Osp => Method::Osp,
            MethodKind::Ospw => Method::Ospw { w: self.w },
            MethodKind::Osmo => Method::Osmo,
        }
    }

    pub fn w(&self) -> f64 {
        self.sweep_method().w_for(self.thresholds().1)
    }

    pub fn penalty(&self) -> Result<Option<PenaltyConfig>> {
        let (l, u) = self.thresholds();
        let family = match self.method {
            MethodKind::L2n => PenaltyFamily::L2n,
            MethodKind::Osp => PenaltyFamily::Osp,
            MethodKind::Ospw => PenaltyFamily::Ospw,
            MethodKind::Osmo => return Ok(None),
        };
        PenaltyConfig::new(family, l, u, self.w()).map(Some)
    }

    pub fn osmo(&self, solve: &SolveOptions) -> Result<OsmoOptions> {
        let (l, u) = self.thresholds();
        let o = OsmoOptions {
            tau_lower: l,
            tau_upper: u,
            max_iters: solve.max_iters,
            min_projection_value: self.min_projection_value,
            record_every: solve.record_every,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn label(&self) -> String {
        self.sweep_method().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Threshold grid; defaults to `0.00, 0.04, …, 1.00`.
    pub grid: Option<Vec<f64>>,
    pub exclude_overdose: bool,
    /// Also render PNG colour maps.
    pub png: bool,
    /// Upper end of the VER colour scale in the PNG.
    pub ver_max_scale: Option<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            grid: None,
            exclude_overdose: true,
            png: false,
            ver_max_scale: None,
        }
    }
}

impl SweepSpec {
    pub fn grid_hundredths(&self) -> Result<Vec<u32>> {
        match &self.grid {
            None => Ok(sweep::default_grid()),
            Some(g) => g.iter().map(|&v| sweep::to_hundredths(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub projection: ProjectionSpec,
    pub method: MethodSpec,
    pub solve: SolveOptions,
    /// Percent trimmed from each end for metrics.
    pub alpha: f64,
    pub histogram_bins: usize,
    pub sweep: SweepSpec,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometrySpec::default(),
            projection: ProjectionSpec::default(),
            method: MethodSpec::default(),
            solve: SolveOptions::default(),
            alpha: 0.0,
            histogram_bins: 100,
            sweep: SweepSpec::default(),
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses a (possibly partial) JSON document.
    pub fn from_value(v: serde_json::Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Every problem found, reported together.
    pub fn problems(&self) -> Vec<String> {
        let mut errs = Vec::new();
        self.geometry.check(&mut errs);
        let p = &self.projection;
        if p.n_angles == 0 {
            errs.push("projection.n_angles must be >= 1".into());
        }
        if !p.angle_offset.is_finite() {
            errs.push("projection.angle_offset must be finite".into());
        }
        let (l, u) = self.method.thresholds();
        if let Err(e) = validate_thresholds(l, u) {
            errs.push(format!("method: {e}"));
        }
        if let WRule::Fixed(w) = self.method.w {
            if !(w.is_finite() && w >= 0.0) {
                errs.push(format!("method.w must be >= 0, got {w}"));
            }
        }
        if !(self.method.min_projection_value.is_finite() && self.method.min_projection_value >= 0.0) {
            errs.push("method.min_projection_value must be >= 0".into());
        }
        if let Err(e) = self.solve.validate() {
            errs.push(format!("solve: {e}"));
        }
        if !(0.0..50.0).contains(&self.alpha) {
            errs.push(format!("alpha must lie in [0, 50), got {}", self.alpha));
        }
        if self.histogram_bins < 2 {
            errs.push("histogram_bins must be >= 2".into());
        }
        match self.sweep.grid_hundredths() {
            Ok(g) if g.len() < 2 => errs.push("sweep.grid needs at least two values".into()),
            Ok(_) => {}
            Err(e) => errs.push(format!("sweep.grid: {e}")),
        }
        if let Some(s) = self.sweep.ver_max_scale {
            if !(s.is_finite() && s > 0.0) {
                errs.push("sweep.ver_max_scale must be positive".into());
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.problems();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Validates, builds the geometry and fills every derived field.
    pub fn resolve(mut self) -> Result<(RunConfig, TargetGeometry)> {
        self.validate()?;
        let geom = self.geometry.build()?;
        self.geometry = self.geometry.canonical();
        self.geometry.nx = geom.nx();
        self.geometry.nz = geom.nz();
        let (l, u) = self.method.thresholds();
        self.method.tau_lower = Some(l);
        self.method.tau_upper = Some(u);
        if self.method.method != MethodKind::Ospw {
            self.method.w = WRule::Fixed(0.0);
        }
        if self.method.method != MethodKind::Osmo {
            self.method.min_projection_value = 0.0;
        }
        self.projection.n_bins = Some(
            self.projection
                .n_bins
                .unwrap_or_else(|| ProjectionGeometry::default_bins(geom.nx())),
        );
        self.projection_geometry(&geom)?;
        Ok((self, geom))
    }

    pub fn projection_geometry(&self, geom: &TargetGeometry) -> Result<ProjectionGeometry> {
        ProjectionGeometry::new(
            geom.nx(),
            self.projection.n_angles,
            self.projection
                .n_bins
                .unwrap_or_else(|| ProjectionGeometry::default_bins(geom.nx())),
            self.projection.angle_offset,
        )
    }

    /// Hash of everything except the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        io::config_hash(&c)
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_takes_defaults() {
        let c = RunConfig::from_value(serde_json::json!({"method": {"method": "osmo"}})).unwrap();
        assert_eq!(c.method.thresholds(), (0.85, 0.90));
        assert_eq!(c.projection.n_angles, 360);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_value(serde_json::json!({"alhpa": 1})).is_err());
    }

    #[test]
    fn problems_are_aggregated() {
        let mut c = RunConfig::default();
        c.method.tau_lower = Some(0.95);
        c.alpha = 70.0;
        c.histogram_bins = 1;
        let errs = c.problems();
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(errs[0].contains("tau_lower < tau_upper"));
    }

    #[test]
    fn resolve_fills_derived_fields() {
        let mut c = RunConfig::default();
        c.geometry.nx = 32;
        let (r, g) = c.resolve().unwrap();
        assert_eq!(g.nx(), 32);
        assert_eq!(r.projection.n_bins, Some(46));
        assert_eq!(r.method.tau_lower, Some(0.7));
        let (again, _) = r.clone().resolve().unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn hash_ignores_output() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
    }
}
