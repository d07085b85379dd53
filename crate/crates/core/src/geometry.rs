//! Target geometries and the in / out / external voxel partition.
//!
//! Voxel `(ix, iy, iz)` of an `nx × nx × nz` grid is stored at
//! `iz·nx² + iy·nx + ix`. Voxel centres sit at half-integer offsets from the
//! slice centre, so the inscribed-circle test reduces to integer arithmetic.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    /// Outside the cylindrical cuvette; never penalised.
    Ext = 0,
    /// Resin that must stay liquid.
    Out = 1,
    /// Resin that must cure.
    In = 2,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Ext),
            1 => Some(Label::Out),
            2 => Some(Label::In),
            _ => None,
        }
    }
}

/// `true` when the centre of voxel `(ix, iy)` lies strictly inside the
/// circle inscribed in an `nx × nx` slice.
#[inline]
pub fn in_inscribed_circle(nx: usize, ix: usize, iy: usize) -> bool {
    let n = nx as i64;
    let dx = 2 * ix as i64 + 1 - n;
    let dy = 2 * iy as i64 + 1 - n;
    dx * dx + dy * dy < n * n
}

/// Squared distance of voxel `(ix, iy)`'s centre from the slice centre, in
/// voxel units.
#[inline]
fn centre_dist2(nx: usize, ix: usize, iy: usize) -> f64 {
    let n = nx as i64;
    let dx = 2 * ix as i64 + 1 - n;
    let dy = 2 * iy as i64 + 1 - n;
    (dx * dx + dy * dy) as f64 / 4.0
}

/// Binary voxel target with its label partition.
///
/// Constructed values are always valid: the EXT mask equals the complement of
/// the inscribed circle and every slice holds at least one IN and one OUT
/// voxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetGeometry {
    nx: usize,
    nz: usize,
    labels: Vec<Label>,
}

impl TargetGeometry {
    /// Builds a geometry from explicit labels, checking every invariant.
    pub fn from_labels(nx: usize, nz: usize, labels: Vec<Label>) -> Result<Self> {
        if nx == 0 || nz == 0 {
            return Err(Error::Shape(format!("empty grid {nx}x{nx}x{nz}")));
        }
        if labels.len() != nx * nx * nz {
            return Err(Error::Shape(format!(
                "{} labels for a {nx}x{nx}x{nz} grid",
                labels.len()
            )));
        }
        for iz in 0..nz {
            for iy in 0..nx {
                for ix in 0..nx {
                    let l = labels[(iz * nx + iy) * nx + ix];
                    let inside = in_inscribed_circle(nx, ix, iy);
                    if inside == (l == Label::Ext) {
                        return Err(Error::Shape(format!(
                            "voxel ({ix}, {iy}, {iz}) labelled {l:?} but inscribed-circle test says {}",
                            if inside { "inside" } else { "outside" }
                        )));
                    }
                }
            }
        }
        let g = TargetGeometry { nx, nz, labels };
        let bad = g.degenerate_slices();
        if !bad.is_empty() {
            return Err(Error::DegenerateSlices { slices: bad });
        }
        Ok(g)
    }

    /// Builds a geometry from a per-voxel "in part" predicate evaluated on
    /// voxels inside the inscribed circle.
    pub fn from_predicate(
        nx: usize,
        nz: usize,
        mut is_in: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut labels = Vec::with_capacity(nx * nx * nz);
        for iz in 0..nz {
            for iy in 0..nx {
                for ix in 0..nx {
                    labels.push(if !in_inscribed_circle(nx, ix, iy) {
                        Label::Ext
                    } else if is_in(ix, iy, iz) {
                        Label::In
                    } else {
                        Label::Out
                    });
                }
            }
        }
        Self::from_labels(nx, nz, labels)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn voxels_per_slice(&self) -> usize {
        self.nx * self.nx
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn slice_labels(&self, iz: usize) -> &[Label] {
        let n = self.voxels_per_slice();
        &self.labels[iz * n..(iz + 1) * n]
    }

    pub fn label(&self, ix: usize, iy: usize, iz: usize) -> Label {
        self.labels[(iz * self.nx + iy) * self.nx + ix]
    }

    /// Single-slice geometry for slice `iz`.
    pub fn slice(&self, iz: usize) -> TargetGeometry {
        TargetGeometry {
            nx: self.nx,
            nz: 1,
            labels: self.slice_labels(iz).to_vec(),
        }
    }

    /// Stacks single- or multi-slice geometries of equal `nx` along z.
    pub fn stack(parts: &[TargetGeometry]) -> Result<TargetGeometry> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero geometries".into()))?;
        let mut labels = Vec::new();
        let mut nz = 0;
        for p in parts {
            if p.nx != first.nx {
                return Err(Error::Shape(format!(
                    "cannot stack nx={} with nx={}",
                    p.nx, first.nx
                )));
            }
            labels.extend_from_slice(&p.labels);
            nz += p.nz;
        }
        Ok(TargetGeometry {
            nx: first.nx,
            nz,
            labels,
        })
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn n_in(&self) -> usize {
        self.count(Label::In)
    }

    pub fn n_out(&self) -> usize {
        self.count(Label::Out)
    }

    pub fn n_ext(&self) -> usize {
        self.count(Label::Ext)
    }

    /// Slices without IN or without OUT voxels.
    pub fn degenerate_slices(&self) -> Vec<usize> {
        (0..self.nz)
            .filter(|&iz| {
                let s = self.slice_labels(iz);
                !s.contains(&Label::In) || !s.contains(&Label::Out)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.degenerate_slices();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::DegenerateSlices { slices: bad })
        }
    }

    /// Binary target image: 1 on IN, 0 elsewhere.
    pub fn target_image(&self) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&l| if l == Label::In { 1.0 } else { 0.0 })
            .collect()
    }

    /// SHA-256 of the grid shape and labels, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.nx as u64).to_le_bytes());
        h.update((self.nz as u64).to_le_bytes());
        h.update(self.labels.iter().map(|&l| l as u8).collect::<Vec<_>>());
        hex::encode(h.finalize())
    }
}

/// Centred disk of radius `radius_fraction × nx/2`.
pub fn make_disk(nx: usize, radius_fraction: f64) -> Result<TargetGeometry> {
    if nx < 8 {
        return Err(Error::Parameter(format!("disk needs nx >= 8, got {nx}")));
    }
    if !(radius_fraction > 0.0 && radius_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "radius_fraction must lie in (0, 1), got {radius_fraction}"
        )));
    }
    let r = radius_fraction * nx as f64 / 2.0;
    let r2 = r * r;
    TargetGeometry::from_predicate(nx, 1, |ix, iy, _| centre_dist2(nx, ix, iy) < r2).map_err(
        |e| match e {
            Error::DegenerateSlices { .. } => Error::DegenerateGeometry(format!(
                "disk of radius fraction {radius_fraction} at nx={nx} has no in-part or no out-of-part voxel"
            )),
            other => other,
        },
    )
}

/// Phase `2π·cells·(i + ½)/n`, reduced exactly modulo one period.
fn cell_phase(i: usize, cells: usize, n: usize) -> f64 {
    let num = ((2 * i + 1) * cells) % (2 * n);
    2.0 * PI * num as f64 / (2 * n) as f64
}

/// Sheet gyroid `|sin x cos y + sin y cos z + sin z cos x| ≤ t` inside the
/// inscribed cylinder, with `cells` unit cells across the slice and along z.
///
/// The level `t` is the `solid_fraction` quantile of the implicit function
/// over all cylinder voxels.
pub fn make_gyroid(
    nx: usize,
    nz: usize,
    cells: usize,
    solid_fraction: f64,
) -> Result<TargetGeometry> {
    if nx < 32 {
        return Err(Error::Parameter(format!("gyroid needs nx >= 32, got {nx}")));
    }
    if nz < 1 || cells < 1 {
        return Err(Error::Parameter("gyroid needs nz >= 1 and cells >= 1".into()));
    }
    if !(solid_fraction > 0.0 && solid_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "solid_fraction must lie in (0, 1), got {solid_fraction}"
        )));
    }
    let field = gyroid_field(nx, nz, cells);
    let mut inside: Vec<f64> = (0..nz)
        .flat_map(|iz| {
            let field = &field;
            (0..nx).flat_map(move |iy| {
                (0..nx)
                    .filter(move |&ix| in_inscribed_circle(nx, ix, iy))
                    .map(move |ix| field[(iz * nx + iy) * nx + ix])
            })
        })
        .collect();
    inside.sort_by(f64::total_cmp);
    let k = ((solid_fraction * inside.len() as f64).round() as usize).clamp(1, inside.len()) - 1;
    let level = inside[k];
    TargetGeometry::from_predicate(nx, nz, |ix, iy, iz| field[(iz * nx + iy) * nx + ix] <= level)
}

/// `|G(x, y, z)|` for the gyroid on the voxel grid.
pub fn gyroid_field(nx: usize, nz: usize, cells: usize) -> Vec<f64> {
    let px: Vec<(f64, f64)> = (0..nx)
        .map(|i| {
            let p = cell_phase(i, cells, nx);
            (p.sin(), p.cos())
        })
        .collect();
    let mut out = Vec::with_capacity(nx * nx * nz);
    for iz in 0..nz {
        let pz = cell_phase(iz, cells, nz);
        let (sz, cz) = (pz.sin(), pz.cos());
        for &(sy, cy) in &px {
            for &(sx, cx) in &px {
                out.push((sx * cy + sy * cz + sz * cx).abs());
            }
        }
    }
    out
}

/// Union of rotated ellipses given in normalized `[-1, 1]²` coordinates as
/// `(cx, cy, semi_x, semi_y, rotation_degrees)`.
pub fn make_ellipses(nx: usize, ellipses: &[(f64, f64, f64, f64, f64)]) -> Result<TargetGeometry> {
    let d = 2.0 / nx as f64;
    TargetGeometry::from_predicate(nx, 1, |ix, iy, _| {
        let x = -1.0 + (ix as f64 + 0.5) * d;
        let y = -1.0 + (iy as f64 + 0.5) * d;
        ellipses.iter().any(|&(cx, cy, a, b, deg)| {
            let (s, c) = deg.to_radians().sin_cos();
            let (dx, dy) = (x - cx, y - cy);
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            u * u / (a * a) + v * v / (b * b) <= 1.0
        })
    })
}

/// Four-ellipse partition used to illustrate the three voxel labels.
pub fn make_illustration(nx: usize) -> Result<TargetGeometry> {
    make_ellipses(
        nx,
        &[
            (0.0, 0.0, 0.5, 0.3, 0.0),
            (0.1, 0.6, 0.3, 0.2, 45.0),
            (-0.3, -0.5, 0.2, 0.4, 15.0),
            (0.5, -0.5, 0.3, 0.3, 0.0),
        ],
    )
}

/// Moderate-complexity stand-in for a logo: three upright dogbones with
/// square ends (hard corners) and a waist cut by circular arcs.
pub fn make_logo(nx: usize) -> Result<TargetGeometry> {
    if nx < 32 {
        return Err(Error::Parameter(format!("logo needs nx >= 32, got {nx}")));
    }
    let d = 2.0 / nx as f64;
    TargetGeometry::from_predicate(nx, 1, |ix, iy, _| {
        let x = -1.0 + (ix as f64 + 0.5) * d;
        let y = -1.0 + (iy as f64 + 0.5) * d;
        [-0.42, 0.0, 0.42].iter().any(|&cx| {
            let u = x - cx;
            if u.abs() > 0.15 || y.abs() > 0.6 {
                return false;
            }
            let bite = |sx: f64| {
                let (du, dv) = (u - sx * 0.27, y);
                du * du + dv * dv < 0.21 * 0.21
            };
            !(bite(1.0) || bite(-1.0))
        })
    })
}

/// High-complexity stand-in for a resolution chart: groups of bars with
/// shrinking width and gap, a solid square, and rows of small dots.
pub fn make_resolution_test(nx: usize) -> Result<TargetGeometry> {
    if nx < 64 {
        return Err(Error::Parameter(format!(
            "resolution test needs nx >= 64, got {nx}"
        )));
    }
    let d = 2.0 / nx as f64;
    let pixel = d;
    TargetGeometry::from_predicate(nx, 1, |ix, iy, _| {
        let x = -1.0 + (ix as f64 + 0.5) * d;
        let y = -1.0 + (iy as f64 + 0.5) * d;
        // Bar groups in the upper half: widths of 4, 3, 2 and 1.5 pixels.
        for (g, &wpx) in [4.0, 3.0, 2.0, 1.5].iter().enumerate() {
            let w = wpx * pixel;
            let x0 = -0.62 + g as f64 * 0.3;
            if (0.1..0.55).contains(&y) {
                for k in 0..4 {
                    let bx = x0 + k as f64 * 2.0 * w;
                    if x >= bx && x < bx + w {
                        return true;
                    }
                }
            }
        }
        // Large square right of centre.
        if (0.15..0.55).contains(&x) && (-0.55..-0.15).contains(&y) {
            return true;
        }
        // Dots of decreasing radius lower left.
        for (k, r) in [0.08, 0.06, 0.045, 0.03].iter().enumerate() {
            let cx = -0.6 + k as f64 * 0.18;
            let (dx, dy) = (x - cx, y + 0.35);
            if dx * dx + dy * dy < r * r {
                return true;
            }
        }
        false
    })
}

/// Sidecar describing a raw float32 raster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawRasterSidecar {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dtype: String,
    pub order: String,
}

/// Grayscale raster normalized to `[0, 1]` by its dtype maximum.
struct Raster {
    nx: usize,
    ny: usize,
    nz: usize,
    values: Vec<f64>,
}

fn read_png(path: &Path) -> Result<Raster> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.into(),
        msg: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(b) => b.into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        image::DynamicImage::ImageLuma16(b) => {
            b.into_raw().iter().map(|&v| v as f64 / 65535.0).collect()
        }
        other => {
            let color = other.color();
            if color.bytes_per_pixel() / color.channel_count() > 1 {
                other.to_luma16().into_raw().iter().map(|&v| v as f64 / 65535.0).collect()
            } else {
                other.to_luma8().into_raw().iter().map(|&v| v as f64 / 255.0).collect()
            }
        }
    };
    Ok(Raster {
        nx: w,
        ny: h,
        nz: 1,
        values,
    })
}

fn read_raw_f32(path: &Path) -> Result<Raster> {
    let sidecar_path = path.with_extension("json");
    let text = fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let side: RawRasterSidecar =
        serde_json::from_str(&text).map_err(|e| Error::CorruptSidecar {
            path: sidecar_path.clone(),
            msg: e.to_string(),
        })?;
    if side.dtype != "f32" {
        return Err(Error::DType {
            path: sidecar_path,
            expected: "f32".into(),
            found: side.dtype,
        });
    }
    if side.order != "slice-row-major" {
        return Err(Error::CorruptSidecar {
            path: sidecar_path,
            msg: format!("unsupported order {:?}", side.order),
        });
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = side.nx * side.ny * side.nz * 4;
    if bytes.len() != expected {
        return Err(Error::Shape(format!(
            "{}: {} bytes, sidecar implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Raster {
        nx: side.nx,
        ny: side.ny,
        nz: side.nz,
        values,
    })
}

/// Loads a grayscale PNG or a raw little-endian float32 volume (with JSON
/// sidecar next to it) and thresholds it. `threshold` is a fraction of the
/// dtype maximum (255, 65535 or 1.0).
pub fn load_target(path: impl AsRef<Path>, threshold: f64) -> Result<TargetGeometry> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let raster = if is_png {
        read_png(path)?
    } else {
        read_raw_f32(path)?
    };
    target_from_raster(raster.nx, raster.ny, raster.nz, &raster.values, threshold)
}

/// Thresholds an in-memory raster stored slice-row-major.
pub fn target_from_raster(
    nx: usize,
    ny: usize,
    nz: usize,
    values: &[f64],
    threshold: f64,
) -> Result<TargetGeometry> {
    if nx != ny {
        return Err(Error::Shape(format!("slices must be square, got {nx}x{ny}")));
    }
    if values.len() != nx * ny * nz {
        return Err(Error::Shape(format!(
            "{} values for a {nx}x{ny}x{nz} raster",
            values.len()
        )));
    }
    TargetGeometry::from_predicate(nx, nz, |ix, iy, iz| {
        values[(iz * nx + iy) * nx + ix] >= threshold
    })
}
