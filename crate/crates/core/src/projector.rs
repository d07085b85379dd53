//! Parallel-beam projector pair.
//!
//! The system matrix `W` holds exact ray/voxel intersection lengths (voxel
//! width 1), traced once per [`ProjectionGeometry`] and stored both row-wise
//! (rays) and column-wise (voxels). Forward projection is `W x / n_angles`
//! and back-projection is `Wᵀ y / n_angles`, so the two are exact transposes
//! and a constant plan of value `c` deposits a dose of roughly `c` per voxel
//! independent of the angle count.
//!
//! Batched kernels work on "lanes": `L` independent vectors interleaved
//! element-major (`x[i·L + lane]`). Every lane sums its terms in the same
//! order regardless of `L`, so batched and single-vector results are
//! bit-identical.

use std::f64::consts::PI;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equally spaced angles over `[0, π)` and unit-width detector bins centred
/// on the rotation axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionGeometry {
    pub nx: usize,
    pub n_angles: usize,
    pub n_bins: usize,
    pub angle_offset: f64,
}

impl ProjectionGeometry {
    pub fn new(nx: usize, n_angles: usize, n_bins: usize, angle_offset: f64) -> Result<Self> {
        let pg = ProjectionGeometry {
            nx,
            n_angles,
            n_bins,
            angle_offset,
        };
        pg.validate()?;
        Ok(pg)
    }

    /// 360 angles and [`default_bins`](Self::default_bins) detector bins.
    pub fn with_defaults(nx: usize) -> Self {
        ProjectionGeometry {
            nx,
            n_angles: 360,
            n_bins: Self::default_bins(nx),
            angle_offset: 0.0,
        }
    }

    /// Smallest bin count covering the slice diagonal whose parity matches
    /// `nx`, which puts axis-aligned rays through voxel centres rather than
    /// along voxel edges.
    pub fn default_bins(nx: usize) -> usize {
        let diag = (nx as f64 * std::f64::consts::SQRT_2).ceil() as usize;
        if diag % 2 == nx % 2 {
            diag
        } else {
            diag + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.n_angles == 0 || self.n_bins == 0 {
            return Err(Error::Parameter(format!(
                "projection geometry needs nx, n_angles, n_bins >= 1 (got {}, {}, {})",
                self.nx, self.n_angles, self.n_bins
            )));
        }
        if !self.angle_offset.is_finite() {
            return Err(Error::Parameter("angle_offset must be finite".into()));
        }
        let diag = self.nx as f64 * std::f64::consts::SQRT_2;
        if (self.n_bins as f64) < diag - 1e-9 {
            return Err(Error::Parameter(format!(
                "{} detector bins do not span the slice diagonal ({diag:.2})",
                self.n_bins
            )));
        }
        Ok(())
    }

    pub fn angle(&self, a: usize) -> f64 {
        self.angle_offset + a as f64 * PI / self.n_angles as f64
    }

    /// Signed detector coordinate of bin `b`, in voxel units.
    pub fn bin_position(&self, b: usize) -> f64 {
        b as f64 + 0.5 - self.n_bins as f64 / 2.0
    }

    pub fn n_rays(&self) -> usize {
        self.n_angles * self.n_bins
    }

    pub fn n_voxels(&self) -> usize {
        self.nx * self.nx
    }
}

/// Illumination plan over `(slice, angle, bin)`, stored in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_angles: usize,
    pub n_bins: usize,
    pub nz: usize,
    pub values: Vec<f32>,
}

impl Sinogram {
    pub fn zeros(n_angles: usize, n_bins: usize, nz: usize) -> Self {
        Sinogram {
            n_angles,
            n_bins,
            nz,
            values: vec![0.0; n_angles * n_bins * nz],
        }
    }

    pub fn from_values(n_angles: usize, n_bins: usize, nz: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != n_angles * n_bins * nz {
            return Err(Error::Shape(format!(
                "{} values for a {nz}x{n_angles}x{n_bins} sinogram",
                values.len()
            )));
        }
        Ok(Sinogram {
            n_angles,
            n_bins,
            nz,
            values,
        })
    }

    pub fn slice(&self, iz: usize) -> &[f32] {
        let n = self.n_angles * self.n_bins;
        &self.values[iz * n..(iz + 1) * n]
    }

    pub fn min(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    fn check(&self, pg: &ProjectionGeometry) -> Result<()> {
        if self.n_angles != pg.n_angles || self.n_bins != pg.n_bins {
            return Err(Error::Shape(format!(
                "sinogram is {}x{}, projection geometry expects {}x{}",
                self.n_angles, self.n_bins, pg.n_angles, pg.n_bins
            )));
        }
        if self.values.len() != self.n_angles * self.n_bins * self.nz {
            return Err(Error::Shape("sinogram value count does not match its shape".into()));
        }
        Ok(())
    }
}

/// Accumulated dose over `(slice, row, column)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseImage {
    pub nx: usize,
    pub nz: usize,
    pub values: Vec<f32>,
}

impl DoseImage {
    pub fn zeros(nx: usize, nz: usize) -> Self {
        DoseImage {
            nx,
            nz,
            values: vec![0.0; nx * nx * nz],
        }
    }

    pub fn from_values(nx: usize, nz: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != nx * nx * nz {
            return Err(Error::Shape(format!(
                "{} values for a {nx}x{nx}x{nz} dose image",
                values.len()
            )));
        }
        Ok(DoseImage { nx, nz, values })
    }

    pub fn slice(&self, iz: usize) -> &[f32] {
        let n = self.nx * self.nx;
        &self.values[iz * n..(iz + 1) * n]
    }

    fn check(&self, pg: &ProjectionGeometry) -> Result<()> {
        if self.nx != pg.nx {
            return Err(Error::Shape(format!(
                "image has nx={}, projection geometry expects nx={}",
                self.nx, pg.nx
            )));
        }
        if self.values.len() != self.nx * self.nx * self.nz {
            return Err(Error::Shape("image value count does not match its shape".into()));
        }
        Ok(())
    }
}

/// Compressed sparse rows with `f32` weights.
#[derive(Debug, Clone)]
struct Csr {
    indptr: Vec<usize>,
    idx: Vec<u32>,
    w: Vec<f32>,
}

impl Csr {
    fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    fn transpose(&self, ncols: usize) -> Csr {
        let mut counts = vec![0usize; ncols + 1];
        for &c in &self.idx {
            counts[c as usize + 1] += 1;
        }
        for i in 0..ncols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut idx = vec![0u32; self.idx.len()];
        let mut w = vec![0f32; self.w.len()];
        for r in 0..self.rows() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.idx[k] as usize;
                idx[next[c]] = r as u32;
                w[next[c]] = self.w[k];
                next[c] += 1;
            }
        }
        Csr { indptr, idx, w }
    }

    /// `out[r·L + l] = scale · Σ_k w_k · x[idx_k·L + l]` for every row `r`.
    fn apply(&self, x: &[f64], lanes: usize, scale: f64, out: &mut [f64]) {
        out.par_chunks_mut(lanes * 64)
            .enumerate()
            .for_each(|(block, chunk)| {
                for (i, row_out) in chunk.chunks_mut(lanes).enumerate() {
                    let r = block * 64 + i;
                    let (s, e) = (self.indptr[r], self.indptr[r + 1]);
                    let (idx, w) = (&self.idx[s..e], &self.w[s..e]);
                    let mut lane = 0;
                    while lane < lanes {
                        let left = lanes - lane;
                        if left >= 16 {
                            row_chunk::<16>(idx, w, x, lanes, lane, scale, &mut row_out[lane..]);
                            lane += 16;
                        } else if left >= 8 {
                            row_chunk::<8>(idx, w, x, lanes, lane, scale, &mut row_out[lane..]);
                            lane += 8;
                        } else if left >= 4 {
                            row_chunk::<4>(idx, w, x, lanes, lane, scale, &mut row_out[lane..]);
                            lane += 4;
                        } else if left >= 2 {
                            row_chunk::<2>(idx, w, x, lanes, lane, scale, &mut row_out[lane..]);
                            lane += 2;
                        } else {
                            row_chunk::<1>(idx, w, x, lanes, lane, scale, &mut row_out[lane..]);
                            lane += 1;
                        }
                    }
                }
            });
    }
}

#[inline(always)]
fn row_chunk<const C: usize>(
    idx: &[u32],
    w: &[f32],
    x: &[f64],
    lanes: usize,
    lane0: usize,
    scale: f64,
    out: &mut [f64],
) {
    let mut acc = [0.0f64; C];
    for (&p, &wt) in idx.iter().zip(w) {
        let base = p as usize * lanes + lane0;
        let xs: &[f64; C] = x[base..base + C].try_into().unwrap();
        let wt = wt as f64;
        for k in 0..C {
            acc[k] += wt * xs[k];
        }
    }
    for k in 0..C {
        out[k] = acc[k] * scale;
    }
}

/// Intersection lengths of one ray with the voxels of an `nx × nx` slice,
/// appended to `out` as `(voxel index, length)` in traversal order.
pub(crate) fn trace_ray(nx: usize, theta: f64, s: f64, out: &mut Vec<(u32, f64)>) {
    let h = nx as f64 / 2.0;
    let (sn, c) = theta.sin_cos();
    // p(t) = s·(cos θ, sin θ) + t·(−sin θ, cos θ)
    let (ox, oy) = (s * c, s * sn);
    let (dx, dy) = (-sn, c);
    const EPS: f64 = 1e-12;

    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for (o, d) in [(ox, dx), (oy, dy)] {
        if d.abs() > EPS {
            let (a, b) = ((-h - o) / d, (h - o) / d);
            t_lo = t_lo.max(a.min(b));
            t_hi = t_hi.min(a.max(b));
        } else if o.abs() >= h {
            return;
        }
    }
    if t_hi - t_lo <= EPS {
        return;
    }

    let mut ts = Vec::with_capacity(2 * nx + 4);
    ts.push(t_lo);
    ts.push(t_hi);
    for (o, d) in [(ox, dx), (oy, dy)] {
        if d.abs() > EPS {
            for k in 0..=nx {
                let t = (k as f64 - h - o) / d;
                if t > t_lo && t < t_hi {
                    ts.push(t);
                }
            }
        }
    }
    ts.sort_by(f64::total_cmp);

    for pair in ts.windows(2) {
        let len = pair[1] - pair[0];
        if len <= EPS {
            continue;
        }
        let tm = 0.5 * (pair[0] + pair[1]);
        let ix = (ox + tm * dx + h).floor();
        let iy = (oy + tm * dy + h).floor();
        if ix < 0.0 || iy < 0.0 || ix >= nx as f64 || iy >= nx as f64 {
            continue;
        }
        let v = (iy as usize * nx + ix as usize) as u32;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += len,
            _ => out.push((v, len)),
        }
    }
}

/// Matched forward/back-projector for one [`ProjectionGeometry`].
#[derive(Debug)]
pub struct Projector {
    geom: ProjectionGeometry,
    rays: Csr,
    voxels: Csr,
    scale: f64,
    /// Memoized `operator_norm` results keyed by `(iters, seed)`.
    norms: Mutex<Vec<((usize, u64), f64)>>,
}

impl Projector {
    pub fn new(geom: ProjectionGeometry) -> Result<Self> {
        geom.validate()?;
        let per_angle: Vec<(Vec<usize>, Vec<u32>, Vec<f32>)> = (0..geom.n_angles)
            .into_par_iter()
            .map(|a| {
                let theta = geom.angle(a);
                let mut lens = Vec::new();
                let mut buf = Vec::new();
                let mut idx = Vec::new();
                let mut w = Vec::new();
                for b in 0..geom.n_bins {
                    buf.clear();
                    trace_ray(geom.nx, theta, geom.bin_position(b), &mut buf);
                    lens.push(buf.len());
                    for &(v, l) in &buf {
                        idx.push(v);
                        w.push(l as f32);
                    }
                }
                (lens, idx, w)
            })
            .collect();
        let nnz: usize = per_angle.iter().map(|p| p.1.len()).sum();
        let mut indptr = Vec::with_capacity(geom.n_rays() + 1);
        let mut idx = Vec::with_capacity(nnz);
        let mut w = Vec::with_capacity(nnz);
        indptr.push(0);
        for (lens, i, ww) in per_angle {
            for l in lens {
                indptr.push(indptr.last().unwrap() + l);
            }
            idx.extend(i);
            w.extend(ww);
        }
        let rays = Csr { indptr, idx, w };
        let voxels = rays.transpose(geom.n_voxels());
        Ok(Projector {
            geom,
            rays,
            voxels,
            scale: 1.0 / geom.n_angles as f64,
            norms: Mutex::new(Vec::new()),
        })
    }

    pub fn geometry(&self) -> &ProjectionGeometry {
        &self.geom
    }

    /// Number of stored ray/voxel intersections.
    pub fn nnz(&self) -> usize {
        self.rays.idx.len()
    }

    /// Row `r` of the intersection-length matrix as `(voxel, length)` pairs.
    pub fn ray_weights(&self, ray: usize) -> impl Iterator<Item = (usize, f32)> + '_ {
        let (s, e) = (self.rays.indptr[ray], self.rays.indptr[ray + 1]);
        self.rays.idx[s..e]
            .iter()
            .zip(&self.rays.w[s..e])
            .map(|(&v, &w)| (v as usize, w))
    }

    /// Forward projection of `lanes` interleaved images into interleaved
    /// sinograms.
    pub fn forward_lanes(&self, img: &[f64], lanes: usize, out: &mut [f64]) {
        assert_eq!(img.len(), self.geom.n_voxels() * lanes);
        assert_eq!(out.len(), self.geom.n_rays() * lanes);
        self.rays.apply(img, lanes, self.scale, out);
    }

    /// Back-projection of `lanes` interleaved sinograms.
    pub fn backward_lanes(&self, sino: &[f64], lanes: usize, out: &mut [f64]) {
        assert_eq!(sino.len(), self.geom.n_rays() * lanes);
        assert_eq!(out.len(), self.geom.n_voxels() * lanes);
        self.voxels.apply(sino, lanes, self.scale, out);
    }

    pub fn forward(&self, img: &DoseImage) -> Result<Sinogram> {
        img.check(&self.geom)?;
        let lanes = img.nz;
        let x = interleave(&img.values, lanes);
        let mut out = vec![0.0; self.geom.n_rays() * lanes];
        self.forward_lanes(&x, lanes, &mut out);
        Ok(Sinogram {
            n_angles: self.geom.n_angles,
            n_bins: self.geom.n_bins,
            nz: lanes,
            values: deinterleave_f32(&out, lanes),
        })
    }

    pub fn backward(&self, sino: &Sinogram) -> Result<DoseImage> {
        sino.check(&self.geom)?;
        let lanes = sino.nz;
        let y = interleave(&sino.values, lanes);
        let mut out = vec![0.0; self.geom.n_voxels() * lanes];
        self.backward_lanes(&y, lanes, &mut out);
        Ok(DoseImage {
            nx: self.geom.nx,
            nz: lanes,
            values: deinterleave_f32(&out, lanes),
        })
    }

    /// Power-iteration estimate of `σ_max(A)²`, the largest eigenvalue of
    /// `AᵀA`, started from a seeded random vector. The Rayleigh quotient of
    /// power iterates of a positive semidefinite operator never decreases.
    pub fn operator_norm(&self, iters: usize, seed: u64) -> f64 {
        let key = (iters, seed);
        if let Some(&(_, v)) = self.norms.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return v;
        }
        let v = self.power_iteration(iters, seed);
        self.norms.lock().unwrap().push((key, v));
        v
    }

    fn power_iteration(&self, iters: usize, seed: u64) -> f64 {
        let n = self.geom.n_voxels();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        normalize(&mut x);
        let mut sino = vec![0.0; self.geom.n_rays()];
        let mut y = vec![0.0; n];
        let mut lambda = 0.0;
        for _ in 0..iters.max(1) {
            self.forward_lanes(&x, 1, &mut sino);
            self.backward_lanes(&sino, 1, &mut y);
            lambda = dot(&x, &y);
            x.copy_from_slice(&y);
            if normalize(&mut x) == 0.0 {
                return 0.0;
            }
        }
        lambda
    }
}

/// Forward projection building a throwaway [`Projector`].
pub fn forward(img: &DoseImage, pg: &ProjectionGeometry) -> Result<Sinogram> {
    Projector::new(*pg)?.forward(img)
}

/// Back-projection building a throwaway [`Projector`].
pub fn backward(sino: &Sinogram, pg: &ProjectionGeometry) -> Result<DoseImage> {
    Projector::new(*pg)?.backward(sino)
}

/// Power-iteration estimate of `σ_max(A)²` for `pg`.
pub fn operator_norm(pg: &ProjectionGeometry, iters: usize, seed: u64) -> Result<f64> {
    Ok(Projector::new(*pg)?.operator_norm(iters, seed))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Slice-major `f32` blocks to element-major `f64` lanes.
pub(crate) fn interleave(values: &[f32], lanes: usize) -> Vec<f64> {
    let n = values.len() / lanes;
    let mut out = vec![0.0; values.len()];
    for l in 0..lanes {
        for i in 0..n {
            out[i * lanes + l] = values[l * n + i] as f64;
        }
    }
    out
}

pub(crate) fn deinterleave_f32(values: &[f64], lanes: usize) -> Vec<f32> {
    let n = values.len() / lanes;
    let mut out = vec![0.0; values.len()];
    for l in 0..lanes {
        for i in 0..n {
            out[l * n + i] = values[i * lanes + l] as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bins_match_parity() {
        assert_eq!(ProjectionGeometry::default_bins(32), 46);
        assert_eq!(ProjectionGeometry::default_bins(33), 47);
        assert_eq!(ProjectionGeometry::default_bins(128), 182);
    }

    #[test]
    fn rejects_narrow_detector() {
        assert!(ProjectionGeometry::new(32, 10, 40, 0.0).is_err());
        assert!(ProjectionGeometry::new(32, 0, 46, 0.0).is_err());
    }

    #[test]
    fn axis_aligned_ray_crosses_one_column() {
        let mut out = Vec::new();
        trace_ray(8, 0.0, 0.5, &mut out);
        // θ = 0 rays run along +y at x = s, through column ix = 4.
        assert_eq!(out.len(), 8);
        assert!(out.iter().all(|&(v, l)| v as usize % 8 == 4 && (l - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ray_outside_square_is_empty() {
        let mut out = Vec::new();
        trace_ray(8, 0.3, 7.0, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn zero_in_zero_out() {
        let pg = ProjectionGeometry::new(16, 12, 23, 0.0).unwrap();
        let p = Projector::new(pg).unwrap();
        let s = p.forward(&DoseImage::zeros(16, 1)).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
        let d = p.backward(&Sinogram::zeros(12, 23, 1)).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let pg = ProjectionGeometry::new(16, 12, 23, 0.0).unwrap();
        let p = Projector::new(pg).unwrap();
        assert!(matches!(p.forward(&DoseImage::zeros(8, 1)), Err(Error::Shape(_))));
        assert!(matches!(
            p.backward(&Sinogram::zeros(12, 24, 1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn single_angle_backprojection_is_a_strip_pattern() {
        let pg = ProjectionGeometry::new(16, 1, 23, 0.0).unwrap();
        let p = Projector::new(pg).unwrap();
        let s = Sinogram::from_values(1, 23, 1, vec![1.0; 23]).unwrap();
        let d = p.backward(&s).unwrap();
        // θ = 0 rays run along y: every column is constant.
        for ix in 0..16 {
            let col: Vec<f32> = (0..16).map(|iy| d.values[iy * 16 + ix]).collect();
            assert!(col.iter().all(|&v| v == col[0]), "column {ix}: {col:?}");
        }
    }

    #[test]
    fn lane_batching_is_bit_identical() {
        let pg = ProjectionGeometry::new(16, 10, 23, 0.1).unwrap();
        let p = Projector::new(pg).unwrap();
        let lanes = 11;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..256 * lanes).map(|_| rng.gen()).collect();
        let mut batched = vec![0.0; pg.n_rays() * lanes];
        p.forward_lanes(&x, lanes, &mut batched);
        for l in 0..lanes {
            let single: Vec<f64> = (0..256).map(|i| x[i * lanes + l]).collect();
            let mut out = vec![0.0; pg.n_rays()];
            p.forward_lanes(&single, 1, &mut out);
            for r in 0..pg.n_rays() {
                assert_eq!(out[r].to_bits(), batched[r * lanes + l].to_bits());
            }
        }
    }
}
