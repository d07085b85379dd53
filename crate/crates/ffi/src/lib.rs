//! C ABI over `tvam-core`.
//!
//! Objects are opaque heap handles created by `tvam_*_new`-style functions
//! and released with the matching `tvam_*_free`. Every fallible call returns
//! a [`TvamStatus`]; on failure a message is kept per thread and can be read
//! with [`tvam_last_error`]. Panics are caught at the boundary and reported
//! as [`TvamStatus::Panic`].
//!
//! Array arguments are passed as pointer plus element count. Slices are
//! stored contiguously, `x` fastest, then `y`, then `z`; sinograms are
//! stored bin fastest, then angle, then slice.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tvam_core::geometry::{make_disk, make_gyroid, Label};
use tvam_core::metrics;
use tvam_core::osmo::{solve_osmo, OsmoOptions};
use tvam_core::{
    DoseImage, Error, PenaltyConfig, ProjectionGeometry, Projector, Sinogram, SolveOptions,
    SolveResult, TargetGeometry,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    DegenerateGeometry = 4,
    Divergence = 5,
    OsmoCollapse = 6,
    BufferTooSmall = 7,
    Io = 8,
    Panic = 9,
}

/// Optimization method.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvamMethod {
    L2n = 0,
    Osp = 1,
    Ospw = 2,
    Osmo = 3,
}

/// Parameters for [`tvam_solve`]. Obtain defaults from
/// [`tvam_solve_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvamSolveParams {
    pub method: TvamMethod,
    pub tau_lower: f64,
    pub tau_upper: f64,
    /// Dead-zone width; used by OSPW only.
    pub w: f64,
    pub max_iters: u64,
    /// Sinogram floor; used by OSMO only.
    pub min_projection_value: f64,
}

/// Dose-quality metrics over a whole volume.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TvamMetrics {
    pub process_window: f64,
    pub in_part_dose_range: f64,
    pub voxel_error_rate: f64,
    pub max_dose: f64,
    pub n_in: u64,
    pub n_out: u64,
}

/// Target labels (0 external, 1 out-of-part, 2 in-part) for one or more slices.
pub struct TvamGeometry(TargetGeometry);

/// Ray-voxel intersection operator for one slice size and angle set.
pub struct TvamProjector(Projector);

/// Plan and dose returned by [`tvam_solve`].
pub struct TvamResult(SolveResult);

enum Fail {
    Null(&'static str),
    Buffer { what: &'static str, need: usize, got: usize },
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TvamStatus {
    match e {
        Error::Parameter(_) | Error::Config(_) | Error::NoAdmissiblePair => {
            TvamStatus::InvalidArgument
        }
        Error::Shape(_) => TvamStatus::ShapeMismatch,
        Error::DegenerateGeometry(_) | Error::DegenerateSlices { .. } => {
            TvamStatus::DegenerateGeometry
        }
        Error::Divergence { .. } => TvamStatus::Divergence,
        Error::OsmoCollapse { .. } => TvamStatus::OsmoCollapse,
        _ => TvamStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TvamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TvamStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            TvamStatus::NullPointer
        }
        Ok(Err(Fail::Buffer { what, need, got })) => {
            set_error(format!("{what}: buffer holds {got} elements, {need} required"));
            TvamStatus::BufferTooSmall
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TvamStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(
    p: *mut T,
    len: usize,
    need: usize,
    what: &'static str,
) -> Result<&'a mut [T], Fail> {
    if len < need {
        return Err(Fail::Buffer { what, need, got: len });
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(&mut std::slice::from_raw_parts_mut(p, len)[..need])
}

unsafe fn put_handle<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tvam_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the buffer size needed for the full message,
/// including the NUL. Returns 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tvam_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Centred disk of radius `radius_fraction * nx / 2` inside the inscribed circle.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn tvam_geometry_disk(
    nx: usize,
    radius_fraction: f64,
    out: *mut *mut TvamGeometry,
) -> TvamStatus {
    guard(|| put_handle(out, TvamGeometry(make_disk(nx, radius_fraction)?)))
}

/// Gyroid lattice with `cells` periods across the slice and `solid_fraction`
/// of in-part volume.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn tvam_geometry_gyroid(
    nx: usize,
    nz: usize,
    cells: usize,
    solid_fraction: f64,
    out: *mut *mut TvamGeometry,
) -> TvamStatus {
    guard(|| put_handle(out, TvamGeometry(make_gyroid(nx, nz, cells, solid_fraction)?)))
}

/// Geometry from `nx * nx * nz` label bytes (0 external, 1 out, 2 in).
///
/// # Safety
/// `labels` must point to `len` readable bytes; `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn tvam_geometry_from_labels(
    nx: usize,
    nz: usize,
    labels: *const u8,
    len: usize,
    out: *mut *mut TvamGeometry,
) -> TvamStatus {
    guard(|| {
        let raw = in_slice(labels, len, "labels")?;
        let mut v = Vec::with_capacity(raw.len());
        for (i, &b) in raw.iter().enumerate() {
            v.push(Label::from_u8(b).ok_or_else(|| {
                Error::Parameter(format!("label {b} at index {i} is not 0, 1 or 2"))
            })?);
        }
        put_handle(out, TvamGeometry(TargetGeometry::from_labels(nx, nz, v)?))
    })
}

/// Writes the slice width and slice count.
///
/// # Safety
/// `geom` must be a live handle; `nx` and `nz` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tvam_geometry_shape(
    geom: *const TvamGeometry,
    nx: *mut usize,
    nz: *mut usize,
) -> TvamStatus {
    guard(|| {
        let g = &as_ref(geom, "geom")?.0;
        if nx.is_null() || nz.is_null() {
            return Err(Fail::Null("nx/nz"));
        }
        *nx = g.nx();
        *nz = g.nz();
        Ok(())
    })
}

/// Writes the number of in-part, out-of-part and external voxels.
///
/// # Safety
/// `geom` must be a live handle; the count pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tvam_geometry_counts(
    geom: *const TvamGeometry,
    n_in: *mut usize,
    n_out: *mut usize,
    n_ext: *mut usize,
) -> TvamStatus {
    guard(|| {
        let g = &as_ref(geom, "geom")?.0;
        if n_in.is_null() || n_out.is_null() || n_ext.is_null() {
            return Err(Fail::Null("counts"));
        }
        *n_in = g.n_in();
        *n_out = g.n_out();
        *n_ext = g.n_ext();
        Ok(())
    })
}

/// Copies the label bytes into `buf`.
///
/// # Safety
/// `geom` must be a live handle; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tvam_geometry_labels(
    geom: *const TvamGeometry,
    buf: *mut u8,
    len: usize,
) -> TvamStatus {
    guard(|| {
        let g = &as_ref(geom, "geom")?.0;
        let dst = out_slice(buf, len, g.labels().len(), "labels")?;
        for (d, &l) in dst.iter_mut().zip(g.labels()) {
            *d = l as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `geom` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tvam_geometry_free(geom: *mut TvamGeometry) {
    free_handle(geom)
}

/// Builds the projector for `nx * nx` slices. `n_bins == 0` selects the
/// smallest bin count covering the slice diagonal.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn tvam_projector_new(
    nx: usize,
    n_angles: usize,
    n_bins: usize,
    angle_offset: f64,
    out: *mut *mut TvamProjector,
) -> TvamStatus {
    guard(|| {
        let bins = if n_bins == 0 { ProjectionGeometry::default_bins(nx) } else { n_bins };
        let pg = ProjectionGeometry::new(nx, n_angles, bins, angle_offset)?;
        put_handle(out, TvamProjector(Projector::new(pg)?))
    })
}

/// Writes slice width, angle count and bin count.
///
/// # Safety
/// `proj` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tvam_projector_shape(
    proj: *const TvamProjector,
    nx: *mut usize,
    n_angles: *mut usize,
    n_bins: *mut usize,
) -> TvamStatus {
    guard(|| {
        let pg = as_ref(proj, "proj")?.0.geometry();
        if nx.is_null() || n_angles.is_null() || n_bins.is_null() {
            return Err(Fail::Null("shape"));
        }
        *nx = pg.nx;
        *n_angles = pg.n_angles;
        *n_bins = pg.n_bins;
        Ok(())
    })
}

/// Projects `nz` slices of `image` (`nx*nx*nz` values) into `sino`
/// (`n_angles*n_bins*nz` values).
///
/// # Safety
/// Pointers must reference buffers of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tvam_projector_forward(
    proj: *const TvamProjector,
    image: *const f32,
    image_len: usize,
    nz: usize,
    sino: *mut f32,
    sino_len: usize,
) -> TvamStatus {
    guard(|| {
        let p = &as_ref(proj, "proj")?.0;
        let pg = p.geometry();
        let img = DoseImage::from_values(pg.nx, nz, in_slice(image, image_len, "image")?.to_vec())?;
        let s = p.forward(&img)?;
        out_slice(sino, sino_len, s.values.len(), "sino")?.copy_from_slice(&s.values);
        Ok(())
    })
}

/// Back-projects `nz` sinogram slices into `image`.
///
/// # Safety
/// Pointers must reference buffers of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tvam_projector_backward(
    proj: *const TvamProjector,
    sino: *const f32,
    sino_len: usize,
    nz: usize,
    image: *mut f32,
    image_len: usize,
) -> TvamStatus {
    guard(|| {
        let p = &as_ref(proj, "proj")?.0;
        let pg = p.geometry();
        let s = Sinogram::from_values(
            pg.n_angles,
            pg.n_bins,
            nz,
            in_slice(sino, sino_len, "sino")?.to_vec(),
        )?;
        let img = p.backward(&s)?;
        out_slice(image, image_len, img.values.len(), "image")?.copy_from_slice(&img.values);
        Ok(())
    })
}

/// # Safety
/// `proj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tvam_projector_free(proj: *mut TvamProjector) {
    free_handle(proj)
}

/// Default parameters for `method`: thresholds 0.70/0.90 (0.85/0.90 for
/// OSMO), `w = 0`, 1000 iterations.
#[no_mangle]
pub extern "C" fn tvam_solve_params_default(method: TvamMethod) -> TvamSolveParams {
    let (tau_lower, tau_upper) = match method {
        TvamMethod::Osmo => (0.85, 0.90),
        _ => (0.70, 0.90),
    };
    TvamSolveParams {
        method,
        tau_lower,
        tau_upper,
        w: 0.0,
        max_iters: 1000,
        min_projection_value: 0.0,
    }
}

/// Optimizes a plan for every slice of `geom`.
///
/// # Safety
/// `geom` and `proj` must be live handles, `params` valid and `out` a
/// handle slot.
#[no_mangle]
pub unsafe extern "C" fn tvam_solve(
    geom: *const TvamGeometry,
    proj: *const TvamProjector,
    params: *const TvamSolveParams,
    out: *mut *mut TvamResult,
) -> TvamStatus {
    guard(|| {
        let g = &as_ref(geom, "geom")?.0;
        let p = &as_ref(proj, "proj")?.0;
        let prm = *as_ref(params, "params")?;
        let iters = usize::try_from(prm.max_iters)
            .map_err(|_| Error::Parameter("max_iters out of range".into()))?;
        let (l, u) = (prm.tau_lower, prm.tau_upper);
        let result = match prm.method {
            TvamMethod::Osmo => {
                let mut o = OsmoOptions::new(l, u, iters)?;
                o.min_projection_value = prm.min_projection_value;
                solve_osmo(g, p, &o)?
            }
            m => {
                let cfg = match m {
                    TvamMethod::L2n => PenaltyConfig::l2n(l, u)?,
                    TvamMethod::Osp => PenaltyConfig::osp(l, u)?,
                    _ => PenaltyConfig::ospw(l, u, prm.w)?,
                };
                tvam_core::solve_volume(g, p, &cfg, &SolveOptions::with_iters(iters))?
            }
        };
        put_handle(out, TvamResult(result))
    })
}

/// Number of plan values (`n_angles * n_bins * nz`).
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tvam_result_plan_len(res: *const TvamResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.plan.values.len())
}

/// Number of dose values (`nx * nx * nz`).
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tvam_result_dose_len(res: *const TvamResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.dose.values.len())
}

/// Copies the plan into `buf`.
///
/// # Safety
/// `res` must be a live handle; `buf` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn tvam_result_plan(res: *const TvamResult, buf: *mut f32, len: usize) -> TvamStatus {
    guard(|| {
        let v = &as_ref(res, "res")?.0.plan.values;
        out_slice(buf, len, v.len(), "plan")?.copy_from_slice(v);
        Ok(())
    })
}

/// Copies the dose into `buf`.
///
/// # Safety
/// `res` must be a live handle; `buf` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn tvam_result_dose(res: *const TvamResult, buf: *mut f32, len: usize) -> TvamStatus {
    guard(|| {
        let v = &as_ref(res, "res")?.0.dose.values;
        out_slice(buf, len, v.len(), "dose")?.copy_from_slice(v);
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tvam_result_free(res: *mut TvamResult) {
    free_handle(res)
}

/// Evaluates a dose volume against `geom`, trimming `alpha` percent from
/// each end of the in-part and out-of-part distributions.
///
/// # Safety
/// `dose` must point to `len` floats; `geom` must be a live handle and `out`
/// valid.
#[no_mangle]
pub unsafe extern "C" fn tvam_evaluate(
    dose: *const f32,
    len: usize,
    geom: *const TvamGeometry,
    alpha: f64,
    out: *mut TvamMetrics,
) -> TvamStatus {
    guard(|| {
        let g = &as_ref(geom, "geom")?.0;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let d = DoseImage::from_values(g.nx(), g.nz(), in_slice(dose, len, "dose")?.to_vec())?;
        let r = metrics::evaluate(&d, g, alpha)?;
        *out = TvamMetrics {
            process_window: r.pw,
            in_part_dose_range: r.ipdr,
            voxel_error_rate: r.ver,
            max_dose: metrics::max_dose(&d, g)?,
            n_in: r.n_in as u64,
            n_out: r.n_out as u64,
        };
        Ok(())
    })
}
