//! Object-space model optimisation (OSMO) baseline.
//!
//! A model image starts as the binary target. Each iteration projects the
//! model, raises sinogram values below the minimum projection value to that
//! value, back-projects, and divides the dose by its maximum over the whole
//! slice. The model then gains `τ_upper − f` on in-part voxels dosed below
//! `τ_upper` and loses `f − τ_lower` on out-of-part voxels dosed above
//! `τ_lower`. Thresholds are therefore relative to the peak dose.
//!
//! With the default minimum projection value of 0, a model driven negative
//! everywhere yields an all-zero sinogram; the dose cannot be normalized and
//! the run stops with [`Error::OsmoCollapse`].
//!
//! The returned plan is the final clamped sinogram and the returned dose is
//! its back-projection divided by the slice maximum, so `dose` equals
//! `backward(plan)` only up to that per-slice factor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Label, TargetGeometry};
use crate::penalty::validate_thresholds;
use crate::projector::{DoseImage, Projector, Sinogram};
use crate::solver::{check_geometry, SolveResult, LANE_BATCH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsmoOptions {
    pub tau_lower: f64,
    pub tau_upper: f64,
    pub max_iters: usize,
    #[serde(default)]
    pub min_projection_value: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_record_every() -> usize {
    10
}

impl OsmoOptions {
    pub fn new(tau_lower: f64, tau_upper: f64, max_iters: usize) -> Result<Self> {
        let o = OsmoOptions {
            tau_lower,
            tau_upper,
            max_iters,
            min_projection_value: 0.0,
            record_every: default_record_every(),
        };
        o.validate()?;
        Ok(o)
    }

    /// The 0.85 / 0.90 default pair.
    pub fn defaults(max_iters: usize) -> Self {
        OsmoOptions::new(0.85, 0.90, max_iters).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        validate_thresholds(self.tau_lower, self.tau_upper)?;
        if !(self.min_projection_value.is_finite() && self.min_projection_value >= 0.0) {
            return Err(Error::Parameter(format!(
                "min_projection_value must be >= 0, got {}",
                self.min_projection_value
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Parameter("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One independent OSMO problem on a single slice.
#[derive(Debug, Clone, Copy)]
pub struct OsmoLane<'a> {
    pub labels: &'a [Label],
    pub tau_lower: f64,
    pub tau_upper: f64,
}

struct LaneOut {
    plan: Vec<f32>,
    dose: Vec<f32>,
    history: Vec<(usize, f64)>,
}

/// Runs OSMO on every slice of `geom`; slices are normalized independently.
pub fn solve_osmo(
    geom: &TargetGeometry,
    projector: &Projector,
    opts: &OsmoOptions,
) -> Result<SolveResult> {
    check_geometry(geom, projector)?;
    opts.validate()?;
    let lanes: Vec<OsmoLane<'_>> = (0..geom.nz())
        .map(|iz| OsmoLane {
            labels: geom.slice_labels(iz),
            tau_lower: opts.tau_lower,
            tau_upper: opts.tau_upper,
        })
        .collect();
    let outs = run_lanes(projector, &lanes, opts);
    let mut done = Vec::with_capacity(outs.len());
    for o in outs {
        done.push(o?);
    }
    assemble(projector, done, opts.max_iters)
}

/// Runs independent single-slice OSMO problems; thresholds come from each
/// lane and the iteration settings from `opts`.
pub fn solve_osmo_batch(
    projector: &Projector,
    lanes: &[OsmoLane<'_>],
    opts: &OsmoOptions,
) -> Result<Vec<Result<SolveResult>>> {
    opts.validate()?;
    for lane in lanes {
        if lane.labels.len() != projector.geometry().n_voxels() {
            return Err(Error::Shape("lane labels do not match projector nx".into()));
        }
        validate_thresholds(lane.tau_lower, lane.tau_upper)?;
    }
    Ok(run_lanes(projector, lanes, opts)
        .into_iter()
        .map(|r| r.and_then(|o| assemble(projector, vec![o], opts.max_iters)))
        .collect())
}

fn assemble(projector: &Projector, outs: Vec<LaneOut>, iters: usize) -> Result<SolveResult> {
    let pg = projector.geometry();
    let nz = outs.len();
    let mut plan = Vec::with_capacity(pg.n_rays() * nz);
    let mut dose = Vec::with_capacity(pg.n_voxels() * nz);
    let mut history: Vec<(usize, f64)> = Vec::new();
    for (iz, o) in outs.into_iter().enumerate() {
        plan.extend_from_slice(&o.plan);
        dose.extend_from_slice(&o.dose);
        if iz == 0 {
            history = o.history;
        } else {
            for (h, (_, v)) in history.iter_mut().zip(o.history) {
                h.1 += v;
            }
        }
    }
    Ok(SolveResult {
        plan: Sinogram::from_values(pg.n_angles, pg.n_bins, nz, plan)?,
        dose: DoseImage::from_values(pg.nx, nz, dose)?,
        history,
        iters_run: iters,
    })
}

fn run_lanes(
    projector: &Projector,
    lanes: &[OsmoLane<'_>],
    opts: &OsmoOptions,
) -> Vec<Result<LaneOut>> {
    lanes
        .par_chunks(LANE_BATCH)
        .map(|chunk| osmo_lanes(projector, chunk, opts))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Clamps the sinogram, back-projects and max-normalizes each live lane.
/// Lanes whose dose has no positive maximum are marked collapsed at `k`.
#[allow(clippy::too_many_arguments)]
fn project_and_normalize(
    projector: &Projector,
    model: &[f64],
    sino: &mut [f64],
    dose: &mut [f64],
    nl: usize,
    mpv: f64,
    k: usize,
    failed: &mut [Option<Error>],
) {
    projector.forward_lanes(model, nl, sino);
    for v in sino.iter_mut() {
        if *v < mpv {
            *v = mpv;
        }
    }
    projector.backward_lanes(sino, nl, dose);
    let mut max = vec![f64::NEG_INFINITY; nl];
    let mut finite = vec![true; nl];
    for (i, &d) in dose.iter().enumerate() {
        let l = i % nl;
        finite[l] &= d.is_finite();
        if d > max[l] {
            max[l] = d;
        }
    }
    for l in 0..nl {
        if failed[l].is_some() {
            continue;
        }
        if !finite[l] {
            failed[l] = Some(Error::Divergence { iteration: k });
        } else if max[l] <= 0.0 {
            failed[l] = Some(Error::OsmoCollapse { iteration: k });
        }
    }
    for (i, d) in dose.iter_mut().enumerate() {
        let l = i % nl;
        if failed[l].is_none() {
            *d /= max[l];
        }
    }
}

fn osmo_lanes(
    projector: &Projector,
    lanes: &[OsmoLane<'_>],
    opts: &OsmoOptions,
) -> Vec<Result<LaneOut>> {
    let pg = projector.geometry();
    let nl = lanes.len();
    let nv = pg.n_voxels();
    let mpv = opts.min_projection_value;

    let mut model = vec![0.0; nv * nl];
    for (l, lane) in lanes.iter().enumerate() {
        for (i, &lab) in lane.labels.iter().enumerate() {
            if lab == Label::In {
                model[i * nl + l] = 1.0;
            }
        }
    }
    let mut sino = vec![0.0; pg.n_rays() * nl];
    let mut dose = vec![0.0; nv * nl];
    let mut failed: Vec<Option<Error>> = (0..nl).map(|_| None).collect();
    let mut histories: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nl];
    let mut errors = vec![0.0; nl];

    project_and_normalize(projector, &model, &mut sino, &mut dose, nl, mpv, 0, &mut failed);
    for k in 0..=opts.max_iters {
        if failed.iter().all(Option::is_some) {
            break;
        }
        if k > 0 {
            project_and_normalize(projector, &model, &mut sino, &mut dose, nl, mpv, k, &mut failed);
        }
        // Threshold violations of the current dose drive the next update.
        errors.iter_mut().for_each(|e| *e = 0.0);
        for i in 0..nv {
            for (l, lane) in lanes.iter().enumerate() {
                if failed[l].is_some() {
                    continue;
                }
                let j = i * nl + l;
                let f = dose[j];
                let delta = match lane.labels[i] {
                    Label::In if f < lane.tau_upper => lane.tau_upper - f,
                    Label::Out if f > lane.tau_lower => lane.tau_lower - f,
                    _ => 0.0,
                };
                errors[l] += delta * delta;
                if k < opts.max_iters {
                    model[j] += delta;
                }
            }
        }
        if k % opts.record_every == 0 || k == opts.max_iters {
            for l in 0..nl {
                if failed[l].is_none() {
                    histories[l].push((k, errors[l]));
                }
            }
        }
    }

    let n_rays = pg.n_rays();
    failed
        .into_iter()
        .enumerate()
        .map(|(l, f)| match f {
            Some(e) => Err(e),
            None => Ok(LaneOut {
                plan: (0..n_rays).map(|r| sino[r * nl + l] as f32).collect(),
                dose: (0..nv).map(|i| dose[i * nl + l] as f32).collect(),
                history: std::mem::take(&mut histories[l]),
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_disk;
    use crate::projector::ProjectionGeometry;

    fn small() -> (TargetGeometry, Projector) {
        let g = make_disk(32, 0.5).unwrap();
        let pg = ProjectionGeometry::new(32, 45, ProjectionGeometry::default_bins(32), 0.0).unwrap();
        (g, Projector::new(pg).unwrap())
    }

    #[test]
    fn dose_is_max_normalized_and_plan_clamped() {
        let (g, p) = small();
        let r = solve_osmo(&g, &p, &OsmoOptions::defaults(20)).unwrap();
        let max = r.dose.values.iter().cloned().fold(f32::MIN, f32::max);
        assert_eq!(max, 1.0);
        assert!(r.plan.values.iter().all(|&v| v >= 0.0));
        assert_eq!(r.history.first().unwrap().0, 0);
        assert_eq!(r.history.last().unwrap().0, 20);
    }

    #[test]
    fn min_projection_value_is_a_floor() {
        let (g, p) = small();
        let mut o = OsmoOptions::defaults(5);
        o.min_projection_value = 0.01;
        let r = solve_osmo(&g, &p, &o).unwrap();
        assert!(r.plan.values.iter().all(|&v| v >= 0.01));
    }

    #[test]
    fn low_thresholds_collapse() {
        let (g, p) = small();
        let o = OsmoOptions::new(0.04, 0.08, 200).unwrap();
        match solve_osmo(&g, &p, &o) {
            Err(Error::OsmoCollapse { iteration }) => assert!(iteration > 0),
            other => panic!("expected collapse, got {other:?}"),
        }
    }

    #[test]
    fn batch_matches_single() {
        let (g, p) = small();
        let o = OsmoOptions::defaults(10);
        let single = solve_osmo(&g, &p, &o).unwrap();
        let lanes = [
            OsmoLane { labels: g.labels(), tau_lower: 0.5, tau_upper: 0.6 },
            OsmoLane { labels: g.labels(), tau_lower: 0.85, tau_upper: 0.9 },
        ];
        let batch = solve_osmo_batch(&p, &lanes, &o).unwrap();
        assert_eq!(batch[1].as_ref().unwrap(), &single);
    }

    #[test]
    fn thresholds_are_validated() {
        assert!(OsmoOptions::new(0.9, 0.85, 10).is_err());
        let mut o = OsmoOptions::defaults(1);
        o.min_projection_value = -1.0;
        assert!(o.validate().is_err());
    }
}
