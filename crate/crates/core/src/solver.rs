//! Projected FISTA for the penalty problem `min F(g)` subject to `g ≥ 0`.
//!
//! Runs a fixed number of iterations with no restart and no early stopping.
//! Independent problems sharing one projector are advanced in lockstep as
//! lanes; each lane's arithmetic is independent of the others, so a lane's
//! result does not depend on which batch it ran in.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Label, TargetGeometry};
use crate::penalty::{lanes_eval, Lane, PenaltyConfig};
use crate::projector::{DoseImage, Projector, Sinogram};

/// Safety factor on the power-iteration estimate of `‖A‖²`.
pub const NORM_SAFETY: f64 = 1.05;

/// Maximum lanes advanced together.
pub const LANE_BATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    /// `1 / (2 · 1.05 · ‖A‖²)`.
    Auto(AutoTag),
    Fixed(f64),
}

/// Serializes as the string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl StepSize {
    pub const AUTO: StepSize = StepSize::Auto(AutoTag::Auto);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zeros,
    /// Ramp-filtered projection of the target with negatives clipped,
    /// scaled so the mean in-part dose equals `τ_upper`.
    ClippedFbp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub step: StepSize,
    pub init: Init,
    /// Objective-history cadence; the first and last iterates are always
    /// recorded.
    pub record_every: usize,
    /// Seed of the power-iteration start vector.
    pub seed: u64,
    /// Power iterations used for the automatic step size.
    pub norm_iters: usize,
}

fn default_norm_iters() -> usize {
    100
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 1000,
            step: StepSize::AUTO,
            init: Init::Zeros,
            record_every: 10,
            seed: 0,
            norm_iters: default_norm_iters(),
        }
    }
}

impl SolveOptions {
    pub fn with_iters(max_iters: usize) -> Self {
        SolveOptions {
            max_iters,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let StepSize::Fixed(s) = self.step {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Parameter(format!("step must be positive, got {s}")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::Parameter("record_every must be >= 1".into()));
        }
        if self.norm_iters < 10 {
            return Err(Error::Parameter("norm_iters must be >= 10".into()));
        }
        Ok(())
    }

    fn step_for(&self, projector: &Projector) -> f64 {
        match self.step {
            StepSize::Fixed(s) => s,
            StepSize::Auto(_) => {
                let norm = projector.operator_norm(self.norm_iters, self.seed);
                1.0 / (2.0 * NORM_SAFETY * norm)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub plan: Sinogram,
    pub dose: DoseImage,
    /// `(iteration, objective)` pairs.
    pub history: Vec<(usize, f64)>,
    pub iters_run: usize,
}

/// Final state of one lane before assembly into a [`SolveResult`].
struct LaneState {
    plan: Vec<f32>,
    history: Vec<(usize, f64)>,
}

/// Solves one single-slice problem.
pub fn solve(
    geom: &TargetGeometry,
    projector: &Projector,
    cfg: &PenaltyConfig,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    if geom.nz() != 1 {
        return Err(Error::Shape(format!(
            "solve expects one slice, got {}; use solve_volume",
            geom.nz()
        )));
    }
    solve_volume(geom, projector, cfg, opts)
}

/// Solves every slice of `geom` independently and stacks the results.
pub fn solve_volume(
    geom: &TargetGeometry,
    projector: &Projector,
    cfg: &PenaltyConfig,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    check_geometry(geom, projector)?;
    cfg.validate()?;
    let lanes: Vec<Lane<'_>> = (0..geom.nz())
        .map(|iz| Lane {
            labels: geom.slice_labels(iz),
            cfg: *cfg,
        })
        .collect();
    let results = solve_lanes(projector, &lanes, opts)?;
    let mut states = Vec::with_capacity(results.len());
    for r in results {
        states.push(r?);
    }
    assemble(projector, states, opts.max_iters)
}

/// Solves independent single-slice problems that share one projector.
/// Per-lane failures are returned in place and do not affect other lanes.
pub fn solve_batch(
    projector: &Projector,
    lanes: &[Lane<'_>],
    opts: &SolveOptions,
) -> Result<Vec<Result<SolveResult>>> {
    for lane in lanes {
        if lane.labels.len() != projector.geometry().n_voxels() {
            return Err(Error::Shape("lane labels do not match projector nx".into()));
        }
        lane.cfg.validate()?;
    }
    let results = solve_lanes(projector, lanes, opts)?;
    Ok(results
        .into_iter()
        .map(|r| r.and_then(|s| assemble(projector, vec![s], opts.max_iters)))
        .collect())
}

pub(crate) fn check_geometry(geom: &TargetGeometry, projector: &Projector) -> Result<()> {
    if geom.nx() != projector.geometry().nx {
        return Err(Error::Shape(format!(
            "geometry nx={} but projector nx={}",
            geom.nx(),
            projector.geometry().nx
        )));
    }
    geom.validate()
}

/// Stacks lane plans along z and recomputes the dose from the stored plan.
fn assemble(projector: &Projector, states: Vec<LaneState>, iters: usize) -> Result<SolveResult> {
    let pg = projector.geometry();
    let nz = states.len();
    let mut values = Vec::with_capacity(pg.n_rays() * nz);
    let mut history = Vec::new();
    for (iz, s) in states.into_iter().enumerate() {
        values.extend_from_slice(&s.plan);
        if iz == 0 {
            history = s.history;
        } else {
            for (h, (_, v)) in history.iter_mut().zip(s.history) {
                h.1 += v;
            }
        }
    }
    let plan = Sinogram::from_values(pg.n_angles, pg.n_bins, nz, values)?;
    let dose = projector.backward(&plan)?;
    Ok(SolveResult {
        plan,
        dose,
        history,
        iters_run: iters,
    })
}

fn solve_lanes(
    projector: &Projector,
    lanes: &[Lane<'_>],
    opts: &SolveOptions,
) -> Result<Vec<Result<LaneState>>> {
    opts.validate()?;
    let step = opts.step_for(projector);
    let batches: Vec<Vec<Result<LaneState>>> = lanes
        .par_chunks(LANE_BATCH)
        .map(|chunk| fista_lanes(projector, chunk, opts, step))
        .collect();
    Ok(batches.into_iter().flatten().collect())
}

fn fista_lanes(
    projector: &Projector,
    lanes: &[Lane<'_>],
    opts: &SolveOptions,
    step: f64,
) -> Vec<Result<LaneState>> {
    let pg = projector.geometry();
    let nl = lanes.len();
    let n_sino = pg.n_rays() * nl;
    let n_img = pg.n_voxels() * nl;

    let mut x = match opts.init {
        Init::Zeros => vec![0.0; n_sino],
        Init::ClippedFbp => clipped_fbp_lanes(projector, lanes),
    };
    let mut x_prev = x.clone();
    let mut y = x.clone();
    let mut grad = vec![0.0; n_sino];
    let mut dose = vec![0.0; n_img];
    let mut deriv = vec![0.0; n_img];
    let mut vals = vec![0.0; nl];
    let mut histories: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nl];
    let mut failed: Vec<Option<usize>> = vec![None; nl];

    let record = |k: usize,
                      x: &[f64],
                      dose: &mut [f64],
                      vals: &mut [f64],
                      histories: &mut [Vec<(usize, f64)>],
                      failed: &mut [Option<usize>]| {
        projector.backward_lanes(x, nl, dose);
        lanes_eval(dose, lanes, vals, None);
        for l in 0..nl {
            if failed[l].is_none() {
                if vals[l].is_finite() {
                    histories[l].push((k, vals[l]));
                } else {
                    failed[l] = Some(k);
                }
            }
        }
    };
    record(0, &x, &mut dose, &mut vals, &mut histories, &mut failed);

    let mut t = 1.0f64;
    for k in 1..=opts.max_iters {
        projector.backward_lanes(&y, nl, &mut dose);
        lanes_eval(&dose, lanes, &mut vals, Some(&mut deriv));
        for l in 0..nl {
            if failed[l].is_none() && !vals[l].is_finite() {
                failed[l] = Some(k);
            }
        }
        if failed.iter().all(Option::is_some) {
            break;
        }
        projector.forward_lanes(&deriv, nl, &mut grad);

        std::mem::swap(&mut x, &mut x_prev);
        for i in 0..n_sino {
            let v = y[i] - step * grad[i];
            x[i] = if v > 0.0 { v } else { 0.0 };
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..n_sino {
            y[i] = x[i] + beta * (x[i] - x_prev[i]);
        }
        t = t_next;

        if k % opts.record_every == 0 || k == opts.max_iters {
            record(k, &x, &mut dose, &mut vals, &mut histories, &mut failed);
        }
    }

    let n_rays = pg.n_rays();
    (0..nl)
        .map(|l| match failed[l] {
            Some(iteration) => Err(Error::Divergence { iteration }),
            None => Ok(LaneState {
                plan: (0..n_rays).map(|r| x[r * nl + l] as f32).collect(),
                history: std::mem::take(&mut histories[l]),
            }),
        })
        .collect()
}

/// Discrete ramp (Ram-Lak) kernel for unit bin spacing, indexed by offset.
fn ramp_kernel(n_bins: usize) -> Vec<f64> {
    (0..n_bins)
        .map(|n| {
            if n == 0 {
                0.25
            } else if n % 2 == 1 {
                -1.0 / (PI * PI * (n * n) as f64)
            } else {
                0.0
            }
        })
        .collect()
}

/// Ramp-filters each angle row of interleaved sinograms.
fn ramp_filter_lanes(sino: &[f64], n_angles: usize, n_bins: usize, nl: usize) -> Vec<f64> {
    let h = ramp_kernel(n_bins);
    let mut out = vec![0.0; sino.len()];
    for a in 0..n_angles {
        for b in 0..n_bins {
            for l in 0..nl {
                let mut acc = 0.0;
                for c in 0..n_bins {
                    let off = b.abs_diff(c);
                    acc += h[off] * sino[(a * n_bins + c) * nl + l];
                }
                out[(a * n_bins + b) * nl + l] = acc;
            }
        }
    }
    out
}

fn clipped_fbp_lanes(projector: &Projector, lanes: &[Lane<'_>]) -> Vec<f64> {
    let pg = projector.geometry();
    let nl = lanes.len();
    let nv = pg.n_voxels();
    let mut target = vec![0.0; nv * nl];
    for (l, lane) in lanes.iter().enumerate() {
        for (i, &lab) in lane.labels.iter().enumerate() {
            if lab == Label::In {
                target[i * nl + l] = 1.0;
            }
        }
    }
    let mut p = vec![0.0; pg.n_rays() * nl];
    projector.forward_lanes(&target, nl, &mut p);
    let mut q = ramp_filter_lanes(&p, pg.n_angles, pg.n_bins, nl);
    q.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut d = vec![0.0; nv * nl];
    projector.backward_lanes(&q, nl, &mut d);
    for (l, lane) in lanes.iter().enumerate() {
        let (mut sum, mut count) = (0.0, 0usize);
        for (i, &lab) in lane.labels.iter().enumerate() {
            if lab == Label::In {
                sum += d[i * nl + l];
                count += 1;
            }
        }
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        let scale = if mean > 0.0 { lane.cfg.tau_upper / mean } else { 0.0 };
        for r in 0..pg.n_rays() {
            q[r * nl + l] *= scale;
        }
    }
    q
}
