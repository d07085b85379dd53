//! Elementwise penalty families and the summed objective
//! `F(g) = Σ_out p_out(f_i) + Σ_in p_in(f_i)` with `f = Aᵀg`.
//!
//! External voxels never contribute. All penalties are convex, continuously
//! differentiable, and have derivatives with Lipschitz constant 2.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Label, TargetGeometry};
use crate::projector::{Projector, Sinogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    /// Two-sided quadratics centred on the thresholds.
    L2n,
    /// One-sided quadratics.
    Osp,
    /// One-sided out-of-part, dead zone of width `w` above `τ_upper` in-part.
    Ospw,
}

impl fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyFamily::L2n => "l2n",
            PenaltyFamily::Osp => "osp",
            PenaltyFamily::Ospw => "ospw",
        })
    }
}

impl FromStr for PenaltyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2n" => Ok(PenaltyFamily::L2n),
            "osp" => Ok(PenaltyFamily::Osp),
            "ospw" => Ok(PenaltyFamily::Ospw),
            other => Err(Error::Parameter(format!("unknown penalty family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub family: PenaltyFamily,
    pub tau_lower: f64,
    pub tau_upper: f64,
    /// Dead-zone width, only read by [`PenaltyFamily::Ospw`].
    #[serde(default)]
    pub w: f64,
}

impl PenaltyConfig {
    pub fn new(family: PenaltyFamily, tau_lower: f64, tau_upper: f64, w: f64) -> Result<Self> {
        let cfg = PenaltyConfig {
            family,
            tau_lower,
            tau_upper,
            w,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn l2n(tau_lower: f64, tau_upper: f64) -> Result<Self> {
        Self::new(PenaltyFamily::L2n, tau_lower, tau_upper, 0.0)
    }

    pub fn osp(tau_lower: f64, tau_upper: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Osp, tau_lower, tau_upper, 0.0)
    }

    pub fn ospw(tau_lower: f64, tau_upper: f64, w: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Ospw, tau_lower, tau_upper, w)
    }

    pub fn validate(&self) -> Result<()> {
        validate_thresholds(self.tau_lower, self.tau_upper)?;
        if !(self.w.is_finite() && self.w >= 0.0) {
            return Err(Error::Parameter(format!("w must be finite and >= 0, got {}", self.w)));
        }
        Ok(())
    }

    /// Out-of-part penalty.
    #[inline]
    pub fn p_out(&self, x: f64) -> f64 {
        let d = x - self.tau_lower;
        match self.family {
            PenaltyFamily::L2n => d * d,
            PenaltyFamily::Osp | PenaltyFamily::Ospw => {
                if x <= self.tau_lower {
                    0.0
                } else {
                    d * d
                }
            }
        }
    }

    #[inline]
    pub fn dp_out(&self, x: f64) -> f64 {
        let d = x - self.tau_lower;
        match self.family {
            PenaltyFamily::L2n => 2.0 * d,
            PenaltyFamily::Osp | PenaltyFamily::Ospw => {
                if x <= self.tau_lower {
                    0.0
                } else {
                    2.0 * d
                }
            }
        }
    }

    /// In-part penalty.
    #[inline]
    pub fn p_in(&self, x: f64) -> f64 {
        let below = x - self.tau_upper;
        match self.family {
            PenaltyFamily::L2n => below * below,
            PenaltyFamily::Osp => {
                if x < self.tau_upper {
                    below * below
                } else {
                    0.0
                }
            }
            PenaltyFamily::Ospw => {
                let top = self.tau_upper + self.w;
                if x < self.tau_upper {
                    below * below
                } else if x < top {
                    0.0
                } else {
                    (x - top) * (x - top)
                }
            }
        }
    }

    #[inline]
    pub fn dp_in(&self, x: f64) -> f64 {
        let below = x - self.tau_upper;
        match self.family {
            PenaltyFamily::L2n => 2.0 * below,
            PenaltyFamily::Osp => {
                if x < self.tau_upper {
                    2.0 * below
                } else {
                    0.0
                }
            }
            PenaltyFamily::Ospw => {
                let top = self.tau_upper + self.w;
                if x < self.tau_upper {
                    2.0 * below
                } else if x < top {
                    0.0
                } else {
                    2.0 * (x - top)
                }
            }
        }
    }

    #[inline]
    pub fn penalty(&self, label: Label, x: f64) -> f64 {
        match label {
            Label::In => self.p_in(x),
            Label::Out => self.p_out(x),
            Label::Ext => 0.0,
        }
    }

    #[inline]
    pub fn derivative(&self, label: Label, x: f64) -> f64 {
        match label {
            Label::In => self.dp_in(x),
            Label::Out => self.dp_out(x),
            Label::Ext => 0.0,
        }
    }
}

pub(crate) fn validate_thresholds(tau_lower: f64, tau_upper: f64) -> Result<()> {
    if !(tau_lower.is_finite() && tau_upper.is_finite()) {
        return Err(Error::Parameter("thresholds must be finite".into()));
    }
    if !(0.0..1.0).contains(&tau_lower) {
        return Err(Error::Parameter(format!(
            "tau_lower must lie in [0, 1), got {tau_lower}"
        )));
    }
    if !(tau_upper > 0.0 && tau_upper <= 1.0) {
        return Err(Error::Parameter(format!(
            "tau_upper must lie in (0, 1], got {tau_upper}"
        )));
    }
    if tau_lower >= tau_upper {
        return Err(Error::Parameter(format!(
            "thresholds must satisfy tau_lower < tau_upper, got {tau_lower} >= {tau_upper}"
        )));
    }
    Ok(())
}

/// Summed penalty of a dose vector.
pub fn penalty_sum(dose: &[f64], labels: &[Label], cfg: &PenaltyConfig) -> f64 {
    dose.iter()
        .zip(labels)
        .map(|(&x, &l)| cfg.penalty(l, x))
        .sum()
}

/// Problem description of one lane in a batched evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Lane<'a> {
    /// Labels of one slice.
    pub labels: &'a [Label],
    pub cfg: PenaltyConfig,
}

/// Per-lane objective of interleaved doses, plus (optionally) interleaved
/// derivatives `dP(f)` written into `deriv`.
pub(crate) fn lanes_eval(
    dose: &[f64],
    lanes: &[Lane<'_>],
    values: &mut [f64],
    mut deriv: Option<&mut [f64]>,
) {
    let nl = lanes.len();
    values.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..dose.len() / nl {
        for (l, lane) in lanes.iter().enumerate() {
            let k = i * nl + l;
            let label = lane.labels[i];
            let x = dose[k];
            values[l] += lane.cfg.penalty(label, x);
            if let Some(d) = deriv.as_deref_mut() {
                d[k] = lane.cfg.derivative(label, x);
            }
        }
    }
}

/// Objective and gradient of the penalty problem on one geometry, evaluated
/// on slice-major `f64` sinograms.
pub struct Objective<'a> {
    projector: &'a Projector,
    geom: &'a TargetGeometry,
    cfg: PenaltyConfig,
}

impl<'a> Objective<'a> {
    pub fn new(projector: &'a Projector, geom: &'a TargetGeometry, cfg: PenaltyConfig) -> Result<Self> {
        if projector.geometry().nx != geom.nx() {
            return Err(Error::Shape(format!(
                "geometry nx={} but projector nx={}",
                geom.nx(),
                projector.geometry().nx
            )));
        }
        cfg.validate()?;
        Ok(Objective {
            projector,
            geom,
            cfg,
        })
    }

    fn lanes(&self) -> Vec<Lane<'a>> {
        (0..self.geom.nz())
            .map(|iz| Lane {
                labels: self.geom.slice_labels(iz),
                cfg: self.cfg,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.projector.geometry().n_rays() * self.geom.nz()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.len() {
            return Err(Error::Shape(format!(
                "sinogram has {} values, expected {}",
                g.len(),
                self.len()
            )));
        }
        Ok(())
    }

    fn dose_lanes(&self, g: &[f64]) -> Vec<f64> {
        let nz = self.geom.nz();
        let gl = interleave_f64(g, nz);
        let mut dose = vec![0.0; self.geom.voxels_per_slice() * nz];
        self.projector.backward_lanes(&gl, nz, &mut dose);
        dose
    }

    pub fn value(&self, g: &[f64]) -> Result<f64> {
        self.check(g)?;
        let lanes = self.lanes();
        let dose = self.dose_lanes(g);
        let mut vals = vec![0.0; lanes.len()];
        lanes_eval(&dose, &lanes, &mut vals, None);
        Ok(vals.iter().sum())
    }

    /// `∇F(g) = A · dP(Aᵀg)`.
    pub fn gradient(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check(g)?;
        let lanes = self.lanes();
        let nz = lanes.len();
        let dose = self.dose_lanes(g);
        let mut vals = vec![0.0; nz];
        let mut d = vec![0.0; dose.len()];
        lanes_eval(&dose, &lanes, &mut vals, Some(&mut d));
        let mut grad = vec![0.0; self.len()];
        self.projector.forward_lanes(&d, nz, &mut grad);
        Ok(deinterleave_f64(&grad, nz))
    }
}

fn interleave_f64(values: &[f64], lanes: usize) -> Vec<f64> {
    if lanes == 1 {
        return values.to_vec();
    }
    let n = values.len() / lanes;
    let mut out = vec![0.0; values.len()];
    for l in 0..lanes {
        for i in 0..n {
            out[i * lanes + l] = values[l * n + i];
        }
    }
    out
}

fn deinterleave_f64(values: &[f64], lanes: usize) -> Vec<f64> {
    if lanes == 1 {
        return values.to_vec();
    }
    let n = values.len() / lanes;
    let mut out = vec![0.0; values.len()];
    for l in 0..lanes {
        for i in 0..n {
            out[l * n + i] = values[i * lanes + l];
        }
    }
    out
}

/// `F(g)` for a stored plan.
pub fn objective(
    g: &Sinogram,
    geom: &TargetGeometry,
    projector: &Projector,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    check_sinogram(g, geom, projector)?;
    let g64: Vec<f64> = g.values.iter().map(|&v| v as f64).collect();
    Objective::new(projector, geom, *cfg)?.value(&g64)
}

/// `∇F(g)` for a stored plan, rounded to `f32`.
pub fn gradient(
    g: &Sinogram,
    geom: &TargetGeometry,
    projector: &Projector,
    cfg: &PenaltyConfig,
) -> Result<Sinogram> {
    check_sinogram(g, geom, projector)?;
    let g64: Vec<f64> = g.values.iter().map(|&v| v as f64).collect();
    let grad = Objective::new(projector, geom, *cfg)?.gradient(&g64)?;
    Ok(Sinogram {
        n_angles: g.n_angles,
        n_bins: g.n_bins,
        nz: g.nz,
        values: grad.iter().map(|&v| v as f32).collect(),
    })
}

fn check_sinogram(g: &Sinogram, geom: &TargetGeometry, projector: &Projector) -> Result<()> {
    let pg = projector.geometry();
    if g.n_angles != pg.n_angles || g.n_bins != pg.n_bins || g.nz != geom.nz() {
        return Err(Error::Shape(format!(
            "sinogram {}x{}x{} does not match projector {}x{} with {} slices",
            g.nz,
            g.n_angles,
            g.n_bins,
            pg.n_angles,
            pg.n_bins,
            geom.nz()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn osp_out_dead_zone_boundary() {
        let c = PenaltyConfig::osp(0.7, 0.9).unwrap();
        assert_eq!(c.p_out(0.7), 0.0);
        assert_eq!(c.dp_out(0.7), 0.0);
        assert!((c.p_out(0.9) - 0.04).abs() < EPS);
        assert!((c.dp_out(0.9) - 0.4).abs() < EPS);
    }

    #[test]
    fn l2n_out_is_two_sided() {
        let c = PenaltyConfig::l2n(0.7, 0.9).unwrap();
        assert!((c.p_out(0.5) - 0.04).abs() < EPS);
    }

    #[test]
    fn ospw_in_regions() {
        let c = PenaltyConfig::ospw(0.7, 0.9, 0.1).unwrap();
        assert_eq!(c.p_in(0.95), 0.0);
        assert!((c.p_in(1.05) - 0.0025).abs() < EPS);
        let c0 = PenaltyConfig::ospw(0.7, 0.9, 0.0).unwrap();
        let l2 = PenaltyConfig::l2n(0.7, 0.9).unwrap();
        assert!((c0.p_in(1.05) - 0.0225).abs() < EPS);
        assert_eq!(c0.p_in(1.05), l2.p_in(1.05));
    }

    #[test]
    fn external_voxels_are_free() {
        let c = PenaltyConfig::l2n(0.2, 0.9).unwrap();
        assert_eq!(c.penalty(Label::Ext, 5.0), 0.0);
        assert_eq!(c.derivative(Label::Ext, 5.0), 0.0);
    }

    #[test]
    fn threshold_order_is_enforced() {
        assert!(PenaltyConfig::osp(0.9, 0.7).is_err());
        assert!(PenaltyConfig::osp(0.7, 0.7).is_err());
        assert!(PenaltyConfig::ospw(0.7, 0.9, -0.1).is_err());
        assert!(PenaltyConfig::osp(0.0, 1.0).is_ok());
    }

    #[test]
    fn family_round_trips_through_str() {
        for f in [PenaltyFamily::L2n, PenaltyFamily::Osp, PenaltyFamily::Ospw] {
            assert_eq!(f.to_string().parse::<PenaltyFamily>().unwrap(), f);
        }
    }
}
