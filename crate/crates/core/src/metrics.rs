//! Dose-profile metrics: process window (PW), in-part dose range (IPDR) and
//! voxel error rate (VER), with percentile trimming.
//!
//! `alpha` is a percentage removed from each end of a distribution: the
//! minimum becomes the `alpha`-th percentile and the maximum the
//! `(100 − alpha)`-th. Percentiles interpolate linearly between order
//! statistics, so `alpha = 0` reproduces min and max exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Label, TargetGeometry};
use crate::projector::DoseImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Volume,
    Slice(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pw: f64,
    pub ipdr: f64,
    pub ver: f64,
    pub alpha: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub scope: Scope,
}

/// Linear-interpolation percentile of ascending `sorted` values, `q` in
/// percent.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let pos = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 >= n {
        sorted[lo.min(n - 1)]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..50.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 50), got {alpha}")));
    }
    Ok(())
}

/// In-part and out-of-part doses, each sorted ascending.
#[derive(Debug, Clone)]
pub struct DoseSplit {
    pub f_in: Vec<f64>,
    pub f_out: Vec<f64>,
}

impl DoseSplit {
    pub fn new(dose: &[f32], labels: &[Label]) -> Result<Self> {
        if dose.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} dose values for {} labels",
                dose.len(),
                labels.len()
            )));
        }
        let mut f_in = Vec::new();
        let mut f_out = Vec::new();
        for (&d, &l) in dose.iter().zip(labels) {
            match l {
                Label::In => f_in.push(d as f64),
                Label::Out => f_out.push(d as f64),
                Label::Ext => {}
            }
        }
        if f_in.is_empty() || f_out.is_empty() {
            return Err(Error::DegenerateGeometry(
                "metrics need at least one in-part and one out-of-part voxel".into(),
            ));
        }
        f_in.sort_by(f64::total_cmp);
        f_out.sort_by(f64::total_cmp);
        Ok(DoseSplit { f_in, f_out })
    }

    pub fn process_window(&self, alpha: f64) -> f64 {
        percentile(&self.f_in, alpha) - percentile(&self.f_out, 100.0 - alpha)
    }

    pub fn in_part_dose_range(&self, alpha: f64) -> f64 {
        percentile(&self.f_in, 100.0 - alpha) - percentile(&self.f_in, alpha)
    }

    /// Out-of-part voxels above the trimmed in-part minimum, over
    /// `n_in + n_out`.
    pub fn voxel_error_rate(&self, alpha: f64) -> f64 {
        let floor = percentile(&self.f_in, alpha);
        let first_above = self.f_out.partition_point(|&v| v <= floor);
        let w = self.f_out.len() - first_above;
        w as f64 / (self.f_in.len() + self.f_out.len()) as f64
    }

    pub fn max(&self) -> f64 {
        self.f_in.last().unwrap().max(*self.f_out.last().unwrap())
    }

    pub fn report(&self, alpha: f64, scope: Scope) -> MetricReport {
        MetricReport {
            pw: self.process_window(alpha),
            ipdr: self.in_part_dose_range(alpha),
            ver: self.voxel_error_rate(alpha),
            alpha,
            n_in: self.f_in.len(),
            n_out: self.f_out.len(),
            scope,
        }
    }
}

fn check_dose(dose: &DoseImage, geom: &TargetGeometry) -> Result<()> {
    if dose.nx != geom.nx() || dose.nz != geom.nz() {
        return Err(Error::Shape(format!(
            "dose is {}x{}x{}, geometry is {}x{}x{}",
            dose.nx,
            dose.nx,
            dose.nz,
            geom.nx(),
            geom.nx(),
            geom.nz()
        )));
    }
    Ok(())
}

fn split(dose: &DoseImage, geom: &TargetGeometry) -> Result<DoseSplit> {
    check_dose(dose, geom)?;
    DoseSplit::new(&dose.values, geom.labels())
}

pub fn process_window(dose: &DoseImage, geom: &TargetGeometry, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(split(dose, geom)?.process_window(alpha))
}

pub fn in_part_dose_range(dose: &DoseImage, geom: &TargetGeometry, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(split(dose, geom)?.in_part_dose_range(alpha))
}

pub fn voxel_error_rate(dose: &DoseImage, geom: &TargetGeometry, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(split(dose, geom)?.voxel_error_rate(alpha))
}

/// Whole-volume report pooling every slice.
pub fn evaluate(dose: &DoseImage, geom: &TargetGeometry, alpha: f64) -> Result<MetricReport> {
    check_alpha(alpha)?;
    Ok(split(dose, geom)?.report(alpha, Scope::Volume))
}

/// One report per slice.
pub fn evaluate_slices(
    dose: &DoseImage,
    geom: &TargetGeometry,
    alpha: f64,
) -> Result<Vec<MetricReport>> {
    check_alpha(alpha)?;
    check_dose(dose, geom)?;
    (0..geom.nz())
        .map(|iz| {
            Ok(DoseSplit::new(dose.slice(iz), geom.slice_labels(iz))?.report(alpha, Scope::Slice(iz)))
        })
        .collect()
}

/// Maximum dose over IN ∪ OUT.
pub fn max_dose(dose: &DoseImage, geom: &TargetGeometry) -> Result<f64> {
    check_dose(dose, geom)?;
    dose.values
        .iter()
        .zip(geom.labels())
        .filter(|(_, &l)| l != Label::Ext)
        .map(|(&d, _)| d as f64)
        .reduce(f64::max)
        .ok_or_else(|| Error::DegenerateGeometry("no printable voxels".into()))
}

/// Fixed-width histograms over `[0, upper]` for IN and OUT voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub upper: f64,
    pub in_counts: Vec<usize>,
    pub out_counts: Vec<usize>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.in_counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.upper / self.bins() as f64
    }

    /// Lower edge of bin `b`.
    pub fn edge(&self, b: usize) -> f64 {
        b as f64 * self.bin_width()
    }
}

/// Histograms over `[0, max(dose over IN ∪ OUT)]`. Values below 0 land in
/// the first bin; when the maximum is not positive the range is `[0, 1]`.
pub fn histogram(dose: &DoseImage, geom: &TargetGeometry, bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::Parameter(format!("histogram needs >= 2 bins, got {bins}")));
    }
    check_dose(dose, geom)?;
    geom.validate()?;
    let max = max_dose(dose, geom)?;
    let upper = if max > 0.0 { max } else { 1.0 };
    let mut in_counts = vec![0usize; bins];
    let mut out_counts = vec![0usize; bins];
    for (&d, &l) in dose.values.iter().zip(geom.labels()) {
        let b = ((d as f64 / upper) * bins as f64).floor();
        let b = if b < 0.0 { 0 } else { (b as usize).min(bins - 1) };
        match l {
            Label::In => in_counts[b] += 1,
            Label::Out => out_counts[b] += 1,
            Label::Ext => {}
        }
    }
    Ok(Histogram {
        upper,
        in_counts,
        out_counts,
    })
}
