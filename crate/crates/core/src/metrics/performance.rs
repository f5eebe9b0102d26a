use serde::{Deserialize, Serialize};

use super::fit::FitParams;
use crate::error::{Error, Result};
use crate::recon::{centroid, half_max_extent, ReconstructedImage};

pub const METRIC_NAMES: [&str; 4] = ["sens", "fmax", "sr", "pa"];

/// Slope of the fitted output model at `f_h`.
pub fn sensitivity_metric(p: &FitParams, f_h: f64) -> f64 {
    let d = f_h.powf(p.p3) + p.p2;
    -p.p3 * p.p1 * f_h.powf(p.p3 - 1.0) / (d * d)
}

/// Force at which the fitted output reaches 90% of its saturation value
/// `p1 / p2`: solving `p1 / (F^p3 + p2) = 0.9 p1 / p2` gives
/// `F = (p2 / 9)^(1 / p3)`.
pub fn fmax_metric(p: &FitParams) -> Result<f64> {
    if !(p.p3 < 0.0) {
        return Err(Error::numerical(format!("output model does not saturate (p3 = {})", p.p3)));
    }
    let f = (p.p2 / 9.0).powf(1.0 / p.p3);
    let target = 0.9 * p.p1 / p.p2;
    let got = p.eval(f);
    if !f.is_finite() || (got - target).abs() > 1e-9 * target.abs() {
        return Err(Error::numerical(format!(
            "90% saturation point not representable: F = {f:e} gives {got:e}, expected {target:e}"
        )));
    }
    Ok(f)
}

pub fn spatial_resolution(fwhm: f64, width: f64) -> f64 {
    1.0 - fwhm / width
}

pub fn position_accuracy(error: f64, width: f64) -> f64 {
    1.0 - error / width
}

/// `1 - FWHM / width`, with FWHM measured about the image centroid.
pub fn spatial_resolution_metric(image: &ReconstructedImage) -> Result<f64> {
    let c = centroid(image)?;
    Ok(spatial_resolution(half_max_extent(image, c)?, image.width))
}

/// `1 - |centroid - true| / width`.
pub fn position_accuracy_metric(image: &ReconstructedImage, truth: (f64, f64)) -> Result<f64> {
    let (x, y) = centroid(image)?;
    Ok(position_accuracy((x - truth.0).hypot(y - truth.1), image.width))
}

/// Metrics of one conductivity condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub sigma_low_index: usize,
    pub sigma_up_index: usize,
    pub sigma_low: f64,
    pub sigma_up: f64,
    pub fit: FitParams,
    pub sens: f64,
    pub fmax: f64,
    pub sr: f64,
    pub pa: f64,
    /// Min-max normalized `[sens, fmax, sr, pa]`, filled in by map normalization.
    pub normalized: [f64; 4],
}

impl PerformanceRecord {
    pub fn raw(&self) -> [f64; 4] {
        [self.sens, self.fmax, self.sr, self.pa]
    }

    /// Product of the normalized metrics.
    pub fn balanced_score(&self) -> f64 {
        self.normalized.iter().product()
    }

    pub fn csv_header() -> &'static str {
        "sigma_low_index,sigma_up_index,sigma_low,sigma_up,p1,p2,p3,converged,sens,fmax,sr,pa,\
         sens_norm,fmax_norm,sr_norm,pa_norm"
    }

    pub fn csv_row(&self) -> String {
        use crate::io::fmt_g;
        let mut cols = vec![
            self.sigma_low_index.to_string(),
            self.sigma_up_index.to_string(),
            fmt_g(self.sigma_low),
            fmt_g(self.sigma_up),
            fmt_g(self.fit.p1),
            fmt_g(self.fit.p2),
            fmt_g(self.fit.p3),
            self.fit.converged.to_string(),
        ];
        cols.extend(self.raw().iter().chain(&self.normalized).map(|v| fmt_g(*v)));
        cols.join(",")
    }
}
