use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{log_axis, SimConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io::fmt_g;
use crate::mesh::{apply_regions, build_volume_mesh, ContactSpec, GradientSpec, Mesh};
use crate::metrics::{
    fit_output_model, fmax_metric, position_accuracy_metric, sensitivity_metric, spatial_resolution_metric,
    PerformanceRecord, METRIC_NAMES,
};
use crate::protocol::{acquire_frame, PotentialFrame};
use crate::recon::Reconstructor;

/// Share of failed conditions above which a map run aborts.
pub const FAILURE_LIMIT: f64 = 0.2;

/// Sweep axes as written in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Points on each of the sigma_low and sigma_up axes.
    pub sigma_points: usize,
    pub drive_min: f64,
    pub drive_max: f64,
    pub drive_points: usize,
    /// Contact centres averaged for position accuracy, mm.
    pub positions: Vec<[f64; 2]>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let mut positions = Vec::with_capacity(9);
        for y in [-20.0, 0.0, 20.0] {
            for x in [-20.0, 0.0, 20.0] {
                positions.push([x, y]);
            }
        }
        Self {
            sigma_min: 1e-3,
            sigma_max: 100.0,
            sigma_points: 11,
            drive_min: 1e-3,
            drive_max: 10.0,
            drive_points: 9,
            positions,
        }
    }
}

impl SweepSpec {
    /// Grid with `max(2, floor(sigma_points * scale))` points per sigma axis.
    /// The contact-conductivity axis is not scaled.
    pub fn grid(&self, scale: f64) -> Result<SweepGrid> {
        super::check_scale(scale)?;
        let n = ((self.sigma_points as f64 * scale).floor() as usize).max(2);
        let sigma = log_axis(self.sigma_min, self.sigma_max, n)?;
        SweepGrid::new(
            sigma.clone(),
            sigma,
            log_axis(self.drive_min, self.drive_max, self.drive_points)?,
            self.positions.iter().map(|p| (p[0], p[1])).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub sigma_low: Vec<f64>,
    pub sigma_up: Vec<f64>,
    /// Contact conductivities for the output-model fit, S/m.
    pub drive: Vec<f64>,
    pub positions: Vec<(f64, f64)>,
}

impl SweepGrid {
    pub fn new(sigma_low: Vec<f64>, sigma_up: Vec<f64>, drive: Vec<f64>, positions: Vec<(f64, f64)>) -> Result<Self> {
        for (name, axis) in [("sigma_low", &sigma_low), ("sigma_up", &sigma_up), ("drive", &drive)] {
            if axis.is_empty() || axis.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::config(format!("{name} axis must be non-empty and positive")));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::config(format!("{name} axis must be strictly increasing")));
            }
        }
        if drive.len() < 4 {
            return Err(Error::config("the output-model fit needs at least 4 contact conductivities"));
        }
        if positions.is_empty() {
            return Err(Error::config("position accuracy needs at least one contact position"));
        }
        Ok(Self { sigma_low, sigma_up, drive, positions })
    }

    /// Load level for sensitivity, resolution and accuracy: the log-midpoint
    /// of the contact-conductivity axis.
    pub fn f_h(&self) -> f64 {
        let n = self.drive.len();
        if n % 2 == 1 {
            self.drive[n / 2]
        } else {
            (self.drive[0] * self.drive[n - 1]).sqrt()
        }
    }

    pub fn len(&self) -> usize {
        self.sigma_low.len() * self.sigma_up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Relative spread below which a metric counts as constant over the grid, so
/// that rounding noise is not stretched to `[0, 1]`.
pub const FLAT_REL: f64 = 1e-9;

/// Per-metric range used for min-max normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

impl Normalization {
    /// Range of the finite values of each metric.
    pub fn from_records(records: &[PerformanceRecord]) -> Result<Self> {
        let mut min = [f64::INFINITY; 4];
        let mut max = [f64::NEG_INFINITY; 4];
        for r in records {
            for (k, v) in r.raw().into_iter().enumerate() {
                if v.is_finite() {
                    min[k] = min[k].min(v);
                    max[k] = max[k].max(v);
                }
            }
        }
        if let Some(k) = (0..4).find(|&k| !min[k].is_finite()) {
            return Err(Error::numerical(format!("metric {} has no finite value on the grid", METRIC_NAMES[k])));
        }
        Ok(Self { min, max })
    }

    /// Whether metric `k` is constant over the grid up to rounding
    /// (relative spread at most [`FLAT_REL`]).
    pub fn is_flat(&self, k: usize) -> bool {
        self.max[k] - self.min[k] <= FLAT_REL * self.max[k].abs().max(self.min[k].abs())
    }

    /// Unclamped `(v - min) / (max - min)`; a flat metric maps to 1.
    pub fn apply(&self, raw: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for k in 0..4 {
            let span = self.max[k] - self.min[k];
            out[k] = if !self.is_flat(k) { (raw[k] - self.min[k]) / span } else if raw[k].is_finite() { 1.0 } else { f64::NAN };
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: SweepGrid,
    /// Row-major over `(sigma_low index, sigma_up index)`.
    pub records: Vec<PerformanceRecord>,
    pub normalization: Normalization,
    pub f_h: f64,
    /// One line per condition whose fit did not converge or whose metrics are
    /// not finite.
    pub failures: Vec<String>,
}

impl SweepResult {
    pub fn record(&self, i_low: usize, i_up: usize) -> &PerformanceRecord {
        &self.records[i_low * self.grid.sigma_up.len() + i_up]
    }

    /// Records with `sigma_low == sigma_up`, in axis order.
    pub fn diagonal(&self) -> Vec<&PerformanceRecord> {
        self.records.iter().filter(|r| r.sigma_low == r.sigma_up).collect()
    }

    /// Normalized metric `k` as a grid with rows along sigma_low and columns
    /// along sigma_up.
    pub fn metric_grid(&self, k: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.normalized[k]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{},balanced", PerformanceRecord::csv_header())?;
        for r in &self.records {
            writeln!(w, "{},{}", r.csv_row(), fmt_g(r.balanced_score()))?;
        }
        Ok(())
    }

    /// One heatmap per normalized metric, `<prefix>_<metric>.pgm`, highest
    /// sigma_low on the top row.
    pub fn write_heatmaps(&self, dir: &Path, prefix: &str) -> Result<Vec<String>> {
        let (rows, cols) = (self.grid.sigma_low.len(), self.grid.sigma_up.len());
        let mut names = Vec::new();
        for (k, name) in METRIC_NAMES.iter().enumerate() {
            let file = format!("{prefix}_{name}.pgm");
            let f = std::io::BufWriter::new(std::fs::File::create(dir.join(&file))?);
            crate::io::write_pgm(f, &self.metric_grid(k), rows, cols)?;
            names.push(file);
        }
        Ok(names)
    }
}

fn contact_frame(base: &Mesh, contact: ContactSpec, v_cc: f64, exec: Execution) -> Result<PotentialFrame> {
    let (mesh, _) = apply_regions(base, &contact, None)?;
    acquire_frame(&mesh, v_cc, exec)
}

fn finite_or_nan(r: Result<f64>, what: &str, label: &str) -> f64 {
    r.unwrap_or_else(|e| {
        log::warn!("{label}: {what} unavailable: {e}");
        f64::NAN
    })
}

/// Evaluates one `(sigma_low, sigma_up)` condition. Fit failures and
/// undefined image metrics are recorded (unconverged fit, NaN metric), not
/// returned as errors. `normalized` is left at zero.
pub fn run_condition(
    sigma_low: f64,
    sigma_up: f64,
    grid: &SweepGrid,
    cfg: &SimConfig,
    recon: &Reconstructor,
    exec: Execution,
) -> Result<PerformanceRecord> {
    let label = format!("sigma_low={} sigma_up={}", fmt_g(sigma_low), fmt_g(sigma_up));
    let [nx, ny, nz] = cfg.volume_divisions;
    let grad = GradientSpec::across(sigma_low, sigma_up, cfg.height)?;
    let base = build_volume_mesh(cfg.width, cfg.depth, cfg.height, (nx, ny, nz), cfg.layout, &grad)?;
    let d = cfg.contact_diameter;

    let frames = exec.try_map(grid.drive.len(), |i| contact_frame(&base, ContactSpec::centered(d, grid.drive[i]), cfg.v_cc, exec))?;
    let samples: Vec<(f64, f64)> = grid.drive.iter().zip(&frames).map(|(&f, fr)| (f, fr.max())).collect();
    let fit = fit_output_model(&samples, cfg.seed)?;
    if !fit.converged {
        log::warn!("{label}: output-model fit did not converge (residual {})", fmt_g(fit.residual));
    }

    let f_h = grid.f_h();
    let center = match grid.drive.iter().position(|&f| f == f_h) {
        Some(i) => frames[i].clone(),
        None => contact_frame(&base, ContactSpec::centered(d, f_h), cfg.v_cc, exec)?,
    };
    let sr = finite_or_nan(recon.reconstruct(&center).and_then(|img| spatial_resolution_metric(&img)), "SR", &label);

    let pa_each = exec.try_map(grid.positions.len(), |i| -> Result<f64> {
        let (x, y) = grid.positions[i];
        if (x, y) == (0.0, 0.0) {
            let img = recon.reconstruct(&center)?;
            return Ok(finite_or_nan(position_accuracy_metric(&img, (x, y)), "PA", &label));
        }
        let frame = contact_frame(&base, ContactSpec::at(x, y, d, f_h), cfg.v_cc, exec)?;
        let img = recon.reconstruct(&frame)?;
        Ok(finite_or_nan(position_accuracy_metric(&img, (x, y)), "PA", &label))
    })?;
    let pa = pa_each.iter().sum::<f64>() / pa_each.len() as f64;

    let fmax = finite_or_nan(fmax_metric(&fit), "FMAX", &label);
    Ok(PerformanceRecord {
        sigma_low_index: 0,
        sigma_up_index: 0,
        sigma_low,
        sigma_up,
        fit,
        sens: sensitivity_metric(&fit, f_h),
        fmax,
        sr,
        pa,
        normalized: [0.0; 4],
    })
}

/// Runs every condition of the grid (in parallel under `exec`, gathered in
/// grid order) and min-max normalizes each metric over the grid.
///
/// Aborts with a summary when more than [`FAILURE_LIMIT`] of the conditions
/// fail.
pub fn run_performance_map(grid: &SweepGrid, cfg: &SimConfig, recon: &Reconstructor, exec: Execution) -> Result<SweepResult> {
    cfg.validate()?;
    let n_up = grid.sigma_up.len();
    let mut records = exec.try_map(grid.len(), |c| {
        let (il, iu) = (c / n_up, c % n_up);
        log::debug!("condition {}/{}", c + 1, grid.len());
        run_condition(grid.sigma_low[il], grid.sigma_up[iu], grid, cfg, recon, exec).map(|mut r| {
            r.sigma_low_index = il;
            r.sigma_up_index = iu;
            r
        })
    })?;

    let failures: Vec<String> = records
        .iter()
        .filter(|r| !r.fit.converged || r.raw().iter().any(|v| !v.is_finite()))
        .map(|r| {
            format!(
                "sigma_low={} sigma_up={}: converged={} sens={} fmax={} sr={} pa={}",
                fmt_g(r.sigma_low),
                fmt_g(r.sigma_up),
                r.fit.converged,
                fmt_g(r.sens),
                fmt_g(r.fmax),
                fmt_g(r.sr),
                fmt_g(r.pa)
            )
        })
        .collect();
    if failures.len() as f64 > FAILURE_LIMIT * records.len() as f64 {
        return Err(Error::numerical(format!(
            "{} of {} conditions failed:\n  {}",
            failures.len(),
            records.len(),
            failures.join("\n  ")
        )));
    }

    let normalization = Normalization::from_records(&records)?;
    for r in &mut records {
        r.normalized = normalization.apply(r.raw());
    }
    Ok(SweepResult { grid: grid.clone(), records, normalization, f_h: grid.f_h(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::FitParams;

    fn record(raw: [f64; 4]) -> PerformanceRecord {
        PerformanceRecord {
            sigma_low_index: 0,
            sigma_up_index: 0,
            sigma_low: 1.0,
            sigma_up: 1.0,
            fit: FitParams::exact(1.0, 1.0, -1.0),
            sens: raw[0],
            fmax: raw[1],
            sr: raw[2],
            pa: raw[3],
            normalized: [0.0; 4],
        }
    }

    #[test]
    fn default_grid_axes() {
        let g = SweepSpec::default().grid(1.0).unwrap();
        assert_eq!(g.sigma_low.len(), 11);
        assert_eq!(g.drive.len(), 9);
        assert_eq!(g.positions.len(), 9);
        assert!((g.f_h() - 0.1).abs() < 1e-15);
        let half = SweepSpec::default().grid(0.5).unwrap();
        assert_eq!(half.sigma_up.len(), 5);
        assert_eq!((half.sigma_up[0], half.sigma_up[4]), (1e-3, 100.0));
        assert!(SweepGrid::new(vec![1.0, 1.0], vec![1.0], g.drive.clone(), g.positions.clone()).is_err());
    }

    #[test]
    fn normalization_endpoints() {
        let recs = vec![record([1.0, 5.0, 0.2, 0.9]), record([3.0, 1.0, 0.4, 0.9]), record([2.0, f64::NAN, 0.3, 0.9])];
        let n = Normalization::from_records(&recs).unwrap();
        assert_eq!(n.apply(recs[0].raw()), [0.0, 1.0, 0.0, 1.0]);
        assert_eq!(n.apply(recs[1].raw()), [1.0, 0.0, 1.0, 1.0]);
        let mid = n.apply(recs[2].raw());
        assert!((mid[0] - 0.5).abs() < 1e-15 && mid[1].is_nan());
        let noisy = vec![record([1.0, 2.0, 0.5, 0.9]), record([2.0, 1.0, 0.5 + 1e-16, 0.9])];
        let n = Normalization::from_records(&noisy).unwrap();
        assert!(n.is_flat(2) && n.is_flat(3) && !n.is_flat(0));
        assert_eq!(n.apply(noisy[1].raw())[2], 1.0);
    }
}
