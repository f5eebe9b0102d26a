//! Design sweeps: the conductivity performance map, the thickness-fidelity
//! study, the dot-adhesion study and material positioning.

mod adhesion;
mod perfmap;
mod positioning;
mod thickness;

pub use adhesion::{run_adhesion_study, AdhesionResult, AdhesionStudy, CurrentRow, PositionRow};
pub use perfmap::{run_condition, run_performance_map, Normalization, SweepGrid, SweepResult, SweepSpec, FAILURE_LIMIT, FLAT_REL};
pub use positioning::{material_positioning, MaterialPoint, Positioning, TABLE_MATERIALS};
pub use thickness::{mean_abs_error, pearson, run_thickness_study, write_thickness_csv, ThicknessRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::jacobian::{build_jacobian, JacobianMatrix};
use crate::mesh::{build_shell_mesh, ElectrodeLayout, Mesh};
use crate::recon::{ReconConfig, Reconstructor};

/// Detector, protocol and solver settings shared by every study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Detector extent, mm.
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub layout: ElectrodeLayout,
    pub v_cc: f64,
    /// Volume mesh divisions `[nx, ny, nz]`.
    pub volume_divisions: [usize; 3],
    /// Shell divisions per side for the reconstruction Jacobian.
    pub shell_divisions: usize,
    /// Contact disc diameter, mm.
    pub contact_diameter: f64,
    pub recon: ReconConfig,
    /// Seeds the multi-start output-model fit.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            width: 60.0,
            depth: 60.0,
            height: 10.0,
            layout: ElectrodeLayout::default(),
            v_cc: 2.0,
            volume_divisions: [30, 30, 5],
            shell_divisions: 30,
            contact_diameter: 4.0,
            recon: ReconConfig::default(),
            seed: 0,
        }
    }
}

/// `max(1, round(n * factor))`.
pub fn scale_divisions(n: usize, factor: f64) -> usize {
    ((n as f64 * factor).round() as usize).max(1)
}

pub(crate) fn check_scale(factor: f64) -> Result<()> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::config(format!("grid scale must be positive, got {factor}")));
    }
    Ok(())
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("width", self.width), ("depth", self.depth), ("height", self.height)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.v_cc > 0.0 && self.v_cc.is_finite()) {
            return Err(Error::config(format!("v_cc must be positive, got {}", self.v_cc)));
        }
        if !(self.contact_diameter > 0.0) {
            return Err(Error::config("contact diameter must be positive"));
        }
        if self.volume_divisions.contains(&0) || self.shell_divisions == 0 {
            return Err(Error::config("mesh divisions must be at least 1"));
        }
        self.layout.validate(self.width, self.depth)?;
        self.recon.validate()
    }

    /// Same configuration with every mesh resolution scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        check_scale(factor)?;
        let [nx, ny, nz] = self.volume_divisions;
        Ok(Self {
            volume_divisions: [nx, ny, nz].map(|n| scale_divisions(n, factor)),
            shell_divisions: scale_divisions(self.shell_divisions, factor),
            ..self.clone()
        })
    }

    /// Unit-conductivity shell used for the reconstruction Jacobian.
    pub fn shell(&self) -> Result<Mesh> {
        build_shell_mesh(self.width, self.depth, self.shell_divisions, self.layout, 1.0)
    }

    pub fn jacobian(&self, exec: Execution) -> Result<JacobianMatrix> {
        build_jacobian(&self.shell()?, self.v_cc, exec)
    }

    pub fn reconstructor(&self, exec: Execution) -> Result<Reconstructor> {
        let shell = self.shell()?;
        let j = build_jacobian(&shell, self.v_cc, exec)?;
        Reconstructor::with_shell(&j, &shell, &self.recon)
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_axis(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::config(format!("log axis needs 0 < lo < hi, got [{lo}, {hi}]")));
    }
    if n < 2 {
        return Err(Error::config(format!("log axis needs at least 2 points, got {n}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    // pin the endpoints exactly
    v[0] = lo;
    v[n - 1] = hi;
    Ok(v)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_axis_endpoints_and_spacing() {
        let a = log_axis(1e-3, 100.0, 11).unwrap();
        assert_eq!((a[0], a[10]), (1e-3, 100.0));
        for w in a.windows(2) {
            assert!((w[1] / w[0] - 10f64.sqrt()).abs() < 1e-12);
        }
        assert!(log_axis(1.0, 1.0, 3).is_err());
        assert!(log_axis(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn grid_scale_rule() {
        let c = SimConfig::default().scaled(0.5).unwrap();
        assert_eq!(c.volume_divisions, [15, 15, 3]);
        assert_eq!(c.shell_divisions, 15);
        assert_eq!(scale_divisions(3, 0.01), 1);
        assert!(SimConfig::default().scaled(0.0).is_err());
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 300.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![1.5, 0.0, 1.5]);
    }
}
