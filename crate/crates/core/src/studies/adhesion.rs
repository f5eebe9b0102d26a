use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::{assemble, interface_current, solve, DirichletSet};
use crate::io::fmt_g;
use crate::mesh::{
    apply_adhesion, apply_regions, build_volume_mesh_with_levels, AdhesionSpec, ContactSpec, GradientSpec, Mesh,
};
use crate::protocol::acquire_frame;
use crate::recon::{centroid, Reconstructor};

/// Two stacked layers bonded through a dot-patterned interface layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdhesionStudy {
    pub dot_grids: Vec<usize>,
    /// Diameters for the block-current sweep, mm.
    pub diameters: Vec<f64>,
    /// Diameters for the position-error sweep, mm (each costs one frame per
    /// contact position).
    pub position_diameters: Vec<f64>,
    /// Also evaluate each grid at its full-coverage diameter `pitch * sqrt(2)`.
    pub include_full_coverage: bool,
    /// Horizontal divisions per side.
    pub divisions: usize,
    /// Node heights as fractions of the detector height.
    pub level_fractions: Vec<f64>,
    /// Element layer carrying the dot mask.
    pub interface_layer: usize,
    pub sigma_layers: f64,
    pub sigma_in: f64,
    pub sigma_out: f64,
    /// Contact conductivity for the position-error frames, S/m.
    pub contact_sigma: f64,
    pub positions: Vec<[f64; 2]>,
    /// Top-to-bottom voltage of the block problem, V.
    pub block_voltage: f64,
}

impl Default for AdhesionStudy {
    fn default() -> Self {
        let diameters = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.22, 8.0, 10.0, 12.0];
        Self {
            dot_grids: vec![5, 7],
            position_diameters: diameters.clone(),
            diameters,
            include_full_coverage: true,
            divisions: 60,
            level_fractions: vec![0.0, 0.25, 0.475, 0.525, 0.75, 1.0],
            interface_layer: 2,
            sigma_layers: 1.0,
            sigma_in: 1.0,
            sigma_out: 1e-9,
            contact_sigma: 0.1,
            positions: super::SweepSpec::default().positions,
            block_voltage: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub dots_per_side: usize,
    pub diameter: f64,
    pub full_coverage: bool,
    /// Mean centroid error over the contact positions, mm.
    pub mean_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentRow {
    pub dots_per_side: usize,
    pub diameter: f64,
    pub full_coverage: bool,
    /// A.
    pub total_current: f64,
    /// A/m^2.
    pub peak_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdhesionResult {
    pub positions: Vec<PositionRow>,
    pub currents: Vec<CurrentRow>,
    /// Mean centroid error of the unmasked stack, mm (absent when no position
    /// diameters were requested).
    pub baseline_error: Option<f64>,
    /// Block current of the unmasked stack, A.
    pub baseline_current: f64,
    pub skipped: Vec<String>,
}

impl AdhesionResult {
    pub fn write_positions_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dots_per_side,diameter_mm,full_coverage,mean_error_mm")?;
        for r in &self.positions {
            writeln!(w, "{},{},{},{}", r.dots_per_side, fmt_g(r.diameter), r.full_coverage, fmt_g(r.mean_error))?;
        }
        Ok(())
    }

    pub fn write_currents_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dots_per_side,diameter_mm,full_coverage,total_current_a,peak_density_a_m2")?;
        for r in &self.currents {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.dots_per_side,
                fmt_g(r.diameter),
                r.full_coverage,
                fmt_g(r.total_current),
                fmt_g(r.peak_density)
            )?;
        }
        Ok(())
    }
}

impl AdhesionStudy {
    fn validate(&self) -> Result<()> {
        let f = &self.level_fractions;
        if f.len() < 2 || f[0] != 0.0 || f[f.len() - 1] != 1.0 || f.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("level fractions must increase strictly from 0 to 1"));
        }
        if self.interface_layer >= f.len() - 1 {
            return Err(Error::config(format!("interface layer {} out of range", self.interface_layer)));
        }
        if self.dot_grids.contains(&0) {
            return Err(Error::config("dot grids need at least one dot per side"));
        }
        if self.divisions == 0 {
            return Err(Error::config("adhesion mesh divisions must be at least 1"));
        }
        if !(self.sigma_layers > 0.0 && self.sigma_in > 0.0 && self.sigma_out > 0.0) {
            return Err(Error::config("adhesion study conductivities must be positive"));
        }
        if !(self.contact_sigma > 0.0 && self.block_voltage > 0.0) {
            return Err(Error::config("contact conductivity and block voltage must be positive"));
        }
        if self.positions.is_empty() && !self.position_diameters.is_empty() {
            return Err(Error::config("position-error sweep needs at least one contact position"));
        }
        Ok(())
    }

    fn stack(&self, cfg: &SimConfig, divisions: usize) -> Result<Mesh> {
        let levels: Vec<f64> = self.level_fractions.iter().map(|t| t * cfg.height).collect();
        let grad = GradientSpec::uniform(self.sigma_layers, cfg.height)?;
        build_volume_mesh_with_levels(cfg.width, cfg.depth, (divisions, divisions), &levels, cfg.layout, &grad)
    }

    fn spec(&self, n: usize, diameter: f64) -> AdhesionSpec {
        AdhesionSpec {
            dots_per_side: n,
            dot_diameter: diameter,
            sigma_in: self.sigma_in,
            sigma_out: self.sigma_out,
            layer: self.interface_layer,
        }
    }

    /// `(n, diameter, full_coverage)` cases from `list`, dropping diameters
    /// outside `(0, pitch * sqrt(2)]` with a note.
    fn cases(&self, list: &[f64], extent: f64, skipped: &mut Vec<String>) -> Vec<(usize, f64, bool)> {
        let mut out = Vec::new();
        for &n in &self.dot_grids {
            let full = self.spec(n, 1.0).full_coverage_diameter(extent);
            for &d in list {
                if d > 0.0 && d <= full {
                    out.push((n, d, false));
                } else {
                    let msg = format!("{n}x{n} dots: diameter {} mm outside (0, {}]", fmt_g(d), fmt_g(full));
                    log::warn!("{msg}");
                    skipped.push(msg);
                }
            }
            if self.include_full_coverage && !list.is_empty() {
                out.push((n, full, true));
            }
        }
        out
    }
}

fn mean_position_error(
    stack: &Mesh,
    adhesion: Option<&AdhesionSpec>,
    study: &AdhesionStudy,
    cfg: &SimConfig,
    recon: &Reconstructor,
    exec: Execution,
) -> Result<f64> {
    let errors = exec.try_map(study.positions.len(), |i| -> Result<f64> {
        let [x, y] = study.positions[i];
        let contact = ContactSpec::at(x, y, cfg.contact_diameter, study.contact_sigma);
        let (mesh, _) = apply_regions(stack, &contact, adhesion)?;
        let img = recon.reconstruct(&acquire_frame(&mesh, cfg.v_cc, exec)?)?;
        let (cx, cy) = centroid(&img)?;
        Ok((cx - x).hypot(cy - y))
    })?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

fn block_current(mesh: &Mesh, voltage: f64) -> Result<(f64, f64)> {
    let top = mesh.face_nodes(mesh.levels() - 1);
    let bottom = mesh.face_nodes(0);
    let bc = DirichletSet::from_groups(&[(&top, voltage), (&bottom, 0.0)])?;
    let sol = solve(&assemble(mesh)?, &bc)?;
    let c = interface_current(mesh, &sol, &mesh.interface_elements)?;
    Ok((c.total, c.peak_density))
}

/// Study A (mean reconstruction centroid error per dot grid and diameter) and
/// study B (current through the interface of the masked block with a voltage
/// across it), plus the unmasked baselines.
///
/// `grid_scale` scales the adhesion mesh divisions.
pub fn run_adhesion_study(
    study: &AdhesionStudy,
    cfg: &SimConfig,
    grid_scale: f64,
    recon: &Reconstructor,
    exec: Execution,
) -> Result<AdhesionResult> {
    cfg.validate()?;
    study.validate()?;
    let divisions = super::scale_divisions(study.divisions, grid_scale);
    let stack = study.stack(cfg, divisions)?;
    let extent = cfg.width.min(cfg.depth);
    if cfg.width != cfg.depth {
        log::warn!("non-square detector: dot pitch follows each axis separately");
    }
    let mut skipped = Vec::new();

    let mut plain = stack.clone();
    plain.interface_elements = stack.layer_elements(study.interface_layer);
    let (baseline_current, _) = block_current(&plain, study.block_voltage)?;

    let current_cases = study.cases(&study.diameters, extent, &mut skipped);
    let currents = exec.try_map(current_cases.len(), |i| -> Result<Option<CurrentRow>> {
        let (n, d, full) = current_cases[i];
        let (mesh, report) = apply_adhesion(&stack, &study.spec(n, d))?;
        if report.in_dot_elements == Some(0) {
            return Ok(None);
        }
        let (total_current, peak_density) = block_current(&mesh, study.block_voltage)?;
        Ok(Some(CurrentRow { dots_per_side: n, diameter: d, full_coverage: full, total_current, peak_density }))
    })?;

    let position_cases = study.cases(&study.position_diameters, extent, &mut skipped);
    let positions = exec.try_map(position_cases.len(), |i| -> Result<Option<PositionRow>> {
        let (n, d, full) = position_cases[i];
        let spec = study.spec(n, d);
        if apply_adhesion(&stack, &spec)?.1.in_dot_elements == Some(0) {
            return Ok(None);
        }
        let mean_error = mean_position_error(&stack, Some(&spec), study, cfg, recon, exec)?;
        Ok(Some(PositionRow { dots_per_side: n, diameter: d, full_coverage: full, mean_error }))
    })?;
    let baseline_error = if position_cases.is_empty() {
        None
    } else {
        Some(mean_position_error(&stack, None, study, cfg, recon, exec)?)
    };

    for (n, d, _) in current_cases.iter().chain(&position_cases) {
        if apply_adhesion(&stack, &study.spec(*n, *d))?.1.in_dot_elements == Some(0) {
            skipped.push(format!("{n}x{n} dots: diameter {} mm leaves the mask empty", fmt_g(*d)));
        }
    }
    Ok(AdhesionResult {
        positions: positions.into_iter().flatten().collect(),
        currents: currents.into_iter().flatten().collect(),
        baseline_error,
        baseline_current,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (AdhesionStudy, SimConfig) {
        let study = AdhesionStudy {
            diameters: vec![2.0, 4.0, 7.22, 9.0],
            position_diameters: vec![],
            divisions: 20,
            ..AdhesionStudy::default()
        };
        (study, SimConfig { shell_divisions: 10, ..SimConfig::default() })
    }

    #[test]
    fn current_monotone_with_ohmic_endpoint() {
        let (study, cfg) = small();
        let recon = cfg.reconstructor(Execution::Sequential).unwrap();
        let res = run_adhesion_study(&study, &cfg, 1.0, &recon, Execution::Sequential).unwrap();
        assert!((res.baseline_current - 0.36).abs() < 1e-9);
        for n in [5, 7] {
            let rows: Vec<&CurrentRow> = res.currents.iter().filter(|r| r.dots_per_side == n).collect();
            assert!(rows.windows(2).all(|w| w[1].total_current >= w[0].total_current));
            let last = rows.last().unwrap();
            assert!(last.full_coverage && (last.total_current - 0.36).abs() < 1e-9);
        }
        assert!(res.positions.is_empty() && res.baseline_error.is_none());
    }

    #[test]
    fn oversize_and_empty_masks_are_skipped() {
        let (mut study, cfg) = small();
        study.dot_grids = vec![5];
        study.diameters = vec![0.1, 30.0];
        let recon = cfg.reconstructor(Execution::Sequential).unwrap();
        let res = run_adhesion_study(&study, &cfg, 1.0, &recon, Execution::Sequential).unwrap();
        assert_eq!(res.currents.len(), 1);
        assert!(res.currents[0].full_coverage);
        assert_eq!(res.skipped.len(), 2);
    }
}
