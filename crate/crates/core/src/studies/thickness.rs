use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io::fmt_g;
use crate::mesh::{apply_regions, build_shell_mesh, build_volume_mesh, ContactSpec, GradientSpec};
use crate::protocol::{acquire_frame, PotentialFrame};

/// Detector and contact conductivity of the thickness study, S/m.
const SIGMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessRow {
    /// mm.
    pub thickness: f64,
    /// Pearson correlation of the normalized frame with the shell frame.
    pub correlation: f64,
    /// Largest raw reading, V.
    pub max_potential: f64,
    /// Mean absolute difference of the max-normalized frames.
    pub mae: f64,
}

impl ThicknessRow {
    pub fn csv_header() -> &'static str {
        "thickness_mm,correlation,max_potential_v,mae"
    }

    pub fn csv_row(&self) -> String {
        [self.thickness, self.correlation, self.max_potential, self.mae].map(fmt_g).join(",")
    }
}

pub fn write_thickness_csv<W: Write>(rows: &[ThicknessRow], mut w: W) -> Result<()> {
    writeln!(w, "{}", ThicknessRow::csv_header())?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

pub fn mean_abs_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn normalized(frame: &PotentialFrame, what: &str) -> Result<Vec<f64>> {
    let m = frame.max();
    if !(m > 1e-12 * frame.v_cc) {
        return Err(Error::numerical(format!("{what} frame is degenerate (max reading {m:e} V)")));
    }
    Ok(frame.values.iter().map(|v| v / m).collect())
}

/// Compares volume-model frames at each thickness with the thin-shell frame
/// of the same electrode layout and centred contact.
///
/// Every volume mesh uses the configured horizontal divisions and
/// `max(4, ceil(t / 2 mm))` layers; the shell uses the same horizontal
/// divisions.
pub fn run_thickness_study(thicknesses: &[f64], cfg: &SimConfig, exec: Execution) -> Result<Vec<ThicknessRow>> {
    cfg.validate()?;
    if let Some(t) = thicknesses.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::config(format!("thicknesses must be positive, got {t}")));
    }
    let [nx, ny, _] = cfg.volume_divisions;
    let contact = ContactSpec::centered(cfg.contact_diameter, SIGMA);

    let shell = build_shell_mesh(cfg.width, cfg.depth, nx.max(ny), cfg.layout, SIGMA)?;
    let shell = apply_regions(&shell, &contact, None)?.0;
    let reference = normalized(&acquire_frame(&shell, cfg.v_cc, exec)?, "shell reference")?;

    exec.try_map(thicknesses.len(), |i| {
        let t = thicknesses[i];
        let nz = ((t / 2.0).ceil() as usize).max(4);
        let grad = GradientSpec::uniform(SIGMA, t)?;
        let mesh = build_volume_mesh(cfg.width, cfg.depth, t, (nx, ny, nz), cfg.layout, &grad)?;
        let mesh = apply_regions(&mesh, &contact, None)?.0;
        let frame = acquire_frame(&mesh, cfg.v_cc, exec)?;
        let v = normalized(&frame, &format!("{t} mm"))?;
        Ok(ThicknessRow {
            thickness: t,
            correlation: pearson(&v, &reference),
            max_potential: frame.max(),
            mae: mean_abs_error(&v, &reference),
        })
    })
}
