use std::io::Write;

use serde::{Deserialize, Serialize};

use super::perfmap::{Normalization, SweepResult};
use crate::error::{Error, Result};
use crate::io::fmt_g;
use crate::metrics::PerformanceRecord;

/// Reference sample conductivities, S/m.
pub const TABLE_MATERIALS: [(&str, f64); 4] = [("A", 0.2273), ("B", 0.5208), ("C", 0.001667), ("D", 0.008)];

/// Normalized coordinates of one labelled record in the two positioning
/// plots: (SR, FMAX) and (PA, SENS).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialPoint {
    pub label: String,
    pub sr: f64,
    pub fmax: f64,
    pub pa: f64,
    pub sens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positioning {
    pub points: Vec<MaterialPoint>,
    /// Uniform-conductivity records in axis order.
    pub diagonal: Vec<MaterialPoint>,
    pub warnings: Vec<String>,
}

impl Positioning {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "kind,label,sr_norm,fmax_norm,pa_norm,sens_norm")?;
        for (kind, pts) in [("material", &self.points), ("uniform", &self.diagonal)] {
            for p in pts {
                writeln!(w, "{kind},{},{}", p.label, [p.sr, p.fmax, p.pa, p.sens].map(fmt_g).join(","))?;
            }
        }
        Ok(())
    }
}

fn point(label: &str, rec: &PerformanceRecord, norm: &Normalization, warnings: &mut Vec<String>) -> MaterialPoint {
    let mut v = norm.apply(rec.raw());
    for (k, x) in v.iter_mut().enumerate() {
        if !(0.0..=1.0).contains(x) {
            let msg = format!("{label}: {} = {} outside the grid range, clamped", crate::metrics::METRIC_NAMES[k], fmt_g(*x));
            log::warn!("{msg}");
            warnings.push(msg);
            *x = x.clamp(0.0, 1.0);
        }
    }
    MaterialPoint { label: label.to_string(), sens: v[0], fmax: v[1], sr: v[2], pa: v[3] }
}

/// Normalizes labelled records against a map's metadata, clamping values
/// outside the grid range, and adds the map's uniform diagonal.
pub fn material_positioning(records: &[(String, PerformanceRecord)], map: &SweepResult) -> Positioning {
    let mut warnings = Vec::new();
    let points = records.iter().map(|(l, r)| point(l, r, &map.normalization, &mut warnings)).collect();
    let diagonal = map
        .diagonal()
        .into_iter()
        .map(|r| point(&format!("uniform {}", fmt_g(r.sigma_low)), r, &map.normalization, &mut warnings))
        .collect();
    Positioning { points, diagonal, warnings }
}

fn nearest(axis: &[f64], sigma: f64) -> usize {
    let mut best = 0;
    for (i, &a) in axis.iter().enumerate() {
        if (a.ln() - sigma.ln()).abs() < (axis[best].ln() - sigma.ln()).abs() {
            best = i;
        }
    }
    best
}

impl SweepResult {
    /// Record of the grid cell nearest (in log conductivity) to the given
    /// stack.
    pub fn nearest_record(&self, sigma_low: f64, sigma_up: f64) -> &PerformanceRecord {
        self.record(nearest(&self.grid.sigma_low, sigma_low), nearest(&self.grid.sigma_up, sigma_up))
    }

    /// Places reference-sample labels: `"B"` is a uniform detector of sample
    /// B, `"BC"` puts sample B on top and sample C at the bottom.
    pub fn material_record(&self, label: &str) -> Result<PerformanceRecord> {
        let sigma = |c: char| {
            TABLE_MATERIALS
                .iter()
                .find(|(n, _)| n.starts_with(c))
                .map(|m| m.1)
                .ok_or_else(|| Error::config(format!("unknown sample '{c}' in label '{label}'")))
        };
        let chars: Vec<char> = label.chars().collect();
        let (up, low) = match chars.as_slice() {
            [a] => (sigma(*a)?, sigma(*a)?),
            [top, bottom] => (sigma(*top)?, sigma(*bottom)?),
            _ => return Err(Error::config(format!("sample label '{label}' must have one or two letters"))),
        };
        Ok(self.nearest_record(low, up).clone())
    }
}
