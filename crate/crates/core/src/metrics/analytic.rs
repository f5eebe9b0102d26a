use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spherical contactor pressed into an elastic half-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HertzParams {
    /// Contactor radius of curvature, m.
    pub r: f64,
    /// Poisson ratio of the detector.
    pub nu: f64,
    /// Young's modulus of the detector, Pa.
    pub e_mod: f64,
}

impl HertzParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::config(format!("contactor radius must be non-negative, got {}", self.r)));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::config(format!("Poisson ratio must lie in [0, 0.5), got {}", self.nu)));
        }
        if !(self.e_mod > 0.0 && self.e_mod.is_finite()) {
            return Err(Error::config(format!("Young's modulus must be positive, got {}", self.e_mod)));
        }
        Ok(())
    }
}

/// Power-law contact area `S = alpha * F^gamma` of Hertzian contact against a
/// rigid sphere: `a^3 = 3 F r / (4 E*)`, `E* = E / (1 - nu^2)`, `S = pi a^2`.
pub fn hertz_power_law(h: &HertzParams) -> Result<(f64, f64)> {
    h.validate()?;
    let gamma = 2.0 / 3.0;
    let alpha = PI * (3.0 * h.r * (1.0 - h.nu * h.nu) / (4.0 * h.e_mod)).powf(gamma);
    Ok((alpha, gamma))
}

/// Surface-layer / detector divider model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactModelParams {
    /// Area coefficient, m^2 / N^gamma.
    pub alpha: f64,
    pub gamma: f64,
    /// Surface-layer conductivity, S/m.
    pub sigma: f64,
    /// Surface-layer thickness, m.
    pub l: f64,
    /// Detector volume resistance, ohm.
    pub r0: f64,
    pub v_cc: f64,
}

impl ContactModelParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.gamma, self.sigma, self.l, self.r0, self.v_cc];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::config(format!("contact model parameters must be positive: {self:?}")))
        }
    }
}

/// Detector output at force `f`: the contact resistance `l / (sigma S)` in
/// series with `r0`, read across `r0`.
pub fn analytic_output(f: f64, p: &ContactModelParams) -> Result<f64> {
    p.validate()?;
    if !(f >= 0.0) {
        return Err(Error::contract(format!("force must be non-negative, got {f}")));
    }
    if f.is_infinite() {
        return Ok(p.v_cc);
    }
    let x = p.r0 * p.sigma * p.alpha * f.powf(p.gamma);
    Ok(p.v_cc * x / (p.l + x))
}
