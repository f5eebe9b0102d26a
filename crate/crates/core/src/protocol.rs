//! Sequential grounding cycle.
//!
//! For each ground electrode `g` the drive disc is held at `v_cc`, pad `g` at
//! 0 V, and every other pad floats. Entry `g * n_e + m` of the frame is the
//! mean potential over pad `m`'s nodes.

use crate::error::{Error, Result};
use crate::exec::Execution;
use nalgebra::{DMatrix, DVector};

use crate::fem::{assemble, DirichletSet, DirichletSolver, StiffnessSystem, RESIDUAL_TOL};
use crate::fingerprint::Fingerprinter;
use crate::mesh::{ElectrodeLayout, Mesh};

/// Readings outside `[0, v_cc]` by more than this fraction of `v_cc` are
/// reported as maximum-principle violations.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFrame {
    /// Volts, canonical layout `g * n_electrodes + m`.
    pub values: Vec<f64>,
    pub n_electrodes: usize,
    pub v_cc: f64,
    /// [`protocol_fingerprint`] of the acquisition setup.
    pub fingerprint: u64,
}

impl PotentialFrame {
    pub fn get(&self, ground: usize, measure: usize) -> f64 {
        self.values[ground * self.n_electrodes + measure]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Identifies which frames a Jacobian can invert: sensor extent, electrode
/// layout and drive voltage. Mesh resolution and conductivity are deliberately
/// excluded, since thick-detector frames are reconstructed with the shell
/// Jacobian.
pub fn protocol_fingerprint(width: f64, depth: f64, layout: &ElectrodeLayout, v_cc: f64) -> u64 {
    let mut f = Fingerprinter::new();
    f.bytes(b"tomotact-protocol").f64(width).f64(depth).json(layout).f64(v_cc);
    f.finish()
}

/// Runs the full grounding cycle on a mesh whose contact region has been
/// applied.
///
/// The stiffness matrix is factored once with only the drive disc fixed.
/// Grounding pad `g` is then a rank-`|g|` constraint handled through the
/// capacitance matrix `E^T K^-1 E` of the pad nodes, which needs one solve per
/// pad node instead of one factorization per ground. Grounds whose corrected
/// solution fails the residual check, and meshes whose body floats without a
/// ground (zero contact conductivity), fall back to
/// [`acquire_frame_direct`]'s per-ground elimination.
pub fn acquire_frame(mesh: &Mesh, v_cc: f64, exec: Execution) -> Result<PotentialFrame> {
    check_setup(mesh, v_cc)?;
    let system = assemble(mesh)?;
    let drive = DirichletSet::from_groups(&[(&mesh.drive_nodes, v_cc)])?;
    let solver = match DirichletSolver::new(&system, &drive.nodes()) {
        Ok(s) => s,
        Err(Error::Numerical(msg)) => {
            log::debug!("drive-only factorization failed ({msg}); grounding by elimination");
            return direct(mesh, &system, v_cc, exec);
        }
        Err(e) => return Err(e),
    };
    let base = solver.solve(&drive, None)?.potentials;

    // unit-current responses of every pad node, drive held at 0 V
    let quiet = DirichletSet::from_groups(&[(&mesh.drive_nodes, 0.0)])?;
    let pad_nodes: Vec<usize> = mesh.electrodes.concat();
    let responses = exec.try_map(pad_nodes.len(), |i| -> Result<Vec<f64>> {
        let mut f = vec![0.0; mesh.node_count()];
        f[pad_nodes[i]] = 1.0;
        Ok(solver.solve(&quiet, Some(&f))?.potentials)
    })?;
    let mut offsets = Vec::with_capacity(mesh.electrodes.len());
    let mut at = 0;
    for set in &mesh.electrodes {
        offsets.push(at);
        at += set.len();
    }

    let rows = exec.try_map(mesh.electrodes.len(), |g| -> Result<Vec<f64>> {
        let ground = &mesh.electrodes[g];
        let z = &responses[offsets[g]..offsets[g] + ground.len()];
        let k = ground.len();
        let cap = DMatrix::from_fn(k, k, |a, b| z[b][ground[a]]);
        let rhs = DVector::from_fn(k, |a, _| -base[ground[a]]);
        let grounded = cap.cholesky().map(|c| c.solve(&rhs)).and_then(|lambda| {
            let mut phi = base.clone();
            for (col, l) in z.iter().zip(lambda.iter()) {
                for (p, zc) in phi.iter_mut().zip(col) {
                    *p += l * zc;
                }
            }
            for &n in ground {
                phi[n] = 0.0;
            }
            let bc = DirichletSet::from_groups(&[(&mesh.drive_nodes, v_cc), (ground, 0.0)]).ok()?;
            (backward_error(&system, &phi, &bc) < RESIDUAL_TOL).then_some(phi)
        });
        let phi = match grounded {
            Some(phi) => phi,
            None => {
                log::debug!("ground {g}: capacitance correction inaccurate, eliminating directly");
                ground_solve(mesh, &system, v_cc, g)?
            }
        };
        Ok(readings(mesh, &phi, g, v_cc))
    })?;
    Ok(frame(mesh, rows, v_cc))
}

/// Reference implementation: one factorization per ground with the drive
/// and the grounded pad eliminated.
pub fn acquire_frame_direct(mesh: &Mesh, v_cc: f64, exec: Execution) -> Result<PotentialFrame> {
    check_setup(mesh, v_cc)?;
    let system = assemble(mesh)?;
    direct(mesh, &system, v_cc, exec)
}

fn direct(mesh: &Mesh, system: &StiffnessSystem, v_cc: f64, exec: Execution) -> Result<PotentialFrame> {
    let rows = exec.try_map(mesh.electrodes.len(), |g| -> Result<Vec<f64>> {
        let phi = ground_solve(mesh, system, v_cc, g)?;
        Ok(readings(mesh, &phi, g, v_cc))
    })?;
    Ok(frame(mesh, rows, v_cc))
}

fn ground_solve(mesh: &Mesh, system: &StiffnessSystem, v_cc: f64, g: usize) -> Result<Vec<f64>> {
    let bc = DirichletSet::from_groups(&[(&mesh.drive_nodes, v_cc), (&mesh.electrodes[g], 0.0)])?;
    DirichletSolver::new(system, &bc.nodes())
        .and_then(|s| s.solve(&bc, None))
        .map(|s| s.potentials)
        .map_err(|e| match e {
            Error::Numerical(m) => Error::numerical(format!("ground electrode {g}: {m}")),
            other => other,
        })
}

/// Componentwise backward error over the nodes not fixed by `bc`.
fn backward_error(system: &StiffnessSystem, phi: &[f64], bc: &DirichletSet) -> f64 {
    let mut fixed = vec![false; phi.len()];
    for &(n, _) in bc.entries() {
        fixed[n] = true;
    }
    let kx = system.mul(phi);
    let abs: Vec<f64> = phi.iter().map(|p| p.abs()).collect();
    let scale = system.abs_mul(&abs);
    let (mut worst, mut denom) = (0.0f64, 0.0f64);
    for i in (0..phi.len()).filter(|&i| !fixed[i]) {
        worst = worst.max(kx[i].abs());
        denom = denom.max(scale[i]);
    }
    if denom == 0.0 {
        0.0
    } else {
        worst / denom
    }
}

fn readings(mesh: &Mesh, phi: &[f64], g: usize, v_cc: f64) -> Vec<f64> {
    let row: Vec<f64> = mesh
        .electrodes
        .iter()
        .enumerate()
        .map(|(m, set)| if m == g { 0.0 } else { set.iter().map(|&n| phi[n]).sum::<f64>() / set.len() as f64 })
        .collect();
    if row.iter().any(|&v| v < -BOUND_SLACK * v_cc || v > (1.0 + BOUND_SLACK) * v_cc) {
        let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        log::warn!("ground {g}: electrode readings leave [0, v_cc]; nodal range [{lo:.6}, {hi:.6}] V");
    }
    row
}

fn frame(mesh: &Mesh, rows: Vec<Vec<f64>>, v_cc: f64) -> PotentialFrame {
    PotentialFrame {
        values: rows.concat(),
        n_electrodes: mesh.electrodes.len(),
        v_cc,
        fingerprint: protocol_fingerprint(mesh.width, mesh.depth, &mesh.layout, v_cc),
    }
}

fn check_setup(mesh: &Mesh, v_cc: f64) -> Result<()> {
    let n_e = mesh.electrodes.len();
    if n_e < 2 {
        return Err(Error::contract(format!("grounding cycle needs at least 2 electrodes, mesh has {n_e}")));
    }
    if mesh.drive_nodes.is_empty() {
        return Err(Error::contract("mesh has no drive nodes; apply a contact region first"));
    }
    if !(v_cc > 0.0 && v_cc.is_finite()) {
        return Err(Error::config(format!("drive voltage must be positive, got {v_cc}")));
    }
    let mut on_drive = vec![false; mesh.node_count()];
    for &n in &mesh.drive_nodes {
        on_drive[n] = true;
    }
    if let Some(e) = mesh.electrodes.iter().position(|set| set.iter().any(|&n| on_drive[n])) {
        return Err(Error::config(format!("contact disc overlaps electrode {e}")));
    }
    Ok(())
}
