use std::collections::HashSet;

use super::assembly::StiffnessSystem;
use super::skyline::{SkylineCholesky, SkylineMatrix};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshFlavor};

/// Accepted componentwise backward error of a direct solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Prescribed nodal potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSet {
    entries: Vec<(usize, f64)>,
}

impl DirichletSet {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::contract("Dirichlet set is empty; the system would be singular"));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for &(n, v) in &entries {
            if !seen.insert(n) {
                return Err(Error::contract(format!("node {n} appears twice in the Dirichlet set")));
            }
            if !v.is_finite() {
                return Err(Error::contract(format!("non-finite potential {v} at node {n}")));
            }
        }
        Ok(Self { entries })
    }

    /// All `nodes` held at `value`, plus the other groups.
    pub fn from_groups(groups: &[(&[usize], f64)]) -> Result<Self> {
        Self::new(groups.iter().flat_map(|(ids, v)| ids.iter().map(move |&n| (n, *v))).collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn range(&self) -> (f64, f64) {
        self.entries
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)))
    }
}

#[derive(Debug, Clone)]
pub struct FieldSolution {
    /// Nodal potentials, volts.
    pub potentials: Vec<f64>,
    /// Componentwise backward error of the reduced solve.
    pub residual: f64,
    /// How far nodal potentials leave the range of the boundary values, volts.
    /// `None` when nodal sources were present, where no such bound holds.
    ///
    /// Trilinear elements whose cells are longer along one axis than another
    /// have positive off-diagonal couplings, so on coarse meshes with strong
    /// conductivity contrast this can be slightly positive.
    pub dmp_excess: Option<f64>,
}

impl FieldSolution {
    /// How far the solution leaves `[min bc, max bc]`, in volts (0 when inside).
    pub fn bound_excess(&self, bc: &DirichletSet) -> f64 {
        let (lo, hi) = bc.range();
        self.potentials.iter().fold(0.0f64, |w, &p| w.max(lo - p).max(p - hi))
    }
}

/// Reduced system for a fixed set of Dirichlet nodes, factored once and reused
/// for any boundary values and nodal sources on those nodes.
///
/// Dirichlet rows and columns are eliminated, keeping the reduced matrix
/// symmetric positive definite.
#[derive(Debug)]
pub struct DirichletSolver<'a> {
    system: &'a StiffnessSystem,
    fixed: Vec<bool>,
    free_nodes: Vec<usize>,
    factor: SkylineCholesky,
}

impl<'a> DirichletSolver<'a> {
    pub fn new(system: &'a StiffnessSystem, fixed_nodes: &[usize]) -> Result<Self> {
        let n = system.dim();
        if fixed_nodes.is_empty() {
            return Err(Error::contract("no Dirichlet nodes; the system would be singular"));
        }
        let mut fixed = vec![false; n];
        for &f in fixed_nodes {
            if f >= n {
                return Err(Error::contract(format!("Dirichlet node {f} out of range")));
            }
            fixed[f] = true;
        }
        let mut reduced = vec![usize::MAX; n];
        let mut free_nodes = Vec::with_capacity(n);
        for i in 0..n {
            if !fixed[i] {
                reduced[i] = free_nodes.len();
                free_nodes.push(i);
            }
        }
        let first: Vec<usize> = free_nodes
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                let (cols, _) = system.row(i);
                cols.iter().filter(|&&j| !fixed[j]).map(|&j| reduced[j]).min().unwrap_or(r).min(r)
            })
            .collect();
        let mut m = SkylineMatrix::with_profile(first);
        for (r, &i) in free_nodes.iter().enumerate() {
            let (cols, vals) = system.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if !fixed[j] && reduced[j] <= r {
                    m.add(r, reduced[j], v);
                }
            }
        }
        let factor = m.factor()?;
        Ok(Self { system, fixed, free_nodes, factor })
    }

    pub fn factor(&self) -> &SkylineCholesky {
        &self.factor
    }

    /// Solves with boundary values `bc` (which must cover exactly the fixed
    /// nodes) and optional nodal current sources.
    pub fn solve(&self, bc: &DirichletSet, sources: Option<&[f64]>) -> Result<FieldSolution> {
        let n = self.system.dim();
        let mut phi = vec![0.0; n];
        let mut count = 0;
        for &(node, v) in bc.entries() {
            if node >= n || !self.fixed[node] {
                return Err(Error::contract(format!("node {node} is not a Dirichlet node of this factorization")));
            }
            phi[node] = v;
            count += 1;
        }
        if count != n - self.free_nodes.len() {
            return Err(Error::contract("boundary values do not cover every Dirichlet node"));
        }
        if let Some(f) = sources {
            if f.len() != n {
                return Err(Error::contract(format!("source vector has {} entries, expected {n}", f.len())));
            }
        }
        let coupled = self.system.mul(&phi);
        let mut rhs: Vec<f64> = self
            .free_nodes
            .iter()
            .map(|&i| sources.map_or(0.0, |f| f[i]) - coupled[i])
            .collect();
        self.factor.solve_in_place(&mut rhs);
        for (&i, &x) in self.free_nodes.iter().zip(&rhs) {
            phi[i] = x;
        }
        let residual = self.backward_error(&phi, sources);
        if !(residual < RESIDUAL_TOL) {
            return Err(Error::numerical(format!(
                "direct solve residual {residual:.3e} exceeds {RESIDUAL_TOL:e} (pivot ratio {:.3e})",
                self.factor.pivot_ratio()
            )));
        }
        let mut sol = FieldSolution { potentials: phi, residual, dmp_excess: None };
        if sources.is_none() {
            let excess = sol.bound_excess(bc);
            if excess > 0.0 {
                log::debug!("discrete maximum principle exceeded by {excess:.3e} V");
            }
            sol.dmp_excess = Some(excess);
        }
        Ok(sol)
    }

    fn backward_error(&self, phi: &[f64], sources: Option<&[f64]>) -> f64 {
        let kx = self.system.mul(phi);
        let scale = self.system.abs_mul(phi);
        let mut worst = 0.0f64;
        let mut denom = 0.0f64;
        for &i in &self.free_nodes {
            let f = sources.map_or(0.0, |s| s[i]);
            worst = worst.max((kx[i] - f).abs());
            denom = denom.max(scale[i] + f.abs());
        }
        if denom == 0.0 {
            0.0
        } else {
            worst / denom
        }
    }
}

/// One-shot solve: factor for `bc`'s nodes and solve.
pub fn solve(system: &StiffnessSystem, bc: &DirichletSet) -> Result<FieldSolution> {
    DirichletSolver::new(system, &bc.nodes())?.solve(bc, None)
}

/// Vertical current through an element layer of a volume mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerCurrent {
    /// Net downward current, A.
    pub total: f64,
    /// Largest per-element current density magnitude, A/m^2.
    pub peak_density: f64,
}

/// Downward current through the given layer elements, from each element's
/// conductivity and the difference between its top- and bottom-face mean
/// potentials.
pub fn interface_current(mesh: &Mesh, sol: &FieldSolution, layer: &[usize]) -> Result<LayerCurrent> {
    if mesh.flavor != MeshFlavor::Volume {
        return Err(Error::contract("interface current needs a volume mesh"));
    }
    if layer.is_empty() {
        return Err(Error::contract("interface layer is empty"));
    }
    let mm = 1e-3;
    let phi = &sol.potentials;
    let mut total = 0.0;
    let mut peak = 0.0f64;
    for &e in layer {
        let ids = mesh.element_nodes(e);
        let bottom: f64 = ids[..4].iter().map(|&n| phi[n]).sum::<f64>() / 4.0;
        let top: f64 = ids[4..].iter().map(|&n| phi[n]).sum::<f64>() / 4.0;
        let p0 = mesh.nodes[ids[0]];
        let p6 = mesh.nodes[ids[6]];
        let area = (p6[0] - p0[0]) * (p6[1] - p0[1]) * mm * mm;
        let dh = (p6[2] - p0[2]) * mm;
        let density = mesh.sigma[e] * (top - bottom) / dh;
        total += density * area;
        peak = peak.max(density.abs());
    }
    Ok(LayerCurrent { total, peak_density: peak })
}
