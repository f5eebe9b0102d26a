use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshFlavor};

/// Volume meshes are stored in millimetres; stiffness is assembled in SI so
/// nodal sources are amperes and potentials volts.
const MM: f64 = 1e-3;

/// Symmetric stiffness matrix in compressed-row form (both triangles stored),
/// before any boundary condition is applied.
#[derive(Debug, Clone)]
pub struct StiffnessSystem {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl StiffnessSystem {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }

    /// `sum_j |K_ij| |x_j|` per row, used to scale residuals.
    pub(crate) fn abs_mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| (a * x[j]).abs()).sum()
            })
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// Largest `|K_ij - K_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(t.len() / 4);
        let mut vals: Vec<f64> = Vec::with_capacity(t.len() / 4);
        let mut last = (usize::MAX, usize::MAX);
        for (i, j, v) in t {
            if (i, j) == last {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = (i, j);
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }
}

/// Assembles the conductivity-weighted Laplacian of `mesh`.
///
/// Triangles use the exact linear-element stiffness; hexahedra use 2x2x2
/// Gauss quadrature of the trilinear shape functions.
pub fn assemble(mesh: &Mesh) -> Result<StiffnessSystem> {
    let k = mesh.nodes_per_element();
    let mut triplets = Vec::with_capacity(mesh.element_count() * k * k);
    let mut ke = vec![0.0; k * k];
    for e in 0..mesh.element_count() {
        let ids = mesh.element_nodes(e);
        let sigma = mesh.sigma[e];
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Assembly { element: e, reason: format!("invalid conductivity {sigma}") });
        }
        match mesh.flavor {
            MeshFlavor::Shell => triangle_stiffness(mesh, ids, sigma, &mut ke, e)?,
            MeshFlavor::Volume => hex_stiffness(mesh, ids, sigma, &mut ke, e)?,
        }
        for a in 0..k {
            for b in 0..k {
                triplets.push((ids[a], ids[b], ke[a * k + b]));
            }
        }
    }
    Ok(StiffnessSystem::from_triplets(mesh.node_count(), triplets))
}

fn triangle_stiffness(mesh: &Mesh, ids: &[usize], sigma: f64, ke: &mut [f64], e: usize) -> Result<()> {
    let p: Vec<[f64; 3]> = ids.iter().map(|&n| mesh.nodes[n]).collect();
    let twice_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    if !(twice_area > 0.0) {
        return Err(Error::Assembly { element: e, reason: format!("degenerate triangle (2A = {twice_area:e})") });
    }
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        b[i] = p[j][1] - p[k][1];
        c[i] = p[k][0] - p[j][0];
    }
    let scale = sigma / (2.0 * twice_area);
    for i in 0..3 {
        for j in 0..3 {
            ke[i * 3 + j] = scale * (b[i] * b[j] + c[i] * c[j]);
        }
    }
    Ok(())
}

const HEX_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

fn hex_stiffness(mesh: &Mesh, ids: &[usize], sigma: f64, ke: &mut [f64], e: usize) -> Result<()> {
    let g = 1.0 / 3f64.sqrt();
    let x: Vec<[f64; 3]> = ids.iter().map(|&n| mesh.nodes[n].map(|c| c * MM)).collect();
    ke.iter_mut().for_each(|v| *v = 0.0);
    let mut dn = [[0.0; 3]; 8];
    let mut grad = [[0.0; 3]; 8];
    for &xi in &[-g, g] {
        for &eta in &[-g, g] {
            for &zeta in &[-g, g] {
                for (a, s) in HEX_SIGNS.iter().enumerate() {
                    dn[a] = [
                        s[0] * (1.0 + s[1] * eta) * (1.0 + s[2] * zeta) / 8.0,
                        s[1] * (1.0 + s[0] * xi) * (1.0 + s[2] * zeta) / 8.0,
                        s[2] * (1.0 + s[0] * xi) * (1.0 + s[1] * eta) / 8.0,
                    ];
                }
                // jac[r][c] = d x_r / d xi_c
                let mut jac = [[0.0; 3]; 3];
                for a in 0..8 {
                    for r in 0..3 {
                        for c in 0..3 {
                            jac[r][c] += x[a][r] * dn[a][c];
                        }
                    }
                }
                let (inv, det) = invert3(&jac);
                if !(det > 0.0) {
                    return Err(Error::Assembly {
                        element: e,
                        reason: format!("non-positive Jacobian determinant {det:e}"),
                    });
                }
                // grad N = J^-T dN/dxi
                for a in 0..8 {
                    for r in 0..3 {
                        grad[a][r] = (0..3).map(|c| inv[c][r] * dn[a][c]).sum();
                    }
                }
                let w = sigma * det;
                for a in 0..8 {
                    for b in 0..8 {
                        let d = grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1] + grad[a][2] * grad[b][2];
                        ke[a * 8 + b] += w * d;
                    }
                }
            }
        }
    }
    Ok(())
}

fn invert3(m: &[[f64; 3]; 3]) -> ([[f64; 3]; 3], f64) {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let inv_det = 1.0 / det;
    let inv = [
        [c00 * inv_det, (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det, (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det],
        [c01 * inv_det, (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det, (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det],
        [c02 * inv_det, (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det, (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det],
    ];
    (inv, det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_shell_mesh, build_volume_mesh, ElectrodeLayout, GradientSpec};

    fn single() -> ElectrodeLayout {
        ElectrodeLayout { per_side: 1, diameter: 1.0, pitch: 10.0 }
    }

    #[test]
    fn one_triangle_pair_has_zero_row_sums() {
        let m = build_shell_mesh(10.0, 10.0, 1, single(), 1.0).unwrap();
        let k = assemble(&m).unwrap();
        assert_eq!(k.dim(), 4);
        assert!(k.row_sums().iter().all(|s| s.abs() < 1e-12));
        assert!(k.asymmetry() < 1e-12);
    }

    #[test]
    fn one_hex_has_zero_row_sums() {
        let g = GradientSpec::uniform(2.0, 10.0).unwrap();
        let m = build_volume_mesh(10.0, 10.0, 10.0, (1, 1, 1), single(), &g).unwrap();
        let k = assemble(&m).unwrap();
        assert_eq!(k.dim(), 8);
        assert!(k.row_sums().iter().all(|s| s.abs() < 1e-15));
        assert!(k.asymmetry() < 1e-15);
        // cube of side h: diagonal = sigma * h / 3
        assert!((k.get(0, 0) - 2.0 * 0.01 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_mesh_symmetric() {
        let g = GradientSpec::across(0.01, 10.0, 10.0).unwrap();
        let m = build_volume_mesh(60.0, 60.0, 10.0, (6, 6, 4), ElectrodeLayout::default(), &g).unwrap();
        let k = assemble(&m).unwrap();
        assert!(k.asymmetry() < 1e-12);
        let s = build_shell_mesh(60.0, 60.0, 12, ElectrodeLayout::default(), 1.0).unwrap();
        assert!(assemble(&s).unwrap().asymmetry() < 1e-12);
    }

    #[test]
    fn stiffness_linear_in_sigma() {
        let g1 = GradientSpec::across(0.5, 3.0, 10.0).unwrap();
        let g2 = GradientSpec::across(1.0, 6.0, 10.0).unwrap();
        let m1 = build_volume_mesh(60.0, 60.0, 10.0, (12, 12, 3), ElectrodeLayout::default(), &g1).unwrap();
        let m2 = build_volume_mesh(60.0, 60.0, 10.0, (12, 12, 3), ElectrodeLayout::default(), &g2).unwrap();
        let (k1, k2) = (assemble(&m1).unwrap(), assemble(&m2).unwrap());
        for i in 0..k1.dim() {
            let (c, v) = k1.row(i);
            for (&j, &a) in c.iter().zip(v) {
                assert!((k2.get(i, j) - 2.0 * a).abs() <= 1e-15 * a.abs().max(1e-3));
            }
        }
    }
}
