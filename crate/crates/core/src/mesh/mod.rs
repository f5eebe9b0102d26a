//! Structured detector meshes.
//!
//! Coordinates are in millimetres with the sensor plane centred on the origin:
//! `x` in `[-width/2, width/2]`, `y` in `[-depth/2, depth/2]`, and the vertical
//! axis `z` running from the bottom face (electrodes, `z = 0`) to the top face
//! (driven contact, `z = height`). Shell meshes live in the `z = 0` plane.
//!
//! Node `(i, j, k)` has index `k + levels * (i + (nx + 1) * j)` so the vertical
//! index varies fastest; this keeps the stiffness bandwidth near
//! `levels * (nx + 1)`.

mod regions;

pub use regions::{apply_adhesion, apply_regions, AdhesionSpec, ContactSpec, RegionReport};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;

/// Relative slack on the inclusive disc test, so lattice points exactly on a
/// footprint boundary are kept regardless of rounding.
const DISC_TOL: f64 = 1e-12;

/// Exponential through-thickness conductivity profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientSpec {
    /// Conductivity at the bottom face, S/m.
    pub sigma_low: f64,
    /// Conductivity at the top face, S/m.
    pub sigma_up: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl GradientSpec {
    pub fn new(sigma_low: f64, sigma_up: f64, z_min: f64, z_max: f64) -> Result<Self> {
        let g = Self { sigma_low, sigma_up, z_min, z_max };
        g.validate()?;
        Ok(g)
    }

    /// Profile spanning a detector of the given height.
    pub fn across(sigma_low: f64, sigma_up: f64, height: f64) -> Result<Self> {
        Self::new(sigma_low, sigma_up, 0.0, height)
    }

    pub fn uniform(sigma: f64, height: f64) -> Result<Self> {
        Self::across(sigma, sigma, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_low > 0.0 && self.sigma_low.is_finite()) {
            return Err(Error::config(format!("sigma_low must be positive, got {}", self.sigma_low)));
        }
        if !(self.sigma_up > 0.0 && self.sigma_up.is_finite()) {
            return Err(Error::config(format!("sigma_up must be positive, got {}", self.sigma_up)));
        }
        if !(self.z_max > self.z_min) {
            return Err(Error::config(format!(
                "gradient extent must satisfy z_max > z_min, got [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }

    /// `sigma_low * (sigma_up / sigma_low)^t` with `t` the normalized height.
    pub fn conductivity_at(&self, z: f64) -> f64 {
        let t = (z - self.z_min) / (self.z_max - self.z_min);
        self.sigma_low * (self.sigma_up / self.sigma_low).powf(t)
    }
}

/// Square grid of circular electrode pads on the bottom face.
///
/// Electrode `ix + per_side * iy` sits at
/// `((ix + 0.5 - per_side/2) * pitch, (iy + 0.5 - per_side/2) * pitch)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrodeLayout {
    pub per_side: usize,
    /// Pad diameter, mm.
    pub diameter: f64,
    /// Centre-to-centre spacing, mm.
    pub pitch: f64,
}

impl Default for ElectrodeLayout {
    fn default() -> Self {
        Self { per_side: 4, diameter: 4.0, pitch: 15.0 }
    }
}

impl ElectrodeLayout {
    pub fn count(&self) -> usize {
        self.per_side * self.per_side
    }

    pub fn center(&self, electrode: usize) -> (f64, f64) {
        let ix = electrode % self.per_side;
        let iy = electrode / self.per_side;
        let half = self.per_side as f64 / 2.0;
        ((ix as f64 + 0.5 - half) * self.pitch, (iy as f64 + 0.5 - half) * self.pitch)
    }

    pub fn validate(&self, width: f64, depth: f64) -> Result<()> {
        if self.per_side == 0 {
            return Err(Error::config("electrode layout needs at least one electrode per side"));
        }
        if !(self.diameter > 0.0 && self.pitch > 0.0) {
            return Err(Error::config("electrode diameter and pitch must be positive"));
        }
        if self.per_side > 1 && self.diameter >= self.pitch {
            return Err(Error::config(format!(
                "electrode diameter {} mm overlaps neighbours at pitch {} mm",
                self.diameter, self.pitch
            )));
        }
        let r = self.diameter / 2.0;
        for e in 0..self.count() {
            let (cx, cy) = self.center(e);
            if cx.abs() + r >= width / 2.0 || cy.abs() + r >= depth / 2.0 {
                return Err(Error::config(format!(
                    "electrode {e} at ({cx}, {cy}) does not lie strictly inside the {width} x {depth} mm face"
                )));
            }
        }
        Ok(())
    }

    /// Electrode index after applying one of the 8 symmetries of the square
    /// grid (`0..4` rotations by 90 degrees, `4..8` the same followed by a
    /// mirror in x).
    pub fn dihedral(&self, op: usize, electrode: usize) -> usize {
        let n = self.per_side;
        let (ix, iy) = (electrode % n, electrode / n);
        let (x, y) = dihedral_index(op, ix, iy, n);
        x + n * y
    }
}

/// Applies square symmetry `op` (see [`ElectrodeLayout::dihedral`]) to lattice
/// indices `(i, j)` of an `n`-point axis.
pub fn dihedral_index(op: usize, i: usize, j: usize, n: usize) -> (usize, usize) {
    let m = n - 1;
    let (mut a, mut b) = (i, j);
    for _ in 0..(op % 4) {
        // rotate by 90 degrees: (x, y) -> (-y, x)
        (a, b) = (m - b, a);
    }
    if op >= 4 {
        a = m - a;
    }
    (a, b)
}

/// Applies square symmetry `op` to a point in the sensor plane.
pub fn dihedral_point(op: usize, x: f64, y: f64) -> (f64, f64) {
    let (mut a, mut b) = (x, y);
    for _ in 0..(op % 4) {
        (a, b) = (-b, a);
    }
    if op >= 4 {
        a = -a;
    }
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFlavor {
    /// Planar linear triangles (thin-shell model).
    Shell,
    /// Trilinear hexahedra.
    Volume,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub flavor: MeshFlavor,
    pub width: f64,
    pub depth: f64,
    pub nx: usize,
    pub ny: usize,
    /// Node heights, bottom to top. `[0.0]` for shells.
    pub z_levels: Vec<f64>,
    pub nodes: Vec<[f64; 3]>,
    connectivity: Vec<usize>,
    /// Per-element conductivity, S/m.
    pub sigma: Vec<f64>,
    pub layout: ElectrodeLayout,
    /// Node sets of each electrode pad, in canonical electrode order.
    pub electrodes: Vec<Vec<usize>>,
    /// Top-face nodes held at the drive voltage.
    pub drive_nodes: Vec<usize>,
    /// Elements directly beneath the driven disc.
    pub contact_elements: Vec<usize>,
    /// Elements of the adhesion interface layer.
    pub interface_elements: Vec<usize>,
}

impl Mesh {
    pub fn nodes_per_element(&self) -> usize {
        match self.flavor {
            MeshFlavor::Shell => 3,
            MeshFlavor::Volume => 8,
        }
    }

    pub fn element_count(&self) -> usize {
        self.sigma.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let k = self.nodes_per_element();
        &self.connectivity[e * k..(e + 1) * k]
    }

    pub fn levels(&self) -> usize {
        self.z_levels.len()
    }

    /// Element layers (volume meshes); 1 for shells.
    pub fn layers(&self) -> usize {
        match self.flavor {
            MeshFlavor::Shell => 1,
            MeshFlavor::Volume => self.z_levels.len() - 1,
        }
    }

    pub fn height(&self) -> f64 {
        self.z_levels[self.z_levels.len() - 1] - self.z_levels[0]
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        k + self.levels() * (i + (self.nx + 1) * j)
    }

    /// Cell spacing in the sensor plane.
    pub fn spacing(&self) -> (f64, f64) {
        (self.width / self.nx as f64, self.depth / self.ny as f64)
    }

    /// Elements in volume layer `k` (0 = bottom). For shells, every element.
    pub fn layer_elements(&self, k: usize) -> Vec<usize> {
        match self.flavor {
            MeshFlavor::Shell => (0..self.element_count()).collect(),
            MeshFlavor::Volume => {
                let per = self.nx * self.ny;
                (k * per..(k + 1) * per).collect()
            }
        }
    }

    pub fn top_layer(&self) -> usize {
        self.layers() - 1
    }

    /// Nodes on the face at height level `k`.
    pub fn face_nodes(&self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity((self.nx + 1) * (self.ny + 1));
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                out.push(self.node_index(i, j, k));
            }
        }
        out
    }

    pub fn centroid(&self, e: usize) -> [f64; 3] {
        let ids = self.element_nodes(e);
        let mut c = [0.0; 3];
        for &n in ids {
            for d in 0..3 {
                c[d] += self.nodes[n][d];
            }
        }
        let k = ids.len() as f64;
        [c[0] / k, c[1] / k, c[2] / k]
    }

    /// Area (shell, mm^2) or volume (hexahedron, mm^3) of an element.
    pub fn measure(&self, e: usize) -> f64 {
        let ids = self.element_nodes(e);
        match self.flavor {
            MeshFlavor::Shell => {
                let [a, b, c] = [self.nodes[ids[0]], self.nodes[ids[1]], self.nodes[ids[2]]];
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            }
            MeshFlavor::Volume => {
                let p0 = self.nodes[ids[0]];
                let p6 = self.nodes[ids[6]];
                (p6[0] - p0[0]) * (p6[1] - p0[1]) * (p6[2] - p0[2])
            }
        }
    }

    /// Nodes at level `k` within `radius` of `(cx, cy)`, inclusive.
    ///
    /// A disc narrower than one cell is widened to the cell half-diagonal so it
    /// always captures the corners of the cell it sits in; on the default
    /// resolutions the requested radius is already larger.
    pub fn nodes_in_disc(&self, k: usize, cx: f64, cy: f64, radius: f64) -> Vec<usize> {
        let (dx, dy) = self.spacing();
        let r = radius.max(0.5 * (dx * dx + dy * dy).sqrt());
        let r2 = r * r * (1.0 + DISC_TOL);
        self.face_nodes(k)
            .into_iter()
            .filter(|&n| {
                let p = self.nodes[n];
                let (ex, ey) = (p[0] - cx, p[1] - cy);
                ex * ex + ey * ey <= r2
            })
            .collect()
    }

    pub fn is_uniform(&self) -> bool {
        let s0 = self.sigma[0];
        self.sigma.iter().all(|&s| s == s0)
    }

    /// Structural checks: node references, positive measures, non-negative
    /// finite conductivities, disjoint non-empty electrodes.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        for e in 0..self.element_count() {
            if self.element_nodes(e).iter().any(|&id| id >= n) {
                return Err(Error::Assembly { element: e, reason: "references a missing node".into() });
            }
            if !(self.measure(e) > 0.0) {
                return Err(Error::Assembly { element: e, reason: "non-positive area/volume".into() });
            }
            let s = self.sigma[e];
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Assembly { element: e, reason: format!("invalid conductivity {s}") });
            }
        }
        let mut owner = vec![usize::MAX; n];
        for (i, set) in self.electrodes.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::config(format!("electrode {i} covers no nodes")));
            }
            for &node in set {
                if owner[node] != usize::MAX {
                    return Err(Error::config(format!(
                        "electrodes {} and {i} share node {node}",
                        owner[node]
                    )));
                }
                owner[node] = i;
            }
        }
        Ok(())
    }

    /// Content hash over geometry, connectivity, conductivity and tags.
    pub fn fingerprint(&self) -> u64 {
        let mut f = Fingerprinter::new();
        f.json(&self.flavor).f64(self.width).f64(self.depth).usize(self.nx).usize(self.ny);
        f.f64s(&self.z_levels).usizes(&self.connectivity).f64s(&self.sigma);
        f.json(&self.layout);
        for set in &self.electrodes {
            f.usizes(set);
        }
        f.usizes(&self.drive_nodes).usizes(&self.contact_elements).usizes(&self.interface_elements);
        f.finish()
    }

    /// Debug dump with `NODES`, `ELEMENTS` and `ELECTRODES` sections.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        use crate::io::fmt_g;
        writeln!(w, "NODES")?;
        writeln!(w, "id,x,y,z")?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", fmt_g(p[0]), fmt_g(p[1]), fmt_g(p[2]))?;
        }
        writeln!(w, "ELEMENTS")?;
        let cols: Vec<String> = (0..self.nodes_per_element()).map(|k| format!("n{k}")).collect();
        writeln!(w, "id,{},sigma", cols.join(","))?;
        for e in 0..self.element_count() {
            let ids: Vec<String> = self.element_nodes(e).iter().map(|n| n.to_string()).collect();
            writeln!(w, "{e},{},{}", ids.join(","), fmt_g(self.sigma[e]))?;
        }
        writeln!(w, "ELECTRODES")?;
        writeln!(w, "id,nodes...")?;
        for (i, set) in self.electrodes.iter().enumerate() {
            let ids: Vec<String> = set.iter().map(|n| n.to_string()).collect();
            writeln!(w, "{i},{}", ids.join(","))?;
        }
        Ok(())
    }

    fn assign_electrodes(&mut self) -> Result<()> {
        let r = self.layout.diameter / 2.0;
        let mut sets = Vec::with_capacity(self.layout.count());
        for e in 0..self.layout.count() {
            let (cx, cy) = self.layout.center(e);
            let set = self.nodes_in_disc(0, cx, cy, r);
            if set.is_empty() {
                return Err(Error::config(format!("electrode {e} at ({cx}, {cy}) covers no mesh nodes")));
            }
            sets.push(set);
        }
        self.electrodes = sets;
        self.validate()
    }
}

fn axis(extent: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| -extent / 2.0 + extent * i as f64 / n as f64).collect()
}

fn check_plane(width: f64, depth: f64, nx: usize, ny: usize) -> Result<()> {
    if !(width > 0.0 && depth > 0.0 && width.is_finite() && depth.is_finite()) {
        return Err(Error::config(format!("sensor extent must be positive, got {width} x {depth}")));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::config("mesh divisions must be at least 1"));
    }
    Ok(())
}

/// Thin-shell mesh: `divisions^2` squares, each split into two triangles along
/// the diagonal pointing away from the sensor centre, so the mesh keeps the
/// square's symmetries when `divisions` is even.
pub fn build_shell_mesh(
    width: f64,
    depth: f64,
    divisions: usize,
    layout: ElectrodeLayout,
    sigma: f64,
) -> Result<Mesh> {
    check_plane(width, depth, divisions, divisions)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("shell conductivity must be positive, got {sigma}")));
    }
    layout.validate(width, depth)?;
    let (nx, ny) = (divisions, divisions);
    let xs = axis(width, nx);
    let ys = axis(depth, ny);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for &y in &ys {
        for &x in &xs {
            nodes.push([x, y, 0.0]);
        }
    }
    let id = |i: usize, j: usize| i + (nx + 1) * j;
    let mut connectivity = Vec::with_capacity(6 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let cx = 0.5 * (xs[i] + xs[i + 1]);
            let cy = 0.5 * (ys[j] + ys[j + 1]);
            if cx * cy >= 0.0 {
                // diagonal a-c
                connectivity.extend_from_slice(&[a, b, c, a, c, d]);
            } else {
                // diagonal b-d
                connectivity.extend_from_slice(&[a, b, d, b, c, d]);
            }
        }
    }
    let mut mesh = Mesh {
        flavor: MeshFlavor::Shell,
        width,
        depth,
        nx,
        ny,
        z_levels: vec![0.0],
        nodes,
        connectivity,
        sigma: vec![sigma; 2 * nx * ny],
        layout,
        electrodes: Vec::new(),
        drive_nodes: Vec::new(),
        contact_elements: Vec::new(),
        interface_elements: Vec::new(),
    };
    mesh.assign_electrodes()?;
    Ok(mesh)
}

/// Hexahedral mesh with uniform layer spacing; see [`build_volume_mesh_with_levels`].
pub fn build_volume_mesh(
    width: f64,
    depth: f64,
    height: f64,
    divisions: (usize, usize, usize),
    layout: ElectrodeLayout,
    grad: &GradientSpec,
) -> Result<Mesh> {
    let (nx, ny, nz) = divisions;
    if nz == 0 {
        return Err(Error::config("mesh divisions must be at least 1"));
    }
    if !(height > 0.0 && height.is_finite()) {
        return Err(Error::config(format!("detector height must be positive, got {height}")));
    }
    let levels: Vec<f64> = (0..=nz).map(|k| height * k as f64 / nz as f64).collect();
    build_volume_mesh_with_levels(width, depth, (nx, ny), &levels, layout, grad)
}

/// Hexahedral mesh over explicit, strictly increasing node heights. Each
/// element's conductivity is the gradient profile evaluated at its centroid
/// height.
pub fn build_volume_mesh_with_levels(
    width: f64,
    depth: f64,
    divisions: (usize, usize),
    z_levels: &[f64],
    layout: ElectrodeLayout,
    grad: &GradientSpec,
) -> Result<Mesh> {
    let (nx, ny) = divisions;
    check_plane(width, depth, nx, ny)?;
    grad.validate()?;
    layout.validate(width, depth)?;
    if z_levels.len() < 2 || z_levels.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("z levels must be strictly increasing with at least one layer"));
    }
    let nz = z_levels.len() - 1;
    let levels = z_levels.len();
    let xs = axis(width, nx);
    let ys = axis(depth, ny);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * levels);
    for &y in &ys {
        for &x in &xs {
            for &z in z_levels {
                nodes.push([x, y, z]);
            }
        }
    }
    let id = |i: usize, j: usize, k: usize| k + levels * (i + (nx + 1) * j);
    let mut connectivity = Vec::with_capacity(8 * nx * ny * nz);
    let mut sigma = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        let zc = 0.5 * (z_levels[k] + z_levels[k + 1]);
        let s = grad.conductivity_at(zc);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::config(format!("conductivity {s} at height {zc} is not positive")));
        }
        for j in 0..ny {
            for i in 0..nx {
                connectivity.extend_from_slice(&[
                    id(i, j, k),
                    id(i + 1, j, k),
                    id(i + 1, j + 1, k),
                    id(i, j + 1, k),
                    id(i, j, k + 1),
                    id(i + 1, j, k + 1),
                    id(i + 1, j + 1, k + 1),
                    id(i, j + 1, k + 1),
                ]);
                sigma.push(s);
            }
        }
    }
    let mut mesh = Mesh {
        flavor: MeshFlavor::Volume,
        width,
        depth,
        nx,
        ny,
        z_levels: z_levels.to_vec(),
        nodes,
        connectivity,
        sigma,
        layout,
        electrodes: Vec::new(),
        drive_nodes: Vec::new(),
        contact_elements: Vec::new(),
        interface_elements: Vec::new(),
    };
    mesh.assign_electrodes()?;
    Ok(mesh)
}
