use serde::{Deserialize, Serialize};

use super::{Mesh, MeshFlavor, DISC_TOL};
use crate::error::{Error, Result};

/// Driven contact disc on the top face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSpec {
    pub x: f64,
    pub y: f64,
    /// Disc diameter, mm.
    pub diameter: f64,
    /// Conductivity of the element layer beneath the disc, S/m. Stands in for
    /// contact pressure.
    pub sigma_drv: f64,
}

impl ContactSpec {
    pub fn centered(diameter: f64, sigma_drv: f64) -> Self {
        Self { x: 0.0, y: 0.0, diameter, sigma_drv }
    }

    pub fn at(x: f64, y: f64, diameter: f64, sigma_drv: f64) -> Self {
        Self { x, y, diameter, sigma_drv }
    }
}

/// Dot-patterned conductive bonding between two stacked layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdhesionSpec {
    /// Dots per side of the square dot grid.
    pub dots_per_side: usize,
    /// Dot diameter, mm.
    pub dot_diameter: f64,
    /// Interface conductivity inside a dot, S/m.
    pub sigma_in: f64,
    /// Interface conductivity between dots, S/m.
    pub sigma_out: f64,
    /// Element layer carrying the mask (0 = bottom).
    pub layer: usize,
}

impl AdhesionSpec {
    pub fn pitch(&self, extent: f64) -> f64 {
        extent / self.dots_per_side as f64
    }

    /// Diameter at which the dots cover every point of the interface.
    pub fn full_coverage_diameter(&self, extent: f64) -> f64 {
        self.pitch(extent) * std::f64::consts::SQRT_2
    }

    fn nearest_center(&self, v: f64, extent: f64) -> f64 {
        let p = self.pitch(extent);
        let k = ((v + extent / 2.0) / p).floor().clamp(0.0, (self.dots_per_side - 1) as f64);
        -extent / 2.0 + (k + 0.5) * p
    }
}

/// What [`apply_regions`] tagged, plus non-fatal warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionReport {
    pub drive_nodes: usize,
    pub contact_elements: usize,
    pub in_dot_elements: Option<usize>,
    pub warnings: Vec<String>,
}

/// Applies a dot mask to one interface element layer: element centroids
/// within a dot get `sigma_in`, the rest `sigma_out`.
pub fn apply_adhesion(mesh: &Mesh, adh: &AdhesionSpec) -> Result<(Mesh, RegionReport)> {
    let mut out = mesh.clone();
    let mut report = RegionReport::default();
    if mesh.flavor != MeshFlavor::Volume {
        return Err(Error::config("adhesion masks need a volume mesh"));
    }
    if adh.dots_per_side == 0 || !(adh.dot_diameter > 0.0) {
        return Err(Error::config("adhesion needs at least one dot and a positive dot diameter"));
    }
    if adh.layer >= mesh.layers() {
        return Err(Error::config(format!(
            "adhesion layer {} out of range (mesh has {} layers)",
            adh.layer,
            mesh.layers()
        )));
    }
    if !(adh.sigma_in >= 0.0 && adh.sigma_out >= 0.0) {
        return Err(Error::config("adhesion conductivities must be non-negative"));
    }
    let rd = adh.dot_diameter / 2.0;
    let rd2 = rd * rd * (1.0 + DISC_TOL);
    let layer = mesh.layer_elements(adh.layer);
    let mut in_dot = 0;
    for &e in &layer {
        let c = mesh.centroid(e);
        let dx = c[0] - adh.nearest_center(c[0], mesh.width);
        let dy = c[1] - adh.nearest_center(c[1], mesh.depth);
        if dx * dx + dy * dy <= rd2 {
            out.sigma[e] = adh.sigma_in;
            in_dot += 1;
        } else {
            out.sigma[e] = adh.sigma_out;
        }
    }
    if in_dot == 0 {
        let msg = format!(
            "degenerate adhesion mask: {}x{} dots of diameter {} mm cover no interface element",
            adh.dots_per_side, adh.dots_per_side, adh.dot_diameter
        );
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    out.interface_elements = layer;
    report.in_dot_elements = Some(in_dot);
    Ok((out, report))
}

/// Tags the driven disc (top-face nodes inside it, and the top element layer
/// touching those nodes) and, optionally, applies a dot mask to an interface
/// layer.
///
/// The contact layer is every top-layer element with at least one driven node,
/// so the only current path out of the drive runs through `sigma_drv`.
pub fn apply_regions(
    mesh: &Mesh,
    contact: &ContactSpec,
    adhesion: Option<&AdhesionSpec>,
) -> Result<(Mesh, RegionReport)> {
    let r = contact.diameter / 2.0;
    if !(contact.diameter > 0.0) {
        return Err(Error::config(format!("contact diameter must be positive, got {}", contact.diameter)));
    }
    if contact.x.abs() + r > mesh.width / 2.0 || contact.y.abs() + r > mesh.depth / 2.0 {
        return Err(Error::config(format!(
            "contact disc at ({}, {}) with diameter {} leaves the top face",
            contact.x, contact.y, contact.diameter
        )));
    }
    if !(contact.sigma_drv >= 0.0 && contact.sigma_drv.is_finite()) {
        return Err(Error::config(format!("sigma_drv must be non-negative, got {}", contact.sigma_drv)));
    }

    let (mut out, mut report) = match adhesion {
        Some(adh) => apply_adhesion(mesh, adh)?,
        None => (mesh.clone(), RegionReport::default()),
    };

    let top = mesh.levels() - 1;
    let drive = mesh.nodes_in_disc(top, contact.x, contact.y, r);
    if drive.is_empty() {
        return Err(Error::config(format!(
            "contact disc at ({}, {}) covers no top-face nodes",
            contact.x, contact.y
        )));
    }
    let mut is_drive = vec![false; mesh.node_count()];
    for &n in &drive {
        is_drive[n] = true;
    }
    let contact_elements: Vec<usize> = mesh
        .layer_elements(mesh.top_layer())
        .into_iter()
        .filter(|&e| mesh.element_nodes(e).iter().any(|&n| is_drive[n]))
        .collect();
    for &e in &contact_elements {
        out.sigma[e] = contact.sigma_drv;
    }
    report.drive_nodes = drive.len();
    report.contact_elements = contact_elements.len();
    out.drive_nodes = drive;
    out.contact_elements = contact_elements;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_volume_mesh, dihedral_point, ElectrodeLayout, GradientSpec};

    fn block(nx: usize, nz: usize) -> Mesh {
        let g = GradientSpec::uniform(1.0, 10.0).unwrap();
        build_volume_mesh(60.0, 60.0, 10.0, (nx, nx, nz), ElectrodeLayout::default(), &g).unwrap()
    }

    fn plane_keys(m: &Mesh, ids: &[usize], op: usize) -> Vec<(i64, i64)> {
        let mut v: Vec<_> = ids
            .iter()
            .map(|&n| {
                let p = m.nodes[n];
                let (x, y) = dihedral_point(op, p[0], p[1]);
                ((x * 1e6).round() as i64, (y * 1e6).round() as i64)
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn centered_contact_is_symmetric() {
        let m = block(30, 5);
        let (tagged, report) = apply_regions(&m, &ContactSpec::centered(4.0, 0.1), None).unwrap();
        assert_eq!(report.drive_nodes, 5);
        assert_eq!(report.contact_elements, 12);
        let base = plane_keys(&tagged, &tagged.drive_nodes, 0);
        for op in 1..8 {
            assert_eq!(plane_keys(&tagged, &tagged.drive_nodes, op), base);
        }
        for &e in &tagged.contact_elements {
            assert_eq!(tagged.sigma[e], 0.1);
        }
    }

    #[test]
    fn coarse_grid_contact_snaps_to_cell() {
        let m = block(15, 3);
        let (_, report) = apply_regions(&m, &ContactSpec::centered(4.0, 1.0), None).unwrap();
        assert_eq!(report.drive_nodes, 4);
    }

    #[test]
    fn contact_outside_face_rejected() {
        let m = block(10, 2);
        assert!(apply_regions(&m, &ContactSpec::at(29.0, 0.0, 4.0, 1.0), None).is_err());
        assert!(apply_regions(&m, &ContactSpec::centered(4.0, -1.0), None).is_err());
    }

    #[test]
    fn full_coverage_dots() {
        let m = block(30, 5);
        let mut adh = AdhesionSpec { dots_per_side: 5, dot_diameter: 0.0, sigma_in: 1.0, sigma_out: 1e-9, layer: 2 };
        adh.dot_diameter = adh.full_coverage_diameter(60.0);
        let (tagged, report) = apply_regions(&m, &ContactSpec::centered(4.0, 1.0), Some(&adh)).unwrap();
        assert_eq!(report.in_dot_elements, Some(900));
        assert!(tagged.interface_elements.iter().all(|&e| tagged.sigma[e] == 1.0));
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn vanishing_dots_warn() {
        let m = block(30, 5);
        let adh = AdhesionSpec { dots_per_side: 5, dot_diameter: 1e-6, sigma_in: 1.0, sigma_out: 1e-9, layer: 2 };
        let (tagged, report) = apply_regions(&m, &ContactSpec::centered(4.0, 1.0), Some(&adh)).unwrap();
        assert_eq!(report.in_dot_elements, Some(0));
        assert_eq!(report.warnings.len(), 1);
        assert!(tagged.interface_elements.iter().all(|&e| tagged.sigma[e] == 1e-9));
    }

    #[test]
    fn dot_count_monotone_in_diameter() {
        let m = block(30, 5);
        let mut last = 0;
        for d in [2.0, 4.0, 6.0, 7.22, 9.0, 12.0, 16.0] {
            let adh = AdhesionSpec { dots_per_side: 5, dot_diameter: d, sigma_in: 1.0, sigma_out: 1e-9, layer: 2 };
            let (_, r) = apply_regions(&m, &ContactSpec::centered(4.0, 1.0), Some(&adh)).unwrap();
            let n = r.in_dot_elements.unwrap();
            assert!(n >= last);
            last = n;
        }
    }
}
