use super::ReconstructedImage;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Precomputed map from raster cells to the shell element containing each
/// cell centre.
#[derive(Debug, Clone)]
pub struct RasterSampler {
    n: usize,
    element: Vec<usize>,
}

impl RasterSampler {
    pub fn new(shell: &Mesh, n: usize) -> Self {
        let (w, d) = (shell.width, shell.depth);
        let (cw, ch) = shell.spacing();
        let mut element = Vec::with_capacity(n * n);
        for r in 0..n {
            let y = -d / 2.0 + (r as f64 + 0.5) * d / n as f64;
            let j = (((y + d / 2.0) / ch).floor() as usize).min(shell.ny - 1);
            for c in 0..n {
                let x = -w / 2.0 + (c as f64 + 0.5) * w / n as f64;
                let i = (((x + w / 2.0) / cw).floor() as usize).min(shell.nx - 1);
                let base = 2 * (i + shell.nx * j);
                // the cell's two triangles: keep the one the point is deepest inside
                let inside = |e: usize| min_barycentric(shell, e, x, y);
                element.push(if inside(base) >= inside(base + 1) { base } else { base + 1 });
            }
        }
        Self { n, element }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Element sampled by cell `(row, col)`.
    pub fn element_at(&self, row: usize, col: usize) -> usize {
        self.element[row * self.n + col]
    }

    pub fn sample(&self, values: &[f64]) -> Vec<f64> {
        self.element.iter().map(|&e| values[e]).collect()
    }
}

fn min_barycentric(shell: &Mesh, e: usize, x: f64, y: f64) -> f64 {
    let ids = shell.element_nodes(e);
    let [a, b, c] = [shell.nodes[ids[0]], shell.nodes[ids[1]], shell.nodes[ids[2]]];
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((x - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (y - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (y - a[1]) - (x - a[0]) * (b[1] - a[1])) / det;
    (1.0 - l1 - l2).min(l1).min(l2)
}

/// Nearest-element resampling of shell element values onto an `n x n` grid.
pub fn rasterize(shell: &Mesh, values: &[f64], n: usize) -> ReconstructedImage {
    let raster = RasterSampler::new(shell, n).sample(values);
    ReconstructedImage { values: values.to_vec(), raster, n, width: shell.width, depth: shell.depth }
}

/// Value-weighted mean of cell centres, negative values weighted as zero.
pub fn centroid(image: &ReconstructedImage) -> Result<(f64, f64)> {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for r in 0..image.n {
        for c in 0..image.n {
            let w = image.raster[r * image.n + c].max(0.0);
            if w > 0.0 {
                let (x, y) = image.cell_center(r, c);
                sw += w;
                sx += w * x;
                sy += w * y;
            }
        }
    }
    if !(sw > 0.0) || !sw.is_finite() {
        return Err(Error::numerical("centroid undefined: image has no positive values"));
    }
    Ok((sx / sw, sy / sw))
}

/// Twice the largest distance from `center` to a cell at or above half the
/// positive maximum, floored at one cell diagonal.
pub fn half_max_extent(image: &ReconstructedImage, center: (f64, f64)) -> Result<f64> {
    let max = image.raster.iter().copied().fold(0.0f64, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::numerical("half-max extent undefined: image has no positive values"));
    }
    let half = 0.5 * max;
    let mut reach = 0.0f64;
    for r in 0..image.n {
        for c in 0..image.n {
            if image.raster[r * image.n + c] >= half {
                let (x, y) = image.cell_center(r, c);
                reach = reach.max((x - center.0).hypot(y - center.1));
            }
        }
    }
    Ok((2.0 * reach).max(image.cell_diagonal()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_shell_mesh, ElectrodeLayout};

    fn one_pad() -> ElectrodeLayout {
        ElectrodeLayout { per_side: 1, diameter: 4.0, pitch: 60.0 }
    }

    fn image_from(f: impl Fn(f64, f64) -> f64, n: usize) -> ReconstructedImage {
        let mut img = ReconstructedImage::from_raster(vec![0.0; n * n], n, 60.0, 60.0);
        for r in 0..n {
            for c in 0..n {
                let (x, y) = img.cell_center(r, c);
                img.raster[r * n + c] = f(x, y);
            }
        }
        img
    }

    #[test]
    fn constant_values_fill_raster() {
        let s = build_shell_mesh(60.0, 60.0, 9, ElectrodeLayout::default(), 1.0).unwrap();
        let img = rasterize(&s, &vec![2.5; s.element_count()], 64);
        assert!(img.raster.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn single_element_hits_its_own_cells() {
        let s = build_shell_mesh(60.0, 60.0, 7, ElectrodeLayout::default(), 1.0).unwrap();
        for e in [0usize, 13, 48, 97] {
            let mut v = vec![0.0; s.element_count()];
            v[e] = 1.0;
            let img = rasterize(&s, &v, 64);
            for r in 0..64 {
                for c in 0..64 {
                    let (x, y) = img.cell_center(r, c);
                    let ids = s.element_nodes(e);
                    let p: Vec<[f64; 3]> = ids.iter().map(|&n| s.nodes[n]).collect();
                    // sign test of the three edges
                    let side = |a: [f64; 3], b: [f64; 3]| (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
                    let s = [side(p[0], p[1]), side(p[1], p[2]), side(p[2], p[0])];
                    let hit = img.raster[r * 64 + c] != 0.0;
                    // points on a shared edge may go to either neighbour
                    if s.iter().all(|&v| v > 1e-9) {
                        assert!(hit, "element {e} cell ({r},{c})");
                    } else if s.iter().any(|&v| v < -1e-9) {
                        assert!(!hit, "element {e} cell ({r},{c})");
                    }
                }
            }
        }
    }

    #[test]
    fn checkerboard_gives_quadrants() {
        let s = build_shell_mesh(60.0, 60.0, 2, one_pad(), 1.0).unwrap();
        // elements 2k, 2k+1 share square k = i + 2j
        let v: Vec<f64> = (0..8).map(|e| if ((e / 2) % 2 + (e / 2) / 2) % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let img = rasterize(&s, &v, 64);
        for r in 0..64 {
            for c in 0..64 {
                let want = if (r / 32 + c / 32) % 2 == 0 { 1.0 } else { 0.0 };
                assert_eq!(img.raster[r * 64 + c], want);
            }
        }
    }

    #[test]
    fn centroid_cases() {
        let img = image_from(|x, y| (-(x * x + y * y) / 50.0).exp(), 64);
        let (cx, cy) = centroid(&img).unwrap();
        assert!(cx.abs() < 0.47 && cy.abs() < 0.47);

        let mut single = ReconstructedImage::from_raster(vec![0.0; 64 * 64], 64, 60.0, 60.0);
        let (r, c) = (21, 42);
        single.raster[r * 64 + c] = 3.0;
        let want = single.cell_center(r, c);
        assert_eq!(centroid(&single).unwrap(), want);

        // negative lobes are ignored
        single.raster[0] = -10.0;
        assert_eq!(centroid(&single).unwrap(), want);

        let mut pair = ReconstructedImage::from_raster(vec![0.0; 61 * 61], 61, 61.0, 61.0);
        // 61 cells of 1 mm: cell 30 is centred at 0, cell 50 at 20
        pair.raster[30 * 61 + 30] = 1.0;
        pair.raster[30 * 61 + 50] = 1.0;
        let (x, y) = centroid(&pair).unwrap();
        assert!((x - 10.0).abs() < 1e-12 && y.abs() < 1e-12);

        assert!(centroid(&ReconstructedImage::from_raster(vec![-1.0; 64], 8, 60.0, 60.0)).is_err());
    }

    #[test]
    fn fwhm_of_gaussian_and_disc() {
        let sg = 5.0;
        let g = image_from(|x, y| (-(x * x + y * y) / (2.0 * sg * sg)).exp(), 64);
        let cell = 60.0 / 64.0;
        let want = 2.0 * (2.0 * 2f64.ln()).sqrt() * sg;
        let fwhm = half_max_extent(&g, (0.0, 0.0)).unwrap();
        assert!((fwhm - want).abs() <= cell, "{fwhm} vs {want}");

        let disc = image_from(|x, y| if x.hypot(y) <= 10.0 { 1.0 } else { 0.0 }, 64);
        assert!((half_max_extent(&disc, (0.0, 0.0)).unwrap() - 20.0).abs() <= cell);

        let doubled = ReconstructedImage { raster: g.raster.iter().map(|v| 2.0 * v).collect(), ..g.clone() };
        assert_eq!(half_max_extent(&doubled, (0.0, 0.0)).unwrap(), fwhm);
    }

    #[test]
    fn point_image_floors_at_cell_diagonal() {
        let mut img = ReconstructedImage::from_raster(vec![0.0; 64 * 64], 64, 60.0, 60.0);
        img.raster[64 * 10 + 5] = 1.0;
        let c = centroid(&img).unwrap();
        assert_eq!(half_max_extent(&img, c).unwrap(), img.cell_diagonal());
    }
}
