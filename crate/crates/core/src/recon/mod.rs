//! Tikhonov reconstruction and image geometry.

mod geometry;

pub use geometry::{centroid, half_max_extent, rasterize, RasterSampler};

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint;
use crate::io::fmt_g;
use crate::jacobian::JacobianMatrix;
use crate::mesh::Mesh;
use crate::protocol::PotentialFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Regularization weight, against frames in volts.
    pub lambda_sq: f64,
    /// Raster cells per side.
    pub raster: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self { lambda_sq: 5000.0, raster: 64 }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_sq > 0.0 && self.lambda_sq.is_finite()) {
            return Err(Error::config(format!("lambda_sq must be positive, got {}", self.lambda_sq)));
        }
        if self.raster < 8 {
            return Err(Error::config(format!("raster must be at least 8 cells per side, got {}", self.raster)));
        }
        Ok(())
    }
}

/// Factored Tikhonov operator `v -> (J^T J + lambda^2 I)^-1 J^T v`.
///
/// With more unknowns than data it factors the `rows x rows` matrix
/// `J J^T + lambda^2 I` and evaluates the equal expression
/// `J^T (J J^T + lambda^2 I)^-1 v`; otherwise it factors the normal matrix.
#[derive(Debug, Clone)]
pub struct TikhonovSolver {
    j: DMatrix<f64>,
    lambda_sq: f64,
    chol: Cholesky<f64, Dyn>,
    dual: bool,
}

impl TikhonovSolver {
    pub fn new(j: &JacobianMatrix, lambda_sq: f64) -> Result<Self> {
        Self::from_dense(j.rows, j.cols, &j.data, lambda_sq)
    }

    /// From a row-major dense matrix.
    pub fn from_dense(rows: usize, cols: usize, data: &[f64], lambda_sq: f64) -> Result<Self> {
        if data.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::contract(format!("matrix data has {} entries, expected {rows} x {cols}", data.len())));
        }
        if !(lambda_sq > 0.0 && lambda_sq.is_finite()) {
            return Err(Error::config(format!("lambda_sq must be positive, got {lambda_sq}")));
        }
        let j = DMatrix::from_row_slice(rows, cols, data);
        let dual = cols > rows;
        let mut gram = if dual { &j * j.transpose() } else { j.transpose() * &j };
        for i in 0..gram.nrows() {
            gram[(i, i)] += lambda_sq;
        }
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::numerical("regularized normal matrix is not positive definite"))?;
        Ok(Self { j, lambda_sq, chol, dual })
    }

    pub fn lambda_sq(&self) -> f64 {
        self.lambda_sq
    }

    pub fn rows(&self) -> usize {
        self.j.nrows()
    }

    pub fn cols(&self) -> usize {
        self.j.ncols()
    }

    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows() {
            return Err(Error::contract(format!("data vector has {} entries, expected {}", v.len(), self.rows())));
        }
        let v = DVector::from_column_slice(v);
        let x = if self.dual {
            self.j.transpose() * self.chol.solve(&v)
        } else {
            self.chol.solve(&(self.j.transpose() * v))
        };
        Ok(x.as_slice().to_vec())
    }
}

/// Per-element reconstruction and its raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedImage {
    /// One value per shell element, arbitrary units.
    pub values: Vec<f64>,
    /// `n * n` cells, row-major; row 0 is the lowest `y`, column 0 the lowest `x`.
    pub raster: Vec<f64>,
    pub n: usize,
    /// Sensor width and depth, mm.
    pub width: f64,
    pub depth: f64,
}

impl ReconstructedImage {
    pub fn cell_size(&self) -> (f64, f64) {
        (self.width / self.n as f64, self.depth / self.n as f64)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let (dx, dy) = self.cell_size();
        (-self.width / 2.0 + (col as f64 + 0.5) * dx, -self.depth / 2.0 + (row as f64 + 0.5) * dy)
    }

    pub fn cell_diagonal(&self) -> f64 {
        let (dx, dy) = self.cell_size();
        dx.hypot(dy)
    }

    /// Builds an image directly from raster values (no element values).
    pub fn from_raster(raster: Vec<f64>, n: usize, width: f64, depth: f64) -> Self {
        assert_eq!(raster.len(), n * n);
        Self { values: Vec::new(), raster, n, width, depth }
    }

    /// Raster as CSV, one raster row per line starting from the lowest `y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for r in 0..self.n {
            let line: Vec<String> = self.raster[r * self.n..(r + 1) * self.n].iter().map(|v| fmt_g(*v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Whole raster on one comma-separated line (stream output).
    pub fn raster_line(&self) -> String {
        let mut s = String::with_capacity(self.raster.len() * 12);
        for (i, v) in self.raster.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&fmt_g(*v));
        }
        s
    }

    /// 8-bit binary PGM with min-max scaling, highest `y` on the top row.
    pub fn write_pgm<W: Write>(&self, w: W) -> Result<()> {
        crate::io::write_pgm(w, &self.raster, self.n, self.n)
    }
}

/// Tikhonov solver plus raster sampling for one shell Jacobian.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    solver: TikhonovSolver,
    sampler: RasterSampler,
    protocol_fingerprint: u64,
    width: f64,
    depth: f64,
}

impl Reconstructor {
    pub fn new(j: &JacobianMatrix, cfg: &ReconConfig) -> Result<Self> {
        cfg.validate()?;
        let shell = j.shell_mesh()?;
        Self::with_shell(j, &shell, cfg)
    }

    /// As [`new`](Self::new) with the shell mesh already at hand.
    pub fn with_shell(j: &JacobianMatrix, shell: &Mesh, cfg: &ReconConfig) -> Result<Self> {
        cfg.validate()?;
        if shell.element_count() != j.cols {
            return Err(Error::contract(format!(
                "shell has {} elements but the Jacobian has {} columns",
                shell.element_count(),
                j.cols
            )));
        }
        Ok(Self {
            solver: TikhonovSolver::new(j, cfg.lambda_sq)?,
            sampler: RasterSampler::new(shell, cfg.raster),
            protocol_fingerprint: j.protocol_fingerprint,
            width: shell.width,
            depth: shell.depth,
        })
    }

    pub fn solver(&self) -> &TikhonovSolver {
        &self.solver
    }

    /// Checks the frame's protocol fingerprint and reconstructs.
    pub fn reconstruct(&self, frame: &PotentialFrame) -> Result<ReconstructedImage> {
        if frame.fingerprint != self.protocol_fingerprint {
            return Err(Error::contract(format!(
                "frame protocol fingerprint {} does not match Jacobian protocol fingerprint {}",
                fingerprint::format(frame.fingerprint),
                fingerprint::format(self.protocol_fingerprint)
            )));
        }
        self.reconstruct_values(&frame.values)
    }

    /// Reconstructs a bare data vector (no fingerprint check).
    pub fn reconstruct_values(&self, v: &[f64]) -> Result<ReconstructedImage> {
        let values = self.solver.solve(v)?;
        let raster = self.sampler.sample(&values);
        Ok(ReconstructedImage { values, raster, n: self.sampler.n(), width: self.width, depth: self.depth })
    }
}
