//! Variable-band (skyline) Cholesky factorization.
//!
//! Structured-grid stiffness matrices with vertical-fastest node numbering have
//! a narrow, nearly constant profile, so a profile solver is both simple and
//! fast at desk scale.

use crate::error::{Error, Result};

/// Lower-triangular profile storage: row `i` holds columns `first[i]..=i`.
#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineMatrix {
    /// Allocates a zero matrix with the given per-row first column.
    pub fn with_profile(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut start = Vec::with_capacity(n + 1);
        let mut offset = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "profile column {f} beyond diagonal in row {i}");
            start.push(offset);
            offset += i - f + 1;
        }
        start.push(offset);
        Self { n, first, start, data: vec![0.0; offset] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries (lower triangle including diagonal).
    pub fn stored(&self) -> usize {
        self.data.len()
    }

    /// Adds `v` to entry `(i, j)` with `j <= i`; the entry must be inside the profile.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && j >= self.first[i]);
        self.data[self.start[i] + j - self.first[i]] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if j < self.first[i] {
            0.0
        } else {
            self.data[self.start[i] + j - self.first[i]]
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.start[i]..self.start[i + 1]]
    }

    /// In-place `L L^T` factorization.
    pub fn factor(mut self) -> Result<SkylineCholesky> {
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0f64;
        for i in 0..self.n {
            let fi = self.first[i];
            let (head, tail) = self.data.split_at_mut(self.start[i]);
            let row_i = &mut tail[..self.start[i + 1] - self.start[i]];
            for j in fi..i {
                let fj = self.first[j];
                let row_j = &head[self.start[j]..self.start[j + 1]];
                let k0 = fi.max(fj);
                let li = &row_i[k0 - fi..j - fi];
                let lj = &row_j[k0 - fj..j - fj];
                let s = row_i[j - fi] - dot(li, lj);
                row_i[j - fi] = s / row_j[j - fj];
            }
            let diag = row_i[i - fi];
            let off = &row_i[..i - fi];
            let d = diag - dot(off, off);
            if !(d > 1e-14 * diag.abs()) || !d.is_finite() {
                return Err(Error::numerical(format!(
                    "stiffness matrix not positive definite at reduced row {i}: pivot {d:.3e} \
                     (diagonal {diag:.3e}, pivot range so far [{min_pivot:.3e}, {max_pivot:.3e}])"
                )));
            }
            let l = d.sqrt();
            min_pivot = min_pivot.min(d);
            max_pivot = max_pivot.max(d);
            row_i[i - fi] = l;
        }
        Ok(SkylineCholesky { l: self, min_pivot, max_pivot })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Factor produced by [`SkylineMatrix::factor`]. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    l: SkylineMatrix,
    pub min_pivot: f64,
    pub max_pivot: f64,
}

impl SkylineCholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    /// Ratio of extreme squared pivots; a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        self.max_pivot / self.min_pivot
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.l.n);
        let l = &self.l;
        for i in 0..l.n {
            let fi = l.first[i];
            let row = l.row(i);
            let s = b[i] - dot(&row[..i - fi], &b[fi..i]);
            b[i] = s / row[i - fi];
        }
        for i in (0..l.n).rev() {
            let fi = l.first[i];
            let row = l.row(i);
            let xi = b[i] / row[i - fi];
            b[i] = xi;
            for (bk, lk) in b[fi..i].iter_mut().zip(&row[..i - fi]) {
                *bk -= lk * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
