//! Thin-shell sensitivity matrix.
//!
//! The reconstruction unknown is a per-element contact coupling `k_e`
//! (conductance density times element area). Around the no-contact baseline a
//! coupling `k_e` injects current `k_e * v_cc` into element `e`, shared equally
//! by its three nodes, so frame readings are linear in `k`. Column `e` of the
//! matrix is the frame produced by unit coupling at `e`.
//!
//! Columns are not built one source at a time. For a fixed ground, the reading
//! of pad `m` due to a nodal source `s` is `M_m K^-1 s = psi_m . s` with
//! `K psi_m = M_m^T` (`K` symmetric), so one factorization and one adjoint
//! solve per measuring pad give all columns of that ground's block.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::{assemble, DirichletSet, DirichletSolver, StiffnessSystem};
use crate::fingerprint;
use crate::mesh::{build_shell_mesh, ElectrodeLayout, Mesh, MeshFlavor};
use crate::protocol::protocol_fingerprint;

const MAGIC: &[u8; 8] = b"TTJAC001";

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols`.
    pub data: Vec<f64>,
    pub v_cc: f64,
    pub shell_fingerprint: u64,
    pub protocol_fingerprint: u64,
    pub width: f64,
    pub depth: f64,
    pub divisions: usize,
    pub layout: ElectrodeLayout,
}

impl JacobianMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    /// `J x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Rebuilds the shell mesh the matrix was computed on and checks its
    /// fingerprint.
    pub fn shell_mesh(&self) -> Result<Mesh> {
        let m = build_shell_mesh(self.width, self.depth, self.divisions, self.layout, 1.0)?;
        if m.fingerprint() != self.shell_fingerprint {
            return Err(Error::contract(format!(
                "rebuilt shell mesh fingerprint {} does not match stored {}",
                fingerprint::format(m.fingerprint()),
                fingerprint::format(self.shell_fingerprint)
            )));
        }
        Ok(m)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.rows as u64, self.cols as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.v_cc.to_le_bytes())?;
        w.write_all(&self.shell_fingerprint.to_le_bytes())?;
        w.write_all(&self.protocol_fingerprint.to_le_bytes())?;
        w.write_all(&self.width.to_le_bytes())?;
        w.write_all(&self.depth.to_le_bytes())?;
        w.write_all(&(self.divisions as u64).to_le_bytes())?;
        w.write_all(&(self.layout.per_side as u64).to_le_bytes())?;
        w.write_all(&self.layout.diameter.to_le_bytes())?;
        w.write_all(&self.layout.pitch.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |reason: &str| Error::Parse { location: "jacobian header".into(), reason: reason.into() };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a tomotact Jacobian file (bad magic)"));
        }
        let mut word = [0u8; 8];
        let mut u64_ = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let rows = u64_(&mut r)? as usize;
        let cols = u64_(&mut r)? as usize;
        let v_cc = f64::from_bits(u64_(&mut r)?);
        let shell_fingerprint = u64_(&mut r)?;
        let protocol_fingerprint = u64_(&mut r)?;
        let width = f64::from_bits(u64_(&mut r)?);
        let depth = f64::from_bits(u64_(&mut r)?);
        let divisions = u64_(&mut r)? as usize;
        let per_side = u64_(&mut r)? as usize;
        let diameter = f64::from_bits(u64_(&mut r)?);
        let pitch = f64::from_bits(u64_(&mut r)?);
        let n = rows.checked_mul(cols).filter(|&n| n <= 1 << 28).ok_or_else(|| bad("implausible matrix size"))?;
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self {
            rows,
            cols,
            data,
            v_cc,
            shell_fingerprint,
            protocol_fingerprint,
            width,
            depth,
            divisions,
            layout: ElectrodeLayout { per_side, diameter, pitch },
        })
    }

    /// Inspection export: a `#` header line, then one row per frame entry.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        use crate::io::fmt_g;
        writeln!(
            w,
            "# tomotact-jacobian rows={} cols={} v_cc={} shell={} protocol={}",
            self.rows,
            self.cols,
            fmt_g(self.v_cc),
            fingerprint::format(self.shell_fingerprint),
            fingerprint::format(self.protocol_fingerprint)
        )?;
        let mut line = String::new();
        for r in 0..self.rows {
            line.clear();
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&fmt_g(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads a matrix back from [`write_csv`](Self::write_csv) output. Geometry
    /// fields are not part of the CSV and must be supplied.
    pub fn read_csv_values<R: BufRead>(r: R) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { location: format!("line {}", i + 1), reason: e.to_string() })?;
            out.push(row);
        }
        Ok(out)
    }
}

/// Nodal source vector of unit coupling at shell element `e`, before the
/// `v_cc` factor: one third of a unit current on each vertex.
pub fn element_source(shell: &Mesh, e: usize) -> Vec<f64> {
    let mut s = vec![0.0; shell.node_count()];
    for &n in shell.element_nodes(e) {
        s[n] += 1.0 / 3.0;
    }
    s
}

/// Adjoint fields `psi_m` for ground `g`: solutions with pad `g` grounded
/// and a unit current spread evenly over pad `m`. Entry `g` is all zeros.
pub fn adjoint_fields(shell: &Mesh, system: &StiffnessSystem, ground: usize) -> Result<Vec<Vec<f64>>> {
    let n_e = shell.electrodes.len();
    let gset = &shell.electrodes[ground];
    let bc = DirichletSet::from_groups(&[(gset, 0.0)])?;
    let solver = DirichletSolver::new(system, &bc.nodes())
        .map_err(|e| Error::numerical(format!("ground electrode {ground}: {e}")))?;
    let mut out = Vec::with_capacity(n_e);
    let mut src = vec![0.0; shell.node_count()];
    for m in 0..n_e {
        if m == ground {
            out.push(vec![0.0; shell.node_count()]);
            continue;
        }
        let set = &shell.electrodes[m];
        let w = 1.0 / set.len() as f64;
        for &n in set {
            src[n] = w;
        }
        out.push(solver.solve(&bc, Some(&src))?.potentials);
        for &n in set {
            src[n] = 0.0;
        }
    }
    Ok(out)
}

/// Builds the sensitivity matrix of a uniform-conductivity shell.
pub fn build_jacobian(shell: &Mesh, v_cc: f64, exec: Execution) -> Result<JacobianMatrix> {
    if shell.flavor != MeshFlavor::Shell {
        return Err(Error::contract("the sensitivity matrix is defined on a shell mesh"));
    }
    if !shell.is_uniform() {
        return Err(Error::contract("shell conductivity must be uniform for the sensitivity matrix"));
    }
    if !(v_cc > 0.0 && v_cc.is_finite()) {
        return Err(Error::config(format!("drive voltage must be positive, got {v_cc}")));
    }
    let n_e = shell.electrodes.len();
    if n_e < 2 {
        return Err(Error::contract("sensitivity matrix needs at least 2 electrodes"));
    }
    let cols = shell.element_count();
    let system = assemble(shell)?;
    let blocks = exec.try_map(n_e, |g| -> Result<Vec<f64>> {
        let psi = adjoint_fields(shell, &system, g)?;
        let mut block = vec![0.0; n_e * cols];
        for (m, field) in psi.iter().enumerate() {
            if m == g {
                continue;
            }
            let row = &mut block[m * cols..(m + 1) * cols];
            for (e, out) in row.iter_mut().enumerate() {
                let s: f64 = shell.element_nodes(e).iter().map(|&n| field[n]).sum();
                *out = v_cc * s / 3.0;
            }
        }
        Ok(block)
    })?;
    Ok(JacobianMatrix {
        rows: n_e * n_e,
        cols,
        data: blocks.concat(),
        v_cc,
        shell_fingerprint: shell.fingerprint(),
        protocol_fingerprint: protocol_fingerprint(shell.width, shell.depth, &shell.layout, v_cc),
        width: shell.width,
        depth: shell.depth,
        divisions: shell.nx,
        layout: shell.layout,
    })
}
