//! Snapshot (`RVESNAP1` + CSV sidecar) and basis (`RVEBAS01`) files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::basis::{mesh_mismatch, ReducedBasis, SnapshotMeta, SnapshotSet};
use crate::error::{Error, Result};
use crate::fem::PeriodicMesh;
use crate::io::{
    expect_eof, read_f64s, read_len, read_magic, write_f64s, write_magic, write_u64, MAX_ENTRIES,
};
use crate::loading::{psi_matrix, MacroStretch};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"RVESNAP1";
pub const BASIS_MAGIC: &[u8; 8] = b"RVEBAS01";

/// Path of the metadata sidecar belonging to a snapshot file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

pub fn write_snapshot_matrix(w: &mut impl Write, u: &DMatrix<f64>) -> Result<()> {
    write_magic(w, SNAPSHOT_MAGIC)?;
    write_u64(w, u.nrows() as u64)?;
    write_u64(w, u.ncols() as u64)?;
    // nalgebra storage is column-major already
    write_f64s(w, u.as_slice())
}

pub fn read_snapshot_matrix(r: &mut impl Read) -> Result<DMatrix<f64>> {
    read_magic(r, SNAPSHOT_MAGIC)?;
    let n_u = read_len(r, "n_u", MAX_ENTRIES)?;
    let n_t = read_len(r, "n_t", MAX_ENTRIES)?;
    if (n_u as u64).saturating_mul(n_t as u64) > MAX_ENTRIES {
        return Err(Error::Format(format!(
            "snapshot matrix {n_u}×{n_t} is too large"
        )));
    }
    let data = read_f64s(r, n_u * n_t)?;
    expect_eof(r)?;
    Ok(DMatrix::from_vec(n_u, n_t, data))
}

pub fn write_meta_csv(w: &mut impl Write, meta: &[SnapshotMeta]) -> Result<()> {
    writeln!(w, "sim,inc,U11,U22,U12")?;
    for m in meta {
        writeln!(
            w,
            "{},{},{},{},{}",
            m.sim, m.inc, m.stretch.u11, m.stretch.u22, m.stretch.u12
        )?;
    }
    Ok(())
}

pub fn read_meta_csv(r: impl BufRead) -> Result<Vec<SnapshotMeta>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if k == 0 {
            if line.trim() != "sim,inc,U11,U22,U12" {
                return Err(Error::Format(format!("unexpected sidecar header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Format(format!(
                "sidecar line {}: expected 5 fields",
                k + 1
            )));
        }
        let bad = |e: &dyn std::fmt::Display| Error::Format(format!("sidecar line {}: {e}", k + 1));
        out.push(SnapshotMeta {
            sim: f[0].trim().parse().map_err(|e| bad(&e))?,
            inc: f[1].trim().parse().map_err(|e| bad(&e))?,
            stretch: MacroStretch {
                u11: f[2].trim().parse().map_err(|e| bad(&e))?,
                u22: f[3].trim().parse().map_err(|e| bad(&e))?,
                u12: f[4].trim().parse().map_err(|e| bad(&e))?,
            },
        });
    }
    Ok(out)
}

/// Writes the binary matrix and its CSV sidecar.
pub fn save_snapshots(path: &Path, set: &SnapshotSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot_matrix(&mut w, &set.u)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(sidecar_path(path))?);
    write_meta_csv(&mut w, &set.meta)?;
    w.flush()?;
    Ok(())
}

/// Reads a snapshot file for `mesh`; the row count must match its dofs.
pub fn load_snapshots(path: &Path, mesh: &PeriodicMesh) -> Result<SnapshotSet> {
    let u = read_snapshot_matrix(&mut BufReader::new(File::open(path)?))?;
    let meta = read_meta_csv(BufReader::new(File::open(sidecar_path(path))?))?;
    if meta.len() != u.ncols() {
        return Err(Error::Shape(format!(
            "{} sidecar rows for {} snapshot columns",
            meta.len(),
            u.ncols()
        )));
    }
    if u.nrows() != mesh.n_dofs() {
        return Err(Error::Shape(format!(
            "snapshots have {} rows, mesh has {} dofs",
            u.nrows(),
            mesh.n_dofs()
        )));
    }
    Ok(SnapshotSet {
        u,
        meta,
        fingerprint: mesh.fingerprint(),
    })
}

pub fn write_basis(w: &mut impl Write, basis: &ReducedBasis) -> Result<()> {
    write_magic(w, BASIS_MAGIC)?;
    write_u64(w, basis.n_u() as u64)?;
    write_u64(w, basis.n_b() as u64)?;
    write_u64(w, basis.singular_values.len() as u64)?;
    write_f64s(w, &basis.singular_values)?;
    write_f64s(w, basis.phi.as_slice())?;
    w.write_all(&basis.fingerprint)?;
    Ok(())
}

/// Reads a basis and checks that it was built on `mesh`; `Ψ` is rebuilt from
/// the mesh.
pub fn read_basis(r: &mut impl Read, mesh: &PeriodicMesh) -> Result<ReducedBasis> {
    read_magic(r, BASIS_MAGIC)?;
    let n_u = read_len(r, "n_u", MAX_ENTRIES)?;
    let n_b = read_len(r, "n_b", MAX_ENTRIES)?;
    let n_s = read_len(r, "singular value count", MAX_ENTRIES)?;
    if (n_u as u64).saturating_mul(n_b as u64) > MAX_ENTRIES {
        return Err(Error::Format(format!("basis {n_u}×{n_b} is too large")));
    }
    let singular_values = read_f64s(r, n_s)?;
    let phi = DMatrix::from_vec(n_u, n_b, read_f64s(r, n_u * n_b)?);
    let mut fingerprint = [0u8; 32];
    r.read_exact(&mut fingerprint)?;
    expect_eof(r)?;
    let found = mesh.fingerprint();
    if found != fingerprint {
        return Err(mesh_mismatch(&fingerprint, &found));
    }
    if n_u != mesh.n_dofs() {
        return Err(Error::Shape(format!(
            "basis has {n_u} rows, mesh has {} dofs",
            mesh.n_dofs()
        )));
    }
    Ok(ReducedBasis {
        phi,
        singular_values,
        psi: psi_matrix(mesh),
        fingerprint,
    })
}

pub fn save_basis(path: &Path, basis: &ReducedBasis) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_basis(&mut w, basis)?;
    w.flush()?;
    Ok(())
}

pub fn load_basis(path: &Path, mesh: &PeriodicMesh) -> Result<ReducedBasis> {
    read_basis(&mut BufReader::new(File::open(path)?), mesh)
}
