//! Snapshot matrices and the POD basis obtained from the Gram matrix.

use faer::Side;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{DnsSolution, PeriodicMesh};
use crate::loading::{psi_matrix, MacroStretch};

/// Provenance of one snapshot column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub sim: usize,
    /// 1-based increment number.
    pub inc: usize,
    pub stretch: MacroStretch,
}

/// Fluctuation snapshots `ũ = u − Ψω`, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub u: DMatrix<f64>,
    pub meta: Vec<SnapshotMeta>,
    pub fingerprint: [u8; 32],
}

/// One converged full-order run and the mesh it was computed on.
#[derive(Debug, Clone, Copy)]
pub struct DnsRecord<'a> {
    pub sim: usize,
    pub mesh: &'a PeriodicMesh,
    pub solutions: &'a [DnsSolution],
}

impl SnapshotSet {
    pub fn n_u(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.u.ncols()
    }

    /// Largest `|u_slave − u_master|` over all columns and pairings.
    pub fn periodicity_defect(&self, mesh: &PeriodicMesh) -> f64 {
        periodicity_defect(&self.u, mesh)
    }

    /// Concatenates the columns of `other`, keeping (sim, inc) order.
    pub fn merge(mut self, other: SnapshotSet) -> Result<SnapshotSet> {
        if self.fingerprint != other.fingerprint || self.n_u() != other.n_u() {
            return Err(mesh_mismatch(&self.fingerprint, &other.fingerprint));
        }
        let mut cols: Vec<(SnapshotMeta, DVector<f64>)> = self
            .meta
            .drain(..)
            .enumerate()
            .map(|(j, m)| (m, self.u.column(j).into_owned()))
            .chain(
                other
                    .meta
                    .into_iter()
                    .enumerate()
                    .map(|(j, m)| (m, other.u.column(j).into_owned())),
            )
            .collect();
        cols.sort_by_key(|(m, _)| (m.sim, m.inc));
        let n_u = self.u.nrows();
        let mut u = DMatrix::zeros(n_u, cols.len());
        for (j, (_, c)) in cols.iter().enumerate() {
            u.set_column(j, c);
        }
        Ok(SnapshotSet {
            u,
            meta: cols.into_iter().map(|(m, _)| m).collect(),
            fingerprint: self.fingerprint,
        })
    }
}

/// Lower-case hex encoding of a digest.
pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn mesh_mismatch(expected: &[u8; 32], found: &[u8; 32]) -> Error {
    Error::Fingerprint {
        expected: hex(expected),
        found: hex(found),
    }
}

pub fn periodicity_defect(columns: &DMatrix<f64>, mesh: &PeriodicMesh) -> f64 {
    let mut worst = 0.0f64;
    for col in columns.column_iter() {
        for p in &mesh.pairings {
            for i in 0..2 {
                worst = worst.max((col[2 * p.slave + i] - col[2 * p.master + i]).abs());
            }
        }
    }
    worst
}

/// Fluctuation columns from converged runs, every `stride`-th increment
/// (the last increment of each run is always kept). Columns are ordered by
/// simulation id, then increment.
pub fn collect_snapshots(records: &[DnsRecord<'_>], stride: usize) -> Result<SnapshotSet> {
    let first = records
        .first()
        .ok_or_else(|| Error::Empty("no simulations given".into()))?;
    if stride == 0 {
        return Err(Error::InvalidConfig(
            "snapshot stride must be at least 1".into(),
        ));
    }
    let fingerprint = first.mesh.fingerprint();
    for r in records {
        let f = r.mesh.fingerprint();
        if f != fingerprint {
            return Err(mesh_mismatch(&fingerprint, &f));
        }
    }
    let psi = psi_matrix(first.mesh);
    let mut order: Vec<&DnsRecord<'_>> = records.iter().collect();
    order.sort_by_key(|r| r.sim);

    let mut cols = Vec::new();
    let mut meta = Vec::new();
    for r in order {
        let n = r.solutions.len();
        for (k, sol) in r.solutions.iter().enumerate() {
            let inc = k + 1;
            if inc % stride != 0 && inc != n {
                continue;
            }
            let hom = &psi * sol.stretch.omega();
            cols.push(DVector::from_iterator(
                sol.u.len(),
                sol.u.iter().zip(hom.iter()).map(|(a, b)| a - b),
            ));
            meta.push(SnapshotMeta {
                sim: r.sim,
                inc,
                stretch: sol.stretch,
            });
        }
    }
    if cols.is_empty() {
        return Err(Error::Empty("simulations contain no increments".into()));
    }
    Ok(SnapshotSet {
        u: DMatrix::from_columns(&cols),
        meta,
        fingerprint,
    })
}

/// Orthonormal basis `Φ`, the homogeneous interpolator `Ψ` and the snapshot
/// singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    pub phi: DMatrix<f64>,
    /// Non-increasing, length `min(n_t, n_u)`.
    pub singular_values: Vec<f64>,
    pub psi: DMatrix<f64>,
    pub fingerprint: [u8; 32],
}

/// Eigenvalues below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Snapshot entries below this multiple of the cell size are round-off.
pub const FLUCTUATION_FLOOR: f64 = 1e-10;

impl ReducedBasis {
    pub fn n_u(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_b(&self) -> usize {
        self.phi.ncols()
    }

    /// Keeps the first `n_b` columns.
    pub fn truncated(&self, n_b: usize) -> Result<Self> {
        if n_b == 0 || n_b > self.n_b() {
            return Err(Error::Rank {
                requested: n_b,
                rank: self.n_b(),
            });
        }
        Ok(Self {
            phi: self.phi.columns(0, n_b).into_owned(),
            ..self.clone()
        })
    }

    /// Checks that the basis belongs to `mesh`, then attaches its `Ψ`.
    pub fn check_mesh(&self, mesh: &PeriodicMesh) -> Result<()> {
        let f = mesh.fingerprint();
        if f != self.fingerprint {
            return Err(mesh_mismatch(&self.fingerprint, &f));
        }
        Ok(())
    }

    /// SHA-256 of the mesh fingerprint and the column-major bytes of `Φ`.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(b"basis");
        h.update(self.fingerprint);
        h.update((self.n_u() as u64).to_le_bytes());
        h.update((self.n_b() as u64).to_le_bytes());
        for v in self.phi.iter() {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }

    /// `Ψω + Φα`.
    pub fn reconstruct(
        &self,
        omega: &nalgebra::Vector3<f64>,
        alpha: &DVector<f64>,
    ) -> DVector<f64> {
        &self.psi * omega + &self.phi * alpha
    }
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigen-decomposition of the Gram matrix `UᵀU`, eigenvalues descending.
fn gram_eigen(u: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let uf = to_faer(u);
    let gram = uf.transpose() * &uf;
    let evd = gram
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearSolve(format!("Gram eigendecomposition failed: {e:?}")))?;
    let n = gram.nrows();
    let s = evd.S().column_vector();
    let v = evd.U();
    let values = (0..n).rev().map(|k| s[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| v[(i, n - 1 - j)]);
    Ok((values, vectors))
}

fn numerical_rank(eigenvalues: &[f64]) -> usize {
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return 0;
    }
    eigenvalues
        .iter()
        .take_while(|&&l| l >= RANK_TOLERANCE * top)
        .count()
}

/// Makes the largest-magnitude entry of a column positive.
pub(crate) fn fix_sign(mut col: nalgebra::DVectorViewMut<'_, f64>) {
    let k = col.iamax();
    if col[k] < 0.0 {
        col.neg_mut();
    }
}

/// Modified Gram-Schmidt, applied in place.
fn orthonormalize(phi: &mut DMatrix<f64>) {
    for j in 0..phi.ncols() {
        for k in 0..j {
            let d = phi.column(k).dot(&phi.column(j));
            let ck = phi.column(k).into_owned();
            phi.column_mut(j).axpy(-d, &ck, 1.0);
        }
        let n = phi.column(j).norm();
        phi.column_mut(j).unscale_mut(n);
    }
}

/// Numerical rank of the snapshot matrix, using the Gram eigenvalues.
pub fn snapshot_rank(snapshots: &SnapshotSet) -> Result<usize> {
    Ok(numerical_rank(&gram_eigen(&snapshots.u)?.0))
}

/// `Φ` and the singular values from the Gram route.
pub fn gram_pod(u: &DMatrix<f64>, n_b: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (values, vectors) = gram_eigen(u)?;
    let rank = numerical_rank(&values);
    if n_b == 0 || n_b > rank {
        return Err(Error::Rank {
            requested: n_b,
            rank,
        });
    }
    let singular_values = values
        .iter()
        .take(u.ncols().min(u.nrows()))
        .map(|&l| l.max(0.0).sqrt())
        .collect::<Vec<_>>();
    let mut phi = u * vectors.columns(0, n_b);
    for j in 0..n_b {
        phi.column_mut(j).unscale_mut(singular_values[j]);
    }
    // Columns tied to small singular values lose orthogonality in the
    // squared problem; two sweeps restore it to round-off.
    orthonormalize(&mut phi);
    orthonormalize(&mut phi);
    for j in 0..n_b {
        fix_sign(phi.column_mut(j));
    }
    Ok((phi, singular_values))
}

/// POD basis of `n_b` columns via the eigen-decomposition of `UᵀU`.
pub fn build_basis(
    snapshots: &SnapshotSet,
    n_b: usize,
    mesh: &PeriodicMesh,
) -> Result<ReducedBasis> {
    if snapshots.n_t() == 0 {
        return Err(Error::Empty("snapshot set has no columns".into()));
    }
    snapshots_match(snapshots, mesh)?;
    // a homogeneous cell has no fluctuation to reduce
    if snapshots.u.amax() < FLUCTUATION_FLOOR * mesh.size {
        return Err(Error::Rank { requested: n_b, rank: 0 });
    }
    let (phi, singular_values) = gram_pod(&snapshots.u, n_b)?;
    Ok(ReducedBasis {
        phi,
        singular_values,
        psi: psi_matrix(mesh),
        fingerprint: snapshots.fingerprint,
    })
}

fn snapshots_match(snapshots: &SnapshotSet, mesh: &PeriodicMesh) -> Result<()> {
    let f = mesh.fingerprint();
    if f != snapshots.fingerprint {
        return Err(mesh_mismatch(&snapshots.fingerprint, &f));
    }
    if mesh.n_dofs() != snapshots.n_u() {
        return Err(Error::Shape(format!(
            "snapshots have {} rows, mesh has {} dofs",
            snapshots.n_u(),
            mesh.n_dofs()
        )));
    }
    Ok(())
}

/// `α = Φᵀũ`.
pub fn project(u_fluct: &DVector<f64>, basis: &ReducedBasis) -> Result<DVector<f64>> {
    if u_fluct.len() != basis.n_u() {
        return Err(Error::Shape(format!(
            "field of length {} for a basis with {} rows",
            u_fluct.len(),
            basis.n_u()
        )));
    }
    Ok(basis.phi.tr_mul(u_fluct))
}

/// `‖U − ΦΦᵀU‖_F` using the first `n_b` columns of `Φ`.
pub fn reconstruction_error(u: &DMatrix<f64>, basis: &ReducedBasis, n_b: usize) -> f64 {
    let phi = basis.phi.columns(0, n_b.min(basis.n_b()));
    let coeff = phi.tr_mul(u);
    (u - phi * coeff).norm()
}
