//! Isochoric macroscale stretch paths and the homogeneous displacement
//! interpolator `u_hom = Ψ·ω`.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::PeriodicMesh;

pub const U11_BOUNDS: (f64, f64) = (0.75, 1.25);
pub const U22_BOUNDS: (f64, f64) = (0.75, 1.25);
pub const U12_BOUNDS: (f64, f64) = (-0.75, 0.75);

const MAX_REDRAWS: usize = 100;

fn inside(x: f64, (lo, hi): (f64, f64)) -> bool {
    x > lo && x < hi
}

/// Symmetric right stretch tensor of the macroscale deformation (plane strain).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroStretch {
    pub u11: f64,
    pub u22: f64,
    pub u12: f64,
}

impl MacroStretch {
    pub const IDENTITY: Self = Self {
        u11: 1.0,
        u22: 1.0,
        u12: 0.0,
    };

    pub fn det(&self) -> f64 {
        self.u11 * self.u22 - self.u12 * self.u12
    }

    pub fn within_bounds(&self) -> bool {
        inside(self.u11, U11_BOUNDS) && inside(self.u22, U22_BOUNDS) && inside(self.u12, U12_BOUNDS)
    }

    /// `ω = (U11 − 1, U22 − 1, U12)`.
    pub fn omega(&self) -> Vector3<f64> {
        Vector3::new(self.u11 - 1.0, self.u22 - 1.0, self.u12)
    }

    /// Plane-strain 3×3 tensor with unit out-of-plane stretch.
    pub fn tensor(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.u11, self.u12, 0.0, self.u12, self.u22, 0.0, 0.0, 0.0, 1.0,
        )
    }

    /// `(U − I)·x` for an in-plane vector.
    pub fn displacement(&self, x: [f64; 2]) -> [f64; 2] {
        [
            (self.u11 - 1.0) * x[0] + self.u12 * x[1],
            self.u12 * x[0] + (self.u22 - 1.0) * x[1],
        ]
    }

    /// Linear interpolation in the (U11, U12) plane, completed isochorically.
    pub fn lerp(&self, other: &Self, t: f64) -> Result<Self> {
        complete_stretch(
            self.u11 + t * (other.u11 - self.u11),
            self.u12 + t * (other.u12 - self.u12),
        )
    }
}

/// Completes `(U11, U12)` with `U22 = (1 + U12²)/U11` so that `det U = 1`.
pub fn complete_stretch(u11: f64, u12: f64) -> Result<MacroStretch> {
    if !(u11 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "U11 must be positive, got {u11}"
        )));
    }
    let u22 = (1.0 + u12 * u12) / u11;
    if !(u22 >= U22_BOUNDS.0 && u22 <= U22_BOUNDS.1) {
        return Err(Error::OutOfBounds(format!(
            "U22 = {u22} for (U11, U12) = ({u11}, {u12})"
        )));
    }
    Ok(MacroStretch { u11, u22, u12 })
}

fn feasible(u11: f64, u12: f64) -> bool {
    inside(u11, U11_BOUNDS)
        && inside(u12, U12_BOUNDS)
        && u11 > 0.0
        && inside((1.0 + u12 * u12) / u11, U22_BOUNDS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Cyclic,
    Random,
}

impl std::fmt::Display for PathKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PathKind::Cyclic => "cyclic",
            PathKind::Random => "random",
        })
    }
}

/// Sequence of macro stretches, one per load increment. The reference state
/// (identity) precedes the first entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadPath {
    pub kind: PathKind,
    pub increments: Vec<MacroStretch>,
    pub seed: Option<u64>,
}

impl LoadPath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Network inputs `(U11, U12)` per increment.
    pub fn inputs(&self) -> Vec<[f64; 2]> {
        self.increments.iter().map(|s| [s.u11, s.u12]).collect()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "inc,U11,U22,U12")?;
        for (k, s) in self.increments.iter().enumerate() {
            writeln!(w, "{},{},{},{}", k + 1, s.u11, s.u22, s.u12)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl BufRead, kind: PathKind) -> Result<Self> {
        let mut increments = Vec::new();
        for (line_no, line) in r.lines().enumerate() {
            let line = line?;
            if line_no == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("load path line {}: {e}", line_no + 1)))?;
            if fields.len() != 4 {
                return Err(Error::Format(format!(
                    "load path line {}: expected 4 columns",
                    line_no + 1
                )));
            }
            increments.push(MacroStretch {
                u11: fields[1],
                u22: fields[2],
                u12: fields[3],
            });
        }
        Ok(Self {
            kind,
            increments,
            seed: None,
        })
    }

    pub fn load_csv(path: &Path, kind: PathKind) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?), kind)
    }
}

/// Linear ramp from identity to `target = (U11*, U12*)` over `n_inc/2`
/// increments followed by the mirrored ramp back to identity.
pub fn cyclic_path(target: (f64, f64), n_inc: usize) -> Result<LoadPath> {
    if n_inc == 0 || n_inc % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "cyclic paths need an even, non-zero increment count, got {n_inc}"
        )));
    }
    if !feasible(target.0, target.1) {
        return Err(Error::OutOfBounds(format!("cyclic target {target:?}")));
    }
    let half = n_inc / 2;
    let increments = (1..=n_inc)
        .map(|k| {
            let level = if k <= half { k } else { n_inc - k };
            let t = level as f64 / half as f64;
            complete_stretch(1.0 + t * (target.0 - 1.0), t * target.1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadPath {
        kind: PathKind::Cyclic,
        increments,
        seed: None,
    })
}

/// Largest `t` such that `(1 + t·cos θ, t·sin θ)` stays strictly feasible
/// for every smaller `t`.
pub fn ray_extent(angle: f64) -> f64 {
    let (c, s) = (angle.cos(), angle.sin());
    let at = |t: f64| feasible(1.0 + t * c, t * s);
    let mut lo = 0.0;
    let mut hi = 1e-3;
    while at(hi) && hi < 2.0 {
        lo = hi;
        hi += 1e-3;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Cyclic targets on `count` equally spaced rays in the (U11, U12) plane,
/// rotated by `phase` (radians), each at `fraction` of the feasible extent.
pub fn cyclic_fan(count: usize, fraction: f64, phase: f64) -> Vec<(f64, f64)> {
    (0..count)
        .map(|k| {
            let angle = phase + std::f64::consts::TAU * k as f64 / count as f64;
            let t = fraction * ray_extent(angle);
            (1.0 + t * angle.cos(), t * angle.sin())
        })
        .collect()
}

/// Fixed-step random walk in the (U11, U12) plane. Steps leaving the bounds
/// are re-drawn; after 100 failed draws the step points back towards the
/// identity.
pub fn random_path(step: f64, n_inc: usize, seed: u64) -> Result<LoadPath> {
    if !(step >= 0.0) || step >= 0.25 {
        return Err(Error::InvalidParameter(format!("random-walk step {step}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = (1.0, 0.0);
    let mut increments = Vec::with_capacity(n_inc);
    for _ in 0..n_inc {
        let mut next = None;
        for _ in 0..MAX_REDRAWS {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let cand = (pos.0 + step * angle.cos(), pos.1 + step * angle.sin());
            if feasible(cand.0, cand.1) {
                next = Some(cand);
                break;
            }
        }
        pos = next.unwrap_or_else(|| {
            let (dx, dy) = (1.0 - pos.0, -pos.1);
            let norm = dx.hypot(dy);
            (pos.0 + step * dx / norm, pos.1 + step * dy / norm)
        });
        increments.push(complete_stretch(pos.0, pos.1)?);
    }
    Ok(LoadPath {
        kind: PathKind::Random,
        increments,
        seed: Some(seed),
    })
}

/// `n_u × 3` interpolator whose columns are the nodal fields `X₁e₁`, `X₂e₂`
/// and `X₂e₁ + X₁e₂`.
pub fn psi_matrix(mesh: &PeriodicMesh) -> DMatrix<f64> {
    let mut psi = DMatrix::zeros(mesh.n_dofs(), 3);
    for (a, x) in mesh.nodes.iter().enumerate() {
        psi[(2 * a, 0)] = x[0];
        psi[(2 * a + 1, 1)] = x[1];
        psi[(2 * a, 2)] = x[1];
        psi[(2 * a + 1, 2)] = x[0];
    }
    psi
}

pub fn homogeneous_field(u: &MacroStretch, mesh: &PeriodicMesh) -> (DMatrix<f64>, Vector3<f64>) {
    (psi_matrix(mesh), u.omega())
}
