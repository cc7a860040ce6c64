//! Bilinear quadrilateral kinematics and the F-bar modification.

use nalgebra::{Matrix2, Matrix3};

use super::mesh::{PeriodicMesh, QUAD_POINTS_PER_ELEMENT};
use crate::error::{Error, Result};

const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Reference-configuration shape-function gradients of one element.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub nodes: [usize; 4],
    /// `grads[q][a] = ∂N_a/∂X` at Gauss point `q`.
    pub grads: [[[f64; 2]; 4]; QUAD_POINTS_PER_ELEMENT],
    /// Gauss weight times reference Jacobian determinant.
    pub weights: [f64; QUAD_POINTS_PER_ELEMENT],
    /// Gradients at the element centre.
    pub center_grads: [[f64; 2]; 4],
}

fn physical_gradients(coords: &[[f64; 2]; 4], xi: f64, eta: f64) -> Result<([[f64; 2]; 4], f64)> {
    let mut dn = [[0.0; 2]; 4];
    for a in 0..4 {
        dn[a] = [
            0.25 * XI[a] * (1.0 + ETA[a] * eta),
            0.25 * ETA[a] * (1.0 + XI[a] * xi),
        ];
    }
    let mut jac = Matrix2::zeros();
    for a in 0..4 {
        for i in 0..2 {
            for j in 0..2 {
                jac[(i, j)] += coords[a][i] * dn[a][j];
            }
        }
    }
    let det = jac.determinant();
    if !(det > 0.0) {
        return Err(Error::Inversion { det });
    }
    let inv = jac.try_inverse().ok_or(Error::Inversion { det })?;
    let mut grads = [[0.0; 2]; 4];
    for a in 0..4 {
        for j in 0..2 {
            grads[a][j] = dn[a][0] * inv[(0, j)] + dn[a][1] * inv[(1, j)];
        }
    }
    Ok((grads, det))
}

impl ElementGeometry {
    pub fn new(mesh: &PeriodicMesh, element: usize) -> Result<Self> {
        let nodes = mesh.elements[element];
        let coords = nodes.map(|n| mesh.nodes[n]);
        let mut grads = [[[0.0; 2]; 4]; QUAD_POINTS_PER_ELEMENT];
        let mut weights = [0.0; QUAD_POINTS_PER_ELEMENT];
        for (q, point) in mesh.quad_rule.points.iter().enumerate() {
            let (g, det) = physical_gradients(&coords, point[0], point[1])?;
            grads[q] = g;
            weights[q] = mesh.quad_rule.weights[q] * det;
        }
        let (center_grads, _) = physical_gradients(&coords, 0.0, 0.0)?;
        Ok(Self {
            nodes,
            grads,
            weights,
            center_grads,
        })
    }

    pub fn gather(&self, u: &[f64]) -> [[f64; 2]; 4] {
        self.nodes.map(|n| [u[2 * n], u[2 * n + 1]])
    }
}

/// In-plane `F = I + Σ u_a ⊗ ∇N_a`.
pub fn deformation_gradient(u_e: &[[f64; 2]; 4], grads: &[[f64; 2]; 4]) -> Matrix2<f64> {
    let mut f = Matrix2::identity();
    for a in 0..4 {
        for i in 0..2 {
            for j in 0..2 {
                f[(i, j)] += u_e[a][i] * grads[a][j];
            }
        }
    }
    f
}

pub fn in_plane_det(f: &Matrix3<f64>) -> f64 {
    f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)]
}

/// Scales the in-plane block of `f_q` by `(det₂F_c / det₂F_q)^½` so that the
/// in-plane area change equals the one at the element centre. The
/// out-of-plane component is left untouched.
pub fn fbar_deformation(f_q: &Matrix3<f64>, f_c: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let jq = in_plane_det(f_q);
    let jc = in_plane_det(f_c);
    if !(jq > 0.0) {
        return Err(Error::Inversion { det: jq });
    }
    if !(jc > 0.0) {
        return Err(Error::Inversion { det: jc });
    }
    let beta = (jc / jq).sqrt();
    let mut f = *f_q;
    for i in 0..2 {
        for j in 0..2 {
            f[(i, j)] *= beta;
        }
    }
    Ok(f)
}
