//! Element loops producing internal forces, element stiffness blocks and
//! trial quadrature-point states.

use nalgebra::{DMatrix, Matrix2, Matrix3};

use super::element::{deformation_gradient, fbar_deformation, in_plane_det, ElementGeometry};
use super::mesh::{PeriodicMesh, Phase, QUAD_POINTS_PER_ELEMENT};
use super::sparse::linear_solve_count;
use crate::error::{Error, Result};
use crate::material::{
    pair, plane_strain, stress_update, stress_update_count, MaterialParams, QuadPointState,
    TangentMode,
};

/// Local element dofs: `2·a + i` for node `a`, component `i`.
pub const ELEMENT_DOFS: usize = 8;

/// Constitutive parameters per phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Materials {
    pub matrix: MaterialParams,
    pub particle: MaterialParams,
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            matrix: MaterialParams::matrix_default(),
            particle: MaterialParams::particle_default(),
        }
    }
}

impl Materials {
    /// Both phases share the matrix parameters.
    pub fn homogeneous(params: MaterialParams) -> Self {
        Self {
            matrix: params,
            particle: params,
        }
    }

    pub fn for_phase(&self, phase: Phase) -> &MaterialParams {
        match phase {
            Phase::Matrix => &self.matrix,
            Phase::Particle => &self.particle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.matrix.validate()?;
        self.particle.validate()
    }
}

#[derive(Debug, Clone)]
struct ElementOutput {
    force: [f64; ELEMENT_DOFS],
    stiffness: Option<[f64; ELEMENT_DOFS * ELEMENT_DOFS]>,
    states: [QuadPointState; QUAD_POINTS_PER_ELEMENT],
    stresses: [Matrix3<f64>; QUAD_POINTS_PER_ELEMENT],
    delta_lambda: [f64; QUAD_POINTS_PER_ELEMENT],
    stress_updates: u64,
    linear_solves: u64,
}

/// Result of one pass over all elements. Nothing is committed.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub f_int: Vec<f64>,
    /// Row-major 8×8 blocks in element order; empty without a tangent.
    pub element_stiffness: Vec<[f64; ELEMENT_DOFS * ELEMENT_DOFS]>,
    /// Trial states, indexed `4·element + gauss_point`.
    pub states: Vec<QuadPointState>,
    /// First Piola-Kirchhoff stress per quadrature point.
    pub stresses: Vec<Matrix3<f64>>,
    pub delta_lambda: Vec<f64>,
    /// Constitutive updates performed by the element loop, over all threads.
    pub stress_updates: u64,
    /// Linear solves triggered inside the element loop, over all threads.
    pub linear_solves: u64,
}

impl Assembly {
    pub fn has_stiffness(&self) -> bool {
        !self.element_stiffness.is_empty()
    }

    /// `K·X` for a dense block of columns, without forming `K`.
    pub fn stiffness_times(&self, assembler: &Assembler, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if !self.has_stiffness() {
            return Err(Error::InvalidConfig(
                "assembly was run without a tangent".into(),
            ));
        }
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (geom, ke) in assembler.geometry.iter().zip(&self.element_stiffness) {
            let dofs = element_dofs(&geom.nodes);
            for col in 0..x.ncols() {
                for r in 0..ELEMENT_DOFS {
                    let mut s = 0.0;
                    for c in 0..ELEMENT_DOFS {
                        s += ke[r * ELEMENT_DOFS + c] * x[(dofs[c], col)];
                    }
                    out[(dofs[r], col)] += s;
                }
            }
        }
        Ok(out)
    }

    /// Dense global stiffness, for tests and small meshes.
    pub fn dense_stiffness(&self, assembler: &Assembler) -> Result<DMatrix<f64>> {
        let n = self.f_int.len();
        self.stiffness_times(assembler, &DMatrix::identity(n, n))
    }

    /// Reference-volume average of the first Piola-Kirchhoff stress.
    pub fn homogenized_stress(&self, assembler: &Assembler) -> Matrix3<f64> {
        homogenize(assembler, &self.stresses)
    }
}

pub fn element_dofs(nodes: &[usize; 4]) -> [usize; ELEMENT_DOFS] {
    let mut d = [0; ELEMENT_DOFS];
    for (a, &n) in nodes.iter().enumerate() {
        d[2 * a] = 2 * n;
        d[2 * a + 1] = 2 * n + 1;
    }
    d
}

/// Mesh, materials and cached element geometry.
#[derive(Debug, Clone)]
pub struct Assembler {
    pub mesh: PeriodicMesh,
    pub materials: Materials,
    pub(crate) geometry: Vec<ElementGeometry>,
    volume: f64,
}

impl Assembler {
    pub fn new(mesh: PeriodicMesh, materials: Materials) -> Result<Self> {
        materials.validate()?;
        let geometry = (0..mesh.n_elements())
            .map(|e| ElementGeometry::new(&mesh, e))
            .collect::<Result<Vec<_>>>()?;
        let volume = geometry.iter().flat_map(|g| g.weights).sum();
        Ok(Self {
            mesh,
            materials,
            geometry,
            volume,
        })
    }

    pub fn geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    /// Reference area of the cell.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Quadrature weights, indexed like the states.
    pub fn quad_weights(&self) -> Vec<f64> {
        self.geometry.iter().flat_map(|g| g.weights).collect()
    }

    pub fn virgin_states(&self) -> Vec<QuadPointState> {
        vec![QuadPointState::default(); self.mesh.n_quad_points()]
    }

    pub fn assemble(
        &self,
        u: &[f64],
        states: &[QuadPointState],
        mode: TangentMode,
    ) -> Result<Assembly> {
        let n_u = self.mesh.n_dofs();
        if u.len() != n_u {
            return Err(Error::Shape(format!(
                "displacement has length {}, mesh has {n_u} dofs",
                u.len()
            )));
        }
        if states.len() != self.mesh.n_quad_points() {
            return Err(Error::Shape(format!(
                "{} states for {} quadrature points",
                states.len(),
                self.mesh.n_quad_points()
            )));
        }
        let outputs = self.element_outputs(u, states, mode)?;

        // Sequential scatter in element order keeps the sums reproducible.
        let mut f_int = vec![0.0; n_u];
        let mut element_stiffness = Vec::with_capacity(if mode == TangentMode::None {
            0
        } else {
            outputs.len()
        });
        let nq = self.mesh.n_quad_points();
        let mut new_states = Vec::with_capacity(nq);
        let mut stresses = Vec::with_capacity(nq);
        let mut delta_lambda = Vec::with_capacity(nq);
        let (mut stress_updates, mut linear_solves) = (0, 0);
        for (geom, out) in self.geometry.iter().zip(outputs) {
            for (d, f) in element_dofs(&geom.nodes).into_iter().zip(out.force) {
                f_int[d] += f;
            }
            if let Some(k) = out.stiffness {
                element_stiffness.push(k);
            }
            new_states.extend(out.states);
            stresses.extend(out.stresses);
            delta_lambda.extend(out.delta_lambda);
            stress_updates += out.stress_updates;
            linear_solves += out.linear_solves;
        }
        Ok(Assembly {
            f_int,
            element_stiffness,
            states: new_states,
            stresses,
            delta_lambda,
            stress_updates,
            linear_solves,
        })
    }

    #[cfg(feature = "parallel")]
    fn element_outputs(
        &self,
        u: &[f64],
        states: &[QuadPointState],
        mode: TangentMode,
    ) -> Result<Vec<ElementOutput>> {
        use rayon::prelude::*;
        (0..self.geometry.len())
            .into_par_iter()
            .map(|e| self.element(e, u, states, mode))
            .collect()
    }

    #[cfg(not(feature = "parallel"))]
    fn element_outputs(
        &self,
        u: &[f64],
        states: &[QuadPointState],
        mode: TangentMode,
    ) -> Result<Vec<ElementOutput>> {
        (0..self.geometry.len())
            .map(|e| self.element(e, u, states, mode))
            .collect()
    }

    fn element(
        &self,
        e: usize,
        u: &[f64],
        states: &[QuadPointState],
        mode: TangentMode,
    ) -> Result<ElementOutput> {
        // counters are per thread, so the deltas are taken inside the task
        let updates0 = stress_update_count();
        let solves0 = linear_solve_count();
        let geom = &self.geometry[e];
        let params = self.materials.for_phase(self.mesh.phases[e]);
        let u_e = geom.gather(u);
        let fc2 = deformation_gradient(&u_e, &geom.center_grads);
        let fc = plane_strain(&fc2);
        let fc_inv = fc2
            .try_inverse()
            .filter(|_| in_plane_det(&fc) > 0.0)
            .ok_or_else(|| {
                Error::at(
                    e,
                    0,
                    Error::Inversion {
                        det: in_plane_det(&fc),
                    },
                )
            })?;
        let gc = &geom.center_grads;

        let mut out = ElementOutput {
            force: [0.0; ELEMENT_DOFS],
            stiffness: (mode != TangentMode::None).then_some([0.0; ELEMENT_DOFS * ELEMENT_DOFS]),
            states: [QuadPointState::default(); QUAD_POINTS_PER_ELEMENT],
            stresses: [Matrix3::zeros(); QUAD_POINTS_PER_ELEMENT],
            delta_lambda: [0.0; QUAD_POINTS_PER_ELEMENT],
            stress_updates: 0,
            linear_solves: 0,
        };
        for q in 0..QUAD_POINTS_PER_ELEMENT {
            let g = &geom.grads[q];
            let w = geom.weights[q];
            let fq2 = deformation_gradient(&u_e, g);
            let fq = plane_strain(&fq2);
            let f_bar = fbar_deformation(&fq, &fc).map_err(|err| Error::at(e, q, err))?;
            let old = &states[QUAD_POINTS_PER_ELEMENT * e + q];
            let res =
                stress_update(&f_bar, old, params, mode).map_err(|err| Error::at(e, q, err))?;
            let p = res.stress;
            for a in 0..4 {
                for i in 0..2 {
                    out.force[2 * a + i] += w * (p[(i, 0)] * g[a][0] + p[(i, 1)] * g[a][1]);
                }
            }
            if let (Some(ke), Some(tan)) = (out.stiffness.as_mut(), res.tangent.as_ref()) {
                let beta = (in_plane_det(&fc) / in_plane_det(&fq)).sqrt();
                let fq_inv: Matrix2<f64> = fq2.try_inverse().ok_or_else(|| {
                    Error::at(
                        e,
                        q,
                        Error::Inversion {
                            det: fq2.determinant(),
                        },
                    )
                })?;
                for b in 0..4 {
                    for k in 0..2 {
                        // δF̄ for a unit variation of u_{b,k}
                        let hq = fq_inv[(0, k)] * g[b][0] + fq_inv[(1, k)] * g[b][1];
                        let hc = fc_inv[(0, k)] * gc[b][0] + fc_inv[(1, k)] * gc[b][1];
                        let mut d = fq2 * (0.5 * beta * (hc - hq));
                        d[(k, 0)] += beta * g[b][0];
                        d[(k, 1)] += beta * g[b][1];
                        let mut dp = Matrix2::zeros();
                        for i in 0..2 {
                            for jj in 0..2 {
                                let row = pair(i, jj);
                                let mut s = 0.0;
                                for m in 0..2 {
                                    for l in 0..2 {
                                        s += tan[(row, pair(m, l))] * d[(m, l)];
                                    }
                                }
                                dp[(i, jj)] = s;
                            }
                        }
                        let col = 2 * b + k;
                        for a in 0..4 {
                            for i in 0..2 {
                                ke[(2 * a + i) * ELEMENT_DOFS + col] +=
                                    w * (dp[(i, 0)] * g[a][0] + dp[(i, 1)] * g[a][1]);
                            }
                        }
                    }
                }
            }
            out.states[q] = res.state;
            out.stresses[q] = p;
            out.delta_lambda[q] = res.delta_lambda;
        }
        out.stress_updates = stress_update_count() - updates0;
        out.linear_solves = linear_solve_count() - solves0;
        Ok(out)
    }
}

/// Reference-volume average of per-quadrature-point stresses.
pub fn homogenize(assembler: &Assembler, stresses: &[Matrix3<f64>]) -> Matrix3<f64> {
    let mut sum = Matrix3::zeros();
    for (geom, chunk) in assembler
        .geometry
        .iter()
        .zip(stresses.chunks(QUAD_POINTS_PER_ELEMENT))
    {
        for (w, p) in geom.weights.iter().zip(chunk) {
            sum += p * *w;
        }
    }
    sum / assembler.volume
}

/// Convenience wrapper building an [`Assembler`] for a single call.
pub fn assemble(
    u: &[f64],
    states: &[QuadPointState],
    mesh: &PeriodicMesh,
    materials: &Materials,
    mode: TangentMode,
) -> Result<Assembly> {
    Assembler::new(mesh.clone(), *materials)?.assemble(u, states, mode)
}
