//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Arrays cross the boundary flattened, with a fixed number of values per row.

use nalgebra::{DMatrix, DVector};
use wasm_bindgen::prelude::*;

use rvemor::fem::{
    build_rve_mesh, Assembler, DnsSolution, DnsSolver, GeometryConfig, Materials, Phase, SolverConfig, StateRecording,
    QUAD_POINTS_PER_ELEMENT,
};
use rvemor::loading::{cyclic_path, psi_matrix};
use rvemor::material::{stress_update, MaterialParams, QuadPointState, TangentMode};
use rvemor::pod::gram_pod;

const MAX_DIVISIONS: usize = 16;
const MAX_INCREMENTS: usize = 400;

fn js(e: rvemor::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn check_increments(n_inc: usize) -> Result<(), JsError> {
    if n_inc < 2 || n_inc % 2 != 0 || n_inc > MAX_INCREMENTS {
        return Err(JsError::new(&format!("increments must be even and in 2..={MAX_INCREMENTS}")));
    }
    Ok(())
}

/// Matrix material at a single point under a cyclic stretch to
/// `(u11, u12)` and back. Rows of `[U11, U12, P11, P12, λ]`.
#[wasm_bindgen]
pub fn point_response(u11: f64, u12: f64, n_inc: usize) -> Result<Vec<f64>, JsError> {
    check_increments(n_inc)?;
    let path = cyclic_path((u11, u12), n_inc).map_err(js)?;
    let params = MaterialParams::matrix_default();
    let mut state = QuadPointState::default();
    let mut out = Vec::with_capacity(5 * n_inc);
    for s in &path.increments {
        let r = stress_update(&s.tensor(), &state, &params, TangentMode::None).map_err(js)?;
        state = r.state;
        out.extend([s.u11, s.u12, r.stress[(0, 0)], r.stress[(0, 1)], state.lambda]);
    }
    Ok(out)
}

/// Periodic cell with the default inclusions and the last simulated path.
#[wasm_bindgen]
pub struct RveDemo {
    dns: DnsSolver,
    solutions: Vec<DnsSolution>,
}

#[wasm_bindgen]
impl RveDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(divisions: usize) -> Result<RveDemo, JsError> {
        if !(2..=MAX_DIVISIONS).contains(&divisions) {
            return Err(JsError::new(&format!("divisions must lie in 2..={MAX_DIVISIONS}")));
        }
        let mesh = build_rve_mesh(&GeometryConfig::default_rve(divisions)).map_err(js)?;
        let asm = Assembler::new(mesh, Materials::default()).map_err(js)?;
        Ok(RveDemo {
            dns: DnsSolver::new(asm, SolverConfig::default()).map_err(js)?,
            solutions: Vec::new(),
        })
    }

    pub fn divisions(&self) -> usize {
        (self.dns.assembler.mesh.n_elements() as f64).sqrt().round() as usize
    }

    /// 1 for particle elements, 0 for matrix, row by row from the bottom.
    pub fn phases(&self) -> Vec<u8> {
        self.dns.assembler.mesh.phases.iter().map(|p| u8::from(*p == Phase::Particle)).collect()
    }

    /// Full-order cyclic simulation. Rows of `[U11, U12, P11, P12]` with the
    /// homogenized first Piola-Kirchhoff stress.
    pub fn run_cyclic(&mut self, u11: f64, u12: f64, n_inc: usize) -> Result<Vec<f64>, JsError> {
        check_increments(n_inc)?;
        let path = cyclic_path((u11, u12), n_inc).map_err(js)?;
        let keep = StateRecording::At(vec![n_inc / 2, n_inc]);
        self.solutions = self.dns.run(&path, &keep).map_err(js)?;
        Ok(self
            .solutions
            .iter()
            .flat_map(|s| [s.stretch.u11, s.stretch.u12, s.homogenized_stress[(0, 0)], s.homogenized_stress[(0, 1)]])
            .collect())
    }

    /// Element-mean plastic multiplier at the peak (`at_end == false`) or
    /// after unloading.
    pub fn lambda_field(&self, at_end: bool) -> Result<Vec<f64>, JsError> {
        let n = self.solutions.len();
        if n == 0 {
            return Err(JsError::new("run a simulation first"));
        }
        let sol = &self.solutions[if at_end { n - 1 } else { n / 2 - 1 }];
        let states = sol.states.as_ref().ok_or_else(|| JsError::new("states were not recorded"))?;
        Ok(states
            .chunks(QUAD_POINTS_PER_ELEMENT)
            .map(|q| q.iter().map(|s| s.lambda).sum::<f64>() / QUAD_POINTS_PER_ELEMENT as f64).collect())
    }

    /// Singular values of the fluctuation snapshots of the last run,
    /// normalized by the largest.
    pub fn pod_spectrum(&self) -> Result<Vec<f64>, JsError> {
        if self.solutions.is_empty() {
            return Err(JsError::new("run a simulation first"));
        }
        let psi = psi_matrix(&self.dns.assembler.mesh);
        let cols: Vec<_> = self
            .solutions
            .iter()
            .map(|s| DVector::from_column_slice(&s.u) - &psi * s.stretch.omega())
            .collect();
        let u = DMatrix::from_columns(&cols);
        let (_, sv) = gram_pod(&u, 1).map_err(js)?;
        let top = sv.first().copied().unwrap_or(1.0);
        Ok(sv.iter().map(|s| s / top).collect())
    }
}
