//! Full-order Newton solver with corner Dirichlet conditions and periodic
//! constraints enforced through Lagrange multipliers.

use nalgebra::{DMatrix, DVector, Matrix3};

use super::assembly::{element_dofs, Assembler, Assembly, ELEMENT_DOFS};
use super::sparse::{SparseLu, SparsePattern};
use crate::error::{Error, Result};
use crate::loading::{psi_matrix, LoadPath, MacroStretch};
use crate::material::{QuadPointState, TangentMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Residual tolerance relative to the internal-force scale.
    pub tol_newton: f64,
    pub max_iter: usize,
    pub max_bisections: usize,
    /// Absolute residual floor, in units of matrix Young's modulus × cell size.
    pub abs_floor: f64,
    pub tangent: TangentMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_newton: 1e-9,
            max_iter: 25,
            max_bisections: 4,
            abs_floor: 1e-13,
            tangent: TangentMode::Exact,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_newton > 0.0) || self.max_iter == 0 || !(self.abs_floor >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bad solver settings {self:?}"
            )));
        }
        if self.tangent == TangentMode::None {
            return Err(Error::InvalidConfig(
                "the Newton solver needs a tangent".into(),
            ));
        }
        Ok(())
    }
}

/// Which increments keep a copy of the quadrature-point states.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum StateRecording {
    #[default]
    None,
    All,
    /// 1-based increment numbers.
    At(Vec<usize>),
}

impl StateRecording {
    fn wants(&self, increment: usize) -> bool {
        match self {
            StateRecording::None => false,
            StateRecording::All => true,
            StateRecording::At(list) => list.contains(&increment),
        }
    }
}

/// Converged state after one load increment.
#[derive(Debug, Clone)]
pub struct DnsSolution {
    pub stretch: MacroStretch,
    /// Total nodal displacement.
    pub u: Vec<f64>,
    /// Lagrange multipliers, two per pairing.
    pub g: Vec<f64>,
    pub states: Option<Vec<QuadPointState>>,
    pub converged: bool,
    /// Newton iterations summed over bisected sub-steps.
    pub iterations: usize,
    pub residual: f64,
    pub homogenized_stress: Matrix3<f64>,
}

/// Constrained Newton solver bound to one mesh; the symbolic factorization is
/// reused across increments and runs.
#[derive(Debug)]
pub struct DnsSolver {
    pub assembler: Assembler,
    pub config: SolverConfig,
    psi: DMatrix<f64>,
    n_u: usize,
    is_corner: Vec<bool>,
    corner_diag: Vec<usize>,
    /// `(row, slave pos, master pos, slave-col pos, master-col pos)` per constraint.
    constraint_pos: Vec<[usize; 4]>,
    scatter: Vec<[usize; ELEMENT_DOFS * ELEMENT_DOFS]>,
    lu: SparseLu,
}

const SKIP: usize = usize::MAX;

/// Committed state carried between increments.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub stretch: MacroStretch,
    pub u: Vec<f64>,
    pub g: Vec<f64>,
    pub states: Vec<QuadPointState>,
}

impl DnsSolver {
    pub fn new(assembler: Assembler, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let mesh = &assembler.mesh;
        let n_u = mesh.n_dofs();
        let n_c = 2 * mesh.pairings.len();
        let n = n_u + n_c;
        let mut is_corner = vec![false; n_u];
        for d in mesh.corner_dofs() {
            is_corner[d] = true;
        }

        let mut entries = Vec::new();
        for geom in assembler.geometry() {
            let dofs = element_dofs(&geom.nodes);
            for &r in &dofs {
                if !is_corner[r] {
                    entries.extend(dofs.iter().map(|&c| (r, c)));
                }
            }
        }
        entries.extend(mesh.corner_dofs().iter().map(|&d| (d, d)));
        for (p, pairing) in mesh.pairings.iter().enumerate() {
            for i in 0..2 {
                let row = n_u + 2 * p + i;
                let (s, m) = (2 * pairing.slave + i, 2 * pairing.master + i);
                entries.extend([(row, s), (row, m), (s, row), (m, row)]);
            }
        }
        let pattern = SparsePattern::from_entries(n, entries)?;

        let scatter = assembler
            .geometry()
            .iter()
            .map(|geom| {
                let dofs = element_dofs(&geom.nodes);
                let mut map = [SKIP; ELEMENT_DOFS * ELEMENT_DOFS];
                for (lr, &r) in dofs.iter().enumerate() {
                    if is_corner[r] {
                        continue;
                    }
                    for (lc, &c) in dofs.iter().enumerate() {
                        map[lr * ELEMENT_DOFS + lc] =
                            pattern.position(r, c).expect("element entry in pattern");
                    }
                }
                map
            })
            .collect();
        let corner_diag = mesh
            .corner_dofs()
            .iter()
            .map(|&d| pattern.position(d, d).expect("corner diagonal in pattern"))
            .collect();
        let mut constraint_pos = Vec::with_capacity(n_c);
        for (p, pairing) in mesh.pairings.iter().enumerate() {
            for i in 0..2 {
                let row = n_u + 2 * p + i;
                let (s, m) = (2 * pairing.slave + i, 2 * pairing.master + i);
                let pos = |r, c| pattern.position(r, c).expect("constraint entry in pattern");
                constraint_pos.push([pos(row, s), pos(row, m), pos(s, row), pos(m, row)]);
            }
        }
        let psi = psi_matrix(mesh);
        let lu = SparseLu::new(pattern)?;
        Ok(Self {
            assembler,
            config,
            psi,
            n_u,
            is_corner,
            corner_diag,
            constraint_pos,
            scatter,
            lu,
        })
    }

    pub fn n_constraints(&self) -> usize {
        self.constraint_pos.len()
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn initial_state(&self) -> SolverState {
        SolverState {
            stretch: MacroStretch::IDENTITY,
            u: vec![0.0; self.n_u],
            g: vec![0.0; self.n_constraints()],
            states: self.assembler.virgin_states(),
        }
    }

    /// Homogeneous displacement `Ψω`.
    pub fn homogeneous(&self, stretch: &MacroStretch) -> Vec<f64> {
        (&self.psi * stretch.omega()).iter().copied().collect()
    }

    /// Fluctuation part `u − Ψω`.
    pub fn fluctuation(&self, u: &[f64], stretch: &MacroStretch) -> Vec<f64> {
        u.iter()
            .zip(self.homogeneous(stretch))
            .map(|(a, b)| a - b)
            .collect()
    }

    /// `c(u)`: periodic constraint values, two per pairing.
    pub fn constraint_residual(&self, u: &[f64], stretch: &MacroStretch) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.n_constraints());
        for pairing in &self.assembler.mesh.pairings {
            let d = stretch.displacement(pairing.offset);
            for i in 0..2 {
                c.push(u[2 * pairing.slave + i] - u[2 * pairing.master + i] - d[i]);
            }
        }
        c
    }

    /// Largest deviation of the corner dofs from the homogeneous field.
    pub fn corner_residual(&self, u: &[f64], stretch: &MacroStretch) -> f64 {
        let mesh = &self.assembler.mesh;
        mesh.corners
            .iter()
            .flat_map(|&c| {
                let d = stretch.displacement(mesh.nodes[c]);
                [(u[2 * c] - d[0]).abs(), (u[2 * c + 1] - d[1]).abs()]
            })
            .fold(0.0, f64::max)
    }

    fn add_constraint_forces(&self, r: &mut [f64], g: &[f64]) {
        for (pairing, gp) in self.assembler.mesh.pairings.iter().zip(g.chunks(2)) {
            for i in 0..2 {
                r[2 * pairing.slave + i] += gp[i];
                r[2 * pairing.master + i] -= gp[i];
            }
        }
    }

    /// Euclidean norm of `f_int + Cᵀg` over non-corner dofs, and the force scale.
    pub fn residual_norm(&self, assembly: &Assembly, g: &[f64]) -> (f64, f64) {
        let mut r = assembly.f_int.clone();
        self.add_constraint_forces(&mut r, g);
        let free: f64 = r
            .iter()
            .zip(&self.is_corner)
            .filter(|(_, &c)| !c)
            .map(|(v, _)| v * v)
            .sum();
        let scale = assembly.f_int.iter().map(|v| v * v).sum::<f64>().sqrt();
        (free.sqrt(), scale)
    }

    fn tolerance(&self, scale: f64) -> f64 {
        let floor = self.config.abs_floor
            * self.assembler.materials.matrix.youngs_modulus
            * self.assembler.mesh.size;
        (self.config.tol_newton * scale).max(floor)
    }

    fn bordered_values(&self, assembly: &Assembly) -> Vec<f64> {
        let mut values = vec![0.0; self.lu.pattern().nnz()];
        for (map, ke) in self.scatter.iter().zip(&assembly.element_stiffness) {
            for (&pos, &k) in map.iter().zip(ke.iter()) {
                if pos != SKIP {
                    values[pos] += k;
                }
            }
        }
        for &pos in &self.corner_diag {
            values[pos] = 1.0;
        }
        for pos in &self.constraint_pos {
            values[pos[0]] = 1.0;
            values[pos[1]] = -1.0;
            values[pos[2]] = 1.0;
            values[pos[3]] = -1.0;
        }
        values
    }

    /// Solves one load step from a committed state without bisection.
    /// Returns the converged state, the final assembly, the iteration count
    /// and the final residual.
    fn newton(
        &self,
        from: &SolverState,
        target: &MacroStretch,
    ) -> Result<(SolverState, Assembly, usize, f64)> {
        let n_u = self.n_u;
        let dw = target.omega() - from.stretch.omega();
        let du0 = &self.psi * dw;
        let mut u: Vec<f64> = from.u.iter().zip(du0.iter()).map(|(a, b)| a + b).collect();
        let mut g = from.g.clone();
        let mesh = &self.assembler.mesh;
        let mut last = f64::INFINITY;
        for it in 0..=self.config.max_iter {
            let assembly = self
                .assembler
                .assemble(&u, &from.states, self.config.tangent)?;
            let (norm, scale) = self.residual_norm(&assembly, &g);
            let c = self.constraint_residual(&u, target);
            let c_max = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let corner = self.corner_residual(&u, target);
            let geom_tol = 1e-12 * mesh.size;
            last = norm;
            if !norm.is_finite() {
                break;
            }
            if norm <= self.tolerance(scale) && c_max <= geom_tol && corner <= geom_tol {
                let state = SolverState {
                    stretch: *target,
                    u,
                    g,
                    states: assembly.states.clone(),
                };
                return Ok((state, assembly, it, norm / scale.max(f64::MIN_POSITIVE)));
            }
            if it == self.config.max_iter {
                break;
            }
            let values = self.bordered_values(&assembly);
            let mut rhs = assembly.f_int.clone();
            self.add_constraint_forces(&mut rhs, &g);
            for v in rhs.iter_mut() {
                *v = -*v;
            }
            for &c in &mesh.corners {
                let d = target.displacement(mesh.nodes[c]);
                rhs[2 * c] = d[0] - u[2 * c];
                rhs[2 * c + 1] = d[1] - u[2 * c + 1];
            }
            rhs.extend(c.iter().map(|v| -v));
            self.lu.solve(&values, &mut rhs)?;
            for (ui, di) in u.iter_mut().zip(&rhs[..n_u]) {
                *ui += di;
            }
            for (gi, di) in g.iter_mut().zip(&rhs[n_u..]) {
                *gi += di;
            }
        }
        Err(Error::Newton {
            iterations: self.config.max_iter,
            residual: last,
        })
    }

    fn step_bisect(
        &self,
        from: &SolverState,
        target: &MacroStretch,
        depth: usize,
    ) -> Result<(SolverState, Assembly, usize, f64)> {
        match self.newton(from, target) {
            Ok(done) => Ok(done),
            Err(e) if depth >= self.config.max_bisections || matches!(e, Error::Shape(_)) => Err(e),
            Err(_) => {
                let a = from.stretch;
                let mid = MacroStretch {
                    u11: 0.5 * (a.u11 + target.u11),
                    u22: 0.5 * (a.u22 + target.u22),
                    u12: 0.5 * (a.u12 + target.u12),
                };
                let (half, _, it1, _) = self.step_bisect(from, &mid, depth + 1)?;
                let (full, asm, it2, res) = self.step_bisect(&half, target, depth + 1)?;
                Ok((full, asm, it1 + it2, res))
            }
        }
    }

    /// Advances the committed state by one increment, bisecting on failure.
    /// `increment` is only used for error reporting.
    pub fn step(
        &self,
        state: &mut SolverState,
        target: &MacroStretch,
        increment: usize,
        keep_states: bool,
    ) -> Result<DnsSolution> {
        let (next, assembly, iterations, residual) =
            self.step_bisect(state, target, 0)
                .map_err(|e| Error::Simulation {
                    increment,
                    source: Box::new(e),
                })?;
        *state = next;
        Ok(DnsSolution {
            stretch: *target,
            u: state.u.clone(),
            g: state.g.clone(),
            states: keep_states.then(|| state.states.clone()),
            converged: true,
            iterations,
            residual,
            homogenized_stress: assembly.homogenized_stress(&self.assembler),
        })
    }

    pub fn run(&self, path: &LoadPath, recording: &StateRecording) -> Result<Vec<DnsSolution>> {
        let mut state = self.initial_state();
        path.increments
            .iter()
            .enumerate()
            .map(|(k, s)| self.step(&mut state, s, k + 1, recording.wants(k + 1)))
            .collect()
    }

    /// Fluctuation snapshots `u − Ψω` as columns.
    pub fn fluctuation_matrix(&self, solutions: &[DnsSolution]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_u, solutions.len());
        for (j, s) in solutions.iter().enumerate() {
            m.set_column(j, &DVector::from_vec(self.fluctuation(&s.u, &s.stretch)));
        }
        m
    }
}

/// One-shot DNS of a load path starting at the identity.
pub fn solve_dns(
    path: &LoadPath,
    assembler: Assembler,
    config: SolverConfig,
    recording: &StateRecording,
) -> Result<Vec<DnsSolution>> {
    DnsSolver::new(assembler, config)?.run(path, recording)
}
