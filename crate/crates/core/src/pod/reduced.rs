//! Galerkin-projected Newton solver on the POD coefficients.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::basis::ReducedBasis;
use crate::error::{Error, Result};
use crate::fem::sparse::dense_solve;
use crate::fem::{Assembler, Assembly, SolverConfig};
use crate::loading::{LoadPath, MacroStretch};
use crate::material::QuadPointState;

/// Converged reduced state after one increment.
#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub stretch: MacroStretch,
    pub alpha: DVector<f64>,
    pub states: Option<Vec<QuadPointState>>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub homogenized_stress: Matrix3<f64>,
}

/// Committed reduced state.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub stretch: MacroStretch,
    pub alpha: DVector<f64>,
    pub states: Vec<QuadPointState>,
}

#[derive(Debug, Clone)]
pub struct ReducedSolver {
    pub assembler: Assembler,
    pub basis: ReducedBasis,
    pub config: SolverConfig,
}

impl ReducedSolver {
    pub fn new(assembler: Assembler, basis: ReducedBasis, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        basis.check_mesh(&assembler.mesh)?;
        Ok(Self {
            assembler,
            basis,
            config,
        })
    }

    pub fn initial_state(&self) -> ReducedState {
        ReducedState {
            stretch: MacroStretch::IDENTITY,
            alpha: DVector::zeros(self.basis.n_b()),
            states: self.assembler.virgin_states(),
        }
    }

    pub fn displacement(&self, omega: &Vector3<f64>, alpha: &DVector<f64>) -> Vec<f64> {
        self.basis
            .reconstruct(omega, alpha)
            .iter()
            .copied()
            .collect()
    }

    fn tolerance(&self, scale: f64) -> f64 {
        let floor = self.config.abs_floor
            * self.assembler.materials.matrix.youngs_modulus
            * self.assembler.mesh.size;
        (self.config.tol_newton * scale).max(floor)
    }

    /// `(‖Φᵀf_int‖, ‖f_int‖)`.
    fn residual(&self, assembly: &Assembly) -> (DVector<f64>, f64, f64) {
        let f = DVector::from_column_slice(&assembly.f_int);
        let r = self.basis.phi.tr_mul(&f);
        let norm = r.norm();
        (r, norm, f.norm())
    }

    fn newton(
        &self,
        from: &ReducedState,
        target: &MacroStretch,
    ) -> Result<(ReducedState, Assembly, usize, f64)> {
        let phi = &self.basis.phi;
        let dw = target.omega() - from.stretch.omega();
        let mut omega = from.stretch.omega();
        let mut alpha = from.alpha.clone();
        let mut last = f64::INFINITY;
        for it in 0..=self.config.max_iter {
            let u = self.displacement(&omega, &alpha);
            let assembly = self
                .assembler
                .assemble(&u, &from.states, self.config.tangent)?;
            let (r, norm, scale) = self.residual(&assembly);
            last = norm;
            if !norm.is_finite() {
                break;
            }
            // the first pass linearizes about the committed state and carries the load step
            let first = it == 0;
            if (!first || dw == Vector3::zeros()) && norm <= self.tolerance(scale) {
                let state = ReducedState {
                    stretch: *target,
                    alpha,
                    states: assembly.states.clone(),
                };
                let iterations = if first { 0 } else { it };
                return Ok((
                    state,
                    assembly,
                    iterations,
                    norm / scale.max(f64::MIN_POSITIVE),
                ));
            }
            if it == self.config.max_iter {
                break;
            }
            let k_phi = assembly.stiffness_times(&self.assembler, phi)?;
            let k_red = phi.tr_mul(&k_phi);
            let mut rhs = -r;
            if first {
                let k_psi = assembly.stiffness_times(&self.assembler, &self.basis.psi)?;
                rhs -= phi.tr_mul(&(k_psi * dw));
                omega = target.omega();
            }
            let d_alpha = dense_solve(k_red, rhs)?;
            alpha += d_alpha;
        }
        Err(Error::Newton {
            iterations: self.config.max_iter,
            residual: last,
        })
    }

    fn step_bisect(
        &self,
        from: &ReducedState,
        target: &MacroStretch,
        depth: usize,
    ) -> Result<(ReducedState, Assembly, usize, f64)> {
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

    pub fn step(
        &self,
        state: &mut ReducedState,
        target: &MacroStretch,
        increment: usize,
        keep_states: bool,
    ) -> Result<ReducedSolution> {
        let (next, assembly, iterations, residual) =
            self.step_bisect(state, target, 0)
                .map_err(|e| Error::Simulation {
                    increment,
                    source: Box::new(e),
                })?;
        *state = next;
        Ok(ReducedSolution {
            stretch: *target,
            alpha: state.alpha.clone(),
            states: keep_states.then(|| state.states.clone()),
            converged: true,
            iterations,
            residual,
            homogenized_stress: assembly.homogenized_stress(&self.assembler),
        })
    }

    /// `keep_states` selects 1-based increments whose states are stored.
    pub fn run(
        &self,
        path: &LoadPath,
        keep_states: impl Fn(usize) -> bool,
    ) -> Result<Vec<ReducedSolution>> {
        let mut state = self.initial_state();
        path.increments
            .iter()
            .enumerate()
            .map(|(k, s)| self.step(&mut state, s, k + 1, keep_states(k + 1)))
            .collect()
    }
}

/// One-shot reduced simulation of a load path starting at the identity.
pub fn solve_reduced(
    path: &LoadPath,
    basis: &ReducedBasis,
    assembler: Assembler,
    config: SolverConfig,
) -> Result<Vec<ReducedSolution>> {
    ReducedSolver::new(assembler, basis.clone(), config)?.run(path, |_| false)
}

/// Coefficient history as an `n_inc × n_b` matrix.
pub fn coefficient_matrix(solutions: &[ReducedSolution]) -> DMatrix<f64> {
    let n_b = solutions.first().map_or(0, |s| s.alpha.len());
    DMatrix::from_fn(solutions.len(), n_b, |i, j| solutions[i].alpha[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{
        build_rve_mesh, DnsSolver, GeometryConfig, Materials, Particle, StateRecording,
    };
    use crate::loading::{complete_stretch, cyclic_path, random_path, PathKind};
    use crate::pod::{build_basis, collect_snapshots, snapshot_rank, DnsRecord};

    fn assembler(n: usize) -> Assembler {
        let cfg = GeometryConfig {
            size: 1.0,
            divisions: n,
            particles: vec![Particle {
                center: [0.5, 0.5],
                radius: 0.3,
            }],
        };
        Assembler::new(build_rve_mesh(&cfg).unwrap(), Materials::default()).unwrap()
    }

    #[test]
    fn full_rank_replay_matches_dns() {
        let asm = assembler(4);
        let dns = DnsSolver::new(asm.clone(), SolverConfig::default()).unwrap();
        let path = random_path(0.02, 8, 5).unwrap();
        let sols = dns.run(&path, &StateRecording::None).unwrap();
        let set = collect_snapshots(
            &[DnsRecord {
                sim: 0,
                mesh: &asm.mesh,
                solutions: &sols,
            }],
            1,
        )
        .unwrap();
        assert!(set.periodicity_defect(&asm.mesh) < 1e-9);
        let rank = snapshot_rank(&set).unwrap();
        let basis = build_basis(&set, rank, &asm.mesh).unwrap();
        // every snapshot is numerically independent
        assert_eq!(rank, set.n_t());
        let red = solve_reduced(&path, &basis, asm.clone(), SolverConfig::default()).unwrap();
        let scale = sols
            .iter()
            .flat_map(|s| s.u.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for (r, d) in red.iter().zip(&sols) {
            let u = basis.reconstruct(&r.stretch.omega(), &r.alpha);
            let err = u
                .iter()
                .zip(&d.u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-8 * scale, "{err:e} (rank {rank})");
        }
    }

    #[test]
    fn identity_path_keeps_zero_coefficients() {
        let asm = assembler(3);
        let basis = ReducedBasis {
            phi: DMatrix::from_fn(asm.mesh.n_dofs(), 1, |i, _| if i == 8 { 1.0 } else { 0.0 }),
            singular_values: vec![1.0],
            psi: crate::loading::psi_matrix(&asm.mesh),
            fingerprint: asm.mesh.fingerprint(),
        };
        let path = LoadPath {
            kind: PathKind::Cyclic,
            increments: vec![MacroStretch::IDENTITY; 3],
            seed: None,
        };
        let red = solve_reduced(&path, &basis, asm, SolverConfig::default()).unwrap();
        for r in red {
            assert_eq!(r.alpha[0], 0.0);
            assert_eq!(r.iterations, 0);
        }
    }

    #[test]
    fn small_elastic_step_converges_quickly() {
        let asm = assembler(4);
        let dns = DnsSolver::new(asm.clone(), SolverConfig::default()).unwrap();
        let path = cyclic_path((1.04, 0.03), 8).unwrap();
        let sols = dns.run(&path, &StateRecording::None).unwrap();
        let set = collect_snapshots(
            &[DnsRecord {
                sim: 0,
                mesh: &asm.mesh,
                solutions: &sols,
            }],
            1,
        )
        .unwrap();
        let basis = build_basis(&set, 3, &asm.mesh).unwrap();
        let step = complete_stretch(1.0005, 0.0003).unwrap();
        let path = LoadPath {
            kind: PathKind::Random,
            increments: vec![step],
            seed: None,
        };
        let red = solve_reduced(&path, &basis, asm, SolverConfig::default()).unwrap();
        assert!(red[0].iterations <= 5, "{}", red[0].iterations);
    }
}
