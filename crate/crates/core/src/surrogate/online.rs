//! Online stage driven by predicted coefficients: reconstruct, update the
//! constitutive state once, homogenize. No stiffness is formed and no system is solved.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{Error, Result};
use crate::fem::{homogenize, linear_solve_count, Assembler};
use crate::loading::{LoadPath, MacroStretch};
use crate::material::{QuadPointState, TangentMode};
use crate::pod::{basis::mesh_mismatch, ReducedBasis};
use crate::rnn::RnnModel;

/// Increments at which full fields are kept by default.
pub const DEFAULT_FIELD_INCREMENTS: [usize; 4] = [250, 500, 750, 1000];

/// Where the per-increment coefficients come from.
#[derive(Debug, Clone, Copy)]
pub enum CoefficientSource<'a> {
    Rnn(&'a RnnModel),
    /// Known coefficients, `n_inc × n_b`. Bypasses the network so that
    /// reduction error can be separated from network error.
    Exact(&'a DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineConfig {
    /// 1-based increments whose displacement, states and stresses are stored.
    pub record_fields: Vec<usize>,
    /// Keep going after a failed stress update. The failing increment keeps
    /// the previous states and stresses and is flagged.
    pub continue_on_failure: bool,
    /// Digest of the basis the model was trained against, if known.
    pub expected_basis: Option<[u8; 32]>,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            record_fields: DEFAULT_FIELD_INCREMENTS.to_vec(),
            continue_on_failure: false,
            expected_basis: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OnlineIncrement {
    pub stretch: MacroStretch,
    pub alpha: DVector<f64>,
    pub homogenized_stress: Matrix3<f64>,
    /// `‖Φᵀf_int‖`, reported only. Predicted fields are not in equilibrium.
    pub residual: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub increment: usize,
    pub u: Vec<f64>,
    pub states: Vec<QuadPointState>,
    pub stresses: Vec<Matrix3<f64>>,
}

/// Wall-clock seconds per stage, summed over increments. Zero on targets
/// without a clock.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTiming {
    pub predict: f64,
    pub reconstruct: f64,
    pub stress_update: f64,
    pub homogenize: f64,
}

impl StageTiming {
    pub fn total(&self) -> f64 {
        self.predict + self.reconstruct + self.stress_update + self.homogenize
    }
}

#[derive(Debug, Clone)]
pub struct OnlineResult {
    pub increments: Vec<OnlineIncrement>,
    pub fields: Vec<FieldSnapshot>,
    pub final_states: Vec<QuadPointState>,
    pub timing: StageTiming,
    pub stress_updates: u64,
    pub linear_solves: u64,
}

impl OnlineResult {
    pub fn coefficients(&self) -> DMatrix<f64> {
        let n_b = self.increments.first().map_or(0, |s| s.alpha.len());
        DMatrix::from_fn(self.increments.len(), n_b, |i, j| {
            self.increments[i].alpha[j]
        })
    }

    pub fn failures(&self) -> usize {
        self.increments
            .iter()
            .filter(|i| i.failure.is_some())
            .count()
    }
}

#[cfg(not(target_arch = "wasm32"))]
mod clock {
    pub struct Tick(std::time::Instant);

    pub fn tick() -> Tick {
        Tick(std::time::Instant::now())
    }

    impl Tick {
        pub fn secs(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }
}

#[cfg(target_arch = "wasm32")]
mod clock {
    pub struct Tick;

    pub fn tick() -> Tick {
        Tick
    }

    impl Tick {
        pub fn secs(&self) -> f64 {
            0.0
        }
    }
}

/// Reference-volume average of per-quadrature-point stresses.
pub fn homogenize_stress(assembler: &Assembler, stresses: &[Matrix3<f64>]) -> Result<Matrix3<f64>> {
    if stresses.len() != assembler.mesh.n_quad_points() {
        return Err(Error::Shape(format!(
            "{} stresses for {} quadrature points",
            stresses.len(),
            assembler.mesh.n_quad_points()
        )));
    }
    Ok(homogenize(assembler, stresses))
}

fn check_inputs(
    path: &LoadPath,
    basis: &ReducedBasis,
    source: &CoefficientSource<'_>,
    cfg: &OnlineConfig,
) -> Result<()> {
    if let Some(expected) = cfg.expected_basis {
        let found = basis.digest();
        if expected != found {
            return Err(mesh_mismatch(&expected, &found));
        }
    }
    match source {
        CoefficientSource::Rnn(m) => {
            m.validate()?;
            if m.dims.n_b != basis.n_b() {
                return Err(Error::Shape(format!(
                    "model predicts {} coefficients, basis has {} columns",
                    m.dims.n_b,
                    basis.n_b()
                )));
            }
        }
        CoefficientSource::Exact(a) => {
            if a.shape() != (path.len(), basis.n_b()) {
                return Err(Error::Shape(format!(
                    "coefficients {:?} for {} increments and {} basis columns",
                    a.shape(),
                    path.len(),
                    basis.n_b()
                )));
            }
        }
    }
    Ok(())
}

/// Runs a load path from the virgin state. Each increment takes the
/// coefficients from `source`, reconstructs `u = Ψω + Φα`, performs exactly
/// one stress update per quadrature point and commits the result.
pub fn run_online(
    path: &LoadPath,
    basis: &ReducedBasis,
    source: CoefficientSource<'_>,
    assembler: &Assembler,
    config: &OnlineConfig,
) -> Result<OnlineResult> {
    basis.check_mesh(&assembler.mesh)?;
    check_inputs(path, basis, &source, config)?;
    let solves0 = linear_solve_count();
    let mut stepper = match source {
        CoefficientSource::Rnn(m) => Some(m.stepper()),
        CoefficientSource::Exact(_) => None,
    };
    let mut states = assembler.virgin_states();
    let mut stresses = vec![Matrix3::zeros(); assembler.mesh.n_quad_points()];
    let mut timing = StageTiming::default();
    let mut increments = Vec::with_capacity(path.len());
    let mut fields = Vec::new();
    let (mut stress_updates, mut inner_solves) = (0, 0);

    for (k, stretch) in path.increments.iter().enumerate() {
        let inc = k + 1;
        let t = clock::tick();
        let alpha = match (&mut stepper, source) {
            (Some(s), _) => s.step([stretch.u11, stretch.u12]),
            (None, CoefficientSource::Exact(a)) => a.row(k).transpose(),
            (None, CoefficientSource::Rnn(_)) => unreachable!(),
        };
        timing.predict += t.secs();

        let t = clock::tick();
        let u = basis.reconstruct(&stretch.omega(), &alpha);
        timing.reconstruct += t.secs();

        let t = clock::tick();
        let outcome = assembler.assemble(u.as_slice(), &states, TangentMode::None);
        timing.stress_update += t.secs();
        let (residual, failure) = match outcome {
            Ok(asm) => {
                stress_updates += asm.stress_updates;
                inner_solves += asm.linear_solves;
                let f = DVector::from_column_slice(&asm.f_int);
                states = asm.states;
                stresses = asm.stresses;
                (basis.phi.tr_mul(&f).norm(), None)
            }
            Err(e) if config.continue_on_failure => (f64::NAN, Some(e.to_string())),
            Err(e) => {
                return Err(Error::Simulation {
                    increment: inc,
                    source: Box::new(e),
                })
            }
        };

        let t = clock::tick();
        let homogenized_stress = homogenize(assembler, &stresses);
        timing.homogenize += t.secs();

        if config.record_fields.contains(&inc) {
            fields.push(FieldSnapshot {
                increment: inc,
                u: u.as_slice().to_vec(),
                states: states.clone(),
                stresses: stresses.clone(),
            });
        }
        increments.push(OnlineIncrement {
            stretch: *stretch,
            alpha,
            homogenized_stress,
            residual,
            failure,
        });
    }
    Ok(OnlineResult {
        increments,
        fields,
        final_states: states,
        timing,
        stress_updates,
        linear_solves: linear_solve_count() - solves0 + inner_solves,
    })
}
