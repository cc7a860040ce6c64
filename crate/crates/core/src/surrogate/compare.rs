//! Method-agnostic response histories, error metrics between two of them,
//! and CSV exports.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix3};

use super::online::OnlineResult;
use crate::error::{Error, Result};
use crate::fem::{DnsSolution, QUAD_POINTS_PER_ELEMENT};
use crate::loading::MacroStretch;
use crate::pod::{project, ReducedBasis, ReducedSolution};

/// Full-scale coefficient errors reported for the original 100-mode study,
/// written into report headers for reference only.
pub const REFERENCE_CYCLIC_COEFFICIENT_ERROR: f64 = 3e-5;
pub const REFERENCE_RANDOM_COEFFICIENT_ERROR: f64 = 4e-4;

/// Per-increment macroscopic response of one simulation method.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseHistory {
    pub stretch: Vec<MacroStretch>,
    /// `n_inc × n_b`; zero columns when the method has no coefficients.
    pub alpha: DMatrix<f64>,
    pub stress: Vec<Matrix3<f64>>,
    /// Plastic multiplier per quadrature point at selected 1-based increments.
    pub lambda: Vec<(usize, Vec<f64>)>,
}

impl ResponseHistory {
    pub fn len(&self) -> usize {
        self.stretch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stretch.is_empty()
    }

    pub fn from_online(r: &OnlineResult) -> Self {
        Self {
            stretch: r.increments.iter().map(|i| i.stretch).collect(),
            alpha: r.coefficients(),
            stress: r.increments.iter().map(|i| i.homogenized_stress).collect(),
            lambda: r
                .fields
                .iter()
                .map(|f| (f.increment, f.states.iter().map(|s| s.lambda).collect()))
                .collect(),
        }
    }

    pub fn from_reduced(sols: &[ReducedSolution]) -> Self {
        Self {
            stretch: sols.iter().map(|s| s.stretch).collect(),
            alpha: crate::pod::coefficient_matrix(sols),
            stress: sols.iter().map(|s| s.homogenized_stress).collect(),
            lambda: sols
                .iter()
                .enumerate()
                .filter_map(|(k, s)| {
                    s.states
                        .as_ref()
                        .map(|st| (k + 1, st.iter().map(|q| q.lambda).collect()))
                })
                .collect(),
        }
    }

    /// With a basis, the coefficients are the projections `Φᵀ(u − Ψω)`.
    pub fn from_dns(sols: &[DnsSolution], basis: Option<&ReducedBasis>) -> Result<Self> {
        let n_b = basis.map_or(0, |b| b.n_b());
        let mut alpha = DMatrix::zeros(sols.len(), n_b);
        if let Some(b) = basis {
            for (k, s) in sols.iter().enumerate() {
                let u = DVector::from_column_slice(&s.u);
                let a = project(&(u - &b.psi * s.stretch.omega()), b)?;
                alpha.set_row(k, &a.transpose());
            }
        }
        Ok(Self {
            stretch: sols.iter().map(|s| s.stretch).collect(),
            alpha,
            stress: sols.iter().map(|s| s.homogenized_stress).collect(),
            lambda: sols
                .iter()
                .enumerate()
                .filter_map(|(k, s)| {
                    s.states
                        .as_ref()
                        .map(|st| (k + 1, st.iter().map(|q| q.lambda).collect()))
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    /// `‖α_a − α_b‖²` per increment; empty when either side has no coefficients.
    pub coefficient_error: Vec<f64>,
    /// Mean of `coefficient_error` over the path.
    pub coefficient_mse: Option<f64>,
    /// `‖P_a − P_b‖ / ‖P_b‖` over all increments and the in-plane components
    /// P11, P22, P12, P21.
    pub stress_error: f64,
    /// `λ_a − λ_b` at increments recorded by both.
    pub lambda_difference: Vec<(usize, Vec<f64>)>,
}

const IN_PLANE: [(usize, usize); 4] = [(0, 0), (1, 1), (0, 1), (1, 0)];

/// Relative L2 difference of two homogenized-stress histories, `b` being the reference.
pub fn stress_trace_error(a: &[Matrix3<f64>], b: &[Matrix3<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{} vs {} increments",
            a.len(),
            b.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (pa, pb) in a.iter().zip(b) {
        for &(i, j) in &IN_PLANE {
            num += (pa[(i, j)] - pb[(i, j)]).powi(2);
            den += pb[(i, j)].powi(2);
        }
    }
    Ok(if num == 0.0 { 0.0 } else { (num / den).sqrt() })
}

/// Compares `a` against the reference `b`.
pub fn compare_fields(a: &ResponseHistory, b: &ResponseHistory) -> Result<CompareReport> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{} vs {} increments",
            a.len(),
            b.len()
        )));
    }
    let stress_error = stress_trace_error(&a.stress, &b.stress)?;
    let (coefficient_error, coefficient_mse) = if a.alpha.ncols() > 0 && b.alpha.ncols() > 0 {
        if a.alpha.shape() != b.alpha.shape() {
            return Err(Error::Shape(format!(
                "coefficients {:?} vs {:?}",
                a.alpha.shape(),
                b.alpha.shape()
            )));
        }
        let d = &a.alpha - &b.alpha;
        let per: Vec<f64> = d.row_iter().map(|r| r.norm_squared()).collect();
        let mean = if per.is_empty() {
            0.0
        } else {
            per.iter().sum::<f64>() / per.len() as f64
        };
        (per, Some(mean))
    } else {
        (Vec::new(), None)
    };
    let mut lambda_difference = Vec::new();
    for (inc, la) in &a.lambda {
        if let Some((_, lb)) = b.lambda.iter().find(|(k, _)| k == inc) {
            if la.len() != lb.len() {
                return Err(Error::Shape(format!(
                    "λ fields of {} and {} points",
                    la.len(),
                    lb.len()
                )));
            }
            lambda_difference.push((*inc, la.iter().zip(lb).map(|(x, y)| x - y).collect()));
        }
    }
    Ok(CompareReport {
        coefficient_error,
        coefficient_mse,
        stress_error,
        lambda_difference,
    })
}

/// `inc,U11,U22,U12,P11,P22,P12,P21`.
pub fn write_stress_csv(w: &mut impl Write, h: &ResponseHistory) -> Result<()> {
    writeln!(w, "inc,U11,U22,U12,P11,P22,P12,P21")?;
    for (k, (s, p)) in h.stretch.iter().zip(&h.stress).enumerate() {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            k + 1,
            s.u11,
            s.u22,
            s.u12,
            p[(0, 0)],
            p[(1, 1)],
            p[(0, 1)],
            p[(1, 0)]
        )?;
    }
    Ok(())
}

/// `element,gp,lambda` for a field indexed `4·element + gp`.
pub fn write_lambda_csv(w: &mut impl Write, lambda: &[f64]) -> Result<()> {
    writeln!(w, "element,gp,lambda")?;
    for (q, l) in lambda.iter().enumerate() {
        writeln!(
            w,
            "{},{},{:e}",
            q / QUAD_POINTS_PER_ELEMENT,
            q % QUAD_POINTS_PER_ELEMENT,
            l
        )?;
    }
    Ok(())
}

/// `inc,coefficient_error` per increment.
pub fn write_coefficient_error_csv(w: &mut impl Write, report: &CompareReport) -> Result<()> {
    writeln!(w, "inc,coefficient_error")?;
    for (k, e) in report.coefficient_error.iter().enumerate() {
        writeln!(w, "{},{:e}", k + 1, e)?;
    }
    Ok(())
}

/// Wall-clock and work counters of one method on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: String,
    pub stage: String,
    pub increments: usize,
    pub seconds: f64,
    pub linear_solves: u64,
    pub stress_updates: u64,
}

impl TimingRow {
    pub fn per_increment(&self) -> f64 {
        if self.increments == 0 {
            0.0
        } else {
            self.seconds / self.increments as f64
        }
    }
}

pub fn write_timing_csv(w: &mut impl Write, rows: &[TimingRow]) -> Result<()> {
    writeln!(
        w,
        "method,stage,increments,seconds,seconds_per_increment,linear_solves,stress_updates"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{},{}",
            r.method,
            r.stage,
            r.increments,
            r.seconds,
            r.per_increment(),
            r.linear_solves,
            r.stress_updates
        )?;
    }
    Ok(())
}
