//! Pointwise finite-strain elastoplasticity.
//!
//! The deformation gradient is split multiplicatively, `F = Fe·Fp`. The
//! elastic response derives from a compressible neo-Hookean-type energy in
//! `Fe`; plastic flow is associated, driven by the deviatoric Mandel stress
//! `M = Feᵀ·Pe`, with power-law isotropic hardening.
//!
//! [`stress_update`] integrates the flow rule with backward Euler and an
//! exponential map, so `det(Fp)` is preserved. Because the energy is
//! isotropic, the updated elastic right Cauchy-Green tensor stays coaxial
//! with its trial value and the local problem reduces to principal
//! logarithmic strains. The consistent tangent is obtained by implicit
//! differentiation of that local problem plus the spectral derivative of an
//! isotropic tensor function.

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Matrix3, Matrix4, SMatrix, SymmetricEigen, Vector3, Vector4};

use crate::error::{Error, Result};

/// Fourth-order tangent `∂P_iJ/∂F_kL` stored at `(3i+J, 3k+L)`.
pub type Tangent = SMatrix<f64, 9, 9>;

#[inline]
pub fn pair(i: usize, j: usize) -> usize {
    3 * i + j
}

const MAX_LOCAL_ITERATIONS: usize = 50;
/// Relative eigenvalue gap below which the divided difference of the
/// principal stresses is replaced by its limit.
const COALESCED_EIGENVALUES: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    /// Initial yield stress. `None` marks an elastic-only phase.
    pub initial_yield: Option<f64>,
    pub hardening_modulus: f64,
    pub hardening_exponent: f64,
}

impl MaterialParams {
    pub fn new(
        youngs_modulus: f64,
        poissons_ratio: f64,
        initial_yield: Option<f64>,
        hardening_modulus: f64,
        hardening_exponent: f64,
    ) -> Result<Self> {
        let params = Self {
            youngs_modulus,
            poissons_ratio,
            initial_yield,
            hardening_modulus,
            hardening_exponent,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn elastic(youngs_modulus: f64, poissons_ratio: f64) -> Result<Self> {
        Self::new(youngs_modulus, poissons_ratio, None, 0.0, 1.0)
    }

    /// Elastoplastic matrix phase: E = 1, ν = 0.3, M0 = 0.01, h = 0.02, m = 1.05.
    pub fn matrix_default() -> Self {
        Self {
            youngs_modulus: 1.0,
            poissons_ratio: 0.3,
            initial_yield: Some(0.01),
            hardening_modulus: 0.02,
            hardening_exponent: 1.05,
        }
    }

    /// Purely elastic particle phase: E = 20, ν = 0.3.
    pub fn particle_default() -> Self {
        Self {
            youngs_modulus: 20.0,
            poissons_ratio: 0.3,
            initial_yield: None,
            hardening_modulus: 0.0,
            hardening_exponent: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return bad("Young's modulus must be positive and finite");
        }
        if !(self.poissons_ratio > -1.0 && self.poissons_ratio < 0.5) {
            return bad("Poisson's ratio must lie in (-1, 0.5)");
        }
        if let Some(m0) = self.initial_yield {
            if !(m0 > 0.0) {
                return bad("initial yield stress must be positive");
            }
        }
        if !(self.hardening_modulus >= 0.0) {
            return bad("hardening modulus must be non-negative");
        }
        if !(self.hardening_exponent > 0.0) {
            return bad("hardening exponent must be positive");
        }
        Ok(())
    }

    pub fn is_elastic_only(&self) -> bool {
        self.initial_yield.is_none()
    }

    pub fn shear_modulus(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poissons_ratio))
    }

    pub fn lame_lambda(&self) -> f64 {
        let (e, nu) = (self.youngs_modulus, self.poissons_ratio);
        e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }

    /// Yield-function tolerance, `1e-10·E`.
    pub fn yield_tolerance(&self) -> f64 {
        1e-10 * self.youngs_modulus
    }

    fn hardening(&self, lambda: f64) -> f64 {
        self.hardening_modulus * lambda.max(0.0).powf(self.hardening_exponent)
    }

    fn hardening_slope(&self, lambda: f64) -> f64 {
        let (h, m) = (self.hardening_modulus, self.hardening_exponent);
        if lambda > 0.0 {
            h * m * lambda.powf(m - 1.0)
        } else if m > 1.0 {
            0.0
        } else if m == 1.0 {
            h
        } else {
            f64::MAX.sqrt()
        }
    }
}

/// History at one quadrature point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPointState {
    pub fp: Matrix3<f64>,
    pub lambda: f64,
}

impl Default for QuadPointState {
    fn default() -> Self {
        Self {
            fp: Matrix3::identity(),
            lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TangentMode {
    /// Linearization of the discrete update.
    #[default]
    Exact,
    /// Central differences with step 1e-7; for debugging the exact tangent.
    FiniteDifference,
    /// Stress only.
    None,
}

#[derive(Debug, Clone)]
pub struct StressResult {
    /// First Piola-Kirchhoff stress.
    pub stress: Matrix3<f64>,
    pub tangent: Option<Tangent>,
    pub state: QuadPointState,
    pub delta_lambda: f64,
}

impl StressResult {
    pub fn is_plastic(&self) -> bool {
        self.delta_lambda > 0.0
    }
}

fn checked_det(f: &Matrix3<f64>) -> Result<f64> {
    let det = f.determinant();
    if det > 0.0 && det.is_finite() {
        Ok(det)
    } else {
        Err(Error::Inversion { det })
    }
}

pub fn strain_energy(fe: &Matrix3<f64>, params: &MaterialParams) -> Result<f64> {
    let je = checked_det(fe)?;
    let ie = (fe.transpose() * fe).trace();
    let (e, nu) = (params.youngs_modulus, params.poissons_ratio);
    let ln_j = je.ln();
    Ok(e * (ie - 3.0 - 2.0 * ln_j) / (4.0 * (1.0 + nu))
        + e * nu * ln_j * ln_j / (2.0 * (1.0 + nu) * (1.0 - 2.0 * nu)))
}

/// `Pe = ∂W/∂Fe`.
pub fn elastic_piola(fe: &Matrix3<f64>, params: &MaterialParams) -> Result<Matrix3<f64>> {
    let je = checked_det(fe)?;
    let fe_inv_t = fe
        .try_inverse()
        .ok_or(Error::Inversion { det: je })?
        .transpose();
    Ok(params.shear_modulus() * (fe - fe_inv_t) + params.lame_lambda() * je.ln() * fe_inv_t)
}

pub fn mandel_stress(fe: &Matrix3<f64>, params: &MaterialParams) -> Result<Matrix3<f64>> {
    Ok(fe.transpose() * elastic_piola(fe, params)?)
}

pub fn deviator(m: &Matrix3<f64>) -> Matrix3<f64> {
    m - Matrix3::identity() * (m.trace() / 3.0)
}

pub fn equivalent_stress(m: &Matrix3<f64>) -> f64 {
    let dev = deviator(m);
    (1.5 * dev.component_mul(&dev).sum()).sqrt()
}

/// `y = sqrt(3/2 M_dev:M_dev) − M0 − h·λ^m`; `−∞` for elastic-only phases.
pub fn yield_value(m: &Matrix3<f64>, lambda: f64, params: &MaterialParams) -> f64 {
    match params.initial_yield {
        None => f64::NEG_INFINITY,
        Some(m0) => equivalent_stress(m) - m0 - params.hardening(lambda),
    }
}

/// Deviatoric quantities as functions of principal logarithmic elastic strains.
struct PrincipalDeviator {
    dev: Vector3<f64>,
    q: f64,
    /// `∂dev_j/∂e_l`.
    ddev_de: Matrix3<f64>,
}

impl PrincipalDeviator {
    fn at(e: &Vector3<f64>, mu: f64) -> Self {
        let c = e.map(|x| (2.0 * x).exp());
        let mean = c.sum() / 3.0;
        let dev = (c - Vector3::repeat(mean)) * mu;
        let q = (1.5 * dev.norm_squared()).sqrt();
        let ddev_de = Matrix3::from_fn(|j, l| {
            let kron = if j == l { 1.0 } else { 0.0 };
            mu * (kron - 1.0 / 3.0) * 2.0 * c[l]
        });
        Self { dev, q, ddev_de }
    }

    fn flow_direction(&self) -> Vector3<f64> {
        self.dev * (1.5 / self.q)
    }

    fn dflow_de(&self) -> Matrix3<f64> {
        let q = self.q;
        let dn_ddev = Matrix3::from_fn(|k, j| {
            let kron = if k == j { 1.0 } else { 0.0 };
            1.5 * (kron / q - 1.5 * self.dev[k] * self.dev[j] / (q * q * q))
        });
        dn_ddev * self.ddev_de
    }
}

/// Solution of the principal-space return mapping.
struct LocalSolution {
    strain: Vector3<f64>,
    delta_lambda: f64,
    /// `∂e/∂e_trial`.
    sensitivity: Matrix3<f64>,
}

fn local_jacobian(
    pd: &PrincipalDeviator,
    delta_lambda: f64,
    lambda: f64,
    params: &MaterialParams,
) -> Matrix4<f64> {
    let n = pd.flow_direction();
    let dn = pd.dflow_de();
    let dy_de = pd.ddev_de.transpose() * n;
    let mut jac = Matrix4::zeros();
    for k in 0..3 {
        for l in 0..3 {
            jac[(k, l)] = if k == l { 1.0 } else { 0.0 } + delta_lambda * dn[(k, l)];
        }
        jac[(k, 3)] = n[k];
        jac[(3, k)] = dy_de[k];
    }
    jac[(3, 3)] = -params.hardening_slope(lambda);
    jac
}

fn return_map(
    trial: &Vector3<f64>,
    lambda_old: f64,
    yield_trial: f64,
    m0: f64,
    params: &MaterialParams,
) -> Result<LocalSolution> {
    let mu = params.shear_modulus();
    let tol = params.yield_tolerance();

    let mean_c = trial.map(|x| (2.0 * x).exp()).sum() / 3.0;
    let mut strain = *trial;
    let mut dl = yield_trial / (3.0 * mu * mean_c + params.hardening_slope(lambda_old));

    let mut flow_res = f64::INFINITY;
    let mut yield_res = f64::INFINITY;
    for it in 0..MAX_LOCAL_ITERATIONS {
        let pd = PrincipalDeviator::at(&strain, mu);
        let n = pd.flow_direction();
        let lambda = lambda_old + dl;
        let r_flow = strain - trial + n * dl;
        let r_yield = pd.q - m0 - params.hardening(lambda);
        flow_res = r_flow.amax();
        yield_res = r_yield.abs();

        let jac = local_jacobian(&pd, dl, lambda, params);
        let tight = flow_res <= 1e-15 && yield_res <= 1e-5 * tol;
        let loose = flow_res <= 1e-11 && yield_res <= tol;
        let stalled = it + 1 == MAX_LOCAL_ITERATIONS;
        if tight || (loose && stalled) || (loose && it > 8) {
            let inv = jac.try_inverse().ok_or(Error::ReturnMapping {
                iterations: it,
                flow_residual: flow_res,
                yield_residual: yield_res,
            })?;
            return Ok(LocalSolution {
                strain,
                delta_lambda: dl,
                sensitivity: inv.fixed_view::<3, 3>(0, 0).into_owned(),
            });
        }

        let rhs = -Vector4::new(r_flow[0], r_flow[1], r_flow[2], r_yield);
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        strain += step.fixed_rows::<3>(0);
        let next = dl + step[3];
        dl = if next > 0.0 { next } else { 0.5 * dl };
        if !dl.is_finite() || !strain.iter().all(|x| x.is_finite()) {
            break;
        }
    }
    Err(Error::ReturnMapping {
        iterations: MAX_LOCAL_ITERATIONS,
        flow_residual: flow_res,
        yield_residual: yield_res,
    })
}

thread_local! {
    static STRESS_UPDATES: Cell<u64> = const { Cell::new(0) };
}

static STRESS_UPDATES_TOTAL: AtomicU64 = AtomicU64::new(0);

/// Number of [`stress_update`] calls made on this thread so far.
pub fn stress_update_count() -> u64 {
    STRESS_UPDATES.with(Cell::get)
}

/// Process-wide count over all threads.
pub fn total_stress_update_count() -> u64 {
    STRESS_UPDATES_TOTAL.load(Ordering::Relaxed)
}

/// Implicit stress update from a committed state for the (F-bar modified)
/// deformation gradient `f_bar`.
pub fn stress_update(
    f_bar: &Matrix3<f64>,
    old: &QuadPointState,
    params: &MaterialParams,
    mode: TangentMode,
) -> Result<StressResult> {
    STRESS_UPDATES.with(|c| c.set(c.get() + 1));
    STRESS_UPDATES_TOTAL.fetch_add(1, Ordering::Relaxed);
    let mut result = update_exact(f_bar, old, params, mode == TangentMode::Exact)?;
    if mode == TangentMode::FiniteDifference {
        result.tangent = Some(finite_difference_tangent(f_bar, old, params, 1e-7)?);
    }
    Ok(result)
}

fn update_exact(
    f_bar: &Matrix3<f64>,
    old: &QuadPointState,
    params: &MaterialParams,
    want_tangent: bool,
) -> Result<StressResult> {
    checked_det(f_bar)?;
    let g = old.fp.try_inverse().ok_or(Error::Inversion {
        det: old.fp.determinant(),
    })?;
    let fe_trial = f_bar * g;
    let ce_trial = fe_trial.transpose() * fe_trial;
    let eig = SymmetricEigen::new(ce_trial);
    let c_trial = eig.eigenvalues;
    let v = eig.eigenvectors;
    if c_trial.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Inversion {
            det: c_trial.product(),
        });
    }
    let e_trial = c_trial.map(|c| 0.5 * c.ln());

    let mu = params.shear_modulus();
    let lame = params.lame_lambda();

    let (strain, delta_lambda, sensitivity) = match params.initial_yield {
        None => (e_trial, 0.0, Matrix3::identity()),
        Some(m0) => {
            let pd = PrincipalDeviator::at(&e_trial, mu);
            let y_trial = pd.q - m0 - params.hardening(old.lambda);
            if y_trial <= params.yield_tolerance() {
                (e_trial, 0.0, Matrix3::identity())
            } else {
                let sol = return_map(&e_trial, old.lambda, y_trial, m0, params)?;
                (sol.strain, sol.delta_lambda, sol.sensitivity)
            }
        }
    };

    let c_new = strain.map(|x| (2.0 * x).exp());
    let ln_j = strain.sum();
    let mandel = c_new.map(|c| mu * (c - 1.0) + lame * ln_j);
    // Principal values of S̃ = Ce_trial⁻¹·M, so that P = F̄·G·S̃·Gᵀ.
    let s = mandel.component_div(&c_trial);

    let s_tensor = v * Matrix3::from_diagonal(&s) * v.transpose();
    let pull = g * s_tensor * g.transpose();
    let stress = f_bar * pull;

    let fp = if delta_lambda > 0.0 {
        let expo = (e_trial - strain).map(f64::exp);
        v * Matrix3::from_diagonal(&expo) * v.transpose() * old.fp
    } else {
        old.fp
    };
    let state = QuadPointState {
        fp,
        lambda: old.lambda + delta_lambda,
    };

    let tangent = want_tangent.then(|| {
        // ∂m/∂c_trial through the local solution.
        let dm_de = Matrix3::from_fn(|i, k| {
            if i == k {
                2.0 * mu * c_new[i] + lame
            } else {
                lame
            }
        });
        let dm_dc = dm_de * sensitivity * Matrix3::from_diagonal(&c_trial.map(|c| 0.5 / c));
        let ds_dc = Matrix3::from_fn(|i, j| {
            let diag = if i == j {
                mandel[i] / (c_trial[i] * c_trial[i])
            } else {
                0.0
            };
            dm_dc[(i, j)] / c_trial[i] - diag
        });
        let mut theta = Matrix3::zeros();
        for p in 0..3 {
            for q in 0..3 {
                if p == q {
                    continue;
                }
                let gap = c_trial[p] - c_trial[q];
                let scale = c_trial[p].abs().max(c_trial[q].abs()).max(1.0);
                theta[(p, q)] = if gap.abs() > COALESCED_EIGENVALUES * scale {
                    (s[p] - s[q]) / gap
                } else {
                    ds_dc[(p, p)] - ds_dc[(p, q)]
                };
            }
        }
        spectral_tangent(&(fe_trial * v), &(g * v), &pull, &ds_dc, &theta)
    });

    Ok(StressResult {
        stress,
        tangent,
        state,
        delta_lambda,
    })
}

/// Assembles `∂P/∂F̄` from the eigen-projected kinematics `a = Fe_trial·V`,
/// `b = G·V`, the principal sensitivities and the off-diagonal divided
/// differences.
fn spectral_tangent(
    a: &Matrix3<f64>,
    b: &Matrix3<f64>,
    pull: &Matrix3<f64>,
    ds_dc: &Matrix3<f64>,
    theta: &Matrix3<f64>,
) -> Tangent {
    let mut t = Tangent::zeros();
    for i in 0..3 {
        for jj in 0..3 {
            let row = pair(i, jj);
            for k in 0..3 {
                for ll in 0..3 {
                    let mut val = if i == k { pull[(ll, jj)] } else { 0.0 };
                    for p in 0..3 {
                        let apbp = a[(i, p)] * b[(jj, p)];
                        for q in 0..3 {
                            val += 2.0 * ds_dc[(p, q)] * apbp * a[(k, q)] * b[(ll, q)];
                            if p != q {
                                val += theta[(p, q)]
                                    * a[(i, p)]
                                    * b[(jj, q)]
                                    * (a[(k, p)] * b[(ll, q)] + a[(k, q)] * b[(ll, p)]);
                            }
                        }
                    }
                    t[(row, pair(k, ll))] = val;
                }
            }
        }
    }
    t
}

/// Central-difference tangent of the stress update with respect to `f_bar`.
pub fn finite_difference_tangent(
    f_bar: &Matrix3<f64>,
    old: &QuadPointState,
    params: &MaterialParams,
    step: f64,
) -> Result<Tangent> {
    let mut t = Tangent::zeros();
    for k in 0..3 {
        for l in 0..3 {
            let mut fp = *f_bar;
            let mut fm = *f_bar;
            fp[(k, l)] += step;
            fm[(k, l)] -= step;
            let pp = update_exact(&fp, old, params, false)?.stress;
            let pm = update_exact(&fm, old, params, false)?.stress;
            let col = (pp - pm) / (2.0 * step);
            for i in 0..3 {
                for j in 0..3 {
                    t[(pair(i, j), pair(k, l))] = col[(i, j)];
                }
            }
        }
    }
    Ok(t)
}

/// Maximum of `|exact − FD| / max(1, |exact|)` over all tangent components,
/// with central differences of step 1e-6.
pub fn tangent_check(
    f_bar: &Matrix3<f64>,
    old: &QuadPointState,
    params: &MaterialParams,
) -> Result<f64> {
    let exact = stress_update(f_bar, old, params, TangentMode::Exact)?
        .tangent
        .expect("exact mode returns a tangent");
    let fd = finite_difference_tangent(f_bar, old, params, 1e-6)?;
    Ok(exact
        .iter()
        .zip(fd.iter())
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Elastic trial and updated Mandel stresses for diagnostics.
pub fn mandel_from_state(
    f_bar: &Matrix3<f64>,
    state: &QuadPointState,
    params: &MaterialParams,
) -> Result<Matrix3<f64>> {
    let g = state.fp.try_inverse().ok_or(Error::Inversion {
        det: state.fp.determinant(),
    })?;
    mandel_stress(&(f_bar * g), params)
}

/// Embeds an in-plane 2×2 gradient as a plane-strain 3×3 gradient.
pub fn plane_strain(f: &nalgebra::Matrix2<f64>) -> Matrix3<f64> {
    Matrix3::new(
        f[(0, 0)],
        f[(0, 1)],
        0.0,
        f[(1, 0)],
        f[(1, 1)],
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn unit() -> MaterialParams {
        MaterialParams::new(1.0, 0.3, Some(0.01), 0.02, 1.05).unwrap()
    }

    #[test]
    fn energy_vanishes_at_identity_and_rotations() {
        let p = unit();
        assert_eq!(strain_energy(&Matrix3::identity(), &p).unwrap(), 0.0);
        let r = Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        assert!(strain_energy(&r, &p).unwrap().abs() < 1e-14);
    }

    #[test]
    fn energy_uniaxial_hand_value() {
        // I_e = 6, J_e = 2: 2(1 - ln 2)/5.2 + 0.3 ln²2/(2.6·0.4)
        let w = strain_energy(
            &Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0)),
            &unit(),
        )
        .unwrap();
        let expected = (3.0 - 2.0 * 2f64.ln()) / 5.2 + 0.3 * 2f64.ln().powi(2) / 1.04;
        assert_relative_eq!(w, expected, epsilon = 1e-14);
        assert_relative_eq!(w, 0.448920, epsilon = 1e-6);
    }

    #[test]
    fn inverted_gradient_is_rejected() {
        let f = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        assert!(matches!(
            strain_energy(&f, &unit()),
            Err(Error::Inversion { .. })
        ));
        assert!(mandel_stress(&f, &unit()).is_err());
    }

    fn fd_piola(fe: &Matrix3<f64>, p: &MaterialParams, h: f64) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| {
            let mut a = *fe;
            let mut b = *fe;
            a[(i, j)] += h;
            b[(i, j)] -= h;
            (strain_energy(&a, p).unwrap() - strain_energy(&b, p).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn mandel_matches_energy_derivative() {
        let p = unit();
        assert_eq!(
            mandel_stress(&Matrix3::identity(), &p).unwrap(),
            Matrix3::zeros()
        );
        let fe = Matrix3::from_diagonal(&Vector3::new(1.0 + 1e-6, 1.0, 1.0));
        let m = mandel_stress(&fe, &p).unwrap();
        let oracle = fe.transpose() * fd_piola(&fe, &p, 1e-7);
        assert!((m - oracle).amax() < 1e-8);
    }

    #[test]
    fn yield_examples() {
        let p = unit();
        assert_eq!(yield_value(&Matrix3::zeros(), 0.0, &p), -0.01);
        assert_relative_eq!(
            yield_value(&(Matrix3::identity() * 3.7), 0.0, &p),
            -0.01,
            epsilon = 1e-15
        );
        // pure shear deviator with equivalent stress 0.05
        let tau = 0.05 / 3f64.sqrt();
        let m = Matrix3::new(0.0, tau, 0.0, tau, 0.0, 0.0, 0.0, 0.0, 0.0);
        let y = yield_value(&m, 0.5, &p);
        assert_relative_eq!(y, 0.05 - 0.01 - 0.02 * 0.5f64.powf(1.05), epsilon = 1e-15);
        assert_relative_eq!(y, 0.0303406, epsilon = 1e-6);
        assert_eq!(
            yield_value(&m, 0.0, &MaterialParams::particle_default()),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn identity_update_is_stress_free() {
        let p = unit();
        let r = stress_update(
            &Matrix3::identity(),
            &QuadPointState::default(),
            &p,
            TangentMode::Exact,
        )
        .unwrap();
        assert!(r.stress.amax() < 1e-15);
        assert_eq!(r.state, QuadPointState::default());
        assert!(
            tangent_check(&Matrix3::identity(), &QuadPointState::default(), &p).unwrap() < 1e-8
        );
    }

    #[test]
    fn small_shear_stays_elastic() {
        let p = unit();
        let mut f = Matrix3::identity();
        f[(0, 1)] = 0.005;
        let r = stress_update(&f, &QuadPointState::default(), &p, TangentMode::None).unwrap();
        assert_eq!(r.delta_lambda, 0.0);
        assert_eq!(r.state.fp, Matrix3::identity());
        let m = mandel_stress(&f, &p).unwrap();
        assert!(yield_value(&m, 0.0, &p) < 0.0);
    }

    #[test]
    fn plastic_update_satisfies_kkt_and_incompressibility() {
        let p = unit();
        let mut f = Matrix3::identity();
        f[(0, 1)] = 0.08;
        f[(0, 0)] = 1.03;
        let r = stress_update(&f, &QuadPointState::default(), &p, TangentMode::Exact).unwrap();
        assert!(r.delta_lambda > 0.0);
        assert!((r.state.fp.determinant() - 1.0).abs() < 1e-12);
        let m = mandel_from_state(&f, &r.state, &p).unwrap();
        let y = yield_value(&m, r.state.lambda, &p);
        assert!(y.abs() <= p.yield_tolerance(), "y = {y:e}");
        // P = Fe⁻ᵀ·M·Fp⁻ᵀ
        let fe = f * r.state.fp.try_inverse().unwrap();
        let p_direct =
            elastic_piola(&fe, &p).unwrap() * r.state.fp.try_inverse().unwrap().transpose();
        assert!((p_direct - r.stress).amax() < 1e-13);
        // plane-strain block structure of Fp is preserved
        assert!(r.state.fp[(0, 2)].abs() < 1e-15 && r.state.fp[(2, 1)].abs() < 1e-15);
    }

    #[test]
    fn finite_difference_mode_tracks_exact() {
        let p = unit();
        let mut f = Matrix3::identity();
        f[(0, 1)] = 0.1;
        let old = QuadPointState::default();
        let a = stress_update(&f, &old, &p, TangentMode::Exact)
            .unwrap()
            .tangent
            .unwrap();
        let b = stress_update(&f, &old, &p, TangentMode::FiniteDifference)
            .unwrap()
            .tangent
            .unwrap();
        assert!((a - b).amax() < 1e-6);
        assert!(stress_update(&f, &old, &p, TangentMode::None)
            .unwrap()
            .tangent
            .is_none());
    }

    #[test]
    fn unload_to_identity_is_reversible_below_yield() {
        let p = unit();
        let mut f = Matrix3::identity();
        f[(1, 0)] = 0.004;
        let s1 = stress_update(&f, &QuadPointState::default(), &p, TangentMode::None).unwrap();
        let s2 = stress_update(&Matrix3::identity(), &s1.state, &p, TangentMode::None).unwrap();
        assert!(s2.stress.amax() < 1e-15);
        assert_eq!(s2.state.lambda, 0.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(MaterialParams::new(-1.0, 0.3, Some(0.01), 0.0, 1.0).is_err());
        assert!(MaterialParams::new(1.0, 0.5, Some(0.01), 0.0, 1.0).is_err());
        assert!(MaterialParams::new(1.0, 0.3, Some(0.0), 0.0, 1.0).is_err());
        assert!(MaterialParams::new(1.0, 0.3, Some(0.01), -0.1, 1.0).is_err());
        assert!(MaterialParams::new(1.0, 0.3, Some(0.01), 0.1, 0.0).is_err());
    }

    fn rotation_strategy() -> impl Strategy<Value = Matrix3<f64>> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)
            .prop_map(|(a, b, c)| Rotation3::from_euler_angles(a, b, c).into_inner())
    }

    fn stretch_strategy() -> impl Strategy<Value = Matrix3<f64>> {
        proptest::array::uniform9(-0.25..0.25f64)
            .prop_map(|v| Matrix3::identity() + Matrix3::from_row_slice(&v))
    }

    proptest! {
        #[test]
        fn energy_is_frame_indifferent(r in rotation_strategy(), fe in stretch_strategy()) {
            prop_assume!(fe.determinant() > 0.1);
            let p = unit();
            let w0 = strain_energy(&fe, &p).unwrap();
            let w1 = strain_energy(&(r * fe), &p).unwrap();
            prop_assert!((w0 - w1).abs() <= 1e-12 * w0.abs().max(1.0));
        }

        #[test]
        fn mandel_matches_fd_oracle(fe in stretch_strategy()) {
            prop_assume!(fe.determinant() > 0.2);
            let p = unit();
            let m = mandel_stress(&fe, &p).unwrap();
            let oracle = fe.transpose() * fd_piola(&fe, &p, 1e-6);
            prop_assert!((m - oracle).amax() <= 1e-6 * m.amax().max(1.0));
        }

        #[test]
        fn committed_states_are_admissible(f in stretch_strategy()) {
            prop_assume!(f.determinant() > 0.2);
            let p = unit();
            let r = stress_update(&f, &QuadPointState::default(), &p, TangentMode::None).unwrap();
            prop_assert!((r.state.fp.determinant() - 1.0).abs() < 1e-8);
            prop_assert!(r.delta_lambda >= 0.0);
            let m = mandel_from_state(&f, &r.state, &p).unwrap();
            let y = yield_value(&m, r.state.lambda, &p);
            prop_assert!(y <= p.yield_tolerance());
            prop_assert!((r.delta_lambda * y).abs() <= p.yield_tolerance() * r.delta_lambda.max(1e-300));
        }
    }
}
