//! Acceptance run: seven end-to-end checks, one PASS/FAIL line each.
//! Runs without the libtest harness so the lines are always printed.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rvemor::fem::{
    build_rve_mesh, linear_solve_count, Assembler, DnsSolution, DnsSolver, GeometryConfig,
    Materials, Particle, SolverConfig, StateRecording,
};
use rvemor::loading::{
    complete_stretch, cyclic_fan, cyclic_path, random_path, LoadPath, MacroStretch, PathKind,
};
use rvemor::material::{
    mandel_from_state, stress_update, tangent_check, yield_value, MaterialParams, QuadPointState,
    TangentMode,
};
use rvemor::pod::{
    build_basis, coefficient_matrix, collect_snapshots, gram_pod, reconstruction_error,
    snapshot_rank, solve_reduced, DnsRecord, ReducedBasis, ReducedSolver,
};
use rvemor::rnn::{
    gradient_check, train, LossSpace, ModelInit, NormStats, RnnDims, RnnModel, SequenceSample,
    TrainConfig,
};
use rvemor::surrogate::{
    compare_fields, run_online, CoefficientSource, OnlineConfig, ResponseHistory,
    REFERENCE_CYCLIC_COEFFICIENT_ERROR, REFERENCE_RANDOM_COEFFICIENT_ERROR,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed.as_secs_f64() < limit_secs as f64
}

// ---------------------------------------------------------------- 1

fn random_f(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    loop {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let f = Matrix3::identity() + a * scale;
        if f.determinant() > 0.5 {
            return f;
        }
    }
}

struct Kkt {
    det_fp: f64,
    yield_excess: f64,
    complementarity: f64,
}

fn kkt(f: &Matrix3<f64>, state: &QuadPointState, dl: f64, p: &MaterialParams) -> Kkt {
    let m = mandel_from_state(f, state, p).unwrap();
    let y = yield_value(&m, state.lambda, p);
    let tol = p.yield_tolerance();
    Kkt {
        det_fp: (state.fp.determinant() - 1.0).abs(),
        yield_excess: (y - tol).max(0.0),
        complementarity: if dl > 0.0 {
            ((dl * y).abs() - tol * dl).max(0.0)
        } else {
            0.0
        },
    }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let p = MaterialParams::matrix_default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_plastic, mut worst_elastic) = (0.0f64, 0.0f64);
    let (mut worst_det, mut worst_yield, mut worst_comp) = (0.0f64, 0.0f64, 0.0f64);
    let mut negative_dl = 0usize;
    let mut record = |f: &Matrix3<f64>, r: &rvemor::material::StressResult| {
        let k = kkt(f, &r.state, r.delta_lambda, &p);
        worst_det = worst_det.max(k.det_fp);
        worst_yield = worst_yield.max(k.yield_excess);
        worst_comp = worst_comp.max(k.complementarity);
        if r.delta_lambda < 0.0 {
            negative_dl += 1;
        }
    };

    let mut plastic = 0;
    while plastic < 100 {
        // half of the states start from an already plastified history
        let old = if plastic % 2 == 0 {
            QuadPointState::default()
        } else {
            let f0 = random_f(&mut rng, 0.08);
            let r0 = stress_update(&f0, &QuadPointState::default(), &p, TangentMode::None).unwrap();
            record(&f0, &r0);
            r0.state
        };
        let scale = rng.random_range(0.03..0.12);
        let f = random_f(&mut rng, scale);
        let r = stress_update(&f, &old, &p, TangentMode::None).unwrap();
        record(&f, &r);
        if !r.is_plastic() {
            continue;
        }
        worst_plastic = worst_plastic.max(tangent_check(&f, &old, &p).unwrap());
        plastic += 1;
    }
    let mut elastic = 0;
    while elastic < 100 {
        let scale = rng.random_range(1e-4..4e-3);
        let f = random_f(&mut rng, scale);
        let r = stress_update(&f, &QuadPointState::default(), &p, TangentMode::None).unwrap();
        record(&f, &r);
        if r.is_plastic() {
            continue;
        }
        worst_elastic =
            worst_elastic.max(tangent_check(&f, &QuadPointState::default(), &p).unwrap());
        elastic += 1;
    }
    let elapsed = t0.elapsed();
    let ok = worst_plastic < 1e-4
        && worst_elastic < 1e-5
        && worst_det < 1e-8
        && worst_yield == 0.0
        && worst_comp == 0.0
        && negative_dl == 0
        && within(elapsed, 60);
    check(
        ok,
        format!(
            "tangent dev plastic {worst_plastic:.2e} (<1e-4), elastic {worst_elastic:.2e} (<1e-5); \
             max |det Fp - 1| {worst_det:.1e}; KKT violations: yield {worst_yield:.1e}, \
             complementarity {worst_comp:.1e}, negative dλ {negative_dl}; {:.1}s (<60s)",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Mandel stress of the energy written out independently of the library.
fn oracle_mandel(fe: &Matrix3<f64>, p: &MaterialParams) -> Matrix3<f64> {
    let mu = p.youngs_modulus / (2.0 * (1.0 + p.poissons_ratio));
    let lam = p.youngs_modulus * p.poissons_ratio
        / ((1.0 + p.poissons_ratio) * (1.0 - 2.0 * p.poissons_ratio));
    let j = fe.determinant();
    let fe_it = fe.try_inverse().unwrap().transpose();
    let pe = (fe - fe_it) * mu + fe_it * (lam * j.ln());
    fe.transpose() * pe
}

fn oracle_yield(m: &Matrix3<f64>, lambda: f64, p: &MaterialParams) -> (f64, Matrix3<f64>) {
    let dev = m - Matrix3::identity() * (m.trace() / 3.0);
    let eq = (1.5 * dev.dot(&dev)).sqrt();
    let y = eq - p.initial_yield.unwrap() - p.hardening_modulus * lambda.powf(p.hardening_exponent);
    let n = if eq > 0.0 {
        dev * (1.5 / eq)
    } else {
        Matrix3::zeros()
    };
    (y, n)
}

/// Forward-Euler flow direction with consistency restored by bisection on
/// the multiplier increment, over `substeps` equal shear sub-increments.
fn explicit_shear_oracle(gammas: &[f64], substeps: usize, p: &MaterialParams) -> Vec<f64> {
    let mut fp = Matrix3::identity();
    let mut lambda = 0.0f64;
    let mut out = Vec::with_capacity(gammas.len());
    let mut g_prev = 0.0;
    let per = substeps / gammas.len();
    for &g in gammas {
        for s in 1..=per {
            let gamma = g_prev + (g - g_prev) * s as f64 / per as f64;
            let mut f = Matrix3::identity();
            f[(0, 1)] = gamma;
            let fe = f * fp.try_inverse().unwrap();
            let (y, n) = oracle_yield(&oracle_mandel(&fe, p), lambda, p);
            if y <= 0.0 {
                continue;
            }
            let trial = |dl: f64| {
                let mut fp_new = (Matrix3::identity() + n * dl) * fp;
                fp_new /= fp_new.determinant().cbrt();
                let fe = f * fp_new.try_inverse().unwrap();
                (
                    oracle_yield(&oracle_mandel(&fe, p), lambda + dl, p).0,
                    fp_new,
                )
            };
            let (mut lo, mut hi) = (0.0, 1e-6);
            while trial(hi).0 > 0.0 {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if trial(mid).0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let dl = 0.5 * (lo + hi);
            fp = trial(dl).1;
            lambda += dl;
        }
        g_prev = g;
        out.push(lambda);
    }
    out
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let p = MaterialParams::matrix_default();
    let n_inc = 50;
    let gammas: Vec<f64> = (1..=n_inc).map(|k| 0.3 * k as f64 / n_inc as f64).collect();
    let mut state = QuadPointState::default();
    let mut implicit = Vec::with_capacity(n_inc);
    for &g in &gammas {
        let mut f = Matrix3::identity();
        f[(0, 1)] = g;
        state = stress_update(&f, &state, &p, TangentMode::None)
            .unwrap()
            .state;
        implicit.push(state.lambda);
    }
    let oracle = explicit_shear_oracle(&gammas, 10_000, &p);
    let peak = oracle.iter().copied().fold(0.0, f64::max);
    let history_dev = implicit
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / peak;
    let final_dev = (implicit[n_inc - 1] - oracle[n_inc - 1]).abs() / oracle[n_inc - 1];
    let elapsed = t0.elapsed();
    check(
        peak > 0.0 && history_dev < 0.01 && final_dev < 0.01 && within(elapsed, 60),
        format!(
            "λ history vs 10^4-sub-increment explicit integrator: max deviation {:.3}% of peak, final {:.3}% \
             (<1%), final λ {:.4}; {:.1}s (<60s)",
            100.0 * history_dev,
            100.0 * final_dev,
            implicit[n_inc - 1],
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let p = MaterialParams::matrix_default();
    let mesh = build_rve_mesh(&GeometryConfig::plain(1.0, 16)).unwrap();
    let asm = Assembler::new(mesh, Materials::homogeneous(p)).unwrap();
    let dns = DnsSolver::new(asm, SolverConfig::default()).unwrap();
    let mut paths = vec![
        cyclic_path((1.12, 0.15), 30).unwrap(),
        random_path(0.01, 30, 4).unwrap(),
    ];
    paths.push(LoadPath {
        kind: PathKind::Random,
        increments: vec![complete_stretch(0.9, -0.2).unwrap(), MacroStretch::IDENTITY],
        seed: None,
    });
    let (mut fluct, mut stress_dev, mut constraint, mut corner) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for path in &paths {
        let sols = dns.run(path, &StateRecording::None).unwrap();
        let mut point = QuadPointState::default();
        let mut responses = Vec::new();
        for s in &sols {
            let r = stress_update(&s.stretch.tensor(), &point, &p, TangentMode::None).unwrap();
            point = r.state;
            responses.push(r.stress);
        }
        let scale = responses.iter().map(|r| r.amax()).fold(0.0, f64::max);
        for (s, r) in sols.iter().zip(&responses) {
            fluct = fluct.max(
                dns.fluctuation(&s.u, &s.stretch)
                    .iter()
                    .fold(0.0, |m: f64, v| m.max(v.abs())),
            );
            stress_dev = stress_dev.max((s.homogenized_stress - r).amax() / scale);
            constraint = constraint.max(
                dns.constraint_residual(&s.u, &s.stretch)
                    .iter()
                    .fold(0.0, |m: f64, v| m.max(v.abs())),
            );
            corner = corner.max(dns.corner_residual(&s.u, &s.stretch));
        }
    }
    let elapsed = t0.elapsed();
    check(
        fluct < 1e-9 && stress_dev < 1e-8 && constraint < 1e-10 && corner < 1e-10 && within(elapsed, 300),
        format!(
            "16x16 homogeneous RVE, 3 paths: fluctuation {fluct:.1e} (<1e-9), stress vs point response \
             {stress_dev:.1e} (<1e-8 rel), periodicity {constraint:.1e}, corners {corner:.1e} (<1e-10); \
             {:.1}s (<300s)",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 4

/// One-sided Jacobi SVD: left singular vectors and singular values, descending.
fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut u = a.clone();
    let n = u.ncols();
    for _ in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = u.column(i).norm_squared();
                let beta = u.column(j).norm_squared();
                let gamma = u.column(i).dot(&u.column(j));
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                if gamma.abs() < 1e-300 {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let ci = u.column(i).clone_owned();
                let cj = u.column(j).clone_owned();
                u.set_column(i, &(&ci * c - &cj * s));
                u.set_column(j, &(&ci * s + &cj * c));
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..n)
        .map(|k| {
            let s = u.column(k).norm();
            (s, u.column(k) / s)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let vals = pairs.iter().map(|p| p.0).collect();
    let cols: Vec<DVector<f64>> = pairs.into_iter().map(|p| p.1).collect();
    (DMatrix::from_columns(&cols), vals)
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut basis_dev, mut sv_dev, mut tail_dev) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..5 {
        let u = DMatrix::from_fn(200, 30, |_, _| rng.random_range(-1.0..1.0));
        let (phi, sv) = gram_pod(&u, 30).unwrap();
        let (oracle, oracle_sv) = jacobi_svd(&u);
        for k in 0..30 {
            sv_dev = sv_dev.max((sv[k] - oracle_sv[k]).abs() / oracle_sv[0]);
            let a = phi.column(k);
            let b = oracle.column(k);
            let d = (a - b).amax().min((a + b).amax());
            basis_dev = basis_dev.max(d);
        }
        let basis = ReducedBasis {
            phi: phi.clone(),
            singular_values: sv.clone(),
            psi: DMatrix::zeros(200, 3),
            fingerprint: [0; 32],
        };
        for n_b in [1, 5, 12, 29, 30] {
            let tail = sv[n_b..].iter().map(|s| s * s).sum::<f64>().sqrt();
            let err = reconstruction_error(&u, &basis, n_b);
            tail_dev = tail_dev.max((err - tail).abs() / u.norm());
        }
    }

    // full-rank replay of a training path
    let cfg = GeometryConfig {
        size: 1.0,
        divisions: 6,
        particles: vec![Particle {
            center: [0.5, 0.5],
            radius: 0.25,
        }],
    };
    let asm = Assembler::new(build_rve_mesh(&cfg).unwrap(), Materials::default()).unwrap();
    let solver = SolverConfig::default();
    let dns = DnsSolver::new(asm.clone(), solver.clone()).unwrap();
    let path = random_path(0.02, 10, 7).unwrap();
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
    let rank = snapshot_rank(&set).unwrap();
    let basis = build_basis(&set, rank, &asm.mesh).unwrap();
    let red = solve_reduced(&path, &basis, asm, solver.clone()).unwrap();
    let scale = sols
        .iter()
        .flat_map(|s| s.u.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let replay = red
        .iter()
        .zip(&sols)
        .map(|(r, d)| {
            let u = basis.reconstruct(&r.stretch.omega(), &r.alpha);
            u.iter()
                .zip(&d.u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .fold(0.0, f64::max)
        / scale;
    let elapsed = t0.elapsed();
    let limit = 10.0 * solver.tol_newton;
    check(
        basis_dev < 1e-8
            && sv_dev < 1e-8
            && tail_dev < 1e-8
            && rank == set.n_t()
            && replay < limit
            && within(elapsed, 300),
        format!(
            "Gram basis vs Jacobi SVD {basis_dev:.1e}, singular values {sv_dev:.1e}, tail formula {tail_dev:.1e} \
             (<1e-8); full-rank ({rank}/{}) replay vs DNS {replay:.1e} (<{limit:.0e} rel); {:.1}s (<300s)",
            set.n_t(),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = RnnDims {
        d_in: 4,
        d_h: 3,
        d_out: 4,
        n_b: 2,
    };
    let inputs: Vec<[f64; 2]> = (0..5)
        .map(|_| [rng.random_range(0.9..1.1), rng.random_range(-0.1..0.1)])
        .collect();
    let targets = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-0.5..0.5));
    let sample = SequenceSample::new(inputs, targets).unwrap();
    let mut model = RnnModel::initialize(
        dims,
        NormStats::fit(std::slice::from_ref(&sample)).unwrap(),
        &mut rng,
    )
    .unwrap();
    for t in model.params.tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    let grad_dev = [LossSpace::Raw, LossSpace::Normalized]
        .into_iter()
        .map(|space| gradient_check(&sample, &model, space, 1e-5, 1e-6).unwrap())
        .fold(0.0, f64::max);

    // one cyclic simulation, coefficients from the Galerkin-reduced solve
    let cfg = GeometryConfig {
        size: 1.0,
        divisions: 4,
        particles: vec![Particle {
            center: [0.5, 0.5],
            radius: 0.3,
        }],
    };
    let asm = Assembler::new(build_rve_mesh(&cfg).unwrap(), Materials::default()).unwrap();
    let dns = DnsSolver::new(asm.clone(), SolverConfig::default()).unwrap();
    let path = cyclic_path((1.15, 0.1), 100).unwrap();
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
    let basis = build_basis(&set, 2, &asm.mesh).unwrap();
    let red = solve_reduced(&path, &basis, asm, SolverConfig::default()).unwrap();
    let cyclic = SequenceSample::new(path.inputs(), coefficient_matrix(&red)).unwrap();
    let tc = TrainConfig {
        epochs: 20_000,
        seed: 5,
        target_loss: Some(1e-3),
        ..Default::default()
    };
    let dims = RnnDims {
        d_in: 8,
        d_h: 8,
        d_out: 8,
        n_b: 2,
    };
    let first = train(
        std::slice::from_ref(&cyclic),
        &[],
        &tc,
        ModelInit::Fresh(dims),
    )
    .unwrap();
    let second = train(
        std::slice::from_ref(&cyclic),
        &[],
        &tc,
        ModelInit::Fresh(dims),
    )
    .unwrap();
    let deterministic =
        first.history == second.history && first.model.params == second.model.params;
    let elapsed = t0.elapsed();
    let reached = first.reached_target;
    check(
        grad_dev < 1e-5 && reached.is_some() && first.final_train_loss < 1e-3 && deterministic && within(elapsed, 900),
        format!(
            "BPTT vs finite differences {grad_dev:.1e} (<1e-5); single cyclic sample reached MSE {:.2e} (<1e-3) \
             at epoch {} (<=20000); rerun identical: {deterministic}; {:.1}s (<900s)",
            first.final_train_loss,
            reached.map_or("never".to_string(), |e| (e + 1).to_string()),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 6 and 7

struct Pipeline {
    cyclic: Outcome,
    equation_free: Outcome,
}

fn reduced_samples(
    paths: &[LoadPath],
    basis: &ReducedBasis,
    asm: &Assembler,
) -> Vec<SequenceSample> {
    paths
        .iter()
        .map(|p| {
            let red = solve_reduced(p, basis, asm.clone(), SolverConfig::default()).unwrap();
            SequenceSample::new(p.inputs(), coefficient_matrix(&red)).unwrap()
        })
        .collect()
}

fn pipeline() -> Pipeline {
    let t0 = Instant::now();
    let n_inc = 100;
    let asm = Assembler::new(
        build_rve_mesh(&GeometryConfig::default_rve(8)).unwrap(),
        Materials::default(),
    )
    .unwrap();
    let solver = SolverConfig::default();
    let dns = DnsSolver::new(asm.clone(), solver.clone()).unwrap();

    let rays = 48;
    let mut training: Vec<LoadPath> = cyclic_fan(rays, 0.5, 0.0)
        .into_iter()
        .map(|t| cyclic_path(t, n_inc).unwrap())
        .collect();
    training.extend((0..8).map(|k| random_path(0.01, n_inc, 100 + k).unwrap()));
    let runs: Vec<Vec<DnsSolution>> = training
        .iter()
        .map(|p| dns.run(p, &StateRecording::None).unwrap())
        .collect();
    let records: Vec<_> = runs
        .iter()
        .enumerate()
        .map(|(sim, s)| DnsRecord {
            sim,
            mesh: &asm.mesh,
            solutions: s,
        })
        .collect();
    let basis = build_basis(&collect_snapshots(&records, 1).unwrap(), 8, &asm.mesh).unwrap();
    let samples = reduced_samples(&training, &basis, &asm);

    // held out: a cyclic ray halfway between two training rays, and a fresh random walk
    let cyclic_val = cyclic_path(
        cyclic_fan(rays, 0.5, std::f64::consts::PI / rays as f64)[5],
        n_inc,
    )
    .unwrap();
    let random_val = random_path(0.01, n_inc, 999).unwrap();
    let val_samples = reduced_samples(&[cyclic_val.clone()], &basis, &asm);

    let tc = TrainConfig {
        epochs: 200_000,
        learning_rate: 3e-3,
        final_learning_rate: Some(1e-5),
        val_every: 10_000,
        seed: 6,
        ..Default::default()
    };
    let dims = RnnDims {
        d_in: 32,
        d_h: 64,
        d_out: 32,
        n_b: basis.n_b(),
    };
    let trained = train(&samples, &val_samples, &tc, ModelInit::Fresh(dims)).unwrap();

    let mut lines = Vec::new();
    let mut errors = Vec::new();
    let mut equation_free = None;
    for (name, path) in [("cyclic", &cyclic_val), ("random", &random_val)] {
        let dns_sols = dns.run(path, &StateRecording::None).unwrap();
        let dns_hist = ResponseHistory::from_dns(&dns_sols, Some(&basis)).unwrap();
        let reduced = ReducedSolver::new(asm.clone(), basis.clone(), solver.clone()).unwrap();
        let solves0 = linear_solve_count();
        let t = Instant::now();
        let red = reduced.run(path, |_| false).unwrap();
        let mor_secs = t.elapsed().as_secs_f64();
        let mor_solves = linear_solve_count() - solves0;
        let mor_hist = ResponseHistory::from_reduced(&red);

        let cfg = OnlineConfig {
            expected_basis: Some(basis.digest()),
            ..Default::default()
        };
        let solves0 = linear_solve_count();
        let t = Instant::now();
        let online = run_online(
            path,
            &basis,
            CoefficientSource::Rnn(&trained.model),
            &asm,
            &cfg,
        )
        .unwrap();
        let rnn_secs = t.elapsed().as_secs_f64();
        let outer_solves = linear_solve_count() - solves0;
        let rnn_hist = ResponseHistory::from_online(&online);

        let vs_mor = compare_fields(&rnn_hist, &mor_hist).unwrap();
        let vs_dns = compare_fields(&rnn_hist, &dns_hist).unwrap();
        let mor_vs_dns = compare_fields(&mor_hist, &dns_hist).unwrap();
        lines.push(format!(
            "{name}: RNN-MOR vs MOR {:.1}%, vs DNS {:.1}%, MOR vs DNS {:.1}%, coefficient MSE {:.2e}",
            100.0 * vs_mor.stress_error,
            100.0 * vs_dns.stress_error,
            100.0 * mor_vs_dns.stress_error,
            vs_mor.coefficient_mse.unwrap()
        ));
        errors.push((
            vs_mor.stress_error,
            vs_dns.stress_error,
            vs_mor.coefficient_mse.unwrap(),
        ));

        if name == "cyclic" {
            let expected = (asm.mesh.n_quad_points() * path.len()) as u64;
            let per_rnn = rnn_secs / path.len() as f64;
            let per_mor = mor_secs / path.len() as f64;
            let ok = online.linear_solves == 0
                && outer_solves == 0
                && online.stress_updates == expected
                && per_rnn < per_mor;
            equation_free = Some(check(
                ok,
                format!(
                    "online linear solves {} (=0), stress updates {} (= {} qp x {} inc = {expected}); \
                     per increment RNN-MOR {:.2e}s vs MOR {:.2e}s ({:.0}x faster, MOR used {mor_solves} solves)",
                    online.linear_solves + outer_solves,
                    online.stress_updates,
                    asm.mesh.n_quad_points(),
                    path.len(),
                    per_rnn,
                    per_mor,
                    per_mor / per_rnn
                ),
            ));
        }
    }
    let elapsed = t0.elapsed();
    let (c_mor, c_dns, c_mse) = errors[0];
    let (_, _, r_mse) = errors[1];
    let cyclic = check(
        c_mor < 0.15 && c_dns < 0.25 && within(elapsed, 1800),
        format!(
            "{}; {}; random/cyclic coefficient error ratio {:.1} (reference {:.0e} vs {:.0e}); \
             training loss {:.2e}, validation {:.2e}; {:.1}s (<1800s) [thresholds: <15% vs MOR, <25% vs DNS]",
            lines[0],
            lines[1],
            r_mse / c_mse,
            REFERENCE_RANDOM_COEFFICIENT_ERROR,
            REFERENCE_CYCLIC_COEFFICIENT_ERROR,
            trained.final_train_loss,
            trained.final_val_loss.unwrap(),
            elapsed.as_secs_f64()
        ),
    );
    Pipeline {
        cyclic,
        equation_free: equation_free.unwrap(),
    }
}

/// Criterion numbers given on the command line restrict the run; none runs all.
fn selected() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|k| (1..=7).contains(k))
        .collect();
    if picked.is_empty() {
        (1..=7).collect()
    } else {
        picked
    }
}

fn main() {
    let names = [
        "1 constitutive verification",
        "2 return-mapping oracle",
        "3 DNS correctness",
        "4 POD correctness",
        "5 RNN correctness",
        "6 end-to-end desk-scale comparison",
        "7 equation-free online stage",
    ];
    let picked = selected();
    let mut outcomes: Vec<(usize, Outcome)> = Vec::new();
    let singles: [fn() -> Outcome; 5] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
    ];
    for (k, run) in singles.iter().enumerate() {
        if picked.contains(&(k + 1)) {
            outcomes.push((k + 1, run()));
        }
    }
    if picked.contains(&6) || picked.contains(&7) {
        let p = pipeline();
        if picked.contains(&6) {
            outcomes.push((6, p.cyclic));
        }
        if picked.contains(&7) {
            outcomes.push((7, p.equation_free));
        }
    }
    let mut failed = 0;
    for (k, o) in &outcomes {
        println!(
            "[{}] criterion {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            names[k - 1],
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
