//! The pipeline stages. Each reads its inputs from the output directory,
//! writes its artifacts there and records them in the manifest.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use rvemor::fem::{build_rve_mesh, total_linear_solve_count, Assembler, DnsSolver, PeriodicMesh, StateRecording};
use rvemor::material::total_stress_update_count;
use rvemor::pod::files::{read_snapshot_matrix, write_snapshot_matrix};
use rvemor::pod::{
    build_basis, collect_snapshots, hex, load_basis, load_snapshots, project, save_basis, save_snapshots, DnsRecord,
    ReducedBasis, ReducedSolver, SnapshotSet,
};
use rvemor::rnn::{
    hyper_sweep, load_model, save_model, train, write_loss_csv, write_sweep_csv, ModelInit, SequenceSample,
};
use rvemor::surrogate::{
    compare_fields, run_online, write_coefficient_error_csv, write_lambda_csv, write_timing_csv, CoefficientSource,
    OnlineConfig, ResponseHistory, TimingRow, REFERENCE_CYCLIC_COEFFICIENT_ERROR, REFERENCE_RANDOM_COEFFICIENT_ERROR,
};

use crate::config::{NamedPath, Role, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{parse_digest, Manifest};
use crate::store::{self, Method, RunTiming};

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub manifest: Manifest,
}

impl Context {
    pub fn new(config: RunConfig, out: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(out.display(), e))?;
        let manifest = Manifest::load(&out)?;
        Ok(Self { config, out, manifest })
    }

    fn mesh(&self) -> CliResult<PeriodicMesh> {
        Ok(build_rve_mesh(&self.config.geometry()?)?)
    }

    fn assembler(&self) -> CliResult<Assembler> {
        Ok(Assembler::new(self.mesh()?, self.config.materials()?)?)
    }

    fn paths(&self, role: Role) -> CliResult<Vec<NamedPath>> {
        Ok(self.config.load_paths()?.into_iter().filter(|p| p.role == role).collect())
    }

    fn record(&mut self, rel: &str, stage: &str, inputs: &[String], attributes: &[(&str, String)]) -> CliResult<()> {
        self.manifest.record(&self.out, rel, stage, inputs, attributes)
    }

    fn verify(&self, rels: &[String]) -> CliResult<()> {
        rels.iter().try_for_each(|r| self.manifest.verify(&self.out, r))
    }

    fn save_manifest(&self) -> CliResult<()> {
        self.manifest.save(&self.out)
    }

    /// Loads the basis after checking it against its manifest entry.
    fn basis(&self, mesh: &PeriodicMesh) -> CliResult<ReducedBasis> {
        store::require(&self.out, &[store::BASIS.to_string()], "pod-build")?;
        self.verify(&[store::BASIS.to_string()])?;
        Ok(load_basis(&self.out.join(store::BASIS), mesh)?)
    }
}

fn log_failure(name: &str, e: &rvemor::Error) {
    eprintln!("warning: {name}: {e}");
}

/// Snapshot set with no columns, written when no training run converged.
fn empty_snapshots(mesh: &PeriodicMesh) -> SnapshotSet {
    SnapshotSet {
        u: nalgebra::DMatrix::zeros(mesh.n_dofs(), 0),
        meta: Vec::new(),
        fingerprint: mesh.fingerprint(),
    }
}

pub fn cmd_dns(ctx: &mut Context) -> CliResult<()> {
    let config_text = ctx.config.to_toml();
    let mut w = store::create(&ctx.out, store::CONFIG_COPY)?;
    w.write_all(config_text.as_bytes()).map_err(|e| CliError::io(store::CONFIG_COPY, e))?;
    drop(w);
    ctx.record(store::CONFIG_COPY, "dns", &[], &[])?;

    let all = ctx.config.load_paths()?;
    for p in &all {
        let rel = store::path_file(&p.name);
        store::write_with(&ctx.out, &rel, |w| p.path.write_csv(w))?;
        ctx.record(&rel, "dns", &[store::CONFIG_COPY.to_string()], &[])?;
    }

    let asm = ctx.assembler()?;
    let mesh = asm.mesh.clone();
    let dns = DnsSolver::new(asm, ctx.config.solver())?;
    let stride = ctx.config.pod.stride;
    let train: Vec<(usize, &NamedPath)> = all.iter().filter(|p| p.role == Role::Train).enumerate().collect();

    // one simulation per task
    let results: Vec<(usize, &NamedPath, rvemor::Result<(SnapshotSet, ResponseHistory)>)> = train
        .par_iter()
        .map(|&(sim, p)| {
            let r = dns.run(&p.path, &StateRecording::None).and_then(|sols| {
                let set = collect_snapshots(&[DnsRecord { sim, mesh: &mesh, solutions: &sols }], stride)?;
                Ok((set, ResponseHistory::from_dns(&sols, None)?))
            });
            (sim, p, r)
        })
        .collect();

    let mut failures = 0;
    let mut snapshots: Option<SnapshotSet> = None;
    let mut snapshot_inputs = Vec::new();
    for (_, p, r) in results {
        match r {
            Ok((set, hist)) => {
                for rel in store::write_history(&ctx.out, Method::Dns, &p.name, &hist)? {
                    ctx.record(&rel, "dns", &[store::path_file(&p.name)], &[])?;
                }
                snapshots = Some(match snapshots {
                    None => set,
                    Some(acc) => acc.merge(set)?,
                });
                snapshot_inputs.push(store::path_file(&p.name));
            }
            Err(e) => {
                log_failure(&p.name, &e);
                failures += 1;
            }
        }
    }
    let snapshots = snapshots.unwrap_or_else(|| empty_snapshots(&mesh));
    save_snapshots(&ctx.out.join(store::SNAPSHOTS), &snapshots)?;
    let attrs = [("mesh", hex(&mesh.fingerprint())), ("stride", stride.to_string())];
    ctx.record(store::SNAPSHOTS, "dns", &snapshot_inputs, &attrs)?;
    ctx.record(store::SNAPSHOT_META, "dns", &snapshot_inputs, &[])?;

    // validation runs one at a time so the work counters are attributable
    let record = ctx.config.record_increments();
    let mut timing = Vec::new();
    for p in all.iter().filter(|p| p.role == Role::Validation) {
        let (solves0, updates0) = (total_linear_solve_count(), total_stress_update_count());
        let t = Instant::now();
        match dns.run(&p.path, &StateRecording::At(record.clone())) {
            Ok(sols) => {
                timing.push(RunTiming {
                    name: p.name.clone(),
                    increments: p.path.len(),
                    seconds: t.elapsed().as_secs_f64(),
                    linear_solves: total_linear_solve_count() - solves0,
                    stress_updates: total_stress_update_count() - updates0,
                });
                let inputs = [store::path_file(&p.name)];
                for rel in store::write_history(&ctx.out, Method::Dns, &p.name, &ResponseHistory::from_dns(&sols, None)?)? {
                    ctx.record(&rel, "dns", &inputs, &[])?;
                }
                let u = nalgebra::DMatrix::from_fn(mesh.n_dofs(), sols.len(), |i, j| sols[j].u[i]);
                let rel = store::displacement_file(&p.name);
                store::write_with(&ctx.out, &rel, |w| write_snapshot_matrix(w, &u))?;
                ctx.record(&rel, "dns", &inputs, &[])?;
            }
            Err(e) => {
                log_failure(&p.name, &e);
                failures += 1;
            }
        }
    }
    let rel = store::write_timing(&ctx.out, Method::Dns, &timing)?;
    ctx.record(&rel, "dns", &[], &[])?;
    ctx.save_manifest()?;
    println!(
        "dns: {} training and {} validation runs converged, {} snapshots of {} dofs, {failures} failed",
        snapshot_inputs.len(),
        timing.len(),
        snapshots.n_t(),
        snapshots.n_u()
    );
    if failures > 0 {
        return Err(CliError::Failed(failures));
    }
    Ok(())
}

pub fn cmd_pod_build(ctx: &mut Context) -> CliResult<()> {
    let inputs = [store::SNAPSHOTS.to_string(), store::SNAPSHOT_META.to_string()];
    store::require(&ctx.out, &inputs, "dns")?;
    ctx.verify(&inputs)?;
    let mesh = ctx.mesh()?;
    let found = hex(&mesh.fingerprint());
    if let Some(expected) = ctx.manifest.attribute(store::SNAPSHOTS, "mesh") {
        if expected != found {
            return Err(CliError::Mismatch(format!(
                "snapshots were taken on mesh {expected}, the configuration builds mesh {found}"
            )));
        }
    }
    let set = load_snapshots(&ctx.out.join(store::SNAPSHOTS), &mesh)?;
    let basis = build_basis(&set, ctx.config.pod.n_b, &mesh)?;
    save_basis(&ctx.out.join(store::BASIS), &basis)?;

    let total: f64 = basis.singular_values.iter().map(|s| s * s).sum();
    store::write_with(&ctx.out, store::SINGULAR_VALUES, |w| {
        writeln!(w, "k,singular_value,energy_fraction")?;
        let mut acc = 0.0;
        for (k, s) in basis.singular_values.iter().enumerate() {
            acc += s * s;
            writeln!(w, "{},{:e},{:e}", k + 1, s, if total > 0.0 { acc / total } else { 0.0 })?;
        }
        Ok(())
    })?;
    let attrs = [
        ("basis_digest", hex(&basis.digest())),
        ("mesh", found),
        ("n_b", basis.n_b().to_string()),
    ];
    ctx.record(store::BASIS, "pod-build", &inputs, &attrs)?;
    ctx.record(store::SINGULAR_VALUES, "pod-build", &inputs, &[])?;
    ctx.save_manifest()?;
    let kept: f64 = basis.singular_values[..basis.n_b()].iter().map(|s| s * s).sum();
    println!(
        "pod-build: {} snapshots, {} basis vectors capturing {:.6} of the snapshot energy",
        set.n_t(),
        basis.n_b(),
        kept / total
    );
    Ok(())
}

pub fn cmd_pod_run(ctx: &mut Context) -> CliResult<()> {
    let asm = ctx.assembler()?;
    let basis = ctx.basis(&asm.mesh)?;
    let all = ctx.config.load_paths()?;
    let path_files: Vec<String> = all.iter().map(|p| store::path_file(&p.name)).collect();
    store::require(&ctx.out, &path_files, "dns")?;
    ctx.verify(&path_files)?;
    let solver = ReducedSolver::new(asm, basis, ctx.config.solver())?;
    let paths: Vec<(NamedPath, rvemor::loading::LoadPath)> = all
        .into_iter()
        .map(|p| {
            let stored = store::load_path(&ctx.out, &p.name)?;
            Ok((p, stored))
        })
        .collect::<CliResult<_>>()?;

    let train: Vec<_> = paths.iter().filter(|(p, _)| p.role == Role::Train).collect();
    let results: Vec<_> = train.par_iter().map(|(p, path)| (p, solver.run(path, |_| false))).collect();
    let mut failures = 0;
    let mut done = 0;
    for (p, r) in results {
        match r {
            Ok(sols) => {
                let inputs = [store::BASIS.to_string(), store::path_file(&p.name)];
                for rel in store::write_history(&ctx.out, Method::Reduced, &p.name, &ResponseHistory::from_reduced(&sols))? {
                    ctx.record(&rel, "pod-run", &inputs, &[])?;
                }
                done += 1;
            }
            Err(e) => {
                log_failure(&p.name, &e);
                failures += 1;
            }
        }
    }

    let record = ctx.config.record_increments();
    let mut timing = Vec::new();
    for (p, path) in paths.iter().filter(|(p, _)| p.role == Role::Validation) {
        let (solves0, updates0) = (total_linear_solve_count(), total_stress_update_count());
        let t = Instant::now();
        match solver.run(path, |k| record.contains(&k)) {
            Ok(sols) => {
                timing.push(RunTiming {
                    name: p.name.clone(),
                    increments: path.len(),
                    seconds: t.elapsed().as_secs_f64(),
                    linear_solves: total_linear_solve_count() - solves0,
                    stress_updates: total_stress_update_count() - updates0,
                });
                let inputs = [store::BASIS.to_string(), store::path_file(&p.name)];
                for rel in store::write_history(&ctx.out, Method::Reduced, &p.name, &ResponseHistory::from_reduced(&sols))? {
                    ctx.record(&rel, "pod-run", &inputs, &[])?;
                }
                done += 1;
            }
            Err(e) => {
                log_failure(&p.name, &e);
                failures += 1;
            }
        }
    }
    let rel = store::write_timing(&ctx.out, Method::Reduced, &timing)?;
    ctx.record(&rel, "pod-run", &[], &[])?;
    ctx.save_manifest()?;
    println!("pod-run: {done} reduced runs with {} basis vectors, {failures} failed", solver.basis.n_b());
    if failures > 0 {
        return Err(CliError::Failed(failures));
    }
    Ok(())
}

/// Sequence samples pairing path inputs with reduced coefficients.
fn samples(ctx: &Context, role: Role, only_cyclic: bool) -> CliResult<(Vec<SequenceSample>, Vec<String>)> {
    let mut out = Vec::new();
    let mut inputs = Vec::new();
    for p in ctx.paths(role)? {
        if only_cyclic && p.path.kind != rvemor::loading::PathKind::Cyclic {
            continue;
        }
        let rel = store::alpha_file(Method::Reduced, &p.name);
        store::require(&ctx.out, &[rel.clone()], "pod-run")?;
        ctx.verify(&[rel.clone()])?;
        let alpha = store::read_alpha_csv(store::open(&ctx.out, &rel, "pod-run")?, &rel)?;
        let path = store::load_path(&ctx.out, &p.name)?;
        out.push(SequenceSample::new(path.inputs(), alpha)?);
        inputs.push(rel);
    }
    Ok((out, inputs))
}

pub fn cmd_train(ctx: &mut Context) -> CliResult<()> {
    let mesh = ctx.mesh()?;
    let basis = ctx.basis(&mesh)?;
    let (train_set, mut inputs) = samples(ctx, Role::Train, false)?;
    let (val_set, val_inputs) = samples(ctx, Role::Validation, true)?;
    if train_set.is_empty() {
        return Err(rvemor::Error::Empty("no training samples".into()).into());
    }
    inputs.extend(val_inputs);
    inputs.push(store::BASIS.to_string());
    let dims = ctx.config.dims(basis.n_b())?;
    let cfg = ctx.config.train_config();
    let t = Instant::now();
    let result = train(&train_set, &val_set, &cfg, ModelInit::Fresh(dims))?;
    save_model(&ctx.out.join(store::MODEL), &result.model)?;
    store::write_with(&ctx.out, store::LOSS, |w| write_loss_csv(w, &result.history))?;
    let attrs = [
        ("basis_digest", hex(&basis.digest())),
        ("seed", cfg.seed.to_string()),
        ("epochs", result.history.last().map_or(0, |h| h.epoch + 1).to_string()),
    ];
    ctx.record(store::MODEL, "train", &inputs, &attrs)?;
    ctx.record(store::LOSS, "train", &inputs, &[])?;
    ctx.save_manifest()?;
    println!(
        "train: {} samples, dims {}/{}/{}/{}, final training MSE {:.3e}, validation MSE {}, {:.1}s",
        train_set.len(),
        dims.d_in,
        dims.d_h,
        dims.d_out,
        dims.n_b,
        result.final_train_loss,
        result.final_val_loss.map_or("-".into(), |v| format!("{v:.3e}")),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn cmd_rnn_run(ctx: &mut Context) -> CliResult<()> {
    let asm = ctx.assembler()?;
    store::require(&ctx.out, &[store::MODEL.to_string()], "train")?;
    ctx.verify(&[store::MODEL.to_string()])?;
    let basis = ctx.basis(&asm.mesh)?;
    let model = load_model(&ctx.out.join(store::MODEL))?;
    let expected = ctx
        .manifest
        .attribute(store::MODEL, "basis_digest")
        .ok_or_else(|| CliError::Mismatch("model.bin has no recorded basis digest in the manifest".into()))?;
    let config = OnlineConfig {
        record_fields: ctx.config.record_increments(),
        continue_on_failure: false,
        expected_basis: Some(parse_digest(expected)?),
    };
    let mut timing = Vec::new();
    for p in ctx.paths(Role::Validation)? {
        let path = store::load_path(&ctx.out, &p.name)?;
        let (solves0, updates0) = (total_linear_solve_count(), total_stress_update_count());
        let t = Instant::now();
        let result = run_online(&path, &basis, CoefficientSource::Rnn(&model), &asm, &config)?;
        let seconds = t.elapsed().as_secs_f64();
        timing.push(RunTiming {
            name: p.name.clone(),
            increments: path.len(),
            seconds,
            linear_solves: total_linear_solve_count() - solves0,
            stress_updates: total_stress_update_count() - updates0,
        });
        let inputs = [store::MODEL.to_string(), store::BASIS.to_string(), store::path_file(&p.name)];
        for rel in store::write_history(&ctx.out, Method::Online, &p.name, &ResponseHistory::from_online(&result))? {
            ctx.record(&rel, "rnn-run", &inputs, &[])?;
        }
        let t = &result.timing;
        println!(
            "rnn-run: {} {} increments in {:.3}s (predict {:.3}s, reconstruct {:.3}s, stress update {:.3}s, \
             homogenize {:.3}s), {} stress updates, {} linear solves",
            p.name,
            path.len(),
            seconds,
            t.predict,
            t.reconstruct,
            t.stress_update,
            t.homogenize,
            result.stress_updates,
            result.linear_solves
        );
    }
    let rel = store::write_timing(&ctx.out, Method::Online, &timing)?;
    ctx.record(&rel, "rnn-run", &[], &[])?;
    ctx.save_manifest()?;
    Ok(())
}

/// DNS response with coefficients projected onto the basis.
fn dns_history(ctx: &Context, name: &str, basis: &ReducedBasis, record: &[usize]) -> CliResult<ResponseHistory> {
    let mut h = store::read_history(&ctx.out, Method::Dns, name, record)?;
    let rel = store::displacement_file(name);
    ctx.verify(&[rel.clone()])?;
    let u = read_snapshot_matrix(&mut store::open(&ctx.out, &rel, "dns")?)?;
    if u.ncols() != h.len() || u.nrows() != basis.n_u() {
        return Err(CliError::Mismatch(format!("{rel}: {}x{} displacement matrix", u.nrows(), u.ncols())));
    }
    h.alpha = nalgebra::DMatrix::zeros(h.len(), basis.n_b());
    for (k, s) in h.stretch.iter().enumerate() {
        let fluct: DVector<f64> = u.column(k) - &basis.psi * s.omega();
        h.alpha.set_row(k, &project(&fluct, basis)?.transpose());
    }
    Ok(h)
}

pub fn cmd_compare(ctx: &mut Context) -> CliResult<()> {
    let mesh = ctx.mesh()?;
    let basis = ctx.basis(&mesh)?;
    let record = ctx.config.record_increments();
    let validation = ctx.paths(Role::Validation)?;
    let timing: Vec<(Method, Vec<RunTiming>)> = [Method::Dns, Method::Reduced, Method::Online]
        .into_iter()
        .map(|m| Ok((m, store::read_timing(&ctx.out, m)?)))
        .collect::<CliResult<_>>()?;

    let mut summary = String::from(
        "name,rnn_vs_mor_stress,rnn_vs_dns_stress,mor_vs_dns_stress,rnn_vs_mor_coefficient_mse,\
         rnn_vs_dns_coefficient_mse,mor_vs_dns_coefficient_mse,max_abs_lambda_rnn_minus_dns\n",
    );
    let mut report = format!(
        "reference full-scale coefficient errors: cyclic {REFERENCE_CYCLIC_COEFFICIENT_ERROR:e}, random \
         {REFERENCE_RANDOM_COEFFICIENT_ERROR:e}\n"
    );
    let mut inputs = vec![store::BASIS.to_string()];
    for p in &validation {
        let dns = dns_history(ctx, &p.name, &basis, &record)?;
        let mor = store::read_history(&ctx.out, Method::Reduced, &p.name, &record)?;
        let rnn = store::read_history(&ctx.out, Method::Online, &p.name, &record)?;
        for m in [Method::Dns, Method::Reduced, Method::Online] {
            inputs.push(store::stress_file(m, &p.name));
        }
        let rnn_mor = compare_fields(&rnn, &mor)?;
        let rnn_dns = compare_fields(&rnn, &dns)?;
        let mor_dns = compare_fields(&mor, &dns)?;
        let lambda_max = rnn_dns
            .lambda_difference
            .iter()
            .flat_map(|(_, d)| d.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let mse = |r: &rvemor::surrogate::CompareReport| r.coefficient_mse.map_or("".into(), |v| format!("{v:e}"));
        summary.push_str(&format!(
            "{},{:e},{:e},{:e},{},{},{},{:e}\n",
            p.name,
            rnn_mor.stress_error,
            rnn_dns.stress_error,
            mor_dns.stress_error,
            mse(&rnn_mor),
            mse(&rnn_dns),
            mse(&mor_dns),
            lambda_max
        ));
        report.push_str(&format!(
            "{}: stress error RNN-MOR vs MOR {:.2}%, vs DNS {:.2}%, MOR vs DNS {:.2}%; coefficient MSE RNN vs MOR \
             {}; max |Δλ| vs DNS {:.3e}\n",
            p.name,
            100.0 * rnn_mor.stress_error,
            100.0 * rnn_dns.stress_error,
            100.0 * mor_dns.stress_error,
            mse(&rnn_mor),
            lambda_max
        ));
        let rel = format!("compare/{}_coefficient_error.csv", p.name);
        store::write_with(&ctx.out, &rel, |w| write_coefficient_error_csv(w, &rnn_mor))?;
        for (inc, d) in &rnn_dns.lambda_difference {
            let rel = format!("compare/{}_lambda_diff_inc{inc}.csv", p.name);
            store::write_with(&ctx.out, &rel, |w| write_lambda_csv(w, d))?;
        }
    }

    let mut rows = Vec::new();
    for (m, runs) in &timing {
        for r in runs {
            rows.push(TimingRow {
                method: m.label().to_string(),
                stage: r.name.clone(),
                increments: r.increments,
                seconds: r.seconds,
                linear_solves: r.linear_solves,
                stress_updates: r.stress_updates,
            });
        }
    }
    for (m, runs) in &timing {
        let seconds: f64 = runs.iter().map(|r| r.seconds).sum();
        let increments: usize = runs.iter().map(|r| r.increments).sum();
        report.push_str(&format!(
            "{}: {:.3e} s per increment over {} validation increments, {} linear solves, {} stress updates\n",
            m.label(),
            if increments > 0 { seconds / increments as f64 } else { 0.0 },
            increments,
            runs.iter().map(|r| r.linear_solves).sum::<u64>(),
            runs.iter().map(|r| r.stress_updates).sum::<u64>()
        ));
    }
    store::write_with(&ctx.out, "compare/timing.csv", |w| write_timing_csv(w, &rows))?;
    store::write_with(&ctx.out, "compare/summary.csv", |w| Ok(w.write_all(summary.as_bytes())?))?;
    store::write_with(&ctx.out, "compare/report.txt", |w| Ok(w.write_all(report.as_bytes())?))?;
    for m in [Method::Dns, Method::Reduced, Method::Online] {
        inputs.push(store::timing_file(m));
    }
    for rel in ["compare/summary.csv", "compare/timing.csv", "compare/report.txt"] {
        ctx.record(rel, "compare", &inputs, &[])?;
    }
    ctx.save_manifest()?;
    print!("{report}");
    Ok(())
}

pub fn cmd_sweep(ctx: &mut Context) -> CliResult<()> {
    let (train_set, mut inputs) = samples(ctx, Role::Train, false)?;
    let (val_set, val_inputs) = samples(ctx, Role::Validation, true)?;
    inputs.extend(val_inputs);
    let cfg = rvemor::rnn::TrainConfig { epochs: ctx.config.sweep.epochs, ..ctx.config.train_config() };
    let rows = hyper_sweep(&ctx.config.sweep_grid(), &train_set, &val_set, &cfg)?;
    store::write_with(&ctx.out, store::SWEEP, |w| write_sweep_csv(w, &rows))?;
    ctx.record(store::SWEEP, "sweep", &inputs, &[])?;
    ctx.save_manifest()?;
    for r in &rows {
        println!(
            "sweep: d_in {} d_h {} d_out {}: training {} validation {}{}",
            r.dims.d_in,
            r.dims.d_h,
            r.dims.d_out,
            r.train_loss.map_or("-".into(), |v| format!("{v:.3e}")),
            r.val_loss.map_or("-".into(), |v| format!("{v:.3e}")),
            r.error.as_ref().map_or(String::new(), |e| format!(" ({e})"))
        );
    }
    Ok(())
}
