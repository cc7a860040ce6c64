//! Directory layout of a pipeline run and the small CSV formats that only
//! the command line needs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix3};

use rvemor::loading::{LoadPath, MacroStretch, PathKind};
use rvemor::surrogate::{write_lambda_csv, write_stress_csv, ResponseHistory};

use crate::error::{CliError, CliResult};

pub const SNAPSHOTS: &str = "snapshots.bin";
pub const SNAPSHOT_META: &str = "snapshots.csv";
pub const BASIS: &str = "basis.bin";
pub const SINGULAR_VALUES: &str = "singular_values.csv";
pub const MODEL: &str = "model.bin";
pub const LOSS: &str = "loss.csv";
pub const SWEEP: &str = "sweep.csv";
pub const CONFIG_COPY: &str = "config.toml";

/// Which method produced a set of result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dns,
    Reduced,
    Online,
}

impl Method {
    pub fn dir(self) -> &'static str {
        match self {
            Method::Dns => "dns",
            Method::Reduced => "reduced",
            Method::Online => "online",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Dns => "DNS",
            Method::Reduced => "MOR",
            Method::Online => "RNN-MOR",
        }
    }

    pub fn stage(self) -> &'static str {
        match self {
            Method::Dns => "dns",
            Method::Reduced => "pod-run",
            Method::Online => "rnn-run",
        }
    }
}

pub fn path_file(name: &str) -> String {
    format!("paths/{name}.csv")
}

pub fn stress_file(m: Method, name: &str) -> String {
    format!("{}/{name}_stress.csv", m.dir())
}

pub fn alpha_file(m: Method, name: &str) -> String {
    format!("{}/{name}_alpha.csv", m.dir())
}

pub fn lambda_file(m: Method, name: &str, inc: usize) -> String {
    format!("{}/{name}_lambda_inc{inc}.csv", m.dir())
}

pub fn timing_file(m: Method) -> String {
    format!("{}/timing.csv", m.dir())
}

/// Full nodal displacement history of a DNS run, one column per increment.
pub fn displacement_file(name: &str) -> String {
    format!("dns/{name}_u.bin")
}

pub fn create(dir: &Path, rel: &str) -> CliResult<BufWriter<File>> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display(), e))?;
    }
    Ok(BufWriter::new(File::create(&path).map_err(|e| CliError::io(path.display(), e))?))
}

pub fn open(dir: &Path, rel: &str, stage: &'static str) -> CliResult<BufReader<File>> {
    let path = dir.join(rel);
    if !path.exists() {
        return Err(CliError::Missing { path, stage });
    }
    Ok(BufReader::new(File::open(&path).map_err(|e| CliError::io(path.display(), e))?))
}

/// Fails with [`CliError::Missing`] unless every file exists.
pub fn require(dir: &Path, rels: &[String], stage: &'static str) -> CliResult<()> {
    for rel in rels {
        let path: PathBuf = dir.join(rel);
        if !path.exists() {
            return Err(CliError::Missing { path, stage });
        }
    }
    Ok(())
}

pub fn write_with(
    dir: &Path,
    rel: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> rvemor::Result<()>,
) -> CliResult<()> {
    let mut w = create(dir, rel)?;
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(rel, e))
}

pub fn load_path(dir: &Path, name: &str) -> CliResult<LoadPath> {
    let kind = if name.contains("cyclic") { PathKind::Cyclic } else { PathKind::Random };
    Ok(LoadPath::read_csv(open(dir, &path_file(name), "dns")?, kind)?)
}

/// `inc,a1,...,an`.
pub fn write_alpha_csv(w: &mut impl Write, alpha: &DMatrix<f64>) -> rvemor::Result<()> {
    let header: Vec<String> = (1..=alpha.ncols()).map(|j| format!("a{j}")).collect();
    writeln!(w, "inc,{}", header.join(","))?;
    for (k, row) in alpha.row_iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{},{}", k + 1, vals.join(","))?;
    }
    Ok(())
}

fn rows(r: impl BufRead, what: &str, header: impl Fn(&str) -> bool) -> CliResult<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(what, e))?;
        if k == 0 {
            if !header(line.trim()) {
                return Err(CliError::Mismatch(format!("{what}: unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        out.push(vals.map_err(|e| CliError::Mismatch(format!("{what} line {}: {e}", k + 1)))?);
    }
    Ok(out)
}

pub fn read_alpha_csv(r: impl BufRead, what: &str) -> CliResult<DMatrix<f64>> {
    let rows = rows(r, what, |h| h.starts_with("inc"))?;
    let n_b = rows.first().map_or(0, |r| r.len().saturating_sub(1));
    if rows.iter().any(|r| r.len() != n_b + 1) {
        return Err(CliError::Mismatch(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), n_b, |i, j| rows[i][j + 1]))
}

/// Reads the stretch and in-plane stress columns back from a stress CSV.
pub fn read_stress_csv(r: impl BufRead, what: &str) -> CliResult<(Vec<MacroStretch>, Vec<Matrix3<f64>>)> {
    let rows = rows(r, what, |h| h == "inc,U11,U22,U12,P11,P22,P12,P21")?;
    let mut stretch = Vec::with_capacity(rows.len());
    let mut stress = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != 8 {
            return Err(CliError::Mismatch(format!("{what}: expected 8 columns")));
        }
        stretch.push(MacroStretch { u11: row[1], u22: row[2], u12: row[3] });
        let mut p = Matrix3::zeros();
        p[(0, 0)] = row[4];
        p[(1, 1)] = row[5];
        p[(0, 1)] = row[6];
        p[(1, 0)] = row[7];
        stress.push(p);
    }
    Ok((stretch, stress))
}

pub fn read_lambda_csv(r: impl BufRead, what: &str) -> CliResult<Vec<f64>> {
    Ok(rows(r, what, |h| h == "element,gp,lambda")?.into_iter().map(|r| r[2]).collect())
}

/// Writes stress, coefficients (when present) and λ fields; returns the
/// relative paths written.
pub fn write_history(dir: &Path, m: Method, name: &str, h: &ResponseHistory) -> CliResult<Vec<String>> {
    let mut written = vec![stress_file(m, name)];
    write_with(dir, &written[0], |w| write_stress_csv(w, h))?;
    if h.alpha.ncols() > 0 {
        let rel = alpha_file(m, name);
        write_with(dir, &rel, |w| write_alpha_csv(w, &h.alpha))?;
        written.push(rel);
    }
    for (inc, lambda) in &h.lambda {
        let rel = lambda_file(m, name, *inc);
        write_with(dir, &rel, |w| write_lambda_csv(w, lambda))?;
        written.push(rel);
    }
    Ok(written)
}

/// Reads what [`write_history`] wrote; λ fields are looked up at `record`.
pub fn read_history(dir: &Path, m: Method, name: &str, record: &[usize]) -> CliResult<ResponseHistory> {
    let rel = stress_file(m, name);
    let (stretch, stress) = read_stress_csv(open(dir, &rel, m.stage())?, &rel)?;
    let alpha = if dir.join(alpha_file(m, name)).exists() {
        let rel = alpha_file(m, name);
        read_alpha_csv(open(dir, &rel, m.stage())?, &rel)?
    } else {
        DMatrix::zeros(stretch.len(), 0)
    };
    let mut lambda = Vec::new();
    for &inc in record {
        let rel = lambda_file(m, name, inc);
        if dir.join(&rel).exists() {
            lambda.push((inc, read_lambda_csv(open(dir, &rel, m.stage())?, &rel)?));
        }
    }
    Ok(ResponseHistory { stretch, alpha, stress, lambda })
}

/// Per-run cost of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTiming {
    pub name: String,
    pub increments: usize,
    pub seconds: f64,
    pub linear_solves: u64,
    pub stress_updates: u64,
}

pub fn write_timing(dir: &Path, m: Method, rows: &[RunTiming]) -> CliResult<String> {
    let rel = timing_file(m);
    write_with(dir, &rel, |w| {
        writeln!(w, "name,increments,seconds,linear_solves,stress_updates")?;
        for r in rows {
            writeln!(w, "{},{},{:e},{},{}", r.name, r.increments, r.seconds, r.linear_solves, r.stress_updates)?;
        }
        Ok(())
    })?;
    Ok(rel)
}

pub fn read_timing(dir: &Path, m: Method) -> CliResult<Vec<RunTiming>> {
    let rel = timing_file(m);
    let r = open(dir, &rel, m.stage())?;
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&rel, e))?;
        if k == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || CliError::Mismatch(format!("{rel} line {}", k + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        out.push(RunTiming {
            name: f[0].to_string(),
            increments: f[1].parse().map_err(|_| bad())?,
            seconds: f[2].parse().map_err(|_| bad())?,
            linear_solves: f[3].parse().map_err(|_| bad())?,
            stress_updates: f[4].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
