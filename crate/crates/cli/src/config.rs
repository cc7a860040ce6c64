//! Run configuration read from a TOML file with dotted sections.
//!
//! Every key is optional; absent keys take the defaults below. A material
//! table, when present, must be complete.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rvemor::fem::{GeometryConfig, Materials, Particle, SolverConfig};
use rvemor::loading::{cyclic_fan, cyclic_path, random_path, LoadPath};
use rvemor::material::MaterialParams;
use rvemor::rnn::{RnnDims, SweepGrid, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub materials: MaterialsSection,
    pub solver: SolverSection,
    pub pod: PodSection,
    pub loading: LoadingSection,
    pub rnn: RnnSection,
    pub sweep: SweepSection,
    pub online: OnlineSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub divisions: usize,
    pub size: f64,
    /// `None` places the default three inclusions in a unit cell.
    pub particles: Option<Vec<ParticleSpec>>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            divisions: 16,
            size: 1.0,
            particles: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    /// Absent for a purely elastic phase.
    pub initial_yield: Option<f64>,
    #[serde(default)]
    pub hardening_modulus: f64,
    #[serde(default = "one")]
    pub hardening_exponent: f64,
}

fn one() -> f64 {
    1.0
}

impl From<MaterialParams> for MaterialSpec {
    fn from(p: MaterialParams) -> Self {
        Self {
            youngs_modulus: p.youngs_modulus,
            poissons_ratio: p.poissons_ratio,
            initial_yield: p.initial_yield,
            hardening_modulus: p.hardening_modulus,
            hardening_exponent: p.hardening_exponent,
        }
    }
}

impl MaterialSpec {
    fn params(&self) -> CliResult<MaterialParams> {
        let p = MaterialParams {
            youngs_modulus: self.youngs_modulus,
            poissons_ratio: self.poissons_ratio,
            initial_yield: self.initial_yield,
            hardening_modulus: self.hardening_modulus,
            hardening_exponent: self.hardening_exponent,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialsSection {
    pub matrix: MaterialSpec,
    pub particle: MaterialSpec,
}

impl Default for MaterialsSection {
    fn default() -> Self {
        Self {
            matrix: MaterialParams::matrix_default().into(),
            particle: MaterialParams::particle_default().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol_newton: f64,
    pub max_iter: usize,
    pub max_bisections: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            tol_newton: d.tol_newton,
            max_iter: d.max_iter,
            max_bisections: d.max_bisections,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PodSection {
    pub n_b: usize,
    /// Keep every `stride`-th increment as a snapshot.
    pub stride: usize,
}

impl Default for PodSection {
    fn default() -> Self {
        Self { n_b: 20, stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadingSection {
    pub n_inc: usize,
    pub cyclic_train: usize,
    pub random_train: usize,
    pub cyclic_val: usize,
    pub random_val: usize,
    /// Cyclic targets sit at this fraction of the feasible extent of each ray.
    pub cyclic_fraction: f64,
    pub random_step: f64,
    pub seed: u64,
}

impl Default for LoadingSection {
    fn default() -> Self {
        Self {
            n_inc: 1000,
            cyclic_train: 12,
            random_train: 20,
            cyclic_val: 2,
            random_val: 2,
            cyclic_fraction: 0.5,
            random_step: 0.002,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnSection {
    pub d_in: usize,
    pub d_h: usize,
    pub d_out: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub final_learning_rate: Option<f64>,
    pub batch_switch_every: usize,
    pub clip_norm: Option<f64>,
    pub val_every: usize,
    pub target_loss: Option<f64>,
    pub seed: u64,
}

impl Default for RnnSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            d_in: 32,
            d_h: 128,
            d_out: 128,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            final_learning_rate: t.final_learning_rate,
            batch_switch_every: t.batch_switch_every,
            clip_norm: t.clip_norm,
            val_every: t.val_every,
            target_loss: t.target_loss,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub d_in: Vec<usize>,
    pub d_h: Vec<usize>,
    pub d_out: Vec<usize>,
    pub epochs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            d_in: vec![16, 32],
            d_h: vec![32, 64, 128],
            d_out: vec![32],
            epochs: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSection {
    /// 1-based increments whose λ fields are written; `None` means the
    /// quarter points of the path.
    pub record_increments: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { data: PathBuf::from("data") }
    }
}

/// Role of a generated load path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPath {
    pub name: String,
    pub role: Role,
    pub path: LoadPath,
}

const VALIDATION_SEED_OFFSET: u64 = 1_000_000;

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        self.check().map_err(|e| match e {
            CliError::Core(e) => CliError::Config(e.to_string()),
            other => other,
        })
    }

    fn check(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let g = &self.geometry;
        if g.divisions < 2 || !(g.size > 0.0) {
            return bad(format!("geometry: divisions {} and size {} must be >= 2 and > 0", g.divisions, g.size));
        }
        self.geometry()?;
        self.materials()?;
        self.solver().validate()?;
        if self.pod.n_b == 0 || self.pod.stride == 0 {
            return bad("pod: n_b and stride must be at least 1".into());
        }
        let l = &self.loading;
        if l.n_inc < 2 || l.n_inc % 2 != 0 {
            return bad(format!("loading: n_inc = {} must be even and >= 2", l.n_inc));
        }
        if !(l.cyclic_fraction > 0.0 && l.cyclic_fraction < 1.0) {
            return bad(format!("loading: cyclic_fraction = {} must lie in (0, 1)", l.cyclic_fraction));
        }
        if !(l.random_step >= 0.0) {
            return bad(format!("loading: random_step = {} must be >= 0", l.random_step));
        }
        self.dims(1)?.validate()?;
        self.train_config().validate()?;
        if self.sweep.d_in.is_empty() || self.sweep.d_h.is_empty() || self.sweep.d_out.is_empty() {
            return bad("sweep: every grid axis needs at least one value".into());
        }
        if let Some(list) = &self.online.record_increments {
            if list.iter().any(|&k| k == 0 || k > l.n_inc) {
                return bad(format!("online: record_increments must lie in 1..={}", l.n_inc));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> CliResult<GeometryConfig> {
        let g = &self.geometry;
        let config = match &g.particles {
            None => {
                let mut d = GeometryConfig::default_rve(g.divisions);
                for p in &mut d.particles {
                    p.center = [p.center[0] * g.size, p.center[1] * g.size];
                    p.radius *= g.size;
                }
                d.size = g.size;
                d
            }
            Some(list) => GeometryConfig {
                size: g.size,
                divisions: g.divisions,
                particles: list.iter().map(|p| Particle { center: p.center, radius: p.radius }).collect(),
            },
        };
        Ok(config)
    }

    pub fn materials(&self) -> CliResult<Materials> {
        Ok(Materials {
            matrix: self.materials.matrix.params()?,
            particle: self.materials.particle.params()?,
        })
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol_newton: self.solver.tol_newton,
            max_iter: self.solver.max_iter,
            max_bisections: self.solver.max_bisections,
            ..SolverConfig::default()
        }
    }

    pub fn dims(&self, n_b: usize) -> CliResult<RnnDims> {
        let r = &self.rnn;
        let dims = RnnDims { d_in: r.d_in, d_h: r.d_h, d_out: r.d_out, n_b };
        dims.validate()?;
        Ok(dims)
    }

    pub fn train_config(&self) -> TrainConfig {
        let r = &self.rnn;
        TrainConfig {
            learning_rate: r.learning_rate,
            final_learning_rate: r.final_learning_rate,
            epochs: r.epochs,
            batch_switch_every: r.batch_switch_every,
            clip_norm: r.clip_norm,
            val_every: r.val_every,
            target_loss: r.target_loss,
            seed: r.seed,
            ..TrainConfig::default()
        }
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        SweepGrid {
            d_in: self.sweep.d_in.clone(),
            d_h: self.sweep.d_h.clone(),
            d_out: self.sweep.d_out.clone(),
        }
    }

    /// Increments whose fields are kept for λ comparisons.
    pub fn record_increments(&self) -> Vec<usize> {
        match &self.online.record_increments {
            Some(list) => list.clone(),
            None => {
                let n = self.loading.n_inc;
                let mut v: Vec<usize> = (1..=4).map(|q| (q * n / 4).max(1)).collect();
                v.dedup();
                v
            }
        }
    }

    /// Training and validation paths. Validation cyclic rays lie halfway
    /// between neighbouring training rays; random walks use disjoint seeds.
    pub fn load_paths(&self) -> CliResult<Vec<NamedPath>> {
        let l = &self.loading;
        let mut out = Vec::new();
        let mut push = |name: String, role, path| out.push(NamedPath { name, role, path });
        for (k, t) in cyclic_fan(l.cyclic_train, l.cyclic_fraction, 0.0).into_iter().enumerate() {
            push(format!("train_cyclic_{k:03}"), Role::Train, cyclic_path(t, l.n_inc)?);
        }
        for k in 0..l.random_train {
            push(format!("train_random_{k:03}"), Role::Train, random_path(l.random_step, l.n_inc, l.seed + k as u64)?);
        }
        let rays = l.cyclic_train.max(l.cyclic_val).max(1);
        let shifted = cyclic_fan(rays, l.cyclic_fraction, std::f64::consts::PI / rays as f64);
        for k in 0..l.cyclic_val {
            let t = shifted[(2 * k + 1) * rays / (2 * l.cyclic_val) % rays];
            push(format!("val_cyclic_{k:03}"), Role::Validation, cyclic_path(t, l.n_inc)?);
        }
        for k in 0..l.random_val {
            let seed = l.seed + VALIDATION_SEED_OFFSET + k as u64;
            push(format!("val_random_{k:03}"), Role::Validation, random_path(l.random_step, l.n_inc, seed)?);
        }
        Ok(out)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.loading.seed = seed;
        self.rnn.seed = seed;
        self
    }
}
