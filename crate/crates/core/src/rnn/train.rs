//! Adam, the epoch loop and the architecture sweep.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grad::{backward_from_trace, sample_loss, LossSpace};
use super::model::{NormStats, RnnDims, RnnModel, RnnParams, SequenceSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Rate reached at the last epoch by geometric decay; `None` keeps it constant.
    pub final_learning_rate: Option<f64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    /// Epochs spent on one simulation before moving to the next.
    pub batch_switch_every: usize,
    pub hidden_init: f64,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables it.
    pub clip_norm: Option<f64>,
    /// Validation loss is evaluated every this many epochs (and at the end).
    pub val_every: usize,
    /// Stop once the raw training loss of the current batch is at or below this.
    pub target_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            final_learning_rate: None,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 20_000,
            batch_switch_every: 1,
            hidden_init: -1.0,
            seed: 0,
            clip_norm: Some(10.0),
            val_every: 100,
            target_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.final_learning_rate.is_none_or(|r| r > 0.0)
            && (0.0..1.0).contains(&self.adam_beta1)
            && (0.0..1.0).contains(&self.adam_beta2)
            && self.adam_eps > 0.0
            && self.batch_switch_every > 0
            && self.val_every > 0
            && self.hidden_init.is_finite()
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "bad training settings {self:?}"
            )))
        }
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.final_learning_rate {
            Some(last) if self.epochs > 1 => {
                let t = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
                self.learning_rate * (last / self.learning_rate).powf(t)
            }
            _ => self.learning_rate,
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: RnnParams,
    pub v: RnnParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(dims: &RnnDims) -> Self {
        Self {
            m: RnnParams::zeros(dims),
            v: RnnParams::zeros(dims),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut RnnParams,
    grads: &RnnParams,
    state: &mut AdamState,
    config: &TrainConfig,
) {
    state.step += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powf(state.step as f64);
    let c2 = 1.0 - b2.powf(state.step as f64);
    let lr = config.learning_rate;
    let eps = config.adam_eps;
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
        }
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    /// Mean-squared coefficient error of this epoch's batch, physical units.
    pub train_loss: f64,
    /// The same in normalized units (the optimized objective).
    pub train_loss_normalized: f64,
    /// Mean over validation samples, when evaluated.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: RnnModel,
    pub history: Vec<LossRecord>,
    /// First epoch at which `target_loss` was met.
    pub reached_target: Option<usize>,
    /// Mean raw loss of the final model over all training samples.
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
}

/// Starting point for training.
#[derive(Debug, Clone)]
pub enum ModelInit {
    /// Fresh Glorot-initialized model with normalization fitted to the data.
    Fresh(RnnDims),
    Resume(RnnModel),
}

/// Mean raw loss over samples.
pub fn evaluate(model: &RnnModel, samples: &[SequenceSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    let mut total = 0.0;
    for s in samples {
        total += sample_loss(s, model, LossSpace::Raw)?;
    }
    Ok(total / samples.len() as f64)
}

fn check_dataset(samples: &[SequenceSample], n_b: usize, what: &str) -> Result<()> {
    let len = samples.first().map(|s| s.len());
    for s in samples {
        s.validate()?;
        if Some(s.len()) != len {
            return Err(Error::Shape(format!("{what} sequences differ in length")));
        }
        if s.n_b() != n_b {
            return Err(Error::Shape(format!(
                "{what} sample has {} coefficients, model predicts {n_b}",
                s.n_b()
            )));
        }
    }
    Ok(())
}

pub fn train(
    dataset: &[SequenceSample],
    validation: &[SequenceSample],
    config: &TrainConfig,
    init: ModelInit,
) -> Result<TrainResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = match init {
        ModelInit::Fresh(dims) => RnnModel::initialize(dims, NormStats::fit(dataset)?, &mut rng)?,
        ModelInit::Resume(m) => {
            m.validate()?;
            m
        }
    };
    model.hidden_init = config.hidden_init;
    check_dataset(dataset, model.dims.n_b, "training")?;
    check_dataset(validation, model.dims.n_b, "validation")?;

    let mut adam = AdamState::new(&model.dims);
    let mut history = Vec::with_capacity(config.epochs);
    let mut reached_target = None;
    for epoch in 0..config.epochs {
        let sample = &dataset[(epoch / config.batch_switch_every) % dataset.len()];
        let trace = model.trace(&sample.inputs);
        let mut grad = backward_from_trace(sample, &model, &trace, LossSpace::Normalized);
        if !grad.loss.is_finite() || !grad.raw_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: format!(
                    "loss {} (raw {}), parameter norm {:e}",
                    grad.loss,
                    grad.raw_loss,
                    model.params.norm_squared().sqrt()
                ),
            });
        }
        let last = epoch + 1 == config.epochs;
        let val_loss = if !validation.is_empty() && ((epoch + 1) % config.val_every == 0 || last) {
            Some(evaluate(&model, validation)?)
        } else {
            None
        };
        history.push(LossRecord {
            epoch,
            train_loss: grad.raw_loss,
            train_loss_normalized: grad.loss,
            val_loss,
        });
        if config.target_loss.is_some_and(|t| grad.raw_loss <= t) {
            reached_target = Some(epoch);
            if let (Some(rec), false) = (history.last_mut(), validation.is_empty()) {
                rec.val_loss = Some(evaluate(&model, validation)?);
            }
            break;
        }
        if let Some(clip) = config.clip_norm {
            let norm = grad.grads.norm_squared().sqrt();
            if norm > clip {
                let s = clip / norm;
                grad.grads.tensors_mut().into_iter().for_each(|t| *t *= s);
            }
        }
        let step_config = TrainConfig {
            learning_rate: config.learning_rate_at(epoch),
            ..*config
        };
        adam_step(&mut model.params, &grad.grads, &mut adam, &step_config);
    }
    let final_train_loss = evaluate(&model, dataset)?;
    let final_val_loss = if validation.is_empty() {
        None
    } else {
        Some(evaluate(&model, validation)?)
    };
    Ok(TrainResult {
        model,
        history,
        reached_target,
        final_train_loss,
        final_val_loss,
    })
}

/// Layer widths tried by [`hyper_sweep`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepGrid {
    pub d_in: Vec<usize>,
    pub d_h: Vec<usize>,
    pub d_out: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dims: RnnDims,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub error: Option<String>,
}

/// Trains one model per grid point with the same seed and epoch budget.
/// Failures are recorded in the row and do not stop the sweep.
pub fn hyper_sweep(
    grid: &SweepGrid,
    dataset: &[SequenceSample],
    validation: &[SequenceSample],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    let n_b = dataset
        .first()
        .ok_or_else(|| Error::Empty("training dataset is empty".into()))?
        .n_b();
    let mut rows = Vec::with_capacity(grid.d_in.len() * grid.d_h.len() * grid.d_out.len());
    for &d_in in &grid.d_in {
        for &d_h in &grid.d_h {
            for &d_out in &grid.d_out {
                let dims = RnnDims {
                    d_in,
                    d_h,
                    d_out,
                    n_b,
                };
                rows.push(
                    match train(dataset, validation, config, ModelInit::Fresh(dims)) {
                        Ok(r) => SweepRow {
                            dims,
                            train_loss: Some(r.final_train_loss),
                            val_loss: r.final_val_loss,
                            error: None,
                        },
                        Err(e) => SweepRow {
                            dims,
                            train_loss: None,
                            val_loss: None,
                            error: Some(e.to_string()),
                        },
                    },
                );
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dims() -> RnnDims {
        RnnDims {
            d_in: 4,
            d_h: 6,
            d_out: 5,
            n_b: 2,
        }
    }

    fn ramp(t: usize) -> SequenceSample {
        let inputs: Vec<[f64; 2]> = (0..t)
            .map(|k| [1.0 + 0.01 * k as f64, 0.005 * k as f64])
            .collect();
        let targets = DMatrix::from_fn(t, 2, |k, j| {
            if j == 0 {
                0.02 * k as f64
            } else {
                -0.001 * (k as f64).sqrt()
            }
        });
        SequenceSample::new(inputs, targets).unwrap()
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let d = dims();
        let cfg = TrainConfig::default();
        let mut p = RnnParams::zeros(&d);
        let mut st = AdamState::new(&d);
        adam_step(&mut p, &RnnParams::zeros(&d), &mut st, &cfg);
        assert_eq!(p, RnnParams::zeros(&d));
        assert_eq!(st.m.norm_squared(), 0.0);

        let mut g = RnnParams::zeros(&d);
        g.w_z[(0, 0)] = 0.3;
        g.b_out[(1, 0)] = -2e-9;
        let mut p = RnnParams::zeros(&d);
        let mut st = AdamState::new(&d);
        adam_step(&mut p, &g, &mut st, &cfg);
        assert!((p.w_z[(0, 0)] + 1e-3 * 0.3 / (0.3 + 1e-8)).abs() < 1e-10);
        assert!((p.b_out[(1, 0)] - 1e-3 * 2e-9 / (2e-9 + 1e-8)).abs() < 1e-10);

        // moments decay under a zero gradient
        let m_before = st.m.w_z[(0, 0)];
        let v_before = st.v.w_z[(0, 0)];
        adam_step(&mut p, &RnnParams::zeros(&d), &mut st, &cfg);
        assert!((st.m.w_z[(0, 0)] - 0.9 * m_before).abs() < 1e-15);
        assert!((st.v.w_z[(0, 0)] - 0.999 * v_before).abs() < 1e-15);
    }

    #[test]
    fn adam_constant_gradient_moves_by_learning_rate() {
        let d = dims();
        let cfg = TrainConfig::default();
        let mut g = RnnParams::zeros(&d);
        g.r_c[(1, 2)] = 0.7;
        g.r_c[(2, 1)] = -0.04;
        let mut p = RnnParams::zeros(&d);
        let mut st = AdamState::new(&d);
        for _ in 0..2000 {
            let before = p.clone();
            adam_step(&mut p, &g, &mut st, &cfg);
            let d1 = p.r_c[(1, 2)] - before.r_c[(1, 2)];
            let d2 = p.r_c[(2, 1)] - before.r_c[(2, 1)];
            assert!((d1 + 1e-3).abs() < 1e-9 && (d2 - 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn learning_rate_schedule_end_points() {
        let cfg = TrainConfig {
            epochs: 11,
            learning_rate: 1e-2,
            final_learning_rate: Some(1e-4),
            ..Default::default()
        };
        assert_eq!(cfg.learning_rate_at(0), 1e-2);
        assert!((cfg.learning_rate_at(5) - 1e-3).abs() < 1e-15);
        assert!((cfg.learning_rate_at(10) - 1e-4).abs() < 1e-17);
        assert_eq!(TrainConfig::default().learning_rate_at(7), 1e-3);
    }

    #[test]
    fn learns_the_zero_map() {
        let inputs: Vec<[f64; 2]> = (0..20)
            .map(|k| [1.0 + 0.01 * k as f64, 0.02 * k as f64])
            .collect();
        let s = SequenceSample::new(inputs, DMatrix::zeros(20, 2)).unwrap();
        let cfg = TrainConfig {
            epochs: 4000,
            learning_rate: 1e-2,
            seed: 1,
            target_loss: Some(1e-6),
            ..Default::default()
        };
        let r = train(&[s], &[], &cfg, ModelInit::Fresh(dims())).unwrap();
        assert!(r.final_train_loss <= 1e-6, "{}", r.final_train_loss);
        assert!(r.reached_target.is_some());
    }

    #[test]
    fn duplicated_sample_gives_identical_history() {
        let cfg = TrainConfig {
            epochs: 60,
            seed: 3,
            val_every: 10,
            ..Default::default()
        };
        let s = ramp(15);
        let a = train(&[s.clone()], &[s.clone()], &cfg, ModelInit::Fresh(dims())).unwrap();
        let b = train(
            &[s.clone(), s.clone()],
            &[s.clone()],
            &cfg,
            ModelInit::Fresh(dims()),
        )
        .unwrap();
        // normalization statistics of the duplicated set agree up to rounding
        assert_eq!(a.history.len(), b.history.len());
        for (x, y) in a.history.iter().zip(&b.history) {
            assert!((x.train_loss - y.train_loss).abs() <= 1e-12 * x.train_loss);
            assert_eq!(x.val_loss.is_some(), y.val_loss.is_some());
        }
        assert_eq!(a.history.len(), 60);
        assert!(a.history[9].val_loss.is_some() && a.history[8].val_loss.is_none());
        assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        assert!(matches!(
            train(&[], &[], &cfg, ModelInit::Fresh(dims())),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            train(&[ramp(5), ramp(6)], &[], &cfg, ModelInit::Fresh(dims())),
            Err(Error::Shape(_))
        ));
        let bad = TrainConfig {
            adam_beta1: 1.0,
            ..cfg.clone()
        };
        assert!(train(&[ramp(5)], &[], &bad, ModelInit::Fresh(dims())).is_err());
        let mut huge = ramp(5);
        huge.targets[(0, 0)] = f64::NAN;
        assert!(train(&[huge], &[], &cfg, ModelInit::Fresh(dims())).is_err());
    }

    #[test]
    fn sweep_counts_and_single_cell_equals_train() {
        let cfg = TrainConfig {
            epochs: 30,
            seed: 2,
            ..Default::default()
        };
        let data = [ramp(10)];
        let grid = SweepGrid {
            d_in: vec![3],
            d_h: vec![4],
            d_out: vec![5],
        };
        let rows = hyper_sweep(&grid, &data, &data, &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let direct = train(
            &data,
            &data,
            &cfg,
            ModelInit::Fresh(RnnDims {
                d_in: 3,
                d_h: 4,
                d_out: 5,
                n_b: 2,
            }),
        )
        .unwrap();
        assert_eq!(rows[0].train_loss, Some(direct.final_train_loss));
        assert_eq!(rows[0].val_loss, direct.final_val_loss);

        let grid = SweepGrid {
            d_in: vec![2, 3],
            d_h: vec![0, 4, 5],
            d_out: vec![3],
        };
        let rows = hyper_sweep(&grid, &data, &[], &cfg).unwrap();
        assert_eq!(rows.len(), 6);
        // zero-width cells fail without aborting the sweep
        assert_eq!(rows.iter().filter(|r| r.error.is_some()).count(), 2);
    }
}
