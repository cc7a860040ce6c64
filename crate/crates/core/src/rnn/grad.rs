//! Mean-squared error and back-propagation through time.

use nalgebra::{DMatrix, DVector};

use super::model::{leaky_slope_at, ForwardTrace, RnnModel, RnnParams, SequenceSample};
use crate::error::{Error, Result};

/// `(1/T) Σ_t ‖pred_t − target_t‖²` with one sample per row.
pub fn mse_loss(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.nrows() == 0 {
        return Ok(0.0);
    }
    Ok((pred - target).norm_squared() / pred.nrows() as f64)
}

/// Which loss the gradient refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossSpace {
    /// Coefficients in physical units.
    Raw,
    /// Coefficients divided by their output scales; used by the optimizer so
    /// that low-energy modes are not ignored.
    #[default]
    Normalized,
}

/// Loss value and its gradient with respect to every parameter.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub loss: f64,
    /// Loss in physical units, whatever `space` was.
    pub raw_loss: f64,
    pub grads: RnnParams,
}

fn row_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), 1, |i, _| m.row(i).sum())
}

/// Full BPTT over the whole sequence.
pub fn backward_sequence(
    sample: &SequenceSample,
    model: &RnnModel,
    space: LossSpace,
) -> Result<Gradient> {
    sample.validate()?;
    if sample.n_b() != model.dims.n_b {
        return Err(Error::Shape(format!(
            "sample has {} coefficients, model predicts {}",
            sample.n_b(),
            model.dims.n_b
        )));
    }
    let t_len = sample.len();
    let grads = RnnParams::zeros(&model.dims);
    if t_len == 0 {
        return Ok(Gradient {
            loss: 0.0,
            raw_loss: 0.0,
            grads,
        });
    }
    let tr = model.trace(&sample.inputs);
    Ok(backward_from_trace(sample, model, &tr, space))
}

pub(crate) fn backward_from_trace(
    sample: &SequenceSample,
    model: &RnnModel,
    tr: &ForwardTrace,
    space: LossSpace,
) -> Gradient {
    let p = &model.params;
    let t_len = sample.len();
    let n_b = model.dims.n_b;
    let d_h = model.dims.d_h;
    let slope = model.leaky_slope;
    let scale = &model.norm.output_scale;

    // residual in normalized units, n_b × T
    let diff = DMatrix::from_fn(n_b, t_len, |j, t| {
        tr.y_norm[(j, t)] - sample.targets[(t, j)] / scale[j]
    });
    let weight = |j: usize| match space {
        LossSpace::Raw => scale[j] * scale[j],
        LossSpace::Normalized => 1.0,
    };
    let mut raw_loss = 0.0;
    let mut loss = 0.0;
    for t in 0..t_len {
        for j in 0..n_b {
            let d2 = diff[(j, t)] * diff[(j, t)];
            raw_loss += d2 * scale[j] * scale[j];
            loss += d2 * weight(j);
        }
    }
    raw_loss /= t_len as f64;
    loss /= t_len as f64;
    let inv_t = 2.0 / t_len as f64;
    let dy = DMatrix::from_fn(n_b, t_len, |j, t| inv_t * weight(j) * diff[(j, t)]);

    let mut g = RnnParams::zeros(&model.dims);
    g.w_out = &dy * tr.o.transpose();
    g.b_out = row_sums(&dy);
    let mut da_hid = p.w_out.tr_mul(&dy);
    da_hid.zip_apply(&tr.a_hid, |d, a| *d *= leaky_slope_at(a, slope));
    let h_seq = tr.h.columns(1, t_len);
    g.w_hid = &da_hid * h_seq.transpose();
    g.b_hid = row_sums(&da_hid);
    let dh_seq = p.w_hid.tr_mul(&da_hid);

    let mut daz = DMatrix::zeros(d_h, t_len);
    let mut dar = DMatrix::zeros(d_h, t_len);
    let mut dac = DMatrix::zeros(d_h, t_len);
    let mut dh_next = DVector::<f64>::zeros(d_h);
    let mut dh = DVector::zeros(d_h);
    let mut va = DVector::zeros(d_h);
    let mut vc = DVector::zeros(d_h);
    let mut drh = DVector::zeros(d_h);
    let mut vr = DVector::zeros(d_h);
    for t in (0..t_len).rev() {
        for i in 0..d_h {
            dh[i] = dh_seq[(i, t)] + dh_next[i];
        }
        let (z, r, c) = (tr.z.column(t), tr.r.column(t), tr.c.column(t));
        let hp = tr.h.column(t);
        for i in 0..d_h {
            va[i] = dh[i] * (c[i] - hp[i]) * z[i] * (1.0 - z[i]);
            vc[i] = dh[i] * z[i] * (1.0 - c[i] * c[i]);
        }
        drh.gemv_tr(1.0, &p.r_c, &vc, 0.0);
        for i in 0..d_h {
            vr[i] = drh[i] * hp[i] * r[i] * (1.0 - r[i]);
        }
        for i in 0..d_h {
            dh_next[i] = dh[i] * (1.0 - z[i]) + drh[i] * r[i];
        }
        dh_next.gemv_tr(1.0, &p.r_z, &va, 1.0);
        dh_next.gemv_tr(1.0, &p.r_r, &vr, 1.0);
        daz.set_column(t, &va);
        dar.set_column(t, &vr);
        dac.set_column(t, &vc);
    }
    let h_prev = tr.h.columns(0, t_len);
    g.r_z = &daz * h_prev.transpose();
    g.r_r = &dar * h_prev.transpose();
    g.r_c = &dac * tr.rh.transpose();
    g.w_z = &daz * tr.x_feat.transpose();
    g.w_r = &dar * tr.x_feat.transpose();
    g.w_c = &dac * tr.x_feat.transpose();
    g.b_z = row_sums(&daz);
    g.b_r = row_sums(&dar);
    g.b_c = row_sums(&dac);
    let mut da_in = p.w_z.tr_mul(&daz) + p.w_r.tr_mul(&dar) + p.w_c.tr_mul(&dac);
    da_in.zip_apply(&tr.a_in, |d, a| *d *= leaky_slope_at(a, slope));
    g.w_in = &da_in * tr.x_norm.transpose();
    g.b_in = row_sums(&da_in);
    Gradient {
        loss,
        raw_loss,
        grads: g,
    }
}

/// Loss of the model on a sample without gradients.
pub fn sample_loss(sample: &SequenceSample, model: &RnnModel, space: LossSpace) -> Result<f64> {
    sample.validate()?;
    if sample.is_empty() {
        return Ok(0.0);
    }
    let tr = model.trace(&sample.inputs);
    let scale = &model.norm.output_scale;
    let mut loss = 0.0;
    for t in 0..sample.len() {
        for j in 0..model.dims.n_b {
            let d = tr.y_norm[(j, t)] * scale[j] - sample.targets[(t, j)];
            loss += match space {
                LossSpace::Raw => d * d,
                LossSpace::Normalized => (d / scale[j]).powi(2),
            };
        }
    }
    Ok(loss / sample.len() as f64)
}

/// Largest entry-wise deviation between BPTT and central differences of
/// the loss, each measured against `max(|g|, |fd|, floor·max|g|)`.
pub fn gradient_check(
    sample: &SequenceSample,
    model: &RnnModel,
    space: LossSpace,
    step: f64,
    floor: f64,
) -> Result<f64> {
    let analytic = backward_sequence(sample, model, space)?.grads;
    let gmax = analytic
        .tensors()
        .iter()
        .map(|t| t.amax())
        .fold(0.0, f64::max);
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for k in 0..analytic.tensors().len() {
        for idx in 0..analytic.tensors()[k].len() {
            let orig = probe.params.tensors()[k][idx];
            probe.params.tensors_mut()[k][idx] = orig + step;
            let lp = sample_loss(sample, &probe, space)?;
            probe.params.tensors_mut()[k][idx] = orig - step;
            let lm = sample_loss(sample, &probe, space)?;
            probe.params.tensors_mut()[k][idx] = orig;
            let fd = (lp - lm) / (2.0 * step);
            let g = analytic.tensors()[k][idx];
            let denom = g
                .abs()
                .max(fd.abs())
                .max(floor * gmax)
                .max(f64::MIN_POSITIVE);
            worst = worst.max((g - fd).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::model::{NormStats, RnnDims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(seed: u64) -> (RnnModel, SequenceSample) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = RnnDims {
            d_in: 4,
            d_h: 3,
            d_out: 5,
            n_b: 2,
        };
        let norm = NormStats {
            input_mean: [1.0, 0.0],
            input_scale: [0.1, 0.2],
            output_scale: vec![0.3, 0.05],
        };
        let mut m = RnnModel::initialize(dims, norm, &mut rng).unwrap();
        for t in m.params.tensors_mut() {
            t.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
        }
        let inputs = (0..5)
            .map(|_| [rng.random_range(0.8..1.2), rng.random_range(-0.2..0.2)])
            .collect();
        let targets = DMatrix::from_fn(5, 2, |_, j| rng.random_range(-0.3..0.3) * [1.0, 0.1][j]);
        (m, SequenceSample::new(inputs, targets).unwrap())
    }

    #[test]
    fn loss_examples() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 0.5]);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let e = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        assert_eq!(mse_loss(&e, &DMatrix::zeros(1, 3)).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = DMatrix::<f64>::from_fn(7, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = DMatrix::<f64>::from_fn(7, 4, |_, _| rng.random_range(-1.0..1.0));
        let mut oracle = 0.0f64;
        for i in 0..7 {
            let mut s = 0.0f64;
            for j in 0..4 {
                s += (p[(i, j)] - q[(i, j)]).powi(2);
            }
            oracle += s;
        }
        assert!((mse_loss(&p, &q).unwrap() - oracle / 7.0).abs() < 1e-12);
        assert!(mse_loss(&p, &DMatrix::zeros(7, 3)).is_err());
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..3 {
            let (m, s) = tiny(seed);
            for space in [LossSpace::Raw, LossSpace::Normalized] {
                let err = gradient_check(&s, &m, space, 1e-5, 1e-6).unwrap();
                assert!(err < 1e-5, "seed {seed} {space:?}: {err:e}");
            }
        }
    }

    #[test]
    fn loss_values_agree_between_paths() {
        let (m, s) = tiny(7);
        let g = backward_sequence(&s, &m, LossSpace::Normalized).unwrap();
        let (pred, _) = m.forward_sequence(&s.inputs);
        assert!((g.raw_loss - mse_loss(&pred, &s.targets).unwrap()).abs() < 1e-14);
        assert!((g.loss - sample_loss(&s, &m, LossSpace::Normalized).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn empty_sequence_and_exact_fit_have_zero_gradient() {
        let (m, _) = tiny(1);
        let empty = SequenceSample::new(vec![], DMatrix::zeros(0, 2)).unwrap();
        let g = backward_sequence(&empty, &m, LossSpace::Raw).unwrap();
        assert_eq!(g.grads.norm_squared(), 0.0);

        let inputs = vec![[1.0, 0.1], [1.1, 0.0], [0.9, -0.1]];
        let (pred, _) = m.forward_sequence(&inputs);
        let exact = SequenceSample::new(inputs, pred).unwrap();
        let g = backward_sequence(&exact, &m, LossSpace::Raw).unwrap();
        assert!(g.loss < 1e-28);
        assert!(g.grads.tensors().iter().all(|t| t.amax() < 1e-12));
    }
}
