//! Network parameters, normalization and the forward recurrence.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const HIDDEN_INIT: f64 = -1.0;

/// Layer widths: 2 inputs → `d_in` → GRU with `d_h` → `d_out` → `n_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RnnDims {
    pub d_in: usize,
    pub d_h: usize,
    pub d_out: usize,
    pub n_b: usize,
}

pub const N_INPUTS: usize = 2;

impl RnnDims {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_h == 0 || self.d_out == 0 || self.n_b == 0 {
            return Err(Error::InvalidConfig(format!(
                "all layer widths must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `(rows, cols)` of every tensor, in storage order.
    pub fn shapes(&self) -> [(usize, usize); N_TENSORS] {
        let RnnDims {
            d_in,
            d_h,
            d_out,
            n_b,
        } = *self;
        [
            (d_in, N_INPUTS),
            (d_in, 1),
            (d_h, d_in),
            (d_h, d_h),
            (d_h, 1),
            (d_h, d_in),
            (d_h, d_h),
            (d_h, 1),
            (d_h, d_in),
            (d_h, d_h),
            (d_h, 1),
            (d_out, d_h),
            (d_out, 1),
            (n_b, d_out),
            (n_b, 1),
        ]
    }
}

pub const N_TENSORS: usize = 15;

pub const TENSOR_NAMES: [&str; N_TENSORS] = [
    "w_in", "b_in", "w_z", "r_z", "b_z", "w_r", "r_r", "b_r", "w_c", "r_c", "b_c", "w_hid",
    "b_hid", "w_out", "b_out",
];

/// All trainable tensors. Biases are single-column matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub w_in: DMatrix<f64>,
    pub b_in: DMatrix<f64>,
    pub w_z: DMatrix<f64>,
    pub r_z: DMatrix<f64>,
    pub b_z: DMatrix<f64>,
    pub w_r: DMatrix<f64>,
    pub r_r: DMatrix<f64>,
    pub b_r: DMatrix<f64>,
    pub w_c: DMatrix<f64>,
    pub r_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub w_hid: DMatrix<f64>,
    pub b_hid: DMatrix<f64>,
    pub w_out: DMatrix<f64>,
    pub b_out: DMatrix<f64>,
}

impl RnnParams {
    pub fn zeros(dims: &RnnDims) -> Self {
        let s = dims.shapes();
        let z = |k: usize| DMatrix::zeros(s[k].0, s[k].1);
        Self {
            w_in: z(0),
            b_in: z(1),
            w_z: z(2),
            r_z: z(3),
            b_z: z(4),
            w_r: z(5),
            r_r: z(6),
            b_r: z(7),
            w_c: z(8),
            r_c: z(9),
            b_c: z(10),
            w_hid: z(11),
            b_hid: z(12),
            w_out: z(13),
            b_out: z(14),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(dims: &RnnDims, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(dims);
        for (k, t) in p.tensors_mut().into_iter().enumerate() {
            if TENSOR_NAMES[k].starts_with('b') {
                continue;
            }
            let limit = (6.0 / (t.nrows() + t.ncols()) as f64).sqrt();
            t.iter_mut()
                .for_each(|v| *v = rng.random_range(-limit..limit));
        }
        p
    }

    pub fn tensors(&self) -> [&DMatrix<f64>; N_TENSORS] {
        [
            &self.w_in,
            &self.b_in,
            &self.w_z,
            &self.r_z,
            &self.b_z,
            &self.w_r,
            &self.r_r,
            &self.b_r,
            &self.w_c,
            &self.r_c,
            &self.b_c,
            &self.w_hid,
            &self.b_hid,
            &self.w_out,
            &self.b_out,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut DMatrix<f64>; N_TENSORS] {
        [
            &mut self.w_in,
            &mut self.b_in,
            &mut self.w_z,
            &mut self.r_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.r_r,
            &mut self.b_r,
            &mut self.w_c,
            &mut self.r_c,
            &mut self.b_c,
            &mut self.w_hid,
            &mut self.b_hid,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.tensors().iter().map(|t| t.norm_squared()).sum()
    }

    pub fn dims(&self) -> RnnDims {
        RnnDims {
            d_in: self.w_in.nrows(),
            d_h: self.r_z.nrows(),
            d_out: self.w_hid.nrows(),
            n_b: self.w_out.nrows(),
        }
    }

    pub fn check_shapes(&self, dims: &RnnDims) -> Result<()> {
        for ((t, s), name) in self.tensors().iter().zip(dims.shapes()).zip(TENSOR_NAMES) {
            if t.shape() != s {
                return Err(Error::Shape(format!(
                    "{name} is {:?}, expected {s:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Input standardization and per-coefficient output scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub input_mean: [f64; N_INPUTS],
    pub input_scale: [f64; N_INPUTS],
    pub output_scale: Vec<f64>,
}

impl NormStats {
    pub fn identity(n_b: usize) -> Self {
        Self {
            input_mean: [0.0; N_INPUTS],
            input_scale: [1.0; N_INPUTS],
            output_scale: vec![1.0; n_b],
        }
    }

    /// Mean and standard deviation of the inputs, max-abs of each output
    /// coefficient; zero spreads are replaced by one.
    pub fn fit(samples: &[SequenceSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Empty("no training samples".into()))?;
        let n_b = first.n_b();
        let mut count = 0usize;
        let mut sum = [0.0; N_INPUTS];
        let mut out = vec![0.0f64; n_b];
        for s in samples {
            s.validate()?;
            if s.n_b() != n_b {
                return Err(Error::Shape(format!(
                    "samples disagree on n_b: {} vs {n_b}",
                    s.n_b()
                )));
            }
            for x in &s.inputs {
                sum[0] += x[0];
                sum[1] += x[1];
            }
            count += s.len();
            for t in 0..s.len() {
                for j in 0..n_b {
                    out[j] = out[j].max(s.targets[(t, j)].abs());
                }
            }
        }
        if count == 0 {
            return Err(Error::Empty("all training sequences are empty".into()));
        }
        let mean = [sum[0] / count as f64, sum[1] / count as f64];
        let mut var = [0.0; N_INPUTS];
        for s in samples {
            for x in &s.inputs {
                var[0] += (x[0] - mean[0]).powi(2);
                var[1] += (x[1] - mean[1]).powi(2);
            }
        }
        let spread = |v: f64| if v > 0.0 { v } else { 1.0 };
        Ok(Self {
            input_mean: mean,
            input_scale: [
                spread((var[0] / count as f64).sqrt()),
                spread((var[1] / count as f64).sqrt()),
            ],
            output_scale: out.into_iter().map(spread).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self
            .input_scale
            .iter()
            .chain(&self.output_scale)
            .all(|&s| s > 0.0 && s.is_finite())
            && self.input_mean.iter().all(|m| m.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "normalization scales must be positive and finite: {self:?}"
            )))
        }
    }

    pub fn normalize_input(&self, x: [f64; N_INPUTS]) -> [f64; N_INPUTS] {
        [
            (x[0] - self.input_mean[0]) / self.input_scale[0],
            (x[1] - self.input_mean[1]) / self.input_scale[1],
        ]
    }

    pub fn denormalize_input(&self, x: [f64; N_INPUTS]) -> [f64; N_INPUTS] {
        [
            x[0] * self.input_scale[0] + self.input_mean[0],
            x[1] * self.input_scale[1] + self.input_mean[1],
        ]
    }
}

/// Inputs `(U11, U12)` and POD coefficient targets for one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub inputs: Vec<[f64; N_INPUTS]>,
    /// `T × n_b`.
    pub targets: DMatrix<f64>,
}

impl SequenceSample {
    pub fn new(inputs: Vec<[f64; N_INPUTS]>, targets: DMatrix<f64>) -> Result<Self> {
        let s = Self { inputs, targets };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_b(&self) -> usize {
        self.targets.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.nrows() {
            return Err(Error::Shape(format!(
                "{} inputs but {} target rows",
                self.inputs.len(),
                self.targets.nrows()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub dims: RnnDims,
    pub params: RnnParams,
    pub norm: NormStats,
    pub leaky_slope: f64,
    pub hidden_init: f64,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub(crate) fn leaky_slope_at(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// One GRU update.
pub fn gru_cell(x: &DVector<f64>, h_prev: &DVector<f64>, p: &RnnParams) -> DVector<f64> {
    let z = (&p.w_z * x + &p.r_z * h_prev + p.b_z.column(0)).map(sigmoid);
    let r = (&p.w_r * x + &p.r_r * h_prev + p.b_r.column(0)).map(sigmoid);
    let rh = r.component_mul(h_prev);
    let c = (&p.w_c * x + &p.r_c * rh + p.b_c.column(0)).map(f64::tanh);
    DVector::from_fn(h_prev.len(), |i, _| (1.0 - z[i]) * h_prev[i] + z[i] * c[i])
}

/// Quantities kept from a forward pass for back-propagation. Time runs
/// along columns.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub x_norm: DMatrix<f64>,
    pub a_in: DMatrix<f64>,
    pub x_feat: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub rh: DMatrix<f64>,
    /// `d_h × (T + 1)`, column 0 is the initial state.
    pub h: DMatrix<f64>,
    pub a_hid: DMatrix<f64>,
    pub o: DMatrix<f64>,
    /// Normalized outputs, `n_b × T`.
    pub y_norm: DMatrix<f64>,
}

fn add_bias(m: &mut DMatrix<f64>, b: &DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        col += b.column(0);
    }
}

impl RnnModel {
    pub fn new(dims: RnnDims, params: RnnParams, norm: NormStats) -> Result<Self> {
        dims.validate()?;
        params.check_shapes(&dims)?;
        norm.validate()?;
        if norm.output_scale.len() != dims.n_b {
            return Err(Error::Shape(format!(
                "{} output scales for n_b = {}",
                norm.output_scale.len(),
                dims.n_b
            )));
        }
        Ok(Self {
            dims,
            params,
            norm,
            leaky_slope: LEAKY_SLOPE,
            hidden_init: HIDDEN_INIT,
        })
    }

    pub fn initialize(dims: RnnDims, norm: NormStats, rng: &mut impl Rng) -> Result<Self> {
        dims.validate()?;
        let params = RnnParams::glorot(&dims, rng);
        Self::new(dims, params, norm)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.params.check_shapes(&self.dims)?;
        self.norm.validate()
    }

    /// Full forward pass; returns the trace with normalized outputs.
    pub fn trace(&self, inputs: &[[f64; N_INPUTS]]) -> ForwardTrace {
        let p = &self.params;
        let t_len = inputs.len();
        let d_h = self.dims.d_h;
        let slope = self.leaky_slope;
        let x_norm = DMatrix::from_fn(N_INPUTS, t_len, |i, t| {
            self.norm.normalize_input(inputs[t])[i]
        });
        let mut a_in = &p.w_in * &x_norm;
        add_bias(&mut a_in, &p.b_in);
        let x_feat = a_in.map(|v| leaky(v, slope));
        let mut pz = &p.w_z * &x_feat;
        add_bias(&mut pz, &p.b_z);
        let mut pr = &p.w_r * &x_feat;
        add_bias(&mut pr, &p.b_r);
        let mut pc = &p.w_c * &x_feat;
        add_bias(&mut pc, &p.b_c);

        let mut h = DMatrix::zeros(d_h, t_len + 1);
        h.column_mut(0).fill(self.hidden_init);
        let mut z = DMatrix::zeros(d_h, t_len);
        let mut r = DMatrix::zeros(d_h, t_len);
        let mut c = DMatrix::zeros(d_h, t_len);
        let mut rh = DMatrix::zeros(d_h, t_len);
        let mut hp = DVector::from_element(d_h, self.hidden_init);
        let mut az = DVector::zeros(d_h);
        let mut ar = DVector::zeros(d_h);
        let mut ac = DVector::zeros(d_h);
        let mut rhv = DVector::zeros(d_h);
        for t in 0..t_len {
            az.copy_from(&pz.column(t));
            az.gemv(1.0, &p.r_z, &hp, 1.0);
            ar.copy_from(&pr.column(t));
            ar.gemv(1.0, &p.r_r, &hp, 1.0);
            for i in 0..d_h {
                az[i] = sigmoid(az[i]);
                ar[i] = sigmoid(ar[i]);
                rhv[i] = ar[i] * hp[i];
            }
            ac.copy_from(&pc.column(t));
            ac.gemv(1.0, &p.r_c, &rhv, 1.0);
            for i in 0..d_h {
                ac[i] = ac[i].tanh();
                hp[i] = (1.0 - az[i]) * hp[i] + az[i] * ac[i];
            }
            z.set_column(t, &az);
            r.set_column(t, &ar);
            c.set_column(t, &ac);
            rh.set_column(t, &rhv);
            h.set_column(t + 1, &hp);
        }
        let mut a_hid = &p.w_hid * h.columns(1, t_len);
        add_bias(&mut a_hid, &p.b_hid);
        let o = a_hid.map(|v| leaky(v, slope));
        let mut y_norm = &p.w_out * &o;
        add_bias(&mut y_norm, &p.b_out);
        ForwardTrace {
            x_norm,
            a_in,
            x_feat,
            z,
            r,
            c,
            rh,
            h,
            a_hid,
            o,
            y_norm,
        }
    }

    /// De-normalized coefficient predictions, `T × n_b`.
    pub fn denormalize(&self, y_norm: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y_norm.ncols(), y_norm.nrows(), |t, j| {
            y_norm[(j, t)] * self.norm.output_scale[j]
        })
    }

    /// Predicted coefficients (`T × n_b`) and the hidden trace (`d_h × (T+1)`).
    pub fn forward_sequence(&self, inputs: &[[f64; N_INPUTS]]) -> (DMatrix<f64>, DMatrix<f64>) {
        let tr = self.trace(inputs);
        (self.denormalize(&tr.y_norm), tr.h)
    }

    pub fn stepper(&self) -> RnnStepper<'_> {
        RnnStepper {
            model: self,
            h: DVector::from_element(self.dims.d_h, self.hidden_init),
        }
    }
}

/// Incremental evaluation, one load increment at a time.
#[derive(Debug, Clone)]
pub struct RnnStepper<'a> {
    model: &'a RnnModel,
    pub h: DVector<f64>,
}

impl RnnStepper<'_> {
    pub fn step(&mut self, input: [f64; N_INPUTS]) -> DVector<f64> {
        let m = self.model;
        let p = &m.params;
        let xn = m.norm.normalize_input(input);
        let xn = DVector::from_column_slice(&xn);
        let x = (&p.w_in * xn + p.b_in.column(0)).map(|v| leaky(v, m.leaky_slope));
        self.h = gru_cell(&x, &self.h, p);
        let o = (&p.w_hid * &self.h + p.b_hid.column(0)).map(|v| leaky(v, m.leaky_slope));
        let y = &p.w_out * o + p.b_out.column(0);
        DVector::from_fn(y.len(), |j, _| y[j] * m.norm.output_scale[j])
    }
}
