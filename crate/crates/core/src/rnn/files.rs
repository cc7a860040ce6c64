//! Model file (`RVERNN01`) and loss-history CSV.
//!
//! Model layout, all little-endian: magic, `d_in`, `d_h`, `d_out`, `n_b` as
//! u64, leaky slope and hidden init as f64, input means (2), input scales
//! (2), output scales (`n_b`), then the tensors `w_in, b_in, w_z, r_z, b_z,
//! w_r, r_r, b_r, w_c, r_c, b_c, w_hid, b_hid, w_out, b_out`, each
//! column-major with the shape implied by the dimensions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::model::{NormStats, RnnDims, RnnModel, RnnParams};
use super::train::{LossRecord, SweepRow};
use crate::error::{Error, Result};
use crate::io::{expect_eof, read_f64s, read_len, read_magic, write_f64s, write_magic, write_u64};

pub const MODEL_MAGIC: &[u8; 8] = b"RVERNN01";

const MAX_WIDTH: u64 = 1 << 16;

pub fn write_model(w: &mut impl Write, model: &RnnModel) -> Result<()> {
    write_magic(w, MODEL_MAGIC)?;
    let d = model.dims;
    for v in [d.d_in, d.d_h, d.d_out, d.n_b] {
        write_u64(w, v as u64)?;
    }
    write_f64s(w, &[model.leaky_slope, model.hidden_init])?;
    write_f64s(w, &model.norm.input_mean)?;
    write_f64s(w, &model.norm.input_scale)?;
    write_f64s(w, &model.norm.output_scale)?;
    for t in model.params.tensors() {
        write_f64s(w, t.as_slice())?;
    }
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<RnnModel> {
    read_magic(r, MODEL_MAGIC)?;
    let dims = RnnDims {
        d_in: read_len(r, "d_in", MAX_WIDTH)?,
        d_h: read_len(r, "d_h", MAX_WIDTH)?,
        d_out: read_len(r, "d_out", MAX_WIDTH)?,
        n_b: read_len(r, "n_b", MAX_WIDTH)?,
    };
    dims.validate().map_err(|e| Error::Format(e.to_string()))?;
    let head = read_f64s(r, 2)?;
    let mean = read_f64s(r, 2)?;
    let scale = read_f64s(r, 2)?;
    let norm = NormStats {
        input_mean: [mean[0], mean[1]],
        input_scale: [scale[0], scale[1]],
        output_scale: read_f64s(r, dims.n_b)?,
    };
    let mut params = RnnParams::zeros(&dims);
    for (t, (rows, cols)) in params.tensors_mut().into_iter().zip(dims.shapes()) {
        *t = DMatrix::from_vec(rows, cols, read_f64s(r, rows * cols)?);
    }
    expect_eof(r)?;
    let mut model = RnnModel::new(dims, params, norm)?;
    model.leaky_slope = head[0];
    model.hidden_init = head[1];
    Ok(model)
}

pub fn save_model(path: &Path, model: &RnnModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<RnnModel> {
    read_model(&mut BufReader::new(File::open(path)?))
}

/// `epoch,train_loss,val_loss`; the validation field is empty when it was
/// not evaluated that epoch.
pub fn write_loss_csv(w: &mut impl Write, history: &[LossRecord]) -> Result<()> {
    writeln!(w, "epoch,train_loss,val_loss")?;
    for rec in history {
        match rec.val_loss {
            Some(v) => writeln!(w, "{},{},{}", rec.epoch, rec.train_loss, v)?,
            None => writeln!(w, "{},{},", rec.epoch, rec.train_loss)?,
        }
    }
    Ok(())
}

pub fn write_sweep_csv(w: &mut impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "d_in,d_h,d_out,n_b,train_loss,val_loss,error")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.dims.d_in,
            r.dims.d_h,
            r.dims.d_out,
            r.dims.n_b,
            opt(r.train_loss),
            opt(r.val_loss),
            err
        )?;
    }
    Ok(())
}
