//! Versioned binary checkpoint of all parameter tensors.
//!
//! Layout (little-endian): magic `FTLC`, `u16` version, then for each of
//! encoder, decoder and filter a `u64` layer count followed by
//! `(u64 rows, u64 cols, rows·cols f64 weights, rows f64 bias)` per layer,
//! then the classifier as `(u64 rows, u64 cols, rows·cols f64)`.

use std::path::Path;

use crate::codec::{read_file, Decoder, Encoder};
use crate::error::{FtlError, Result};
use crate::network::{Dense, Mlp, NetworkParams};
use crate::numerics::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FTLC";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode(params: &NetworkParams) -> Vec<u8> {
    let mut e = Encoder::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    write_params(&mut e, params);
    e.into_bytes()
}

fn write_params(e: &mut Encoder, params: &NetworkParams) {
    for mlp in [&params.enc, &params.dec, &params.filter] {
        e.usize(mlp.layers.len());
        for l in &mlp.layers {
            e.usize(l.weight.rows());
            e.usize(l.weight.cols());
            e.f64s(l.weight.as_slice());
            e.f64s(&l.bias);
        }
    }
    e.usize(params.fc.rows());
    e.usize(params.fc.cols());
    e.f64s(params.fc.as_slice());
}

pub fn save(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut e = Encoder::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    write_params(&mut e, params);
    e.write_atomic(path)
}

pub fn load(path: &Path) -> Result<NetworkParams> {
    decode(&read_file(path)?)
}

pub fn decode(bytes: &[u8]) -> Result<NetworkParams> {
    let mut d = Decoder::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, "checkpoint")?;
    let mut stacks = Vec::with_capacity(3);
    for _ in 0..3 {
        let n = d.len(16)?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let (rows, cols) = read_shape(&mut d)?;
            let weight = Matrix::from_vec(rows, cols, d.f64s(rows * cols)?)?;
            let bias = d.f64s(rows)?;
            layers.push(Dense { weight, bias });
        }
        stacks.push(Mlp { layers });
    }
    let (rows, cols) = read_shape(&mut d)?;
    let fc = Matrix::from_vec(rows, cols, d.f64s(rows * cols)?)?;
    d.finish()?;
    let filter = stacks.pop().unwrap();
    let dec = stacks.pop().unwrap();
    let enc = stacks.pop().unwrap();
    let params = NetworkParams {
        enc,
        dec,
        filter,
        fc,
    };
    params
        .validate()
        .map_err(|e| FtlError::CorruptRecord(format!("checkpoint: {e}")))?;
    Ok(params)
}

fn read_shape(d: &mut Decoder<'_>) -> Result<(usize, usize)> {
    let rows = d.len(0)?;
    let cols = d.len(0)?;
    if rows == 0 || cols == 0 || rows.checked_mul(cols).is_none() {
        return Err(FtlError::CorruptRecord(format!(
            "checkpoint: invalid tensor shape {rows}x{cols}"
        )));
    }
    Ok((rows, cols))
}
