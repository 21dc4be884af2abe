//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "SEACKPT1"
//! version      u32      1
//! model        u8       0 = gcn-align-lite, 1 = attention-lite
//! activation   u8       0 = tanh, 1 = none
//! layers       u16
//! source_rows  u64
//! target_rows  u64
//! dim          u64
//! leaky_slope  f64
//! table        (source_rows + target_rows) × dim f64, row-major
//! table_m      same shape
//! table_v      same shape
//! table_steps  (source_rows + target_rows) u64
//! att_rows     u64      layers for attention-lite, else 0
//! attention    att_rows × 2·dim f64
//! att_m        same shape
//! att_v        same shape
//! att_steps    att_rows u64
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Activation, AdamState, Architecture, EmbeddingTable, Model, ModelKind, OptimizerState, Params};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SEACKPT1";
pub const VERSION: u32 = 1;

fn model_code(m: ModelKind) -> u8 {
    match m {
        ModelKind::GcnAlignLite => 0,
        ModelKind::AttentionLite => 1,
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::None => 1,
    }
}

fn write_matrix(w: &mut impl Write, m: &Array2<f64>) -> io::Result<()> {
    for x in m.iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn write_steps(w: &mut impl Write, steps: &[u64]) -> io::Result<()> {
    for s in steps {
        w.write_all(&s.to_le_bytes())?;
    }
    Ok(())
}

fn write_adam(w: &mut impl Write, state: &AdamState) -> io::Result<()> {
    write_matrix(w, &state.m)?;
    write_matrix(w, &state.v)?;
    write_steps(w, &state.steps)
}

/// Serializes `model` into `w`.
pub fn write(model: &Model, w: &mut impl Write) -> io::Result<()> {
    let table = &model.params.table;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[model_code(model.arch.model), activation_code(model.arch.activation)])?;
    let layers = u16::try_from(model.arch.layers)
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "too many layers"))?;
    w.write_all(&layers.to_le_bytes())?;
    for n in [table.source_rows(), table.target_rows(), table.dim()] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&model.arch.leaky_slope.to_le_bytes())?;
    write_matrix(w, table.matrix())?;
    write_adam(w, &model.optimizer.table)?;
    w.write_all(&(model.params.attention.nrows() as u64).to_le_bytes())?;
    write_matrix(w, &model.params.attention)?;
    write_adam(w, &model.optimizer.attention)
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    write(model, &mut out).expect("writing to a Vec cannot fail");
    out
}

struct Cursor<'a> {
    data: &'a [u8],
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.data.len() < n {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let (head, tail) = self.data.split_at(n);
        self.data = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn size(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint("matrix size overflows".into()))?;
        let bytes = self.take(len)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), values).expect("length matches shape"))
    }

    fn adam(&mut self, rows: usize, cols: usize) -> Result<AdamState> {
        let m = self.matrix(rows, cols)?;
        let v = self.matrix(rows, cols)?;
        let steps = (0..rows).map(|_| self.u64()).collect::<Result<_>>()?;
        Ok(AdamState { m, v, steps })
    }
}

/// Parses a checkpoint produced by [`write`].
pub fn from_bytes(data: &[u8]) -> Result<Model> {
    let mut c = Cursor { data };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let model = match c.u8()? {
        0 => ModelKind::GcnAlignLite,
        1 => ModelKind::AttentionLite,
        x => return Err(Error::Checkpoint(format!("unknown model code {x}"))),
    };
    let activation = match c.u8()? {
        0 => Activation::Tanh,
        1 => Activation::None,
        x => return Err(Error::Checkpoint(format!("unknown activation code {x}"))),
    };
    let layers = c.u16()? as usize;
    let source_rows = c.size()?;
    let target_rows = c.size()?;
    let dim = c.size()?;
    let leaky_slope = c.f64()?;
    let rows = source_rows
        .checked_add(target_rows)
        .ok_or_else(|| Error::Checkpoint("row count overflows".into()))?;
    let table = EmbeddingTable::new(c.matrix(rows, dim)?, source_rows)?;
    let table_state = c.adam(rows, dim)?;
    let att_rows = c.size()?;
    let attention = c.matrix(att_rows, 2 * dim)?;
    let att_state = c.adam(att_rows, 2 * dim)?;
    if !c.data.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", c.data.len())));
    }
    if !table.is_finite() || !attention.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("checkpoint parameters"));
    }
    Ok(Model {
        arch: Architecture {
            model,
            layers,
            activation,
            leaky_slope,
        },
        params: Params { table, attention },
        optimizer: OptimizerState {
            table: table_state,
            attention: att_state,
        },
    })
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let mut data = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&data)
}
