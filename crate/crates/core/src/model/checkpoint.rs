//! Versioned named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "TPRNNCKP"
//! version    u32      = 1
//! cell kind  u8       0 = Elman, 1 = GRU
//! V          u64
//! d_in       u64
//! d_h        u64
//! count      u32      number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   rank u8, rank x u64 dims
//!   product(dims) x f64 (IEEE-754 LE)
//! ```
//!
//! Biases are present exactly when the model was built with biases.

use std::io::{Read, Write};

use crate::diffcore::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::{CellKind, ModelDims, ParamSet};

pub const MAGIC: &[u8; 8] = b"TPRNNCKP";
pub const FORMAT_VERSION: u32 = 1;

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u64(r: &mut impl Read) -> Result<usize> {
    let v = u64::from_le_bytes(read_exact::<8>(r)?);
    usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} overflows usize")))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

pub fn write_checkpoint<S: Scalar, W: Write>(theta: &ParamSet<S>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[theta.kind.code()])?;
    for d in [theta.dims.vocab, theta.dims.d_in, theta.dims.d_h] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let named = theta.named();
    w.write_all(&(named.len() as u32).to_le_bytes())?;
    for (name, t) in named {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let dims = t.shape().dims();
        w.write_all(&[dims.len() as u8])?;
        for d in dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in t.data() {
            w.write_all(&x.to_f64_lossy().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<S: Scalar, R: Read>(mut r: R) -> Result<ParamSet<S>> {
    let magic = read_exact::<8>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = CellKind::from_code(read_exact::<1>(&mut r)?[0])?;
    let dims = ModelDims {
        vocab: read_u64(&mut r)?,
        d_in: read_u64(&mut r)?,
        d_h: read_u64(&mut r)?,
    };
    let count = read_u32(&mut r)? as usize;

    let mut loaded: Vec<(String, Tensor<S>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rank = read_exact::<1>(&mut r)?[0];
        let shape = match rank {
            1 => Shape::Vector(read_u64(&mut r)?),
            2 => Shape::Matrix(read_u64(&mut r)?, read_u64(&mut r)?),
            other => return Err(Error::Format(format!("tensor '{name}' has rank {other}"))),
        };
        let mut data = Vec::with_capacity(shape.len());
        for _ in 0..shape.len() {
            data.push(S::lit(f64::from_le_bytes(read_exact::<8>(&mut r)?)));
        }
        loaded.push((name, Tensor::from_shape_vec(shape, data)?));
    }

    let bias = loaded.iter().any(|(n, _)| n == "b_y");
    let mut theta = ParamSet::zeros(kind, dims, bias);
    {
        let mut slots = theta.named_mut();
        if slots.len() != loaded.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                slots.len(),
                loaded.len()
            )));
        }
        for ((slot_name, slot), (name, t)) in slots.iter_mut().zip(loaded) {
            if *slot_name != name {
                return Err(Error::Format(format!("expected tensor '{slot_name}', found '{name}'")));
            }
            if slot.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    t.shape().dims(),
                    slot.shape().dims()
                )));
            }
            **slot = t;
        }
    }
    Ok(theta)
}

pub fn save<S: Scalar>(theta: &ParamSet<S>, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(theta, std::io::BufWriter::new(f))
}

pub fn load<S: Scalar>(path: &std::path::Path) -> Result<ParamSet<S>> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
