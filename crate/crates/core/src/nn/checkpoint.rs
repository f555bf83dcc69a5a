//! Versioned binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "DDLABMLP"
//! version    u32      1
//! hash flag  u8       1 if a dataset hash follows, else 0
//! hash       32 bytes (present only when the flag is 1)
//! n_widths   u32
//! widths     n_widths × u32
//! per layer  weights (row-major f64) then biases (f64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::MlpModel;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"DDLABMLP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MlpModel,
    /// Content hash of the training set the model was fitted on.
    pub dataset_hash: Option<[u8; 32]>,
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &MlpModel, dataset_hash: Option<&[u8; 32]>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    match dataset_hash {
        Some(h) => {
            w.write_all(&[1])?;
            w.write_all(h)?;
        }
        None => w.write_all(&[0])?,
    }
    w.write_all(&(model.widths.len() as u32).to_le_bytes())?;
    for &width in &model.widths {
        w.write_all(&(width as u32).to_le_bytes())?;
    }
    for (weights, bias) in model.weights.iter().zip(&model.biases) {
        for v in weights.data().iter().chain(bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn malformed(detail: impl Into<String>) -> Error {
    Error::Malformed {
        what: "checkpoint",
        detail: detail.into(),
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => malformed("truncated file"),
        _ => malformed(e.to_string()),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            what: "checkpoint",
            found: version,
            expected: VERSION,
        });
    }
    let mut flag = [0u8; 1];
    read_exact(&mut r, &mut flag)?;
    let dataset_hash = match flag[0] {
        0 => None,
        1 => {
            let mut h = [0u8; 32];
            read_exact(&mut r, &mut h)?;
            Some(h)
        }
        other => return Err(malformed(format!("bad hash flag {other}"))),
    };
    let n = read_u32(&mut r)? as usize;
    if !(2..=64).contains(&n) {
        return Err(malformed(format!("implausible layer count {n}")));
    }
    let widths = (0..n).map(|_| read_u32(&mut r).map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
    let mut weights = Vec::with_capacity(n - 1);
    let mut biases = Vec::with_capacity(n - 1);
    for pair in widths.windows(2) {
        let data = read_f64s(&mut r, pair[0] * pair[1])?;
        weights.push(Matrix::new(pair[0], pair[1], data)?);
        biases.push(read_f64s(&mut r, pair[1])?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| malformed(e.to_string()))? != 0 {
        return Err(malformed("trailing bytes"));
    }
    Ok(Checkpoint {
        model: MlpModel::from_parts(widths, weights, biases)?,
        dataset_hash,
    })
}

pub fn save_checkpoint(path: &Path, model: &MlpModel, dataset_hash: Option<&[u8; 32]>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(file), model, dataset_hash).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
