//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "RVEMB001"
//! kind    1 byte   0 = MF, 1 = LightGCN
//! n_users u64
//! n_items u64
//! k       u64
//! layers  u64
//! seed    u64
//! epochs  u64
//! user embedding: n_users*k f64, row-major
//! item embedding: n_items*k f64, row-major
//! ```
//!
//! Checkpoints persist final (scoring) embeddings. LightGCN layer-0 state is
//! a training-time artifact and is not stored; a loaded model scores and
//! unlearns identically to the one saved.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

use super::{EmbeddingModel, ModelKind, TrainConfig};

const MAGIC: &[u8; 8] = b"RVEMB001";

impl EmbeddingModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            w.write_all(MAGIC)?;
            w.write_all(&[match self.kind() {
                ModelKind::Mf => 0u8,
                ModelKind::LightGcn => 1u8,
            }])?;
            for v in [
                self.n_users() as u64,
                self.n_items() as u64,
                self.embedding_dim() as u64,
                self.layers() as u64,
                self.config().seed,
                self.trained_epochs() as u64,
            ] {
                w.write_all(&v.to_le_bytes())?;
            }
            write_matrix(&mut w, self.user_embedding())?;
            write_matrix(&mut w, self.item_embedding())?;
            Ok(())
        })()
        .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EmbeddingModel> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != MAGIC {
            return Err(Error::InvalidData(format!(
                "{}: not a recveil model checkpoint",
                path.display()
            )));
        }
        let mut kind_byte = [0u8; 1];
        r.read_exact(&mut kind_byte).map_err(|e| Error::io(path, e))?;
        let kind = match kind_byte[0] {
            0 => ModelKind::Mf,
            1 => ModelKind::LightGcn,
            other => {
                return Err(Error::InvalidData(format!(
                    "{}: unknown model kind {other}",
                    path.display()
                )))
            }
        };
        let mut read_u64 = || -> Result<u64> {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            Ok(u64::from_le_bytes(buf))
        };
        let n_users = read_u64()? as usize;
        let n_items = read_u64()? as usize;
        let k = read_u64()? as usize;
        let layers = read_u64()? as usize;
        let seed = read_u64()?;
        let epochs = read_u64()? as usize;

        let user_emb = read_matrix(&mut r, n_users, k, path)?;
        let item_emb = read_matrix(&mut r, n_items, k, path)?;
        if !user_emb.iter().all(|v| v.is_finite()) || !item_emb.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "{}: checkpoint contains non-finite values",
                path.display()
            )));
        }

        let mut cfg = match kind {
            ModelKind::Mf => TrainConfig::mf(seed),
            ModelKind::LightGcn => TrainConfig::lightgcn(seed),
        };
        cfg.embedding_dim = k;
        cfg.layers = layers;
        cfg.epochs = epochs;
        Ok(EmbeddingModel::new(
            kind, user_emb, item_emb, layers, cfg, epochs, None,
        ))
    }
}

fn write_matrix(w: &mut impl Write, m: &Array2<f64>) -> std::io::Result<()> {
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize, path: &Path) -> Result<Array2<f64>> {
    let mut data = vec![0f64; rows * cols];
    let mut buf = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        *v = f64::from_le_bytes(buf);
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
}
