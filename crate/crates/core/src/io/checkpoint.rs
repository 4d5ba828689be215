//! Model checkpoints.
//!
//! Layout: magic "NVFM", u64 LE header length, JSON header (architecture,
//! seed, parameter names and shapes), then row-major float32 parameter
//! blobs in header order, then the codebook section: magic "VQCB", u32
//! heads/codes/segment width, float32 gamma, then codes, EMA counts, and
//! EMA sums as float32.

use std::io::{Read, Write};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::codebook::MultiHeadCodebook;
use crate::error::{NvfError, Result};
use crate::model::{ModelConfig, VectorFieldModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NVFM";
pub const CODEBOOK_MAGIC: &[u8; 4] = b"VQCB";

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    seed: u64,
    params: Vec<ParamEntry>,
}

pub fn save_checkpoint(model: &VectorFieldModel<f32>, writer: &mut impl Write) -> Result<()> {
    let params: Vec<ParamEntry> = model
        .param_views()
        .iter()
        .map(|(name, view)| ParamEntry { name: name.to_string(), shape: view.shape().to_vec() })
        .collect();
    let header = CheckpointHeader {
        config: model.config.clone(),
        seed: model.init_seed,
        params,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| NvfError::format(format!("cannot serialize header: {e}")))?;

    writer.write_all(CHECKPOINT_MAGIC)?;
    writer.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    writer.write_all(&header_bytes)?;

    for (_, view) in model.param_views() {
        let owned;
        let slice = match view.as_slice() {
            Some(s) => s,
            None => {
                owned = view.iter().copied().collect::<Vec<f32>>();
                &owned
            }
        };
        for v in slice {
            writer.write_all(&v.to_le_bytes())?;
        }
    }

    let book = &model.codebook;
    writer.write_all(CODEBOOK_MAGIC)?;
    for v in [book.heads() as u32, book.code_count() as u32, book.segment_width() as u32] {
        writer.write_all(&v.to_le_bytes())?;
    }
    writer.write_all(&(book.gamma as f32).to_le_bytes())?;
    for v in book.codes().iter() {
        writer.write_all(&v.to_le_bytes())?;
    }
    for v in book.ema_counts().iter() {
        writer.write_all(&v.to_le_bytes())?;
    }
    for v in book.ema_sums().iter() {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f32(reader: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    reader.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_u32(reader: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    reader.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_checkpoint(reader: &mut impl Read) -> Result<VectorFieldModel<f32>> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NvfError::format("bad checkpoint magic (expected NVFM)"));
    }
    let mut len_bytes = [0u8; 8];
    reader.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| NvfError::format(format!("cannot parse checkpoint header: {e}")))?;
    header.config.validate()?;

    let mut model: VectorFieldModel<f32> =
        VectorFieldModel::init(header.config.clone(), header.seed)?;

    {
        let mut views = model.param_views_mut();
        if views.len() != header.params.len() {
            return Err(NvfError::format(format!(
                "checkpoint has {} parameter tensors, model expects {}",
                header.params.len(),
                views.len()
            )));
        }
        for ((name, view), entry) in views.iter_mut().zip(&header.params) {
            if *name != entry.name || view.shape() != entry.shape.as_slice() {
                return Err(NvfError::format(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {} {:?}",
                    entry.name,
                    entry.shape,
                    name,
                    view.shape()
                )));
            }
            for v in view.iter_mut() {
                *v = read_f32(reader)?;
            }
        }
    }

    let mut cb_magic = [0u8; 4];
    reader.read_exact(&mut cb_magic)?;
    if &cb_magic != CODEBOOK_MAGIC {
        return Err(NvfError::format("bad codebook magic (expected VQCB)"));
    }
    let heads = read_u32(reader)? as usize;
    let codes = read_u32(reader)? as usize;
    let dim = read_u32(reader)? as usize;
    let gamma = read_f32(reader)? as f64;
    if heads != header.config.heads
        || codes != header.config.codes_per_head
        || dim != header.config.segment_width()
    {
        return Err(NvfError::format("codebook shape does not match the architecture"));
    }
    let mut code_array = Array3::<f32>::zeros((heads, codes, dim));
    for v in code_array.iter_mut() {
        *v = read_f32(reader)?;
    }
    let mut counts = Array2::<f32>::zeros((heads, codes));
    for v in counts.iter_mut() {
        *v = read_f32(reader)?;
    }
    let mut sums = Array3::<f32>::zeros((heads, codes, dim));
    for v in sums.iter_mut() {
        *v = read_f32(reader)?;
    }
    model.codebook = MultiHeadCodebook::from_parts(
        code_array,
        counts,
        sums,
        gamma,
        header.config.commitment_beta,
    )?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn round_trip_preserves_everything() {
        let model: VectorFieldModel<f32> =
            VectorFieldModel::init(ModelConfig::small(), 42).unwrap();
        let mut bytes = Vec::new();
        save_checkpoint(&model, &mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"NVFM");

        let back = load_checkpoint(&mut Cursor::new(&bytes)).unwrap();
        assert_eq!(back.config, model.config);
        assert_eq!(back.init_seed, 42);
        for ((_, a), (_, b)) in model.param_views().iter().zip(back.param_views().iter()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(model.codebook.codes(), back.codebook.codes());
        assert_eq!(model.codebook.ema_counts(), back.codebook.ema_counts());
        assert_eq!(model.codebook.ema_sums(), back.codebook.ema_sums());
    }

    #[test]
    fn save_is_byte_deterministic() {
        let model: VectorFieldModel<f32> =
            VectorFieldModel::init(ModelConfig::small(), 7).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        save_checkpoint(&model, &mut a).unwrap();
        save_checkpoint(&model, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let bytes = b"XXXX".to_vec();
        assert!(load_checkpoint(&mut Cursor::new(&bytes)).is_err());
    }

    #[test]
    fn truncation_is_rejected() {
        let model: VectorFieldModel<f32> =
            VectorFieldModel::init(ModelConfig::small(), 3).unwrap();
        let mut bytes = Vec::new();
        save_checkpoint(&model, &mut bytes).unwrap();
        bytes.truncate(bytes.len() / 2);
        assert!(load_checkpoint(&mut Cursor::new(&bytes)).is_err());
    }
}
