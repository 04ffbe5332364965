//! Versioned binary checkpoints: `sfck v1` header, fixed-order config
//! scalars, then named parameter blocks. Reload is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use super::{Discriminator, ModelConfig, ModelError, StyleTransferModel};
use crate::numerics::Tensor;

pub const CHECKPOINT_HEADER: &[u8; 8] = b"sfck v1\n";

pub fn save_checkpoint(
    path: &Path,
    cfg: &ModelConfig,
    blocks: &[(String, Tensor)],
) -> Result<(), ModelError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CHECKPOINT_HEADER);
    for v in [
        cfg.n_layers,
        cfg.n_heads,
        cfg.d_model,
        cfg.d_ff,
        cfg.max_len,
        cfg.vocab_size,
        cfg.n_styles,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&cfg.dropout_p.to_le_bytes());
    buf.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, t) in blocks {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &e in &t.shape {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, Vec<(String, Tensor)>), ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8], ModelError> {
        if *off + n > bytes.len() {
            return Err(ModelError::BadCheckpoint(format!(
                "truncated at byte {} (wanted {} more)",
                off, n
            )));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    let read_u32 = |off: &mut usize| -> Result<u32, ModelError> {
        let s = take(off, 4)?;
        Ok(u32::from_le_bytes(s.try_into().unwrap()))
    };

    let header = take(&mut off, 8)?;
    if header != CHECKPOINT_HEADER {
        return Err(ModelError::BadCheckpoint(format!(
            "bad header {:?}",
            header
        )));
    }
    let n_layers = read_u32(&mut off)? as usize;
    let n_heads = read_u32(&mut off)? as usize;
    let d_model = read_u32(&mut off)? as usize;
    let d_ff = read_u32(&mut off)? as usize;
    let max_len = read_u32(&mut off)? as usize;
    let vocab_size = read_u32(&mut off)? as usize;
    let n_styles = read_u32(&mut off)? as usize;
    let dropout_p = f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
    let cfg = ModelConfig {
        n_layers,
        n_heads,
        d_model,
        d_ff,
        max_len,
        vocab_size,
        n_styles,
        dropout_p,
    };

    let count = read_u32(&mut off)? as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut off)? as usize;
        let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
            .map_err(|e| ModelError::BadCheckpoint(format!("bad block name: {e}")))?;
        let rank = read_u32(&mut off)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut off)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()));
        }
        blocks.push((name, Tensor::new(shape, data)));
    }
    if off != bytes.len() {
        return Err(ModelError::BadCheckpoint(format!(
            "{} trailing bytes after last block",
            bytes.len() - off
        )));
    }
    Ok((cfg, blocks))
}

impl StyleTransferModel {
    pub fn to_blocks(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.for_each_param(&mut |name, t| out.push((name.to_string(), t.clone())));
        // Stored without gradients.
        for (_, t) in out.iter_mut() {
            t.grad = None;
        }
        out
    }

    /// Rebuilds a model from named blocks; extra names (e.g. `disc.*`) are
    /// ignored, missing or mis-shaped ones are errors.
    pub fn from_blocks(
        cfg: ModelConfig,
        blocks: &[(String, Tensor)],
    ) -> Result<StyleTransferModel, ModelError> {
        let mut model = StyleTransferModel::new(cfg, 0);
        let map: std::collections::HashMap<&str, &Tensor> =
            blocks.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut missing = Vec::new();
        let mut mis_shaped = Vec::new();
        model.for_each_param_mut(&mut |name, t| match map.get(name) {
            Some(src) if src.shape == t.shape => {
                t.data = src.data.clone();
                t.grad = None;
            }
            Some(src) => mis_shaped.push(format!("{name}: {:?} vs {:?}", src.shape, t.shape)),
            None => missing.push(name.to_string()),
        });
        if !missing.is_empty() || !mis_shaped.is_empty() {
            return Err(ModelError::BadCheckpoint(format!(
                "missing blocks {:?}, mis-shaped {:?}",
                missing, mis_shaped
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        save_checkpoint(path, &self.cfg, &self.to_blocks())
    }

    pub fn load(path: &Path) -> Result<StyleTransferModel, ModelError> {
        let (cfg, blocks) = load_checkpoint(path)?;
        StyleTransferModel::from_blocks(cfg, &blocks)
    }
}

impl Discriminator {
    pub fn to_blocks(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.for_each_param(&mut |name, t| {
            let mut t = t.clone();
            t.grad = None;
            out.push((name.to_string(), t));
        });
        out
    }

    pub fn from_blocks(blocks: &[(String, Tensor)]) -> Result<Discriminator, ModelError> {
        let map: std::collections::HashMap<&str, &Tensor> =
            blocks.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let (input_size, hidden_size) = match map.get("disc.w_xr") {
            Some(t) if t.shape.len() == 2 => (t.shape[0], t.shape[1]),
            _ => {
                return Err(ModelError::BadCheckpoint(
                    "checkpoint has no disc.w_xr block".to_string(),
                ))
            }
        };
        let mut disc = Discriminator::new(input_size, hidden_size, 0);
        let mut missing = Vec::new();
        disc.for_each_param_mut(&mut |name, t| match map.get(name) {
            Some(src) if src.shape == t.shape => {
                t.data = src.data.clone();
                t.grad = None;
            }
            _ => missing.push(name.to_string()),
        });
        if !missing.is_empty() {
            return Err(ModelError::BadCheckpoint(format!(
                "missing/mis-shaped discriminator blocks {:?}",
                missing
            )));
        }
        Ok(disc)
    }
}
