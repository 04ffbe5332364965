//! The denoising corruption C (mask / drop / local shuffle) and the MLM
//! cloze masking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::Batch;
use crate::tokenizer::{BOS_ID, EOS_ID, MASK_ID, NUM_SPECIALS, UNK_ID};

/// Parameters of the denoising corruption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub mask_p: f64,
    pub drop_p: f64,
    pub shuffle_window: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            mask_p: 0.1,
            drop_p: 0.1,
            shuffle_window: 3,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.mask_p) || !(0.0..=1.0).contains(&self.drop_p) {
            return Err(format!("noise probabilities out of range: {:?}", self));
        }
        if self.shuffle_window < 1 {
            return Err("shuffle_window must be >= 1".to_string());
        }
        Ok(())
    }

    pub fn identity(&self) -> bool {
        self.mask_p == 0.0 && self.drop_p == 0.0 && self.shuffle_window == 1
    }
}

/// MLM cloze proportions: fraction of tokens selected for prediction and the
/// mask/random/keep replacement mix among them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlmSpec {
    pub select_p: f64,
    pub mask_frac: f64,
    pub random_frac: f64,
    pub keep_frac: f64,
}

impl Default for MlmSpec {
    fn default() -> Self {
        MlmSpec {
            select_p: 0.15,
            mask_frac: 0.8,
            random_frac: 0.1,
            keep_frac: 0.1,
        }
    }
}

impl MlmSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.select_p) {
            return Err(format!("select_p {} out of range", self.select_p));
        }
        let sum = self.mask_frac + self.random_frac + self.keep_frac;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(format!("mask/random/keep fracs sum to {sum}, expected 1"));
        }
        Ok(())
    }
}

/// Applies C to a BOS/EOS-framed batch: each inner token is dropped with
/// `drop_p`, surviving tokens are masked with `mask_p`, then locally
/// permuted so nothing moves more than `shuffle_window - 1` positions.
/// A row whose tokens all drop is re-sampled once, then left as single UNK.
/// Panics on unframed rows.
pub fn noise_c(batch: &Batch, spec: &NoiseSpec, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(batch.rows);
    for r in 0..batch.rows {
        let row = batch.row_tokens(r);
        assert!(
            row.len() >= 2 && row[0] == BOS_ID && row[row.len() - 1] == EOS_ID,
            "noise_c: row {r} is not BOS/EOS framed"
        );
        let inner = &row[1..row.len() - 1];
        let mut kept = drop_tokens(inner, spec.drop_p, &mut rng);
        if kept.is_empty() && !inner.is_empty() {
            kept = drop_tokens(inner, spec.drop_p, &mut rng);
            if kept.is_empty() {
                kept = vec![UNK_ID];
            }
        }
        for tok in kept.iter_mut() {
            if rng.gen::<f64>() < spec.mask_p {
                *tok = MASK_ID;
            }
        }
        let kept = local_shuffle(&kept, spec.shuffle_window, &mut rng);
        let mut framed = Vec::with_capacity(kept.len() + 2);
        framed.push(BOS_ID);
        framed.extend(kept);
        framed.push(EOS_ID);
        rows.push(framed);
    }
    Batch::from_rows(rows, batch.style)
}

fn drop_tokens(inner: &[u32], drop_p: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    inner
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() >= drop_p)
        .collect()
}

/// Sort-by-jittered-index shuffle: index i gets key i + U[0, w), which bounds
/// displacement by w - 1.
fn local_shuffle(tokens: &[u32], window: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    if window <= 1 || tokens.len() < 2 {
        return tokens.to_vec();
    }
    let mut keyed: Vec<(f64, usize)> = tokens
        .iter()
        .enumerate()
        .map(|(i, _)| (i as f64 + rng.gen::<f64>() * window as f64, i))
        .collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    keyed.into_iter().map(|(_, i)| tokens[i]).collect()
}

/// One masked stream plus what to predict where.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmMasked {
    pub corrupted: Vec<u32>,
    pub positions: Vec<usize>,
    pub originals: Vec<u32>,
}

/// Cloze masking over a token stream: each token is independently selected
/// with `select_p`; selected tokens become MASK / a random non-special token
/// / stay unchanged per the configured mix. Panics on an empty stream.
pub fn apply_mlm_mask(stream: &[u32], spec: &MlmSpec, vocab_size: usize, seed: u64) -> MlmMasked {
    assert!(!stream.is_empty(), "apply_mlm_mask: empty stream");
    assert!(
        vocab_size > NUM_SPECIALS as usize,
        "apply_mlm_mask: vocab of {vocab_size} leaves no replacement tokens"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corrupted = stream.to_vec();
    let mut positions = Vec::new();
    let mut originals = Vec::new();
    for (i, tok) in corrupted.iter_mut().enumerate() {
        if rng.gen::<f64>() >= spec.select_p {
            continue;
        }
        positions.push(i);
        originals.push(*tok);
        let mode: f64 = rng.gen();
        if mode < spec.mask_frac {
            *tok = MASK_ID;
        } else if mode < spec.mask_frac + spec.random_frac {
            *tok = rng.gen_range(NUM_SPECIALS..vocab_size as u32);
        }
        // otherwise: keep unchanged
    }
    MlmMasked {
        corrupted,
        positions,
        originals,
    }
}
