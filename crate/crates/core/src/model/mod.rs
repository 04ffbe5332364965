//! The shared encoder/decoder transformer with style embeddings, and the
//! GRU discriminator that classifies its content vectors.
//!
//! One encoder and one decoder serve both styles; a style embedding row is
//! added to every input token embedding, the two-style analogue of language
//! embeddings. Pre-norm residual blocks with GELU feed-forwards; the output
//! projection is untied from the token embedding.

mod checkpoint;
mod discriminator;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_HEADER};
pub use discriminator::{Discriminator, DEFAULT_DISC_HIDDEN};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::batch::{Batch, StyleId};
use crate::numerics::{Gradients, Graph, NodeId, Tensor};
use crate::tokenizer::{BOS_ID, EOS_ID};

const INIT_STD: f64 = 0.02;
const MASK_NEG: f64 = -1e9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sequence length {len} exceeds max_len {max}; truncation is the caller's job")]
    Overlength { len: usize, max: usize },
    #[error("token id {id} out of range for vocab of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("target row {row} does not begin with BOS")]
    MissingBos { row: usize },
    #[error("row {row} has no unmasked positions")]
    EmptySequence { row: usize },
    #[error("checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Architecture hyperparameters. Desk-scale defaults; full-scale values
/// (6 layers, 8 heads, 1024 hidden) remain expressible.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub n_styles: usize,
    pub dropout_p: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 64,
            d_ff: 128,
            max_len: 128,
            vocab_size: crate::tokenizer::DEFAULT_VOCAB_SIZE,
            n_styles: 2,
            dropout_p: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(format!("dropout_p {} must lie in [0, 1)", self.dropout_p));
        }
        if self.n_styles < 2 {
            return Err(format!("n_styles {} must be >= 2", self.n_styles));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.max_len == 0 || self.vocab_size == 0 {
            return Err("layer/ff/len/vocab sizes must be positive".to_string());
        }
        Ok(())
    }
}

// ── Parameter bundles ────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub(crate) struct LnParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LnParams {
    fn new(n: usize) -> Self {
        LnParams {
            gain: Tensor::new(vec![n], vec![1.0; n]).with_grad(),
            bias: Tensor::zeros(vec![n]).with_grad(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AttnParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
}

impl AttnParams {
    fn new(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = |rng: &mut ChaCha8Rng| Tensor::randn(vec![d, d], INIT_STD, rng).with_grad();
        let b = || Tensor::zeros(vec![d]).with_grad();
        AttnParams {
            wq: w(rng),
            bq: b(),
            wk: w(rng),
            bk: b(),
            wv: w(rng),
            bv: b(),
            wo: w(rng),
            bo: b(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FfnParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl FfnParams {
    fn new(d: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        FfnParams {
            w1: Tensor::randn(vec![d, d_ff], INIT_STD, rng).with_grad(),
            b1: Tensor::zeros(vec![d_ff]).with_grad(),
            w2: Tensor::randn(vec![d_ff, d], INIT_STD, rng).with_grad(),
            b2: Tensor::zeros(vec![d]).with_grad(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderLayer {
    pub ln1: LnParams,
    pub attn: AttnParams,
    pub ln2: LnParams,
    pub ffn: FfnParams,
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderLayer {
    pub ln1: LnParams,
    pub self_attn: AttnParams,
    pub ln2: LnParams,
    pub cross_attn: AttnParams,
    pub ln3: LnParams,
    pub ffn: FfnParams,
}

/// Encoder + decoder + embedding tables + output projection, all shared
/// across both styles.
#[derive(Debug, Clone)]
pub struct StyleTransferModel {
    pub cfg: ModelConfig,
    pub(crate) tok_emb: Tensor,
    pub(crate) pos_emb: Tensor,
    pub(crate) sty_emb: Tensor,
    pub(crate) encoder: Vec<EncoderLayer>,
    pub(crate) enc_ln: LnParams,
    pub(crate) decoder: Vec<DecoderLayer>,
    pub(crate) dec_ln: LnParams,
    pub(crate) proj_w: Tensor,
    pub(crate) proj_b: Tensor,
}

impl StyleTransferModel {
    /// Scratch initialization. Both style rows start identical, playing the
    /// role of a shared pretrained language embedding.
    pub fn new(cfg: ModelConfig, seed: u64) -> StyleTransferModel {
        cfg.validate().expect("invalid ModelConfig");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.d_model;
        let tok_emb = Tensor::randn(vec![cfg.vocab_size, d], INIT_STD, &mut rng).with_grad();
        let pos_emb = Tensor::randn(vec![cfg.max_len, d], INIT_STD, &mut rng).with_grad();
        let style_row = Tensor::randn(vec![1, d], INIT_STD, &mut rng);
        let mut sty_data = Vec::with_capacity(cfg.n_styles * d);
        for _ in 0..cfg.n_styles {
            sty_data.extend_from_slice(&style_row.data);
        }
        let sty_emb = Tensor::new(vec![cfg.n_styles, d], sty_data).with_grad();
        let encoder = (0..cfg.n_layers)
            .map(|_| EncoderLayer {
                ln1: LnParams::new(d),
                attn: AttnParams::new(d, &mut rng),
                ln2: LnParams::new(d),
                ffn: FfnParams::new(d, cfg.d_ff, &mut rng),
            })
            .collect();
        let decoder = (0..cfg.n_layers)
            .map(|_| DecoderLayer {
                ln1: LnParams::new(d),
                self_attn: AttnParams::new(d, &mut rng),
                ln2: LnParams::new(d),
                cross_attn: AttnParams::new(d, &mut rng),
                ln3: LnParams::new(d),
                ffn: FfnParams::new(d, cfg.d_ff, &mut rng),
            })
            .collect();
        let proj_w = Tensor::randn(vec![d, cfg.vocab_size], INIT_STD, &mut rng).with_grad();
        let proj_b = Tensor::zeros(vec![cfg.vocab_size]).with_grad();
        StyleTransferModel {
            cfg,
            tok_emb,
            pos_emb,
            sty_emb,
            encoder,
            enc_ln: LnParams::new(d),
            decoder,
            dec_ln: LnParams::new(d),
            proj_w,
            proj_b,
        }
    }

    pub fn for_each_param(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("tok_emb", &self.tok_emb);
        f("pos_emb", &self.pos_emb);
        f("sty_emb", &self.sty_emb);
        for (i, l) in self.encoder.iter().enumerate() {
            visit_ln(&format!("enc.{i}.ln1"), &l.ln1, f);
            visit_attn(&format!("enc.{i}.attn"), &l.attn, f);
            visit_ln(&format!("enc.{i}.ln2"), &l.ln2, f);
            visit_ffn(&format!("enc.{i}.ffn"), &l.ffn, f);
        }
        visit_ln("enc_ln", &self.enc_ln, f);
        for (i, l) in self.decoder.iter().enumerate() {
            visit_ln(&format!("dec.{i}.ln1"), &l.ln1, f);
            visit_attn(&format!("dec.{i}.self"), &l.self_attn, f);
            visit_ln(&format!("dec.{i}.ln2"), &l.ln2, f);
            visit_attn(&format!("dec.{i}.cross"), &l.cross_attn, f);
            visit_ln(&format!("dec.{i}.ln3"), &l.ln3, f);
            visit_ffn(&format!("dec.{i}.ffn"), &l.ffn, f);
        }
        visit_ln("dec_ln", &self.dec_ln, f);
        f("proj.w", &self.proj_w);
        f("proj.b", &self.proj_b);
    }

    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("tok_emb", &mut self.tok_emb);
        f("pos_emb", &mut self.pos_emb);
        f("sty_emb", &mut self.sty_emb);
        for (i, l) in self.encoder.iter_mut().enumerate() {
            visit_ln_mut(&format!("enc.{i}.ln1"), &mut l.ln1, f);
            visit_attn_mut(&format!("enc.{i}.attn"), &mut l.attn, f);
            visit_ln_mut(&format!("enc.{i}.ln2"), &mut l.ln2, f);
            visit_ffn_mut(&format!("enc.{i}.ffn"), &mut l.ffn, f);
        }
        visit_ln_mut("enc_ln", &mut self.enc_ln, f);
        for (i, l) in self.decoder.iter_mut().enumerate() {
            visit_ln_mut(&format!("dec.{i}.ln1"), &mut l.ln1, f);
            visit_attn_mut(&format!("dec.{i}.self"), &mut l.self_attn, f);
            visit_ln_mut(&format!("dec.{i}.ln2"), &mut l.ln2, f);
            visit_attn_mut(&format!("dec.{i}.cross"), &mut l.cross_attn, f);
            visit_ln_mut(&format!("dec.{i}.ln3"), &mut l.ln3, f);
            visit_ffn_mut(&format!("dec.{i}.ffn"), &mut l.ffn, f);
        }
        visit_ln_mut("dec_ln", &mut self.dec_ln, f);
        f("proj.w", &mut self.proj_w);
        f("proj.b", &mut self.proj_b);
    }

    /// Seeds the decoder from MLM-pretrained encoder weights: self-attention,
    /// feed-forwards and their norms copy layer-for-layer; cross attention
    /// and its norm keep their fresh initialization.
    pub fn initialize_decoder_from_encoder(&mut self) {
        let encoder = self.encoder.clone();
        let enc_ln = self.enc_ln.clone();
        for (dec, enc) in self.decoder.iter_mut().zip(encoder) {
            dec.ln1 = enc.ln1;
            dec.self_attn = enc.attn;
            dec.ln3 = enc.ln2;
            dec.ffn = enc.ffn;
        }
        self.dec_ln = enc_ln;
    }

    /// True for parameters on the encoder side, the set the adversarial
    /// objective is allowed to update (embeddings included).
    pub fn is_encoder_param(name: &str) -> bool {
        name == "tok_emb"
            || name == "pos_emb"
            || name == "sty_emb"
            || name.starts_with("enc.")
            || name.starts_with("enc_ln")
    }
}

fn visit_ln(prefix: &str, ln: &LnParams, f: &mut dyn FnMut(&str, &Tensor)) {
    f(&format!("{prefix}.gain"), &ln.gain);
    f(&format!("{prefix}.bias"), &ln.bias);
}

fn visit_ln_mut(prefix: &str, ln: &mut LnParams, f: &mut dyn FnMut(&str, &mut Tensor)) {
    f(&format!("{prefix}.gain"), &mut ln.gain);
    f(&format!("{prefix}.bias"), &mut ln.bias);
}

fn visit_attn(prefix: &str, a: &AttnParams, f: &mut dyn FnMut(&str, &Tensor)) {
    f(&format!("{prefix}.wq"), &a.wq);
    f(&format!("{prefix}.bq"), &a.bq);
    f(&format!("{prefix}.wk"), &a.wk);
    f(&format!("{prefix}.bk"), &a.bk);
    f(&format!("{prefix}.wv"), &a.wv);
    f(&format!("{prefix}.bv"), &a.bv);
    f(&format!("{prefix}.wo"), &a.wo);
    f(&format!("{prefix}.bo"), &a.bo);
}

fn visit_attn_mut(prefix: &str, a: &mut AttnParams, f: &mut dyn FnMut(&str, &mut Tensor)) {
    f(&format!("{prefix}.wq"), &mut a.wq);
    f(&format!("{prefix}.bq"), &mut a.bq);
    f(&format!("{prefix}.wk"), &mut a.wk);
    f(&format!("{prefix}.bk"), &mut a.bk);
    f(&format!("{prefix}.wv"), &mut a.wv);
    f(&format!("{prefix}.bv"), &mut a.bv);
    f(&format!("{prefix}.wo"), &mut a.wo);
    f(&format!("{prefix}.bo"), &mut a.bo);
}

fn visit_ffn(prefix: &str, p: &FfnParams, f: &mut dyn FnMut(&str, &Tensor)) {
    f(&format!("{prefix}.w1"), &p.w1);
    f(&format!("{prefix}.b1"), &p.b1);
    f(&format!("{prefix}.w2"), &p.w2);
    f(&format!("{prefix}.b2"), &p.b2);
}

fn visit_ffn_mut(prefix: &str, p: &mut FfnParams, f: &mut dyn FnMut(&str, &mut Tensor)) {
    f(&format!("{prefix}.w1"), &mut p.w1);
    f(&format!("{prefix}.b1"), &mut p.b1);
    f(&format!("{prefix}.w2"), &mut p.w2);
    f(&format!("{prefix}.b2"), &mut p.b2);
}

// ── Graph binding ────────────────────────────────────────────────────────

/// Name -> tape leaf for one forward pass.
pub struct BoundParams {
    map: BTreeMap<String, NodeId>,
}

impl BoundParams {
    /// Copies the model's parameters onto the tape as gradient-carrying
    /// leaves (or constants, for frozen passes).
    pub fn bind_model(g: &mut Graph, model: &StyleTransferModel, trainable: bool) -> BoundParams {
        let mut map = BTreeMap::new();
        model.for_each_param(&mut |name, t| {
            let id = g.leaf(
                t.shape.clone(),
                t.data.clone(),
                trainable && t.requires_grad,
            );
            map.insert(name.to_string(), id);
        });
        BoundParams { map }
    }

    /// Like `bind_model`, but only names the predicate accepts are
    /// trainable; the rest enter as constants.
    pub fn bind_model_filtered(
        g: &mut Graph,
        model: &StyleTransferModel,
        trainable: &dyn Fn(&str) -> bool,
    ) -> BoundParams {
        let mut map = BTreeMap::new();
        model.for_each_param(&mut |name, t| {
            let id = g.leaf(
                t.shape.clone(),
                t.data.clone(),
                trainable(name) && t.requires_grad,
            );
            map.insert(name.to_string(), id);
        });
        BoundParams { map }
    }

    pub fn bind_discriminator(g: &mut Graph, disc: &Discriminator, trainable: bool) -> BoundParams {
        let mut map = BTreeMap::new();
        disc.for_each_param(&mut |name, t| {
            let id = g.leaf(
                t.shape.clone(),
                t.data.clone(),
                trainable && t.requires_grad,
            );
            map.insert(name.to_string(), id);
        });
        BoundParams { map }
    }

    pub fn id(&self, name: &str) -> NodeId {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("BoundParams: no parameter named {name:?}"))
    }

    /// Writes gradients back into the model's tensors: reachable leaves get
    /// their gradient, unreachable ones zeros.
    pub fn write_back_model(&self, grads: &Gradients, model: &mut StyleTransferModel) {
        model.for_each_param_mut(&mut |name, t| {
            let id = self.map[name];
            match grads.get(id) {
                Some(g) => t.grad = Some(g.to_vec()),
                None => t.zero_grad(),
            }
        });
    }

    pub fn write_back_discriminator(&self, grads: &Gradients, disc: &mut Discriminator) {
        disc.for_each_param_mut(&mut |name, t| {
            let id = self.map[name];
            match grads.get(id) {
                Some(g) => t.grad = Some(g.to_vec()),
                None => t.zero_grad(),
            }
        });
    }
}

// ── Forward passes ───────────────────────────────────────────────────────

/// Per-token encoder output plus the key mask downstream ops consume.
pub struct Encoded {
    pub z: NodeId,
    pub rows: usize,
    pub seq: usize,
    pub key_mask: Vec<f64>,
}

/// Materialized encoder output for inference-time use.
#[derive(Debug, Clone)]
pub struct ContentVectors {
    pub data: Vec<f64>,
    pub rows: usize,
    pub seq: usize,
    pub d_model: usize,
    pub mask: Vec<f64>,
}

/// Decoding mode for `generate`.
#[derive(Debug, Clone, Copy)]
pub enum GenMode {
    Greedy,
    Sample { seed: u64 },
}

/// Seeded dropout context; `None`-like when p == 0.
pub struct Dropout {
    pub p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Dropout {
        Dropout {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn apply(&mut self, g: &mut Graph, x: NodeId) -> NodeId {
        if self.p == 0.0 {
            return x;
        }
        use rand::Rng;
        let n = g.data(x).len();
        let keep = 1.0 - self.p;
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let m = g.constant(g.shape(x).to_vec(), mask);
        g.mul(x, m)
    }
}

fn maybe_dropout(g: &mut Graph, x: NodeId, drop: &mut Option<&mut Dropout>) -> NodeId {
    match drop {
        Some(d) => d.apply(g, x),
        None => x,
    }
}

impl StyleTransferModel {
    fn check_batch(&self, batch: &Batch) -> Result<(), ModelError> {
        if batch.cols > self.cfg.max_len {
            return Err(ModelError::Overlength {
                len: batch.cols,
                max: self.cfg.max_len,
            });
        }
        for &id in &batch.ids {
            if id as usize >= self.cfg.vocab_size {
                return Err(ModelError::TokenOutOfRange {
                    id,
                    vocab: self.cfg.vocab_size,
                });
            }
        }
        Ok(())
    }

    fn embed_inputs(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        batch: &Batch,
        style: StyleId,
    ) -> NodeId {
        let (b, s) = (batch.rows, batch.cols);
        let tok = g.embedding(p.id("tok_emb"), &batch.ids, &[b, s]);
        let pos_ids: Vec<u32> = (0..b).flat_map(|_| 0..s as u32).collect();
        let pos = g.embedding(p.id("pos_emb"), &pos_ids, &[b, s]);
        let sty_ids = vec![style.index() as u32; b * s];
        let sty = g.embedding(p.id("sty_emb"), &sty_ids, &[b, s]);
        let tp = g.add(tok, pos);
        g.add(tp, sty)
    }

    fn attention(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        prefix: &str,
        x: NodeId,
        kv: NodeId,
        add_mask: Option<Vec<f64>>,
    ) -> NodeId {
        let d = self.cfg.d_model;
        let h = self.cfg.n_heads;
        let dh = d / h;
        let xs = g.shape(x).to_vec();
        let (b, s) = (xs[0], xs[1]);
        let s_kv = g.shape(kv)[1];

        let project = |g: &mut Graph, input: NodeId, w: &str, bias: &str, len: usize| {
            let m = g.matmul(input, p.id(&format!("{prefix}.{w}")));
            let m = g.add_bias(m, p.id(&format!("{prefix}.{bias}")));
            let m = g.reshape(m, vec![b, len, h, dh]);
            g.swap_axes(m, 1, 2) // [b, h, len, dh]
        };
        let q = project(g, x, "wq", "bq", s);
        let k = project(g, kv, "wk", "bk", s_kv);
        let v = project(g, kv, "wv", "bv", s_kv);

        let kt = g.swap_axes(k, 2, 3);
        let scores = g.matmul(q, kt);
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let scores = match add_mask {
            Some(m) => {
                let mc = g.constant(vec![b, h, s, s_kv], m);
                g.add(scores, mc)
            }
            None => scores,
        };
        let attn = g.softmax(scores);
        let ctx = g.matmul(attn, v);
        let ctx = g.swap_axes(ctx, 1, 2);
        let ctx = g.reshape(ctx, vec![b, s, d]);
        let out = g.matmul(ctx, p.id(&format!("{prefix}.wo")));
        g.add_bias(out, p.id(&format!("{prefix}.bo")))
    }

    fn ffn(&self, g: &mut Graph, p: &BoundParams, prefix: &str, x: NodeId) -> NodeId {
        let h = g.matmul(x, p.id(&format!("{prefix}.w1")));
        let h = g.add_bias(h, p.id(&format!("{prefix}.b1")));
        let h = g.gelu(h);
        let h = g.matmul(h, p.id(&format!("{prefix}.w2")));
        g.add_bias(h, p.id(&format!("{prefix}.b2")))
    }

    /// Runs the encoder under the given style tag. Differentiable; padded
    /// positions are masked out of attention and reported in `key_mask`.
    pub fn encode(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        batch: &Batch,
        style: StyleId,
        mut drop: Option<&mut Dropout>,
    ) -> Result<Encoded, ModelError> {
        self.check_batch(batch)?;
        let (b, s) = (batch.rows, batch.cols);
        let key_mask = batch.mask();
        let attn_mask = padding_attention_mask(&key_mask, b, self.cfg.n_heads, s, s, false);

        let mut x = self.embed_inputs(g, p, batch, style);
        x = maybe_dropout(g, x, &mut drop);
        for i in 0..self.cfg.n_layers {
            let pre = format!("enc.{i}");
            let h = self.ln(g, p, &format!("{pre}.ln1"), x);
            let a = self.attention(g, p, &format!("{pre}.attn"), h, h, Some(attn_mask.clone()));
            let a = maybe_dropout(g, a, &mut drop);
            x = g.add(x, a);
            let h2 = self.ln(g, p, &format!("{pre}.ln2"), x);
            let f = self.ffn(g, p, &format!("{pre}.ffn"), h2);
            let f = maybe_dropout(g, f, &mut drop);
            x = g.add(x, f);
        }
        let z = self.ln(g, p, "enc_ln", x);
        Ok(Encoded {
            z,
            rows: b,
            seq: s,
            key_mask,
        })
    }

    fn ln(&self, g: &mut Graph, p: &BoundParams, prefix: &str, x: NodeId) -> NodeId {
        g.layer_norm(
            x,
            p.id(&format!("{prefix}.gain")),
            p.id(&format!("{prefix}.bias")),
        )
    }

    /// Teacher-forced decoder. Targets must begin with BOS. The returned
    /// logits are aligned so row position `t` is the next-token distribution
    /// after consuming targets `0..=t`: the prediction for target position
    /// `t` depends only on targets before `t`.
    pub fn decode_teacher_forced(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        enc: &Encoded,
        target: &Batch,
        style: StyleId,
        mut drop: Option<&mut Dropout>,
    ) -> Result<NodeId, ModelError> {
        self.check_batch(target)?;
        for r in 0..target.rows {
            if target.row(r)[0] != BOS_ID {
                return Err(ModelError::MissingBos { row: r });
            }
        }
        let (b, t) = (target.rows, target.cols);
        assert_eq!(
            enc.rows, b,
            "decode: encoder batch {} vs target batch {}",
            enc.rows, b
        );

        let tgt_mask = target.mask();
        let self_mask = causal_attention_mask(&tgt_mask, b, self.cfg.n_heads, t);
        let cross_mask =
            padding_attention_mask(&enc.key_mask, b, self.cfg.n_heads, t, enc.seq, true);

        let mut x = self.embed_inputs(g, p, target, style);
        x = maybe_dropout(g, x, &mut drop);
        for i in 0..self.cfg.n_layers {
            let pre = format!("dec.{i}");
            let h = self.ln(g, p, &format!("{pre}.ln1"), x);
            let a = self.attention(g, p, &format!("{pre}.self"), h, h, Some(self_mask.clone()));
            let a = maybe_dropout(g, a, &mut drop);
            x = g.add(x, a);
            let h2 = self.ln(g, p, &format!("{pre}.ln2"), x);
            let c = self.attention(
                g,
                p,
                &format!("{pre}.cross"),
                h2,
                enc.z,
                Some(cross_mask.clone()),
            );
            let c = maybe_dropout(g, c, &mut drop);
            x = g.add(x, c);
            let h3 = self.ln(g, p, &format!("{pre}.ln3"), x);
            let f = self.ffn(g, p, &format!("{pre}.ffn"), h3);
            let f = maybe_dropout(g, f, &mut drop);
            x = g.add(x, f);
        }
        let hfin = self.ln(g, p, "dec_ln", x);
        let logits = g.matmul(hfin, p.id("proj.w"));
        Ok(g.add_bias(logits, p.id("proj.b")))
    }

    /// Inference-only encode: runs a throwaway tape and materializes z.
    pub fn encode_values(
        &self,
        batch: &Batch,
        style: StyleId,
    ) -> Result<ContentVectors, ModelError> {
        let mut g = Graph::new();
        let p = BoundParams::bind_model(&mut g, self, false);
        let enc = self.encode(&mut g, &p, batch, style, None)?;
        Ok(ContentVectors {
            data: g.data(enc.z).to_vec(),
            rows: enc.rows,
            seq: enc.seq,
            d_model: self.cfg.d_model,
            mask: enc.key_mask,
        })
    }

    fn rebind_content(&self, g: &mut Graph, z: &ContentVectors) -> Encoded {
        let id = g.constant(vec![z.rows, z.seq, z.d_model], z.data.clone());
        Encoded {
            z: id,
            rows: z.rows,
            seq: z.seq,
            key_mask: z.mask.clone(),
        }
    }

    /// Autoregressive decoding from materialized content vectors. Stops per
    /// row at EOS or after `max_new` tokens; returns inner tokens only.
    /// Greedy mode breaks argmax ties toward the lowest id.
    pub fn generate(
        &self,
        z: &ContentVectors,
        style: StyleId,
        max_new: usize,
        mode: GenMode,
    ) -> Result<Vec<Vec<u32>>, ModelError> {
        assert!(max_new >= 1, "generate: max_new must be >= 1");
        let b = z.rows;
        let mut prefixes: Vec<Vec<u32>> = vec![vec![BOS_ID]; b];
        let mut done = vec![false; b];
        let mut rng = match mode {
            GenMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            GenMode::Greedy => None,
        };

        for _ in 0..max_new {
            if done.iter().all(|&d| d) {
                break;
            }
            if prefixes.iter().map(|p| p.len()).max().unwrap() >= self.cfg.max_len {
                break;
            }
            let mut g = Graph::new();
            let p = BoundParams::bind_model(&mut g, self, false);
            let enc = self.rebind_content(&mut g, z);
            let target = Batch::from_rows(prefixes.clone(), style);
            let logits = self.decode_teacher_forced(&mut g, &p, &enc, &target, style, None)?;
            let v = self.cfg.vocab_size;
            let cols = target.cols;
            let data = g.data(logits);
            for r in 0..b {
                if done[r] {
                    continue;
                }
                let last = prefixes[r].len() - 1;
                let row = &data[(r * cols + last) * v..(r * cols + last + 1) * v];
                let next = match &mut rng {
                    None => argmax_lowest(row) as u32,
                    Some(rng) => sample_categorical(row, rng) as u32,
                };
                if next == EOS_ID {
                    done[r] = true;
                } else {
                    prefixes[r].push(next);
                }
            }
        }
        Ok(prefixes.into_iter().map(|p| p[1..].to_vec()).collect())
    }
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn sample_categorical(logits: &[f64], rng: &mut ChaCha8Rng) -> usize {
    use rand::Rng;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut draw = rng.gen::<f64>() * total;
    for (i, e) in exps.iter().enumerate() {
        draw -= e;
        if draw <= 0.0 {
            return i;
        }
    }
    logits.len() - 1
}

/// Additive mask `[b, h, q_len, kv_len]`: MASK_NEG wherever the key is
/// padding. `always` keeps the build even for full rows (cross attention).
fn padding_attention_mask(
    key_mask: &[f64],
    b: usize,
    h: usize,
    q_len: usize,
    kv_len: usize,
    always: bool,
) -> Vec<f64> {
    if !always && key_mask.iter().all(|&m| m == 1.0) {
        return vec![0.0; b * h * q_len * kv_len];
    }
    let mut out = vec![0.0; b * h * q_len * kv_len];
    for bi in 0..b {
        for hi in 0..h {
            for q in 0..q_len {
                let base = ((bi * h + hi) * q_len + q) * kv_len;
                for k in 0..kv_len {
                    if key_mask[bi * kv_len + k] == 0.0 {
                        out[base + k] = MASK_NEG;
                    }
                }
            }
        }
    }
    out
}

/// Causal + key-padding mask for decoder self attention.
fn causal_attention_mask(key_mask: &[f64], b: usize, h: usize, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; b * h * t * t];
    for bi in 0..b {
        for hi in 0..h {
            for q in 0..t {
                let base = ((bi * h + hi) * t + q) * t;
                for k in 0..t {
                    if k > q || key_mask[bi * t + k] == 0.0 {
                        out[base + k] = MASK_NEG;
                    }
                }
            }
        }
    }
    out
}
