//! One training step per objective. Each step builds a fresh tape, binds
//! exactly the parameter set it is allowed to touch, and applies Adam to
//! that set only.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::batch::{Batch, StyleId};
use crate::corruptor::Corruptor;
use crate::model::{BoundParams, Discriminator, Dropout, GenMode, ModelError, StyleTransferModel};
use crate::numerics::{adam_step, AdamParams, AdamState, Graph};
use crate::tokenizer::{Vocab, BOS_ID, EOS_ID, PAD_ID};

use super::noise::{apply_mlm_mask, noise_c, MlmSpec, NoiseSpec};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("batch has style {got}, expected {expected}")]
    WrongStyle {
        expected: &'static str,
        got: &'static str,
    },
    #[error("non-finite loss in {objective}")]
    NonFinite { objective: &'static str },
    #[error("merge source of {len} tokens exceeds the {max}-token limit")]
    OverlongMergeSource { len: usize, max: usize },
    #[error("no usable data for {objective}")]
    NoData { objective: &'static str },
    #[error("checkpoint sink failed: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Hard cap on merge-pair source length, in BPE tokens before framing.
pub const MERGE_SOURCE_LIMIT: usize = 512;

#[derive(Debug, Default, Clone)]
pub struct TrainCounters {
    pub empty_generations: u64,
    pub dropped_overlong_synthetic: u64,
}

/// Owns the model pair and the per-parameter Adam states.
#[derive(Clone)]
pub struct StyleTrainer {
    pub model: StyleTransferModel,
    pub disc: Discriminator,
    pub noise: NoiseSpec,
    pub mlm: MlmSpec,
    pub adam: AdamParams,
    pub counters: TrainCounters,
    states: BTreeMap<String, AdamState>,
}

/// Aligns teacher-forced logits with their targets: position `t` of the
/// returned pair predicts `ids[t + 1]`, masked beyond each row's length.
pub fn shift_targets(target: &Batch) -> (Vec<u32>, Vec<f64>) {
    let mut targets = vec![PAD_ID; target.rows * target.cols];
    let mut mask = vec![0.0; target.rows * target.cols];
    for r in 0..target.rows {
        for t in 0..target.lens[r].saturating_sub(1) {
            targets[r * target.cols + t] = target.row(r)[t + 1];
            mask[r * target.cols + t] = 1.0;
        }
    }
    (targets, mask)
}

/// Token-level argmax accuracy of teacher-forced predictions against the
/// clean batch, masked like the training loss.
pub fn reconstruction_accuracy(
    model: &StyleTransferModel,
    batch: &Batch,
    style: StyleId,
) -> Result<f64, ModelError> {
    let mut g = Graph::new();
    let p = BoundParams::bind_model(&mut g, model, false);
    let enc = model.encode(&mut g, &p, batch, style, None)?;
    let logits = model.decode_teacher_forced(&mut g, &p, &enc, batch, style, None)?;
    let (targets, mask) = shift_targets(batch);
    let v = model.cfg.vocab_size;
    let data = g.data(logits);
    let mut correct = 0usize;
    let mut total = 0usize;
    for (r, &m) in mask.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        total += 1;
        let row = &data[r * v..(r + 1) * v];
        let mut best = 0;
        for (i, &val) in row.iter().enumerate() {
            if val > row[best] {
                best = i;
            }
        }
        if best as u32 == targets[r] {
            correct += 1;
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    })
}

impl StyleTrainer {
    pub fn new(model: StyleTransferModel, disc: Discriminator, adam: AdamParams) -> StyleTrainer {
        StyleTrainer {
            model,
            disc,
            noise: NoiseSpec::default(),
            mlm: MlmSpec::default(),
            adam,
            counters: TrainCounters::default(),
            states: BTreeMap::new(),
        }
    }

    fn check_style(batch: &Batch, expected: StyleId) -> Result<(), TrainError> {
        if batch.style != expected {
            return Err(TrainError::WrongStyle {
                expected: expected.name(),
                got: batch.style.name(),
            });
        }
        Ok(())
    }

    fn dropout(&self, seed: u64) -> Option<Dropout> {
        if self.model.cfg.dropout_p > 0.0 {
            Some(Dropout::new(self.model.cfg.dropout_p, seed))
        } else {
            None
        }
    }

    fn update_model(
        &mut self,
        bound: &BoundParams,
        grads: &crate::numerics::Gradients,
        allowed: &dyn Fn(&str) -> bool,
    ) {
        bound.write_back_model(grads, &mut self.model);
        let adam = self.adam;
        let states = &mut self.states;
        self.model.for_each_param_mut(&mut |name, t| {
            if !allowed(name) {
                t.grad = None;
                return;
            }
            let st = states
                .entry(name.to_string())
                .or_insert_with(|| AdamState::new(t.numel(), adam));
            adam_step(t, st);
        });
    }

    fn update_disc(&mut self, bound: &BoundParams, grads: &crate::numerics::Gradients) {
        bound.write_back_discriminator(grads, &mut self.disc);
        let adam = self.adam;
        let states = &mut self.states;
        self.disc.for_each_param_mut(&mut |name, t| {
            let st = states
                .entry(name.to_string())
                .or_insert_with(|| AdamState::new(t.numel(), adam));
            adam_step(t, st);
        });
    }

    fn finite(value: f64, objective: &'static str) -> Result<f64, TrainError> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(TrainError::NonFinite { objective })
        }
    }

    /// Denoising reconstruction within each style: noise the inputs, decode
    /// back to the clean sentence under the same style tag, sum both CEs.
    pub fn step_denoise(
        &mut self,
        batch_x: &Batch,
        batch_y: &Batch,
        seed: u64,
    ) -> Result<f64, TrainError> {
        Self::check_style(batch_x, StyleId::Tweet)?;
        Self::check_style(batch_y, StyleId::News)?;
        let noised_x = noise_c(batch_x, &self.noise, seed);
        let noised_y = noise_c(batch_y, &self.noise, seed.wrapping_add(1));

        let mut g = Graph::new();
        let p = BoundParams::bind_model(&mut g, &self.model, true);
        let mut drop = self.dropout(seed);
        let enc_x = self
            .model
            .encode(&mut g, &p, &noised_x, StyleId::Tweet, drop.as_mut())?;
        let logits_x = self.model.decode_teacher_forced(
            &mut g,
            &p,
            &enc_x,
            batch_x,
            StyleId::Tweet,
            drop.as_mut(),
        )?;
        let (tx, mx) = shift_targets(batch_x);
        let ce_x = g.cross_entropy(logits_x, &tx, &mx);

        let enc_y = self
            .model
            .encode(&mut g, &p, &noised_y, StyleId::News, drop.as_mut())?;
        let logits_y = self.model.decode_teacher_forced(
            &mut g,
            &p,
            &enc_y,
            batch_y,
            StyleId::News,
            drop.as_mut(),
        )?;
        let (ty, my) = shift_targets(batch_y);
        let ce_y = g.cross_entropy(logits_y, &ty, &my);

        let loss = g.add(ce_x, ce_y);
        let value = Self::finite(g.scalar_value(loss), "L_rec")?;
        let grads = g.backward(loss);
        self.update_model(&p, &grads, &|_| true);
        Ok(value)
    }

    /// Greedy cross-style generation used by back-translation and the
    /// transfer CLI. Returns framed rows plus the source rows they came
    /// from; empty generations are skipped and counted.
    fn generate_framed(
        &mut self,
        source: &Batch,
        target_style: StyleId,
    ) -> Result<Option<(Batch, Vec<usize>)>, TrainError> {
        let src_inner_max = source
            .lens
            .iter()
            .map(|l| l.saturating_sub(2))
            .max()
            .unwrap_or(0);
        let max_new = ((src_inner_max as f64 * 1.5).ceil() as usize)
            .clamp(1, self.model.cfg.max_len.saturating_sub(2).max(1));
        let z = self.model.encode_values(source, source.style)?;
        let generated = self
            .model
            .generate(&z, target_style, max_new, GenMode::Greedy)?;
        let mut rows = Vec::new();
        let mut kept = Vec::new();
        for (i, inner) in generated.into_iter().enumerate() {
            if inner.is_empty() {
                self.counters.empty_generations += 1;
                continue;
            }
            let mut row = vec![BOS_ID];
            row.extend(inner);
            row.push(EOS_ID);
            rows.push(row);
            kept.push(i);
        }
        if rows.is_empty() {
            return Ok(None);
        }
        Ok(Some((Batch::from_rows(rows, target_style), kept)))
    }

    /// On-the-fly back-translation: synthesize the cross-style side with the
    /// current model (gradients stopped by discreteness), then train the
    /// synthetic -> original direction. Both directions per step.
    pub fn step_backtranslate(
        &mut self,
        batch_x: &Batch,
        batch_y: &Batch,
        seed: u64,
    ) -> Result<f64, TrainError> {
        Self::check_style(batch_x, StyleId::Tweet)?;
        Self::check_style(batch_y, StyleId::News)?;

        let to_news = self.generate_framed(batch_x, StyleId::News)?;
        let to_tweet = self.generate_framed(batch_y, StyleId::Tweet)?;
        if to_news.is_none() && to_tweet.is_none() {
            return Err(TrainError::NoData { objective: "L_bt" });
        }

        let mut g = Graph::new();
        let p = BoundParams::bind_model(&mut g, &self.model, true);
        let mut drop = self.dropout(seed);
        let mut terms = Vec::new();

        if let Some((synth_y, kept)) = &to_news {
            let targets = batch_x.select_rows(kept);
            let enc = self
                .model
                .encode(&mut g, &p, synth_y, StyleId::News, drop.as_mut())?;
            let logits = self.model.decode_teacher_forced(
                &mut g,
                &p,
                &enc,
                &targets,
                StyleId::Tweet,
                drop.as_mut(),
            )?;
            let (t, m) = shift_targets(&targets);
            terms.push(g.cross_entropy(logits, &t, &m));
        }
        if let Some((synth_x, kept)) = &to_tweet {
            let targets = batch_y.select_rows(kept);
            let enc = self
                .model
                .encode(&mut g, &p, synth_x, StyleId::Tweet, drop.as_mut())?;
            let logits = self.model.decode_teacher_forced(
                &mut g,
                &p,
                &enc,
                &targets,
                StyleId::News,
                drop.as_mut(),
            )?;
            let (t, m) = shift_targets(&targets);
            terms.push(g.cross_entropy(logits, &t, &m));
        }
        let loss = match terms.len() {
            1 => terms[0],
            _ => g.add(terms[0], terms[1]),
        };
        let value = Self::finite(g.scalar_value(loss), "L_bt")?;
        let grads = g.backward(loss);
        self.update_model(&p, &grads, &|_| true);
        Ok(value)
    }

    /// The discriminator objective on frozen encoder outputs: only the
    /// discriminator's parameters move.
    pub fn step_discriminator(
        &mut self,
        batch_x: &Batch,
        batch_y: &Batch,
    ) -> Result<f64, TrainError> {
        let (value, grads, p_disc) = self.adversarial_graph(batch_x, batch_y, false)?;
        self.update_disc(&p_disc, &grads);
        Ok(value)
    }

    /// The encoder's reverse objective, L_adv = -L_D, with the discriminator
    /// frozen: only encoder-side parameters move. Returns (L_adv, L_D).
    pub fn step_adversarial(
        &mut self,
        batch_x: &Batch,
        batch_y: &Batch,
    ) -> Result<(f64, f64), TrainError> {
        let (l_adv, grads, p_model) = self.adversarial_graph(batch_x, batch_y, true)?;
        self.update_model(&p_model, &grads, &StyleTransferModel::is_encoder_param);
        Ok((l_adv, -l_adv))
    }

    /// Shared forward pass for Eq. 3 / Eq. 4. `encoder_side` selects which
    /// player trains: false binds the discriminator, true the encoder, and
    /// the loss is negated for the encoder so the identity L_adv = -L_D is
    /// exact arithmetic.
    fn adversarial_graph(
        &self,
        batch_x: &Batch,
        batch_y: &Batch,
        encoder_side: bool,
    ) -> Result<(f64, crate::numerics::Gradients, BoundParams), TrainError> {
        Self::check_style(batch_x, StyleId::Tweet)?;
        Self::check_style(batch_y, StyleId::News)?;
        let mut g = Graph::new();
        let p_model = if encoder_side {
            BoundParams::bind_model_filtered(
                &mut g,
                &self.model,
                &StyleTransferModel::is_encoder_param,
            )
        } else {
            BoundParams::bind_model(&mut g, &self.model, false)
        };
        let p_disc = BoundParams::bind_discriminator(&mut g, &self.disc, !encoder_side);

        let enc_x = self
            .model
            .encode(&mut g, &p_model, batch_x, StyleId::Tweet, None)?;
        let enc_y = self
            .model
            .encode(&mut g, &p_model, batch_y, StyleId::News, None)?;
        let logit_x = self
            .disc
            .logits(&mut g, &p_disc, enc_x.z, &enc_x.key_mask)?;
        let logit_y = self
            .disc
            .logits(&mut g, &p_disc, enc_y.z, &enc_y.key_mask)?;
        let bce_x = g.bce_with_logits(logit_x, &vec![1.0; batch_x.rows]);
        let bce_y = g.bce_with_logits(logit_y, &vec![0.0; batch_y.rows]);
        let l_d = g.add(bce_x, bce_y);
        let (loss, name): (_, &'static str) = if encoder_side {
            (g.scale(l_d, -1.0), "L_adv")
        } else {
            (l_d, "L_D")
        };
        let value = Self::finite(g.scalar_value(loss), name)?;
        let grads = g.backward(loss);
        Ok((value, grads, if encoder_side { p_model } else { p_disc }))
    }

    /// Synthetic-parallel training: corrupt news into tweet-shaped sources
    /// on the fly, encode them under the tweet tag, reconstruct the original
    /// news sentence under the news tag.
    pub fn step_synthetic(
        &mut self,
        news_sentences: &[String],
        corruptor: &Corruptor,
        vocab: &Vocab,
        seed: u64,
    ) -> Result<f64, TrainError> {
        if news_sentences.is_empty() {
            return Err(TrainError::NoData { objective: "L_syn" });
        }
        let max_inner = self.model.cfg.max_len.saturating_sub(2);
        let mut src_rows = Vec::new();
        let mut tgt_rows = Vec::new();
        for (i, sentence) in news_sentences.iter().enumerate() {
            let synthetic = corruptor.corrupt(sentence, crate::corruptor::mix_seed(seed, i as u64));
            let src = vocab.encode(&synthetic);
            let tgt = vocab.encode(sentence);
            if src.len() > max_inner || tgt.len() > max_inner {
                self.counters.dropped_overlong_synthetic += 1;
                continue;
            }
            src_rows.push(frame(src));
            tgt_rows.push(frame(tgt));
        }
        if src_rows.is_empty() {
            return Err(TrainError::NoData { objective: "L_syn" });
        }
        let source = Batch::from_rows(src_rows, StyleId::Tweet);
        let target = Batch::from_rows(tgt_rows, StyleId::News);

        let mut g = Graph::new();
        let p = BoundParams::bind_model(&mut g, &self.model, true);
        let mut drop = self.dropout(seed);
        let enc = self
            .model
            .encode(&mut g, &p, &source, StyleId::Tweet, drop.as_mut())?;
        let logits = self.model.decode_teacher_forced(
            &mut g,
            &p,
            &enc,
            &target,
            StyleId::News,
            drop.as_mut(),
        )?;
        let (t, m) = shift_targets(&target);
        let loss = g.cross_entropy(logits, &t, &m);
        let value = Self::finite(g.scalar_value(loss), "L_syn")?;
        let grads = g.backward(loss);
        self.update_model(&p, &grads, &|_| true);
        Ok(value)
    }

    /// Proposition merging: source P(y) encoded under the proposition tag
    /// (slot 0), decoded to the original sentence under the sentence tag
    /// (slot 1).
    pub fn step_merge(
        &mut self,
        source: &Batch,
        target: &Batch,
        seed: u64,
    ) -> Result<f64, TrainError> {
        for r in 0..source.rows {
            let inner = source.lens[r].saturating_sub(2);
            if inner > MERGE_SOURCE_LIMIT {
                return Err(TrainError::OverlongMergeSource {
                    len: inner,
                    max: MERGE_SOURCE_LIMIT,
                });
            }
        }
        let mut g = Graph::new();
        let p = BoundParams::bind_model(&mut g, &self.model, true);
        let mut drop = self.dropout(seed);
        let enc = self
            .model
            .encode(&mut g, &p, source, StyleId::Tweet, drop.as_mut())?;
        let logits = self.model.decode_teacher_forced(
            &mut g,
            &p,
            &enc,
            target,
            StyleId::News,
            drop.as_mut(),
        )?;
        let (t, m) = shift_targets(target);
        let loss = g.cross_entropy(logits, &t, &m);
        let value = Self::finite(g.scalar_value(loss), "L_m")?;
        let grads = g.backward(loss);
        self.update_model(&p, &grads, &|_| true);
        Ok(value)
    }

    /// Cloze pretraining over token streams: mask, encode under the stream's
    /// style tag, project encoder states to the vocabulary, CE at the
    /// selected positions. Updates encoder-side parameters plus the
    /// projection.
    pub fn step_mlm(&mut self, streams: &Batch, seed: u64) -> Result<f64, TrainError> {
        let mut corrupted_rows = Vec::with_capacity(streams.rows);
        let mut targets = vec![PAD_ID; streams.rows * streams.cols];
        let mut mask = vec![0.0; streams.rows * streams.cols];
        for r in 0..streams.rows {
            let masked = apply_mlm_mask(
                streams.row_tokens(r),
                &self.mlm,
                self.model.cfg.vocab_size,
                crate::corruptor::mix_seed(seed, r as u64),
            );
            for (&pos, &orig) in masked.positions.iter().zip(&masked.originals) {
                targets[r * streams.cols + pos] = orig;
                mask[r * streams.cols + pos] = 1.0;
            }
            corrupted_rows.push(masked.corrupted);
        }
        if mask.iter().all(|&m| m == 0.0) {
            // Nothing selected this draw; skip the update rather than divide
            // by an empty mask.
            return Ok(0.0);
        }
        let corrupted = Batch::from_rows(corrupted_rows, streams.style);

        let mut g = Graph::new();
        let p = BoundParams::bind_model_filtered(&mut g, &self.model, &|n| {
            StyleTransferModel::is_encoder_param(n) || n.starts_with("proj.")
        });
        let mut drop = self.dropout(seed);
        let enc = self
            .model
            .encode(&mut g, &p, &corrupted, corrupted.style, drop.as_mut())?;
        let logits = g.matmul(enc.z, p.id("proj.w"));
        let logits = g.add_bias(logits, p.id("proj.b"));
        let loss = g.cross_entropy(logits, &targets, &mask);
        let value = Self::finite(g.scalar_value(loss), "L_mlm")?;
        let grads = g.backward(loss);
        self.update_model(&p, &grads, &|n| {
            StyleTransferModel::is_encoder_param(n) || n.starts_with("proj.")
        });
        Ok(value)
    }
}

fn frame(inner: Vec<u32>) -> Vec<u32> {
    let mut row = Vec::with_capacity(inner.len() + 2);
    row.push(BOS_ID);
    row.extend(inner);
    row.push(EOS_ID);
    row
}
