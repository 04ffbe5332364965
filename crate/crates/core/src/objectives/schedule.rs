//! Alternating training: one minibatch per enabled objective per cycle, in
//! a fixed documented order. Exhausted data sources reshuffle with a seed
//! derived from (base seed, source, epoch) and continue.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::batch::{Batch, StyleId};
use crate::corruptor::{mix_seed, Corruptor};
use crate::tokenizer::Vocab;

use super::trainer::{StyleTrainer, TrainError};

/// The trainable objectives, in their execution order within a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Objective {
    Mlm,
    Denoise,
    BackTranslate,
    Discriminator,
    Adversarial,
    Synthetic,
    Merge,
}

impl Objective {
    pub fn loss_name(self) -> &'static str {
        match self {
            Objective::Mlm => "L_mlm",
            Objective::Denoise => "L_rec",
            Objective::BackTranslate => "L_bt",
            Objective::Discriminator => "L_D",
            Objective::Adversarial => "L_adv",
            Objective::Synthetic => "L_syn",
            Objective::Merge => "L_m",
        }
    }
}

/// What to run, how big the minibatches are, and for how many cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub objectives: Vec<Objective>,
    pub batch_size: usize,
    pub mlm_batch_size: usize,
    pub cycles: usize,
    pub seed: u64,
    /// Checkpoint every N cycles through the callback; 0 = never mid-run.
    pub checkpoint_every: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            objectives: vec![Objective::Denoise, Objective::BackTranslate],
            batch_size: 4,
            mlm_batch_size: 8,
            cycles: 100,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

/// Everything the enabled objectives may draw minibatches from.
pub struct DataSources<'a> {
    pub tweets: &'a [String],
    pub news: &'a [String],
    /// (P(y) source text, target sentence) pairs for the merge objective.
    pub merge_pairs: &'a [(String, String)],
    pub tweet_streams: &'a [Vec<u32>],
    pub news_streams: &'a [Vec<u32>],
    pub vocab: &'a Vocab,
    pub corruptor: &'a Corruptor,
}

/// One line of the metrics log.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub objective: &'static str,
    pub loss: f64,
}

/// Cycling index sampler with per-epoch reshuffles.
struct Sampler {
    len: usize,
    order: Vec<usize>,
    pos: usize,
    epoch: u64,
    seed: u64,
    label: u64,
}

impl Sampler {
    fn new(len: usize, seed: u64, label: u64) -> Sampler {
        let mut s = Sampler {
            len,
            order: Vec::new(),
            pos: 0,
            epoch: 0,
            seed,
            label,
        };
        if len > 0 {
            s.reshuffle();
        }
        s
    }

    fn reshuffle(&mut self) {
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix_seed(self.seed, mix_seed(self.label, self.epoch)));
        self.order = (0..self.len).collect();
        self.order.shuffle(&mut rng);
        self.pos = 0;
        self.epoch += 1;
    }

    fn draw(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        for _ in 0..k.min(self.len) {
            if self.pos >= self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn sentence_batch(sentences: &[String], idx: &[usize], vocab: &Vocab, style: StyleId) -> Batch {
    let rows: Vec<Vec<u32>> = idx
        .iter()
        .map(|&i| {
            let mut row = vec![crate::tokenizer::BOS_ID];
            row.extend(vocab.encode(&sentences[i]));
            row.push(crate::tokenizer::EOS_ID);
            row
        })
        .collect();
    Batch::from_rows(rows, style)
}

/// Runs `spec.cycles` cycles, one minibatch per enabled objective per cycle
/// in the order Mlm, L_rec, L_bt, L_D, L_adv, L_syn, L_m. Emits one record
/// per step; `checkpoint` fires every `checkpoint_every` cycles.
pub fn run_schedule(
    trainer: &mut StyleTrainer,
    spec: &ScheduleSpec,
    data: &DataSources,
    mut checkpoint: Option<&mut dyn FnMut(usize, &StyleTrainer) -> Result<(), TrainError>>,
) -> Result<Vec<StepRecord>, TrainError> {
    let mut objectives: Vec<Objective> = spec.objectives.clone();
    objectives.sort();
    objectives.dedup();
    for objective in &objectives {
        let ok = match objective {
            Objective::Mlm => !data.tweet_streams.is_empty() || !data.news_streams.is_empty(),
            Objective::Denoise
            | Objective::BackTranslate
            | Objective::Discriminator
            | Objective::Adversarial => !data.tweets.is_empty() && !data.news.is_empty(),
            Objective::Synthetic => !data.news.is_empty(),
            Objective::Merge => !data.merge_pairs.is_empty(),
        };
        if !ok {
            return Err(TrainError::NoData {
                objective: objective.loss_name(),
            });
        }
    }

    let mut tweet_sampler = Sampler::new(data.tweets.len(), spec.seed, 1);
    let mut news_sampler = Sampler::new(data.news.len(), spec.seed, 2);
    let mut merge_sampler = Sampler::new(data.merge_pairs.len(), spec.seed, 3);
    let mut tweet_stream_sampler = Sampler::new(data.tweet_streams.len(), spec.seed, 4);
    let mut news_stream_sampler = Sampler::new(data.news_streams.len(), spec.seed, 5);

    let mut records = Vec::new();
    let mut step: u64 = 0;
    for cycle in 0..spec.cycles {
        for objective in &objectives {
            step += 1;
            let step_seed = mix_seed(spec.seed, step);
            let loss = match objective {
                Objective::Mlm => {
                    // Alternate stream styles by cycle parity when both exist.
                    let use_news = if data.tweet_streams.is_empty() {
                        true
                    } else if data.news_streams.is_empty() {
                        false
                    } else {
                        cycle % 2 == 0
                    };
                    let (streams, sampler, style) = if use_news {
                        (data.news_streams, &mut news_stream_sampler, StyleId::News)
                    } else {
                        (
                            data.tweet_streams,
                            &mut tweet_stream_sampler,
                            StyleId::Tweet,
                        )
                    };
                    let idx = sampler.draw(spec.mlm_batch_size);
                    let rows: Vec<Vec<u32>> = idx.iter().map(|&i| streams[i].clone()).collect();
                    let batch = Batch::from_rows(rows, style);
                    trainer.step_mlm(&batch, step_seed)?
                }
                Objective::Denoise => {
                    let bx = sentence_batch(
                        data.tweets,
                        &tweet_sampler.draw(spec.batch_size),
                        data.vocab,
                        StyleId::Tweet,
                    );
                    let by = sentence_batch(
                        data.news,
                        &news_sampler.draw(spec.batch_size),
                        data.vocab,
                        StyleId::News,
                    );
                    trainer.step_denoise(&bx, &by, step_seed)?
                }
                Objective::BackTranslate => {
                    let bx = sentence_batch(
                        data.tweets,
                        &tweet_sampler.draw(spec.batch_size),
                        data.vocab,
                        StyleId::Tweet,
                    );
                    let by = sentence_batch(
                        data.news,
                        &news_sampler.draw(spec.batch_size),
                        data.vocab,
                        StyleId::News,
                    );
                    match trainer.step_backtranslate(&bx, &by, step_seed) {
                        Ok(v) => v,
                        // All generations empty this step: skip, keep going.
                        Err(TrainError::NoData { .. }) => f64::NAN,
                        Err(e) => return Err(e),
                    }
                }
                Objective::Discriminator => {
                    let bx = sentence_batch(
                        data.tweets,
                        &tweet_sampler.draw(spec.batch_size),
                        data.vocab,
                        StyleId::Tweet,
                    );
                    let by = sentence_batch(
                        data.news,
                        &news_sampler.draw(spec.batch_size),
                        data.vocab,
                        StyleId::News,
                    );
                    trainer.step_discriminator(&bx, &by)?
                }
                Objective::Adversarial => {
                    let bx = sentence_batch(
                        data.tweets,
                        &tweet_sampler.draw(spec.batch_size),
                        data.vocab,
                        StyleId::Tweet,
                    );
                    let by = sentence_batch(
                        data.news,
                        &news_sampler.draw(spec.batch_size),
                        data.vocab,
                        StyleId::News,
                    );
                    trainer.step_adversarial(&bx, &by)?.0
                }
                Objective::Synthetic => {
                    let idx = news_sampler.draw(spec.batch_size);
                    let sentences: Vec<String> =
                        idx.iter().map(|&i| data.news[i].clone()).collect();
                    trainer.step_synthetic(&sentences, data.corruptor, data.vocab, step_seed)?
                }
                Objective::Merge => {
                    let idx = merge_sampler.draw(spec.batch_size);
                    let (src, tgt): (Vec<Vec<u32>>, Vec<Vec<u32>>) = idx
                        .iter()
                        .map(|&i| {
                            let (s, t) = &data.merge_pairs[i];
                            (framed_ids(s, data.vocab), framed_ids(t, data.vocab))
                        })
                        .unzip();
                    let source = Batch::from_rows(src, StyleId::Tweet);
                    let target = Batch::from_rows(tgt, StyleId::News);
                    trainer.step_merge(&source, &target, step_seed)?
                }
            };
            if loss.is_nan() {
                // Skipped step (e.g. back-translation with nothing usable).
                continue;
            }
            records.push(StepRecord {
                step,
                objective: objective.loss_name(),
                loss,
            });
        }
        if let Some(cb) = checkpoint.as_deref_mut() {
            if spec.checkpoint_every > 0 && (cycle + 1) % spec.checkpoint_every == 0 {
                cb(cycle + 1, trainer)?;
            }
        }
    }
    Ok(records)
}

fn framed_ids(text: &str, vocab: &Vocab) -> Vec<u32> {
    let mut row = vec![crate::tokenizer::BOS_ID];
    row.extend(vocab.encode(text));
    row.push(crate::tokenizer::EOS_ID);
    row
}
