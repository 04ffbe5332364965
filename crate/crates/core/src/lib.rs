//! Unsupervised tweet-to-news conversion at desk scale.
//!
//! Two trainable systems share one numeric substrate: a style-transfer
//! transformer (denoising + on-the-fly back-translation + adversarial
//! latent alignment + synthetic-parallel corruption) and a proposition
//! merger that fuses redundant clause sets back into single sentences.
//! Everything around them — BPE tokenization, corpus filtering and
//! clustering, the synthetic tweet corruptor, and the evaluation metrics —
//! lives in the sibling modules.
//!
//! All arithmetic is 64-bit and every random choice is driven by an
//! explicit seed, so identical configs reproduce bit-identical runs.

pub mod batch;
pub mod config;
pub mod corruptor;
pub mod datakit;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod propositions;
pub mod tokenizer;
