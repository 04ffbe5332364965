//! Corpus machinery: TF-IDF similarity filtering, K-means topic clustering
//! with representative selection, MLM stream assembly, and sentence
//! batching.

mod kmeans;
mod tfidf;

pub use kmeans::{kmeans, select_representatives, KmeansResult};
pub use tfidf::{cosine, doc_tokens, filter_by_similarity, SparseVec, TfidfModel};

use crate::batch::{framed_rows, Batch, StyleId};
use crate::tokenizer::{Vocab, EOS_ID};

pub const DEFAULT_STREAM_LEN: usize = 256;

/// Contiguous `stream_len`-token windows over the concatenated corpus.
/// Lines are joined with an EOS separator (which counts toward window
/// length); the final partial window is dropped.
pub fn make_streams(corpus: &[String], vocab: &Vocab, stream_len: usize) -> Vec<Vec<u32>> {
    assert!(stream_len >= 1, "make_streams: stream_len must be >= 1");
    let mut tokens: Vec<u32> = Vec::new();
    for line in corpus {
        tokens.extend(vocab.encode(line));
        tokens.push(EOS_ID);
    }
    tokens
        .chunks_exact(stream_len)
        .map(|w| w.to_vec())
        .collect()
}

/// Framed, padded minibatches of `size` sentences each; a short final batch
/// is kept. Sentences whose framed encoding exceeds `max_len` are rejected
/// so nothing is ever truncated silently.
pub fn make_batches(
    sentences: &[String],
    vocab: &Vocab,
    size: usize,
    style: StyleId,
    max_len: usize,
) -> Result<Vec<Batch>, String> {
    assert!(size >= 1, "make_batches: size must be >= 1");
    let refs: Vec<&str> = sentences.iter().map(|s| s.as_str()).collect();
    let rows = framed_rows(&refs, vocab);
    for (i, row) in rows.iter().enumerate() {
        if row.len() > max_len {
            return Err(format!(
                "sentence {i} encodes to {} tokens, over the {max_len}-token limit: {:?}",
                row.len(),
                sentences[i]
            ));
        }
    }
    Ok(rows
        .chunks(size)
        .map(|chunk| Batch::from_rows(chunk.to_vec(), style))
        .collect())
}

/// Keyword stand-in for the external domain classifier: keeps sentences
/// containing at least one keyword as a whole token (case-insensitive).
pub fn keyword_filter(sentences: &[String], keywords: &[String]) -> Vec<String> {
    let lowered: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
    sentences
        .iter()
        .filter(|s| doc_tokens(s).iter().any(|t| lowered.iter().any(|k| k == t)))
        .cloned()
        .collect()
}

/// Partitions sentences into those whose framed encoding fits `max_len` and
/// a count of rejects; loaders run this before batching.
pub fn filter_overlong(sentences: &[String], vocab: &Vocab, max_len: usize) -> (Vec<String>, u64) {
    let mut kept = Vec::with_capacity(sentences.len());
    let mut dropped = 0;
    for s in sentences {
        if vocab.encode(s).len() + 2 <= max_len {
            kept.push(s.clone());
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::PAD_ID;

    fn vocab() -> Vocab {
        Vocab::train(
            "storm hits the coast rescue teams reach town floods damage homes",
            200,
        )
        .unwrap()
    }

    #[test]
    fn exact_double_window_gives_two_streams() {
        // Single-letter words each encode to one token, so a line of three
        // words plus its EOS separator contributes exactly 4 tokens; 128
        // lines give a 512-token corpus and exactly 2 windows of 256.
        let v = Vocab::train("xx yy zz", 50).unwrap();
        let line = "x y z";
        assert_eq!(v.encode(line).len(), 3);
        let corpus = vec![line.to_string(); 128];
        let streams = make_streams(&corpus, &v, 256);
        assert_eq!(streams.len(), 2);
        assert!(streams.iter().all(|s| s.len() == 256));
    }

    #[test]
    fn final_partial_window_dropped() {
        let v = vocab();
        let corpus = vec!["storm hits the coast".to_string(); 3];
        let total = 3 * (v.encode("storm hits the coast").len() + 1);
        let streams = make_streams(&corpus, &v, total - 1);
        assert_eq!(streams.len(), 1);
    }

    #[test]
    fn batches_pad_and_mask() {
        let v = vocab();
        let sentences = vec![
            "storm hits".to_string(),
            "rescue teams reach town".to_string(),
        ];
        let batches = make_batches(&sentences, &v, 2, StyleId::Tweet, 32).unwrap();
        assert_eq!(batches.len(), 1);
        let b = &batches[0];
        let lens: Vec<usize> = b.lens.clone();
        assert_eq!(b.mask().iter().sum::<f64>(), (lens[0] + lens[1]) as f64);
        assert!(b.row(0).contains(&PAD_ID));
    }

    #[test]
    fn keyword_filter_matches_whole_tokens() {
        let sentences = vec![
            "the storm hit hard".to_string(),
            "storms everywhere".to_string(),
            "sunny all week".to_string(),
        ];
        let kept = keyword_filter(&sentences, &["STORM".to_string(), "flood".to_string()]);
        assert_eq!(kept, vec!["the storm hit hard".to_string()]);
    }

    #[test]
    fn overlong_sentences_rejected_not_truncated() {
        let v = vocab();
        let long = "storm ".repeat(40);
        let err = make_batches(&[long.clone()], &v, 1, StyleId::Tweet, 16);
        assert!(err.is_err());
        let (kept, dropped) = filter_overlong(&[long, "storm hits".to_string()], &v, 16);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped, 1);
    }
}
