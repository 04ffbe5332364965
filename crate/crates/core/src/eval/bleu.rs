//! Corpus BLEU with the multi-bleu script's exact semantics: pre-tokenized
//! whitespace input, case-sensitive, clipped modified n-gram precision up to
//! order 4, no smoothing, score 0 when any precision is 0.

use std::collections::HashMap;

use super::EvalError;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// Modified n-gram precisions p1..p4 (fractions, not percentages).
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    /// 0..100 scale.
    pub score: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuReport {
    /// The multi-bleu output line:
    /// `BLEU = S, p1/p2/p3/p4 (BP=…, ratio=…, hyp_len=…, ref_len=…)`.
    pub fn to_line(&self) -> String {
        format!(
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.score,
            100.0 * self.precisions[0],
            100.0 * self.precisions[1],
            100.0 * self.precisions[2],
            100.0 * self.precisions[3],
            self.brevity_penalty,
            if self.ref_len == 0 {
                0.0
            } else {
                self.hyp_len as f64 / self.ref_len as f64
            },
            self.hyp_len,
            self.ref_len,
        )
    }
}

fn ngram_counts(words: &[&str], n: usize) -> HashMap<Vec<String>, u64> {
    let mut counts: HashMap<Vec<String>, u64> = HashMap::new();
    if words.len() < n {
        return counts;
    }
    for window in words.windows(n) {
        *counts
            .entry(window.iter().map(|w| w.to_string()).collect())
            .or_insert(0) += 1;
    }
    counts
}

/// Corpus-level BLEU of line-aligned hypothesis and single-reference
/// corpora. Errors when the corpora differ in line count.
pub fn bleu(hypotheses: &[String], references: &[String]) -> Result<BleuReport, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::CorpusLengthMismatch {
            hyp: hypotheses.len(),
            reference: references.len(),
        });
    }
    let mut correct = [0u64; MAX_ORDER];
    let mut total = [0u64; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        let h: Vec<&str> = hyp.split_whitespace().collect();
        let r: Vec<&str> = reference.split_whitespace().collect();
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let hgrams = ngram_counts(&h, n);
            let rgrams = ngram_counts(&r, n);
            total[n - 1] += h.len().saturating_sub(n - 1) as u64;
            for (gram, count) in hgrams {
                let clip = rgrams.get(&gram).copied().unwrap_or(0);
                correct[n - 1] += count.min(clip);
            }
        }
    }
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        precisions[n] = if total[n] > 0 {
            correct[n] as f64 / total[n] as f64
        } else {
            0.0
        };
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let score = if precisions.iter().any(|&p| p <= 0.0) || hyp_len == 0 {
        0.0
    } else {
        100.0 * brevity_penalty * (precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0).exp()
    };
    Ok(BleuReport {
        precisions,
        brevity_penalty,
        score,
        hyp_len,
        ref_len,
    })
}
