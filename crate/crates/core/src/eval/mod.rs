//! Automatic metrics: multi-bleu-compatible corpus BLEU, Fleiss' kappa over
//! rating matrices, and Welch's t-test.

mod bleu;
mod kappa;
mod ttest;

pub use bleu::{bleu, BleuReport, MAX_ORDER};

pub use kappa::{fleiss_kappa, RatingMatrix};
pub use ttest::{welch_t, WelchResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("hypothesis corpus has {hyp} lines, reference has {reference}")]
    CorpusLengthMismatch { hyp: usize, reference: usize },
    #[error("rating matrix is empty")]
    EmptyMatrix,
    #[error("rating matrix row {row} is ragged")]
    RaggedMatrix { row: usize },
    #[error("rating matrix row {row} does not sum to the common rater count")]
    UnequalRaters { row: usize },
    #[error("need at least 2 raters per subject, got {raters}")]
    TooFewRaters { raters: u64 },
    #[error("all ratings in one category with imperfect agreement")]
    DegenerateAgreement,
    #[error("samples must have at least 2 observations, got {len}")]
    SampleTooSmall { len: usize },
    #[error("rating file line {line} is not a row of counts")]
    BadRatingLine { line: usize },
    #[error("sample file line {line} is not a number")]
    BadSampleLine { line: usize },
}

/// One observation per line, for t-test inputs.
pub fn parse_sample_file(text: &str) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match line.trim().parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) => {
                return Err(EvalError::BadSampleLine {
                    line: out.len() + 1,
                })
            }
        }
    }
    Ok(out)
}
