//! Fleiss' kappa for an N-subject x K-category rating count matrix with a
//! constant rater count per subject.

use super::EvalError;

/// Subjects x categories counts; every row must sum to the same number of
/// raters (>= 2).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl RatingMatrix {
    /// One subject per line, tab- or space-separated category counts.
    pub fn from_text(text: &str) -> Result<RatingMatrix, EvalError> {
        let mut counts = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<u64>, _> =
                line.split_whitespace().map(|f| f.parse::<u64>()).collect();
            match row {
                Ok(row) => counts.push(row),
                Err(_) => {
                    return Err(EvalError::BadRatingLine {
                        line: counts.len() + 1,
                    })
                }
            }
        }
        RatingMatrix::new(counts)
    }

    pub fn new(counts: Vec<Vec<u64>>) -> Result<RatingMatrix, EvalError> {
        if counts.is_empty() || counts[0].is_empty() {
            return Err(EvalError::EmptyMatrix);
        }
        let k = counts[0].len();
        let n = counts[0].iter().sum::<u64>();
        if n < 2 {
            return Err(EvalError::TooFewRaters { raters: n });
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != k {
                return Err(EvalError::RaggedMatrix { row: i });
            }
            if row.iter().sum::<u64>() != n {
                return Err(EvalError::UnequalRaters { row: i });
            }
        }
        Ok(RatingMatrix { counts })
    }

    pub fn raters_per_subject(&self) -> u64 {
        self.counts[0].iter().sum()
    }
}

/// kappa = (P_bar - P_bar_e) / (1 - P_bar_e). The degenerate case where
/// every rating lands in one category (P_bar_e = 1) is defined as 1.0 when
/// agreement is perfect and is an error otherwise.
pub fn fleiss_kappa(matrix: &RatingMatrix) -> Result<f64, EvalError> {
    let n = matrix.raters_per_subject() as f64;
    let subjects = matrix.counts.len() as f64;
    let k = matrix.counts[0].len();

    let mut p_bar = 0.0;
    for row in &matrix.counts {
        let sum_sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
        p_bar += (sum_sq - n) / (n * (n - 1.0));
    }
    p_bar /= subjects;

    let mut p_e = 0.0;
    for j in 0..k {
        let col: f64 = matrix.counts.iter().map(|row| row[j] as f64).sum();
        let share = col / (subjects * n);
        p_e += share * share;
    }

    if (1.0 - p_e).abs() < 1e-15 {
        if (p_bar - 1.0).abs() < 1e-15 {
            return Ok(1.0);
        }
        return Err(EvalError::DegenerateAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}
