//! The unit every training step consumes: a padded id matrix with
//! per-sequence lengths and the style the sequences were written in.

use crate::tokenizer::{Vocab, PAD_ID};

/// The two styles the shared model distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StyleId {
    /// Tweets (style slot 0, `l1`).
    Tweet,
    /// News sentences (`l2`).
    News,
}

impl StyleId {
    pub fn index(self) -> usize {
        match self {
            StyleId::Tweet => 0,
            StyleId::News => 1,
        }
    }

    pub fn other(self) -> StyleId {
        match self {
            StyleId::Tweet => StyleId::News,
            StyleId::News => StyleId::Tweet,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StyleId::Tweet => "tweet",
            StyleId::News => "news",
        }
    }
}

/// Padded token-id matrix, row-major `[rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub rows: usize,
    pub cols: usize,
    /// Real length of each row (tokens before padding).
    pub lens: Vec<usize>,
    pub style: StyleId,
}

impl Batch {
    /// Pads unequally long rows with PAD. Panics on empty input or empty rows.
    pub fn from_rows(rows: Vec<Vec<u32>>, style: StyleId) -> Batch {
        assert!(!rows.is_empty(), "Batch::from_rows: no rows");
        let cols = rows.iter().map(|r| r.len()).max().unwrap();
        assert!(cols > 0, "Batch::from_rows: empty rows");
        let lens: Vec<usize> = rows.iter().map(|r| r.len()).collect();
        let mut ids = Vec::with_capacity(rows.len() * cols);
        for row in &rows {
            ids.extend_from_slice(row);
            ids.extend(std::iter::repeat(PAD_ID).take(cols - row.len()));
        }
        Batch {
            ids,
            rows: rows.len(),
            cols,
            lens,
            style,
        }
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r * self.cols..(r + 1) * self.cols]
    }

    /// Row truncated to its real length.
    pub fn row_tokens(&self, r: usize) -> &[u32] {
        &self.row(r)[..self.lens[r]]
    }

    /// 1.0 over real tokens, 0.0 over padding; flat `[rows * cols]`.
    pub fn mask(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for c in 0..self.lens[r] {
                m[r * self.cols + c] = 1.0;
            }
        }
        m
    }

    /// Extracts a sub-batch of the given rows, re-padding to their max length.
    pub fn select_rows(&self, keep: &[usize]) -> Batch {
        let rows: Vec<Vec<u32>> = keep.iter().map(|&r| self.row_tokens(r).to_vec()).collect();
        Batch::from_rows(rows, self.style)
    }
}

/// Frames a tokenized sentence with BOS/EOS and batches it.
pub fn framed_rows(sentences: &[&str], vocab: &Vocab) -> Vec<Vec<u32>> {
    sentences
        .iter()
        .map(|s| {
            let mut row = vec![crate::tokenizer::BOS_ID];
            row.extend(vocab.encode(s));
            row.push(crate::tokenizer::EOS_ID);
            row
        })
        .collect()
}
