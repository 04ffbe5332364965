//! TF-IDF vectors and cosine-similarity in-domain filtering.
//!
//! Document tokenization is whitespace plus punctuation stripping,
//! deliberately independent of BPE: document similarity should not depend
//! on subword merges. Weights use smoothed idf `ln(N / (df + 1)) + 1`
//! (never negative) with raw term counts, L2-normalized on emit.

use std::collections::HashMap;

/// Sparse unit-norm vector as sorted (term index, weight) pairs.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct TfidfModel {
    term_index: HashMap<String, usize>,
    idf: Vec<f64>,
    pub n_documents: usize,
}

pub fn doc_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .collect::<String>()
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

impl TfidfModel {
    pub fn fit(corpus: &[String]) -> TfidfModel {
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            let mut seen: Vec<String> = doc_tokens(doc);
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let mut terms: Vec<(String, usize)> = df.into_iter().collect();
        terms.sort();
        let n = corpus.len();
        let mut term_index = HashMap::new();
        let mut idf = Vec::with_capacity(terms.len());
        for (i, (term, df)) in terms.into_iter().enumerate() {
            term_index.insert(term, i);
            idf.push((n as f64 / (df as f64 + 1.0)).ln() + 1.0);
        }
        TfidfModel {
            term_index,
            idf,
            n_documents: n,
        }
    }

    pub fn vocabulary_len(&self) -> usize {
        self.idf.len()
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.term_index.get(term).map(|&i| self.idf[i])
    }

    /// Unit-norm sparse vector; unseen terms are ignored. All-unseen
    /// documents transform to the empty vector.
    pub fn transform(&self, doc: &str) -> SparseVec {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for tok in doc_tokens(doc) {
            if let Some(&i) = self.term_index.get(&tok) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut vec: SparseVec = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i]))
            .collect();
        vec.sort_by_key(|&(i, _)| i);
        let norm = vec.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in vec.iter_mut() {
                *w /= norm;
            }
        }
        vec
    }

    /// Dense counterpart of `transform`, for clustering.
    pub fn transform_dense(&self, doc: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.idf.len()];
        for (i, w) in self.transform(doc) {
            out[i] = w;
        }
        out
    }
}

pub fn cosine(u: &SparseVec, v: &SparseVec) -> f64 {
    let mut i = 0;
    let mut j = 0;
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for &(_, w) in u {
        nu += w * w;
    }
    for &(_, w) in v {
        nv += w * w;
    }
    while i < u.len() && j < v.len() {
        match u[i].0.cmp(&v[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += u[i].1 * v[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu.sqrt() * nv.sqrt())
    }
}

/// Keeps candidates whose best cosine against any reference reaches the
/// threshold. The TF-IDF model is fit on candidates and references jointly.
pub fn filter_by_similarity(
    candidates: &[String],
    references: &[String],
    threshold: f64,
) -> Vec<String> {
    let mut corpus: Vec<String> = Vec::with_capacity(candidates.len() + references.len());
    corpus.extend_from_slice(candidates);
    corpus.extend_from_slice(references);
    let model = TfidfModel::fit(&corpus);
    let ref_vecs: Vec<SparseVec> = references.iter().map(|r| model.transform(r)).collect();
    candidates
        .iter()
        .filter(|c| {
            let v = model.transform(c);
            ref_vecs.iter().any(|r| cosine(&v, r) >= threshold)
        })
        .cloned()
        .collect()
}
