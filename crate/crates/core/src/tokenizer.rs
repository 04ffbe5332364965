//! Byte-pair encoding: greedy merge training, encoding/decoding, and the
//! special-token inventory every other module shares.
//!
//! Text is lowercased at encode time. Word-final subwords carry a `</w>`
//! marker so decoding restores word boundaries exactly (after whitespace
//! normalization).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const MASK_ID: u32 = 3;
pub const UNK_ID: u32 = 4;

pub const SPECIALS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<mask>", "<unk>"];

/// Number of reserved ids at the front of every vocabulary.
pub const NUM_SPECIALS: u32 = 5;

const END_MARK: &str = "</w>";

/// Default desk-scale vocabulary size.
pub const DEFAULT_VOCAB_SIZE: usize = 2000;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("vocab_size {requested} too small: need at least {minimum} (chars + specials)")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("unknown token id {0} in decode")]
    UnknownId(u32),
    #[error("vocab file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Trained BPE vocabulary. Immutable after training; safe to share.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    id_of: HashMap<String, u32>,
    token_of: Vec<String>,
    merges: Vec<(String, String)>,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_of.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.token_of.get(id as usize).map(|s| s.as_str())
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    /// Greedy BPE training. Merges the most frequent adjacent pair until the
    /// vocabulary budget is exhausted or no pair repeats. Ties break
    /// lexicographically so training is deterministic.
    pub fn train(corpus: &str, vocab_size: usize) -> Result<Vocab, TokenizerError> {
        // Word frequency table over the lowercased corpus.
        let mut word_freq: HashMap<Vec<String>, u64> = HashMap::new();
        let mut char_inventory: Vec<String> = Vec::new();
        let mut seen: HashMap<String, ()> = HashMap::new();
        let mut any = false;
        for line in corpus.lines() {
            for word in line.to_lowercase().split_whitespace() {
                any = true;
                let symbols = word_symbols(word);
                for s in &symbols {
                    if seen.insert(s.clone(), ()).is_none() {
                        char_inventory.push(s.clone());
                    }
                }
                *word_freq.entry(symbols).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(TokenizerError::EmptyCorpus);
        }
        char_inventory.sort();
        let minimum = NUM_SPECIALS as usize + char_inventory.len();
        if vocab_size <= minimum {
            return Err(TokenizerError::VocabTooSmall {
                requested: vocab_size,
                minimum,
            });
        }

        let mut words: Vec<(Vec<String>, u64)> = word_freq.into_iter().collect();
        words.sort(); // deterministic iteration independent of hash order

        let mut merges: Vec<(String, String)> = Vec::new();
        let mut merged_tokens: Vec<String> = Vec::new();
        while NUM_SPECIALS as usize + char_inventory.len() + merges.len() < vocab_size {
            let mut pair_counts: HashMap<(String, String), u64> = HashMap::new();
            for (symbols, freq) in &words {
                for w in symbols.windows(2) {
                    *pair_counts.entry((w[0].clone(), w[1].clone())).or_insert(0) += freq;
                }
            }
            let best = pair_counts
                .into_iter()
                .filter(|(_, c)| *c >= 2)
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
            let (pair, _) = match best {
                Some(p) => p,
                None => break,
            };
            let joined = format!("{}{}", pair.0, pair.1);
            for (symbols, _) in words.iter_mut() {
                merge_in_place(symbols, &pair, &joined);
            }
            merged_tokens.push(joined);
            merges.push(pair);
        }

        let mut token_of: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        token_of.extend(char_inventory);
        token_of.extend(merged_tokens);
        let id_of = token_of
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocab {
            id_of,
            token_of,
            merges,
        })
    }

    /// Lowercases, splits on whitespace, applies merges in training order.
    /// Characters outside the trained inventory become UNK.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let joined: Vec<String> = self.merges.iter().map(|(a, b)| format!("{a}{b}")).collect();
        let mut cache: HashMap<String, Vec<u32>> = HashMap::new();
        let mut out = Vec::new();
        for word in text.to_lowercase().split_whitespace() {
            if let Some(ids) = cache.get(word) {
                out.extend_from_slice(ids);
                continue;
            }
            let mut symbols = word_symbols(word);
            for (pair, j) in self.merges.iter().zip(&joined) {
                merge_in_place(&mut symbols, pair, j);
            }
            let ids: Vec<u32> = symbols
                .iter()
                .map(|s| self.id_of.get(s).copied().unwrap_or(UNK_ID))
                .collect();
            out.extend_from_slice(&ids);
            cache.insert(word.to_string(), ids);
        }
        out
    }

    /// Inverse of `encode` up to whitespace normalization. Specials decode
    /// to nothing except UNK, which keeps a visible placeholder.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut s = String::new();
        for &id in ids {
            let token = self
                .token_of
                .get(id as usize)
                .ok_or(TokenizerError::UnknownId(id))?;
            match id {
                PAD_ID | BOS_ID | EOS_ID | MASK_ID => continue,
                UNK_ID => {
                    s.push_str("<unk> ");
                    continue;
                }
                _ => {}
            }
            if let Some(stem) = token.strip_suffix(END_MARK) {
                s.push_str(stem);
                s.push(' ');
            } else {
                s.push_str(token);
            }
        }
        Ok(s.trim_end().to_string())
    }

    // ── Vocab file: header, one merge per line, one token per line with id ──

    pub fn to_file_string(&self) -> String {
        let mut s = String::from("bpe-vocab v1\n");
        for (a, b) in &self.merges {
            let _ = writeln!(s, "{a} {b}");
        }
        for (i, t) in self.token_of.iter().enumerate() {
            let _ = writeln!(s, "{t}\t{i}");
        }
        s
    }

    pub fn from_file_string(text: &str) -> Result<Vocab, TokenizerError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "bpe-vocab v1")) => {}
            other => {
                return Err(TokenizerError::Parse {
                    line: 1,
                    message: format!(
                        "expected header 'bpe-vocab v1', got {:?}",
                        other.map(|(_, l)| l)
                    ),
                })
            }
        }
        let mut merges = Vec::new();
        let mut token_of: Vec<String> = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if let Some((token, id)) = line.rsplit_once('\t') {
                let id: usize = id.parse().map_err(|_| TokenizerError::Parse {
                    line: lineno,
                    message: format!("bad token id {id:?}"),
                })?;
                if id != token_of.len() {
                    return Err(TokenizerError::Parse {
                        line: lineno,
                        message: format!(
                            "token id {} out of order (expected {})",
                            id,
                            token_of.len()
                        ),
                    });
                }
                token_of.push(token.to_string());
            } else {
                let mut parts = line.splitn(2, ' ');
                match (parts.next(), parts.next()) {
                    (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
                        if !token_of.is_empty() {
                            return Err(TokenizerError::Parse {
                                line: lineno,
                                message: "merge line after token lines".to_string(),
                            });
                        }
                        merges.push((a.to_string(), b.to_string()));
                    }
                    _ => {
                        return Err(TokenizerError::Parse {
                            line: lineno,
                            message: format!("unparseable line {line:?}"),
                        })
                    }
                }
            }
        }
        let id_of = token_of
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocab {
            id_of,
            token_of,
            merges,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocab, TokenizerError> {
        let text = std::fs::read_to_string(path)?;
        Vocab::from_file_string(&text)
    }
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut symbols = Vec::with_capacity(chars.len());
    for (i, c) in chars.iter().enumerate() {
        if i + 1 == chars.len() {
            symbols.push(format!("{c}{END_MARK}"));
        } else {
            symbols.push(c.to_string());
        }
    }
    symbols
}

fn merge_in_place(symbols: &mut Vec<String>, pair: &(String, String), joined: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            symbols[i] = joined.to_string();
            symbols.remove(i + 1);
        } else {
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let v = Vocab::train("aaaa aaaa", 100).unwrap();
        assert_eq!(v.merges[0], ("a".to_string(), "a".to_string()));
    }

    #[test]
    fn single_char_corpus_has_few_merges() {
        // "b b b": inventory is {b</w>}; no adjacent pairs exist at all.
        let v = Vocab::train("b b b", 100).unwrap();
        assert!(v.merges.is_empty());
    }

    #[test]
    fn low_becomes_single_token_quickly() {
        // Hand-simulated greedy merges on "low lower lowest" x100: the char
        // inventory is {l,o,w,w</w>,e,r</w>,s,t</w>} (8 symbols), and with a
        // 4-merge budget the sequence is (l,o), (lo,w), (low,e), (lo,w</w>),
        // after which the standalone word "low" is one token.
        let corpus = "low lower lowest\n".repeat(100);
        let v = Vocab::train(&corpus, 5 + 8 + 4).unwrap();
        assert!(v.merges.len() <= 4);
        let ids = v.encode("low");
        assert_eq!(ids.len(), 1, "expected single token, got {:?}", ids);
    }

    #[test]
    fn encode_decode_empty() {
        let v = Vocab::train("some tiny corpus", 100).unwrap();
        assert!(v.encode("").is_empty());
        assert_eq!(v.decode(&[]).unwrap(), "");
    }

    #[test]
    fn round_trip_every_training_line() {
        let corpus = "storm hits the coast\nrescue teams arrive\nfloods damage homes";
        let v = Vocab::train(corpus, 200).unwrap();
        for line in corpus.lines() {
            let ids = v.encode(line);
            assert_eq!(v.decode(&ids).unwrap(), line);
        }
    }

    #[test]
    fn unseen_word_still_covered() {
        let v = Vocab::train("abc abd", 100).unwrap();
        let ids = v.encode("dcba");
        assert_eq!(ids.len(), 4);
        assert!(!ids.contains(&PAD_ID));
    }

    #[test]
    fn unknown_character_becomes_unk() {
        let v = Vocab::train("plain ascii words", 100).unwrap();
        let ids = v.encode("naïve");
        assert!(ids.contains(&UNK_ID));
    }

    #[test]
    fn specials_occupy_front_ids() {
        let v = Vocab::train("x y z", 100).unwrap();
        for (i, s) in SPECIALS.iter().enumerate() {
            assert_eq!(v.token(i as u32), Some(*s));
        }
        let ids = v.encode("x y z zzz");
        assert!(ids.iter().all(|&id| id >= NUM_SPECIALS || id == UNK_ID));
    }

    #[test]
    fn file_round_trip_bit_exact() {
        let v = Vocab::train("low lower lowest newest widest\n".repeat(20).as_str(), 80).unwrap();
        let text = v.to_file_string();
        let v2 = Vocab::from_file_string(&text).unwrap();
        assert_eq!(v, v2);
        assert_eq!(v2.to_file_string(), text);
    }

    #[test]
    fn malformed_file_reports_line() {
        let err = Vocab::from_file_string("bpe-vocab v1\n???\n").unwrap_err();
        match err {
            TokenizerError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn round_trip_printable(words in proptest::collection::vec("[a-z]{1,8}", 1..8)) {
            // Doubled letters put every character in both inner and
            // word-final position, so any a-z input is fully covered.
            let corpus: String = ('a'..='z').map(|c| format!("{c}{c} ")).collect();
            let v = Vocab::train(&corpus, 200).unwrap();
            let text = words.join(" ");
            let ids = v.encode(&text);
            prop_assert_eq!(v.decode(&ids).unwrap(), text);
        }

        #[test]
        fn encode_deterministic(text in "[a-z ]{0,40}") {
            let v = Vocab::train("deterministic encoding check words", 100).unwrap();
            prop_assert_eq!(v.encode(&text), v.encode(&text));
        }
    }
}
