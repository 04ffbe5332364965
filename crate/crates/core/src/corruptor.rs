//! The synthetic-parallel tweet generator H: paraphrase, spelling
//! corruption, and hashtag operations over news sentences, in that order.
//! Every stage is a pure function of (input, seed).

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Probabilities of the corruption stages plus the hashtag inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    pub spell_p: f64,
    pub ne_hashtag_p: f64,
    pub random_hashtag_p: f64,
    pub hashtag_pool: Vec<String>,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            spell_p: 0.15,
            ne_hashtag_p: 0.15,
            random_hashtag_p: 0.15,
            hashtag_pool: vec![
                "#breaking".to_string(),
                "#news".to_string(),
                "#update".to_string(),
            ],
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("spell_p", self.spell_p),
            ("ne_hashtag_p", self.ne_hashtag_p),
            ("random_hashtag_p", self.random_hashtag_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} out of [0, 1]"));
            }
        }
        if self.random_hashtag_p > 0.0 && self.hashtag_pool.is_empty() {
            return Err("random_hashtag_p > 0 requires a non-empty hashtag pool".to_string());
        }
        Ok(())
    }
}

/// Stand-in for round-trip machine translation: either a bundled lexical
/// rewriter, an external sentence table, or nothing.
#[derive(Debug, Clone)]
pub enum Paraphraser {
    Identity,
    /// Synonym substitution per content word plus occasional function-word
    /// drops; "a little noisy" by intent.
    Lexical {
        synonym_p: f64,
        drop_function_p: f64,
    },
    /// Externally produced rewrites, original -> paraphrase.
    Table(HashMap<String, String>),
}

impl Default for Paraphraser {
    fn default() -> Self {
        Paraphraser::Lexical {
            synonym_p: 0.2,
            drop_function_p: 0.1,
        }
    }
}

/// Tab-separated `original<TAB>paraphrase` lines.
pub fn load_paraphrase_table(path: &Path) -> std::io::Result<Paraphraser> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for line in text.lines() {
        if let Some((orig, para)) = line.split_once('\t') {
            map.insert(orig.trim().to_string(), para.trim().to_string());
        }
    }
    Ok(Paraphraser::Table(map))
}

const SYNONYMS: &[(&str, &str)] = &[
    ("killed", "dead"),
    ("stormed", "attacked"),
    ("gunmen", "attackers"),
    ("evacuated", "relocated"),
    ("damaged", "wrecked"),
    ("flooded", "inundated"),
    ("collapsed", "crumbled"),
    ("injured", "hurt"),
    ("rescued", "saved"),
    ("massive", "huge"),
    ("severe", "intense"),
    ("approaching", "nearing"),
    ("officials", "authorities"),
    ("residents", "locals"),
    ("homes", "houses"),
    ("destroyed", "demolished"),
    ("reported", "said"),
    ("struck", "hit"),
    ("warning", "alert"),
    ("emergency", "crisis"),
];

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "an", "of", "to", "in", "on", "at", "as", "for", "by", "with", "that", "this",
];

const DEFAULT_GAZETTEER: &[&str] = &[
    "pakistan",
    "peshawar",
    "india",
    "dhaka",
    "bangladesh",
    "nepal",
    "karachi",
    "kathmandu",
    "chennai",
    "odisha",
    "puri",
    "kerala",
    "manila",
    "philippines",
    "haiti",
    "taliban",
    "red cross",
    "united nations",
    "la trobe valley",
];

/// The full H pipeline with its entity inventory and paraphrase hook.
#[derive(Debug, Clone)]
pub struct Corruptor {
    pub spec: CorruptionSpec,
    pub paraphraser: Paraphraser,
    /// Lowercased entries; multiword phrases allowed.
    pub gazetteer: Vec<String>,
}

impl Corruptor {
    pub fn new(spec: CorruptionSpec) -> Corruptor {
        Corruptor {
            spec,
            paraphraser: Paraphraser::default(),
            gazetteer: DEFAULT_GAZETTEER.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// News sentence -> synthetic tweet: Step 1 paraphrase, Step 2 spelling
    /// noise per word, Step 3 hashtag operations. Deterministic in
    /// (sentence, spec.seed, salt).
    pub fn corrupt(&self, sentence: &str, salt: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.spec.seed, salt));
        let s = paraphrase(sentence, &self.paraphraser, &mut rng);
        let s = spell_noise_sentence(&s, self.spec.spell_p, &mut rng);
        let s = hashtag_entities(&s, &self.gazetteer, self.spec.ne_hashtag_p, &mut rng);
        inject_random_hashtag(
            &s,
            &self.spec.hashtag_pool,
            self.spec.random_hashtag_p,
            &mut rng,
        )
    }
}

pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 round over the combined value
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Step 1. Falls back to the input if a rewrite would empty the sentence.
pub fn paraphrase(sentence: &str, para: &Paraphraser, rng: &mut ChaCha8Rng) -> String {
    match para {
        Paraphraser::Identity => sentence.to_string(),
        Paraphraser::Table(map) => map
            .get(sentence.trim())
            .cloned()
            .unwrap_or_else(|| sentence.to_string()),
        Paraphraser::Lexical {
            synonym_p,
            drop_function_p,
        } => {
            let mut out: Vec<String> = Vec::new();
            for word in sentence.split_whitespace() {
                let (core, punct) = split_trailing_punct(word);
                if FUNCTION_WORDS.contains(&core) {
                    if rng.gen::<f64>() < *drop_function_p {
                        continue;
                    }
                    out.push(word.to_string());
                    continue;
                }
                let swapped = SYNONYMS.iter().find(|(from, _)| *from == core);
                match swapped {
                    Some((_, to)) if rng.gen::<f64>() < *synonym_p => {
                        out.push(format!("{to}{punct}"));
                    }
                    _ => out.push(word.to_string()),
                }
            }
            if out.is_empty() {
                sentence.to_string()
            } else {
                out.join(" ")
            }
        }
    }
}

/// Step 2 for one word: with probability `spell_p`, one uniformly chosen
/// corruption mode — (a) swap two adjacent characters, (b) drop one
/// character, (c) drop all vowels. One-character words only admit (c).
pub fn spell_noise(word: &str, spell_p: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spell_noise_word(word, spell_p, &mut rng)
}

fn spell_noise_word(word: &str, spell_p: f64, rng: &mut ChaCha8Rng) -> String {
    if !word.chars().all(|c| c.is_alphabetic()) || word.is_empty() {
        return word.to_string();
    }
    if rng.gen::<f64>() >= spell_p {
        return word.to_string();
    }
    let chars: Vec<char> = word.chars().collect();
    let mode = if chars.len() == 1 {
        2
    } else {
        rng.gen_range(0..3u32) as usize
    };
    let corrupted: String = match mode {
        0 => {
            let i = rng.gen_range(0..chars.len() - 1);
            let mut c = chars.clone();
            c.swap(i, i + 1);
            c.into_iter().collect()
        }
        1 => {
            let i = rng.gen_range(0..chars.len());
            chars
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, c)| c)
                .collect()
        }
        _ => drop_vowels(word),
    };
    if corrupted.is_empty() {
        word.to_string()
    } else {
        corrupted
    }
}

/// Mode (c) on its own, exposed for rule fixtures.
pub fn drop_vowels(word: &str) -> String {
    word.chars()
        .filter(|c| !matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'A' | 'E' | 'I' | 'O' | 'U'))
        .collect()
}

fn spell_noise_sentence(sentence: &str, spell_p: f64, rng: &mut ChaCha8Rng) -> String {
    let words: Vec<String> = sentence
        .split_whitespace()
        .map(|w| spell_noise_word(w, spell_p, rng))
        .collect();
    if words.is_empty() {
        sentence.to_string()
    } else {
        words.join(" ")
    }
}

/// Step 3a. Detects entities by gazetteer phrase match (longest first) or a
/// title-case run; each detection is hashtagged with probability `p`,
/// multiword entities joined without spaces.
pub fn hashtag_entities(
    sentence: &str,
    gazetteer: &[String],
    p: f64,
    rng: &mut ChaCha8Rng,
) -> String {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    if tokens.is_empty() {
        return sentence.to_string();
    }
    let cores: Vec<(&str, &str)> = tokens.iter().map(|t| split_trailing_punct(t)).collect();
    let lowered: Vec<String> = cores.iter().map(|(c, _)| c.to_lowercase()).collect();

    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].starts_with('#') {
            out.push(tokens[i].to_string());
            i += 1;
            continue;
        }
        let mut span = 0;
        // Longest gazetteer phrase starting here.
        for len in (1..=3.min(tokens.len() - i)).rev() {
            let phrase = lowered[i..i + len].join(" ");
            if gazetteer.iter().any(|g| g == &phrase) {
                span = len;
                break;
            }
        }
        // Title-case run fallback.
        if span == 0 && is_title_case(cores[i].0) {
            let mut len = 1;
            while i + len < tokens.len() && is_title_case(cores[i + len].0) {
                len += 1;
            }
            span = len;
        }
        if span == 0 {
            out.push(tokens[i].to_string());
            i += 1;
            continue;
        }
        if rng.gen::<f64>() < p {
            let joined: String = cores[i..i + span].iter().map(|(c, _)| *c).collect();
            let trailing = cores[i + span - 1].1;
            out.push(format!("#{joined}{trailing}"));
        } else {
            for t in &tokens[i..i + span] {
                out.push(t.to_string());
            }
        }
        i += span;
    }
    out.join(" ")
}

/// Step 3b: with probability `p`, one pool hashtag is prepended or appended.
pub fn inject_random_hashtag(
    sentence: &str,
    pool: &[String],
    p: f64,
    rng: &mut ChaCha8Rng,
) -> String {
    if pool.is_empty() || rng.gen::<f64>() >= p {
        return sentence.to_string();
    }
    let tag = &pool[rng.gen_range(0..pool.len())];
    if rng.gen::<bool>() {
        format!("{tag} {sentence}")
    } else {
        format!("{sentence} {tag}")
    }
}

/// Top `k` `#`-prefixed tokens of the tweet corpus by frequency, ties by
/// lexicographic order.
pub fn build_hashtag_pool(tweets: &[String], k: usize) -> Vec<String> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for tweet in tweets {
        for tok in tweet.split_whitespace() {
            let (core, _) = split_trailing_punct(tok);
            if core.len() > 1 && core.starts_with('#') {
                *counts.entry(core.to_lowercase()).or_insert(0) += 1;
            }
        }
    }
    let mut pool: Vec<(String, u64)> = counts.into_iter().collect();
    pool.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    pool.truncate(k);
    pool.into_iter().map(|(t, _)| t).collect()
}

fn split_trailing_punct(token: &str) -> (&str, &str) {
    let cut = token
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_punctuation() && *c != '#')
        .last()
        .map(|(i, _)| i)
        .unwrap_or(token.len());
    token.split_at(cut)
}

fn is_title_case(word: &str) -> bool {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) if c.is_uppercase() => chars.all(|c| c.is_alphabetic()),
        _ => false,
    }
}
