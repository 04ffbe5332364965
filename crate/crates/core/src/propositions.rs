//! Merge-training data: (sentence, propositions) records from a templated
//! generator whose proposition sets are exact by construction, an ingestion
//! path for externally extracted clause files, and the P(y) pair builder
//! with the drop (n >= 2) and truncate (512 BPE tokens) rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::batch::{Batch, StyleId};
use crate::model::{GenMode, ModelError, StyleTransferModel};
use crate::objectives::MERGE_SOURCE_LIMIT;
use crate::tokenizer::{Vocab, BOS_ID, EOS_ID};

#[derive(Debug, Error)]
pub enum PropositionError {
    #[error("record count must be positive")]
    ZeroCount,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordSource {
    Generated,
    Ingested,
}

/// One sentence with its ordered proposition list.
#[derive(Debug, Clone, PartialEq)]
pub struct PropositionRecord {
    pub sentence: String,
    pub propositions: Vec<String>,
    pub source: RecordSource,
}

// ── Templated generation ─────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct ClauseSpec {
    pub subject: String,
    pub relation: String,
    pub argument: String,
}

impl ClauseSpec {
    fn text(&self) -> String {
        format!("{} {} {}", self.subject, self.relation, self.argument)
    }
}

/// Sentence composition rules. Proposition sets are derived from the AST,
/// never re-parsed from the surface string.
#[derive(Debug, Clone, PartialEq)]
pub enum TemplateAst {
    /// `S R A [pp] after S2 R2 A2`
    Temporal {
        main: ClauseSpec,
        pp: Option<String>,
        sub: ClauseSpec,
        redundant: Option<usize>,
    },
    /// `S1 R1 A1 and S2 R2 A2`
    Conjunction {
        first: ClauseSpec,
        second: ClauseSpec,
        redundant: Option<usize>,
    },
    /// `S, which R2 A2, R1 A1`
    Relative {
        main: ClauseSpec,
        rel_relation: String,
        rel_argument: String,
        redundant: Option<usize>,
    },
    /// `S R A pp1 [pp2]` with the combinatorial partial attachments.
    PpChain {
        main: ClauseSpec,
        pps: Vec<String>,
        redundant: Option<usize>,
    },
}

const SUBJECTS: &[&str] = &[
    "a young woman",
    "rescue teams",
    "taliban gunmen",
    "the cyclone",
    "floodwaters",
    "local officials",
    "the earthquake",
    "aid workers",
    "a school bus",
    "coast guards",
];

const RELATIONS: &[&str] = &[
    "stormed",
    "evacuated",
    "damaged",
    "reached",
    "flooded",
    "destroyed",
    "rescued",
    "struck",
    "buried",
    "blocked",
];

/// Relation synonyms used for the deliberate redundant propositions.
const RELATION_SYNONYMS: &[&str] = &[
    "attacked",
    "cleared",
    "wrecked",
    "entered",
    "inundated",
    "demolished",
    "saved",
    "hit",
    "covered",
    "closed",
];

const ARGUMENTS: &[&str] = &[
    "the school",
    "the coastal town",
    "dozens of homes",
    "the village",
    "the main bridge",
    "hundreds of residents",
    "the hospital",
    "the relief camp",
];

const PPS: &[&str] = &[
    "in peshawar",
    "in the valley",
    "on friday",
    "near the coast",
    "after midnight",
    "in eastern india",
];

/// Fraction of generated records that carry one duplicated-with-synonym
/// proposition, mirroring the redundancy of real clause extraction.
const REDUNDANT_FRACTION: f64 = 0.3;

impl TemplateAst {
    pub fn render(&self) -> String {
        match self {
            TemplateAst::Temporal { main, pp, sub, .. } => match pp {
                Some(pp) => format!("{} {} after {}", main.text(), pp, sub.text()),
                None => format!("{} after {}", main.text(), sub.text()),
            },
            TemplateAst::Conjunction { first, second, .. } => {
                format!("{} and {}", first.text(), second.text())
            }
            TemplateAst::Relative {
                main,
                rel_relation,
                rel_argument,
                ..
            } => format!(
                "{} , which {} {} , {} {}",
                main.subject, rel_relation, rel_argument, main.relation, main.argument
            ),
            TemplateAst::PpChain { main, pps, .. } => {
                format!("{} {}", main.text(), pps.join(" "))
            }
        }
    }

    /// The proposition set implied by the composition rules, including the
    /// optional redundant duplicate (relation swapped for its synonym).
    pub fn propositions(&self) -> Vec<String> {
        let mut props = match self {
            TemplateAst::Temporal { main, pp, sub, .. } => {
                let mut p = vec![main.text()];
                if let Some(pp) = pp {
                    p.push(format!("{} {}", main.text(), pp));
                }
                p.push(sub.text());
                p.push(match pp {
                    Some(pp) => format!("{} {} after {}", main.text(), pp, sub.text()),
                    None => format!("{} after {}", main.text(), sub.text()),
                });
                p
            }
            TemplateAst::Conjunction { first, second, .. } => vec![first.text(), second.text()],
            TemplateAst::Relative {
                main,
                rel_relation,
                rel_argument,
                ..
            } => vec![
                main.text(),
                format!("{} {} {}", main.subject, rel_relation, rel_argument),
            ],
            TemplateAst::PpChain { main, pps, .. } => {
                let mut p = vec![main.text()];
                for pp in pps {
                    p.push(format!("{} {}", main.text(), pp));
                }
                if pps.len() > 1 {
                    p.push(format!("{} {}", main.text(), pps.join(" ")));
                }
                p
            }
        };
        if let Some(idx) = self.redundant_index() {
            let dup = props[idx % props.len()].clone();
            props.push(swap_relation_synonym(&dup));
        }
        props
    }

    fn redundant_index(&self) -> Option<usize> {
        match self {
            TemplateAst::Temporal { redundant, .. }
            | TemplateAst::Conjunction { redundant, .. }
            | TemplateAst::Relative { redundant, .. }
            | TemplateAst::PpChain { redundant, .. } => *redundant,
        }
    }
}

fn swap_relation_synonym(prop: &str) -> String {
    for (rel, syn) in RELATIONS.iter().zip(RELATION_SYNONYMS) {
        if let Some(found) = prop.find(rel) {
            // Whole-word positions only; relations never overlap slots here.
            let mut out = String::with_capacity(prop.len());
            out.push_str(&prop[..found]);
            out.push_str(syn);
            out.push_str(&prop[found + rel.len()..]);
            return out;
        }
    }
    prop.to_string()
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [&'a str]) -> String {
    pool[rng.gen_range(0..pool.len())].to_string()
}

fn random_clause(rng: &mut ChaCha8Rng) -> ClauseSpec {
    ClauseSpec {
        subject: pick(rng, SUBJECTS),
        relation: pick(rng, RELATIONS),
        argument: pick(rng, ARGUMENTS),
    }
}

/// The raw ASTs behind `generate_templated`, exposed so oracles can
/// re-derive proposition sets independently.
pub fn generate_asts(n: usize, seed: u64) -> Result<Vec<TemplateAst>, PropositionError> {
    if n == 0 {
        return Err(PropositionError::ZeroCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let variant = rng.gen_range(0..4u32);
        let redundant_draw = rng.gen::<f64>() < REDUNDANT_FRACTION;
        let redundant_pick = rng.gen_range(0..8usize);
        let redundant = redundant_draw.then_some(redundant_pick);
        let ast = match variant {
            0 => TemplateAst::Temporal {
                main: random_clause(&mut rng),
                pp: if rng.gen::<bool>() {
                    Some(pick(&mut rng, PPS))
                } else {
                    None
                },
                sub: random_clause(&mut rng),
                redundant,
            },
            1 => TemplateAst::Conjunction {
                first: random_clause(&mut rng),
                second: random_clause(&mut rng),
                redundant,
            },
            2 => TemplateAst::Relative {
                main: random_clause(&mut rng),
                rel_relation: pick(&mut rng, RELATIONS),
                rel_argument: pick(&mut rng, ARGUMENTS),
                redundant,
            },
            _ => {
                let k = 1 + rng.gen_range(0..2usize);
                TemplateAst::PpChain {
                    main: random_clause(&mut rng),
                    pps: (0..k).map(|_| pick(&mut rng, PPS)).collect(),
                    redundant,
                }
            }
        };
        out.push(ast);
    }
    Ok(out)
}

pub fn generate_templated(n: usize, seed: u64) -> Result<Vec<PropositionRecord>, PropositionError> {
    Ok(generate_asts(n, seed)?
        .into_iter()
        .map(|ast| PropositionRecord {
            sentence: ast.render(),
            propositions: ast.propositions(),
            source: RecordSource::Generated,
        })
        .collect())
}

// ── Ingestion ────────────────────────────────────────────────────────────

#[derive(Debug, Default, Clone, PartialEq)]
pub struct IngestReport {
    pub dropped_too_few: u64,
    pub malformed: Vec<(usize, String)>,
}

/// One record per line: `sentence<TAB>prop1<TAB>prop2<TAB>...`. Records
/// left with fewer than two propositions are dropped and counted; empty
/// fields are reported with their line number.
pub fn ingest_clause_lines(text: &str) -> (Vec<PropositionRecord>, IngestReport) {
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t').map(str::trim);
        let sentence = fields.next().unwrap_or("");
        if sentence.is_empty() {
            report
                .malformed
                .push((lineno, "empty sentence field".to_string()));
            continue;
        }
        let props: Vec<String> = fields.map(|p| p.to_string()).collect();
        if props.iter().any(|p| p.is_empty()) {
            report
                .malformed
                .push((lineno, "empty proposition field".to_string()));
            continue;
        }
        if props.len() < 2 {
            report.dropped_too_few += 1;
            continue;
        }
        records.push(PropositionRecord {
            sentence: sentence.to_string(),
            propositions: props,
            source: RecordSource::Ingested,
        });
    }
    (records, report)
}

pub fn ingest_clause_file(
    path: &std::path::Path,
) -> Result<(Vec<PropositionRecord>, IngestReport), PropositionError> {
    let text = std::fs::read_to_string(path)?;
    Ok(ingest_clause_lines(&text))
}

pub fn clause_lines(records: &[PropositionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.sentence);
        for p in &r.propositions {
            out.push('\t');
            out.push_str(p);
        }
        out.push('\n');
    }
    out
}

// ── Pair building ────────────────────────────────────────────────────────

/// A (P(y), y) training pair in text form.
#[derive(Debug, Clone, PartialEq)]
pub struct MergePair {
    pub source: String,
    pub target: String,
}

fn normalize_prop(p: &str) -> String {
    p.trim().trim_end_matches('.').trim_end().to_string()
}

/// Joins normalized propositions with ". " and a terminal period.
pub fn concat_propositions(props: &[String]) -> String {
    let parts: Vec<String> = props.iter().map(|p| normalize_prop(p)).collect();
    format!("{}.", parts.join(". "))
}

/// Builds (P(y), y) pairs under both data rules: sources are truncated at a
/// proposition boundary to stay within 512 BPE tokens, and pairs that
/// cannot keep at least two propositions are dropped (counted).
pub fn build_merge_pairs(records: &[PropositionRecord], vocab: &Vocab) -> (Vec<MergePair>, u64) {
    let mut pairs = Vec::new();
    let mut dropped = 0u64;
    for record in records {
        if record.propositions.len() < 2 {
            dropped += 1;
            continue;
        }
        let mut kept = record.propositions.len();
        let source = loop {
            if kept < 2 {
                break None;
            }
            let candidate = concat_propositions(&record.propositions[..kept]);
            if vocab.encode(&candidate).len() <= MERGE_SOURCE_LIMIT {
                break Some(candidate);
            }
            kept -= 1;
        };
        match source {
            Some(source) => pairs.push(MergePair {
                source,
                target: record.sentence.clone(),
            }),
            None => dropped += 1,
        }
    }
    (pairs, dropped)
}

/// Scan used by the data-rule checks: every pair must tokenize to at most
/// 512 source tokens and split back into at least two ". "-separated
/// segments.
pub fn verify_merge_pairs(pairs: &[MergePair], vocab: &Vocab) -> Result<(), String> {
    for (i, pair) in pairs.iter().enumerate() {
        let len = vocab.encode(&pair.source).len();
        if len > MERGE_SOURCE_LIMIT {
            return Err(format!("pair {i}: source has {len} tokens"));
        }
        let segments = pair.source.trim_end_matches('.').split(". ").count();
        if segments < 2 {
            return Err(format!("pair {i}: only {segments} proposition segment(s)"));
        }
    }
    Ok(())
}

// ── Inference ────────────────────────────────────────────────────────────

fn merge_two(
    model: &StyleTransferModel,
    vocab: &Vocab,
    a: &str,
    b: &str,
) -> Result<String, PropositionError> {
    let source = concat_propositions(&[a.to_string(), b.to_string()]);
    let mut row = vec![BOS_ID];
    row.extend(vocab.encode(&source));
    row.push(EOS_ID);
    let batch = Batch::from_rows(vec![row], StyleId::Tweet);
    let z = model.encode_values(&batch, StyleId::Tweet)?;
    // Cap generation by the summed input lengths: fusion never needs more.
    let budget = vocab.encode(a).len() + vocab.encode(b).len();
    let max_new = budget.clamp(1, model.cfg.max_len.saturating_sub(2).max(1));
    let out = model.generate(&z, StyleId::News, max_new, GenMode::Greedy)?;
    Ok(vocab.decode(&out[0]).unwrap_or_default())
}

/// Merges sentences two at a time — (1,2), (3,4), ... — and joins the merged
/// outputs with single spaces. A lone trailing sentence passes through; a
/// single input is returned unchanged.
pub fn pairwise_merge_inference(
    model: &StyleTransferModel,
    vocab: &Vocab,
    sentences: &[String],
) -> Result<String, PropositionError> {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < sentences.len() {
        if i + 1 < sentences.len() {
            parts.push(merge_two(model, vocab, &sentences[i], &sentences[i + 1])?);
            i += 2;
        } else {
            parts.push(sentences[i].clone());
            i += 1;
        }
    }
    Ok(parts.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Independent re-derivation of the proposition set from the AST,
    /// written against the composition rules rather than the shipped
    /// `propositions()` implementation.
    fn oracle_propositions(ast: &TemplateAst) -> Vec<String> {
        let clause = |c: &ClauseSpec| format!("{} {} {}", c.subject, c.relation, c.argument);
        let mut props = match ast {
            TemplateAst::Temporal { main, pp, sub, .. } => {
                let m = clause(main);
                let s = clause(sub);
                let mut v = vec![m.clone()];
                if let Some(pp) = pp {
                    v.push(format!("{m} {pp}"));
                    v.push(s.clone());
                    v.push(format!("{m} {pp} after {s}"));
                } else {
                    v.push(s.clone());
                    v.push(format!("{m} after {s}"));
                }
                v
            }
            TemplateAst::Conjunction { first, second, .. } => {
                vec![clause(first), clause(second)]
            }
            TemplateAst::Relative {
                main,
                rel_relation,
                rel_argument,
                ..
            } => vec![
                clause(main),
                format!("{} {rel_relation} {rel_argument}", main.subject),
            ],
            TemplateAst::PpChain { main, pps, .. } => {
                let m = clause(main);
                let mut v = vec![m.clone()];
                for pp in pps {
                    v.push(format!("{m} {pp}"));
                }
                if pps.len() > 1 {
                    v.push(format!("{m} {}", pps.join(" ")));
                }
                v
            }
        };
        if let Some(idx) = match ast {
            TemplateAst::Temporal { redundant, .. }
            | TemplateAst::Conjunction { redundant, .. }
            | TemplateAst::Relative { redundant, .. }
            | TemplateAst::PpChain { redundant, .. } => *redundant,
        } {
            let dup = props[idx % props.len()].clone();
            let swapped = RELATIONS
                .iter()
                .zip(RELATION_SYNONYMS)
                .find(|(rel, _)| dup.contains(**rel))
                .map(|(rel, syn)| dup.replacen(*rel, syn, 1))
                .unwrap_or(dup);
            props.push(swapped);
        }
        props
    }

    #[test]
    fn temporal_template_has_three_or_more_props() {
        let main = ClauseSpec {
            subject: "rescue teams".into(),
            relation: "reached".into(),
            argument: "the village".into(),
        };
        let sub = ClauseSpec {
            subject: "floodwaters".into(),
            relation: "blocked".into(),
            argument: "the main bridge".into(),
        };
        let ast = TemplateAst::Temporal {
            main,
            pp: None,
            sub,
            redundant: None,
        };
        let props = ast.propositions();
        assert!(props.len() >= 3, "{props:?}");
        assert!(props.contains(&"rescue teams reached the village".to_string()));
        assert!(props.contains(&"floodwaters blocked the main bridge".to_string()));
    }

    #[test]
    fn generation_is_seed_deterministic() {
        assert_eq!(
            generate_templated(40, 9).unwrap(),
            generate_templated(40, 9).unwrap()
        );
        assert_ne!(
            generate_templated(40, 9).unwrap(),
            generate_templated(40, 10).unwrap()
        );
    }

    #[test]
    fn zero_count_is_an_error() {
        assert!(matches!(
            generate_templated(0, 1),
            Err(PropositionError::ZeroCount)
        ));
    }

    #[test]
    fn sentence_tokens_covered_by_propositions_plus_connectives() {
        let connectives: HashSet<&str> = ["after", "and", "which", ","].into_iter().collect();
        for record in generate_templated(200, 31).unwrap() {
            let mut prop_tokens: HashSet<String> = HashSet::new();
            for p in &record.propositions {
                prop_tokens.extend(p.split_whitespace().map(|w| w.to_string()));
            }
            for token in record.sentence.split_whitespace() {
                assert!(
                    prop_tokens.contains(token) || connectives.contains(token),
                    "token {token:?} of {:?} uncovered",
                    record.sentence
                );
            }
        }
    }

    #[test]
    fn ast_oracle_equivalence() {
        for ast in generate_asts(300, 77).unwrap() {
            assert_eq!(ast.propositions(), oracle_propositions(&ast), "ast {ast:?}");
        }
    }

    #[test]
    fn redundancy_fraction_near_configured() {
        let asts = generate_asts(2000, 5).unwrap();
        let with = asts
            .iter()
            .filter(|a| match a {
                TemplateAst::Temporal { redundant, .. }
                | TemplateAst::Conjunction { redundant, .. }
                | TemplateAst::Relative { redundant, .. }
                | TemplateAst::PpChain { redundant, .. } => redundant.is_some(),
            })
            .count();
        let frac = with as f64 / 2000.0;
        assert!(
            (frac - REDUNDANT_FRACTION).abs() < 0.03,
            "redundant fraction {frac}"
        );
    }

    const AIRLIFT_LINE: &str = concat!(
        "a young woman has been airlifted to hospital after her car veered into trees in the la trobe valley.\t",
        "a young woman has been airlifted to hospital.\t",
        "a young woman has been airlifted after her car veered into trees in the la trobe valley.\t",
        "a young woman has been airlifted into trees in the la trobe valley.\t",
        "a young woman has been airlifted in the la trobe valley.\t",
        "she has car.\t",
        "her car veered after her car veered into trees in the la trobe valley.\t",
        "her car veered into trees in the la trobe valley.\t",
        "her car veered in the la trobe valley"
    );

    #[test]
    fn airlift_fixture_parses_to_eight_propositions() {
        let (records, report) = ingest_clause_lines(AIRLIFT_LINE);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].propositions.len(), 8);
        assert_eq!(records[0].source, RecordSource::Ingested);
        assert!(report.malformed.is_empty());
        assert_eq!(report.dropped_too_few, 0);
    }

    #[test]
    fn single_prop_record_dropped_with_counter() {
        let (records, report) =
            ingest_clause_lines("a sentence\tonly proposition\nanother\tp1\tp2\n");
        assert_eq!(records.len(), 1);
        assert_eq!(report.dropped_too_few, 1);
    }

    #[test]
    fn empty_file_is_empty_not_error() {
        let (records, report) = ingest_clause_lines("");
        assert!(records.is_empty());
        assert_eq!(report, IngestReport::default());
    }

    #[test]
    fn malformed_lines_reported_with_numbers() {
        let (_, report) = ingest_clause_lines("good\tp1\tp2\n\tp1\tp2\nx\tp1\t\tp2\n");
        assert_eq!(report.malformed.len(), 2);
        assert_eq!(report.malformed[0].0, 2);
        assert_eq!(report.malformed[1].0, 3);
    }

    #[test]
    fn ingestion_round_trip() {
        let records = generate_templated(30, 3).unwrap();
        let text = clause_lines(&records);
        let (back, report) = ingest_clause_lines(&text);
        assert!(report.malformed.is_empty());
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.sentence, b.sentence);
            assert_eq!(a.propositions, b.propositions);
        }
    }

    fn template_vocab() -> Vocab {
        let mut corpus = String::new();
        for record in generate_templated(120, 1).unwrap() {
            corpus.push_str(&record.sentence);
            corpus.push('\n');
            for p in &record.propositions {
                corpus.push_str(p);
                corpus.push('\n');
            }
        }
        corpus.push_str(
            "a young woman has been airlifted to hospital after her car veered \
                         into trees in the la trobe valley . she has\n",
        );
        Vocab::train(&corpus, 400).unwrap()
    }

    #[test]
    fn short_record_pairs_are_untruncated() {
        let vocab = template_vocab();
        let record = PropositionRecord {
            sentence: "rescue teams reached the village and floodwaters blocked the main bridge"
                .to_string(),
            propositions: vec![
                "rescue teams reached the village".to_string(),
                "floodwaters blocked the main bridge".to_string(),
            ],
            source: RecordSource::Generated,
        };
        let (pairs, dropped) = build_merge_pairs(&[record.clone()], &vocab);
        assert_eq!(dropped, 0);
        assert_eq!(
            pairs[0].source,
            "rescue teams reached the village. floodwaters blocked the main bridge."
        );
        assert_eq!(pairs[0].target, record.sentence);
    }

    #[test]
    fn airlift_pair_source_starts_with_first_proposition() {
        let vocab = template_vocab();
        let (records, _) = ingest_clause_lines(AIRLIFT_LINE);
        let (pairs, dropped) = build_merge_pairs(&records, &vocab);
        assert_eq!(dropped, 0);
        assert!(
            pairs[0]
                .source
                .starts_with("a young woman has been airlifted to hospital."),
            "{}",
            pairs[0].source
        );
        verify_merge_pairs(&pairs, &vocab).unwrap();
    }

    #[test]
    fn adversarial_long_record_truncates_at_proposition_boundary() {
        let vocab = template_vocab();
        // Hundreds of 6-plus-token propositions blow well past 512 tokens.
        let props: Vec<String> = (0..200)
            .map(|i| {
                format!(
                    "rescue teams reached the village {} times",
                    ["two", "three", "four", "five"][i % 4]
                )
            })
            .collect();
        let record = PropositionRecord {
            sentence: "rescue teams reached the village repeatedly".to_string(),
            propositions: props.clone(),
            source: RecordSource::Ingested,
        };
        let (pairs, dropped) = build_merge_pairs(&[record], &vocab);
        assert_eq!(dropped, 0);
        assert_eq!(pairs.len(), 1);
        verify_merge_pairs(&pairs, &vocab).unwrap();

        // The truncated source must decode to whole propositions only.
        let segments: Vec<&str> = pairs[0].source.trim_end_matches('.').split(". ").collect();
        assert!(segments.len() >= 2);
        assert!(segments.len() < props.len());
        for (seg, prop) in segments.iter().zip(&props) {
            assert_eq!(*seg, normalize_prop(prop));
        }
    }

    #[test]
    fn truncation_that_cannot_keep_two_props_drops_pair() {
        let vocab = template_vocab();
        let huge = "rescue teams reached the village ".repeat(200);
        let record = PropositionRecord {
            sentence: "irrelevant".to_string(),
            propositions: vec![huge.clone(), huge],
            source: RecordSource::Ingested,
        };
        let (pairs, dropped) = build_merge_pairs(&[record], &vocab);
        assert!(pairs.is_empty());
        assert_eq!(dropped, 1);
    }

    #[test]
    fn pairwise_inference_degenerate_inputs() {
        let vocab = template_vocab();
        let cfg = crate::model::ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 16,
            d_ff: 24,
            max_len: 64,
            vocab_size: vocab.len(),
            n_styles: 2,
            dropout_p: 0.0,
        };
        let model = StyleTransferModel::new(cfg, 3);

        let empty = pairwise_merge_inference(&model, &vocab, &[]).unwrap();
        assert_eq!(empty, "");

        let single = pairwise_merge_inference(
            &model,
            &vocab,
            &["the cyclone struck the school".to_string()],
        )
        .unwrap();
        assert_eq!(single, "the cyclone struck the school");

        // Duplicate pair: output token length bounded by the summed inputs.
        let s = "rescue teams reached the village".to_string();
        let merged = pairwise_merge_inference(&model, &vocab, &[s.clone(), s.clone()]).unwrap();
        let budget = 2 * vocab.encode(&s).len();
        assert!(vocab.encode(&merged).len() <= budget);

        // Three sentences: merge(1,2) then the third passes through.
        let out = pairwise_merge_inference(
            &model,
            &vocab,
            &[
                s.clone(),
                s.clone(),
                "floodwaters blocked the main bridge".to_string(),
            ],
        )
        .unwrap();
        assert!(out.ends_with("floodwaters blocked the main bridge"));
    }
}
