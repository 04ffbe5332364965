//! One function per subcommand.

use std::path::{Path, PathBuf};

use stylefuse::batch::{framed_rows, Batch, StyleId};
use stylefuse::config::PipelineConfig;
use stylefuse::corruptor::{build_hashtag_pool, Corruptor};
use stylefuse::datakit::{
    filter_by_similarity, filter_overlong, keyword_filter, kmeans, make_streams,
    select_representatives, TfidfModel,
};
use stylefuse::eval::bleu;
use stylefuse::model::{load_checkpoint, Discriminator, GenMode, StyleTransferModel};
use stylefuse::numerics::AdamParams;
use stylefuse::objectives::{
    run_schedule, DataSources, Objective, ScheduleSpec, StepRecord, StyleTrainer,
};
use stylefuse::propositions::{
    build_merge_pairs, generate_templated, ingest_clause_file, pairwise_merge_inference,
    verify_merge_pairs, MergePair,
};
use stylefuse::tokenizer::Vocab;

use crate::rundir::RunDir;
use crate::{read_groups, read_lines, read_lines_exact, CliError};

pub fn cmd_train_bpe(inputs: &[PathBuf], vocab_size: usize, out: &Path) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage(
            "train-bpe needs at least one --input file".to_string(),
        ));
    }
    let mut corpus = String::new();
    for path in inputs {
        for line in read_lines(path)? {
            corpus.push_str(&line);
            corpus.push('\n');
        }
    }
    let vocab = Vocab::train(&corpus, vocab_size)?;
    vocab.save(out)?;
    eprintln!(
        "trained vocab: {} tokens, {} merges -> {}",
        vocab.len(),
        vocab.merges().len(),
        out.display()
    );
    Ok(())
}

fn load_corpus_for_model(
    path: &Path,
    vocab: &Vocab,
    max_len: usize,
    label: &str,
) -> Result<Vec<String>, CliError> {
    let lines = read_lines(path)?;
    let (kept, dropped) = filter_overlong(&lines, vocab, max_len);
    if dropped > 0 {
        eprintln!(
            "{label}: dropped {dropped} overlength sentence(s) of {}",
            lines.len()
        );
    }
    if kept.is_empty() {
        return Err(CliError::Data(format!(
            "{label}: no usable sentences in {}",
            path.display()
        )));
    }
    Ok(kept)
}

fn adam_of(cfg: &PipelineConfig) -> AdamParams {
    AdamParams {
        learning_rate: cfg.learning_rate,
        ..AdamParams::default()
    }
}

fn corruptor_of(cfg: &PipelineConfig, tweets: &[String]) -> Corruptor {
    let mut spec = cfg.corrupt.clone();
    spec.seed = cfg.seed;
    let pool = build_hashtag_pool(tweets, cfg.hashtag_pool_size);
    if !pool.is_empty() {
        spec.hashtag_pool = pool;
    }
    Corruptor::new(spec)
}

/// Renumbers schedule records so multi-stage logs stay strictly increasing.
fn offset_records(records: Vec<StepRecord>, offset: &mut u64) -> Vec<StepRecord> {
    let base = *offset;
    let mut out = records;
    for r in out.iter_mut() {
        r.step += base;
    }
    if let Some(last) = out.last() {
        *offset = last.step;
    }
    out
}

pub fn cmd_pretrain_mlm(
    cfg: &PipelineConfig,
    tweets: &Path,
    news: &Path,
    vocab_path: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let vocab = Vocab::load(vocab_path)?;
    let mut cfg = cfg.clone();
    cfg.model.vocab_size = vocab.len();
    cfg.validate()?;

    let tweet_lines = read_lines(tweets)?;
    let news_lines = read_lines(news)?;
    let tweet_streams = make_streams(&tweet_lines, &vocab, cfg.stream_len);
    let news_streams = make_streams(&news_lines, &vocab, cfg.stream_len);
    if tweet_streams.is_empty() && news_streams.is_empty() {
        return Err(CliError::Data(format!(
            "corpora too small for a single {}-token stream",
            cfg.stream_len
        )));
    }

    let model = StyleTransferModel::new(cfg.model.clone(), cfg.seed);
    let disc = Discriminator::new(cfg.model.d_model, cfg.disc_hidden_size, cfg.seed ^ 0x5117);
    let mut trainer = StyleTrainer::new(model, disc, adam_of(&cfg));
    trainer.mlm = cfg.mlm;

    let corruptor = corruptor_of(&cfg, &tweet_lines);
    let data = DataSources {
        tweets: &tweet_lines,
        news: &news_lines,
        merge_pairs: &[],
        tweet_streams: &tweet_streams,
        news_streams: &news_streams,
        vocab: &vocab,
        corruptor: &corruptor,
    };
    let spec = ScheduleSpec {
        objectives: vec![Objective::Mlm],
        batch_size: cfg.batch_size,
        mlm_batch_size: cfg.mlm_batch_size,
        cycles: cfg.mlm_cycles,
        seed: cfg.seed,
        checkpoint_every: 0,
    };
    let mut run = RunDir::create(out_dir, &cfg)?;
    let records = run_schedule(&mut trainer, &spec, &data, None)?;
    run.append_records(&records)?;

    trainer.model.initialize_decoder_from_encoder();
    run.save_blocks(
        "model.ckpt",
        &trainer.model.cfg.clone(),
        &trainer.model.to_blocks(),
    )?;
    eprintln!(
        "pretrained MLM for {} cycles -> {}",
        cfg.mlm_cycles,
        out_dir.display()
    );
    Ok(())
}

fn init_style_model(
    cfg: &mut PipelineConfig,
    vocab: &Vocab,
    init: Option<&Path>,
) -> Result<(StyleTransferModel, Discriminator), CliError> {
    match init {
        Some(path) => {
            let (ckpt_cfg, blocks) = load_checkpoint(path)?;
            let model = StyleTransferModel::from_blocks(ckpt_cfg.clone(), &blocks)?;
            if model.cfg.vocab_size != vocab.len() {
                return Err(CliError::Data(format!(
                    "checkpoint vocab_size {} does not match vocab file ({} tokens)",
                    model.cfg.vocab_size,
                    vocab.len()
                )));
            }
            cfg.model = ckpt_cfg;
            let disc = Discriminator::from_blocks(&blocks).unwrap_or_else(|_| {
                Discriminator::new(cfg.model.d_model, cfg.disc_hidden_size, cfg.seed ^ 0x5117)
            });
            Ok((model, disc))
        }
        None => {
            cfg.model.vocab_size = vocab.len();
            cfg.validate()?;
            Ok((
                StyleTransferModel::new(cfg.model.clone(), cfg.seed),
                Discriminator::new(cfg.model.d_model, cfg.disc_hidden_size, cfg.seed ^ 0x5117),
            ))
        }
    }
}

pub fn style_objectives(dis: bool, syn: bool) -> Vec<Objective> {
    let mut objectives = vec![Objective::Denoise, Objective::BackTranslate];
    if dis {
        objectives.push(Objective::Discriminator);
        objectives.push(Objective::Adversarial);
    }
    if syn {
        objectives.push(Objective::Synthetic);
    }
    objectives
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train_style(
    cfg: &PipelineConfig,
    tweets: &Path,
    news: &Path,
    vocab_path: &Path,
    init: Option<&Path>,
    dis: bool,
    syn: bool,
    out_dir: &Path,
) -> Result<(), CliError> {
    let vocab = Vocab::load(vocab_path)?;
    let mut cfg = cfg.clone();
    let (model, disc) = init_style_model(&mut cfg, &vocab, init)?;
    let tweet_lines = load_corpus_for_model(tweets, &vocab, cfg.model.max_len, "tweets")?;
    let news_lines = load_corpus_for_model(news, &vocab, cfg.model.max_len, "news")?;

    let mut trainer = StyleTrainer::new(model, disc, adam_of(&cfg));
    trainer.noise = cfg.noise;
    trainer.mlm = cfg.mlm;
    let corruptor = corruptor_of(&cfg, &tweet_lines);
    let data = DataSources {
        tweets: &tweet_lines,
        news: &news_lines,
        merge_pairs: &[],
        tweet_streams: &[],
        news_streams: &[],
        vocab: &vocab,
        corruptor: &corruptor,
    };
    let spec = ScheduleSpec {
        objectives: style_objectives(dis, syn),
        batch_size: cfg.batch_size,
        mlm_batch_size: cfg.mlm_batch_size,
        cycles: cfg.style_cycles,
        seed: cfg.seed,
        checkpoint_every: cfg.checkpoint_every,
    };
    let mut run = RunDir::create(out_dir, &cfg)?;
    let mut checkpoint = |cycle: usize, t: &StyleTrainer| {
        let mut blocks = t.model.to_blocks();
        blocks.extend(t.disc.to_blocks());
        run.save_blocks(
            &format!("model-{cycle:06}.ckpt"),
            &t.model.cfg.clone(),
            &blocks,
        )
        .map(|_| ())
        .map_err(|e| stylefuse::objectives::TrainError::Checkpoint(e.message().to_string()))
    };
    let records = run_schedule(&mut trainer, &spec, &data, Some(&mut checkpoint))?;
    run.append_records(&records)?;

    let mut blocks = trainer.model.to_blocks();
    blocks.extend(trainer.disc.to_blocks());
    run.save_blocks("model.ckpt", &trainer.model.cfg.clone(), &blocks)?;
    eprintln!(
        "style training done: {} cycles, {} records, {} empty generation(s) skipped",
        cfg.style_cycles,
        records.len(),
        trainer.counters.empty_generations
    );
    Ok(())
}

/// `source<TAB>target` per line.
pub fn read_pair_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (i, line) in read_lines_exact(path)?.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((s, t)) if !s.trim().is_empty() && !t.trim().is_empty() => {
                pairs.push((s.trim().to_string(), t.trim().to_string()));
            }
            _ => {
                return Err(CliError::Data(format!(
                    "{}:{}: expected `source<TAB>target`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(pairs)
}

pub fn cmd_train_merge(
    cfg: &PipelineConfig,
    pairs_path: &Path,
    vocab_path: &Path,
    init: Option<&Path>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let vocab = Vocab::load(vocab_path)?;
    let mut cfg = cfg.clone();
    let (model, disc) = init_style_model(&mut cfg, &vocab, init)?;
    let raw_pairs = read_pair_file(pairs_path)?;
    let max_inner = cfg.model.max_len.saturating_sub(2);
    let mut pairs = Vec::with_capacity(raw_pairs.len());
    let mut dropped = 0u64;
    for (s, t) in raw_pairs {
        if vocab.encode(&s).len() <= max_inner && vocab.encode(&t).len() <= max_inner {
            pairs.push((s, t));
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        eprintln!("train-merge: dropped {dropped} pair(s) over the model's max_len");
    }
    if pairs.is_empty() {
        return Err(CliError::Data("no usable merge pairs".to_string()));
    }

    let mut trainer = StyleTrainer::new(model, disc, adam_of(&cfg));
    let corruptor = corruptor_of(&cfg, &[]);
    let data = DataSources {
        tweets: &[],
        news: &[],
        merge_pairs: &pairs,
        tweet_streams: &[],
        news_streams: &[],
        vocab: &vocab,
        corruptor: &corruptor,
    };
    let spec = ScheduleSpec {
        objectives: vec![Objective::Merge],
        batch_size: cfg.batch_size,
        mlm_batch_size: cfg.mlm_batch_size,
        cycles: cfg.merge_cycles,
        seed: cfg.seed,
        checkpoint_every: cfg.checkpoint_every,
    };
    let mut run = RunDir::create(out_dir, &cfg)?;
    let records = run_schedule(&mut trainer, &spec, &data, None)?;
    run.append_records(&records)?;
    run.save_blocks(
        "model.ckpt",
        &trainer.model.cfg.clone(),
        &trainer.model.to_blocks(),
    )?;
    eprintln!(
        "merge training done: {} cycles on {} pairs",
        cfg.merge_cycles,
        pairs.len()
    );
    Ok(())
}

/// Greedy tweet -> news conversion of a batch of sentences.
pub fn transfer_sentences(
    model: &StyleTransferModel,
    vocab: &Vocab,
    sentences: &[String],
) -> Result<Vec<String>, CliError> {
    let mut out = Vec::with_capacity(sentences.len());
    for chunk in sentences.chunks(8) {
        let refs: Vec<&str> = chunk.iter().map(|s| s.as_str()).collect();
        let rows = framed_rows(&refs, vocab);
        for (i, row) in rows.iter().enumerate() {
            if row.len() > model.cfg.max_len {
                return Err(CliError::Data(format!(
                    "input sentence encodes to {} tokens, over max_len {}: {:?}",
                    row.len(),
                    model.cfg.max_len,
                    chunk[i]
                )));
            }
        }
        let batch = Batch::from_rows(rows, StyleId::Tweet);
        let inner_max = batch.lens.iter().map(|l| l - 2).max().unwrap_or(0);
        let max_new = ((inner_max as f64 * 1.5).ceil() as usize)
            .clamp(1, model.cfg.max_len.saturating_sub(2).max(1));
        let z = model.encode_values(&batch, StyleId::Tweet)?;
        let generated = model.generate(&z, StyleId::News, max_new, GenMode::Greedy)?;
        for ids in generated {
            out.push(vocab.decode(&ids)?);
        }
    }
    Ok(out)
}

pub fn cmd_transfer(
    model_path: &Path,
    vocab_path: &Path,
    input: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let model = StyleTransferModel::load(model_path)?;
    let vocab = Vocab::load(vocab_path)?;
    let lines = read_lines(input)?;
    let converted = transfer_sentences(&model, &vocab, &lines)?;
    let empty = converted.iter().filter(|l| l.is_empty()).count();
    if empty > 0 {
        eprintln!("transfer: {empty} empty generation(s)");
    }
    std::fs::write(out, converted.join("\n") + "\n")?;
    eprintln!(
        "transferred {} sentence(s) -> {}",
        converted.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_merge(
    model_path: &Path,
    vocab_path: &Path,
    input: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let model = StyleTransferModel::load(model_path)?;
    let vocab = Vocab::load(vocab_path)?;
    let groups = read_groups(input)?;
    if groups.is_empty() {
        return Err(CliError::Data(format!(
            "no sentence groups in {}",
            input.display()
        )));
    }
    let mut paragraphs = Vec::with_capacity(groups.len());
    for group in &groups {
        paragraphs.push(pairwise_merge_inference(&model, &vocab, group)?);
    }
    std::fs::write(out, paragraphs.join("\n") + "\n")?;
    eprintln!("merged {} group(s) -> {}", groups.len(), out.display());
    Ok(())
}

pub fn cmd_corrupt(
    cfg: &PipelineConfig,
    input: &Path,
    tweets_for_pool: Option<&Path>,
    paraphrase_table: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let news = read_lines(input)?;
    let pool_source = match tweets_for_pool {
        Some(p) => read_lines(p)?,
        None => Vec::new(),
    };
    let mut corruptor = corruptor_of(cfg, &pool_source);
    if let Some(path) = paraphrase_table {
        corruptor.paraphraser = stylefuse::corruptor::load_paraphrase_table(path)?;
    }
    let mut lines = String::new();
    for (i, sentence) in news.iter().enumerate() {
        let synthetic = corruptor.corrupt(sentence, i as u64);
        lines.push_str(&synthetic);
        lines.push('\t');
        lines.push_str(sentence);
        lines.push('\n');
    }
    std::fs::write(out, lines)?;
    eprintln!("corrupted {} sentence(s) -> {}", news.len(), out.display());
    Ok(())
}

pub fn cmd_build_merge_data(
    cfg: &PipelineConfig,
    vocab_path: &Path,
    clauses: Option<&Path>,
    templated: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let vocab = Vocab::load(vocab_path)?;
    let records = match (clauses, templated) {
        (Some(path), None) => {
            let (records, report) = ingest_clause_file(path)?;
            for (line, message) in &report.malformed {
                eprintln!("{}:{line}: {message}", path.display());
            }
            if report.dropped_too_few > 0 {
                eprintln!(
                    "dropped {} record(s) with fewer than two propositions",
                    report.dropped_too_few
                );
            }
            records
        }
        (None, n) => generate_templated(n.unwrap_or(cfg.templated_records), cfg.seed)?,
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "build-merge-data takes --clauses or --templated, not both".to_string(),
            ))
        }
    };
    let (pairs, dropped) = build_merge_pairs(&records, &vocab);
    if dropped > 0 {
        eprintln!("dropped {dropped} record(s) while building pairs");
    }
    verify_merge_pairs(&pairs, &vocab).map_err(CliError::Data)?;
    write_pairs(out, &pairs)?;
    eprintln!("wrote {} merge pair(s) -> {}", pairs.len(), out.display());
    Ok(())
}

fn write_pairs(out: &Path, pairs: &[MergePair]) -> Result<(), CliError> {
    let mut text = String::new();
    for p in pairs {
        text.push_str(&p.source);
        text.push('\t');
        text.push_str(&p.target);
        text.push('\n');
    }
    std::fs::write(out, text)?;
    Ok(())
}

pub fn cmd_filter_domain(
    candidates: &Path,
    references: &Path,
    threshold: f64,
    keywords: &[String],
    out: &Path,
) -> Result<(), CliError> {
    let mut cands = read_lines(candidates)?;
    let refs = read_lines(references)?;
    if !keywords.is_empty() {
        cands = keyword_filter(&cands, keywords);
    }
    let kept = filter_by_similarity(&cands, &refs, threshold);
    std::fs::write(out, kept.join("\n") + "\n")?;
    eprintln!(
        "kept {} of {} candidate(s) -> {}",
        kept.len(),
        cands.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_cluster_select(
    input: &Path,
    k: usize,
    seed: u64,
    max_iter: usize,
    out: &Path,
    assignments_out: Option<&Path>,
) -> Result<(), CliError> {
    let lines = read_lines(input)?;
    if k > lines.len() {
        return Err(CliError::Data(format!(
            "k = {k} exceeds {} input lines",
            lines.len()
        )));
    }
    let tfidf = TfidfModel::fit(&lines);
    let points: Vec<Vec<f64>> = lines.iter().map(|l| tfidf.transform_dense(l)).collect();
    let result = kmeans(&points, k, seed, max_iter).map_err(CliError::Data)?;
    let reps = select_representatives(&result, &points, &lines);
    let text: Vec<String> = reps.iter().map(|(_, t)| t.clone()).collect();
    std::fs::write(out, text.join("\n") + "\n")?;
    if let Some(path) = assignments_out {
        let mut lines_out = String::new();
        for (i, a) in result.assignment.iter().enumerate() {
            lines_out.push_str(&format!("{i}\t{a}\n"));
        }
        std::fs::write(path, lines_out)?;
    }
    eprintln!(
        "selected {} representative(s) -> {}",
        reps.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_eval_bleu(hyp: &Path, reference: &Path, lowercase: bool) -> Result<(), CliError> {
    let mut hyps = read_lines_exact(hyp)?;
    let mut refs = read_lines_exact(reference)?;
    // Trailing blank line from a final newline is not a corpus line.
    if hyps.last().is_some_and(|l| l.is_empty()) {
        hyps.pop();
    }
    if refs.last().is_some_and(|l| l.is_empty()) {
        refs.pop();
    }
    if lowercase {
        hyps = hyps.iter().map(|l| l.to_lowercase()).collect();
        refs = refs.iter().map(|l| l.to_lowercase()).collect();
    }
    let report = bleu(&hyps, &refs)?;
    println!("{}", report.to_line());
    Ok(())
}

pub struct PipelineFlags {
    pub dis: bool,
    pub syn: bool,
    pub skip_style: bool,
    pub skip_merge: bool,
}

/// End-to-end: BPE, MLM pretraining, style training, merge training, then
/// tweet groups -> transferred sentences -> merged paragraphs.
pub fn cmd_pipeline(
    cfg: &PipelineConfig,
    input_groups: &Path,
    flags: &PipelineFlags,
    out_dir: &Path,
) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    let tweet_lines = read_lines(Path::new(&cfg.tweets_path))?;
    let news_lines = read_lines(Path::new(&cfg.news_path))?;
    let groups = read_groups(input_groups)?;
    if groups.is_empty() {
        return Err(CliError::Data(format!(
            "no tweet groups in {}",
            input_groups.display()
        )));
    }

    // Vocabulary over both corpora.
    let mut corpus = String::new();
    for line in tweet_lines.iter().chain(&news_lines) {
        corpus.push_str(line);
        corpus.push('\n');
    }
    let vocab = Vocab::train(&corpus, cfg.bpe_vocab_size)?;
    cfg.model.vocab_size = vocab.len();
    cfg.validate()?;

    let mut run = RunDir::create(out_dir, &cfg)?;
    vocab.save(&run.path("vocab.bpe"))?;

    let (tweet_kept, tweet_dropped) = filter_overlong(&tweet_lines, &vocab, cfg.model.max_len);
    let (news_kept, news_dropped) = filter_overlong(&news_lines, &vocab, cfg.model.max_len);
    if tweet_dropped + news_dropped > 0 {
        eprintln!(
            "pipeline: dropped {} overlength sentence(s)",
            tweet_dropped + news_dropped
        );
    }
    if tweet_kept.is_empty() || news_kept.is_empty() {
        return Err(CliError::Data(
            "pipeline: a corpus has no usable sentences".to_string(),
        ));
    }

    let corruptor = corruptor_of(&cfg, &tweet_kept);
    let tweet_streams = make_streams(&tweet_kept, &vocab, cfg.stream_len);
    let news_streams = make_streams(&news_kept, &vocab, cfg.stream_len);

    let model = StyleTransferModel::new(cfg.model.clone(), cfg.seed);
    let disc = Discriminator::new(cfg.model.d_model, cfg.disc_hidden_size, cfg.seed ^ 0x5117);
    let mut trainer = StyleTrainer::new(model, disc, adam_of(&cfg));
    trainer.noise = cfg.noise;
    trainer.mlm = cfg.mlm;

    let mut step_offset = 0u64;

    // Stage 1: MLM pretraining.
    if !tweet_streams.is_empty() || !news_streams.is_empty() {
        let data = DataSources {
            tweets: &tweet_kept,
            news: &news_kept,
            merge_pairs: &[],
            tweet_streams: &tweet_streams,
            news_streams: &news_streams,
            vocab: &vocab,
            corruptor: &corruptor,
        };
        let spec = ScheduleSpec {
            objectives: vec![Objective::Mlm],
            batch_size: cfg.batch_size,
            mlm_batch_size: cfg.mlm_batch_size,
            cycles: cfg.mlm_cycles,
            seed: cfg.seed,
            checkpoint_every: 0,
        };
        let records = run_schedule(&mut trainer, &spec, &data, None)?;
        run.append_records(&offset_records(records, &mut step_offset))?;
        trainer.model.initialize_decoder_from_encoder();
    } else {
        eprintln!("pipeline: corpora too small for MLM streams; skipping pretraining");
    }
    run.save_blocks(
        "mlm.ckpt",
        &trainer.model.cfg.clone(),
        &trainer.model.to_blocks(),
    )?;

    // Stage 2: style transfer training.
    if !flags.skip_style {
        let data = DataSources {
            tweets: &tweet_kept,
            news: &news_kept,
            merge_pairs: &[],
            tweet_streams: &[],
            news_streams: &[],
            vocab: &vocab,
            corruptor: &corruptor,
        };
        let spec = ScheduleSpec {
            objectives: style_objectives(flags.dis, flags.syn),
            batch_size: cfg.batch_size,
            mlm_batch_size: cfg.mlm_batch_size,
            cycles: cfg.style_cycles,
            seed: cfg.seed,
            checkpoint_every: 0,
        };
        let records = run_schedule(&mut trainer, &spec, &data, None)?;
        run.append_records(&offset_records(records, &mut step_offset))?;
        let mut blocks = trainer.model.to_blocks();
        blocks.extend(trainer.disc.to_blocks());
        run.save_blocks("style.ckpt", &trainer.model.cfg.clone(), &blocks)?;
    }

    // Stage 3: merge training, from the MLM initialization.
    let merge_model = if flags.skip_merge {
        None
    } else {
        let records = match std::fs::metadata(&cfg.clauses_path) {
            Ok(_) => {
                let (records, report) = ingest_clause_file(Path::new(&cfg.clauses_path))?;
                if report.dropped_too_few > 0 {
                    eprintln!(
                        "pipeline: dropped {} clause record(s) with fewer than two propositions",
                        report.dropped_too_few
                    );
                }
                records
            }
            Err(_) => generate_templated(cfg.templated_records, cfg.seed)?,
        };
        let (all_pairs, dropped) = build_merge_pairs(&records, &vocab);
        if dropped > 0 {
            eprintln!("pipeline: dropped {dropped} record(s) while building merge pairs");
        }
        verify_merge_pairs(&all_pairs, &vocab).map_err(CliError::Data)?;
        let max_inner = cfg.model.max_len.saturating_sub(2);
        let pairs: Vec<(String, String)> = all_pairs
            .into_iter()
            .filter(|p| {
                vocab.encode(&p.source).len() <= max_inner
                    && vocab.encode(&p.target).len() <= max_inner
            })
            .map(|p| (p.source, p.target))
            .collect();
        if pairs.is_empty() {
            return Err(CliError::Data(
                "pipeline: no merge pairs fit the model".to_string(),
            ));
        }

        let base = StyleTransferModel::from_blocks(
            trainer.model.cfg.clone(),
            &load_checkpoint(&run.path("mlm.ckpt"))?.1,
        )?;
        let merge_disc =
            Discriminator::new(cfg.model.d_model, cfg.disc_hidden_size, cfg.seed ^ 0x91a);
        let mut merge_trainer = StyleTrainer::new(base, merge_disc, adam_of(&cfg));
        let data = DataSources {
            tweets: &[],
            news: &[],
            merge_pairs: &pairs,
            tweet_streams: &[],
            news_streams: &[],
            vocab: &vocab,
            corruptor: &corruptor,
        };
        let spec = ScheduleSpec {
            objectives: vec![Objective::Merge],
            batch_size: cfg.batch_size,
            mlm_batch_size: cfg.mlm_batch_size,
            cycles: cfg.merge_cycles,
            seed: cfg.seed,
            checkpoint_every: 0,
        };
        let records = run_schedule(&mut merge_trainer, &spec, &data, None)?;
        run.append_records(&offset_records(records, &mut step_offset))?;
        run.save_blocks(
            "merge.ckpt",
            &merge_trainer.model.cfg.clone(),
            &merge_trainer.model.to_blocks(),
        )?;
        Some(merge_trainer.model)
    };

    // Stage 4: inference over the tweet groups.
    let mut transferred_lines = Vec::new();
    let mut paragraphs = Vec::with_capacity(groups.len());
    for group in &groups {
        let converted = if flags.skip_style {
            group.clone()
        } else {
            transfer_sentences(&trainer.model, &vocab, group)?
        };
        transferred_lines.extend(converted.clone());
        let paragraph = match &merge_model {
            Some(m) => pairwise_merge_inference(m, &vocab, &converted)?,
            None => converted.join(" "),
        };
        paragraphs.push(paragraph);
    }
    std::fs::write(
        run.path("transferred.txt"),
        transferred_lines.join("\n") + "\n",
    )?;
    std::fs::write(run.path("paragraphs.txt"), paragraphs.join("\n") + "\n")?;
    eprintln!(
        "pipeline complete: {} group(s) -> {}",
        groups.len(),
        run.path("paragraphs.txt").display()
    );
    Ok(())
}
