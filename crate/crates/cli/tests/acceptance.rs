//! Acceptance suite: one test per criterion, each printing a pass line.
//! Run with `cargo test -p stylefuse-cli --test acceptance`.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use stylefuse::batch::{framed_rows, Batch, StyleId};
use stylefuse::corruptor::{drop_vowels, spell_noise, CorruptionSpec, Corruptor, Paraphraser};
use stylefuse::eval::{bleu, fleiss_kappa, welch_t, RatingMatrix};
use stylefuse::model::{BoundParams, Discriminator, GenMode, ModelConfig, StyleTransferModel};
use stylefuse::numerics::{gradcheck, AdamParams, Graph};
use stylefuse::objectives::{
    apply_mlm_mask, reconstruction_accuracy, shift_targets, MlmSpec, NoiseSpec, StyleTrainer,
};
use stylefuse::propositions::{
    build_merge_pairs, generate_templated, ingest_clause_lines, verify_merge_pairs, MergePair,
    PropositionRecord, RecordSource,
};
use stylefuse::tokenizer::{Vocab, BOS_ID, MASK_ID};

fn pass(n: usize, name: &str) {
    println!("acceptance criterion {n} ({name}): PASS");
}

// ── Criterion 1: gradient suite ─────────────────────────────────────────

fn check_layer(name: &str, shapes: &[Vec<usize>], build: impl Fn(&mut Graph, &[usize]) -> usize) {
    let values: Vec<Vec<f64>> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (0..s.iter().product::<usize>())
                .map(|j| ((j as f64 + 0.7) * (1.13 + i as f64 * 0.41)).sin() * 0.6)
                .collect()
        })
        .collect();
    let mut forward = |vals: &[Vec<f64>]| {
        let mut g = Graph::new();
        let ids: Vec<usize> = shapes
            .iter()
            .zip(vals)
            .map(|(s, v)| g.leaf(s.clone(), v.clone(), true))
            .collect();
        let loss = build(&mut g, &ids);
        g.scalar_value(loss)
    };
    let numeric = gradcheck::central_diff(&mut forward, &values, 1e-5);
    let mut g = Graph::new();
    let ids: Vec<usize> = shapes
        .iter()
        .zip(&values)
        .map(|(s, v)| g.leaf(s.clone(), v.clone(), true))
        .collect();
    let loss = build(&mut g, &ids);
    let grads = g.backward(loss);
    for (i, id) in ids.iter().enumerate() {
        let analytic = grads
            .get(*id)
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; values[i].len()]);
        let err = gradcheck::max_rel_error(&analytic, &numeric[i]);
        assert!(err < 1e-4, "layer {name}, input {i}: rel error {err}");
    }
}

#[test]
fn criterion_01_gradient_suite() {
    let start = Instant::now();

    // Every layer type individually.
    check_layer("matmul", &[vec![3, 4], vec![4, 5]], |g, ids| {
        let c = g.matmul(ids[0], ids[1]);
        let sq = g.mul(c, c);
        g.sum(sq)
    });
    check_layer(
        "batched_matmul",
        &[vec![2, 3, 4], vec![2, 4, 3]],
        |g, ids| {
            let c = g.matmul(ids[0], ids[1]);
            let sq = g.mul(c, c);
            g.sum(sq)
        },
    );
    check_layer("bias", &[vec![4, 3], vec![3]], |g, ids| {
        let y = g.add_bias(ids[0], ids[1]);
        let sq = g.mul(y, y);
        g.sum(sq)
    });
    check_layer("softmax", &[vec![3, 6]], |g, ids| {
        let y = g.softmax(ids[0]);
        let w = g.constant(vec![3, 6], (0..18).map(|i| (i as f64).cos()).collect());
        let m = g.mul(y, w);
        g.sum(m)
    });
    check_layer("layer_norm", &[vec![4, 8], vec![8], vec![8]], |g, ids| {
        let y = g.layer_norm(ids[0], ids[1], ids[2]);
        let sq = g.mul(y, y);
        g.sum(sq)
    });
    check_layer("gelu", &[vec![9]], |g, ids| {
        let y = g.gelu(ids[0]);
        g.sum(y)
    });
    check_layer("sigmoid_tanh", &[vec![7]], |g, ids| {
        let s = g.sigmoid(ids[0]);
        let t = g.tanh(ids[0]);
        let m = g.mul(s, t);
        g.sum(m)
    });
    check_layer("embedding", &[vec![6, 4]], |g, ids| {
        let e = g.embedding(ids[0], &[5, 0, 3, 3, 1], &[5]);
        let sq = g.mul(e, e);
        g.sum(sq)
    });
    check_layer("cross_entropy", &[vec![3, 7]], |g, ids| {
        g.cross_entropy(ids[0], &[2, 6, 0], &[1.0, 1.0, 0.0])
    });
    check_layer("bce", &[vec![5]], |g, ids| {
        g.bce_with_logits(ids[0], &[1.0, 0.0, 1.0, 1.0, 0.0])
    });

    // The composed tiny transformer plus GRU discriminator.
    let cfg = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_ff: 12,
        max_len: 8,
        vocab_size: 13,
        n_styles: 2,
        dropout_p: 0.0,
    };
    let base_model = StyleTransferModel::new(cfg, 31);
    let base_disc = Discriminator::new(8, 5, 32);
    let src = Batch::from_rows(vec![vec![1, 5, 6, 7, 2], vec![1, 8, 9, 2]], StyleId::Tweet);
    let tgt = Batch::from_rows(
        vec![vec![BOS_ID, 6, 7, 2], vec![BOS_ID, 9, 10, 11, 2]],
        StyleId::News,
    );

    let mut values: Vec<Vec<f64>> = Vec::new();
    base_model.for_each_param(&mut |_, t| values.push(t.data.clone()));
    base_disc.for_each_param(&mut |_, t| values.push(t.data.clone()));

    let run = |vals: &[Vec<f64>]| -> (f64, Vec<Vec<f64>>) {
        let mut model = base_model.clone();
        let mut disc = base_disc.clone();
        let mut i = 0;
        model.for_each_param_mut(&mut |_, t| {
            t.data = vals[i].clone();
            i += 1;
        });
        disc.for_each_param_mut(&mut |_, t| {
            t.data = vals[i].clone();
            i += 1;
        });
        let mut g = Graph::new();
        let pm = BoundParams::bind_model(&mut g, &model, true);
        let pd = BoundParams::bind_discriminator(&mut g, &disc, true);
        let enc = model
            .encode(&mut g, &pm, &src, StyleId::Tweet, None)
            .unwrap();
        let logits = model
            .decode_teacher_forced(&mut g, &pm, &enc, &tgt, StyleId::News, None)
            .unwrap();
        let (t, m) = shift_targets(&tgt);
        let ce = g.cross_entropy(logits, &t, &m);
        let dl = disc.logits(&mut g, &pd, enc.z, &enc.key_mask).unwrap();
        let bce = g.bce_with_logits(dl, &[1.0, 0.0]);
        let total = g.add(ce, bce);
        let value = g.scalar_value(total);
        let grads = g.backward(total);
        let mut analytic = Vec::new();
        model.for_each_param(&mut |n, t| {
            analytic.push(
                grads
                    .get(pm.id(n))
                    .map(|s| s.to_vec())
                    .unwrap_or_else(|| vec![0.0; t.numel()]),
            );
        });
        disc.for_each_param(&mut |n, t| {
            analytic.push(
                grads
                    .get(pd.id(n))
                    .map(|s| s.to_vec())
                    .unwrap_or_else(|| vec![0.0; t.numel()]),
            );
        });
        (value, analytic)
    };
    let (_, analytic) = run(&values);
    let mut forward = |vals: &[Vec<f64>]| run(vals).0;
    let numeric = gradcheck::central_diff(&mut forward, &values, 1e-5);
    for i in 0..values.len() {
        let err = gradcheck::max_rel_error(&analytic[i], &numeric[i]);
        assert!(err < 1e-4, "composed model parameter {i}: rel error {err}");
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "gradient suite took {elapsed:?}");
    pass(1, "gradient suite");
}

// ── Criterion 2: MLM statistics ─────────────────────────────────────────

#[test]
fn criterion_02_mlm_statistics() {
    let vocab_size = 600;
    let spec = MlmSpec::default();
    let windows = 520usize; // 520 windows x 256 tokens > 100k
    let mut selected = 0f64;
    let mut total = 0f64;
    let (mut masked, mut random, mut kept) = (0f64, 0f64, 0f64);
    for w in 0..windows {
        let stream: Vec<u32> = (0..256)
            .map(|i| ((w * 256 + i) % 500 + 60) as u32)
            .collect();
        let m = apply_mlm_mask(&stream, &spec, vocab_size, w as u64);
        total += stream.len() as f64;
        selected += m.positions.len() as f64;
        for (&pos, &orig) in m.positions.iter().zip(&m.originals) {
            let now = m.corrupted[pos];
            if now == MASK_ID {
                masked += 1.0;
            } else if now == orig {
                kept += 1.0;
            } else {
                random += 1.0;
            }
        }
    }
    assert!(total >= 100_000.0);
    let rate = selected / total;
    assert!((rate - 0.15).abs() < 0.01, "selection rate {rate}");
    assert!(
        (masked / selected - 0.8).abs() < 0.02,
        "mask mix {}",
        masked / selected
    );
    assert!(
        (random / selected - 0.1).abs() < 0.02,
        "random mix {}",
        random / selected
    );
    assert!(
        (kept / selected - 0.1).abs() < 0.02,
        "keep mix {}",
        kept / selected
    );
    pass(2, "MLM statistics");
}

// ── Criterion 3: objective identities and descent ───────────────────────

const DESCENT_SENTENCES: [&str; 8] = [
    "storm hits the coast hard",
    "rescue teams reach the town",
    "floods damage many homes",
    "people flee to higher ground",
    "winds tear the roofs away",
    "rivers rise over the banks",
    "aid arrives after the quake",
    "bridges close along the valley",
];

fn descent_fixture(lr: f64) -> (Vocab, StyleTrainer, Batch, Batch) {
    let corpus = DESCENT_SENTENCES.join("\n");
    let vocab = Vocab::train(&corpus, 160).unwrap();
    let cfg = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 32,
        d_ff: 48,
        max_len: 64,
        vocab_size: vocab.len(),
        n_styles: 2,
        dropout_p: 0.0,
    };
    let model = StyleTransferModel::new(cfg, 11);
    let disc = Discriminator::new(32, 16, 12);
    let adam = AdamParams {
        learning_rate: lr,
        ..AdamParams::default()
    };
    let trainer = StyleTrainer::new(model, disc, adam);
    let bx = Batch::from_rows(framed_rows(&DESCENT_SENTENCES, &vocab), StyleId::Tweet);
    let by = Batch::from_rows(framed_rows(&DESCENT_SENTENCES, &vocab), StyleId::News);
    (vocab, trainer, bx, by)
}

fn assert_descends(name: &str, mut step: impl FnMut() -> f64) {
    let mut prev = f64::INFINITY;
    for i in 0..10 {
        let loss = step();
        assert!(loss < prev, "{name} rose at step {i}: {loss} after {prev}");
        prev = loss;
    }
}

#[test]
fn criterion_03_identities_and_descent() {
    // Exact identity L_adv = -L_D on the same batch and parameters.
    let (_, trainer, bx, by) = descent_fixture(3e-4);
    let mut t_disc = trainer.clone();
    let mut t_adv = trainer.clone();
    let l_d = t_disc.step_discriminator(&bx, &by).unwrap();
    let (l_adv, _) = t_adv.step_adversarial(&bx, &by).unwrap();
    assert!(
        (l_adv + l_d).abs() <= 1e-12,
        "identity violated: L_adv {l_adv} vs -L_D {}",
        -l_d
    );

    // L_rec.
    let (_, mut t, bx, by) = descent_fixture(1e-3);
    assert_descends("L_rec", || t.step_denoise(&bx, &by, 7).unwrap());

    // L_D on frozen z.
    let (_, mut t, bx, by) = descent_fixture(3e-4);
    assert_descends("L_D", || t.step_discriminator(&bx, &by).unwrap());

    // L_adv (encoder side) against a warmed-up frozen discriminator.
    let (_, mut t, bx, by) = descent_fixture(3e-4);
    for _ in 0..30 {
        t.step_discriminator(&bx, &by).unwrap();
    }
    assert_descends("L_adv", || t.step_adversarial(&bx, &by).unwrap().0);

    // L_syn with a fixed per-step seed, so H(y) is a fixed batch.
    let (vocab, mut t, _bx, _by) = descent_fixture(1e-3);
    let corruptor = Corruptor::new(CorruptionSpec {
        seed: 3,
        ..CorruptionSpec::default()
    });
    let sentences: Vec<String> = DESCENT_SENTENCES.iter().map(|s| s.to_string()).collect();
    assert_descends("L_syn", || {
        t.step_synthetic(&sentences, &corruptor, &vocab, 19)
            .unwrap()
    });

    // L_m on a fixed pair batch.
    let (vocab, mut t, _bx, _by) = descent_fixture(1e-3);
    let src = Batch::from_rows(
        framed_rows(
            &[
                "storm hits the coast. rescue teams reach the town",
                "floods damage many homes. people flee",
            ],
            &vocab,
        ),
        StyleId::Tweet,
    );
    let tgt = Batch::from_rows(
        framed_rows(
            &[
                "storm hits the coast and rescue teams reach the town",
                "floods damage many homes",
            ],
            &vocab,
        ),
        StyleId::News,
    );
    assert_descends("L_m", || t.step_merge(&src, &tgt, 5).unwrap());

    // L_bt needs a model snapshot usable for generation: warm up with
    // denoising until greedy generations are stable, then take small steps
    // so the on-the-fly regeneration stays fixed across the check.
    let (_, mut warm, bx, by) = descent_fixture(3e-3);
    warm.noise = NoiseSpec {
        mask_p: 0.0,
        drop_p: 0.0,
        shuffle_window: 1,
    };
    for _ in 0..300 {
        warm.step_denoise(&bx, &by, 1).unwrap();
    }
    let mut t = StyleTrainer::new(
        warm.model.clone(),
        warm.disc.clone(),
        AdamParams {
            learning_rate: 1e-5,
            ..AdamParams::default()
        },
    );
    assert_descends("L_bt", || t.step_backtranslate(&bx, &by, 2).unwrap());

    pass(3, "objective identities and descent");
}

// ── Criterion 4: denoising overfit ──────────────────────────────────────

#[test]
fn criterion_04_denoising_overfit() {
    let start = Instant::now();
    let records = generate_templated(50, 404).unwrap();
    let sentences: Vec<String> = records.into_iter().map(|r| r.sentence).collect();
    let corpus = sentences.join("\n");
    let vocab = Vocab::train(&corpus, 320).unwrap();
    let cfg = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 48,
        d_ff: 96,
        max_len: 64,
        vocab_size: vocab.len(),
        n_styles: 2,
        dropout_p: 0.0,
    };
    let model = StyleTransferModel::new(cfg, 5);
    let disc = Discriminator::new(48, 16, 6);
    let adam = AdamParams {
        learning_rate: 2e-3,
        ..AdamParams::default()
    };
    let mut trainer = StyleTrainer::new(model, disc, adam);

    let refs: Vec<&str> = sentences.iter().map(|s| s.as_str()).collect();
    let rows = framed_rows(&refs, &vocab);
    let batches: Vec<(Batch, Batch)> = rows
        .chunks(8)
        .map(|chunk| {
            (
                Batch::from_rows(chunk.to_vec(), StyleId::Tweet),
                Batch::from_rows(chunk.to_vec(), StyleId::News),
            )
        })
        .collect();

    let mut steps = 0;
    let mut accuracy = 0.0;
    'outer: for epoch in 0..2000 {
        for (i, (bx, by)) in batches.iter().enumerate() {
            trainer
                .step_denoise(bx, by, (epoch * 131 + i) as u64)
                .unwrap();
            steps += 1;
            if steps % 100 == 0 {
                let mut correct_weighted = 0.0;
                let mut n = 0.0;
                for (bx, _) in &batches {
                    let acc = reconstruction_accuracy(&trainer.model, bx, StyleId::Tweet).unwrap();
                    let tokens: usize = bx.lens.iter().map(|l| l - 1).sum();
                    correct_weighted += acc * tokens as f64;
                    n += tokens as f64;
                }
                accuracy = correct_weighted / n;
                if accuracy >= 0.95 {
                    break 'outer;
                }
            }
            if steps >= 2000 {
                break 'outer;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(
        accuracy >= 0.95,
        "reconstruction accuracy {accuracy} after {steps} steps ({elapsed:?})"
    );
    assert!(steps <= 2000, "needed {steps} steps");
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}");
    pass(4, "denoising overfit");
}

// ── Criterion 5: merge oracle ───────────────────────────────────────────

#[test]
fn criterion_05_merge_oracle() {
    let start = Instant::now();
    let records = generate_templated(250, 505).unwrap();
    let mut corpus = String::new();
    for r in &records {
        corpus.push_str(&r.sentence);
        corpus.push('\n');
        for p in &r.propositions {
            corpus.push_str(p);
            corpus.push('\n');
        }
    }
    let vocab = Vocab::train(&corpus, 420).unwrap();
    let (pairs, dropped) = build_merge_pairs(&records, &vocab);
    assert_eq!(dropped, 0);
    assert_eq!(pairs.len(), 250);
    let (train, held): (&[MergePair], &[MergePair]) = (&pairs[..200], &pairs[200..]);

    let cfg = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 48,
        d_ff: 96,
        max_len: 96,
        vocab_size: vocab.len(),
        n_styles: 2,
        dropout_p: 0.0,
    };
    let model = StyleTransferModel::new(cfg, 50);
    let disc = Discriminator::new(48, 16, 51);
    let adam = AdamParams {
        learning_rate: 2e-3,
        ..AdamParams::default()
    };
    let mut trainer = StyleTrainer::new(model, disc, adam);

    let to_batches = |pairs: &[MergePair]| -> Vec<(Batch, Batch)> {
        pairs
            .chunks(8)
            .map(|chunk| {
                let srcs: Vec<&str> = chunk.iter().map(|p| p.source.as_str()).collect();
                let tgts: Vec<&str> = chunk.iter().map(|p| p.target.as_str()).collect();
                (
                    Batch::from_rows(framed_rows(&srcs, &vocab), StyleId::Tweet),
                    Batch::from_rows(framed_rows(&tgts, &vocab), StyleId::News),
                )
            })
            .collect()
    };
    let train_batches = to_batches(train);

    let exact_match_rate = |model: &StyleTransferModel, pairs: &[MergePair]| -> f64 {
        let mut exact = 0usize;
        for chunk in pairs.chunks(8) {
            let srcs: Vec<&str> = chunk.iter().map(|p| p.source.as_str()).collect();
            let batch = Batch::from_rows(framed_rows(&srcs, &vocab), StyleId::Tweet);
            let z = model.encode_values(&batch, StyleId::Tweet).unwrap();
            let out = model
                .generate(&z, StyleId::News, 90, GenMode::Greedy)
                .unwrap();
            for (ids, pair) in out.iter().zip(chunk) {
                if vocab.decode(ids).unwrap() == pair.target {
                    exact += 1;
                }
            }
        }
        exact as f64 / pairs.len() as f64
    };

    let mut steps = 0;
    let mut train_exact = 0.0;
    'outer: for epoch in 0..400 {
        for (i, (src, tgt)) in train_batches.iter().enumerate() {
            trainer
                .step_merge(src, tgt, (epoch * 997 + i) as u64)
                .unwrap();
            steps += 1;
            if steps % 500 == 0 {
                train_exact = exact_match_rate(&trainer.model, train);
                if train_exact >= 0.95 {
                    break 'outer;
                }
            }
            if steps >= 6000 {
                break 'outer;
            }
        }
    }
    assert!(
        train_exact >= 0.95,
        "train exact match {train_exact} after {steps} steps"
    );

    // Held-out token F1 over pairs from the same templates.
    let mut f1_sum = 0.0;
    for chunk in held.chunks(8) {
        let srcs: Vec<&str> = chunk.iter().map(|p| p.source.as_str()).collect();
        let batch = Batch::from_rows(framed_rows(&srcs, &vocab), StyleId::Tweet);
        let z = trainer.model.encode_values(&batch, StyleId::Tweet).unwrap();
        let out = trainer
            .model
            .generate(&z, StyleId::News, 90, GenMode::Greedy)
            .unwrap();
        for (ids, pair) in out.iter().zip(chunk) {
            let hyp = vocab.decode(ids).unwrap();
            f1_sum += token_f1(&hyp, &pair.target);
        }
    }
    let f1 = f1_sum / held.len() as f64;
    assert!(f1 >= 0.8, "held-out token F1 {f1}");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    pass(5, "merge oracle");
}

fn token_f1(hyp: &str, target: &str) -> f64 {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let t: Vec<&str> = target.split_whitespace().collect();
    if h.is_empty() || t.is_empty() {
        return 0.0;
    }
    let mut t_counts = std::collections::HashMap::new();
    for w in &t {
        *t_counts.entry(*w).or_insert(0i64) += 1;
    }
    let mut overlap = 0i64;
    for w in &h {
        if let Some(c) = t_counts.get_mut(*w) {
            if *c > 0 {
                overlap += 1;
                *c -= 1;
            }
        }
    }
    let p = overlap as f64 / h.len() as f64;
    let r = overlap as f64 / t.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

// ── Criterion 6: corruptor statistics ───────────────────────────────────

#[test]
fn criterion_06_corruptor_statistics() {
    // Exact rule fixtures.
    assert_eq!(drop_vowels("storm"), "strm");
    assert_eq!(drop_vowels("peshawar"), "pshwr");
    // Forced corruption of "storm" must always be an adjacent swap, a
    // single-character drop, or the vowel-drop; all three modes occur.
    let swaps: HashSet<String> = (0..4)
        .map(|i| {
            let mut c: Vec<char> = "storm".chars().collect();
            c.swap(i, i + 1);
            c.into_iter().collect()
        })
        .collect();
    let drops: HashSet<String> = (0..5)
        .map(|i| {
            "storm"
                .chars()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, c)| c)
                .collect()
        })
        .collect();
    let (mut saw_swap, mut saw_drop, mut saw_vowel) = (false, false, false);
    for seed in 0..300 {
        let out = spell_noise("storm", 1.0, seed);
        if out == "strm" {
            saw_vowel = true;
        } else if swaps.contains(&out) {
            saw_swap = true;
        } else if drops.contains(&out) {
            saw_drop = true;
        } else {
            panic!("spell_noise produced {out:?}, outside every mode's image");
        }
    }
    assert!(saw_swap && saw_drop && saw_vowel);

    // The three 15% rates over 10k sentences through the full pipeline.
    let mut corruptor = Corruptor::new(CorruptionSpec {
        seed: 66,
        ..CorruptionSpec::default()
    });
    corruptor.paraphraser = Paraphraser::Identity;
    let sentence = "rescue teams reached peshawar after the storm";
    let pool = corruptor.spec.hashtag_pool.clone();
    let n = 10_000;
    let (mut tagged, mut survived, mut injected, mut spelled) = (0f64, 0f64, 0f64, 0f64);
    for salt in 0..n {
        let out = corruptor.corrupt(sentence, salt);
        if out
            .split_whitespace()
            .any(|t| t == "peshawar" || t == "#peshawar")
        {
            survived += 1.0;
            if out.split_whitespace().any(|t| t == "#peshawar") {
                tagged += 1.0;
            }
        }
        if out.split_whitespace().any(|t| pool.iter().any(|p| p == t)) {
            injected += 1.0;
        }
        if !out.split_whitespace().any(|t| t == "storm") {
            spelled += 1.0;
        }
    }
    let nf = n as f64;
    assert!(
        (tagged / survived - 0.15).abs() < 0.02,
        "entity rate {}",
        tagged / survived
    );
    assert!(
        (injected / nf - 0.15).abs() < 0.02,
        "injection rate {}",
        injected / nf
    );
    assert!(
        (spelled / nf - 0.15).abs() < 0.02,
        "spelling rate {}",
        spelled / nf
    );
    pass(6, "corruptor statistics");
}

// ── Criterion 7: BLEU oracle ────────────────────────────────────────────

#[test]
fn criterion_07_bleu_oracle() {
    let lines = |v: &[&str]| -> Vec<String> { v.iter().map(|s| s.to_string()).collect() };
    // Five fixtures frozen from the independent reimplementation of the
    // published multi-bleu algorithm (crates/core/tests/oracle/).
    let cases: Vec<(Vec<String>, Vec<String>, f64)> = vec![
        (
            lines(&[
                "the storm hit the coast at dawn",
                "rescue teams reached the town",
            ]),
            lines(&[
                "the storm hit the coast at dawn",
                "rescue teams reached the town",
            ]),
            100.00,
        ),
        (lines(&["the the the"]), lines(&["the cat"]), 0.00),
        (
            lines(&[
                "taliban gunmen stormed a school in pakistan killing at least 126",
                "police said the attack is over and all attackers are dead",
                "thousands were evacuated as the cyclone neared the coast",
            ]),
            lines(&[
                "taliban gunmen stormed a school in pakistan , killing at least 126 people",
                "police stated that the attack was over as all six attackers were dead",
                "thousands of people were evacuated as the cyclone approached the east coast",
            ]),
            38.35,
        ),
        (
            lines(&["the storm hit", "teams reached the town quickly today"]),
            lines(&[
                "the storm hit the northern coast",
                "rescue teams reached the town quickly today",
            ]),
            64.12,
        ),
        (
            lines(&["storm coast hit the"]),
            lines(&["the storm hit coast"]),
            0.00,
        ),
    ];
    for (i, (hyp, reference, expect)) in cases.iter().enumerate() {
        let report = bleu(hyp, reference).unwrap();
        let rounded = (report.score * 100.0).round() / 100.0;
        assert!(
            (rounded - expect).abs() < 1e-9,
            "fixture {i}: got {rounded}, oracle says {expect}"
        );
    }
    pass(7, "BLEU oracle");
}

// ── Criterion 8: kappa / t-test oracles ─────────────────────────────────

#[test]
fn criterion_08_kappa_ttest_oracles() {
    let m = RatingMatrix::new(vec![vec![3, 1, 1], vec![0, 5, 0], vec![1, 1, 3]]).unwrap();
    let kappa = fleiss_kappa(&m).unwrap();
    assert!((kappa - 13.0 / 48.0).abs() < 1e-6, "kappa {kappa}");

    let perfect = RatingMatrix::new(vec![vec![4, 0], vec![0, 4]]).unwrap();
    assert!((fleiss_kappa(&perfect).unwrap() - 1.0).abs() < 1e-12);

    let a = [
        27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4,
    ];
    let b = [
        27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 30.5,
    ];
    let r = welch_t(&a, &b).unwrap();
    assert!((r.t - -2.7077777791033193).abs() < 1e-9, "t {}", r.t);
    assert!((r.df - 26.9527465032703).abs() < 1e-9, "df {}", r.df);
    assert!(
        (r.p_two_sided - 0.011616192002630874).abs() < 1e-6,
        "p {}",
        r.p_two_sided
    );

    let r2 = welch_t(
        &[1.0, 2.0, 3.0, 4.0, 5.0],
        &[2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
    )
    .unwrap();
    assert!((r2.t - -2.3763541031440183).abs() < 1e-9);
    assert!((r2.df - 6.9722557297949335).abs() < 1e-9);
    assert!((r2.p_two_sided - 0.049284338206730526).abs() < 1e-6);
    pass(8, "kappa and t-test oracles");
}

// ── Criterion 9: data rules ─────────────────────────────────────────────

#[test]
fn criterion_09_merge_data_rules() {
    let vocab = {
        let mut corpus = String::new();
        for r in generate_templated(150, 9).unwrap() {
            corpus.push_str(&r.sentence);
            corpus.push('\n');
        }
        Vocab::train(&corpus, 400).unwrap()
    };

    // Shipped clause corpus.
    let shipped = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/merge_clauses.tsv"),
    )
    .expect("shipped clause corpus");
    let (records, _) = ingest_clause_lines(&shipped);
    assert!(records.len() >= 300);

    // Plus templated and adversarial records.
    let mut all = records;
    all.extend(generate_templated(300, 91).unwrap());
    all.push(PropositionRecord {
        sentence: "rescue teams reached the village repeatedly".to_string(),
        propositions: (0..300)
            .map(|i| format!("rescue teams reached the village {i} times"))
            .collect(),
        source: RecordSource::Ingested,
    });
    all.push(PropositionRecord {
        sentence: "dropped for having one proposition".to_string(),
        propositions: vec!["only one".to_string()],
        source: RecordSource::Ingested,
    });

    let (pairs, dropped) = build_merge_pairs(&all, &vocab);
    assert_eq!(dropped, 1, "exactly the single-proposition record drops");
    verify_merge_pairs(&pairs, &vocab).unwrap();
    // Re-scan directly: every pair satisfies both rules.
    for pair in &pairs {
        assert!(vocab.encode(&pair.source).len() <= 512);
        assert!(pair.source.trim_end_matches('.').split(". ").count() >= 2);
    }
    pass(9, "merge data rules");
}

// ── Criterion 10: pipeline determinism ──────────────────────────────────

#[test]
fn criterion_10_pipeline_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    std::fs::write(
        &cfg_path,
        format!(
            "seed = 77\nmodel.n_layers = 2\nmodel.n_heads = 2\nmodel.d_model = 32\n\
             model.d_ff = 64\nmodel.max_len = 96\ndata.stream_len = 64\n\
             data.bpe_vocab_size = 400\ndata.templated_records = 40\n\
             schedule.mlm_cycles = 3\nschedule.style_cycles = 3\nschedule.merge_cycles = 5\n\
             train.learning_rate = 0.001\n\
             paths.tweets = {0}/tweets.txt\npaths.news = {0}/news.txt\n\
             paths.clauses = {0}/merge_clauses.tsv\n",
            data_dir.display()
        ),
    )
    .unwrap();
    let input = data_dir.join("example_tweets.txt");

    let run = |out: &Path| {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_stylefuse"))
            .args([
                "pipeline",
                "--config",
                cfg_path.to_str().unwrap(),
                "--input",
                input.to_str().unwrap(),
                "--dis",
                "--syn",
                "--out-dir",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success(), "pipeline run failed");
    };
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    run(&out1);
    run(&out2);

    for name in [
        "config.cfg",
        "VERSIONS",
        "metrics.jsonl",
        "vocab.bpe",
        "mlm.ckpt",
        "style.ckpt",
        "merge.ckpt",
        "transferred.txt",
        "paragraphs.txt",
    ] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // Format check: one paragraph per input group.
    let paragraphs = std::fs::read_to_string(out1.join("paragraphs.txt")).unwrap();
    assert_eq!(paragraphs.lines().count(), 2);
    pass(10, "pipeline determinism");
}

// ── Criterion 11: directional adversarial check ─────────────────────────

/// Sentence pool for the planted-marker corpus.
fn marker_corpus(seed: u64, n: usize) -> (Vec<String>, Vec<String>) {
    let records = generate_templated(n, seed).unwrap();
    let news: Vec<String> = records.into_iter().map(|r| r.sentence).collect();
    // Tweets are the same sentence distribution with a planted marker token.
    let records2 = generate_templated(n, seed ^ 0xabc).unwrap();
    let tweets: Vec<String> = records2
        .into_iter()
        .map(|r| format!("rt {}", r.sentence))
        .collect();
    (tweets, news)
}

/// Held-out accuracy of a run's own discriminator on its encoder outputs.
fn disc_accuracy(trainer: &StyleTrainer, vocab: &Vocab, held: (&[String], &[String])) -> f64 {
    let encode_style =
        |sentences: &[String], style: StyleId| -> Vec<stylefuse::model::ContentVectors> {
            sentences
                .chunks(8)
                .map(|chunk| {
                    let refs: Vec<&str> = chunk.iter().map(|s| s.as_str()).collect();
                    let batch = Batch::from_rows(framed_rows(&refs, vocab), style);
                    trainer.model.encode_values(&batch, style).unwrap()
                })
                .collect()
        };
    let mut correct = 0usize;
    let mut total = 0usize;
    for z in encode_style(held.0, StyleId::Tweet) {
        for p in trainer.disc.probabilities(&z).unwrap() {
            total += 1;
            if p > 0.5 {
                correct += 1;
            }
        }
    }
    for z in encode_style(held.1, StyleId::News) {
        for p in trainer.disc.probabilities(&z).unwrap() {
            total += 1;
            if p < 0.5 {
                correct += 1;
            }
        }
    }
    correct as f64 / total as f64
}

#[test]
fn criterion_11_adversarial_alignment_trend() {
    // Both runs train the discriminator on encoder outputs; only the
    // adversarial run also trains the encoder on the reverse objective.
    // If Eq. 4 aligns the z distributions, the co-trained discriminator's
    // held-out accuracy must fall well below the unopposed run's.
    let mut drops = Vec::new();
    for seed in [1u64, 2, 3] {
        let (tweets, news) = marker_corpus(1000 + seed, 60);
        let (held_tweets, held_news) = marker_corpus(2000 + seed, 24);
        let corpus: String = tweets
            .iter()
            .chain(&news)
            .cloned()
            .collect::<Vec<_>>()
            .join("\n");
        let vocab = Vocab::train(&corpus, 380).unwrap();
        let cfg = ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 32,
            d_ff: 64,
            max_len: 64,
            vocab_size: vocab.len(),
            n_styles: 2,
            dropout_p: 0.0,
        };

        let train_run = |adversarial: bool| -> StyleTrainer {
            let model = StyleTransferModel::new(cfg.clone(), seed);
            let disc = Discriminator::new(cfg.d_model, 16, seed ^ 0x9);
            let adam = AdamParams {
                learning_rate: 1e-3,
                ..AdamParams::default()
            };
            let mut trainer = StyleTrainer::new(model, disc, adam);
            let make = |sentences: &[String], style: StyleId, i: usize| {
                let chunk: Vec<&str> = sentences
                    .iter()
                    .cycle()
                    .skip(i * 4 % sentences.len())
                    .take(4)
                    .map(|s| s.as_str())
                    .collect();
                Batch::from_rows(framed_rows(&chunk, &vocab), style)
            };
            for i in 0..250 {
                let bx = make(&tweets, StyleId::Tweet, i);
                let by = make(&news, StyleId::News, i);
                trainer.step_denoise(&bx, &by, i as u64).unwrap();
                trainer.step_discriminator(&bx, &by).unwrap();
                if adversarial {
                    trainer.step_adversarial(&bx, &by).unwrap();
                }
            }
            trainer
        };

        let plain = train_run(false);
        let adv = train_run(true);
        let acc_plain = disc_accuracy(&plain, &vocab, (&held_tweets, &held_news));
        let acc_adv = disc_accuracy(&adv, &vocab, (&held_tweets, &held_news));
        let drop = acc_plain - acc_adv;
        println!(
            "criterion 11 seed {seed}: discriminator held-out accuracy {acc_plain:.3} \
             unopposed vs {acc_adv:.3} adversarial (drop {drop:.3})"
        );
        drops.push(drop);
    }
    let mean = drops.iter().sum::<f64>() / drops.len() as f64;
    assert!(
        mean >= 0.15,
        "mean held-out accuracy drop {mean:.3} below 0.15 (per-seed: {drops:?})"
    );
    pass(11, "directional adversarial check");
}
