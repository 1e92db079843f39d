//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! gating failure. Every tolerance and budget is pinned below.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use corpus_contrast::audit::{
    bonferroni, evaluate_pair, global_mean_delta, improved_types_report, per_type_test,
    TokenLossRecord,
};
use corpus_contrast::checkpoint::Model;
use corpus_contrast::corpus::{build_vocab, Corpus, Document, Source, TokenId, BOS, EOS, MASK};
use corpus_contrast::count::fit_counts;
use corpus_contrast::gsn::{generate, SamplerConfig};
use corpus_contrast::infogain::{
    corpus_gain, corpus_gain_from, nats_to_bits, passage_gains_from_records, rank_passages,
    PassageGain,
};
use corpus_contrast::lm::MaskedQuery;
use corpus_contrast::neural::{grad_check, ModelConfig};
use corpus_contrast::pipeline::{Pipeline, PipelineConfig, Role};
use corpus_contrast::synthetic::{base_documents, fiction_documents, write_corpus_dir};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

const COUNT_TOLERANCE: f64 = 1e-12;
const COUNT_QUERIES: usize = 1000;
const COUNT_CORPUS_TOKENS: usize = 10_000;
const COUNT_BUDGET: Duration = Duration::from_secs(10);

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

const GSN_SAMPLES: usize = 100_000;
const GSN_WARMUP: usize = 40;
const GSN_TV: f64 = 0.01;
const GSN_BUDGET: Duration = Duration::from_secs(60);

const T_EXPECTED: f64 = 3.4641;
const P_EXPECTED: f64 = 0.0742;
const STAT_TOLERANCE: f64 = 1e-4;
const ORACLE_AGREEMENT: f64 = 1e-10;

const GAIN_NATS: f64 = 0.72;
const GAIN_BITS: f64 = 1.039;
const GAIN_BITS_ROUNDING: f64 = 5e-4;
const REPORTED_NATS: f64 = 0.71;
const REPORTED_BITS: f64 = 1.03;
const REPORTED_TOLERANCE: f64 = 0.02;

const CONSISTENCY_TOLERANCE: f64 = 1e-10;

const PLANTED_BUDGET: Duration = Duration::from_secs(300);

const DIRECTIONAL_BASE_WORDS: usize = 2_000_000;
const DIRECTIONAL_FICTION_WORDS: usize = 700_000;
const DIRECTIONAL_AUTHORS: usize = 60;
const DIRECTIONAL_STEPS: usize = 600;
const DIRECTIONAL_WARMUP: usize = 60;
const DIRECTIONAL_PASSAGES: usize = 100;
const DIRECTIONAL_BUDGET: Duration = Duration::from_secs(8 * 3600);
const PRONOUNS: [&str; 17] = [
    "i", "me", "my", "you", "your", "he", "him", "his", "she", "her", "it", "we", "us", "our",
    "they", "them", "their",
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Result<Outcome, String>;

fn main() {
    let criteria: [(&str, bool, Check); 9] = [
        ("count_backend_exactness", true, count_backend_exactness),
        ("gradient_correctness", true, gradient_correctness),
        ("gsn_stationarity", true, gsn_stationarity),
        ("statistics_oracle", true, statistics_oracle),
        (
            "information_gain_arithmetic",
            true,
            information_gain_arithmetic,
        ),
        ("cross_module_consistency", true, cross_module_consistency),
        ("end_to_end_determinism", true, end_to_end_determinism),
        ("planted_signal_audit", true, planted_signal_audit),
        ("directional_replication", true, directional_replication),
    ];
    // Optional name filters, as with the default test harness.
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, gating, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(o) if o.pass => println!("PASS {name} [{secs:.1}s] {}", o.detail),
            Ok(o) => {
                failed += gating as usize;
                println!("FAIL {name} [{secs:.1}s] {}", o.detail);
            }
            Err(e) => {
                failed += gating as usize;
                println!("FAIL {name} [{secs:.1}s] error: {e}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} gating criteria failed");
        std::process::exit(1);
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn doc(id: &str, author: &str, source: Source, text: String) -> Document {
    Document {
        id: id.into(),
        author: author.into(),
        source,
        text,
    }
}

fn within(start: Instant, budget: Duration) -> (bool, String) {
    let t = start.elapsed();
    (
        t < budget,
        format!("{:.2}s < {}s", t.as_secs_f64(), budget.as_secs()),
    )
}

// Count backend ---------------------------------------------------------

/// Rescans the encoded corpus for every query.
fn oracle_count(
    docs: &[Vec<TokenId>],
    v: usize,
    alpha: f64,
    left: TokenId,
    right: TokenId,
) -> Vec<f64> {
    let mut unigram = vec![0u64; v];
    let mut context = vec![0u64; v];
    let mut n = 0u64;
    for ids in docs {
        for i in 0..ids.len() {
            let l = if i == 0 { BOS } else { ids[i - 1] };
            let r = if i + 1 == ids.len() { EOS } else { ids[i + 1] };
            unigram[ids[i] as usize] += 1;
            n += 1;
            if l == left && r == right {
                context[ids[i] as usize] += 1;
            }
        }
    }
    let total: u64 = context.iter().sum();
    let support = (v - 3) as f64;
    (0..v)
        .map(|w| {
            let w = w as TokenId;
            if w == MASK || w == BOS || w == EOS {
                return 0.0;
            }
            let pu = (unigram[w as usize] as f64 + 1.0) / (n as f64 + support);
            (context[w as usize] as f64 + alpha * pu) / (total as f64 + alpha)
        })
        .collect()
}

fn zipf_corpus(tokens: usize, words: usize, doc_len: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (1..=words).map(|r| 1.0 / r as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut draw = || {
        let mut u = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return format!("w{i}");
            }
            u -= w;
        }
        format!("w{}", words - 1)
    };
    let all: Vec<String> = (0..tokens).map(|_| draw()).collect();
    let docs = all
        .chunks(doc_len)
        .enumerate()
        .map(|(i, c)| doc(&format!("d{i:03}"), "", Source::Base, c.join(" ")))
        .collect();
    Corpus::from_documents("zipf", docs).unwrap()
}

fn count_backend_exactness() -> Result<Outcome, String> {
    let start = Instant::now();
    let corpus = zipf_corpus(COUNT_CORPUS_TOKENS, 400, 97, 1);
    // min_count 2 leaves rare words as UNK so UNK contexts get exercised.
    let vocab = build_vocab(corpus.token_slices(), 1000, 2).map_err(err)?;
    let encoded = corpus.encode(&vocab);
    let alpha = 0.7;
    let model = fit_counts(&encoded, &vocab, alpha).map_err(err)?;
    let docs: Vec<Vec<TokenId>> = encoded.documents.iter().map(|d| d.ids.clone()).collect();
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for q in 0..COUNT_QUERIES {
        let (ids, pos) = if q % 2 == 0 {
            // Window taken from the corpus.
            let d = &docs[rng.random_range(0..docs.len())];
            let a = rng.random_range(0..d.len());
            let b = rng.random_range(a..d.len()) + 1;
            (d[a..b].to_vec(), rng.random_range(0..b - a))
        } else {
            let len = rng.random_range(1..12);
            let ids: Vec<TokenId> = (0..len)
                .map(|_| {
                    let t = rng.random_range(3..v as TokenId);
                    if t == 3 {
                        1
                    } else {
                        t
                    }
                })
                .collect();
            (ids, rng.random_range(0..len))
        };
        let left = if pos == 0 { BOS } else { ids[pos - 1] };
        let right = ids.get(pos + 1).copied().unwrap_or(EOS);
        let expect = oracle_count(&docs, v, alpha, left, right);
        let query = MaskedQuery::masking(&ids, pos).map_err(err)?;
        let got = model.predict_count(&query).map_err(err)?;
        for (g, e) in got.probs().iter().zip(&expect) {
            worst = worst.max((g - e).abs());
        }
    }
    let (fast, time) = within(start, COUNT_BUDGET);
    Ok(outcome(
        worst <= COUNT_TOLERANCE && fast,
        format!(
            "{COUNT_QUERIES} queries, {} tokens, V={v}: max |diff| {worst:.2e} <= {COUNT_TOLERANCE:e}; {time}",
            encoded.token_count()
        ),
    ))
}

// Gradients -------------------------------------------------------------

fn gradient_correctness() -> Result<Outcome, String> {
    let start = Instant::now();
    let config = ModelConfig {
        layers: 1,
        heads: 2,
        model_dim: 8,
        ffn_dim: 16,
        max_sequence_length: 6,
        vocab_size: 11,
    };
    let mut worst = 0.0f64;
    for seed in 0..3 {
        worst = worst.max(grad_check(&config, seed).map_err(err)?.max_relative_error);
    }
    let (fast, time) = within(start, GRAD_BUDGET);
    Ok(outcome(
        worst < GRAD_TOLERANCE && fast,
        format!("layers=1 dim=8 V=11 L=6, 3 seeds: max relative error {worst:.2e} < {GRAD_TOLERANCE:e}; {time}"),
    ))
}

// GSN ---------------------------------------------------------------------

fn gsn_stationarity() -> Result<Outcome, String> {
    let start = Instant::now();
    // Conditionals fixed by a hand-written corpus over {a, b}.
    let texts = [
        "a a", "a a", "a a", "a b", "a b", "a b", "a b", "a b", "b b", "b a a", "b a a", "a b b a",
        "b a", "a",
    ];
    let docs = texts
        .iter()
        .enumerate()
        .map(|(i, t)| doc(&format!("d{i:02}"), "", Source::Base, t.to_string()))
        .collect();
    let corpus = Corpus::from_documents("pair", docs).map_err(err)?;
    let vocab = build_vocab(corpus.token_slices(), 10, 1).map_err(err)?;
    if vocab.len() != 6 {
        return Err(format!(
            "expected 2 corpus types, vocab has {}",
            vocab.len()
        ));
    }
    let encoded = corpus.encode(&vocab);
    let alpha = 1.0;
    let model = fit_counts(&encoded, &vocab, alpha).map_err(err)?;
    let docs: Vec<Vec<TokenId>> = encoded.documents.iter().map(|d| d.ids.clone()).collect();

    // States: (x0, x1) over the support {UNK, a, b}.
    let support: [TokenId; 3] = [1, 4, 5];
    let index = |t: TokenId| support.iter().position(|&s| s == t).unwrap();
    let mut matrix = [[0.0f64; 9]; 9];
    for (s, row) in matrix.iter_mut().enumerate() {
        let x = [support[s / 3], support[s % 3]];
        let at0 = oracle_count(&docs, 6, alpha, BOS, x[1]);
        let at1 = oracle_count(&docs, 6, alpha, x[0], EOS);
        for &w in &support {
            row[index(w) * 3 + index(x[1])] += 0.5 * at0[w as usize];
            row[index(x[0]) * 3 + index(w)] += 0.5 * at1[w as usize];
        }
    }
    let step = |p: &[f64; 9]| {
        let mut q = [0.0; 9];
        for (i, pi) in p.iter().enumerate() {
            for (j, qj) in q.iter_mut().enumerate() {
                *qj += pi * matrix[i][j];
            }
        }
        q
    };
    let mut stationary = [1.0 / 9.0; 9];
    for _ in 0..10_000 {
        stationary = step(&stationary);
    }
    let residual = step(&stationary)
        .iter()
        .zip(&stationary)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    // Exact law after warmup from the sampler's uniform start over {a, b}^2.
    let mut after = [0.0; 9];
    for s in [4, 5, 7, 8] {
        after[s] = 0.25;
    }
    for _ in 0..GSN_WARMUP {
        after = step(&after);
    }
    let tv =
        |p: &[f64; 9], q: &[f64; 9]| 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let bias = tv(&after, &stationary);

    let config = SamplerConfig {
        seq_len: 2,
        warmup_steps: Some(GSN_WARMUP),
        samples: GSN_SAMPLES,
        temperature: 1.0,
        seed: 11,
    };
    let samples = generate(&model, &vocab, &config).map_err(err)?;
    let mut empirical = [0.0; 9];
    for s in &samples {
        empirical[index(s.token_ids[0]) * 3 + index(s.token_ids[1])] += 1.0 / GSN_SAMPLES as f64;
    }
    let distance = tv(&empirical, &stationary);
    let (fast, time) = within(start, GSN_BUDGET);
    Ok(outcome(
        distance <= GSN_TV && fast && residual < 1e-14,
        format!(
            "9-state chain, {GSN_SAMPLES} samples, warmup {GSN_WARMUP}: TV {distance:.4} <= {GSN_TV} \
             (warmup bias {bias:.1e}, eigen residual {residual:.1e}); {time}"
        ),
    ))
}

// Statistics ------------------------------------------------------------

fn statistics_oracle() -> Result<Outcome, String> {
    let records: Vec<TokenLossRecord> = [1.0, 2.0, 3.0]
        .iter()
        .enumerate()
        .map(|(i, d)| TokenLossRecord {
            passage_id: format!("p@{i}"),
            position: i,
            gold: 4,
            loss_a: 5.0 + d,
            loss_b: 5.0,
            correct_a: false,
            correct_b: false,
        })
        .collect();
    let stats = per_type_test(&records, 3).map_err(err)?;
    let s = stats.first().ok_or("no type tested")?;
    let t = s.t_statistic;
    let p = s.p_value;
    let dist = StudentsT::new(0.0, 1.0, 2.0).map_err(err)?;
    let p_statrs = 2.0 * (1.0 - dist.cdf(t.abs()));
    // df = 2 closed form.
    let p_closed = 1.0 - t.abs() / (t * t + 2.0).sqrt();
    let adjusted = bonferroni(0.001, 50);
    let pass = stats.len() == 1
        && (t - T_EXPECTED).abs() <= STAT_TOLERANCE
        && (p - P_EXPECTED).abs() <= STAT_TOLERANCE
        && (p - p_statrs).abs() <= ORACLE_AGREEMENT
        && (p - p_closed).abs() <= ORACLE_AGREEMENT
        && adjusted == 0.05;
    Ok(outcome(
        pass,
        format!(
            "t {t:.6} (want {T_EXPECTED} ± {STAT_TOLERANCE:e}), p {p:.6} (want {P_EXPECTED} ± {STAT_TOLERANCE:e}), \
             |p - statrs| {:.1e}, |p - closed form| {:.1e}, bonferroni(0.001, 50) = {adjusted}",
            (p - p_statrs).abs(),
            (p - p_closed).abs()
        ),
    ))
}

// Information gain ------------------------------------------------------

fn information_gain_arithmetic() -> Result<Outcome, String> {
    let (wiki, full) = (2.38, 1.66);
    let records: Vec<TokenLossRecord> = (0..10)
        .map(|i| TokenLossRecord {
            passage_id: format!("p@{}", i / 5),
            position: i % 5,
            gold: 4,
            loss_a: wiki,
            loss_b: full,
            correct_a: false,
            correct_b: false,
        })
        .collect();
    let gains: Vec<PassageGain> = (0..2)
        .map(|i| PassageGain::new(format!("p@{i}"), String::new(), wiki, full))
        .collect();
    let g = corpus_gain_from(&records, &gains).map_err(err)?;
    let pass = (g.token_mean_nats - GAIN_NATS).abs() < 1e-12
        && (g.token_mean_bits - GAIN_BITS).abs() < GAIN_BITS_ROUNDING
        && (g.token_mean_nats - REPORTED_NATS).abs() <= REPORTED_TOLERANCE
        && (g.token_mean_bits - REPORTED_BITS).abs() <= REPORTED_TOLERANCE
        && (nats_to_bits(GAIN_NATS) - g.token_mean_bits).abs() < 1e-15;
    Ok(outcome(
        pass,
        format!(
            "{wiki} - {full} = {:.6} nats = {:.6} bits (want {GAIN_NATS}, {GAIN_BITS} ± {GAIN_BITS_ROUNDING:e}; \
             within {REPORTED_TOLERANCE} of {REPORTED_NATS} / {REPORTED_BITS})",
            g.token_mean_nats, g.token_mean_bits
        ),
    ))
}

// Cross-module ----------------------------------------------------------

fn cross_module_consistency() -> Result<Outcome, String> {
    let root = tempfile::tempdir().map_err(err)?;
    write_corpus_dir(&root.path().join("base"), &base_documents(40_000, 3)).map_err(err)?;
    write_corpus_dir(
        &root.path().join("fiction"),
        &fiction_documents(20_000, 6, 4),
    )
    .map_err(err)?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for backend in ["count", "neural"] {
        let config = PipelineConfig::from_json(&format!(
            r#"{{
                "base_corpus": "base",
                "fiction_corpus": "fiction",
                "backends": {{"wiki": "{backend}", "full": "{backend}"}},
                "neural": {{"layers": 1, "heads": 2, "model_dim": 16, "ffn_dim": 32, "max_sequence_length": 24}},
                "train": {{"steps": 20, "warmup_steps": 5, "batch_size": 8, "sequence_length": 24}},
                "test": {{"passages": 20, "length": 24}},
                "seed": 9
            }}"#
        ))
        .map_err(err)?;
        let p = Pipeline::new(config, root.path(), root.path().join(backend)).map_err(err)?;
        p.prepare().map_err(err)?;
        p.train(Role::Wiki).map_err(err)?;
        p.train(Role::Full).map_err(err)?;
        let vocab = p.load_vocab().map_err(err)?;
        let wiki = p.load_model(Role::Wiki).map_err(err)?;
        let full = p.load_model(Role::Full).map_err(err)?;
        for source in [Source::Base, Source::Fiction] {
            let passages = p.load_passages(source).map_err(err)?;
            let records = evaluate_pair(&wiki, &full, &vocab, &passages).map_err(err)?;
            let audit = global_mean_delta(&records).map_err(err)?;
            let gain = corpus_gain(&wiki, &full, &vocab, &passages).map_err(err)?;
            worst = worst.max((audit - gain.token_mean_nats).abs());
            checked += 1;
        }
    }
    Ok(outcome(
        worst <= CONSISTENCY_TOLERANCE,
        format!("{checked} (backend, test set) pairs: max |audit mean delta - token-mean gain| {worst:.1e} <= {CONSISTENCY_TOLERANCE:e}"),
    ))
}

// Determinism -----------------------------------------------------------

fn end_to_end_determinism() -> Result<Outcome, String> {
    let root = tempfile::tempdir().map_err(err)?;
    write_corpus_dir(&root.path().join("base"), &base_documents(30_000, 5)).map_err(err)?;
    write_corpus_dir(
        &root.path().join("fiction"),
        &fiction_documents(15_000, 5, 6),
    )
    .map_err(err)?;
    let config = || {
        PipelineConfig::from_json(
            r#"{
                "base_corpus": "base",
                "fiction_corpus": "fiction",
                "backends": {"wiki": "neural", "full": "count"},
                "neural": {"layers": 1, "heads": 2, "model_dim": 16, "ffn_dim": 32, "max_sequence_length": 20},
                "train": {"steps": 15, "warmup_steps": 5, "batch_size": 8, "sequence_length": 20},
                "test": {"passages": 15, "length": 20},
                "sampler": {"seq_len": 8, "samples": 4, "warmup_steps": 16},
                "seed": 77
            }"#,
        )
    };
    let mut bytes = Vec::new();
    for run in ["first", "second"] {
        let p = Pipeline::new(config().map_err(err)?, root.path(), root.path().join(run))
            .map_err(err)?;
        p.run().map_err(err)?;
        bytes.push(fs::read(root.path().join(run).join("run_summary.json")).map_err(err)?);
    }
    Ok(outcome(
        bytes[0] == bytes[1],
        format!("neural + count run twice with master seed 77: run_summary.json {} bytes, identical = {}", bytes[0].len(), bytes[0] == bytes[1]),
    ))
}

// Planted signal --------------------------------------------------------

const PLANTED: &str = "zq";

/// Base-style text with a fixed sentence around the planted token spliced in.
fn planted_documents(count: usize, seed: u64, plant: bool) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = if plant { "planted" } else { "control" };
    base_documents(400 * count, seed)
        .into_iter()
        .take(count)
        .enumerate()
        .map(|(i, d)| {
            let mut text = String::new();
            for sentence in d.text.split_inclusive(". ") {
                text.push_str(sentence);
                if plant && rng.random_bool(0.3) {
                    text.push_str(&format!("A prize in the city is named after {PLANTED}. "));
                }
            }
            doc(&format!("{label}__doc{i:04}"), label, Source::Fiction, text)
        })
        .collect()
}

fn planted_signal_audit() -> Result<Outcome, String> {
    let start = Instant::now();
    let root = tempfile::tempdir().map_err(err)?;
    write_corpus_dir(&root.path().join("a"), &base_documents(150_000, 21)).map_err(err)?;
    let mut extra = planted_documents(40, 22, true);
    extra.extend(planted_documents(40, 23, false));
    write_corpus_dir(&root.path().join("extra"), &extra).map_err(err)?;
    let config = PipelineConfig::from_json(
        r#"{
            "base_corpus": "a",
            "fiction_corpus": "extra",
            "backends": {"wiki": "count", "full": "count"},
            "test": {"passages": 100},
            "seed": 3
        }"#,
    )
    .map_err(err)?;
    let p = Pipeline::new(config, root.path(), root.path().join("out")).map_err(err)?;
    let prep = p.prepare().map_err(err)?;
    if prep.mixture.fiction_tokens != prep.fiction_train_tokens {
        return Err("planted corpus was truncated by the mixture budget".into());
    }
    p.train(Role::Wiki).map_err(err)?;
    p.train(Role::Full).map_err(err)?;
    let vocab = p.load_vocab().map_err(err)?;
    let wiki = p.load_model(Role::Wiki).map_err(err)?;
    let full = p.load_model(Role::Full).map_err(err)?;
    let Model::Count(tables) = &wiki else {
        return Err("expected a count model".into());
    };
    let planted = vocab
        .id_of(PLANTED)
        .ok_or("planted token missing from vocab")?;
    if tables.unigram(planted) != 0 {
        return Err("planted token leaked into corpus A".into());
    }

    let passages = p.load_passages(Source::Fiction).map_err(err)?;
    let records = evaluate_pair(&wiki, &full, &vocab, &passages).map_err(err)?;
    let stats = per_type_test(&records, 30).map_err(err)?;
    let report = improved_types_report(&stats, &vocab, 5);
    let top = report
        .improved
        .first()
        .map(|r| r.token.clone())
        .unwrap_or_default();
    let instances = records.iter().filter(|r| r.gold == planted).count();

    // De-duplicate passages drawn twice before ranking.
    let mut seen = HashSet::new();
    let unique: Vec<_> = passages
        .iter()
        .filter(|x| seen.insert(x.id()))
        .cloned()
        .collect();
    let gains = passage_gains_from_records(&records, &unique).map_err(err)?;
    let ranked = rank_passages(&gains, 50).ranked;
    let holds: HashMap<String, bool> = unique
        .iter()
        .map(|x| (x.id(), x.token_ids.contains(&planted)))
        .collect();
    let k = holds.values().filter(|&&h| h).count();
    let top_k_hold = ranked.iter().take(k).all(|g| holds[&g.passage_id]);
    let (fast, time) = within(start, PLANTED_BUDGET);
    Ok(outcome(
        top == PLANTED && k > 0 && k < ranked.len() && top_k_hold && fast,
        format!(
            "top improved type {top:?} ({instances} instances, want {PLANTED:?}); the {k} of {} passages holding it \
             rank first = {top_k_hold}; {time}",
            ranked.len()
        ),
    ))
}

// Directional -----------------------------------------------------------

fn directional_replication() -> Result<Outcome, String> {
    let start = Instant::now();
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-directional");
    if root.exists() {
        fs::remove_dir_all(&root).map_err(err)?;
    }
    write_corpus_dir(
        &root.join("base"),
        &base_documents(DIRECTIONAL_BASE_WORDS, 0),
    )
    .map_err(err)?;
    write_corpus_dir(
        &root.join("fiction"),
        &fiction_documents(DIRECTIONAL_FICTION_WORDS, DIRECTIONAL_AUTHORS, 1),
    )
    .map_err(err)?;
    let config = PipelineConfig::from_json(&format!(
        r#"{{
            "base_corpus": "base",
            "fiction_corpus": "fiction",
            "mixture_ratio": 3,
            "train": {{"steps": {DIRECTIONAL_STEPS}, "warmup_steps": {DIRECTIONAL_WARMUP}}},
            "test": {{"passages": {DIRECTIONAL_PASSAGES}}},
            "sampler": {{"samples": 10}},
            "seed": 0
        }}"#
    ))
    .map_err(err)?;
    let p = Pipeline::new(config, &root, root.join("out")).map_err(err)?;
    let summary = p.run().map_err(err)?;
    let fiction = &summary.fiction_test;
    let base = &summary.base_test;
    let directional = fiction.mean_loss.full < fiction.mean_loss.wiki;
    let pronouns: Vec<&String> = base
        .top_improved
        .iter()
        .filter(|t| PRONOUNS.contains(&t.as_str()))
        .collect();
    let (fast, time) = within(start, DIRECTIONAL_BUDGET);
    Ok(outcome(
        directional && fast,
        format!(
            "(a, gating) fiction test loss full {:.3} < wiki {:.3}: {directional}; accuracy full {:.3} wiki {:.3}; \
             (b, advisory) pronouns in base top-{} improved: {:?} of {:?}; {} steps per model; {time}",
            fiction.mean_loss.full,
            fiction.mean_loss.wiki,
            fiction.accuracy.full,
            fiction.accuracy.wiki,
            base.top_improved.len(),
            pronouns,
            base.top_improved,
            DIRECTIONAL_STEPS,
        ),
    ))
}
