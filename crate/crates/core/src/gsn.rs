//! Text generation from a masked model by repeated mask-and-resample (GSN chain).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocab, MASK, NUM_SPECIALS};
use crate::error::{Error, Result};
use crate::lm::{check_model_vocab, MaskedLm, MaskedQuery, PredictionDistribution};

pub use crate::corpus::detokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub seq_len: usize,
    /// Defaults to `10 × seq_len` when absent.
    pub warmup_steps: Option<usize>,
    pub samples: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seq_len: 30,
            warmup_steps: None,
            samples: 50,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or(10 * self.seq_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 {
            return Err(Error::invalid("seq_len must be positive"));
        }
        if self.warmup() < self.seq_len {
            return Err(Error::invalid(format!(
                "warmup_steps {} is shorter than seq_len {}",
                self.warmup(),
                self.seq_len
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive and finite"));
        }
        Ok(())
    }
}

/// One chain: current tokens, steps taken and its private RNG.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub token_ids: Vec<TokenId>,
    pub step: usize,
    pub rng: ChaCha8Rng,
}

impl ChainState {
    /// Tokens drawn i.i.d. uniformly from the non-special ids.
    pub fn random(len: usize, vocab_size: usize, mut rng: ChaCha8Rng) -> Self {
        let token_ids = (0..len)
            .map(|_| rng.random_range(NUM_SPECIALS as TokenId..vocab_size as TokenId))
            .collect();
        Self {
            token_ids,
            step: 0,
            rng,
        }
    }
}

/// Reweights `dist` by `p^(1/temperature)`; computed in log space so that
/// small temperatures approach argmax without underflow.
pub fn apply_temperature(
    dist: &PredictionDistribution,
    temperature: f64,
) -> Result<PredictionDistribution> {
    if temperature == 1.0 {
        return Ok(dist.clone());
    }
    let max_log = dist.prob(dist.argmax()).ln();
    let weights = dist
        .probs()
        .iter()
        .map(|&p| {
            if p > 0.0 {
                ((p.ln() - max_log) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    PredictionDistribution::from_weights(weights)
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i as TokenId;
            }
        }
    }
    last as TokenId
}

/// Masks one uniformly chosen position and resamples it from the model.
pub fn gsn_step(model: &dyn MaskedLm, state: &mut ChainState, temperature: f64) -> Result<()> {
    let j = state.rng.random_range(0..state.token_ids.len());
    let mut ids = std::mem::take(&mut state.token_ids);
    ids[j] = MASK;
    let query = MaskedQuery::new(ids, j, None)?;
    let dist = apply_temperature(&model.conditional(&query)?, temperature)?;
    let mut ids = query.token_ids().to_vec();
    ids[j] = sample_categorical(dist.probs(), &mut state.rng);
    state.token_ids = ids;
    state.step += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub token_ids: Vec<TokenId>,
    pub text: String,
    pub warmup_steps: usize,
    pub seed: u64,
}

/// RNG of chain `index`: the sampler seed on its own ChaCha stream.
pub fn chain_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs one fresh chain per sample for the warmup period and emits its final state.
pub fn generate_ids(model: &dyn MaskedLm, config: &SamplerConfig) -> Result<Vec<Vec<TokenId>>> {
    config.validate()?;
    if model.vocab_size() <= NUM_SPECIALS {
        return Err(Error::invalid("vocab has no non-special tokens"));
    }
    let warmup = config.warmup();
    (0..config.samples)
        .into_par_iter()
        .map(|index| {
            let mut state = ChainState::random(
                config.seq_len,
                model.vocab_size(),
                chain_rng(config.seed, index),
            );
            for _ in 0..warmup {
                gsn_step(model, &mut state, config.temperature)?;
            }
            Ok(state.token_ids)
        })
        .collect()
}

pub fn generate(
    model: &dyn MaskedLm,
    vocab: &Vocab,
    config: &SamplerConfig,
) -> Result<Vec<Sample>> {
    check_model_vocab(model, vocab)?;
    Ok(generate_ids(model, config)?
        .into_iter()
        .enumerate()
        .map(|(index, token_ids)| Sample {
            index,
            text: detokenize(&vocab.decode(&token_ids)),
            token_ids,
            warmup_steps: config.warmup(),
            seed: config.seed,
        })
        .collect())
}

pub fn write_samples_jsonl(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples_text(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        writeln!(w, "{}", s.text)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document, Source, UNK};
    use crate::count::fit_counts;
    use crate::lm::BackendKind;

    /// Masked conditionals of an explicit joint over two positions of {4, 5}.
    struct JointModel {
        joint: [[f64; 2]; 2],
        fingerprint: String,
    }

    impl MaskedLm for JointModel {
        fn kind(&self) -> BackendKind {
            BackendKind::Uniform
        }
        fn vocab_fingerprint(&self) -> &str {
            &self.fingerprint
        }
        fn vocab_size(&self) -> usize {
            6
        }
        fn conditional(&self, q: &MaskedQuery) -> Result<PredictionDistribution> {
            let j = q.mask_position();
            let other = (q.token_ids()[1 - j] - 4) as usize;
            let mut w = vec![0.0; 6];
            for x in 0..2 {
                w[4 + x] = if j == 0 {
                    self.joint[x][other]
                } else {
                    self.joint[other][x]
                };
            }
            PredictionDistribution::from_weights(w)
        }
    }

    /// Exact random-scan transition matrix over all length-2 sequences of `states`.
    fn transition_matrix(model: &dyn MaskedLm, states: &[TokenId]) -> Vec<Vec<f64>> {
        let k = states.len();
        let index = |a: usize, b: usize| a * k + b;
        let mut t = vec![vec![0.0; k * k]; k * k];
        for a in 0..k {
            for b in 0..k {
                let from = index(a, b);
                for j in 0..2 {
                    let mut ids = vec![states[a], states[b]];
                    ids[j] = MASK;
                    let d = model
                        .conditional(&MaskedQuery::new(ids, j, None).unwrap())
                        .unwrap();
                    for (c, &s) in states.iter().enumerate() {
                        let to = if j == 0 { index(c, b) } else { index(a, c) };
                        t[from][to] += 0.5 * d.prob(s);
                    }
                }
            }
        }
        t
    }

    fn stationary(t: &[Vec<f64>]) -> Vec<f64> {
        let n = t.len();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..10_000 {
            let mut next = vec![0.0; n];
            for (i, row) in t.iter().enumerate() {
                for (j, &p) in row.iter().enumerate() {
                    next[j] += pi[i] * p;
                }
            }
            pi = next;
        }
        pi
    }

    fn empirical(samples: &[Vec<TokenId>], states: &[TokenId]) -> Vec<f64> {
        let k = states.len();
        let pos = |t: TokenId| states.iter().position(|&s| s == t).unwrap();
        let mut h = vec![0.0; k * k];
        for s in samples {
            h[pos(s[0]) * k + pos(s[1])] += 1.0;
        }
        h.iter().map(|c| c / samples.len() as f64).collect()
    }

    fn total_variation(p: &[f64], q: &[f64]) -> f64 {
        0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    #[test]
    fn chain_targets_a_true_joint() {
        let model = JointModel {
            joint: [[0.1, 0.2], [0.3, 0.4]],
            fingerprint: String::new(),
        };
        let pi = stationary(&transition_matrix(&model, &[4, 5]));
        for (p, q) in pi.iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!((p - q).abs() < 1e-12);
        }
        let config = SamplerConfig {
            seq_len: 2,
            warmup_steps: Some(40),
            samples: 20_000,
            temperature: 1.0,
            seed: 3,
        };
        let samples = generate_ids(&model, &config).unwrap();
        assert!(total_variation(&empirical(&samples, &[4, 5]), &pi) < 0.015);
    }

    #[test]
    fn count_chain_matches_transition_eigenvector() {
        let docs = vec![Document {
            id: "d".into(),
            author: String::new(),
            source: Source::Base,
            text: "a a b a b b a a c".into(),
        }];
        let corpus = Corpus::from_documents("toy", docs).unwrap();
        let vocab = Vocab::from_corpus_tokens(["a", "b"]).unwrap();
        let counts = fit_counts(&corpus.encode(&vocab), &vocab, 1.0).unwrap();
        let states = [UNK, 4, 5];
        let pi = stationary(&transition_matrix(&counts, &states));
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let config = SamplerConfig {
            seq_len: 2,
            warmup_steps: Some(40),
            samples: 20_000,
            temperature: 1.0,
            seed: 11,
        };
        let samples = generate_ids(&counts, &config).unwrap();
        assert!(total_variation(&empirical(&samples, &states), &pi) < 0.015);
    }

    #[test]
    fn single_position_chain_samples_the_conditional() {
        let docs = vec![Document {
            id: "d".into(),
            author: String::new(),
            source: Source::Base,
            text: "x y x x z".into(),
        }];
        let corpus = Corpus::from_documents("t", docs).unwrap();
        let vocab = Vocab::from_corpus_tokens(["x", "y", "z"]).unwrap();
        let counts = fit_counts(&corpus.encode(&vocab), &vocab, 1.0).unwrap();
        let target = counts.predict_context(crate::corpus::BOS, crate::corpus::EOS);
        let config = SamplerConfig {
            seq_len: 1,
            warmup_steps: Some(1),
            samples: 20_000,
            temperature: 1.0,
            seed: 5,
        };
        let samples = generate_ids(&counts, &config).unwrap();
        let mut h = vec![0.0; vocab.len()];
        for s in &samples {
            h[s[0] as usize] += 1.0 / samples.len() as f64;
        }
        assert!(total_variation(&h, &target) < 0.015);
    }

    #[test]
    fn low_temperature_is_argmax() {
        let d = PredictionDistribution::new(vec![0.0, 0.1, 0.0, 0.0, 0.6, 0.3]).unwrap();
        let cold = apply_temperature(&d, 1e-3).unwrap();
        assert!((cold.prob(4) - 1.0).abs() < 1e-12);
        assert_eq!(apply_temperature(&d, 1.0).unwrap(), d);
        let warm = apply_temperature(&d, 2.0).unwrap();
        assert!(warm.prob(5) / warm.prob(4) > 0.3 / 0.6);
    }

    #[test]
    fn determinism_and_independence_of_parallelism() {
        let docs = vec![Document {
            id: "d".into(),
            author: String::new(),
            source: Source::Base,
            text: "the cat sat on the mat . the dog ran .".into(),
        }];
        let corpus = Corpus::from_documents("t", docs).unwrap();
        let vocab = crate::corpus::build_vocab(corpus.token_slices(), 50, 1).unwrap();
        let counts = fit_counts(&corpus.encode(&vocab), &vocab, 0.5).unwrap();
        let config = SamplerConfig {
            seq_len: 8,
            samples: 12,
            seed: 9,
            ..Default::default()
        };
        let a = generate(&counts, &vocab, &config).unwrap();
        let b = generate(&counts, &vocab, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        // Serial recomputation of chain 7 gives the same emission.
        let mut state = ChainState::random(8, vocab.len(), chain_rng(9, 7));
        for _ in 0..config.warmup() {
            gsn_step(&counts, &mut state, 1.0).unwrap();
        }
        assert_eq!(state.token_ids, a[7].token_ids);
        assert!(a
            .iter()
            .all(|s| s.token_ids.iter().all(|&t| t != MASK && t != 2 && t != 3)));
        assert_eq!(a[0].warmup_steps, 80);
    }

    #[test]
    fn config_validation() {
        let mut c = SamplerConfig {
            seq_len: 10,
            warmup_steps: Some(5),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.warmup_steps = None;
        assert!(c.validate().is_ok());
        c.temperature = 0.0;
        assert!(c.validate().is_err());
    }
}
