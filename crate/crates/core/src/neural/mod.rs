//! Bidirectional transformer encoder trained on the masked-word objective.

mod gradcheck;
mod network;
mod params;
mod train;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};
use crate::lm::{BackendKind, MaskedLm, MaskedQuery, PredictionDistribution};
use network::Batch;

pub use gradcheck::{grad_check, grad_check_with_step, GradCheckReport, GroupError};
pub use params::{LayerSlots, Layout, ParameterSet, Real, TensorSpec};
pub use train::{train, train_with, StepMetrics, TrainConfig, TrainedModel};

/// Shape of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub max_sequence_length: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    /// Desk-scale default: 4 layers, 4 heads, width 128, FFN 512, 100 positions.
    pub fn desk_scale(vocab_size: usize) -> Self {
        Self {
            layers: 4,
            heads: 4,
            model_dim: 128,
            ffn_dim: 512,
            max_sequence_length: 100,
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.model_dim == 0 || self.ffn_dim == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.max_sequence_length == 0 {
            return Err(Error::invalid("max_sequence_length must be positive"));
        }
        if self.vocab_size <= crate::corpus::NUM_SPECIALS {
            return Err(Error::invalid("vocab_size must exceed the special tokens"));
        }
        Ok(())
    }
}

/// Queries per forward pass when scoring many masked sequences.
const INFERENCE_CHUNK: usize = 128;

/// A trained (or loaded) single-precision encoder bound to one vocab.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    config: ModelConfig,
    params: ParameterSet<f32>,
    vocab_fingerprint: String,
}

impl NeuralModel {
    pub fn new(config: ModelConfig, params: ParameterSet<f32>, vocab: &Vocab) -> Result<Self> {
        Self::with_fingerprint(config, params, vocab.fingerprint().to_string())
    }

    pub(crate) fn with_fingerprint(
        config: ModelConfig,
        params: ParameterSet<f32>,
        vocab_fingerprint: String,
    ) -> Result<Self> {
        config.validate()?;
        if *params.layout() != Layout::new(&config) {
            return Err(Error::invalid(
                "parameter layout does not match model config",
            ));
        }
        Ok(Self {
            config,
            params,
            vocab_fingerprint,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet<f32> {
        &self.params
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.config.max_sequence_length {
            return Err(Error::SequenceTooLong {
                len,
                max: self.config.max_sequence_length,
            });
        }
        Ok(())
    }

    /// Distribution at every position of `token_ids`.
    pub fn forward(&self, token_ids: &[TokenId]) -> Result<Vec<PredictionDistribution>> {
        self.check_len(token_ids.len())?;
        if let Some(&bad) = token_ids
            .iter()
            .find(|&&t| t as usize >= self.config.vocab_size)
        {
            return Err(Error::invalid(format!("token id {bad} outside vocab")));
        }
        let batch = Batch {
            ids: token_ids,
            seq_len: token_ids.len(),
        };
        let hidden = network::encode(&self.params, &self.config, batch);
        let logits = network::head_logits(&self.params, hidden.view());
        logits
            .axis_iter(Axis(0))
            .map(|row| distribution(network::log_softmax_row(row)))
            .collect()
    }

    fn score_chunk(&self, queries: &[MaskedQuery]) -> Result<Vec<PredictionDistribution>> {
        let seq_len = queries[0].len();
        let ids: Vec<TokenId> = queries
            .iter()
            .flat_map(|q| q.token_ids().iter().copied())
            .collect();
        let batch = Batch { ids: &ids, seq_len };
        let hidden = network::encode(&self.params, &self.config, batch);
        let rows: Vec<usize> = queries
            .iter()
            .enumerate()
            .map(|(i, q)| i * seq_len + q.mask_position())
            .collect();
        let selected = hidden.select(Axis(0), &rows);
        let logits = network::head_logits(&self.params, selected.view());
        logits
            .axis_iter(Axis(0))
            .map(|row| distribution(network::log_softmax_row(row)))
            .collect()
    }
}

fn distribution(log_probs: Vec<f64>) -> Result<PredictionDistribution> {
    PredictionDistribution::from_weights(log_probs.into_iter().map(f64::exp).collect())
}

impl MaskedLm for NeuralModel {
    fn kind(&self) -> BackendKind {
        BackendKind::Neural
    }

    fn vocab_fingerprint(&self) -> &str {
        &self.vocab_fingerprint
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn conditional(&self, query: &MaskedQuery) -> Result<PredictionDistribution> {
        self.check_len(query.len())?;
        Ok(self.score_chunk(std::slice::from_ref(query))?.remove(0))
    }

    fn conditional_batch(&self, queries: &[MaskedQuery]) -> Result<Vec<PredictionDistribution>> {
        let mut out = Vec::with_capacity(queries.len());
        let mut start = 0;
        while start < queries.len() {
            let len = queries[start].len();
            self.check_len(len)?;
            let mut end = start + 1;
            while end < queries.len() && end - start < INFERENCE_CHUNK && queries[end].len() == len
            {
                end += 1;
            }
            out.extend(self.score_chunk(&queries[start..end])?);
            start = end;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{is_predictable, MASK};
    use crate::lm::{predict, token_loss};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vocab(n: usize) -> Vocab {
        Vocab::from_corpus_tokens((0..n).map(|i| format!("t{i}"))).unwrap()
    }

    fn small(v: &Vocab, seed: u64) -> NeuralModel {
        let config = ModelConfig {
            layers: 2,
            heads: 2,
            model_dim: 16,
            ffn_dim: 32,
            max_sequence_length: 12,
            vocab_size: v.len(),
        };
        let params = ParameterSet::init(
            Layout::new(&config),
            0.3,
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        NeuralModel::new(config, params, v).unwrap()
    }

    #[test]
    fn zero_parameters_give_uniform_predictions() {
        let v = vocab(7);
        let config = ModelConfig {
            layers: 1,
            heads: 2,
            model_dim: 4,
            ffn_dim: 8,
            max_sequence_length: 5,
            vocab_size: v.len(),
        };
        let mut params = ParameterSet::zeros(Layout::new(&config));
        let ob = params.layout().output_bias;
        params.tensor_mut(ob).fill(0.25);
        let m = NeuralModel::new(config, params, &v).unwrap();
        let support = (0..v.len() as TokenId)
            .filter(|&t| is_predictable(t))
            .count() as f64;
        for d in m.forward(&[4, MASK, 6, 7, 8]).unwrap() {
            for (id, &p) in d.probs().iter().enumerate() {
                let expect = if is_predictable(id as TokenId) {
                    1.0 / support
                } else {
                    0.0
                };
                assert!((p - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_overlong_sequences() {
        let v = vocab(6);
        let m = small(&v, 1);
        let ids = vec![4; 13];
        assert!(matches!(
            m.forward(&ids),
            Err(Error::SequenceTooLong { len: 13, max: 12 })
        ));
    }

    #[test]
    fn batched_and_single_queries_agree() {
        let v = vocab(9);
        let m = small(&v, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ids: Vec<TokenId> = (0..10)
            .map(|_| rng.random_range(4..v.len() as TokenId))
            .collect();
        let queries: Vec<_> = (0..10)
            .map(|p| MaskedQuery::masking(&ids, p).unwrap())
            .collect();
        let batched = m.conditional_batch(&queries).unwrap();
        for (q, b) in queries.iter().zip(&batched) {
            let single = predict(&m, &v, q).unwrap();
            for (x, y) in single.probs().iter().zip(b.probs()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn distributions_are_normalized() {
        let v = vocab(20);
        let m = small(&v, 4);
        for d in m.forward(&[4, 5, MASK, 7, 8, 9, 10, 11]).unwrap() {
            let s: f64 = d.probs().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(d
                .probs()
                .iter()
                .enumerate()
                .all(|(i, &p)| !is_predictable(i as TokenId) || p > 0.0));
        }
    }

    #[test]
    fn right_context_changes_the_prediction() {
        let v = vocab(12);
        let m = small(&v, 5);
        let a = MaskedQuery::masking(&[4, 5, 6, 7, 8, 9], 1).unwrap();
        let b = MaskedQuery::masking(&[4, 5, 6, 7, 8, 13], 1).unwrap();
        let pa = m.conditional(&a).unwrap();
        let pb = m.conditional(&b).unwrap();
        let diff: f64 = pa
            .probs()
            .iter()
            .zip(pb.probs())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6, "diff {diff}");
    }

    #[test]
    fn swapping_tokens_with_shared_position_embeddings() {
        let v = vocab(12);
        let mut m = small(&v, 6);
        let pos = m.params.layout().position_embedding;
        let d = m.config.model_dim;
        {
            let p = m.params.tensor_mut(pos);
            let row1: Vec<f32> = p[d..2 * d].to_vec();
            p[3 * d..4 * d].copy_from_slice(&row1);
        }
        let a = MaskedQuery::masking(&[4, 5, 6, 7, 8], 2).unwrap();
        let b = MaskedQuery::masking(&[4, 7, 6, 5, 8], 2).unwrap();
        let pa = m.conditional(&a).unwrap();
        let pb = m.conditional(&b).unwrap();
        for (x, y) in pa.probs().iter().zip(pb.probs()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn relabeling_vocabulary_preserves_loss() {
        let v = vocab(10);
        let m = small(&v, 7);
        // Swap ids 5 and 9 in both embeddings and output bias.
        let mut params = m.params.clone();
        let d = m.config.model_dim;
        let (tok, ob) = (params.layout().token_embedding, params.layout().output_bias);
        {
            let e = params.tensor_mut(tok);
            for j in 0..d {
                e.swap(5 * d + j, 9 * d + j);
            }
            params.tensor_mut(ob).swap(5, 9);
        }
        let relabeled = NeuralModel::new(m.config, params, &v).unwrap();
        let ids = [4, 5, 6, 9, 11, 5];
        let swapped: Vec<TokenId> = ids
            .iter()
            .map(|&t| match t {
                5 => 9,
                9 => 5,
                t => t,
            })
            .collect();
        for pos in 0..ids.len() {
            let q1 = MaskedQuery::masking(&ids, pos).unwrap();
            let q2 = MaskedQuery::masking(&swapped, pos).unwrap();
            let l1 = token_loss(&m.conditional(&q1).unwrap(), q1.gold_id().unwrap());
            let l2 = token_loss(&relabeled.conditional(&q2).unwrap(), q2.gold_id().unwrap());
            assert!((l1 - l2).abs() < 1e-5, "{l1} vs {l2}");
        }
    }
}
