use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{masked_loss_and_grad, Batch, Target};
use super::params::{Layout, ParameterSet};
use super::{ModelConfig, NeuralModel};
use crate::corpus::{EncodedCorpus, TokenId, Vocab, MASK, NUM_SPECIALS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub sequence_length: usize,
    /// Fraction of positions per sequence that enter the loss.
    pub mask_rate: f64,
    /// Of the selected positions: replaced by MASK, left intact, replaced by a random token.
    pub mask_prob: f64,
    pub keep_prob: f64,
    pub random_prob: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            steps: 10_000,
            learning_rate: 1e-3,
            warmup_steps: 1000,
            sequence_length: 100,
            mask_rate: 0.15,
            mask_prob: 0.8,
            keep_prob: 0.1,
            random_prob: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_std: 0.02,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.batch_size == 0 || self.sequence_length == 0 {
            return Err(Error::invalid(
                "batch_size and sequence_length must be positive",
            ));
        }
        if self.sequence_length > model.max_sequence_length {
            return Err(Error::SequenceTooLong {
                len: self.sequence_length,
                max: model.max_sequence_length,
            });
        }
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::invalid(format!(
                "mask_rate must lie in (0, 1), got {}",
                self.mask_rate
            )));
        }
        let parts = [self.mask_prob, self.keep_prob, self.random_prob];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid(
                "mask/keep/random proportions must be non-negative and sum to 1",
            ));
        }
        if !(self.learning_rate >= 0.0) || !(self.init_std > 0.0) {
            return Err(Error::invalid(
                "learning_rate must be >= 0 and init_std > 0",
            ));
        }
        Ok(())
    }

    /// Linear warmup to `learning_rate`, constant afterwards.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            self.learning_rate * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub masked_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: NeuralModel,
    pub metrics: Vec<StepMetrics>,
}

/// Adam moments for a parameter set.
pub(crate) struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(n: usize, config: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step_size = (lr * c2.sqrt() / c1) as f32;
        let eps = (self.epsilon * c2.sqrt()) as f32;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step_size * *m / (v.sqrt() + eps);
        }
    }
}

/// Builds one masked training batch from random windows of `stream`.
pub(crate) fn make_batch<R: Rng>(
    stream: &[TokenId],
    config: &TrainConfig,
    seq_len: usize,
    vocab_size: usize,
    rng: &mut R,
) -> (Vec<TokenId>, Vec<Target>) {
    let per_seq = ((config.mask_rate * seq_len as f64).round() as usize).clamp(1, seq_len);
    let mut ids = Vec::with_capacity(config.batch_size * seq_len);
    let mut targets = Vec::with_capacity(config.batch_size * per_seq);
    for b in 0..config.batch_size {
        let start = rng.random_range(0..=stream.len() - seq_len);
        let base = ids.len();
        ids.extend_from_slice(&stream[start..start + seq_len]);
        let mut chosen = index::sample(rng, seq_len, per_seq).into_vec();
        chosen.sort_unstable();
        for pos in chosen {
            let row = b * seq_len + pos;
            targets.push((row, ids[base + pos]));
            let u: f64 = rng.random();
            if u < config.mask_prob {
                ids[base + pos] = MASK;
            } else if u >= config.mask_prob + config.keep_prob {
                ids[base + pos] = rng.random_range(NUM_SPECIALS as TokenId..vocab_size as TokenId);
            }
        }
    }
    (ids, targets)
}

pub fn train(
    config: &ModelConfig,
    tconfig: &TrainConfig,
    corpus: &EncodedCorpus,
    vocab: &Vocab,
) -> Result<TrainedModel> {
    train_with(config, tconfig, corpus, vocab, |_| {})
}

/// Trains with Adam on the masked cross-entropy; `on_step` sees every step's metrics.
pub fn train_with<F: FnMut(&StepMetrics)>(
    config: &ModelConfig,
    tconfig: &TrainConfig,
    corpus: &EncodedCorpus,
    vocab: &Vocab,
    mut on_step: F,
) -> Result<TrainedModel> {
    config.validate()?;
    tconfig.validate(config)?;
    corpus.check_vocab(vocab)?;
    if config.vocab_size != vocab.len() {
        return Err(Error::invalid(format!(
            "model vocab_size {} differs from vocab of {}",
            config.vocab_size,
            vocab.len()
        )));
    }
    let stream: Vec<TokenId> = corpus
        .documents
        .iter()
        .flat_map(|d| d.ids.iter().copied())
        .collect();
    if stream.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let seq_len = tconfig.sequence_length.min(stream.len());

    let mut rng = ChaCha8Rng::seed_from_u64(tconfig.seed);
    let layout = Layout::new(config);
    let mut params = ParameterSet::<f32>::init(layout.clone(), tconfig.init_std, &mut rng);
    let mut grads = ParameterSet::<f32>::zeros(layout.clone());
    let mut adam = Adam::new(layout.len, tconfig);
    let mut metrics = Vec::with_capacity(tconfig.steps);

    for step in 0..tconfig.steps {
        let (ids, targets) = make_batch(&stream, tconfig, seq_len, vocab.len(), &mut rng);
        grads.fill_zero();
        let batch = Batch { ids: &ids, seq_len };
        let loss = masked_loss_and_grad(&params, config, batch, &targets, &mut grads);
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::Divergence { step, loss });
        }
        let lr = tconfig.learning_rate_at(step);
        adam.step(params.as_mut_slice(), grads.as_slice(), lr);
        let m = StepMetrics {
            step,
            masked_loss: loss,
            learning_rate: lr,
        };
        on_step(&m);
        metrics.push(m);
    }
    Ok(TrainedModel {
        model: NeuralModel::new(*config, params, vocab)?,
        metrics,
    })
}
