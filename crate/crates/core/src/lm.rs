//! The masked-language-model interface shared by every backend.

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocab, MASK};
use crate::error::{Error, Result};

/// A sequence with exactly one masked position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedQuery {
    token_ids: Vec<TokenId>,
    mask_position: usize,
    gold_id: Option<TokenId>,
}

impl MaskedQuery {
    /// Wraps a sequence that already holds `MASK` at `mask_position` and nowhere else.
    pub fn new(
        token_ids: Vec<TokenId>,
        mask_position: usize,
        gold_id: Option<TokenId>,
    ) -> Result<Self> {
        if token_ids.get(mask_position) != Some(&MASK) {
            return Err(Error::invalid(format!(
                "position {mask_position} does not hold the mask token"
            )));
        }
        if token_ids.iter().filter(|&&t| t == MASK).count() != 1 {
            return Err(Error::invalid("query must contain exactly one mask token"));
        }
        Ok(Self {
            token_ids,
            mask_position,
            gold_id,
        })
    }

    /// Masks `position` of `ids`, keeping the original token as gold.
    pub fn masking(ids: &[TokenId], position: usize) -> Result<Self> {
        let gold = *ids
            .get(position)
            .ok_or_else(|| Error::invalid(format!("position {position} out of range")))?;
        let mut token_ids = ids.to_vec();
        token_ids[position] = MASK;
        Self::new(token_ids, position, Some(gold))
    }

    pub fn token_ids(&self) -> &[TokenId] {
        &self.token_ids
    }

    pub fn mask_position(&self) -> usize {
        self.mask_position
    }

    pub fn gold_id(&self) -> Option<TokenId> {
        self.gold_id
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// A normalized distribution over the vocabulary.
///
/// Entries are non-negative and sum to one within 1e-9. Backends may leave
/// `MASK`, `BOS` and `EOS` at zero; every other id gets positive mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDistribution {
    probs: Vec<f64>,
}

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

impl PredictionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "distribution has negative or non-finite entries",
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::invalid(format!("distribution sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid(format!("weights sum to {total}")));
        }
        for w in &mut weights {
            *w /= total;
        }
        Self::new(weights)
    }

    /// Softmax of `logits`, skipping ids where `support` is false.
    pub fn softmax(logits: &[f64], support: impl Fn(usize) -> bool) -> Result<Self> {
        let max = logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| support(i))
            .map(|(_, &x)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights = logits
            .iter()
            .enumerate()
            .map(|(i, &x)| if support(i) { (x - max).exp() } else { 0.0 })
            .collect();
        Self::from_weights(weights)
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs[id as usize]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Highest-probability id; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }
}

/// Cross-entropy of the gold token in nats.
pub fn token_loss(dist: &PredictionDistribution, gold: TokenId) -> f64 {
    -dist.prob(gold).ln()
}

/// Whether the gold token is the (lowest-id) argmax.
pub fn is_correct(dist: &PredictionDistribution, gold: TokenId) -> bool {
    dist.argmax() == gold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Uniform,
    Count,
    Neural,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Uniform => "uniform",
            BackendKind::Count => "count",
            BackendKind::Neural => "neural",
        }
    }
}

/// Anything that predicts a masked token from its full left and right context.
///
/// Implementations receive queries that [`predict`] has already checked
/// against the model's vocab.
pub trait MaskedLm: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn vocab_fingerprint(&self) -> &str;

    fn vocab_size(&self) -> usize;

    fn conditional(&self, query: &MaskedQuery) -> Result<PredictionDistribution>;

    /// Batched form of [`MaskedLm::conditional`]; results follow query order.
    fn conditional_batch(&self, queries: &[MaskedQuery]) -> Result<Vec<PredictionDistribution>> {
        queries.iter().map(|q| self.conditional(q)).collect()
    }
}

pub fn check_model_vocab(model: &dyn MaskedLm, vocab: &Vocab) -> Result<()> {
    check_fingerprint(model.vocab_fingerprint(), vocab.fingerprint())
}

pub(crate) fn check_fingerprint(model: &str, expected: &str) -> Result<()> {
    if model != expected {
        return Err(Error::VocabMismatch {
            expected: expected.to_string(),
            found: model.to_string(),
        });
    }
    Ok(())
}

fn check_query(model: &dyn MaskedLm, query: &MaskedQuery) -> Result<()> {
    let v = model.vocab_size();
    if let Some(&bad) = query.token_ids().iter().find(|&&t| t as usize >= v) {
        return Err(Error::invalid(format!(
            "token id {bad} outside vocab of {v}"
        )));
    }
    if let Some(g) = query.gold_id().filter(|&g| g as usize >= v) {
        return Err(Error::invalid(format!("gold id {g} outside vocab of {v}")));
    }
    Ok(())
}

/// Distribution over the masked position of `query`.
pub fn predict(
    model: &dyn MaskedLm,
    vocab: &Vocab,
    query: &MaskedQuery,
) -> Result<PredictionDistribution> {
    check_model_vocab(model, vocab)?;
    check_query(model, query)?;
    model.conditional(query)
}

pub fn predict_batch(
    model: &dyn MaskedLm,
    vocab: &Vocab,
    queries: &[MaskedQuery],
) -> Result<Vec<PredictionDistribution>> {
    check_model_vocab(model, vocab)?;
    for q in queries {
        check_query(model, q)?;
    }
    model.conditional_batch(queries)
}

/// Assigns probability 1/V to every id.
#[derive(Debug, Clone)]
pub struct UniformModel {
    fingerprint: String,
    size: usize,
}

impl UniformModel {
    pub fn new(vocab: &Vocab) -> Self {
        Self {
            fingerprint: vocab.fingerprint().to_string(),
            size: vocab.len(),
        }
    }
}

impl MaskedLm for UniformModel {
    fn kind(&self) -> BackendKind {
        BackendKind::Uniform
    }

    fn vocab_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn vocab_size(&self) -> usize {
        self.size
    }

    fn conditional(&self, _query: &MaskedQuery) -> Result<PredictionDistribution> {
        Ok(PredictionDistribution::uniform(self.size))
    }
}
