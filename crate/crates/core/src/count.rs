//! Counting language model for the masked (cloze) setting.
//!
//! The masked token is predicted from its immediate neighbours:
//!
//! ```text
//! P(w | l, r) = (c(l, w, r) + α·Pu(w)) / (c(l, ·, r) + α)
//! Pu(w)       = (c(w) + 1) / (N + V)
//! ```
//!
//! where `V` counts the predictable ids (`UNK` and corpus tokens). Documents
//! are padded with `BOS`/`EOS`, which act as contexts but are never counted
//! as middle tokens or predicted.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::corpus::{is_predictable, EncodedCorpus, TokenId, Vocab, BOS, EOS, NUM_SPECIALS};
use crate::error::{Error, Result};
use crate::lm::{BackendKind, MaskedLm, MaskedQuery, PredictionDistribution};

#[derive(Debug, Clone, PartialEq)]
pub struct CountTables {
    vocab_fingerprint: String,
    vocab_size: usize,
    alpha: f64,
    total: u64,
    unigram: Vec<u64>,
    left_bigram: HashMap<(TokenId, TokenId), u64>,
    right_bigram: HashMap<(TokenId, TokenId), u64>,
    trigram: HashMap<(TokenId, TokenId, TokenId), u64>,
    // Derived from `trigram`: middle tokens seen per (l, r) and their total.
    contexts: HashMap<(TokenId, TokenId), Context>,
    unigram_probs: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Context {
    total: u64,
    middles: Vec<(TokenId, u64)>,
}

/// Neighbours of the masked position, with `BOS`/`EOS` past the edges.
pub fn neighbours(ids: &[TokenId], position: usize) -> (TokenId, TokenId) {
    let left = if position == 0 {
        BOS
    } else {
        ids[position - 1]
    };
    let right = ids.get(position + 1).copied().unwrap_or(EOS);
    (left, right)
}

/// Tallies unigram, bigram and trigram counts over `corpus`.
pub fn fit_counts(corpus: &EncodedCorpus, vocab: &Vocab, alpha: f64) -> Result<CountTables> {
    corpus.check_vocab(vocab)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if corpus.token_count() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let v = vocab.len();
    let mut unigram = vec![0u64; v];
    let mut left_bigram = HashMap::new();
    let mut right_bigram = HashMap::new();
    let mut trigram = HashMap::new();
    let mut total = 0u64;
    let mut padded = Vec::new();
    for doc in &corpus.documents {
        padded.clear();
        padded.push(BOS);
        padded.extend_from_slice(&doc.ids);
        padded.push(EOS);
        for win in padded.windows(3) {
            let (l, w, r) = (win[0], win[1], win[2]);
            if w as usize >= v || !is_predictable(w) {
                return Err(Error::invalid(format!(
                    "document {:?} holds non-corpus id {w}",
                    doc.id
                )));
            }
            unigram[w as usize] += 1;
            total += 1;
            *left_bigram.entry((l, w)).or_insert(0) += 1;
            *right_bigram.entry((w, r)).or_insert(0) += 1;
            *trigram.entry((l, w, r)).or_insert(0) += 1;
        }
    }
    Ok(CountTables::assemble(
        vocab.fingerprint().to_string(),
        v,
        alpha,
        total,
        unigram,
        left_bigram,
        right_bigram,
        trigram,
    ))
}

impl CountTables {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        vocab_fingerprint: String,
        vocab_size: usize,
        alpha: f64,
        total: u64,
        unigram: Vec<u64>,
        left_bigram: HashMap<(TokenId, TokenId), u64>,
        right_bigram: HashMap<(TokenId, TokenId), u64>,
        trigram: HashMap<(TokenId, TokenId, TokenId), u64>,
    ) -> Self {
        let mut contexts: HashMap<(TokenId, TokenId), Context> = HashMap::new();
        let mut sorted: Vec<_> = trigram.iter().collect();
        sorted.sort_unstable();
        for (&(l, w, r), &c) in sorted {
            let ctx = contexts.entry((l, r)).or_default();
            ctx.total += c;
            ctx.middles.push((w, c));
        }
        let support = support_size(vocab_size) as f64;
        let denom = total as f64 + support;
        let unigram_probs = unigram
            .iter()
            .enumerate()
            .map(|(id, &c)| {
                if is_predictable(id as TokenId) {
                    (c as f64 + 1.0) / denom
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            vocab_fingerprint,
            vocab_size,
            alpha,
            total,
            unigram,
            left_bigram,
            right_bigram,
            trigram,
            contexts,
            unigram_probs,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Same counts, different smoothing strength.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            ..self.clone()
        })
    }

    /// N: number of non-boundary tokens counted.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn unigram(&self, w: TokenId) -> u64 {
        self.unigram.get(w as usize).copied().unwrap_or(0)
    }

    pub fn left_bigram(&self, l: TokenId, w: TokenId) -> u64 {
        self.left_bigram.get(&(l, w)).copied().unwrap_or(0)
    }

    pub fn right_bigram(&self, w: TokenId, r: TokenId) -> u64 {
        self.right_bigram.get(&(w, r)).copied().unwrap_or(0)
    }

    pub fn trigram(&self, l: TokenId, w: TokenId, r: TokenId) -> u64 {
        self.trigram.get(&(l, w, r)).copied().unwrap_or(0)
    }

    /// c(l, ·, r): trigram count summed over middle tokens.
    pub fn context_total(&self, l: TokenId, r: TokenId) -> u64 {
        self.contexts.get(&(l, r)).map_or(0, |c| c.total)
    }

    /// Add-one unigram backoff distribution.
    pub fn unigram_prob(&self, w: TokenId) -> f64 {
        self.unigram_probs[w as usize]
    }

    /// P(w | l, r) for every id.
    pub fn predict_context(&self, left: TokenId, right: TokenId) -> Vec<f64> {
        let mut probs: Vec<f64> = self.unigram_probs.iter().map(|p| self.alpha * p).collect();
        let ctx_total = match self.contexts.get(&(left, right)) {
            Some(ctx) => {
                for &(w, c) in &ctx.middles {
                    probs[w as usize] += c as f64;
                }
                ctx.total as f64
            }
            None => 0.0,
        };
        let denom = ctx_total + self.alpha;
        for p in &mut probs {
            *p /= denom;
        }
        probs
    }

    pub fn predict_count(&self, query: &MaskedQuery) -> Result<PredictionDistribution> {
        let (l, r) = neighbours(query.token_ids(), query.mask_position());
        PredictionDistribution::new(self.predict_context(l, r))
    }

    pub(crate) fn write_payload<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.total.to_le_bytes())?;

        let unigrams: Vec<_> = self
            .unigram
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .collect();
        write_len(&mut w, unigrams.len())?;
        for (id, &c) in unigrams {
            w.write_all(&(id as u32).to_le_bytes())?;
            w.write_all(&c.to_le_bytes())?;
        }
        for table in [&self.left_bigram, &self.right_bigram] {
            let mut run: Vec<_> = table.iter().collect();
            run.sort_unstable();
            write_len(&mut w, run.len())?;
            for (&(a, b), &c) in run {
                for x in [a, b] {
                    w.write_all(&x.to_le_bytes())?;
                }
                w.write_all(&c.to_le_bytes())?;
            }
        }
        let mut run: Vec<_> = self.trigram.iter().collect();
        run.sort_unstable();
        write_len(&mut w, run.len())?;
        for (&(l, m, r), &c) in run {
            for x in [l, m, r] {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub(crate) fn read_payload<R: Read>(
        mut r: R,
        vocab_fingerprint: String,
        vocab_size: usize,
        alpha: f64,
    ) -> Result<Self> {
        let total = read_u64(&mut r)?;
        let mut unigram = vec![0u64; vocab_size];
        for _ in 0..read_u32(&mut r)? {
            let id = read_u32(&mut r)? as usize;
            let c = read_u64(&mut r)?;
            *unigram
                .get_mut(id)
                .ok_or_else(|| Error::Checkpoint(format!("unigram id {id} out of range")))? = c;
        }
        let mut bigrams = [HashMap::new(), HashMap::new()];
        for table in &mut bigrams {
            for _ in 0..read_u32(&mut r)? {
                let a = read_u32(&mut r)?;
                let b = read_u32(&mut r)?;
                table.insert((a, b), read_u64(&mut r)?);
            }
        }
        let mut trigram = HashMap::new();
        for _ in 0..read_u32(&mut r)? {
            let l = read_u32(&mut r)?;
            let m = read_u32(&mut r)?;
            let rr = read_u32(&mut r)?;
            trigram.insert((l, m, rr), read_u64(&mut r)?);
        }
        if unigram.iter().sum::<u64>() != total {
            return Err(Error::Checkpoint("unigram counts do not sum to N".into()));
        }
        let [left_bigram, right_bigram] = bigrams;
        Ok(Self::assemble(
            vocab_fingerprint,
            vocab_size,
            alpha,
            total,
            unigram,
            left_bigram,
            right_bigram,
            trigram,
        ))
    }
}

fn support_size(vocab_size: usize) -> usize {
    // UNK plus corpus tokens.
    vocab_size - NUM_SPECIALS + 1
}

fn write_len<W: Write>(w: &mut W, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Checkpoint("table too large".into()))?;
    w.write_all(&n.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated count payload: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated count payload: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

impl MaskedLm for CountTables {
    fn kind(&self) -> BackendKind {
        BackendKind::Count
    }

    fn vocab_fingerprint(&self) -> &str {
        &self.vocab_fingerprint
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn conditional(&self, query: &MaskedQuery) -> Result<PredictionDistribution> {
        self.predict_count(query)
    }
}
