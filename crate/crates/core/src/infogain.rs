//! Per-passage information gain between a base-only and a mixture-trained model.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::audit::{evaluate_pair, TokenLossRecord};
use crate::corpus::{detokenize, Passage, Vocab};
use crate::error::{Error, Result};
use crate::lm::MaskedLm;
use crate::numeric::StableSum;

pub const DEFAULT_MAX_AUTHORS: usize = 50;
/// Tokens of opening text shown per winning passage.
pub const OPENING_TOKENS: usize = 30;

/// The single nats-to-bits conversion.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageGain {
    pub passage_id: String,
    pub author: String,
    pub loss_wiki: f64,
    pub loss_full: f64,
    pub gain_nats: f64,
    pub gain_bits: f64,
}

impl PassageGain {
    pub fn new(passage_id: String, author: String, loss_wiki: f64, loss_full: f64) -> Self {
        let gain_nats = loss_wiki - loss_full;
        Self {
            passage_id,
            author,
            loss_wiki,
            loss_full,
            gain_nats,
            gain_bits: nats_to_bits(gain_nats),
        }
    }
}

pub fn passage_gain(
    model_wiki: &dyn MaskedLm,
    model_full: &dyn MaskedLm,
    vocab: &Vocab,
    passage: &Passage,
) -> Result<PassageGain> {
    let records = evaluate_pair(model_wiki, model_full, vocab, std::slice::from_ref(passage))?;
    Ok(passage_gains_from_records(&records, std::slice::from_ref(passage))?.remove(0))
}

/// Gains of `passages` from evaluation records whose model A is the base model.
pub fn passage_gains_from_records(
    records: &[TokenLossRecord],
    passages: &[Passage],
) -> Result<Vec<PassageGain>> {
    let mut sums: HashMap<&str, (StableSum, StableSum)> = HashMap::new();
    for r in records {
        let e = sums.entry(r.passage_id.as_str()).or_default();
        e.0.add(r.loss_a);
        e.1.add(r.loss_b);
    }
    passages
        .iter()
        .map(|p| {
            let id = p.id();
            let (a, b) = sums
                .get(id.as_str())
                .ok_or_else(|| Error::invalid(format!("no records for passage {id}")))?;
            Ok(PassageGain::new(id, p.author.clone(), a.mean(), b.mean()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusGain {
    /// Mean over every token position.
    pub token_mean_nats: f64,
    pub token_mean_bits: f64,
    /// Mean of per-passage means.
    pub passage_mean_nats: f64,
    pub passage_mean_bits: f64,
}

pub fn corpus_gain_from(records: &[TokenLossRecord], gains: &[PassageGain]) -> Result<CorpusGain> {
    if records.is_empty() || gains.is_empty() {
        return Err(Error::invalid("corpus gain of an empty passage set"));
    }
    let token: StableSum = records.iter().map(TokenLossRecord::delta).collect();
    let passage: StableSum = gains.iter().map(|g| g.gain_nats).collect();
    Ok(CorpusGain {
        token_mean_nats: token.mean(),
        token_mean_bits: nats_to_bits(token.mean()),
        passage_mean_nats: passage.mean(),
        passage_mean_bits: nats_to_bits(passage.mean()),
    })
}

pub fn corpus_gain(
    model_wiki: &dyn MaskedLm,
    model_full: &dyn MaskedLm,
    vocab: &Vocab,
    passages: &[Passage],
) -> Result<CorpusGain> {
    if passages.is_empty() {
        return Err(Error::invalid("corpus gain of an empty passage set"));
    }
    let records = evaluate_pair(model_wiki, model_full, vocab, passages)?;
    let gains = passage_gains_from_records(&records, passages)?;
    corpus_gain_from(&records, &gains)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    /// All passages by gain, largest first.
    pub ranked: Vec<PassageGain>,
    /// The best passage of each author, in ranked order, at most `max_authors`.
    pub winners: Vec<PassageGain>,
}

/// Sorts by gain (ties by passage id) and keeps the first passage per author.
pub fn rank_passages(gains: &[PassageGain], max_authors: usize) -> GainReport {
    let mut ranked = gains.to_vec();
    ranked.sort_by(|a, b| {
        b.gain_nats
            .total_cmp(&a.gain_nats)
            .then_with(|| a.passage_id.cmp(&b.passage_id))
    });
    let mut seen = HashSet::new();
    let mut winners = Vec::new();
    for g in &ranked {
        if winners.len() == max_authors {
            break;
        }
        if seen.insert(g.author.as_str()) {
            winners.push(g.clone());
        }
    }
    GainReport { ranked, winners }
}

pub fn write_gains_csv<W: Write>(
    mut w: W,
    gains: &[PassageGain],
    provenance: Option<&str>,
) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(w, "# {p}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    for g in gains {
        csv.serialize(g)?;
    }
    csv.flush()?;
    Ok(())
}

/// Markdown list of winners with the opening tokens of each passage.
pub fn winners_markdown(
    report: &GainReport,
    passages: &[Passage],
    vocab: &Vocab,
    provenance: Option<&str>,
) -> String {
    let by_id: HashMap<String, &Passage> = passages.iter().map(|p| (p.id(), p)).collect();
    let mut out = String::new();
    if let Some(p) = provenance {
        let _ = writeln!(out, "<!-- {p} -->\n");
    }
    out.push_str("## Top passage per author by information gain\n\n");
    out.push_str("| Rank | Author | Passage | Gain (nats) | Gain (bits) | Opening |\n");
    out.push_str("|---:|---|---|---:|---:|---|\n");
    for (i, g) in report.winners.iter().enumerate() {
        let opening = by_id
            .get(&g.passage_id)
            .map(|p| {
                let n = p.token_ids.len().min(OPENING_TOKENS);
                detokenize(&vocab.decode(&p.token_ids[..n]))
            })
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.4} | {:.4} | {} |",
            i + 1,
            g.author.replace('|', "\\|"),
            g.passage_id,
            g.gain_nats,
            g.gain_bits,
            opening.replace('|', "\\|")
        );
    }
    out
}
