//! Word-by-word comparison of two masked language models on held-out passages.

mod report;
pub mod stats;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Passage, TokenId, Vocab, UNK};
use crate::error::{Error, Result};
use crate::lm::{check_model_vocab, is_correct, predict_batch, token_loss, MaskedLm, MaskedQuery};
use crate::numeric::StableSum;

pub use report::{improved_types_report, write_type_stats, ImprovedTypesReport, ReportRow};

/// Headline numbers of a 2-billion-word training run, kept for comparison only.
pub mod reference {
    /// Accuracy on the base-domain test set: base-only model, mixture model.
    pub const BASE_TEST_ACCURACY: (f64, f64) = (0.65, 0.63);
    /// Accuracy on the fiction test set: base-only model, mixture model.
    pub const FICTION_TEST_ACCURACY: (f64, f64) = (0.54, 0.66);
    /// Mean loss in nats on the base-domain test set: base-only model, mixture model.
    pub const BASE_TEST_LOSS: (f64, f64) = (1.72, 1.88);
    /// Mean loss in nats on the fiction test set: base-only model, mixture model.
    pub const FICTION_TEST_LOSS: (f64, f64) = (2.38, 1.66);
}

pub const DEFAULT_MIN_N: usize = 30;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Losses of both models at one masked position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLossRecord {
    pub passage_id: String,
    pub position: usize,
    pub gold: TokenId,
    pub loss_a: f64,
    pub loss_b: f64,
    pub correct_a: bool,
    pub correct_b: bool,
}

impl TokenLossRecord {
    /// `loss_a − loss_b`; positive when model B does better.
    pub fn delta(&self) -> f64 {
        self.loss_a - self.loss_b
    }

    /// Same record with the roles of A and B exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            loss_a: self.loss_b,
            loss_b: self.loss_a,
            correct_a: self.correct_b,
            correct_b: self.correct_a,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    A,
    B,
}

/// Loss and correctness of one model at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionScore {
    pub loss: f64,
    pub correct: bool,
}

/// Masks every position of `passage` in turn and scores the gold token.
pub fn score_passage(
    model: &dyn MaskedLm,
    vocab: &Vocab,
    passage: &Passage,
) -> Result<Vec<PositionScore>> {
    let queries = (0..passage.len())
        .map(|pos| MaskedQuery::masking(&passage.token_ids, pos))
        .collect::<Result<Vec<_>>>()?;
    let dists = predict_batch(model, vocab, &queries)?;
    Ok(dists
        .iter()
        .zip(&passage.token_ids)
        .map(|(d, &gold)| PositionScore {
            loss: token_loss(d, gold),
            correct: is_correct(d, gold),
        })
        .collect())
}

/// One record per (passage, position), in passage then position order.
pub fn evaluate_pair(
    model_a: &dyn MaskedLm,
    model_b: &dyn MaskedLm,
    vocab: &Vocab,
    passages: &[Passage],
) -> Result<Vec<TokenLossRecord>> {
    check_model_vocab(model_a, vocab)?;
    check_model_vocab(model_b, vocab)?;
    let per_passage: Vec<Vec<TokenLossRecord>> = passages
        .par_iter()
        .map(|p| {
            let a = score_passage(model_a, vocab, p)?;
            let b = score_passage(model_b, vocab, p)?;
            let id = p.id();
            Ok(p.token_ids
                .iter()
                .zip(a.iter().zip(&b))
                .enumerate()
                .map(|(position, (&gold, (sa, sb)))| TokenLossRecord {
                    passage_id: id.clone(),
                    position,
                    gold,
                    loss_a: sa.loss,
                    loss_b: sb.loss,
                    correct_a: sa.correct,
                    correct_b: sb.correct,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_passage.into_iter().flatten().collect())
}

pub fn accuracy(records: &[TokenLossRecord], which: Which) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("accuracy of an empty record set"));
    }
    let hits = records
        .iter()
        .filter(|r| match which {
            Which::A => r.correct_a,
            Which::B => r.correct_b,
        })
        .count();
    Ok(hits as f64 / records.len() as f64)
}

pub fn mean_loss(records: &[TokenLossRecord], which: Which) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("mean loss of an empty record set"));
    }
    Ok(records
        .iter()
        .map(|r| match which {
            Which::A => r.loss_a,
            Which::B => r.loss_b,
        })
        .collect::<StableSum>()
        .mean())
}

/// Mean of `loss_a − loss_b` over every record.
pub fn global_mean_delta(records: &[TokenLossRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("mean delta of an empty record set"));
    }
    Ok(records
        .iter()
        .map(TokenLossRecord::delta)
        .collect::<StableSum>()
        .mean())
}

/// Result of a one-sample t-test on paired differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    /// Zero sample variance; `p_value` is then 0 (nonzero mean) or 1 (zero mean).
    pub degenerate_variance: bool,
}

/// Two-sided paired t-test of `mean(d) = 0` with `n − 1` degrees of freedom.
pub fn paired_t_test(deltas: &[f64]) -> Result<PairedTTest> {
    let n = deltas.len();
    if n < 2 {
        return Err(Error::invalid("t-test needs at least two differences"));
    }
    let mean = deltas.iter().copied().collect::<StableSum>().mean();
    let ss: StableSum = deltas.iter().map(|d| (d - mean).powi(2)).collect();
    let sd = (ss.total() / (n - 1) as f64).sqrt();
    // Differences equal up to rounding count as constant.
    let scale = deltas.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if sd <= 1e-12 * scale || sd == 0.0 {
        let nonzero = mean.abs() > 1e-12 * scale && mean != 0.0;
        return Ok(PairedTTest {
            n,
            mean,
            sd,
            t_statistic: if nonzero {
                f64::INFINITY.copysign(mean)
            } else {
                0.0
            },
            p_value: if nonzero { 0.0 } else { 1.0 },
            degenerate_variance: true,
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    Ok(PairedTTest {
        n,
        mean,
        sd,
        t_statistic: t,
        p_value: stats::student_t_two_sided_p(t, (n - 1) as f64),
        degenerate_variance: false,
    })
}

/// Bonferroni adjustment for `tests` comparisons.
pub fn bonferroni(p: f64, tests: usize) -> f64 {
    (p * tests as f64).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub type_id: TokenId,
    pub n: usize,
    pub mean_delta: f64,
    pub sd: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub significant: bool,
    pub degenerate_variance: bool,
}

/// Paired t-test per gold type with at least `min_n` instances, ordered by type id.
///
/// UNK positions are never tested.
pub fn per_type_test(records: &[TokenLossRecord], min_n: usize) -> Result<Vec<TypeStats>> {
    let min_n = min_n.max(2);
    let mut groups: BTreeMap<TokenId, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.gold != UNK) {
        groups.entry(r.gold).or_default().push(r.delta());
    }
    let tested: Vec<(TokenId, PairedTTest)> = groups
        .into_iter()
        .filter(|(_, d)| d.len() >= min_n)
        .map(|(id, d)| Ok((id, paired_t_test(&d)?)))
        .collect::<Result<_>>()?;
    let m = tested.len();
    Ok(tested
        .into_iter()
        .map(|(type_id, t)| {
            let p_adjusted = bonferroni(t.p_value, m);
            TypeStats {
                type_id,
                n: t.n,
                mean_delta: t.mean,
                sd: t.sd,
                t_statistic: t.t_statistic,
                p_value: t.p_value,
                p_adjusted,
                significant: p_adjusted < SIGNIFICANCE_LEVEL,
                degenerate_variance: t.degenerate_variance,
            }
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow<'a> {
    passage_id: &'a str,
    position: usize,
    #[serde(rename = "type")]
    type_id: TokenId,
    loss_a: f64,
    loss_b: f64,
    correct_a: bool,
    correct_b: bool,
    token: &'a str,
}

#[derive(Debug, Deserialize)]
struct OwnedRecordRow {
    passage_id: String,
    position: usize,
    #[serde(rename = "type")]
    type_id: TokenId,
    loss_a: f64,
    loss_b: f64,
    correct_a: bool,
    correct_b: bool,
}

/// Writes records as CSV, preceded by `# provenance` when given.
pub fn write_records<W: Write>(
    mut w: W,
    records: &[TokenLossRecord],
    vocab: &Vocab,
    provenance: Option<&str>,
) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(w, "# {p}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    for r in records {
        csv.serialize(RecordRow {
            passage_id: &r.passage_id,
            position: r.position,
            type_id: r.gold,
            loss_a: r.loss_a,
            loss_b: r.loss_b,
            correct_a: r.correct_a,
            correct_b: r.correct_b,
            token: vocab.token_of(r.gold).unwrap_or(""),
        })?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<TokenLossRecord>> {
    let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    csv.deserialize::<OwnedRecordRow>()
        .map(|row| {
            let row = row?;
            Ok(TokenLossRecord {
                passage_id: row.passage_id,
                position: row.position,
                gold: row.type_id,
                loss_a: row.loss_a,
                loss_b: row.loss_b,
                correct_a: row.correct_a,
                correct_b: row.correct_b,
            })
        })
        .collect()
}
