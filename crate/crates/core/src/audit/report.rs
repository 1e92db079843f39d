use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::TypeStats;
use crate::corpus::{TokenId, Vocab};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub type_id: TokenId,
    pub token: String,
    pub n: usize,
    pub mean_delta: f64,
    pub t_statistic: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// Types model B predicts significantly better, and the types it predicts worst.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovedTypesReport {
    /// Significant with positive mean delta, largest first.
    pub improved: Vec<ReportRow>,
    /// The `worst_k` most negative mean deltas, most negative first.
    pub worst: Vec<ReportRow>,
}

fn row(s: &TypeStats, vocab: &Vocab) -> ReportRow {
    ReportRow {
        type_id: s.type_id,
        token: vocab.token_of(s.type_id).unwrap_or("").to_string(),
        n: s.n,
        mean_delta: s.mean_delta,
        t_statistic: s.t_statistic,
        p_adjusted: s.p_adjusted,
        significant: s.significant,
    }
}

/// Ties on mean delta fall back to type id, so the order is total.
pub fn improved_types_report(
    stats: &[TypeStats],
    vocab: &Vocab,
    worst_k: usize,
) -> ImprovedTypesReport {
    let mut improved: Vec<&TypeStats> = stats
        .iter()
        .filter(|s| s.significant && s.mean_delta > 0.0)
        .collect();
    improved.sort_by(|a, b| {
        b.mean_delta
            .total_cmp(&a.mean_delta)
            .then(a.type_id.cmp(&b.type_id))
    });
    let mut worst: Vec<&TypeStats> = stats.iter().filter(|s| s.mean_delta < 0.0).collect();
    worst.sort_by(|a, b| {
        a.mean_delta
            .total_cmp(&b.mean_delta)
            .then(a.type_id.cmp(&b.type_id))
    });
    worst.truncate(worst_k);
    ImprovedTypesReport {
        improved: improved.into_iter().map(|s| row(s, vocab)).collect(),
        worst: worst.into_iter().map(|s| row(s, vocab)).collect(),
    }
}

fn table(out: &mut String, rows: &[ReportRow]) {
    out.push_str("| Theme | Word | n | Mean loss reduction (nats) | t | Adjusted p |\n");
    out.push_str("|---|---|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "|  | {} | {} | {:.4} | {:.3} | {:.3e} |",
            r.token.replace('|', "\\|"),
            r.n,
            r.mean_delta,
            r.t_statistic,
            r.p_adjusted
        );
    }
}

impl ImprovedTypesReport {
    pub fn to_markdown(&self, provenance: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(p) = provenance {
            let _ = writeln!(out, "<!-- {p} -->\n");
        }
        out.push_str("## Predictions improved by the mixture model\n\n");
        table(&mut out, &self.improved);
        out.push_str("\n## Predictions made worse by the mixture model\n\n");
        table(&mut out, &self.worst);
        out
    }
}

#[derive(Serialize)]
struct StatsRow<'a> {
    #[serde(rename = "type")]
    type_id: TokenId,
    token: &'a str,
    n: usize,
    mean_delta: f64,
    sd: f64,
    t_statistic: f64,
    p_value: f64,
    p_adjusted: f64,
    significant: bool,
    degenerate_variance: bool,
}

pub fn write_type_stats<W: Write>(
    mut w: W,
    stats: &[TypeStats],
    vocab: &Vocab,
    provenance: Option<&str>,
) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(w, "# {p}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    for s in stats {
        csv.serialize(StatsRow {
            type_id: s.type_id,
            token: vocab.token_of(s.type_id).unwrap_or(""),
            n: s.n,
            mean_delta: s.mean_delta,
            sd: s.sd,
            t_statistic: s.t_statistic,
            p_value: s.p_value,
            p_adjusted: s.p_adjusted,
            significant: s.significant,
            degenerate_variance: s.degenerate_variance,
        })?;
    }
    csv.flush()?;
    Ok(())
}
