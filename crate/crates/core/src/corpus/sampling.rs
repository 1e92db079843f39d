use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, EncodedCorpus, TokenId, MASK};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One side of a document-level train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus: String,
    pub split: Split,
    pub seed: u64,
    pub test_fraction: f64,
    pub document_count: usize,
    pub token_count: usize,
    pub document_ids: Vec<String>,
}

/// Splits whole documents into train and test sides.
///
/// The test side receives `round(test_fraction * n)` documents, clamped so
/// both sides are non-empty.
pub fn split_corpus(
    corpus: &Corpus,
    test_fraction: f64,
    seed: u64,
) -> Result<(CorpusManifest, CorpusManifest)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = corpus.documents.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "splitting needs at least 2 documents, corpus {:?} has {n}",
            corpus.name
        )));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }

    let side = |split: Split| {
        let docs: Vec<_> = corpus
            .documents
            .iter()
            .zip(&is_test)
            .filter(|&(_, &t)| t == (split == Split::Test))
            .map(|(d, _)| d)
            .collect();
        CorpusManifest {
            corpus: corpus.name.clone(),
            split,
            seed,
            test_fraction,
            document_count: docs.len(),
            token_count: docs.iter().map(|d| d.tokens.len()).sum(),
            document_ids: docs.iter().map(|d| d.id.clone()).collect(),
        }
    };
    Ok((side(Split::Train), side(Split::Test)))
}

/// A fixed-length window of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub author: String,
    pub offset: usize,
    pub token_ids: Vec<TokenId>,
}

impl Passage {
    /// `doc_id@offset`, unique per (document, offset).
    pub fn id(&self) -> String {
        format!("{}@{}", self.doc_id, self.offset)
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Draws `n` passages of `len` tokens, uniformly and with replacement over
/// every (document, offset) pair that fits inside one document.
pub fn sample_passages(
    corpus: &EncodedCorpus,
    n: usize,
    len: usize,
    seed: u64,
) -> Result<Vec<Passage>> {
    if len == 0 {
        return Err(Error::invalid("passage length must be positive"));
    }
    // (document index, cumulative window count through this document)
    let mut windows = Vec::new();
    let mut total = 0usize;
    for (i, doc) in corpus.documents.iter().enumerate() {
        if doc.ids.len() >= len {
            total += doc.ids.len() - len + 1;
            windows.push((i, total));
        }
    }
    if total == 0 {
        return Err(Error::NoEligibleDocuments);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let passages = (0..n)
        .map(|_| {
            let u = rng.random_range(0..total);
            let slot = windows.partition_point(|&(_, cum)| cum <= u);
            let (doc_idx, cum) = windows[slot];
            let doc = &corpus.documents[doc_idx];
            let first = cum - (doc.ids.len() - len + 1);
            let offset = u - first;
            let token_ids = doc.ids[offset..offset + len].to_vec();
            debug_assert!(!token_ids.contains(&MASK));
            Passage {
                doc_id: doc.id.clone(),
                author: doc.author.clone(),
                offset,
                token_ids,
            }
        })
        .collect();
    Ok(passages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, EncodedDocument, Source};

    fn encoded(lens: &[usize]) -> EncodedCorpus {
        EncodedCorpus {
            vocab_fingerprint: "x".into(),
            documents: lens
                .iter()
                .enumerate()
                .map(|(i, &n)| EncodedDocument {
                    id: format!("d{i}"),
                    author: format!("a{i}"),
                    source: Source::Base,
                    ids: (0..n as TokenId).map(|t| 4 + t).collect(),
                })
                .collect(),
        }
    }

    fn corpus(n: usize) -> Corpus {
        let docs = (0..n)
            .map(|i| Document {
                id: format!("doc{i}"),
                author: String::new(),
                source: Source::Base,
                text: format!("text number {i}"),
            })
            .collect();
        Corpus::from_documents("toy", docs).unwrap()
    }

    #[test]
    fn single_exact_length_document() {
        let c = encoded(&[100]);
        let p = sample_passages(&c, 1, 100, 7).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].offset, 0);
        assert_eq!(p[0].token_ids, c.documents[0].ids);
    }

    #[test]
    fn sampling_is_seeded() {
        let c = encoded(&[150, 320, 90]);
        let a = sample_passages(&c, 50, 100, 11).unwrap();
        assert_eq!(a, sample_passages(&c, 50, 100, 11).unwrap());
        assert_ne!(a, sample_passages(&c, 50, 100, 12).unwrap());
    }

    #[test]
    fn short_documents_are_skipped() {
        let c = encoded(&[10, 200]);
        for p in sample_passages(&c, 100, 100, 3).unwrap() {
            assert_eq!(p.doc_id, "d1");
            assert!(p.offset + 100 <= 200);
            assert_eq!(p.token_ids, c.documents[1].ids[p.offset..p.offset + 100]);
        }
        let err = sample_passages(&encoded(&[10, 20]), 1, 100, 3).unwrap_err();
        assert_eq!(err.to_string(), "no eligible documents");
    }

    #[test]
    fn document_share_is_binomial() {
        // Two equal-length documents: count ~ Binomial(10000, 1/2),
        // mean 5000, sd = sqrt(10000 / 4) = 50.
        let c = encoded(&[300, 300]);
        let p = sample_passages(&c, 10_000, 100, 2024).unwrap();
        let first = p.iter().filter(|p| p.doc_id == "d0").count() as f64;
        assert!((first - 5000.0).abs() <= 3.0 * 50.0, "share {first}");
    }

    #[test]
    fn ten_percent_of_ten_documents() {
        let (train, test) = split_corpus(&corpus(10), 0.1, 5).unwrap();
        assert_eq!(test.document_count, 1);
        assert_eq!(train.document_count, 9);
    }

    #[test]
    fn half_of_two_documents() {
        let (train, test) = split_corpus(&corpus(2), 0.5, 9).unwrap();
        assert_eq!((train.document_count, test.document_count), (1, 1));
    }

    #[test]
    fn split_partitions_and_is_seeded() {
        let c = corpus(37);
        let (train, test) = split_corpus(&c, 0.3, 42).unwrap();
        let mut all: Vec<_> = train
            .document_ids
            .iter()
            .chain(&test.document_ids)
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 37);
        assert_eq!(
            (train.clone(), test.clone()),
            split_corpus(&c, 0.3, 42).unwrap()
        );
    }

    #[test]
    fn split_rejects_bad_arguments() {
        assert!(split_corpus(&corpus(1), 0.5, 0).is_err());
        assert!(split_corpus(&corpus(5), 0.0, 0).is_err());
        assert!(split_corpus(&corpus(5), 1.0, 0).is_err());
    }
}
