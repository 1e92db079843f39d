//! Corpus ingestion, tokenization, vocabularies, splits and passage sampling.

mod io;
mod sampling;
mod tokenize;
mod vocab;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_corpus_dir, read_corpus_jsonl, read_passages, write_passages};
pub use sampling::{sample_passages, split_corpus, CorpusManifest, Passage, Split};
pub use tokenize::{detokenize, is_punctuation, tokenize};
pub use vocab::{
    build_vocab, count_tokens, is_predictable, vocab_from_counts, TokenId, Vocab, BOS, EOS, MASK,
    NUM_SPECIALS, SPECIAL_TOKENS, UNK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[serde(alias = "BASE")]
    Base,
    #[serde(alias = "FICTION")]
    Fiction,
}

/// A raw document as ingested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub author: String,
    pub source: Source,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub id: String,
    pub author: String,
    pub source: Source,
    pub tokens: Vec<String>,
}

/// A named collection of tokenized documents with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub documents: Vec<TokenizedDocument>,
}

impl Corpus {
    /// Validates and tokenizes raw documents.
    pub fn from_documents(name: impl Into<String>, docs: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        for doc in &docs {
            if doc.text.trim().is_empty() {
                return Err(Error::invalid(format!("document {:?} is empty", doc.id)));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate document id {:?}",
                    doc.id
                )));
            }
        }
        let documents = docs
            .into_par_iter()
            .map(|d| TokenizedDocument {
                tokens: tokenize(&d.text),
                id: d.id,
                author: d.author,
                source: d.source,
            })
            .collect();
        Ok(Self {
            name: name.into(),
            documents,
        })
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }

    pub fn token_slices(&self) -> impl Iterator<Item = &[String]> {
        self.documents.iter().map(|d| d.tokens.as_slice())
    }

    /// Documents listed in `manifest`, in manifest order.
    pub fn subset(&self, manifest: &CorpusManifest) -> Result<Corpus> {
        let by_id: std::collections::HashMap<&str, &TokenizedDocument> =
            self.documents.iter().map(|d| (d.id.as_str(), d)).collect();
        let documents = manifest
            .document_ids
            .iter()
            .map(|id| {
                by_id.get(id.as_str()).map(|d| (*d).clone()).ok_or_else(|| {
                    Error::invalid(format!("manifest names unknown document {id:?}"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Corpus {
            name: format!("{}/{}", self.name, manifest.split.as_str()),
            documents,
        })
    }

    pub fn encode(&self, vocab: &Vocab) -> EncodedCorpus {
        let documents = self
            .documents
            .par_iter()
            .map(|d| EncodedDocument {
                id: d.id.clone(),
                author: d.author.clone(),
                source: d.source,
                ids: vocab.encode(&d.tokens),
            })
            .collect();
        EncodedCorpus {
            vocab_fingerprint: vocab.fingerprint().to_string(),
            documents,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDocument {
    pub id: String,
    pub author: String,
    pub source: Source,
    pub ids: Vec<TokenId>,
}

/// Documents mapped to ids under one vocab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedCorpus {
    pub vocab_fingerprint: String,
    pub documents: Vec<EncodedDocument>,
}

impl EncodedCorpus {
    pub fn token_count(&self) -> usize {
        self.documents.iter().map(|d| d.ids.len()).sum()
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if self.vocab_fingerprint != vocab.fingerprint() {
            return Err(Error::VocabMismatch {
                expected: vocab.fingerprint().to_string(),
                found: self.vocab_fingerprint.clone(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            author: String::new(),
            source: Source::Base,
            text: text.into(),
        }
    }

    #[test]
    fn rejects_duplicates_and_blank_text() {
        assert!(Corpus::from_documents("c", vec![doc("a", "x"), doc("a", "y")]).is_err());
        assert!(Corpus::from_documents("c", vec![doc("a", "  \n")]).is_err());
    }

    #[test]
    fn encodes_unknowns_as_unk() {
        let corpus = Corpus::from_documents("c", vec![doc("a", "x y z")]).unwrap();
        let vocab = Vocab::from_corpus_tokens(["x", "z"]).unwrap();
        let enc = corpus.encode(&vocab);
        assert_eq!(enc.documents[0].ids, vec![4, UNK, 5]);
        assert!(enc.check_vocab(&vocab).is_ok());
    }
}
