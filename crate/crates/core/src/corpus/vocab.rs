use std::collections::HashMap;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const MASK: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
/// Number of reserved ids; corpus tokens start here.
pub const NUM_SPECIALS: usize = 4;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["[MASK]", "[UNK]", "[BOS]", "[EOS]"];

/// True for ids a model may assign probability to: `UNK` and corpus tokens.
pub fn is_predictable(id: TokenId) -> bool {
    !matches!(id, MASK | BOS | EOS)
}

const VOCAB_HEADER: &str = "# corpus-contrast vocab v1: line k after this header holds token id k+3 (ids 0-3 are [MASK] [UNK] [BOS] [EOS])";

/// Bijection between token strings and ids, with the four specials at ids 0-3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    fingerprint: String,
}

impl Vocab {
    /// Builds a vocab from corpus tokens (specials are prepended).
    pub fn from_corpus_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().map(Into::into));
        if all.len() <= NUM_SPECIALS {
            return Err(Error::invalid("vocab needs at least one corpus token"));
        }
        let mut index = HashMap::with_capacity(all.len());
        for (id, token) in all.iter().enumerate() {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid vocab token {token:?}")));
            }
            if index.insert(token.clone(), id as TokenId).is_some() {
                return Err(Error::invalid(format!("duplicate vocab token {token:?}")));
            }
        }
        let fingerprint = {
            let mut hasher = Sha256::new();
            for token in &all {
                hasher.update(token.as_bytes());
                hasher.update(b"\n");
            }
            hex::encode(hasher.finalize())
        };
        Ok(Self {
            tokens: all,
            index,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Maps a token to its id, falling back to `UNK`.
    pub fn encode_token(&self, token: &str) -> TokenId {
        self.id_of(token).unwrap_or(UNK)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|t| self.encode_token(t.as_ref()))
            .collect()
    }

    pub fn token_of(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter()
            .map(|&id| self.token_of(id).unwrap_or(SPECIAL_TOKENS[UNK as usize]))
            .collect()
    }

    /// Corpus tokens, excluding specials, in id order.
    pub fn corpus_tokens(&self) -> &[String] {
        &self.tokens[NUM_SPECIALS..]
    }

    /// SHA-256 over the ordered token list, hex encoded.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{VOCAB_HEADER}")?;
        for token in self.corpus_tokens() {
            writeln!(w, "{token}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(header)) if header.starts_with('#') => {}
            Some(Err(e)) => return Err(e.into()),
            _ => return Err(Error::invalid("vocab file is missing its header line")),
        }
        let tokens = lines.collect::<std::io::Result<Vec<_>>>()?;
        Self::from_corpus_tokens(tokens)
    }
}

/// Counts token occurrences.
pub fn count_tokens<'a, I>(docs: I) -> HashMap<String, u64>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        for token in doc {
            *counts.entry(token.clone()).or_default() += 1;
        }
    }
    counts
}

/// Keeps tokens seen at least `min_count` times, most frequent first with
/// lexicographic tie-breaks, truncated so the vocab holds `max_size` ids.
pub fn build_vocab<'a, I>(docs: I, max_size: usize, min_count: u64) -> Result<Vocab>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if max_size <= NUM_SPECIALS {
        return Err(Error::invalid(format!(
            "max_size must exceed {NUM_SPECIALS}, got {max_size}"
        )));
    }
    let counts = count_tokens(docs);
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    vocab_from_counts(&counts, max_size, min_count)
}

pub fn vocab_from_counts(
    counts: &HashMap<String, u64>,
    max_size: usize,
    min_count: u64,
) -> Result<Vocab> {
    let mut kept: Vec<(&String, u64)> = counts
        .iter()
        .filter(|&(_, &c)| c >= min_count)
        .map(|(t, &c)| (t, c))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(max_size - NUM_SPECIALS);
    if kept.is_empty() {
        return Err(Error::invalid(format!(
            "no token reaches min_count {min_count}"
        )));
    }
    Vocab::from_corpus_tokens(kept.into_iter().map(|(t, _)| t.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&str, u64)]) -> HashMap<String, u64> {
        pairs.iter().map(|&(t, c)| (t.to_string(), c)).collect()
    }

    #[test]
    fn frequency_filter_and_order() {
        let v = vocab_from_counts(&counts(&[("a", 5), ("b", 2), ("c", 1)]), 10, 2).unwrap();
        let all: Vec<_> = (0..v.len() as TokenId)
            .map(|i| v.token_of(i).unwrap())
            .collect();
        assert_eq!(all, ["[MASK]", "[UNK]", "[BOS]", "[EOS]", "a", "b"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = vocab_from_counts(&counts(&[("b", 3), ("a", 3)]), 5, 1).unwrap();
        assert_eq!(v.corpus_tokens(), ["a"]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let docs: Vec<Vec<String>> = vec![vec![]];
        let err = build_vocab(docs.iter().map(Vec::as_slice), 10, 1).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn max_size_must_leave_room() {
        let docs = [vec!["a".to_string()]];
        assert!(build_vocab(docs.iter().map(Vec::as_slice), 4, 1).is_err());
    }

    #[test]
    fn bijection_and_unk_fallback() {
        let v = Vocab::from_corpus_tokens(["x", "y", "z"]).unwrap();
        for id in 0..v.len() as TokenId {
            assert_eq!(v.id_of(v.token_of(id).unwrap()), Some(id));
        }
        assert_eq!(v.encode(&["y", "nope"]), vec![5, UNK]);
    }

    #[test]
    fn specials_cannot_collide() {
        assert!(Vocab::from_corpus_tokens(["[UNK]"]).is_err());
        assert!(Vocab::from_corpus_tokens(["a", "a"]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let v = Vocab::from_corpus_tokens(["#", "the", ","]).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let back = Vocab::read_from(&buf[..]).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
    }
}
