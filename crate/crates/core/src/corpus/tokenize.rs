//! Word-level tokenizer.
//!
//! Text is lowercased, whitespace is discarded, runs of alphanumeric
//! characters become word tokens and every other character stands alone.
//! Apostrophes therefore split contractions: `wouldn't` becomes
//! `wouldn`, `'`, `t`.

/// Splits `text` into lowercase word and punctuation tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// True for single-character, non-alphanumeric tokens.
pub fn is_punctuation(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if !c.is_alphanumeric())
}

/// Joins tokens with spaces, attaching punctuation to the preceding token.
///
/// `tokenize(&detokenize(&tokenize(s))) == tokenize(s)` for any `s`.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, token) in tokens.iter().enumerate() {
        let token = token.as_ref();
        if i > 0 && !is_punctuation(token) {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}
