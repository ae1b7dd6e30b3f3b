//! Tokenization and surface-form normalization.

/// A token of a sentence, with the character span it covers in the raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Byte-oriented character offset of the first char in the sentence.
    pub start: usize,
    /// One past the last char (character offsets, not bytes).
    pub end: usize,
}

impl Token {
    pub fn is_punctuation(&self) -> bool {
        self.text.chars().all(|c| !c.is_alphanumeric())
    }
}

/// Splits on whitespace and punctuation; punctuation chars become their own
/// single-char tokens. Offsets are character offsets into the input.
pub fn tokenize(sentence: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut cur_start = 0usize;
    for (i, c) in sentence.chars().enumerate() {
        if c.is_whitespace() {
            if !cur.is_empty() {
                tokens.push(Token { text: std::mem::take(&mut cur), start: cur_start, end: i });
            }
        } else if c.is_alphanumeric() || c == '\'' {
            if cur.is_empty() {
                cur_start = i;
            }
            cur.push(c);
        } else {
            if !cur.is_empty() {
                tokens.push(Token { text: std::mem::take(&mut cur), start: cur_start, end: i });
            }
            tokens.push(Token { text: c.to_string(), start: i, end: i + 1 });
        }
    }
    if !cur.is_empty() {
        let n = sentence.chars().count();
        tokens.push(Token { text: cur, start: cur_start, end: n });
    }
    tokens
}

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}
