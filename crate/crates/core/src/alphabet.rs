//! Fixed character alphabet for the character-level networks.
//!
//! Characters outside the alphabet map to a reserved unknown code, so any
//! string is encodable without a vocabulary.

/// Reserved code for characters outside the alphabet.
pub const UNKNOWN: usize = 0;

const CHARS: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,;:!?'\"-()";

/// Number of character codes, including the unknown code.
pub fn size() -> usize {
    CHARS.chars().count() + 1
}

/// Maps a character to its code. Unknown characters get [`UNKNOWN`].
pub fn encode(c: char) -> usize {
    CHARS.chars().position(|a| a == c).map(|i| i + 1).unwrap_or(UNKNOWN)
}

/// Encodes a string into a sequence of character codes.
pub fn encode_str(s: &str) -> Vec<usize> {
    s.chars().map(encode).collect()
}

/// The lowercase letters, used by the typo model as substitution targets.
pub fn letters() -> Vec<char> {
    ('a'..='z').collect()
}
