//! Mention and context embeddings.
//!
//! Two interchangeable implementations of the embedding contract: the
//! neural character-level encoder (pretrained CBOW-style by decoding a
//! mention's characters from its context) and a deterministic
//! character-n-gram hashing embedder for fast experimentation.

mod hash;
mod neural;

pub use hash::HashEncoder;
pub use neural::{EncoderCheckpointError, NeuralEncoder};

use ndarray::Array1;
use std::collections::HashSet;

/// The embedding contract. Both embeddings are pure functions of the
/// parameters and the input surfaces; the context embedding never looks at
/// the target mention's own surface.
pub trait MentionEncoder {
    fn mention_dim(&self) -> usize;
    fn context_dim(&self) -> usize;
    /// Embedding of the mention's character sequence. Multi-token
    /// mentions are encoded as a single sequence with literal spaces.
    fn mention_embed(&self, surface: &str) -> Array1<f64>;
    /// Embedding of the mentions around index `target`, excluding the
    /// target itself.
    fn context_embed(&self, mentions: &[String], target: usize) -> Array1<f64>;
    /// The surface form the rest of the system should key on. Identity
    /// for character-level encoders; the word-level ablation collapses
    /// unknown words here, since it has no subword information to tell
    /// them apart.
    fn canonical_surface(&self, surface: &str) -> String {
        surface.to_string()
    }
}

impl<E: MentionEncoder + ?Sized> MentionEncoder for Box<E> {
    fn mention_dim(&self) -> usize {
        (**self).mention_dim()
    }
    fn context_dim(&self) -> usize {
        (**self).context_dim()
    }
    fn mention_embed(&self, surface: &str) -> Array1<f64> {
        (**self).mention_embed(surface)
    }
    fn context_embed(&self, mentions: &[String], target: usize) -> Array1<f64> {
        (**self).context_embed(mentions, target)
    }
    fn canonical_surface(&self, surface: &str) -> String {
        (**self).canonical_surface(surface)
    }
}

/// Word-level ablation: routes every surface word through a closed
/// vocabulary, replacing unknown words with an out-of-vocabulary token
/// before the wrapped encoder sees them.
pub struct WordLevelEncoder<E> {
    inner: E,
    vocab: HashSet<String>,
}

pub const OOV_TOKEN: &str = "unkunk";

impl<E: MentionEncoder> WordLevelEncoder<E> {
    pub fn new(inner: E, vocab: impl IntoIterator<Item = String>) -> Self {
        WordLevelEncoder { inner, vocab: vocab.into_iter().map(|w| w.to_lowercase()).collect() }
    }

    fn rewrite(&self, surface: &str) -> String {
        surface
            .split_whitespace()
            .map(|w| {
                if self.vocab.contains(&w.to_lowercase()) {
                    w.to_string()
                } else {
                    OOV_TOKEN.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl<E: MentionEncoder> MentionEncoder for WordLevelEncoder<E> {
    fn mention_dim(&self) -> usize {
        self.inner.mention_dim()
    }
    fn context_dim(&self) -> usize {
        self.inner.context_dim()
    }
    fn mention_embed(&self, surface: &str) -> Array1<f64> {
        self.inner.mention_embed(&self.rewrite(surface))
    }
    fn context_embed(&self, mentions: &[String], target: usize) -> Array1<f64> {
        let rewritten: Vec<String> = mentions.iter().map(|m| self.rewrite(m)).collect();
        self.inner.context_embed(&rewritten, target)
    }
    fn canonical_surface(&self, surface: &str) -> String {
        self.rewrite(surface)
    }
}
