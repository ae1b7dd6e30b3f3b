//! The three candidate hypotheses over KB instances and their merge.

use ndarray::Array1;
use thiserror::Error;

use crate::disambiguator::{cosine, DisambiguationUnit};
use crate::memory::{MemoryState, MentionKey};

#[derive(Debug, Error, PartialEq)]
pub enum HypothesisError {
    #[error("mention `{0}` is not registered")]
    Unregistered(String),
    #[error("hypothesis length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// String-match hypothesis: elementwise sigmoid of the mention's
/// activation row.
pub fn string_match(z: &MentionKey, state: &MemoryState) -> Result<Vec<f64>, HypothesisError> {
    let row = state
        .lookup_mention(z)
        .ok_or_else(|| HypothesisError::Unregistered(z.as_str().to_string()))?;
    Ok(state.activated_row(row))
}

/// Embedding-match hypothesis: convex combination of the activated rows,
/// weighted by shifted cosine similarity. Only the top-k cosines survive;
/// the rest are forced to -1 so their weights vanish. With no stored
/// mentions there is no evidence and the zero vector is returned.
pub fn embedding_match(embedding: &Array1<f64>, state: &MemoryState, k: usize) -> Vec<f64> {
    let n = state.instance_count();
    let m = state.mention_count();
    if m == 0 {
        return vec![0.0; n];
    }
    let mut cosines: Vec<f64> = (0..m)
        .map(|i| cosine(embedding, state.embedding_at(i)))
        .collect();
    if m > k {
        // keep the k largest cosines (ties broken by lowest row index),
        // forcing the others to -1
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| cosines[b].partial_cmp(&cosines[a]).unwrap().then(a.cmp(&b)));
        for &i in &order[k..] {
            cosines[i] = -1.0;
        }
    }
    let denom: f64 = cosines.iter().map(|c| c + 1.0).sum();
    if denom <= 0.0 {
        return vec![0.0; n];
    }
    let mut p = vec![0.0; n];
    for (i, c) in cosines.iter().enumerate() {
        let w = (c + 1.0) / denom;
        if w == 0.0 {
            continue;
        }
        for (pj, aj) in p.iter_mut().zip(state.activated_row(i)) {
            *pj += w * aj;
        }
    }
    p
}

/// Temporal hypothesis: occurrence counts normalized by their maximum.
/// An empty buffer yields the zero vector.
pub fn temporal_hyp(state: &MemoryState) -> Vec<f64> {
    let counts = state.temporal_counts();
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&u| u as f64 / max as f64).collect()
}

/// Learned importance of the temporal hypothesis, a locally supported unit
/// over mention embeddings. An untrained gate falls back to the prior.
#[derive(Debug, Clone)]
pub struct TemporalGate {
    pub unit: DisambiguationUnit,
    pub prior: f64,
}

impl TemporalGate {
    pub fn new(kappa: usize, prior: f64) -> TemporalGate {
        TemporalGate { unit: DisambiguationUnit::new(kappa), prior }
    }

    pub fn gamma(&self, mention_embedding: &Array1<f64>) -> f64 {
        if self.unit.is_empty() {
            self.prior
        } else {
            self.unit.response(mention_embedding)
        }
    }
}

/// Merged hypothesis: probabilistic OR of string and embedding evidence,
/// blended with the temporal hypothesis by gamma.
pub fn merge(
    p_z: &[f64],
    p_e: &[f64],
    p_t: &[f64],
    gamma: f64,
) -> Result<Vec<f64>, HypothesisError> {
    if p_z.len() != p_e.len() {
        return Err(HypothesisError::LengthMismatch(p_z.len(), p_e.len()));
    }
    if p_z.len() != p_t.len() {
        return Err(HypothesisError::LengthMismatch(p_z.len(), p_t.len()));
    }
    Ok(p_z
        .iter()
        .zip(p_e)
        .zip(p_t)
        .map(|((&z, &e), &t)| (1.0 - gamma) * (z + (1.0 - z) * e) + gamma * t)
        .collect())
}

/// Content-only merge (gamma = 0), used when judging the temporal gate.
pub fn content_merge(p_z: &[f64], p_e: &[f64]) -> Vec<f64> {
    p_z.iter().zip(p_e).map(|(&z, &e)| z + (1.0 - z) * e).collect()
}
