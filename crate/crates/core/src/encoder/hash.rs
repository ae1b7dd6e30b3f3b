//! Deterministic character-n-gram hashing embedder.
//!
//! A drop-in implementation of the embedding contract that needs no
//! training: surfaces are decomposed into boundary-marked character
//! n-grams, each hashed to a signed coordinate, and the sum is
//! L2-normalized. Morphologically close surfaces share n-grams and end up
//! with a high cosine. Context embeddings hash the neighbor surfaces
//! salted by side and distance so that word order matters.

use ndarray::Array1;

use super::MentionEncoder;

pub struct HashEncoder {
    dim: usize,
}

impl HashEncoder {
    pub fn new(dim: usize) -> HashEncoder {
        assert!(dim > 0);
        HashEncoder { dim }
    }

    fn accumulate(&self, out: &mut Array1<f64>, feature: &str, weight: f64) {
        let h = fnv1a(feature.as_bytes());
        let idx = (h % self.dim as u64) as usize;
        let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        out[idx] += sign * weight;
    }

    fn surface_features(&self, out: &mut Array1<f64>, surface: &str, salt: &str) {
        let lowered = surface.to_lowercase();
        let chars: Vec<char> = std::iter::once('^')
            .chain(lowered.chars())
            .chain(std::iter::once('$'))
            .collect();
        for n in [2usize, 3] {
            if chars.len() < n {
                continue;
            }
            for win in chars.windows(n) {
                let gram: String = win.iter().collect();
                self.accumulate(out, &format!("{salt}|{gram}"), 1.0);
            }
        }
        // whole-surface feature, weighted so exact matches dominate
        self.accumulate(out, &format!("{salt}|={lowered}"), 2.0);
    }

    fn normalized(&self, mut v: Array1<f64>) -> Array1<f64> {
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        v
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl MentionEncoder for HashEncoder {
    fn mention_dim(&self) -> usize {
        self.dim
    }

    fn context_dim(&self) -> usize {
        self.dim
    }

    fn mention_embed(&self, surface: &str) -> Array1<f64> {
        let mut v = Array1::zeros(self.dim);
        self.surface_features(&mut v, surface, "m");
        self.normalized(v)
    }

    fn context_embed(&self, mentions: &[String], target: usize) -> Array1<f64> {
        let mut v = Array1::zeros(self.dim);
        let mut any = false;
        for (j, surface) in mentions.iter().enumerate() {
            if j == target {
                continue;
            }
            any = true;
            let side = if j < target { "L" } else { "R" };
            let dist = (j as isize - target as isize).unsigned_abs().min(2);
            self.surface_features(&mut v, surface, &format!("c{side}{dist}"));
        }
        if !any {
            // fixed representation of the empty context
            self.accumulate(&mut v, "c|empty", 1.0);
        }
        self.normalized(v)
    }
}
