//! Minimal neural-network layers with explicit forward caches and manual
//! backward passes. Everything is `f64`, deterministic given parameters.

mod lstm;

pub use lstm::{Lstm, LstmBack, LstmRun};

use ndarray::{Array1, Array2};
use rand::Rng;

/// Parameter containers that can be flattened into a single vector, used by
/// the finite-difference gradient checks and by SGD updates.
pub trait Flat {
    fn flat_len(&self) -> usize;
    fn write_flat(&self, out: &mut Vec<f64>);
    fn read_flat(&mut self, src: &mut std::slice::Iter<f64>);
    /// `self += a * other`, elementwise over the flattened view.
    fn axpy(&mut self, a: f64, other: &Self);
}

impl Flat for Array1<f64> {
    fn flat_len(&self) -> usize {
        self.len()
    }
    fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend(self.iter());
    }
    fn read_flat(&mut self, src: &mut std::slice::Iter<f64>) {
        for v in self.iter_mut() {
            *v = *src.next().expect("flat vector too short");
        }
    }
    fn axpy(&mut self, a: f64, other: &Self) {
        self.scaled_add(a, other);
    }
}

impl Flat for Array2<f64> {
    fn flat_len(&self) -> usize {
        self.len()
    }
    fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend(self.iter());
    }
    fn read_flat(&mut self, src: &mut std::slice::Iter<f64>) {
        for v in self.iter_mut() {
            *v = *src.next().expect("flat vector too short");
        }
    }
    fn axpy(&mut self, a: f64, other: &Self) {
        self.scaled_add(a, other);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Uniform init in [-scale, scale].
pub fn rand_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

/// A dense layer `y = W x + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let scale = (6.0 / (input + output) as f64).sqrt();
        Linear { w: rand_matrix(output, input, scale, rng), b: Array1::zeros(output) }
    }

    pub fn zeros_like(&self) -> Self {
        Linear { w: Array2::zeros(self.w.raw_dim()), b: Array1::zeros(self.b.raw_dim()) }
    }

    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + &self.b
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, x: &Array1<f64>, dy: &Array1<f64>, grads: &mut Linear) -> Array1<f64> {
        for (mut row, &d) in grads.w.rows_mut().into_iter().zip(dy.iter()) {
            row.scaled_add(d, x);
        }
        grads.b += dy;
        self.w.t().dot(dy)
    }
}

impl Flat for Linear {
    fn flat_len(&self) -> usize {
        self.w.flat_len() + self.b.flat_len()
    }
    fn write_flat(&self, out: &mut Vec<f64>) {
        self.w.write_flat(out);
        self.b.write_flat(out);
    }
    fn read_flat(&mut self, src: &mut std::slice::Iter<f64>) {
        self.w.read_flat(src);
        self.b.read_flat(src);
    }
    fn axpy(&mut self, a: f64, other: &Self) {
        self.w.axpy(a, &other.w);
        self.b.axpy(a, &other.b);
    }
}

/// Row-per-code embedding table.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: Array2<f64>,
}

impl Embedding {
    pub fn new<R: Rng>(codes: usize, dim: usize, rng: &mut R) -> Self {
        Embedding { table: rand_matrix(codes, dim, 0.1, rng) }
    }

    pub fn zeros_like(&self) -> Self {
        Embedding { table: Array2::zeros(self.table.raw_dim()) }
    }

    pub fn lookup(&self, code: usize) -> Array1<f64> {
        self.table.row(code).to_owned()
    }

    pub fn accumulate(&self, code: usize, d: &Array1<f64>, grads: &mut Embedding) {
        let mut row = grads.table.row_mut(code);
        row += d;
    }
}

impl Flat for Embedding {
    fn flat_len(&self) -> usize {
        self.table.flat_len()
    }
    fn write_flat(&self, out: &mut Vec<f64>) {
        self.table.write_flat(out);
    }
    fn read_flat(&mut self, src: &mut std::slice::Iter<f64>) {
        self.table.read_flat(src);
    }
    fn axpy(&mut self, a: f64, other: &Self) {
        self.table.axpy(a, &other.table);
    }
}

/// Softmax of `logits`.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Array1<f64> = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Cross-entropy of a softmax distribution against a single target class.
/// Returns (loss, d_logits).
pub fn softmax_ce(logits: &Array1<f64>, target: usize) -> (f64, Array1<f64>) {
    let probs = softmax(logits);
    let loss = -(probs[target].max(1e-300)).ln();
    let mut d = probs;
    d[target] -= 1.0;
    (loss, d)
}
