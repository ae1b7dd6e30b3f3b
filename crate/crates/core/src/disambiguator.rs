//! Locally supported disambiguation units and the gated system output.

use ndarray::Array1;

/// Cosine that treats zero vectors as orthogonal to everything.
pub fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Per-instance context model: up to `kappa` unit-norm centroids.
#[derive(Debug, Clone)]
pub struct DisambiguationUnit {
    pub centroids: Vec<Array1<f64>>,
    pub kappa: usize,
}

impl DisambiguationUnit {
    pub fn new(kappa: usize) -> DisambiguationUnit {
        DisambiguationUnit { centroids: Vec::new(), kappa }
    }

    pub fn used_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Similarity response in [0, 1]: 1/2 + 1/2 max-cosine over the
    /// centroids. An empty unit responds 0: an instance with no context
    /// model cannot claim a context.
    pub fn response(&self, context: &Array1<f64>) -> f64 {
        match self.max_cosine(context) {
            Some(c) => 0.5 + 0.5 * c,
            None => 0.0,
        }
    }

    pub fn max_cosine(&self, context: &Array1<f64>) -> Option<f64> {
        self.centroids
            .iter()
            .map(|w| cosine(context, w))
            .fold(None, |acc, c| Some(acc.map_or(c, |a: f64| a.max(c))))
    }

    /// Index of the centroid closest (by cosine) to `context`.
    pub fn nearest(&self, context: &Array1<f64>) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, w) in self.centroids.iter().enumerate() {
            let c = cosine(context, w);
            if best.map_or(true, |(_, bc)| c > bc) {
                best = Some((j, c));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Adds a unit-norm centroid at `context`; no-op when full or when the
    /// context has zero norm.
    pub fn allocate(&mut self, context: &Array1<f64>) -> bool {
        if self.centroids.len() >= self.kappa {
            return false;
        }
        let norm = context.dot(context).sqrt();
        if norm == 0.0 {
            return false;
        }
        self.centroids.push(context / norm);
        true
    }

    /// Moves the given centroid toward (`sign` = +1) or away from
    /// (`sign` = -1) the context by the gradient of the quadratic loss,
    /// then renormalizes.
    pub fn gradient_step(&mut self, idx: usize, context: &Array1<f64>, rate: f64, sign: f64) {
        let norm = context.dot(context).sqrt();
        if norm == 0.0 {
            return;
        }
        let unit_ctx = context / norm;
        let w = &self.centroids[idx];
        let c = cosine(context, w);
        // d cos / d w for unit-norm w
        let grad = &unit_ctx - &(c * w);
        let step = match sign >= 0.0 {
            true => rate * (1.0 - self.response_of(c)),
            false => -rate * self.response_of(c),
        };
        let mut moved = w + &(step * &grad);
        let mnorm = moved.dot(&moved).sqrt();
        if mnorm > 0.0 {
            moved /= mnorm;
            self.centroids[idx] = moved;
        }
    }

    fn response_of(&self, cos: f64) -> f64 {
        0.5 + 0.5 * cos
    }

    pub fn check_invariants(&self) {
        assert!(self.centroids.len() <= self.kappa);
        for w in &self.centroids {
            let n = w.dot(w).sqrt();
            assert!((n - 1.0).abs() < 1e-9, "centroid norm {n}");
        }
    }
}

/// Gated system output: entries with candidate score at or below the reject
/// threshold are zeroed and their units are never evaluated.
pub fn output<F: FnMut(usize) -> f64>(
    p: &[f64],
    mut unit_response: F,
    tau_r: f64,
    eta: f64,
) -> Vec<f64> {
    p.iter()
        .enumerate()
        .map(|(i, &pi)| {
            if pi > tau_r {
                eta * pi + (1.0 - eta) * unit_response(i)
            } else {
                0.0
            }
        })
        .collect()
}

/// `argmax(o)` with lowest-id tie-break. Errors on an empty KB.
pub fn link(o: &[f64]) -> Result<usize, &'static str> {
    if o.is_empty() {
        return Err("cannot link against an empty knowledge base");
    }
    let mut best = 0usize;
    for (i, &v) in o.iter().enumerate() {
        if v > o[best] {
            best = i;
        }
    }
    Ok(best)
}
