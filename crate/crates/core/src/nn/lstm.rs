//! LSTM cell with an explicit forward cache and full BPTT.

use ndarray::{s, Array1, Array2};
use rand::Rng;

use super::{rand_matrix, sigmoid, Flat};

/// Gate order inside the packed pre-activation vector: input, forget,
/// candidate, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w: Array2<f64>, // (4h, input)
    pub u: Array2<f64>, // (4h, h)
    pub b: Array1<f64>, // (4h)
}

struct StepCache {
    x: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    tanh_c: Array1<f64>,
}

/// Forward cache of one sequence run. `hs[t]`/`cs[t]` are the states after
/// consuming `t` inputs; index 0 holds the initial state.
pub struct LstmRun {
    pub hs: Vec<Array1<f64>>,
    cs: Vec<Array1<f64>>,
    steps: Vec<StepCache>,
}

impl LstmRun {
    pub fn len(&self) -> usize {
        self.steps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
    /// Hidden state after the full sequence.
    pub fn last_h(&self) -> &Array1<f64> {
        self.hs.last().unwrap()
    }
}

/// Gradients flowing out of a backward pass.
pub struct LstmBack {
    pub d_xs: Vec<Array1<f64>>,
    pub d_h0: Array1<f64>,
    pub d_c0: Array1<f64>,
}

impl Lstm {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let scale = (1.0 / (input.max(hidden)) as f64).sqrt();
        Lstm {
            w: rand_matrix(4 * hidden, input, scale, rng),
            u: rand_matrix(4 * hidden, hidden, scale, rng),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Lstm {
            w: Array2::zeros(self.w.raw_dim()),
            u: Array2::zeros(self.u.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    /// Runs the cell over `xs` starting from zero states.
    pub fn forward(&self, xs: &[Array1<f64>]) -> LstmRun {
        let h = self.hidden();
        self.forward_from(xs, Array1::zeros(h), Array1::zeros(h))
    }

    /// Runs the cell over `xs` from the given initial states.
    pub fn forward_from(&self, xs: &[Array1<f64>], h0: Array1<f64>, c0: Array1<f64>) -> LstmRun {
        let h = self.hidden();
        let mut hs = vec![h0];
        let mut cs = vec![c0];
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let a = self.w.dot(x) + self.u.dot(hs.last().unwrap()) + &self.b;
            let i = a.slice(s![0..h]).mapv(sigmoid);
            let f = a.slice(s![h..2 * h]).mapv(sigmoid);
            let g = a.slice(s![2 * h..3 * h]).mapv(f64::tanh);
            let o = a.slice(s![3 * h..4 * h]).mapv(sigmoid);
            let c = &f * cs.last().unwrap() + &i * &g;
            let tanh_c = c.mapv(f64::tanh);
            let hnew = &o * &tanh_c;
            hs.push(hnew);
            cs.push(c.clone());
            steps.push(StepCache { x: x.clone(), i, f, g, o, tanh_c });
        }
        LstmRun { hs, cs, steps }
    }

    /// BPTT. `d_hs[t]` is the loss gradient arriving directly at output
    /// `hs[t+1]`; pass zero vectors for unused positions. Parameter
    /// gradients are accumulated into `grads`.
    pub fn backward(&self, run: &LstmRun, d_hs: &[Array1<f64>], grads: &mut Lstm) -> LstmBack {
        assert_eq!(d_hs.len(), run.len());
        let h = self.hidden();
        let mut d_h = Array1::<f64>::zeros(h);
        let mut d_c = Array1::<f64>::zeros(h);
        let mut d_xs = vec![Array1::<f64>::zeros(0); run.len()];
        for t in (0..run.len()).rev() {
            let st = &run.steps[t];
            d_h += &d_hs[t];
            let d_o = &d_h * &st.tanh_c;
            d_c += &(&d_h * &st.o * st.tanh_c.mapv(|v| 1.0 - v * v));
            let d_i = &d_c * &st.g;
            let d_g = &d_c * &st.i;
            let d_f = &d_c * &run.cs[t];
            let d_c_prev = &d_c * &st.f;

            let mut d_a = Array1::<f64>::zeros(4 * h);
            d_a.slice_mut(s![0..h]).assign(&(&d_i * &st.i * st.i.mapv(|v| 1.0 - v)));
            d_a.slice_mut(s![h..2 * h]).assign(&(&d_f * &st.f * st.f.mapv(|v| 1.0 - v)));
            d_a.slice_mut(s![2 * h..3 * h]).assign(&(&d_g * st.g.mapv(|v| 1.0 - v * v)));
            d_a.slice_mut(s![3 * h..4 * h]).assign(&(&d_o * &st.o * st.o.mapv(|v| 1.0 - v)));

            for (mut row, &d) in grads.w.rows_mut().into_iter().zip(d_a.iter()) {
                row.scaled_add(d, &st.x);
            }
            for (mut row, &d) in grads.u.rows_mut().into_iter().zip(d_a.iter()) {
                row.scaled_add(d, &run.hs[t]);
            }
            grads.b += &d_a;

            d_xs[t] = self.w.t().dot(&d_a);
            d_h = self.u.t().dot(&d_a);
            d_c = d_c_prev;
        }
        LstmBack { d_xs, d_h0: d_h, d_c0: d_c }
    }
}

impl Flat for Lstm {
    fn flat_len(&self) -> usize {
        self.w.flat_len() + self.u.flat_len() + self.b.flat_len()
    }
    fn write_flat(&self, out: &mut Vec<f64>) {
        self.w.write_flat(out);
        self.u.write_flat(out);
        self.b.write_flat(out);
    }
    fn read_flat(&mut self, src: &mut std::slice::Iter<f64>) {
        self.w.read_flat(src);
        self.u.read_flat(src);
        self.b.read_flat(src);
    }
    fn axpy(&mut self, a: f64, other: &Self) {
        self.w.axpy(a, &other.w);
        self.u.axpy(a, &other.u);
        self.b.axpy(a, &other.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_loss(cell: &Lstm, xs: &[Array1<f64>], probe: &Array1<f64>) -> f64 {
        // sum over positions of probe·h_t, a simple linear readout
        let run = cell.forward(xs);
        run.hs[1..].iter().map(|h| probe.dot(h)).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cell = Lstm::new(3, 2, &mut rng);
        let xs: Vec<Array1<f64>> = (0..4)
            .map(|_| Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let probe = arr1(&[0.7, -0.4]);

        let run = cell.forward(&xs);
        let d_hs: Vec<Array1<f64>> = (0..xs.len()).map(|_| probe.clone()).collect();
        let mut grads = cell.zeros_like();
        let back = cell.backward(&run, &d_hs, &mut grads);

        let mut flat = Vec::new();
        cell.write_flat(&mut flat);
        let mut gflat = Vec::new();
        grads.write_flat(&mut gflat);
        let eps = 1e-6;
        for idx in (0..flat.len()).step_by(3) {
            let mut perturbed = cell.clone();
            let mut v = flat.clone();
            v[idx] += eps;
            perturbed.read_flat(&mut v.iter());
            let up = scalar_loss(&perturbed, &xs, &probe);
            v[idx] -= 2.0 * eps;
            perturbed.read_flat(&mut v.iter());
            let down = scalar_loss(&perturbed, &xs, &probe);
            let num = (up - down) / (2.0 * eps);
            let rel = (num - gflat[idx]).abs() / num.abs().max(gflat[idx].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {idx}: {num} vs {}", gflat[idx]);
        }

        // input gradients
        for t in 0..xs.len() {
            for d in 0..3 {
                let mut xs2: Vec<Array1<f64>> = xs.to_vec();
                xs2[t][d] += eps;
                let up = scalar_loss(&cell, &xs2, &probe);
                xs2[t][d] -= 2.0 * eps;
                let down = scalar_loss(&cell, &xs2, &probe);
                let num = (up - down) / (2.0 * eps);
                let ana = back.d_xs[t][d];
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
                assert!(rel < 1e-4, "x[{t}][{d}]: {num} vs {ana}");
            }
        }
    }

    #[test]
    fn initial_state_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cell = Lstm::new(2, 2, &mut rng);
        let xs: Vec<Array1<f64>> = (0..3)
            .map(|_| Array1::from_shape_fn(2, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let probe = arr1(&[0.3, 0.9]);
        let h0 = arr1(&[0.1, -0.2]);
        let c0 = arr1(&[0.05, 0.4]);

        let run = cell.forward_from(&xs, h0.clone(), c0.clone());
        let mut d_hs: Vec<Array1<f64>> = (0..xs.len()).map(|_| Array1::zeros(2)).collect();
        *d_hs.last_mut().unwrap() = probe.clone();
        let mut grads = cell.zeros_like();
        let back = cell.backward(&run, &d_hs, &mut grads);

        let eps = 1e-6;
        for d in 0..2 {
            let mut h0p = h0.clone();
            h0p[d] += eps;
            let up = probe.dot(cell.forward_from(&xs, h0p.clone(), c0.clone()).last_h());
            h0p[d] -= 2.0 * eps;
            let down = probe.dot(cell.forward_from(&xs, h0p, c0.clone()).last_h());
            let num = (up - down) / (2.0 * eps);
            assert!((num - back.d_h0[d]).abs() < 1e-6);
        }
        for d in 0..2 {
            let mut c0p = c0.clone();
            c0p[d] += eps;
            let up = probe.dot(cell.forward_from(&xs, h0.clone(), c0p.clone()).last_h());
            c0p[d] -= 2.0 * eps;
            let down = probe.dot(cell.forward_from(&xs, h0.clone(), c0p).last_h());
            let num = (up - down) / (2.0 * eps);
            assert!((num - back.d_c0[d]).abs() < 1e-6);
        }
    }
}
