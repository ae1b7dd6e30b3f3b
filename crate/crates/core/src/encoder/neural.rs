//! Character-level neural encoder and decoder.
//!
//! Mentions are encoded by a bidirectional character LSTM; contexts by a
//! pair of LSTMs running over the surrounding mention embeddings (forward
//! over the left context, backward over the right context, excluding the
//! target). Pretraining decodes a mention's characters from its context
//! embedding with a cross-entropy loss, teacher forced.

use ndarray::{s, Array1};
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::alphabet;
use crate::nn::{softmax_ce, Embedding, Flat, Linear, Lstm, LstmRun};
use crate::noise::inject_typos;

use super::MentionEncoder;

pub struct NeuralEncoder {
    pub char_emb: Embedding,
    pub char_fwd: Lstm,
    pub char_bwd: Lstm,
    pub ctx_fwd: Lstm,
    pub ctx_bwd: Lstm,
    pub dec_proj: Linear,
    pub dec_emb: Embedding,
    pub dec_cell: Lstm,
    pub dec_out: Linear,
    char_hidden: usize,
    ctx_hidden: usize,
}

#[derive(Debug, Error)]
pub enum EncoderCheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("parameter count mismatch")]
    Shape,
}

struct MentionCache {
    codes: Vec<usize>,
    run_f: LstmRun,
    run_b: LstmRun,
}

struct ContextCache {
    left: Vec<MentionCache>,
    right: Vec<MentionCache>, // in reverse sentence order, matching run_b inputs
    run_f: LstmRun,
    run_b: LstmRun,
}

struct DecodeCache {
    proj_in: Array1<f64>,
    h0: Array1<f64>,
    inputs: Vec<usize>,
    targets: Vec<usize>,
    run: LstmRun,
}

impl NeuralEncoder {
    pub fn new<R: Rng>(char_emb: usize, char_hidden: usize, ctx_hidden: usize, rng: &mut R) -> Self {
        let a = alphabet::size();
        NeuralEncoder {
            char_emb: Embedding::new(a, char_emb, rng),
            char_fwd: Lstm::new(char_emb, char_hidden, rng),
            char_bwd: Lstm::new(char_emb, char_hidden, rng),
            ctx_fwd: Lstm::new(2 * char_hidden, ctx_hidden, rng),
            ctx_bwd: Lstm::new(2 * char_hidden, ctx_hidden, rng),
            dec_proj: Linear::new(2 * ctx_hidden, ctx_hidden, rng),
            dec_emb: Embedding::new(a + 1, char_emb, rng), // +1 for the start symbol
            dec_cell: Lstm::new(char_emb, ctx_hidden, rng),
            dec_out: Linear::new(ctx_hidden, a + 1, rng), // +1 for end-of-mention
            char_hidden,
            ctx_hidden,
        }
    }

    pub fn zeros_like(&self) -> Self {
        NeuralEncoder {
            char_emb: self.char_emb.zeros_like(),
            char_fwd: self.char_fwd.zeros_like(),
            char_bwd: self.char_bwd.zeros_like(),
            ctx_fwd: self.ctx_fwd.zeros_like(),
            ctx_bwd: self.ctx_bwd.zeros_like(),
            dec_proj: self.dec_proj.zeros_like(),
            dec_emb: self.dec_emb.zeros_like(),
            dec_cell: self.dec_cell.zeros_like(),
            dec_out: self.dec_out.zeros_like(),
            char_hidden: self.char_hidden,
            ctx_hidden: self.ctx_hidden,
        }
    }

    fn bos_code(&self) -> usize {
        alphabet::size()
    }

    fn eom_class(&self) -> usize {
        alphabet::size()
    }

    fn mention_forward(&self, surface: &str) -> (Array1<f64>, MentionCache) {
        let codes = alphabet::encode_str(surface);
        assert!(!codes.is_empty(), "mention surface must be non-empty");
        let xs: Vec<Array1<f64>> = codes.iter().map(|&c| self.char_emb.lookup(c)).collect();
        let xs_rev: Vec<Array1<f64>> = xs.iter().rev().cloned().collect();
        let run_f = self.char_fwd.forward(&xs);
        let run_b = self.char_bwd.forward(&xs_rev);
        let mut out = Array1::zeros(2 * self.char_hidden);
        out.slice_mut(s![0..self.char_hidden]).assign(run_f.last_h());
        out.slice_mut(s![self.char_hidden..]).assign(run_b.last_h());
        (out, MentionCache { codes, run_f, run_b })
    }

    fn mention_backward(&self, cache: &MentionCache, d_out: &Array1<f64>, grads: &mut Self) {
        let h = self.char_hidden;
        let len = cache.codes.len();
        let zero = Array1::<f64>::zeros(h);
        let mut d_f: Vec<Array1<f64>> = vec![zero.clone(); len];
        *d_f.last_mut().unwrap() = d_out.slice(s![0..h]).to_owned();
        let mut d_b: Vec<Array1<f64>> = vec![zero; len];
        *d_b.last_mut().unwrap() = d_out.slice(s![h..]).to_owned();
        let back_f = self.char_fwd.backward(&cache.run_f, &d_f, &mut grads.char_fwd);
        let back_b = self.char_bwd.backward(&cache.run_b, &d_b, &mut grads.char_bwd);
        for (t, d) in back_f.d_xs.iter().enumerate() {
            self.char_emb.accumulate(cache.codes[t], d, &mut grads.char_emb);
        }
        for (t, d) in back_b.d_xs.iter().enumerate() {
            self.char_emb.accumulate(cache.codes[len - 1 - t], d, &mut grads.char_emb);
        }
    }

    fn context_forward(&self, mentions: &[String], target: usize) -> (Array1<f64>, ContextCache) {
        let mut left = Vec::new();
        let mut left_inputs = Vec::new();
        for m in &mentions[..target] {
            let (e, cache) = self.mention_forward(m);
            left_inputs.push(e);
            left.push(cache);
        }
        let mut right = Vec::new();
        let mut right_inputs = Vec::new();
        for m in mentions[target + 1..].iter().rev() {
            let (e, cache) = self.mention_forward(m);
            right_inputs.push(e);
            right.push(cache);
        }
        let run_f = self.ctx_fwd.forward(&left_inputs);
        let run_b = self.ctx_bwd.forward(&right_inputs);
        let mut out = Array1::zeros(2 * self.ctx_hidden);
        out.slice_mut(s![0..self.ctx_hidden]).assign(run_f.last_h());
        out.slice_mut(s![self.ctx_hidden..]).assign(run_b.last_h());
        (out, ContextCache { left, right, run_f, run_b })
    }

    fn context_backward(&self, cache: &ContextCache, d_out: &Array1<f64>, grads: &mut Self) {
        let xh = self.ctx_hidden;
        if !cache.run_f.is_empty() {
            let len = cache.run_f.len();
            let mut d_hs = vec![Array1::<f64>::zeros(xh); len];
            *d_hs.last_mut().unwrap() = d_out.slice(s![0..xh]).to_owned();
            let back = self.ctx_fwd.backward(&cache.run_f, &d_hs, &mut grads.ctx_fwd);
            for (m_cache, d_e) in cache.left.iter().zip(&back.d_xs) {
                self.mention_backward(m_cache, d_e, grads);
            }
        }
        if !cache.run_b.is_empty() {
            let len = cache.run_b.len();
            let mut d_hs = vec![Array1::<f64>::zeros(xh); len];
            *d_hs.last_mut().unwrap() = d_out.slice(s![xh..]).to_owned();
            let back = self.ctx_bwd.backward(&cache.run_b, &d_hs, &mut grads.ctx_bwd);
            for (m_cache, d_e) in cache.right.iter().zip(&back.d_xs) {
                self.mention_backward(m_cache, d_e, grads);
            }
        }
    }

    fn decode_forward(&self, context: &Array1<f64>, target: &str) -> (f64, DecodeCache) {
        let codes = alphabet::encode_str(target);
        assert!(!codes.is_empty(), "decode target must be non-empty");
        let proj_in = context.clone();
        let h0 = self.dec_proj.forward(context).mapv(f64::tanh);
        // teacher forcing: step t consumes targets[t-1] (start symbol at
        // t=0) and predicts targets[t]; the last step predicts end-of-mention
        let mut inputs = vec![self.bos_code()];
        inputs.extend(&codes);
        let mut targets = codes;
        targets.push(self.eom_class());
        let xs: Vec<Array1<f64>> = inputs.iter().map(|&c| self.dec_emb.lookup(c)).collect();
        let run = self
            .dec_cell
            .forward_from(&xs, h0.clone(), Array1::zeros(self.ctx_hidden));
        let mut loss = 0.0;
        for (t, &tgt) in targets.iter().enumerate() {
            let logits = self.dec_out.forward(&run.hs[t + 1]);
            loss += softmax_ce(&logits, tgt).0;
        }
        (loss, DecodeCache { proj_in, h0, inputs, targets, run })
    }

    /// Backward of the decode loss; returns the gradient w.r.t. the
    /// context embedding.
    fn decode_backward(&self, cache: &DecodeCache, grads: &mut Self) -> Array1<f64> {
        let steps = cache.targets.len();
        let mut d_hs = Vec::with_capacity(steps);
        for (t, &tgt) in cache.targets.iter().enumerate() {
            let h = &cache.run.hs[t + 1];
            let logits = self.dec_out.forward(h);
            let (_, d_logits) = softmax_ce(&logits, tgt);
            d_hs.push(self.dec_out.backward(h, &d_logits, &mut grads.dec_out));
        }
        let back = self.dec_cell.backward(&cache.run, &d_hs, &mut grads.dec_cell);
        for (t, d) in back.d_xs.iter().enumerate() {
            self.dec_emb.accumulate(cache.inputs[t], d, &mut grads.dec_emb);
        }
        // through tanh into the projection
        let d_pre = &back.d_h0 * &cache.h0.mapv(|v| 1.0 - v * v);
        self.dec_proj.backward(&cache.proj_in, &d_pre, &mut grads.dec_proj)
    }

    /// Cross-entropy of decoding `target` from the given context embedding.
    pub fn decode_loss(&self, context: &Array1<f64>, target: &str) -> f64 {
        self.decode_forward(context, target).0
    }

    /// Decode loss plus its gradient w.r.t. the context embedding
    /// (decoder parameter gradients land in `grads`).
    pub fn decode_loss_with_grad(
        &self,
        context: &Array1<f64>,
        target: &str,
        grads: &mut Self,
    ) -> (f64, Array1<f64>) {
        let (loss, cache) = self.decode_forward(context, target);
        let d_ctx = self.decode_backward(&cache, grads);
        (loss, d_ctx)
    }

    /// Full pretraining loss of one (sentence, target) pair: encode the
    /// context around the target mention, decode the target's characters.
    pub fn sentence_loss(&self, mentions: &[String], target: usize) -> f64 {
        let (ctx, _) = self.context_forward(mentions, target);
        self.decode_loss(&ctx, &mentions[target])
    }

    /// Analytic gradients of [`Self::sentence_loss`] over all parameters.
    pub fn sentence_grads(&self, mentions: &[String], target: usize) -> (f64, Self) {
        let mut grads = self.zeros_like();
        let (ctx, ctx_cache) = self.context_forward(mentions, target);
        let (loss, dec_cache) = self.decode_forward(&ctx, &mentions[target]);
        let d_ctx = self.decode_backward(&dec_cache, &mut grads);
        self.context_backward(&ctx_cache, &d_ctx, &mut grads);
        (loss, grads)
    }

    /// One online pass over segmented sentences; returns the mean loss of
    /// the pass (computed before each update, so a decreasing value
    /// reflects actual progress). Typo noise perturbs the inputs only.
    pub fn pretrain_pass<R: Rng>(
        &mut self,
        sentences: &[Vec<String>],
        lr: f64,
        typo_rate: f64,
        rng: &mut R,
    ) -> Result<f64, &'static str> {
        if sentences.is_empty() {
            return Err("empty pretraining corpus");
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for sentence in sentences {
            if sentence.is_empty() {
                continue;
            }
            let noisy: Vec<String> = sentence
                .iter()
                .map(|m| {
                    let t = inject_typos(m, typo_rate, rng);
                    if t.is_empty() { m.clone() } else { t }
                })
                .collect();
            for target in 0..sentence.len() {
                // clean decoding target, noisy context inputs
                let mut input = noisy.clone();
                input[target] = sentence[target].clone();
                let (loss, grads) = self.sentence_grads(&input, target);
                total += loss;
                count += 1;
                self.axpy(-lr, &grads);
            }
        }
        if count == 0 {
            return Err("empty pretraining corpus");
        }
        Ok(total / count as f64)
    }

    /// Mean decode loss without updating, for before/after comparisons.
    pub fn mean_loss(&self, sentences: &[Vec<String>]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for sentence in sentences {
            for target in 0..sentence.len() {
                total += self.sentence_loss(sentence, target);
                count += 1;
            }
        }
        total / count.max(1) as f64
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), EncoderCheckpointError> {
        let mut out = String::new();
        out.push_str("streamkb-encoder v1\n");
        out.push_str(&format!(
            "char_emb {} char_hidden {} ctx_hidden {} alphabet {}\n",
            self.char_emb.table.ncols(),
            self.char_hidden,
            self.ctx_hidden,
            alphabet::size()
        ));
        let mut flat = Vec::new();
        self.write_flat(&mut flat);
        for v in flat {
            out.push_str(&format!("{v:.17e}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EncoderCheckpointError> {
        let body = std::fs::read_to_string(path)?;
        let mut lines = body.lines();
        let magic = lines.next().unwrap_or("");
        if magic != "streamkb-encoder v1" {
            return Err(EncoderCheckpointError::Header(magic.to_string()));
        }
        let dims = lines.next().unwrap_or("");
        let fields: Vec<&str> = dims.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(EncoderCheckpointError::Header(dims.to_string()));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| EncoderCheckpointError::Header(dims.to_string()));
        let ce = parse(fields[1])?;
        let ch = parse(fields[3])?;
        let xh = parse(fields[5])?;
        let a = parse(fields[7])?;
        if a != alphabet::size() {
            return Err(EncoderCheckpointError::Header(format!("alphabet {a}")));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut enc = NeuralEncoder::new(ce, ch, xh, &mut rng);
        let values: Result<Vec<f64>, _> = lines.map(|l| l.trim().parse::<f64>()).collect();
        let values = values.map_err(|_| EncoderCheckpointError::Shape)?;
        if values.len() != enc.flat_len() {
            return Err(EncoderCheckpointError::Shape);
        }
        enc.read_flat(&mut values.iter());
        Ok(enc)
    }
}

impl MentionEncoder for NeuralEncoder {
    fn mention_dim(&self) -> usize {
        2 * self.char_hidden
    }
    fn context_dim(&self) -> usize {
        2 * self.ctx_hidden
    }
    fn mention_embed(&self, surface: &str) -> Array1<f64> {
        self.mention_forward(surface).0
    }
    fn context_embed(&self, mentions: &[String], target: usize) -> Array1<f64> {
        self.context_forward(mentions, target).0
    }
}

impl Flat for NeuralEncoder {
    fn flat_len(&self) -> usize {
        self.char_emb.flat_len()
            + self.char_fwd.flat_len()
            + self.char_bwd.flat_len()
            + self.ctx_fwd.flat_len()
            + self.ctx_bwd.flat_len()
            + self.dec_proj.flat_len()
            + self.dec_emb.flat_len()
            + self.dec_cell.flat_len()
            + self.dec_out.flat_len()
    }
    fn write_flat(&self, out: &mut Vec<f64>) {
        self.char_emb.write_flat(out);
        self.char_fwd.write_flat(out);
        self.char_bwd.write_flat(out);
        self.ctx_fwd.write_flat(out);
        self.ctx_bwd.write_flat(out);
        self.dec_proj.write_flat(out);
        self.dec_emb.write_flat(out);
        self.dec_cell.write_flat(out);
        self.dec_out.write_flat(out);
    }
    fn read_flat(&mut self, src: &mut std::slice::Iter<f64>) {
        self.char_emb.read_flat(src);
        self.char_fwd.read_flat(src);
        self.char_bwd.read_flat(src);
        self.ctx_fwd.read_flat(src);
        self.ctx_bwd.read_flat(src);
        self.dec_proj.read_flat(src);
        self.dec_emb.read_flat(src);
        self.dec_cell.read_flat(src);
        self.dec_out.read_flat(src);
    }
    fn axpy(&mut self, a: f64, other: &Self) {
        self.char_emb.axpy(a, &other.char_emb);
        self.char_fwd.axpy(a, &other.char_fwd);
        self.char_bwd.axpy(a, &other.char_bwd);
        self.ctx_fwd.axpy(a, &other.ctx_fwd);
        self.ctx_bwd.axpy(a, &other.ctx_bwd);
        self.dec_proj.axpy(a, &other.dec_proj);
        self.dec_emb.axpy(a, &other.dec_emb);
        self.dec_cell.axpy(a, &other.dec_cell);
        self.dec_out.axpy(a, &other.dec_out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(rng: &mut ChaCha8Rng) -> NeuralEncoder {
        NeuralEncoder::new(3, 2, 2, rng)
    }

    #[test]
    fn embeddings_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let enc = tiny(&mut rng);
        assert_eq!(enc.mention_embed("cat"), enc.mention_embed("cat"));
        let s = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        assert_eq!(enc.context_embed(&s, 1), enc.context_embed(&s, 1));
    }

    #[test]
    fn single_char_mention_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let enc = tiny(&mut rng);
        let e = enc.mention_embed("x");
        assert!(e.iter().all(|v| v.is_finite()));
        assert!(e.dot(&e) > 0.0);
    }

    #[test]
    fn context_ignores_target_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let enc = tiny(&mut rng);
        let a = enc.context_embed(
            &["clyde".into(), "went to".into(), "the office".into()],
            1,
        );
        let b = enc.context_embed(
            &["clyde".into(), "REPLACED".into(), "the office".into()],
            1,
        );
        assert_eq!(a, b);
    }

    #[test]
    fn single_mention_context_is_initial_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let enc = tiny(&mut rng);
        let e = enc.context_embed(&["only".into()], 0);
        // both sides empty: the concatenated initial (zero) states
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn context_is_sensitive_to_other_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let enc = tiny(&mut rng);
        let a = enc.context_embed(&["aa".into(), "x".into(), "bb".into()], 1);
        let b = enc.context_embed(&["bb".into(), "x".into(), "aa".into()], 1);
        assert_ne!(a, b);
    }

    #[test]
    fn decode_loss_is_nonnegative_definitional() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let enc = tiny(&mut rng);
        let ctx = Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0));
        let loss = enc.decode_loss(&ctx, "ab");
        assert!(loss >= 0.0);
        // loss is the summed char cross-entropies incl. the end symbol:
        // with |alphabet|+1 classes and near-uniform logits it starts
        // around (len+1) * ln(classes)
        let classes = (alphabet::size() + 1) as f64;
        assert!(loss < 3.0 * 2.0 * classes.ln());
    }

    #[test]
    fn decode_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let enc = tiny(&mut rng);
        let ctx = Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0));
        let mut grads = enc.zeros_like();
        let (_, d_ctx) = enc.decode_loss_with_grad(&ctx, "ab", &mut grads);
        let eps = 1e-6;
        for d in 0..ctx.len() {
            let mut up = ctx.clone();
            up[d] += eps;
            let mut down = ctx.clone();
            down[d] -= eps;
            let num = (enc.decode_loss(&up, "ab") - enc.decode_loss(&down, "ab")) / (2.0 * eps);
            let rel = (num - d_ctx[d]).abs() / num.abs().max(d_ctx[d].abs()).max(1e-8);
            assert!(rel < 1e-4, "ctx[{d}]: {num} vs {}", d_ctx[d]);
        }
    }

    #[test]
    fn full_parameter_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let mut enc = tiny(&mut rng);
        let mentions: Vec<String> = vec!["ab".into(), "ca".into(), "bc".into()];
        let (_, grads) = enc.sentence_grads(&mentions, 1);
        let mut gflat = Vec::new();
        grads.write_flat(&mut gflat);
        let mut flat = Vec::new();
        enc.write_flat(&mut flat);
        let eps = 1e-5;
        let mut checked = 0;
        for i in (0..flat.len()).step_by(7) {
            let orig = flat[i];
            flat[i] = orig + eps;
            enc.read_flat(&mut flat.iter());
            let up = enc.sentence_loss(&mentions, 1);
            flat[i] = orig - eps;
            enc.read_flat(&mut flat.iter());
            let down = enc.sentence_loss(&mentions, 1);
            flat[i] = orig;
            enc.read_flat(&mut flat.iter());
            let num = (up - down) / (2.0 * eps);
            let denom = num.abs().max(gflat[i].abs());
            if denom < 1e-7 {
                continue;
            }
            let diff = (num - gflat[i]).abs();
            // relative check with an absolute floor for tiny gradients,
            // where central differences are dominated by roundoff
            assert!(diff / denom < 1e-4 || diff < 1e-9, "param {i}: {num} vs {}", gflat[i]);
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn pretraining_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let mut enc = NeuralEncoder::new(4, 6, 6, &mut rng);
        let sentences: Vec<Vec<String>> = (0..40)
            .map(|i| {
                if i % 2 == 0 {
                    vec!["cat".into(), "eats".into(), "fish".into()]
                } else {
                    vec!["dog".into(), "chases".into(), "cat".into()]
                }
            })
            .collect();
        let before = enc.mean_loss(&sentences);
        for _ in 0..5 {
            enc.pretrain_pass(&sentences, 0.05, 0.0, &mut rng).unwrap();
        }
        let after = enc.mean_loss(&sentences);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn empty_corpus_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mut enc = tiny(&mut rng);
        assert!(enc.pretrain_pass(&[], 0.1, 0.0, &mut rng).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let enc = tiny(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        enc.save(&path).unwrap();
        let loaded = NeuralEncoder::load(&path).unwrap();
        assert_eq!(enc.mention_embed("john doe"), loaded.mention_embed("john doe"));
    }
}
