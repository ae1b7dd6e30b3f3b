//! Trainable character-level sequence tagger.
//!
//! Words are embedded by a bidirectional character LSTM, contextualized by
//! a bidirectional word-level LSTM, and classified per token by a one
//! hidden layer MLP with a softmax over the tag classes.

use ndarray::{s, Array1};
use rand::Rng;
use thiserror::Error;

use crate::alphabet;
use crate::nn::{softmax, softmax_ce, Embedding, Flat, Linear, Lstm, LstmRun};
use crate::noise::inject_typos;
use crate::text::{tokenize, Token};

use super::{decode_tags, rule_segment, silver_tags, Lexicon, Mention, Tag};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("empty pretraining corpus")]
    EmptyCorpus,
}

#[derive(Debug, Error)]
pub enum TaggerCheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("parameter count mismatch")]
    Shape,
}

pub struct Tagger {
    pub char_emb: Embedding,
    pub char_fwd: Lstm,
    pub char_bwd: Lstm,
    pub ctx_fwd: Lstm,
    pub ctx_bwd: Lstm,
    pub hidden: Linear,
    pub out: Linear,
    char_hidden: usize,
    ctx_hidden: usize,
    classes: usize,
}

struct WordCache {
    codes: Vec<usize>,
    run_f: LstmRun,
    run_b: LstmRun,
}

struct SentenceCache {
    words: Vec<WordCache>,
    ctx_f: LstmRun,
    ctx_b: LstmRun,
    ctx: Vec<Array1<f64>>,
    hidden_pre: Vec<Array1<f64>>,
    hidden_act: Vec<Array1<f64>>,
    logits: Vec<Array1<f64>>,
}

impl Tagger {
    pub fn new<R: Rng>(
        char_emb: usize,
        char_hidden: usize,
        ctx_hidden: usize,
        mlp_hidden: usize,
        classes: usize,
        rng: &mut R,
    ) -> Tagger {
        Tagger {
            char_emb: Embedding::new(alphabet::size(), char_emb, rng),
            char_fwd: Lstm::new(char_emb, char_hidden, rng),
            char_bwd: Lstm::new(char_emb, char_hidden, rng),
            ctx_fwd: Lstm::new(2 * char_hidden, ctx_hidden, rng),
            ctx_bwd: Lstm::new(2 * char_hidden, ctx_hidden, rng),
            hidden: Linear::new(2 * ctx_hidden, mlp_hidden, rng),
            out: Linear::new(mlp_hidden, classes, rng),
            char_hidden,
            ctx_hidden,
            classes,
        }
    }

    pub fn zeros_like(&self) -> Tagger {
        Tagger {
            char_emb: self.char_emb.zeros_like(),
            char_fwd: self.char_fwd.zeros_like(),
            char_bwd: self.char_bwd.zeros_like(),
            ctx_fwd: self.ctx_fwd.zeros_like(),
            ctx_bwd: self.ctx_bwd.zeros_like(),
            hidden: self.hidden.zeros_like(),
            out: self.out.zeros_like(),
            char_hidden: self.char_hidden,
            ctx_hidden: self.ctx_hidden,
            classes: self.classes,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Character-level embedding of one word: concatenated final states of
    /// the forward and backward character LSTMs.
    fn word_forward(&self, word: &str) -> (Array1<f64>, WordCache) {
        let codes = alphabet::encode_str(word);
        assert!(!codes.is_empty(), "word must be non-empty");
        let xs: Vec<Array1<f64>> = codes.iter().map(|&c| self.char_emb.lookup(c)).collect();
        let xs_rev: Vec<Array1<f64>> = xs.iter().rev().cloned().collect();
        let run_f = self.char_fwd.forward(&xs);
        let run_b = self.char_bwd.forward(&xs_rev);
        let mut e = Array1::zeros(2 * self.char_hidden);
        e.slice_mut(s![0..self.char_hidden]).assign(run_f.last_h());
        e.slice_mut(s![self.char_hidden..]).assign(run_b.last_h());
        (e, WordCache { codes, run_f, run_b })
    }

    fn word_backward(&self, cache: &WordCache, d_out: &Array1<f64>, grads: &mut Tagger) {
        let h = self.char_hidden;
        let len = cache.codes.len();
        let zero = Array1::<f64>::zeros(h);
        let mut d_f = vec![zero.clone(); len];
        *d_f.last_mut().unwrap() = d_out.slice(s![0..h]).to_owned();
        let mut d_b = vec![zero; len];
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

    fn sentence_forward(&self, words: &[String]) -> SentenceCache {
        let v = words.len();
        let mut word_caches = Vec::with_capacity(v);
        let mut embs = Vec::with_capacity(v);
        for w in words {
            let (e, c) = self.word_forward(w);
            embs.push(e);
            word_caches.push(c);
        }
        let embs_rev: Vec<Array1<f64>> = embs.iter().rev().cloned().collect();
        let ctx_f = self.ctx_fwd.forward(&embs);
        let ctx_b = self.ctx_bwd.forward(&embs_rev);
        let mut ctx = Vec::with_capacity(v);
        let mut hidden_pre = Vec::with_capacity(v);
        let mut hidden_act = Vec::with_capacity(v);
        let mut logits = Vec::with_capacity(v);
        for i in 0..v {
            // forward state over words 0..=i, backward state over i..=v-1
            let mut c = Array1::zeros(2 * self.ctx_hidden);
            c.slice_mut(s![0..self.ctx_hidden]).assign(&ctx_f.hs[i + 1]);
            c.slice_mut(s![self.ctx_hidden..]).assign(&ctx_b.hs[v - i]);
            let pre = self.hidden.forward(&c);
            let act = pre.mapv(f64::tanh);
            logits.push(self.out.forward(&act));
            ctx.push(c);
            hidden_pre.push(pre);
            hidden_act.push(act);
        }
        SentenceCache { words: word_caches, ctx_f, ctx_b, ctx, hidden_pre, hidden_act, logits }
    }

    /// Per-token tag distributions for one sentence.
    pub fn tag_words(&self, words: &[String]) -> Vec<Array1<f64>> {
        self.sentence_forward(words).logits.iter().map(softmax).collect()
    }

    /// Argmax tags for one sentence.
    pub fn predict(&self, words: &[String]) -> Vec<Tag> {
        self.tag_words(words)
            .iter()
            .map(|p| {
                let mut best = 0usize;
                for (c, &v) in p.iter().enumerate() {
                    if v > p[best] {
                        best = c;
                    }
                }
                Tag::from_class(best)
            })
            .collect()
    }

    /// Detects mentions in raw text with the trained tagger; punctuation
    /// tokens are never claimed.
    pub fn detect(&self, sentence: &str) -> (Vec<Token>, Vec<Mention>) {
        let tokens = tokenize(sentence);
        if tokens.is_empty() {
            return (tokens, Vec::new());
        }
        let words: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
        let mut tags = self.predict(&words);
        for (i, t) in tokens.iter().enumerate() {
            if t.is_punctuation() {
                tags[i] = Tag::Outside;
            }
        }
        let mentions = decode_tags(&tokens, &tags);
        (tokens, mentions)
    }

    /// Summed cross-entropy against the target classes; `None` targets are
    /// excluded from the loss.
    pub fn sentence_loss(&self, words: &[String], targets: &[Option<usize>]) -> f64 {
        let cache = self.sentence_forward(words);
        let mut loss = 0.0;
        for (logits, target) in cache.logits.iter().zip(targets) {
            if let Some(t) = *target {
                loss += softmax_ce(logits, t).0;
            }
        }
        loss
    }

    /// Loss plus analytic gradients over all parameters.
    pub fn sentence_grads(&self, words: &[String], targets: &[Option<usize>]) -> (f64, Tagger) {
        assert_eq!(words.len(), targets.len());
        let v = words.len();
        let mut grads = self.zeros_like();
        let cache = self.sentence_forward(words);
        let mut loss = 0.0;
        let mut d_ctx_f = vec![Array1::<f64>::zeros(self.ctx_hidden); v];
        let mut d_ctx_b = vec![Array1::<f64>::zeros(self.ctx_hidden); v];
        for i in 0..v {
            let Some(t) = targets[i] else { continue };
            let (l, d_logits) = softmax_ce(&cache.logits[i], t);
            loss += l;
            let d_act = self.out.backward(&cache.hidden_act[i], &d_logits, &mut grads.out);
            let d_pre = &d_act * &cache.hidden_pre[i].mapv(|x| 1.0 - x.tanh() * x.tanh());
            let d_c = self.hidden.backward(&cache.ctx[i], &d_pre, &mut grads.hidden);
            d_ctx_f[i] += &d_c.slice(s![0..self.ctx_hidden]);
            d_ctx_b[v - 1 - i] += &d_c.slice(s![self.ctx_hidden..]);
        }
        let back_f = self.ctx_fwd.backward(&cache.ctx_f, &d_ctx_f, &mut grads.ctx_fwd);
        let back_b = self.ctx_bwd.backward(&cache.ctx_b, &d_ctx_b, &mut grads.ctx_bwd);
        for i in 0..v {
            let d_e = &back_f.d_xs[i] + &back_b.d_xs[v - 1 - i];
            self.word_backward(&cache.words[i], &d_e, &mut grads);
        }
        (loss, grads)
    }

    /// Silver targets for a tokenized sentence via the rule segmenter.
    /// With six classes, unclaimed tokens are masked out of the loss; with
    /// the outside class enabled they become explicit targets.
    pub fn silver_targets(&self, tokens: &[Token], lex: &Lexicon) -> Vec<Option<usize>> {
        let mentions = rule_segment(tokens, lex);
        silver_tags(tokens.len(), &mentions)
            .into_iter()
            .map(|t| match t {
                Some(tag) => Some(tag.to_class()),
                None if self.classes > 6 => Some(Tag::Outside.to_class()),
                None => None,
            })
            .collect()
    }

    /// One online pass over a plain-text corpus (one sentence per line):
    /// silver-tag each sentence with the rules, optionally corrupt the
    /// input words with typos, and take one SGD step per sentence. Returns
    /// the mean pre-update sentence loss.
    pub fn pretrain_pass<R: Rng>(
        &mut self,
        corpus: &[String],
        lex: &Lexicon,
        lr: f64,
        typo_rate: f64,
        rng: &mut R,
    ) -> Result<f64, DetectorError> {
        let mut total = 0.0;
        let mut count = 0usize;
        for line in corpus {
            let tokens = tokenize(line);
            if tokens.is_empty() {
                continue;
            }
            let targets = self.silver_targets(&tokens, lex);
            let words: Vec<String> = tokens
                .iter()
                .map(|t| {
                    let w = t.text.to_lowercase();
                    let noisy = inject_typos(&w, typo_rate, rng);
                    if noisy.is_empty() { w } else { noisy }
                })
                .collect();
            let (loss, grads) = self.sentence_grads(&words, &targets);
            self.axpy(-lr, &grads);
            total += loss;
            count += 1;
        }
        if count == 0 {
            return Err(DetectorError::EmptyCorpus);
        }
        Ok(total / count as f64)
    }

    /// Token tag accuracy against silver rule tags, skipping masked tokens.
    pub fn token_accuracy(&self, corpus: &[String], lex: &Lexicon, typo_rate: f64, seed: u64) -> f64 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut hit = 0usize;
        let mut seen = 0usize;
        for line in corpus {
            let tokens = tokenize(line);
            if tokens.is_empty() {
                continue;
            }
            let targets = self.silver_targets(&tokens, lex);
            let words: Vec<String> = tokens
                .iter()
                .map(|t| {
                    let w = t.text.to_lowercase();
                    let noisy = inject_typos(&w, typo_rate, &mut rng);
                    if noisy.is_empty() { w } else { noisy }
                })
                .collect();
            let pred = self.predict(&words);
            for (p, t) in pred.iter().zip(&targets) {
                if let Some(t) = *t {
                    seen += 1;
                    if p.to_class() == t {
                        hit += 1;
                    }
                }
            }
        }
        hit as f64 / seen.max(1) as f64
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TaggerCheckpointError> {
        let mut out = String::new();
        out.push_str("streamkb-tagger v1\n");
        out.push_str(&format!(
            "char_emb {} char_hidden {} ctx_hidden {} mlp_hidden {} classes {} alphabet {}\n",
            self.char_emb.table.ncols(),
            self.char_hidden,
            self.ctx_hidden,
            self.hidden.b.len(),
            self.classes,
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

    pub fn load(path: &std::path::Path) -> Result<Tagger, TaggerCheckpointError> {
        let body = std::fs::read_to_string(path)?;
        let mut lines = body.lines();
        let magic = lines.next().unwrap_or("");
        if magic != "streamkb-tagger v1" {
            return Err(TaggerCheckpointError::Header(magic.to_string()));
        }
        let dims = lines.next().unwrap_or("");
        let fields: Vec<&str> = dims.split_whitespace().collect();
        if fields.len() != 12 {
            return Err(TaggerCheckpointError::Header(dims.to_string()));
        }
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| TaggerCheckpointError::Header(dims.to_string()))
        };
        let ce = parse(fields[1])?;
        let ch = parse(fields[3])?;
        let xh = parse(fields[5])?;
        let mh = parse(fields[7])?;
        let classes = parse(fields[9])?;
        let a = parse(fields[11])?;
        if a != alphabet::size() {
            return Err(TaggerCheckpointError::Header(format!("alphabet {a}")));
        }
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut tagger = Tagger::new(ce, ch, xh, mh, classes, &mut rng);
        let values: Result<Vec<f64>, _> = lines.map(|l| l.trim().parse::<f64>()).collect();
        let values = values.map_err(|_| TaggerCheckpointError::Shape)?;
        if values.len() != tagger.flat_len() {
            return Err(TaggerCheckpointError::Shape);
        }
        tagger.read_flat(&mut values.iter());
        Ok(tagger)
    }
}

impl Flat for Tagger {
    fn flat_len(&self) -> usize {
        self.char_emb.flat_len()
            + self.char_fwd.flat_len()
            + self.char_bwd.flat_len()
            + self.ctx_fwd.flat_len()
            + self.ctx_bwd.flat_len()
            + self.hidden.flat_len()
            + self.out.flat_len()
    }
    fn write_flat(&self, out: &mut Vec<f64>) {
        self.char_emb.write_flat(out);
        self.char_fwd.write_flat(out);
        self.char_bwd.write_flat(out);
        self.ctx_fwd.write_flat(out);
        self.ctx_bwd.write_flat(out);
        self.hidden.write_flat(out);
        self.out.write_flat(out);
    }
    fn read_flat(&mut self, src: &mut std::slice::Iter<f64>) {
        self.char_emb.read_flat(src);
        self.char_fwd.read_flat(src);
        self.char_bwd.read_flat(src);
        self.ctx_fwd.read_flat(src);
        self.ctx_bwd.read_flat(src);
        self.hidden.read_flat(src);
        self.out.read_flat(src);
    }
    fn axpy(&mut self, a: f64, other: &Self) {
        self.char_emb.axpy(a, &other.char_emb);
        self.char_fwd.axpy(a, &other.char_fwd);
        self.char_bwd.axpy(a, &other.char_bwd);
        self.ctx_fwd.axpy(a, &other.ctx_fwd);
        self.ctx_bwd.axpy(a, &other.ctx_bwd);
        self.hidden.axpy(a, &other.hidden);
        self.out.axpy(a, &other.out);
    }
}
