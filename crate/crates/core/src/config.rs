//! Engine and experiment configuration, with a line-oriented
//! `key = value` file format.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: expected `key = value`")]
    Malformed(usize),
    #[error("key `{0}`: invalid value `{1}`")]
    BadValue(String, String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
}

/// All engine and harness hyperparameters.
///
/// Defaults: reject/accept thresholds 0.1/0.9,
/// output blend 0.5, top-5 embedding matches, a temporal window of 10.
#[derive(Debug, Clone)]
pub struct Config {
    /// Reject threshold tau_r.
    pub tau_r: f64,
    /// Accept threshold tau_a.
    pub tau_a: f64,
    /// Blend between candidate scores and disambiguation responses.
    pub eta: f64,
    /// Top-k clamp for the embedding-match hypothesis.
    pub top_k: usize,
    /// Capacity of the temporal buffer.
    pub window: usize,
    /// Centroids per disambiguation unit.
    pub kappa: usize,
    /// Prior temporal gate output while the gate has no centroids.
    pub gamma0: f64,
    /// Cosine threshold below which a reinforcement allocates a fresh centroid.
    pub theta_alloc: f64,
    /// Cap on reinforcement/penalization iterations.
    pub n_max: usize,
    /// Learning rate of the disambiguation-unit centroids.
    pub alpha_d: f64,
    /// Raw-score step used when raising activation scores.
    pub alpha_m: f64,
    /// Learning rate of the temporal gate centroids.
    pub alpha_q: f64,
    /// Raw activation score assigned to fresh rows/columns (sigmoid ~ 0.0025).
    pub m_init: f64,
    /// Clearance above the reject threshold targeted when raising a
    /// supervised instance's blocked candidate score, so later drift in
    /// the other hypotheses cannot push it back under the gate.
    pub unblock_margin: f64,
    /// Disable the temporal hypothesis for entity mentions.
    pub no_temporal: bool,
    /// Route mention surfaces through a word vocabulary with an OOV token.
    pub word_level: bool,

    /// Character embedding size of the neural networks.
    pub char_emb: usize,
    /// Per-direction hidden size of the character-level encoders.
    pub char_hidden: usize,
    /// Per-direction hidden size of the context encoders.
    pub ctx_hidden: usize,
    /// Hidden layer of the tagger MLP.
    pub mlp_hidden: usize,
    /// SGD learning rate for detector/encoder pretraining.
    pub pretrain_lr: f64,
    /// Passes over the pretraining corpus.
    pub pretrain_epochs: usize,
    /// Char-level typo rate injected during pretraining.
    pub pretrain_typo_rate: f64,
    /// Enables the 7th OUTSIDE tag class.
    pub outside_tag: bool,

    /// Stories in the default generated corpus.
    pub stories: usize,
    /// Total sentence target of the default corpus.
    pub sentences: usize,
    /// Entity instances in the generator pool.
    pub entities: usize,
    /// Relation instances in the generator pool.
    pub relations: usize,
    /// Probability a sentence is about the story's main entity.
    pub main_focus: f64,
    /// Rate of off-topic facts.
    pub off_topic: f64,
    /// Char-level typo rate of the generated text.
    pub typo_rate: f64,
    /// Probability of rendering a repeated subject as a pronoun.
    pub pronoun_rate: f64,

    /// Supervised fraction of each story's leading sentences.
    pub fraction: f64,
    /// Use gold mention spans instead of the learned detector.
    pub gold_segmentation: bool,
    /// Use the deterministic hash embedder instead of the neural encoder.
    pub hash_encoder: bool,
    /// RNG seed.
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tau_r: 0.1,
            tau_a: 0.9,
            eta: 0.5,
            top_k: 5,
            window: 10,
            kappa: 8,
            gamma0: 0.25,
            theta_alloc: 0.6,
            n_max: 100,
            alpha_d: 0.1,
            alpha_m: 1.0,
            alpha_q: 0.05,
            m_init: -6.0,
            unblock_margin: 0.1,
            no_temporal: false,
            word_level: false,
            char_emb: 16,
            char_hidden: 64,
            ctx_hidden: 128,
            mlp_hidden: 64,
            pretrain_lr: 0.05,
            pretrain_epochs: 1,
            pretrain_typo_rate: 0.0,
            outside_tag: false,
            stories: 564,
            sentences: 10_000,
            entities: 130,
            relations: 27,
            main_focus: 0.8,
            off_topic: 0.08,
            typo_rate: 0.02,
            pronoun_rate: 0.28,
            fraction: 0.5,
            gold_segmentation: true,
            hash_encoder: true,
            seed: 7,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let body = std::fs::read_to_string(path)?;
        let mut cfg = Config::default();
        cfg.apply_str(&body)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn apply_str(&mut self, body: &str) -> Result<(), ConfigError> {
        for (lineno, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Malformed(lineno + 1))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        macro_rules! parse {
            () => {
                value
                    .parse()
                    .map_err(|_| ConfigError::BadValue(key.to_string(), value.to_string()))?
            };
        }
        match key {
            "tau_r" => self.tau_r = parse!(),
            "tau_a" => self.tau_a = parse!(),
            "eta" => self.eta = parse!(),
            "top_k" => self.top_k = parse!(),
            "window" => self.window = parse!(),
            "kappa" => self.kappa = parse!(),
            "gamma0" => self.gamma0 = parse!(),
            "theta_alloc" => self.theta_alloc = parse!(),
            "n_max" => self.n_max = parse!(),
            "alpha_d" => self.alpha_d = parse!(),
            "alpha_m" => self.alpha_m = parse!(),
            "alpha_q" => self.alpha_q = parse!(),
            "m_init" => self.m_init = parse!(),
            "unblock_margin" => self.unblock_margin = parse!(),
            "no_temporal" => self.no_temporal = parse!(),
            "word_level" => self.word_level = parse!(),
            "char_emb" => self.char_emb = parse!(),
            "char_hidden" => self.char_hidden = parse!(),
            "ctx_hidden" => self.ctx_hidden = parse!(),
            "mlp_hidden" => self.mlp_hidden = parse!(),
            "pretrain_lr" => self.pretrain_lr = parse!(),
            "pretrain_epochs" => self.pretrain_epochs = parse!(),
            "pretrain_typo_rate" => self.pretrain_typo_rate = parse!(),
            "outside_tag" => self.outside_tag = parse!(),
            "stories" => self.stories = parse!(),
            "sentences" => self.sentences = parse!(),
            "entities" => self.entities = parse!(),
            "relations" => self.relations = parse!(),
            "main_focus" => self.main_focus = parse!(),
            "off_topic" => self.off_topic = parse!(),
            "typo_rate" => self.typo_rate = parse!(),
            "pronoun_rate" => self.pronoun_rate = parse!(),
            "fraction" => self.fraction = parse!(),
            "gold_segmentation" => self.gold_segmentation = parse!(),
            "hash_encoder" => self.hash_encoder = parse!(),
            "seed" => self.seed = parse!(),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Renders the full hyperparameter table, loadable by [`Config::apply_str`].
    pub fn to_table(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("tau_r", self.tau_r.to_string());
        map.insert("tau_a", self.tau_a.to_string());
        map.insert("eta", self.eta.to_string());
        map.insert("top_k", self.top_k.to_string());
        map.insert("window", self.window.to_string());
        map.insert("kappa", self.kappa.to_string());
        map.insert("gamma0", self.gamma0.to_string());
        map.insert("theta_alloc", self.theta_alloc.to_string());
        map.insert("n_max", self.n_max.to_string());
        map.insert("alpha_d", self.alpha_d.to_string());
        map.insert("alpha_m", self.alpha_m.to_string());
        map.insert("alpha_q", self.alpha_q.to_string());
        map.insert("m_init", self.m_init.to_string());
        map.insert("unblock_margin", self.unblock_margin.to_string());
        map.insert("no_temporal", self.no_temporal.to_string());
        map.insert("word_level", self.word_level.to_string());
        map.insert("char_emb", self.char_emb.to_string());
        map.insert("char_hidden", self.char_hidden.to_string());
        map.insert("ctx_hidden", self.ctx_hidden.to_string());
        map.insert("mlp_hidden", self.mlp_hidden.to_string());
        map.insert("pretrain_lr", self.pretrain_lr.to_string());
        map.insert("pretrain_epochs", self.pretrain_epochs.to_string());
        map.insert("pretrain_typo_rate", self.pretrain_typo_rate.to_string());
        map.insert("outside_tag", self.outside_tag.to_string());
        map.insert("stories", self.stories.to_string());
        map.insert("sentences", self.sentences.to_string());
        map.insert("entities", self.entities.to_string());
        map.insert("relations", self.relations.to_string());
        map.insert("main_focus", self.main_focus.to_string());
        map.insert("off_topic", self.off_topic.to_string());
        map.insert("typo_rate", self.typo_rate.to_string());
        map.insert("pronoun_rate", self.pronoun_rate.to_string());
        map.insert("fraction", self.fraction.to_string());
        map.insert("gold_segmentation", self.gold_segmentation.to_string());
        map.insert("hash_encoder", self.hash_encoder.to_string());
        map.insert("seed", self.seed.to_string());
        let mut out = String::new();
        for (k, v) in map {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let cfg = Config::default();
        assert!(0.0 < cfg.tau_r && cfg.tau_r < cfg.tau_a && cfg.tau_a < 1.0);
        assert!(cfg.n_max >= 1);
    }

    #[test]
    fn table_round_trip() {
        let mut cfg = Config::default();
        cfg.tau_a = 0.85;
        cfg.seed = 99;
        let mut loaded = Config::default();
        loaded.apply_str(&cfg.to_table()).unwrap();
        assert_eq!(loaded.tau_a, 0.85);
        assert_eq!(loaded.seed, 99);
    }

    #[test]
    fn rejects_unknown_key() {
        let mut cfg = Config::default();
        assert!(matches!(cfg.apply_str("bogus = 1"), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn skips_comments_and_blanks() {
        let mut cfg = Config::default();
        cfg.apply_str("# comment\n\nwindow = 3\n").unwrap();
        assert_eq!(cfg.window, 3);
    }
}
