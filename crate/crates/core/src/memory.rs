//! The growable knowledge-base memory: mention table, embedding store,
//! activation matrix, temporal buffer and the supervision-label map.

use std::collections::HashMap;
use std::collections::VecDeque;

use ndarray::Array1;
use thiserror::Error;

use crate::nn::sigmoid;
use crate::text::normalize;

/// Normalized surface form of a mention (lowercased, whitespace-collapsed).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MentionKey(String);

impl MentionKey {
    /// Normalizes the surface; panics on empty surfaces, which the
    /// detector never produces.
    pub fn new(surface: &str) -> MentionKey {
        let norm = normalize(surface);
        assert!(!norm.is_empty(), "mention surface must be non-empty");
        MentionKey(norm)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Dense, never-reused knowledge-base instance index.
pub type InstanceId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("mention `{0}` is already registered")]
    DuplicateMention(String),
    #[error("instance id {0} out of range (n = {1})")]
    UnknownInstance(InstanceId, usize),
    #[error("mention `{0}` is not registered")]
    UnknownMention(String),
}

/// The four memory components: mention table H, embedding store E,
/// activation matrix M (raw, pre-sigmoid scores) and the temporal buffer T.
/// Append-only; instances and mentions are never deleted.
#[derive(Debug, Clone)]
pub struct MemoryState {
    mentions: Vec<MentionKey>,
    index: HashMap<MentionKey, usize>,
    embeddings: Vec<Array1<f64>>,
    /// Row per mention, column per instance, raw scores.
    activations: Vec<Vec<f64>>,
    recent: VecDeque<InstanceId>,
    /// Capacity of the temporal buffer.
    pub window: usize,
    /// Raw score of fresh rows/columns.
    pub init_score: f64,
    instances: usize,
}

impl MemoryState {
    pub fn new(window: usize, init_score: f64) -> MemoryState {
        MemoryState {
            mentions: Vec::new(),
            index: HashMap::new(),
            embeddings: Vec::new(),
            activations: Vec::new(),
            recent: VecDeque::new(),
            window,
            init_score,
            instances: 0,
        }
    }

    /// Current mention count m.
    pub fn mention_count(&self) -> usize {
        self.mentions.len()
    }

    /// Current instance count n.
    pub fn instance_count(&self) -> usize {
        self.instances
    }

    pub fn mention_at(&self, row: usize) -> &MentionKey {
        &self.mentions[row]
    }

    pub fn embedding_at(&self, row: usize) -> &Array1<f64> {
        &self.embeddings[row]
    }

    pub fn embeddings(&self) -> &[Array1<f64>] {
        &self.embeddings
    }

    /// Raw activation row of a mention.
    pub fn activation_row(&self, row: usize) -> &[f64] {
        &self.activations[row]
    }

    pub fn raw_score(&self, row: usize, instance: InstanceId) -> f64 {
        self.activations[row][instance]
    }

    pub fn set_raw_score(&mut self, row: usize, instance: InstanceId, value: f64) {
        self.activations[row][instance] = value;
    }

    /// Sigmoid-activated row, the string-match hypothesis source.
    pub fn activated_row(&self, row: usize) -> Vec<f64> {
        self.activations[row].iter().map(|&s| sigmoid(s)).collect()
    }

    /// Index of `z` in H, if present.
    pub fn lookup_mention(&self, z: &MentionKey) -> Option<usize> {
        self.index.get(z).copied()
    }

    /// Adds a mention with its embedding; the new activation row starts at
    /// the init score so its sigmoid is ~0.
    pub fn register_mention(
        &mut self,
        z: MentionKey,
        embedding: Array1<f64>,
    ) -> Result<usize, MemoryError> {
        if self.index.contains_key(&z) {
            return Err(MemoryError::DuplicateMention(z.0));
        }
        let row = self.mentions.len();
        self.index.insert(z.clone(), row);
        self.mentions.push(z);
        self.embeddings.push(embedding);
        self.activations.push(vec![self.init_score; self.instances]);
        Ok(row)
    }

    /// Creates a new instance; every mention row gains a column at the init
    /// score. Ids are dense and assigned in creation order.
    pub fn add_instance(&mut self) -> InstanceId {
        let id = self.instances;
        self.instances += 1;
        for row in &mut self.activations {
            row.push(self.init_score);
        }
        id
    }

    /// Appends to the temporal buffer, evicting the oldest entry beyond the
    /// window capacity.
    pub fn record_recent(&mut self, y: InstanceId) -> Result<(), MemoryError> {
        if y >= self.instances {
            return Err(MemoryError::UnknownInstance(y, self.instances));
        }
        self.recent.push_back(y);
        while self.recent.len() > self.window {
            self.recent.pop_front();
        }
        Ok(())
    }

    /// Story-boundary reset of the temporal buffer.
    pub fn clear_recent(&mut self) {
        self.recent.clear();
    }

    pub fn recent(&self) -> impl Iterator<Item = InstanceId> + '_ {
        self.recent.iter().copied()
    }

    /// Occurrence counts (with repetitions) of each instance in T.
    pub fn temporal_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.instances];
        for &y in &self.recent {
            counts[y] += 1;
        }
        counts
    }

    /// Checks the shape invariants; used by the fuzz tests.
    pub fn check_invariants(&self) {
        let m = self.mentions.len();
        assert_eq!(self.embeddings.len(), m);
        assert_eq!(self.activations.len(), m);
        assert_eq!(self.index.len(), m, "H contains duplicate keys");
        for row in &self.activations {
            assert_eq!(row.len(), self.instances);
        }
        assert!(self.recent.iter().all(|&y| y < self.instances));
        assert!(self.recent.len() <= self.window);
    }
}

/// Bijective-by-construction map between opaque supervision symbols and
/// instances: each label maps to one instance, each instance carries at
/// most one label.
#[derive(Debug, Clone, Default)]
pub struct SupervisionMap {
    by_label: HashMap<String, InstanceId>,
    by_instance: HashMap<InstanceId, String>,
}

impl SupervisionMap {
    pub fn new() -> SupervisionMap {
        SupervisionMap::default()
    }

    pub fn instance_of(&self, label: &str) -> Option<InstanceId> {
        self.by_label.get(label).copied()
    }

    pub fn label_of(&self, instance: InstanceId) -> Option<&str> {
        self.by_instance.get(&instance).map(|s| s.as_str())
    }

    /// Associates a label with an instance. Panics if either side is
    /// already bound; callers resolve collisions by creating a new
    /// instance first.
    pub fn bind(&mut self, label: &str, instance: InstanceId) {
        assert!(!self.by_label.contains_key(label), "label already bound");
        assert!(!self.by_instance.contains_key(&instance), "instance already labeled");
        self.by_label.insert(label.to_string(), instance);
        self.by_instance.insert(instance, label.to_string());
    }

    pub fn len(&self) -> usize {
        self.by_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_label.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, InstanceId)> {
        self.by_label.iter().map(|(l, &i)| (l.as_str(), i))
    }
}
