//! Online discovery and disambiguation of entity and relation instances
//! in text streams.
//!
//! The engine reads a stream of short stories one sentence at a time,
//! detects mentions to entities and relations, links them to instances of
//! a knowledge base that is built from scratch, and improves through
//! sparse supervisions and self-learning. The crate also ships a synthetic
//! story-stream generator and an evaluation harness.

pub mod alphabet;
pub mod candidates;
pub mod config;
pub mod detector;
pub mod disambiguator;
pub mod encoder;
pub mod engine;
pub mod generator;
pub mod harness;
pub mod memory;
pub mod nn;
pub mod noise;
pub mod snapshot;
pub mod text;

pub use config::Config;
pub use engine::{Engine, LinkCase, LinkDecision};
pub use memory::{InstanceId, MemoryState, MentionKey};
