//! The long-stream interference protocol: learn a target story, process
//! interference stories, and replay the target on a frozen system at
//! fixed checkpoints to measure how much of it is still resolved
//! correctly.

use ndarray::Array1;

use crate::config::Config;
use crate::detector::MentionKind;
use crate::encoder::MentionEncoder;
use crate::engine::Engine;
use crate::generator::{
    build_longstream, GeneratorError, InstancePool, SentenceRecord, Setting, StoryCorpus,
};
use crate::harness::split_supervision;
use crate::memory::InstanceId;

/// One checkpoint row: interference stories processed so far, mean
/// ambiguity of the target mentions, frozen-replay entity accuracy.
#[derive(Debug, Clone)]
pub struct LongstreamRow {
    pub t: usize,
    pub ambiguity: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct LongstreamReport {
    pub setting: Setting,
    pub rows: Vec<LongstreamRow>,
}

impl LongstreamReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,ambiguity,accuracy\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.6},{:.6}\n", r.t, r.ambiguity, r.accuracy));
        }
        out
    }
}

fn embeds(
    enc: &dyn MentionEncoder,
    surfaces: &[String],
    i: usize,
) -> (Array1<f64>, Array1<f64>) {
    (enc.mention_embed(&surfaces[i]), enc.context_embed(surfaces, i))
}

fn label(kind: MentionKind, gold: usize) -> String {
    match kind {
        MentionKind::Entity => format!("e{gold}"),
        MentionKind::Relation => format!("r{gold}"),
    }
}

/// Learns one story online, honoring the per-span supervision flags.
fn process_story(engine: &mut Engine, records: &[SentenceRecord], enc: &dyn MentionEncoder) {
    engine.story_boundary();
    for record in records {
        let surfaces: Vec<String> = record.spans.iter().map(|s| record.span_text(s)).collect();
        for (i, span) in record.spans.iter().enumerate() {
            let (e_m, ctx) = embeds(enc, &surfaces, i);
            let sup = span.supervised.then(|| label(span.kind, span.gold));
            let key = enc.canonical_surface(&surfaces[i]);
            engine.process(record.story, span.kind, &key, &e_m, &ctx, sup.as_deref());
        }
    }
}

/// Replays the target story against a frozen engine: no state is
/// mutated, and the temporal context is rebuilt locally from the replay's
/// own links. Accuracy is the fraction of entity mentions whose link
/// equals the instance bound to their gold label; golds that never
/// received a label binding are skipped.
pub fn frozen_replay(engine: &Engine, target: &[SentenceRecord], enc: &dyn MentionEncoder) -> f64 {
    let mut recent: Vec<InstanceId> = Vec::new();
    let mut hits = 0usize;
    let mut total = 0usize;
    for record in target {
        let surfaces: Vec<String> = record.spans.iter().map(|s| record.span_text(s)).collect();
        for (i, span) in record.spans.iter().enumerate() {
            if span.kind != MentionKind::Entity {
                continue;
            }
            let expected = engine.side(span.kind).map.instance_of(&label(span.kind, span.gold));
            let (e_m, ctx) = embeds(enc, &surfaces, i);
            let key = enc.canonical_surface(&surfaces[i]);
            let got = engine.assess(span.kind, &key, &e_m, &ctx, &recent);
            if let Some(a) = &got {
                recent.push(a.instance);
                if recent.len() > engine.cfg.window {
                    recent.remove(0);
                }
            }
            if let Some(expected) = expected {
                total += 1;
                if got.map(|a| a.instance) == Some(expected) {
                    hits += 1;
                }
            }
        }
    }
    if total == 0 { 0.0 } else { hits as f64 / total as f64 }
}

/// Runs the full protocol for one setting: learn the target, then after
/// each checkpoint's worth of interference stories, freeze and replay.
pub fn run_longstream(
    pool: &InstancePool,
    cfg: &Config,
    setting: Setting,
    enc: &dyn MentionEncoder,
) -> Result<LongstreamReport, GeneratorError> {
    let long = build_longstream(pool, cfg, setting)?;

    // the target story is fully supervised: the protocol measures how
    // well a learned story survives interference, and every target
    // surface must be bound before the first replay. The supervision
    // fraction governs the intermediate stories.
    let mut target = long.target.clone();
    for record in &mut target {
        for span in &mut record.spans {
            span.supervised = true;
        }
    }
    let intermediates: Vec<Vec<SentenceRecord>> = long
        .intermediates
        .iter()
        .map(|s| {
            let mut c = StoryCorpus { records: s.clone() };
            split_supervision(&mut c, cfg.fraction);
            c.records
        })
        .collect();

    let mut engine = Engine::new(cfg.clone());
    process_story(&mut engine, &target, enc);

    let mut rows = Vec::new();
    let mut processed = 0usize;
    for &t in &long.checkpoints {
        while processed < t {
            process_story(&mut engine, &intermediates[processed], enc);
            processed += 1;
        }
        rows.push(LongstreamRow {
            t,
            ambiguity: long.ambiguity_at(t),
            accuracy: frozen_replay(&engine, &target, enc),
        });
    }
    Ok(LongstreamReport { setting, rows })
}
