//! Experiment orchestration: supervision splitting, online streaming with
//! as-you-go evaluation, the rule-based baseline, re-reading and the
//! long-stream interference protocol.
//!
//! Accuracy is measured at prediction time through an injective purity
//! mapping over the statistics accumulated so far. ALL metrics cover the
//! unsupervised sentences of every story; LAST metrics cover only each
//! story's final sentence. Both are averaged per story first, then over
//! stories.

mod longstream;
mod purity;

pub use longstream::{run_longstream, LongstreamReport, LongstreamRow};
pub use purity::{exhaustive_matched_count, PurityMap};

use std::path::Path;

use thiserror::Error;

use crate::config::Config;
use crate::detector::{MentionKind, Tagger};
use crate::encoder::MentionEncoder;
use crate::engine::Engine;
use crate::generator::{SentenceRecord, StoryCorpus};
use crate::memory::InstanceId;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("learned segmentation requested but no detector was provided")]
    MissingDetector,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Marks the leading `ceil(fraction * len)` sentences of every story as
/// supervised, on all their spans.
pub fn split_supervision(corpus: &mut StoryCorpus, fraction: f64) {
    let mut bounds: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    for i in 1..=corpus.records.len() {
        if i == corpus.records.len() || corpus.records[i].story != corpus.records[start].story {
            bounds.push((start, i));
            start = i;
        }
    }
    for (lo, hi) in bounds {
        let len = hi - lo;
        let supervised = ((fraction * len as f64).ceil() as usize).min(len);
        for (offset, record) in corpus.records[lo..hi].iter_mut().enumerate() {
            let flag = offset < supervised;
            for span in &mut record.spans {
                span.supervised = flag;
            }
        }
    }
}

pub fn is_pronoun(surface: &str) -> bool {
    matches!(
        surface.to_lowercase().as_str(),
        "he" | "she" | "it" | "they" | "him" | "her" | "them"
    )
}

/// One evaluated mention of a stream run.
#[derive(Debug, Clone)]
pub struct PredictionRecord {
    pub index: usize,
    pub story: usize,
    pub kind: MentionKind,
    pub surface: String,
    pub gold: usize,
    pub predicted: InstanceId,
    pub supervised: bool,
    pub pronoun: bool,
    pub last_sentence: bool,
    pub gamma: f64,
    pub correct: bool,
}

/// Story-first averaged accuracies.
#[derive(Debug, Clone, Default)]
pub struct Metrics {
    pub entity_all: f64,
    pub entity_last: f64,
    pub relation_all: f64,
    pub relation_last: f64,
    pub pronoun_all: f64,
    pub evaluated: usize,
}

/// Mean over stories of the per-story mean correctness of the records
/// selected by `keep`. Stories without selected records are skipped.
fn story_mean(log: &[PredictionRecord], keep: impl Fn(&PredictionRecord) -> bool) -> f64 {
    let mut per_story: Vec<(usize, usize, usize)> = Vec::new(); // story, hits, total
    for r in log.iter().filter(|r| keep(r)) {
        match per_story.last_mut() {
            Some(s) if s.0 == r.story => {
                s.1 += r.correct as usize;
                s.2 += 1;
            }
            _ => per_story.push((r.story, r.correct as usize, 1)),
        }
    }
    if per_story.is_empty() {
        return 0.0;
    }
    per_story.iter().map(|&(_, h, t)| h as f64 / t as f64).sum::<f64>() / per_story.len() as f64
}

/// Computes the ALL/LAST metric set from a prediction log.
pub fn compute_metrics(log: &[PredictionRecord]) -> Metrics {
    let all = |kind: MentionKind| move |r: &PredictionRecord| r.kind == kind && !r.supervised;
    let last = |kind: MentionKind| move |r: &PredictionRecord| r.kind == kind && r.last_sentence;
    Metrics {
        entity_all: story_mean(log, all(MentionKind::Entity)),
        entity_last: story_mean(log, last(MentionKind::Entity)),
        relation_all: story_mean(log, all(MentionKind::Relation)),
        relation_last: story_mean(log, last(MentionKind::Relation)),
        pronoun_all: story_mean(log, |r| {
            r.kind == MentionKind::Entity && !r.supervised && r.pronoun
        }),
        evaluated: log.iter().filter(|r| !r.supervised).count(),
    }
}

/// Outcome of one online pass.
pub struct StreamOutcome {
    pub engine: Engine,
    pub log: Vec<PredictionRecord>,
    pub metrics: Metrics,
}

fn supervision_label(kind: MentionKind, gold: usize) -> String {
    match kind {
        MentionKind::Entity => format!("e{gold}"),
        MentionKind::Relation => format!("r{gold}"),
    }
}

/// The mention stream of one sentence: surfaces, kinds and, for aligned
/// gold spans, the gold id and supervision flag.
struct SentenceMentions {
    surfaces: Vec<String>,
    kinds: Vec<MentionKind>,
    gold: Vec<Option<(usize, bool)>>,
    /// Gold mentions the detector failed to produce; scored as errors.
    missed: Vec<(MentionKind, usize, bool, String)>,
}

fn sentence_mentions(
    record: &SentenceRecord,
    tagger: Option<&Tagger>,
    gold_segmentation: bool,
) -> Result<SentenceMentions, HarnessError> {
    if gold_segmentation {
        return Ok(SentenceMentions {
            surfaces: record.spans.iter().map(|s| record.span_text(s)).collect(),
            kinds: record.spans.iter().map(|s| s.kind).collect(),
            gold: record.spans.iter().map(|s| Some((s.gold, s.supervised))).collect(),
            missed: Vec::new(),
        });
    }
    let tagger = tagger.ok_or(HarnessError::MissingDetector)?;
    let (tokens, mentions) = tagger.detect(&record.text);
    let mut surfaces = Vec::new();
    let mut kinds = Vec::new();
    let mut gold = Vec::new();
    let mut matched = vec![false; record.spans.len()];
    for m in &mentions {
        let start = tokens[m.first].start;
        let end = tokens[m.last].end;
        let hit = record
            .spans
            .iter()
            .position(|s| s.start == start && s.end == end && s.kind == m.kind);
        if let Some(i) = hit {
            matched[i] = true;
            gold.push(Some((record.spans[i].gold, record.spans[i].supervised)));
        } else {
            gold.push(None);
        }
        surfaces.push(m.surface.clone());
        kinds.push(m.kind);
    }
    let missed = record
        .spans
        .iter()
        .zip(&matched)
        .filter(|(_, &hit)| !hit)
        .map(|(s, _)| (s.kind, s.gold, s.supervised, record.span_text(s)))
        .collect();
    Ok(SentenceMentions { surfaces, kinds, gold, missed })
}

/// Shared pass logic: processes every sentence, logging a prediction per
/// gold-aligned mention. `supervise` disables the supervision branch for
/// re-reading passes while the `supervised` flag of the log still tracks
/// the corpus annotation (so metric scopes stay comparable).
fn stream_pass(
    engine: &mut Engine,
    purity_ent: &mut PurityMap,
    purity_rel: &mut PurityMap,
    corpus: &StoryCorpus,
    enc: &dyn MentionEncoder,
    tagger: Option<&Tagger>,
    supervise: bool,
    log: &mut Vec<PredictionRecord>,
) -> Result<(), HarnessError> {
    let mut index = log.len();
    let stories = corpus.by_story();
    for story in stories {
        engine.story_boundary();
        for (offset, record) in story.iter().enumerate() {
            let last_sentence = offset + 1 == story.len();
            let ms = sentence_mentions(record, tagger, engine.cfg.gold_segmentation)?;
            for i in 0..ms.surfaces.len() {
                let surface = &ms.surfaces[i];
                let kind = ms.kinds[i];
                let e_m = enc.mention_embed(surface);
                let ctx = enc.context_embed(&ms.surfaces, i);
                let sup_label = match ms.gold[i] {
                    Some((gold, true)) if supervise => Some(supervision_label(kind, gold)),
                    _ => None,
                };
                let key = enc.canonical_surface(surface);
                let decision =
                    engine.process(record.story, kind, &key, &e_m, &ctx, sup_label.as_deref());
                if let Some((gold, supervised)) = ms.gold[i] {
                    let purity = match kind {
                        MentionKind::Entity => &mut *purity_ent,
                        MentionKind::Relation => &mut *purity_rel,
                    };
                    purity.observe(decision.instance, gold);
                    let correct = purity.matches(decision.instance, gold);
                    log.push(PredictionRecord {
                        index,
                        story: record.story,
                        kind,
                        surface: surface.clone(),
                        gold,
                        predicted: decision.instance,
                        supervised,
                        pronoun: is_pronoun(surface),
                        last_sentence,
                        gamma: decision.gamma,
                        correct,
                    });
                    index += 1;
                }
            }
            // gold mentions the detector missed count as errors
            for (kind, gold, supervised, surface) in &ms.missed {
                log.push(PredictionRecord {
                    index,
                    story: record.story,
                    kind: *kind,
                    surface: surface.clone(),
                    gold: *gold,
                    predicted: usize::MAX,
                    supervised: *supervised,
                    pronoun: is_pronoun(surface),
                    last_sentence,
                    gamma: 0.0,
                    correct: false,
                });
                index += 1;
            }
        }
    }
    Ok(())
}

/// Runs the engine over a corpus once, with online purity-mapped
/// evaluation.
pub fn run_stream(
    corpus: &StoryCorpus,
    cfg: &Config,
    enc: &dyn MentionEncoder,
    tagger: Option<&Tagger>,
) -> Result<StreamOutcome, HarnessError> {
    if corpus.records.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    let mut engine = Engine::new(cfg.clone());
    let mut purity_ent = PurityMap::new();
    let mut purity_rel = PurityMap::new();
    let mut log = Vec::new();
    stream_pass(&mut engine, &mut purity_ent, &mut purity_rel, corpus, enc, tagger, true, &mut log)?;
    let metrics = compute_metrics(&log);
    Ok(StreamOutcome { engine, log, metrics })
}

/// Re-reading: a first supervised pass, then a second pass over the same
/// stream with the supervision branch disabled. Purity statistics carry
/// over; metrics are reported per pass over the same sentence scopes.
pub struct RereadingOutcome {
    pub engine: Engine,
    pub first: Metrics,
    pub second: Metrics,
    pub first_log: Vec<PredictionRecord>,
    pub second_log: Vec<PredictionRecord>,
}

pub fn run_rereading(
    corpus: &StoryCorpus,
    cfg: &Config,
    enc: &dyn MentionEncoder,
    tagger: Option<&Tagger>,
) -> Result<RereadingOutcome, HarnessError> {
    if corpus.records.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    let mut engine = Engine::new(cfg.clone());
    let mut purity_ent = PurityMap::new();
    let mut purity_rel = PurityMap::new();
    let mut first_log = Vec::new();
    stream_pass(&mut engine, &mut purity_ent, &mut purity_rel, corpus, enc, tagger, true, &mut first_log)?;
    let instances_after_first =
        engine.entities.state.instance_count() + engine.relations.state.instance_count();
    let mut second_log = Vec::new();
    stream_pass(&mut engine, &mut purity_ent, &mut purity_rel, corpus, enc, tagger, false, &mut second_log)?;
    let instances_after_second =
        engine.entities.state.instance_count() + engine.relations.state.instance_count();
    assert!(instances_after_second >= instances_after_first);
    Ok(RereadingOutcome {
        engine,
        first: compute_metrics(&first_log),
        second: compute_metrics(&second_log),
        first_log,
        second_log,
    })
}

/// The count-based baseline: each mention surface predicts its most
/// common supervision label; unseen surfaces fall back to the story's
/// modal supervision, then to the global one. Ties go to the label
/// supervised earliest.
pub fn rb_baseline(corpus: &StoryCorpus) -> (Vec<PredictionRecord>, Metrics) {
    use std::collections::HashMap;
    // label counts carry (count, first-seen order) for tie-breaking
    let mut by_surface: HashMap<(MentionKind, String), HashMap<usize, (usize, usize)>> =
        HashMap::new();
    let mut global: [HashMap<usize, (usize, usize)>; 2] = [HashMap::new(), HashMap::new()];
    let mut order = 0usize;
    let modal = |m: &HashMap<usize, (usize, usize)>| -> Option<usize> {
        m.iter()
            .min_by_key(|(_, &(count, first))| (std::cmp::Reverse(count), first))
            .map(|(&label, _)| label)
    };

    let mut log = Vec::new();
    let mut index = 0usize;
    let mut current_story = usize::MAX;
    let stories = corpus.by_story();
    for story in stories {
        let mut story_counts: [HashMap<usize, (usize, usize)>; 2] =
            [HashMap::new(), HashMap::new()];
        for (offset, record) in story.iter().enumerate() {
            if record.story != current_story {
                current_story = record.story;
            }
            let last_sentence = offset + 1 == story.len();
            for span in &record.spans {
                let surface = record.span_text(span);
                let ki = (span.kind == MentionKind::Relation) as usize;
                let predicted = modal(
                    by_surface.get(&(span.kind, surface.clone())).unwrap_or(&HashMap::new()),
                )
                .or_else(|| modal(&story_counts[ki]))
                .or_else(|| modal(&global[ki]))
                .unwrap_or(usize::MAX);
                log.push(PredictionRecord {
                    index,
                    story: record.story,
                    kind: span.kind,
                    surface: surface.clone(),
                    gold: span.gold,
                    predicted,
                    supervised: span.supervised,
                    pronoun: is_pronoun(&surface),
                    last_sentence,
                    gamma: 0.0,
                    correct: predicted == span.gold,
                });
                index += 1;
                if span.supervised {
                    for m in [
                        by_surface.entry((span.kind, surface)).or_default(),
                        &mut story_counts[ki],
                        &mut global[ki],
                    ] {
                        m.entry(span.gold).or_insert((0, order)).0 += 1;
                    }
                    order += 1;
                }
            }
        }
    }
    let metrics = compute_metrics(&log);
    (log, metrics)
}

/// Writes the `metric,scope,value` CSV for one metric set per scope name.
pub fn write_metrics_csv(path: &Path, sets: &[(&str, &Metrics)]) -> Result<(), HarnessError> {
    let mut out = String::from("metric,scope,value\n");
    for (scope, m) in sets {
        out.push_str(&format!("entity_all,{scope},{:.6}\n", m.entity_all));
        out.push_str(&format!("entity_last,{scope},{:.6}\n", m.entity_last));
        out.push_str(&format!("relation_all,{scope},{:.6}\n", m.relation_all));
        out.push_str(&format!("relation_last,{scope},{:.6}\n", m.relation_last));
        out.push_str(&format!("pronoun_all,{scope},{:.6}\n", m.pronoun_all));
        out.push_str(&format!("evaluated,{scope},{}\n", m.evaluated));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes cumulative entity/relation accuracy at stream deciles.
pub fn write_timeline_csv(path: &Path, log: &[PredictionRecord]) -> Result<(), HarnessError> {
    let mut out = String::from("stream_fraction,entity_all,relation_all\n");
    let n = log.len();
    for decile in 1..=10usize {
        let upto = n * decile / 10;
        let slice = &log[..upto];
        let acc = |kind: MentionKind| {
            let sel: Vec<&PredictionRecord> =
                slice.iter().filter(|r| r.kind == kind && !r.supervised).collect();
            if sel.is_empty() {
                0.0
            } else {
                sel.iter().filter(|r| r.correct).count() as f64 / sel.len() as f64
            }
        };
        out.push_str(&format!(
            "{:.1},{:.6},{:.6}\n",
            decile as f64 / 10.0,
            acc(MentionKind::Entity),
            acc(MentionKind::Relation)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Renders the ALL/LAST accuracy table as text.
pub fn eval_report(sets: &[(&str, &Metrics)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "scope", "ent ALL", "ent LAST", "rel ALL", "rel LAST", "pron ALL"
    ));
    for (scope, m) in sets {
        out.push_str(&format!(
            "{:<16} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}\n",
            scope,
            100.0 * m.entity_all,
            100.0 * m.entity_last,
            100.0 * m.relation_all,
            100.0 * m.relation_last,
            100.0 * m.pronoun_all
        ));
    }
    out
}
