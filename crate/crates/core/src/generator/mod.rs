//! Synthetic story-stream generation.
//!
//! An ontology of entity and relation types drives an instance pool with
//! per-instance surface lexicons (base names, short names, pronoun class).
//! Stories are built as lists of non-repeated facts about a main entity,
//! rendered with co-references (short names and pronouns), optional typo
//! noise, and gold mention annotations. A separate builder produces the
//! controlled long-stream variants used by the interference experiments.

mod corpus;

pub use corpus::{emit_corpus, load_corpus, CorpusError, GoldSpan, SentenceRecord, StoryCorpus};

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::Config;
use crate::detector::MentionKind;
use crate::noise::inject_typos;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
}

/// An entity type, optionally below a parent type.
#[derive(Debug, Clone)]
pub struct EntityType {
    pub name: &'static str,
    pub parent: Option<&'static str>,
}

/// A relation type with typed argument slots.
#[derive(Debug, Clone)]
pub struct RelationType {
    pub name: &'static str,
    pub domain: &'static str,
    pub range: &'static str,
}

#[derive(Debug, Clone)]
pub struct Ontology {
    pub entity_types: Vec<EntityType>,
    pub relation_types: Vec<RelationType>,
}

impl Ontology {
    /// True when `ty` equals `ancestor` or lies below it in the hierarchy.
    pub fn is_a(&self, ty: &str, ancestor: &str) -> bool {
        let mut cur = ty;
        loop {
            if cur == ancestor {
                return true;
            }
            match self.entity_types.iter().find(|t| t.name == cur).and_then(|t| t.parent) {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// Panics on dangling parents, cycles, or unresolvable relation slots.
    pub fn check(&self) {
        for t in &self.entity_types {
            let mut seen = vec![t.name];
            let mut cur = t.parent;
            while let Some(p) = cur {
                assert!(!seen.contains(&p), "type hierarchy cycle at {p}");
                seen.push(p);
                let parent = self
                    .entity_types
                    .iter()
                    .find(|e| e.name == p)
                    .unwrap_or_else(|| panic!("dangling parent type {p}"));
                cur = parent.parent;
            }
        }
        for r in &self.relation_types {
            for slot in [r.domain, r.range] {
                assert!(
                    self.entity_types.iter().any(|e| e.name == slot),
                    "relation {} references unknown type {slot}",
                    r.name
                );
            }
        }
    }
}

/// The default ontology: 21 entity types and 28 relation types.
pub fn build_default_ontology() -> Ontology {
    let e = |name, parent| EntityType { name, parent };
    let r = |name, domain, range| RelationType { name, domain, range };
    let onto = Ontology {
        entity_types: vec![
            e("person", None),
            e("teacher", Some("person")),
            e("student", Some("person")),
            e("doctor", Some("person")),
            e("artist", Some("person")),
            e("animal", None),
            e("dog", Some("animal")),
            e("cat", Some("animal")),
            e("mouse", Some("animal")),
            e("bird", Some("animal")),
            e("location", None),
            e("city", Some("location")),
            e("building", Some("location")),
            e("school", Some("building")),
            e("park", Some("location")),
            e("organization", None),
            e("company", Some("organization")),
            e("club", Some("organization")),
            e("object", None),
            e("book", Some("object")),
            e("instrument", Some("object")),
        ],
        relation_types: vec![
            r("went-to", "person", "location"),
            r("visited", "person", "location"),
            r("works-in", "person", "building"),
            r("lives-in", "person", "city"),
            r("moved-to", "person", "city"),
            r("travels-to", "person", "city"),
            r("met", "person", "person"),
            r("helps", "person", "person"),
            r("calls", "person", "person"),
            r("teaches", "teacher", "student"),
            r("likes", "person", "animal"),
            r("feeds", "person", "animal"),
            r("trains", "person", "dog"),
            r("chases", "dog", "cat"),
            r("greets", "person", "person"),
            r("reads", "person", "book"),
            r("wrote", "person", "book"),
            r("plays", "person", "instrument"),
            r("bought", "person", "object"),
            r("sold", "person", "object"),
            r("joined", "person", "club"),
            r("belongs-to", "person", "organization"),
            r("cleans", "person", "building"),
            r("paints", "artist", "building"),
            r("studies", "student", "book"),
            r("walks-to", "person", "park"),
            r("waits-at", "person", "location"),
            r("eats", "animal", "object"),
        ],
    };
    onto.check();
    onto
}

/// An entity instance with its surface lexicon.
#[derive(Debug, Clone)]
pub struct EntityInstance {
    pub id: usize,
    pub ty: &'static str,
    pub base: String,
    pub subnames: Vec<String>,
    pub pronoun: &'static str,
}

/// A relation instance with its surface variants.
#[derive(Debug, Clone)]
pub struct RelationInstance {
    pub id: usize,
    pub ty: &'static str,
    pub surfaces: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct InstancePool {
    pub onto: Ontology,
    pub entities: Vec<EntityInstance>,
    pub relations: Vec<RelationInstance>,
}

impl InstancePool {
    /// Every clean word the pool can emit: entity names, subnames,
    /// pronouns, and relation surface words. Noisy variants are not
    /// included, which makes this the closed vocabulary of the
    /// word-level ablation.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut words = std::collections::BTreeSet::new();
        for e in &self.entities {
            words.extend(e.base.split_whitespace().map(str::to_string));
            for s in &e.subnames {
                words.extend(s.split_whitespace().map(str::to_string));
            }
            words.insert(e.pronoun.to_string());
        }
        for r in &self.relations {
            for s in &r.surfaces {
                words.extend(s.split_whitespace().map(str::to_string));
            }
        }
        words.into_iter().collect()
    }
}

const FIRST_NAMES: [&str; 20] = [
    "alice", "bob", "carla", "david", "emma", "frank", "grace", "henry", "irene", "jack",
    "karen", "liam", "maria", "nathan", "olivia", "peter", "quinn", "rosa", "samuel", "tina",
];
const LAST_NAMES: [&str; 15] = [
    "baker", "stone", "rivera", "clark", "harris", "lopez", "turner", "scott", "reyes",
    "morgan", "hayes", "porter", "vega", "brooks", "fontaine",
];
const PERSON_TYPES: [&str; 5] = ["person", "teacher", "student", "doctor", "artist"];

/// The default pool: 130 entity and 27 relation instances. Short names are
/// deliberately shared across instances (three people per first name, one
/// species or category name per animal and object group) so that a
/// substantial share of mention occurrences is ambiguous.
pub fn build_default_pool(onto: Ontology) -> InstancePool {
    let mut entities = Vec::new();
    let mut id = 0usize;
    let mut push = |ty: &'static str, base: String, subnames: Vec<String>, pronoun: &'static str,
                    entities: &mut Vec<EntityInstance>| {
        entities.push(EntityInstance { id, ty, base, subnames, pronoun });
        id += 1;
    };

    // 60 people: each first name is shared by three instances
    for f in 0..FIRST_NAMES.len() {
        for l in 0..3 {
            let first = FIRST_NAMES[f];
            let last = LAST_NAMES[(f * 3 + l) % LAST_NAMES.len()];
            let ty = PERSON_TYPES[(f * 3 + l) % PERSON_TYPES.len()];
            let pronoun = if f % 2 == 0 { "she" } else { "he" };
            push(ty, format!("{first} {last}"), vec![first.to_string()], pronoun, &mut entities);
        }
    }
    // 20 animals with species short names
    let animals: [(&str, &[&str]); 4] = [
        ("dog", &["rex", "buddy", "fido", "toby", "spike"]),
        ("cat", &["whiskers", "mittens", "felix", "salem", "oscar"]),
        ("mouse", &["pip", "nibbles", "squeak", "dusty", "pepper"]),
        ("bird", &["kiwi", "sunny", "coco", "blue", "chirpy"]),
    ];
    for (ty, names) in animals {
        for name in names {
            push(ty, name.to_string(), vec![format!("the {ty}")], "it", &mut entities);
        }
    }
    // 25 locations; cities are proper names without short names
    for city in ["springfield", "riverton", "lakewood", "ashford", "millbrook", "easton", "fairview", "oakdale"] {
        push("city", city.to_string(), vec![], "it", &mut entities);
    }
    for b in ["the north office", "the downtown office", "the old office", "the corner office", "the glass office", "the main office"] {
        push("building", b.to_string(), vec!["the office".to_string()], "it", &mut entities);
    }
    for s in ["the art school", "the music school", "the north school", "the south school", "the village school"] {
        push("school", s.to_string(), vec!["the school".to_string()], "it", &mut entities);
    }
    for p in ["the rose park", "the river park", "the oak park", "the hill park", "the east park", "the west park"] {
        push("park", p.to_string(), vec!["the park".to_string()], "it", &mut entities);
    }
    // 10 organizations
    for c in ["acme corp", "orbit labs", "nova goods", "delta freight", "zenith press"] {
        push("company", c.to_string(), vec!["the company".to_string()], "it", &mut entities);
    }
    for c in ["the chess club", "the garden club", "the film club", "the hiking club", "the book club"] {
        push("club", c.to_string(), vec!["the club".to_string()], "it", &mut entities);
    }
    // 15 objects
    for b in ["the red book", "the blue book", "the green book", "the worn book", "the tiny book", "the thick book"] {
        push("book", b.to_string(), vec!["the book".to_string()], "it", &mut entities);
    }
    for i in ["the piano", "the violin", "the guitar", "the flute", "the drum"] {
        push("instrument", i.to_string(), vec!["the instrument".to_string()], "it", &mut entities);
    }
    for o in ["the lamp", "the clock", "the chair", "the table"] {
        push("object", o.to_string(), vec![], "it", &mut entities);
    }

    let rel = |id, ty, surfaces: &[&str]| RelationInstance {
        id,
        ty,
        surfaces: surfaces.iter().map(|s| s.to_string()).collect(),
    };
    let relations = vec![
        rel(0, "went-to", &["went to", "goes to"]),
        rel(1, "visited", &["visited", "visits"]),
        rel(2, "works-in", &["works in", "worked in"]),
        rel(3, "lives-in", &["lives in", "lived in"]),
        rel(4, "moved-to", &["moved to", "moves to"]),
        rel(5, "travels-to", &["travels to", "traveled to"]),
        rel(6, "met", &["met", "meets"]),
        rel(7, "helps", &["helps", "helped"]),
        rel(8, "calls", &["calls", "called"]),
        rel(9, "teaches", &["teaches", "taught"]),
        rel(10, "likes", &["likes", "liked"]),
        rel(11, "feeds", &["feeds", "fed"]),
        rel(12, "trains", &["trains", "trained"]),
        rel(13, "chases", &["is chasing", "chases"]),
        rel(14, "greets", &["greets", "greeted"]),
        rel(15, "reads", &["reads", "is reading"]),
        rel(16, "wrote", &["wrote", "writes"]),
        rel(17, "plays", &["plays", "played"]),
        rel(18, "bought", &["bought", "buys"]),
        rel(19, "sold", &["sold", "sells"]),
        rel(20, "joined", &["joined", "joins"]),
        rel(21, "belongs-to", &["belongs to"]),
        rel(22, "cleans", &["cleans", "cleaned"]),
        rel(23, "paints", &["paints", "is painting"]),
        rel(24, "studies", &["studies", "studied"]),
        rel(25, "walks-to", &["walked to", "walks to"]),
        rel(26, "waits-at", &["waits at", "waited at"]),
    ];
    InstancePool { onto, entities, relations }
}

/// One gold mention occurrence with its pre-noise surface, used for the
/// corpus statistics.
#[derive(Debug, Clone)]
pub struct Occurrence {
    pub story: usize,
    pub kind: MentionKind,
    pub surface: String,
    pub gold: usize,
    pub pronoun: bool,
    pub first_in_story: bool,
}

/// Aggregate corpus statistics over the clean (pre-noise) surfaces.
#[derive(Debug, Clone)]
pub struct CorpusStats {
    pub stories: usize,
    pub sentences: usize,
    pub entity_occurrences: usize,
    pub relation_occurrences: usize,
    /// Entity occurrences that repeat an entity already mentioned in the
    /// same story.
    pub coreferences: usize,
    /// Occurrences whose surface is used by at least two instances.
    pub ambiguous: usize,
    pub pronouns: usize,
    /// Distinct whitespace tokens of the emitted (noisy) text.
    pub unique_tokens: usize,
}

impl CorpusStats {
    pub fn report(&self) -> String {
        format!(
            "stories: {}\nsentences: {}\nentity_occurrences: {}\nrelation_occurrences: {}\ncoreferences: {}\nambiguous_occurrences: {}\npronoun_occurrences: {}\nunique_tokens: {}\n",
            self.stories,
            self.sentences,
            self.entity_occurrences,
            self.relation_occurrences,
            self.coreferences,
            self.ambiguous,
            self.pronouns,
            self.unique_tokens
        )
    }
}

fn compute_stats(records: &[SentenceRecord], occurrences: &[Occurrence]) -> CorpusStats {
    let mut by_surface: HashMap<(MentionKind, &str), HashSet<usize>> = HashMap::new();
    for o in occurrences {
        by_surface.entry((o.kind, o.surface.as_str())).or_default().insert(o.gold);
    }
    let ambiguous = occurrences
        .iter()
        .filter(|o| by_surface[&(o.kind, o.surface.as_str())].len() >= 2)
        .count();
    let coreferences = occurrences
        .iter()
        .filter(|o| o.kind == MentionKind::Entity && !o.first_in_story)
        .count();
    let mut tokens: HashSet<String> = HashSet::new();
    for r in records {
        for t in r.text.split_whitespace() {
            tokens.insert(t.trim_matches('.').to_string());
        }
    }
    CorpusStats {
        stories: records.iter().map(|r| r.story + 1).max().unwrap_or(0),
        sentences: records.len(),
        entity_occurrences: occurrences.iter().filter(|o| o.kind == MentionKind::Entity).count(),
        relation_occurrences: occurrences.iter().filter(|o| o.kind == MentionKind::Relation).count(),
        coreferences,
        ambiguous,
        pronouns: occurrences.iter().filter(|o| o.pronoun).count(),
        unique_tokens: tokens.len(),
    }
}

/// Probability that a repeated, non-pronoun mention is rendered with a
/// short name instead of its base surface.
const SUBNAME_RATE: f64 = 0.7;
const OBJECT_SUBNAME_RATE: f64 = 0.5;

struct Renderer<'a> {
    pool: &'a InstancePool,
    typo_rate: f64,
    seen: HashSet<usize>,
    prev_subject: Option<usize>,
}

struct RenderedMention {
    clean: String,
    noisy: String,
    gold: usize,
    pronoun: bool,
    first: bool,
}

impl<'a> Renderer<'a> {
    fn new(pool: &'a InstancePool, typo_rate: f64) -> Renderer<'a> {
        Renderer { pool, typo_rate, seen: HashSet::new(), prev_subject: None }
    }

    fn noise(&self, surface: &str, rng: &mut ChaCha8Rng) -> String {
        let noisy = inject_typos(surface, self.typo_rate, rng);
        if noisy.trim().is_empty() { surface.to_string() } else { noisy }
    }

    fn entity(
        &mut self,
        id: usize,
        is_subject: bool,
        pronoun_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> RenderedMention {
        let e = &self.pool.entities[id];
        let first = !self.seen.contains(&id);
        self.seen.insert(id);
        let (clean, pronoun) = if first {
            (e.base.clone(), false)
        } else if is_subject && self.prev_subject == Some(id) && rng.gen::<f64>() < pronoun_rate {
            (e.pronoun.to_string(), true)
        } else {
            let rate = if is_subject { SUBNAME_RATE } else { OBJECT_SUBNAME_RATE };
            if !e.subnames.is_empty() && rng.gen::<f64>() < rate {
                (e.subnames[rng.gen_range(0..e.subnames.len())].clone(), false)
            } else {
                (e.base.clone(), false)
            }
        };
        let noisy = self.noise(&clean, rng);
        RenderedMention { clean, noisy, gold: id, pronoun, first }
    }

    fn relation(&self, id: usize, rng: &mut ChaCha8Rng) -> RenderedMention {
        let r = &self.pool.relations[id];
        let clean = r.surfaces[rng.gen_range(0..r.surfaces.len())].clone();
        let noisy = self.noise(&clean, rng);
        RenderedMention { clean, noisy, gold: id, pronoun: false, first: false }
    }
}

fn assemble(
    story: usize,
    idx: usize,
    subj: &RenderedMention,
    rel: &RenderedMention,
    obj: &RenderedMention,
) -> SentenceRecord {
    let s_len = subj.noisy.chars().count();
    let r_len = rel.noisy.chars().count();
    let o_len = obj.noisy.chars().count();
    let text = format!("{} {} {}.", subj.noisy, rel.noisy, obj.noisy);
    let spans = vec![
        GoldSpan { start: 0, end: s_len, kind: MentionKind::Entity, gold: subj.gold, supervised: false },
        GoldSpan {
            start: s_len + 1,
            end: s_len + 1 + r_len,
            kind: MentionKind::Relation,
            gold: rel.gold,
            supervised: false,
        },
        GoldSpan {
            start: s_len + r_len + 2,
            end: s_len + r_len + 2 + o_len,
            kind: MentionKind::Entity,
            gold: obj.gold,
            supervised: false,
        },
    ];
    SentenceRecord { story, idx, boundary: idx == 0, text, spans }
}

fn push_occurrences(out: &mut Vec<Occurrence>, story: usize, ms: [(&RenderedMention, MentionKind); 3]) {
    for (m, kind) in ms {
        out.push(Occurrence {
            story,
            kind,
            surface: m.clean.clone(),
            gold: m.gold,
            pronoun: m.pronoun,
            first_in_story: m.first,
        });
    }
}

fn compatible_relations(pool: &InstancePool, subject_ty: &str) -> Vec<usize> {
    pool.relations
        .iter()
        .filter(|r| {
            let rt = pool.onto.relation_types.iter().find(|t| t.name == r.ty).unwrap();
            pool.onto.is_a(subject_ty, rt.domain)
        })
        .map(|r| r.id)
        .collect()
}

fn objects_for(pool: &InstancePool, relation: usize, subject: usize) -> Vec<usize> {
    let rt_name = pool.relations[relation].ty;
    let rt = pool.onto.relation_types.iter().find(|t| t.name == rt_name).unwrap();
    pool.entities
        .iter()
        .filter(|e| e.id != subject && pool.onto.is_a(e.ty, rt.range))
        .map(|e| e.id)
        .collect()
}

/// Generates the default story stream: per story, a list of non-repeated
/// facts mostly about one main entity, rendered with co-references,
/// pronouns and typo noise.
pub fn generate_stream(
    pool: &InstancePool,
    cfg: &Config,
) -> Result<(StoryCorpus, CorpusStats), GeneratorError> {
    if cfg.stories == 0 || cfg.sentences < cfg.stories {
        return Err(GeneratorError::Infeasible(format!(
            "{} stories cannot cover {} sentences",
            cfg.stories, cfg.sentences
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let persons: Vec<usize> = pool
        .entities
        .iter()
        .filter(|e| pool.onto.is_a(e.ty, "person"))
        .map(|e| e.id)
        .collect();
    let subject_capable: Vec<usize> = pool
        .entities
        .iter()
        .filter(|e| !compatible_relations(pool, e.ty).is_empty())
        .map(|e| e.id)
        .collect();

    let mut records = Vec::new();
    let mut occurrences = Vec::new();
    let mut remaining = cfg.sentences as i64;
    for story in 0..cfg.stories {
        let left = (cfg.stories - story) as i64;
        let avg = remaining / left;
        let jitter = rng.gen_range(-3..=3);
        let len = (avg + jitter).clamp(4, remaining - 4 * (left - 1)).max(1) as usize;
        remaining -= len as i64;

        let main = persons[rng.gen_range(0..persons.len())];
        let mut facts: HashSet<(usize, usize, usize)> = HashSet::new();
        let mut renderer = Renderer::new(pool, cfg.typo_rate);
        let mut idx = 0usize;
        let mut attempts = 0usize;
        while idx < len && attempts < len * 50 {
            attempts += 1;
            let subject = if idx == 0 || rng.gen::<f64>() < cfg.main_focus {
                main
            } else if rng.gen::<f64>() < cfg.off_topic / (1.0 - cfg.main_focus) {
                subject_capable[rng.gen_range(0..subject_capable.len())]
            } else {
                persons[rng.gen_range(0..persons.len())]
            };
            let rels = compatible_relations(pool, pool.entities[subject].ty);
            if rels.is_empty() {
                continue;
            }
            let relation = rels[rng.gen_range(0..rels.len())];
            let objects = objects_for(pool, relation, subject);
            if objects.is_empty() {
                continue;
            }
            let object = objects[rng.gen_range(0..objects.len())];
            if !facts.insert((subject, relation, object)) {
                continue;
            }
            // pronouns never open a story; the first sentence always names
            // the main entity
            let pronoun_rate = if idx == 0 { 0.0 } else { cfg.pronoun_rate };
            let s = renderer.entity(subject, true, pronoun_rate, &mut rng);
            let r = renderer.relation(relation, &mut rng);
            let o = renderer.entity(object, false, 0.0, &mut rng);
            renderer.prev_subject = Some(subject);
            records.push(assemble(story, idx, &s, &r, &o));
            push_occurrences(
                &mut occurrences,
                story,
                [(&s, MentionKind::Entity), (&r, MentionKind::Relation), (&o, MentionKind::Entity)],
            );
            idx += 1;
        }
        if idx < len {
            return Err(GeneratorError::Infeasible(format!(
                "story {story} exhausted the fact space at {idx}/{len} sentences"
            )));
        }
    }
    let stats = compute_stats(&records, &occurrences);
    Ok((StoryCorpus { records }, stats))
}

/// Long-stream interference settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    /// Intermediate stories share nothing with the target story.
    A,
    /// Adds pronouns to the intermediate stories.
    B,
    /// Adds shared surfaces that may or may not refer to target entities.
    C,
    /// Adds shared surfaces that never refer to target entities.
    D,
}

impl Setting {
    pub fn parse(s: &str) -> Option<Setting> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Some(Setting::A),
            "B" => Some(Setting::B),
            "C" => Some(Setting::C),
            "D" => Some(Setting::D),
            _ => None,
        }
    }
}

/// A target story followed by interference stories, with ambiguity
/// accounting over the target mentions.
#[derive(Debug, Clone)]
pub struct Longstream {
    pub setting: Setting,
    pub target: Vec<SentenceRecord>,
    pub intermediates: Vec<Vec<SentenceRecord>>,
    pub checkpoints: Vec<usize>,
}

impl Longstream {
    /// Mean number of distinct gold entities associated with each target
    /// entity mention surface, over everything up to `t` intermediate
    /// stories. The long streams carry no typo noise, so record text is
    /// exact surface text.
    pub fn ambiguity_at(&self, t: usize) -> f64 {
        let mut golds: HashMap<String, HashSet<usize>> = HashMap::new();
        let mut collect = |records: &[SentenceRecord]| {
            for r in records {
                for s in &r.spans {
                    if s.kind == MentionKind::Entity {
                        golds.entry(r.span_text(s)).or_default().insert(s.gold);
                    }
                }
            }
        };
        collect(&self.target);
        for story in &self.intermediates[..t.min(self.intermediates.len())] {
            collect(story);
        }
        let mut total = 0usize;
        let mut count = 0usize;
        for r in &self.target {
            for s in &r.spans {
                if s.kind == MentionKind::Entity {
                    total += golds[&r.span_text(s)].len();
                    count += 1;
                }
            }
        }
        total as f64 / count.max(1) as f64
    }
}

const TARGET_LEN: usize = 20;
const INTERMEDIATE_LEN: usize = 6;
const INTERMEDIATE_STORIES: usize = 150;
const INTERMEDIATE_PRONOUN_RATE: f64 = 0.3;

/// Name surfaces of an entity, excluding its pronoun: pronoun overlap is
/// governed per setting, not by the disjointness filter.
fn name_surfaces(e: &EntityInstance) -> Vec<String> {
    let mut out = vec![e.base.clone()];
    out.extend(e.subnames.iter().cloned());
    out
}

/// Builds a long-stream corpus for one interference setting. The target
/// story is always the first story; checkpoints index into the
/// intermediate stories.
pub fn build_longstream(
    pool: &InstancePool,
    cfg: &Config,
    setting: Setting,
) -> Result<Longstream, GeneratorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // target: a person with a shared first name, talking only about
    // non-person objects so every subject mention is the main entity
    let main = 0usize; // "alice baker"
    let main_first = pool.entities[main].subnames[0].clone();
    let person_alts: Vec<usize> = pool
        .entities
        .iter()
        .filter(|e| e.id != main && e.subnames.first() == Some(&main_first))
        .map(|e| e.id)
        .collect();
    assert!(person_alts.len() >= 2, "shared-name group too small");

    // six distinct target objects with category short names
    let target_objects: Vec<usize> = ["the rose park", "the red book", "the art school", "the piano", "rex", "the north office"]
        .iter()
        .map(|base| pool.entities.iter().find(|e| &e.base == base).expect("pool object").id)
        .collect();

    let mut renderer = Renderer::new(pool, 0.0);
    let mut target = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for &obj in &target_objects {
        for rel in compatible_relations(pool, pool.entities[main].ty) {
            if objects_for(pool, rel, main).contains(&obj) {
                pairs.push((rel, obj));
            }
        }
    }
    pairs.shuffle(&mut rng);
    if pairs.len() < TARGET_LEN {
        return Err(GeneratorError::Infeasible("target fact space too small".into()));
    }
    for (idx, &(rel, obj)) in pairs.iter().take(TARGET_LEN).enumerate() {
        let pronoun_rate = if idx == 0 { 0.0 } else { 0.4 };
        let s = renderer.entity(main, true, pronoun_rate, &mut rng);
        let r = renderer.relation(rel, &mut rng);
        let o = renderer.entity(obj, false, 0.0, &mut rng);
        renderer.prev_subject = Some(main);
        target.push(assemble(0, idx, &s, &r, &o));
    }
    let target_surfaces: HashSet<String> = target
        .iter()
        .flat_map(|r| r.spans.iter().map(|s| r.span_text(s)))
        .collect();

    // interference material
    let target_entities: HashSet<usize> =
        target.iter().flat_map(|r| r.spans.iter().filter(|s| s.kind == MentionKind::Entity).map(|s| s.gold)).collect();
    let disjoint = |e: &EntityInstance| {
        !target_entities.contains(&e.id)
            && name_surfaces(e).iter().all(|s| !target_surfaces.contains(s))
    };
    let mains: Vec<usize> = pool
        .entities
        .iter()
        .filter(|e| pool.onto.is_a(e.ty, "person") && disjoint(e))
        .map(|e| e.id)
        .take(8)
        .collect();
    let mut intermediates = Vec::new();
    for story in 1..=INTERMEDIATE_STORIES {
        let mut renderer = Renderer::new(pool, 0.0);
        let mut records = Vec::new();
        let mut facts: HashSet<(usize, usize, usize)> = HashSet::new();
        let im_main = mains[(story - 1) % mains.len()];
        let pronoun_rate = if setting == Setting::A { 0.0 } else { INTERMEDIATE_PRONOUN_RATE };
        let mut idx = 0usize;
        let mut attempts = 0usize;
        while idx < INTERMEDIATE_LEN && attempts < 500 {
            attempts += 1;
            let rels = compatible_relations(pool, pool.entities[im_main].ty);
            let relation = rels[rng.gen_range(0..rels.len())];
            let objects: Vec<usize> = objects_for(pool, relation, im_main)
                .into_iter()
                .filter(|&o| disjoint(&pool.entities[o]))
                .collect();
            if objects.is_empty() {
                continue;
            }
            let object = objects[rng.gen_range(0..objects.len())];
            if !facts.insert((im_main, relation, object)) {
                continue;
            }
            let rate = if idx == 0 { 0.0 } else { pronoun_rate };
            let s = renderer.entity(im_main, true, rate, &mut rng);
            let r = renderer.relation(relation, &mut rng);
            // intermediates render base surfaces only, so nothing shared
            // slips in outside the controlled sentences below
            let o = renderer.entity(object, false, 0.0, &mut rng);
            renderer.prev_subject = Some(im_main);
            records.push(assemble(story, idx, &s, &r, &o));
            idx += 1;
        }
        // the controlled shared-surface sentence of settings C and D
        if matches!(setting, Setting::C | Setting::D) {
            let use_person = rng.gen::<f64>() < 0.5;
            let (surface, gold, rel) = if use_person {
                // C re-uses one fixed foreign referent per surface while D
                // rotates over all of them, so D accumulates strictly more
                // distinct referents
                let gold = match setting {
                    Setting::C if rng.gen::<f64>() < 0.5 => main,
                    Setting::C => person_alts[0],
                    _ => person_alts[rng.gen_range(0..person_alts.len())],
                };
                let rel = [6usize, 7, 8][rng.gen_range(0..3)]; // met / helps / calls
                (main_first.clone(), gold, rel)
            } else {
                let target_obj = target_objects[rng.gen_range(0..target_objects.len())];
                let sub = pool.entities[target_obj]
                    .subnames
                    .first()
                    .cloned()
                    .unwrap_or_else(|| pool.entities[target_obj].base.clone());
                let alts: Vec<usize> = pool
                    .entities
                    .iter()
                    .filter(|e| !target_entities.contains(&e.id) && e.subnames.contains(&sub))
                    .map(|e| e.id)
                    .collect();
                let gold = match setting {
                    Setting::C if rng.gen::<f64>() < 0.5 || alts.is_empty() => target_obj,
                    Setting::C => alts[0],
                    _ => alts[rng.gen_range(0..alts.len())],
                };
                let rels: Vec<usize> = compatible_relations(pool, pool.entities[im_main].ty)
                    .into_iter()
                    .filter(|&r| objects_for(pool, r, im_main).contains(&gold))
                    .collect();
                if rels.is_empty() {
                    continue;
                }
                (sub, gold, rels[rng.gen_range(0..rels.len())])
            };
            let s = renderer.entity(im_main, true, 0.0, &mut rng);
            let r = renderer.relation(rel, &mut rng);
            let o = RenderedMention {
                clean: surface.clone(),
                noisy: surface,
                gold,
                pronoun: false,
                first: false,
            };
            let idx = records.len();
            records.push(assemble(story, idx, &s, &r, &o));
        }
        intermediates.push(records);
    }

    let long = Longstream {
        setting,
        target,
        intermediates,
        checkpoints: vec![0, 10, 50, 100, 150],
    };
    verify_longstream(pool, &long, &target_surfaces, &target_entities);
    Ok(long)
}

/// Asserts the per-setting construction constraints on the emitted
/// stories.
fn verify_longstream(
    pool: &InstancePool,
    long: &Longstream,
    target_surfaces: &HashSet<String>,
    target_entities: &HashSet<usize>,
) {
    for story in &long.intermediates {
        for r in story {
            for s in &r.spans {
                if s.kind != MentionKind::Entity {
                    continue;
                }
                let surface = r.span_text(s);
                let shared = target_surfaces.contains(&surface);
                match long.setting {
                    Setting::A => {
                        assert!(!shared, "setting A leaked shared surface `{surface}`");
                        assert!(!target_entities.contains(&s.gold));
                    }
                    Setting::B => {
                        let is_pronoun = ["he", "she", "it", "they"].contains(&surface.as_str());
                        assert!(!shared || is_pronoun, "setting B leaked `{surface}`");
                        assert!(!target_entities.contains(&s.gold));
                    }
                    Setting::C => {}
                    Setting::D => {
                        assert!(
                            !target_entities.contains(&s.gold),
                            "setting D referenced a target entity via `{surface}`"
                        );
                    }
                }
            }
        }
    }
    // every intermediate main must exist and be a person
    for story in &long.intermediates {
        let first = &story[0];
        let subj = &first.spans[0];
        assert!(pool.onto.is_a(pool.entities[subj.gold].ty, "person"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_pool() -> InstancePool {
        build_default_pool(build_default_ontology())
    }

    #[test]
    fn ontology_counts_and_hierarchy() {
        let onto = build_default_ontology();
        assert_eq!(onto.entity_types.len(), 21);
        assert_eq!(onto.relation_types.len(), 28);
        assert!(onto.is_a("teacher", "person"));
        assert!(onto.is_a("school", "location"));
        assert!(!onto.is_a("person", "teacher"));
    }

    #[test]
    fn pool_counts_and_surfaces() {
        let pool = default_pool();
        assert_eq!(pool.entities.len(), 130);
        assert_eq!(pool.relations.len(), 27);
        for e in &pool.entities {
            assert!(!e.base.is_empty());
        }
        // shared short names exist by construction
        let alices = pool
            .entities
            .iter()
            .filter(|e| e.subnames.contains(&"alice".to_string()))
            .count();
        assert!(alices >= 2);
    }

    #[test]
    fn small_stream_is_deterministic() {
        let pool = default_pool();
        let mut cfg = Config::default();
        cfg.stories = 30;
        cfg.sentences = 500;
        let (a, _) = generate_stream(&pool, &cfg).unwrap();
        let (b, _) = generate_stream(&pool, &cfg).unwrap();
        assert_eq!(a, b);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 8;
        let (c, _) = generate_stream(&pool, &cfg2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stream_structure_is_valid() {
        let pool = default_pool();
        let mut cfg = Config::default();
        cfg.stories = 20;
        cfg.sentences = 350;
        let (corpus, stats) = generate_stream(&pool, &cfg).unwrap();
        assert_eq!(stats.stories, 20);
        assert_eq!(corpus.records.len(), 350);
        for r in &corpus.records {
            assert_eq!(r.spans.len(), 3);
            assert_eq!(r.spans[0].kind, MentionKind::Entity);
            assert_eq!(r.spans[1].kind, MentionKind::Relation);
            assert_eq!(r.spans[2].kind, MentionKind::Entity);
            let chars = r.text.chars().count();
            let mut prev_end = 0;
            for s in &r.spans {
                assert!(s.start >= prev_end && s.start < s.end && s.end <= chars);
                prev_end = s.end;
            }
            assert_eq!(r.boundary, r.idx == 0);
        }
        // facts are not repeated within a story
        for story in corpus.by_story() {
            let mut seen = HashSet::new();
            for r in story {
                assert!(seen.insert((r.spans[0].gold, r.spans[1].gold, r.spans[2].gold)));
            }
        }
    }

    #[test]
    fn no_pronoun_opens_a_story() {
        let pool = default_pool();
        let mut cfg = Config::default();
        cfg.stories = 40;
        cfg.sentences = 700;
        cfg.typo_rate = 0.0;
        let (corpus, _) = generate_stream(&pool, &cfg).unwrap();
        for story in corpus.by_story() {
            let first = &story[0];
            let subject = first.span_text(&first.spans[0]);
            assert!(!["he", "she", "it", "they"].contains(&subject.as_str()));
        }
    }

    #[test]
    fn infeasible_config_errors() {
        let pool = default_pool();
        let mut cfg = Config::default();
        cfg.stories = 10;
        cfg.sentences = 5;
        assert!(generate_stream(&pool, &cfg).is_err());
    }

    #[test]
    fn default_corpus_statistics_in_range() {
        let pool = default_pool();
        let cfg = Config::default();
        let (_, stats) = generate_stream(&pool, &cfg).unwrap();
        assert_eq!(stats.stories, 564);
        assert_eq!(stats.sentences, 10_000);
        let coref_target = 7975.0;
        let amb_target = 6830.0;
        assert!((stats.coreferences as f64 - coref_target).abs() <= 0.2 * coref_target);
        assert!((stats.ambiguous as f64 - amb_target).abs() <= 0.2 * amb_target);
        let tok_target = 2176.0;
        assert!((stats.unique_tokens as f64 - tok_target).abs() <= 0.2 * tok_target);
        assert!(stats.pronouns > 0);
    }

    #[test]
    fn longstream_settings_verify_and_order() {
        let pool = default_pool();
        let mut cfg = Config::default();
        cfg.seed = 3;
        let a = build_longstream(&pool, &cfg, Setting::A).unwrap();
        let b = build_longstream(&pool, &cfg, Setting::B).unwrap();
        let c = build_longstream(&pool, &cfg, Setting::C).unwrap();
        let d = build_longstream(&pool, &cfg, Setting::D).unwrap();
        assert_eq!(a.target.len(), TARGET_LEN);
        assert_eq!(a.intermediates.len(), INTERMEDIATE_STORIES);
        // setting A adds no ambiguity at any checkpoint
        for &t in &a.checkpoints {
            assert!((a.ambiguity_at(t) - 1.0).abs() < 1e-12);
        }
        let t = 150;
        let (aa, ab, ac, ad) =
            (a.ambiguity_at(t), b.ambiguity_at(t), c.ambiguity_at(t), d.ambiguity_at(t));
        assert!(aa < ab && ab < ac && ac < ad, "{aa} {ab} {ac} {ad}");
    }
}
