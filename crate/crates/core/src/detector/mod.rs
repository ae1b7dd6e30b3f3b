//! Mention detection: sentence segmentation into entity and relation
//! mentions.
//!
//! Two paths produce the same [`Mention`] output: a rule-based segmenter
//! over closed-class word lists, used to generate silver supervision, and
//! a trainable character-level tagger ([`Tagger`]) bootstrapped from that
//! silver data.

mod tagger;

pub use tagger::{DetectorError, Tagger, TaggerCheckpointError};

use std::collections::HashSet;

use crate::text::Token;

/// Per-token tag. Begin/inside/end, crossed with the mention kind, plus an
/// optional outside class for tokens belonging to no mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    BEnt,
    IEnt,
    EEnt,
    BRel,
    IRel,
    ERel,
    Outside,
}

impl Tag {
    /// Number of tagger classes; the outside class is optional.
    pub fn class_count(with_outside: bool) -> usize {
        if with_outside { 7 } else { 6 }
    }

    pub fn to_class(self) -> usize {
        match self {
            Tag::BEnt => 0,
            Tag::IEnt => 1,
            Tag::EEnt => 2,
            Tag::BRel => 3,
            Tag::IRel => 4,
            Tag::ERel => 5,
            Tag::Outside => 6,
        }
    }

    pub fn from_class(class: usize) -> Tag {
        match class {
            0 => Tag::BEnt,
            1 => Tag::IEnt,
            2 => Tag::EEnt,
            3 => Tag::BRel,
            4 => Tag::IRel,
            5 => Tag::ERel,
            6 => Tag::Outside,
            _ => panic!("tag class out of range: {class}"),
        }
    }

    fn kind(self) -> Option<MentionKind> {
        match self {
            Tag::BEnt | Tag::IEnt | Tag::EEnt => Some(MentionKind::Entity),
            Tag::BRel | Tag::IRel | Tag::ERel => Some(MentionKind::Relation),
            Tag::Outside => None,
        }
    }

    fn is_begin(self) -> bool {
        matches!(self, Tag::BEnt | Tag::BRel)
    }

    fn is_end(self) -> bool {
        matches!(self, Tag::EEnt | Tag::ERel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MentionKind {
    Entity,
    Relation,
}

/// A detected mention: a token span of one kind within a single sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub first: usize,
    pub last: usize,
    pub kind: MentionKind,
    pub surface: String,
}

impl Mention {
    fn from_span(tokens: &[Token], first: usize, last: usize, kind: MentionKind) -> Mention {
        let surface = tokens[first..=last]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Mention { first, last, kind, surface }
    }
}

/// Closed-class word lists backing the rule-based segmenter.
pub struct Lexicon {
    pub determiners: HashSet<String>,
    pub pronouns: HashSet<String>,
    pub prepositions: HashSet<String>,
    pub verbs: HashSet<String>,
    pub auxiliaries: HashSet<String>,
}

impl Lexicon {
    /// Parses a sectioned word-list file: `[section]` headers followed by
    /// one lowercase word per line; `#` starts a comment.
    pub fn parse(body: &str) -> Lexicon {
        let mut lex = Lexicon {
            determiners: HashSet::new(),
            pronouns: HashSet::new(),
            prepositions: HashSet::new(),
            verbs: HashSet::new(),
            auxiliaries: HashSet::new(),
        };
        let mut section: Option<&mut HashSet<String>> = None;
        for raw in body.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name {
                    "determiners" => &mut lex.determiners,
                    "pronouns" => &mut lex.pronouns,
                    "prepositions" => &mut lex.prepositions,
                    "verbs" => &mut lex.verbs,
                    "auxiliaries" => &mut lex.auxiliaries,
                    other => panic!("unknown lexicon section: {other}"),
                });
                continue;
            }
            section
                .as_mut()
                .expect("lexicon word before any [section] header")
                .insert(line.to_lowercase());
        }
        lex
    }

    /// The word lists shipped with the crate.
    pub fn builtin() -> Lexicon {
        Lexicon::parse(include_str!("lexicon.txt"))
    }

    fn is_verbal(&self, word: &str) -> bool {
        self.verbs.contains(word) || self.auxiliaries.contains(word)
    }
}

/// Rule-based silver segmentation. Relation mentions start at a verb or
/// auxiliary, extend over consecutive verbal words, and absorb one trailing
/// preposition. Every other maximal run of non-verbal, non-preposition
/// words is an entity mention. Punctuation and stray prepositions stay
/// outside any mention.
pub fn rule_segment(tokens: &[Token], lex: &Lexicon) -> Vec<Mention> {
    let lowered: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let mut mentions = Vec::new();
    let mut i = 0usize;
    while i < tokens.len() {
        if tokens[i].is_punctuation() {
            i += 1;
            continue;
        }
        if lex.is_verbal(&lowered[i]) {
            let first = i;
            while i < tokens.len() && lex.is_verbal(&lowered[i]) {
                i += 1;
            }
            if i < tokens.len() && lex.prepositions.contains(&lowered[i]) {
                i += 1;
            }
            mentions.push(Mention::from_span(tokens, first, i - 1, MentionKind::Relation));
        } else if lex.prepositions.contains(&lowered[i]) {
            // a preposition with no preceding verb belongs to nothing
            i += 1;
        } else {
            let first = i;
            while i < tokens.len()
                && !tokens[i].is_punctuation()
                && !lex.is_verbal(&lowered[i])
                && !lex.prepositions.contains(&lowered[i])
            {
                i += 1;
            }
            mentions.push(Mention::from_span(tokens, first, i - 1, MentionKind::Entity));
        }
    }
    mentions
}

/// Per-token silver tags for the given mentions; `None` marks tokens that
/// belong to no mention.
pub fn silver_tags(len: usize, mentions: &[Mention]) -> Vec<Option<Tag>> {
    let mut tags = vec![None; len];
    for m in mentions {
        for i in m.first..=m.last {
            let tag = match (m.kind, i == m.first, i == m.last) {
                (MentionKind::Entity, true, _) => Tag::BEnt,
                (MentionKind::Entity, false, true) => Tag::EEnt,
                (MentionKind::Entity, false, false) => Tag::IEnt,
                (MentionKind::Relation, true, _) => Tag::BRel,
                (MentionKind::Relation, false, true) => Tag::ERel,
                (MentionKind::Relation, false, false) => Tag::IRel,
            };
            tags[i] = Some(tag);
        }
    }
    tags
}

/// Turns a predicted tag sequence into non-overlapping mentions, repairing
/// malformed sequences: an inside/end tag with no open mention starts one,
/// a kind switch or a begin tag closes the open mention, and an end tag
/// closes it inclusively.
pub fn decode_tags(tokens: &[Token], tags: &[Tag]) -> Vec<Mention> {
    assert_eq!(tokens.len(), tags.len());
    let mut mentions = Vec::new();
    let mut open: Option<(usize, MentionKind)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let kind = tag.kind();
        if let Some((first, open_kind)) = open {
            let closes = kind != Some(open_kind) || tag.is_begin();
            if closes {
                mentions.push(Mention::from_span(tokens, first, i - 1, open_kind));
                open = None;
            }
        }
        match kind {
            None => {}
            Some(k) => {
                if open.is_none() {
                    open = Some((i, k));
                }
                if tag.is_end() {
                    let (first, _) = open.take().unwrap();
                    mentions.push(Mention::from_span(tokens, first, i, k));
                }
            }
        }
    }
    if let Some((first, kind)) = open {
        mentions.push(Mention::from_span(tokens, first, tokens.len() - 1, kind));
    }
    mentions
}
