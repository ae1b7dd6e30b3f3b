//! Corpus records and the line-oriented corpus file format.
//!
//! One record per line, tab-separated: story id, sentence index, story
//! boundary flag, raw text, gold spans. Spans are semicolon-separated
//! `start:end:kind:gold_id:sup` with character offsets into the text.
//! Lines starting with `#` are comments.

use std::path::Path;

use thiserror::Error;

use crate::detector::MentionKind;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: {1}")]
    Malformed(usize, String),
}

/// A gold mention annotation with character offsets into the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldSpan {
    pub start: usize,
    pub end: usize,
    pub kind: MentionKind,
    pub gold: usize,
    pub supervised: bool,
}

/// One generated sentence with its gold annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceRecord {
    pub story: usize,
    pub idx: usize,
    /// True on the first sentence of a story.
    pub boundary: bool,
    pub text: String,
    pub spans: Vec<GoldSpan>,
}

impl SentenceRecord {
    /// The surface covered by a span.
    pub fn span_text(&self, span: &GoldSpan) -> String {
        self.text.chars().skip(span.start).take(span.end - span.start).collect()
    }
}

/// An ordered stream of stories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoryCorpus {
    pub records: Vec<SentenceRecord>,
}

impl StoryCorpus {
    pub fn stories(&self) -> usize {
        self.records.iter().map(|r| r.story + 1).max().unwrap_or(0)
    }

    /// Records grouped by story, in stream order.
    pub fn by_story(&self) -> Vec<&[SentenceRecord]> {
        let mut out = Vec::new();
        let mut start = 0usize;
        for i in 1..=self.records.len() {
            if i == self.records.len() || self.records[i].story != self.records[start].story {
                out.push(&self.records[start..i]);
                start = i;
            }
        }
        out
    }
}

fn kind_tag(kind: MentionKind) -> &'static str {
    match kind {
        MentionKind::Entity => "ent",
        MentionKind::Relation => "rel",
    }
}

/// Writes the corpus in the line format above.
pub fn emit_corpus(corpus: &StoryCorpus, path: &Path) -> Result<(), CorpusError> {
    let mut out = String::new();
    for r in &corpus.records {
        assert!(!r.text.contains('\t') && !r.text.contains('\n'), "text must be single-line");
        let spans = r
            .spans
            .iter()
            .map(|s| {
                format!(
                    "{}:{}:{}:{}:{}",
                    s.start,
                    s.end,
                    kind_tag(s.kind),
                    s.gold,
                    u8::from(s.supervised)
                )
            })
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.story,
            r.idx,
            u8::from(r.boundary),
            r.text,
            spans
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_span(lineno: usize, field: &str) -> Result<GoldSpan, CorpusError> {
    let parts: Vec<&str> = field.split(':').collect();
    if parts.len() != 5 {
        return Err(CorpusError::Malformed(lineno, format!("bad span `{field}`")));
    }
    let num = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| CorpusError::Malformed(lineno, format!("bad integer `{t}`")))
    };
    let kind = match parts[2] {
        "ent" => MentionKind::Entity,
        "rel" => MentionKind::Relation,
        other => return Err(CorpusError::Malformed(lineno, format!("bad kind `{other}`"))),
    };
    let supervised = match parts[4] {
        "0" => false,
        "1" => true,
        other => return Err(CorpusError::Malformed(lineno, format!("bad sup flag `{other}`"))),
    };
    Ok(GoldSpan { start: num(parts[0])?, end: num(parts[1])?, kind, gold: num(parts[3])?, supervised })
}

/// Reads a corpus file, validating span offsets against the text.
pub fn load_corpus(path: &Path) -> Result<StoryCorpus, CorpusError> {
    let body = std::fs::read_to_string(path)?;
    let mut corpus = StoryCorpus::default();
    for (i, line) in body.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(CorpusError::Malformed(lineno, format!("expected 5 fields, got {}", fields.len())));
        }
        let num = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| CorpusError::Malformed(lineno, format!("bad integer `{t}`")))
        };
        let boundary = match fields[2] {
            "0" => false,
            "1" => true,
            other => return Err(CorpusError::Malformed(lineno, format!("bad boundary `{other}`"))),
        };
        let text = fields[3].to_string();
        let mut spans = Vec::new();
        if !fields[4].is_empty() {
            for f in fields[4].split(';') {
                spans.push(parse_span(lineno, f)?);
            }
        }
        let chars = text.chars().count();
        for s in &spans {
            if s.start >= s.end || s.end > chars {
                return Err(CorpusError::Malformed(lineno, format!("span {}:{} out of range", s.start, s.end)));
            }
        }
        corpus.records.push(SentenceRecord {
            story: num(fields[0])?,
            idx: num(fields[1])?,
            boundary,
            text,
            spans,
        });
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StoryCorpus {
        StoryCorpus {
            records: vec![
                SentenceRecord {
                    story: 0,
                    idx: 0,
                    boundary: true,
                    text: "clyde went to the office.".into(),
                    spans: vec![
                        GoldSpan { start: 0, end: 5, kind: MentionKind::Entity, gold: 3, supervised: true },
                        GoldSpan { start: 6, end: 13, kind: MentionKind::Relation, gold: 0, supervised: true },
                        GoldSpan { start: 14, end: 24, kind: MentionKind::Entity, gold: 7, supervised: true },
                    ],
                },
                SentenceRecord {
                    story: 0,
                    idx: 1,
                    boundary: false,
                    text: "he likes rex.".into(),
                    spans: vec![
                        GoldSpan { start: 0, end: 2, kind: MentionKind::Entity, gold: 3, supervised: false },
                        GoldSpan { start: 3, end: 8, kind: MentionKind::Relation, gold: 1, supervised: false },
                        GoldSpan { start: 9, end: 12, kind: MentionKind::Entity, gold: 9, supervised: false },
                    ],
                },
            ],
        }
    }

    #[test]
    fn round_trip_identity() {
        let corpus = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.tsv");
        emit_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded, corpus);
    }

    #[test]
    fn span_text_extraction() {
        let corpus = sample();
        let r = &corpus.records[0];
        assert_eq!(r.span_text(&r.spans[0]), "clyde");
        assert_eq!(r.span_text(&r.spans[1]), "went to");
        assert_eq!(r.span_text(&r.spans[2]), "the office");
    }

    #[test]
    fn malformed_lines_error_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "# header\n0\t0\t1\tbad line\n").unwrap();
        match load_corpus(&path) {
            Err(CorpusError::Malformed(2, _)) => {}
            other => panic!("expected malformed line 2, got {other:?}"),
        }
        std::fs::write(&path, "0\t0\t1\tabc\t0:99:ent:1:0\n").unwrap();
        assert!(load_corpus(&path).is_err());
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        std::fs::write(&path, "# comment\n\n0\t0\t1\tabc def\t0:3:ent:1:0\n").unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.records[0].text, "abc def");
    }

    #[test]
    fn by_story_groups_in_order() {
        let mut corpus = sample();
        corpus.records.push(SentenceRecord {
            story: 1,
            idx: 0,
            boundary: true,
            text: "parry is chasing a mouse.".into(),
            spans: vec![],
        });
        let groups = corpus.by_story();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].len(), 2);
        assert_eq!(groups[1].len(), 1);
        assert_eq!(corpus.stories(), 2);
    }
}
