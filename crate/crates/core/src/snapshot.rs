//! Versioned, deterministic text serialization of the full engine state.
//!
//! The format is line-oriented and diff-friendly: a version line, then one
//! block per knowledge base with sections for the mention table, the
//! embedding store, the raw activation matrix, the temporal buffer, the
//! supervision map, the per-instance centroids and the temporal gate.
//! Floats are written in a fixed scientific format so identical states
//! serialize to identical bytes.

use std::path::Path;

use ndarray::Array1;
use thiserror::Error;

use crate::config::Config;
use crate::disambiguator::DisambiguationUnit;
use crate::engine::{Engine, KbSide};
use crate::memory::MentionKey;

const MAGIC: &str = "streamkb-snapshot v1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad snapshot header: {0}")]
    Header(String),
    #[error("line {0}: {1}")]
    Malformed(usize, String),
}

fn fmt_floats(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:.17e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_side(out: &mut String, name: &str, side: &KbSide) {
    let m = side.state.mention_count();
    let n = side.state.instance_count();
    let dim = if m > 0 { side.state.embedding_at(0).len() } else { 0 };
    out.push_str(&format!("[side] {name}\n"));
    out.push_str("[header]\n");
    out.push_str(&format!("m {m} n {n} window {} dim {dim}\n", side.state.window));
    out.push_str("[H]\n");
    for i in 0..m {
        out.push_str(side.state.mention_at(i).as_str());
        out.push('\n');
    }
    out.push_str("[E]\n");
    for i in 0..m {
        out.push_str(&fmt_floats(side.state.embedding_at(i).iter().copied()));
        out.push('\n');
    }
    out.push_str("[M]\n");
    for i in 0..m {
        out.push_str(&fmt_floats(side.state.activation_row(i).iter().copied()));
        out.push('\n');
    }
    out.push_str("[T]\n");
    let recent: Vec<String> = side.state.recent().map(|y| y.to_string()).collect();
    out.push_str(&recent.join(" "));
    out.push('\n');
    out.push_str("[supervision_map]\n");
    let mut pairs: Vec<(usize, String)> =
        side.map.iter().map(|(l, i)| (i, l.to_string())).collect();
    pairs.sort();
    for (i, l) in pairs {
        out.push_str(&format!("{l}\t{i}\n"));
    }
    out.push_str("[centroids]\n");
    for (i, unit) in side.units.iter().enumerate() {
        out.push_str(&format!("unit {i} {} {}\n", unit.kappa, unit.used_count()));
        for c in &unit.centroids {
            out.push_str(&fmt_floats(c.iter().copied()));
            out.push('\n');
        }
    }
    out.push_str("[gate]\n");
    out.push_str(&format!(
        "prior {} {} {}\n",
        fmt_floats([side.gate.prior]),
        side.gate.unit.kappa,
        side.gate.unit.used_count()
    ));
    for c in &side.gate.unit.centroids {
        out.push_str(&fmt_floats(c.iter().copied()));
        out.push('\n');
    }
}

/// Serializes the engine state to `path`.
pub fn save(engine: &Engine, path: &Path) -> Result<(), SnapshotError> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    write_side(&mut out, "entities", &engine.entities);
    write_side(&mut out, "relations", &engine.relations);
    std::fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<&'a str, SnapshotError> {
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| SnapshotError::Malformed(self.pos + 1, "unexpected end of file".into()))?;
        self.pos += 1;
        Ok(line)
    }

    fn expect(&mut self, want: &str) -> Result<(), SnapshotError> {
        let line = self.next()?;
        if line != want {
            return Err(SnapshotError::Malformed(self.pos, format!("expected `{want}`, got `{line}`")));
        }
        Ok(())
    }

    fn floats(&mut self) -> Result<Vec<f64>, SnapshotError> {
        let lineno = self.pos + 1;
        let line = self.next()?;
        if line.is_empty() {
            return Ok(Vec::new());
        }
        line.split(' ')
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| SnapshotError::Malformed(lineno, format!("bad float `{t}`")))
            })
            .collect()
    }
}

fn parse_usize(reader_pos: usize, token: &str) -> Result<usize, SnapshotError> {
    token
        .parse()
        .map_err(|_| SnapshotError::Malformed(reader_pos, format!("bad integer `{token}`")))
}

fn read_side(r: &mut Reader, name: &str, side: &mut KbSide) -> Result<(), SnapshotError> {
    r.expect(&format!("[side] {name}"))?;
    r.expect("[header]")?;
    let header = r.next()?.to_string();
    let f: Vec<&str> = header.split(' ').collect();
    if f.len() != 8 || f[0] != "m" || f[2] != "n" || f[4] != "window" || f[6] != "dim" {
        return Err(SnapshotError::Header(header));
    }
    let m = parse_usize(r.pos, f[1])?;
    let n = parse_usize(r.pos, f[3])?;
    side.state.window = parse_usize(r.pos, f[5])?;

    r.expect("[H]")?;
    let mut keys = Vec::with_capacity(m);
    for _ in 0..m {
        keys.push(r.next()?.to_string());
    }
    r.expect("[E]")?;
    for key in &keys {
        let emb = Array1::from(r.floats()?);
        side.state
            .register_mention(MentionKey::new(key), emb)
            .map_err(|e| SnapshotError::Malformed(r.pos, e.to_string()))?;
    }
    for _ in 0..n {
        side.state.add_instance();
    }
    r.expect("[M]")?;
    for i in 0..m {
        let row = r.floats()?;
        if row.len() != n {
            return Err(SnapshotError::Malformed(r.pos, format!("expected {n} scores, got {}", row.len())));
        }
        for (j, v) in row.into_iter().enumerate() {
            side.state.set_raw_score(i, j, v);
        }
    }
    r.expect("[T]")?;
    let lineno = r.pos + 1;
    let recent_line = r.next()?.to_string();
    for token in recent_line.split(' ').filter(|t| !t.is_empty()) {
        let y = parse_usize(lineno, token)?;
        side.state
            .record_recent(y)
            .map_err(|e| SnapshotError::Malformed(lineno, e.to_string()))?;
    }
    r.expect("[supervision_map]")?;
    while r.lines.get(r.pos).map_or(false, |l| !l.starts_with('[')) {
        let lineno = r.pos + 1;
        let line = r.next()?;
        let (label, id) = line
            .split_once('\t')
            .ok_or_else(|| SnapshotError::Malformed(lineno, "expected `label<TAB>id`".into()))?;
        side.map.bind(label, parse_usize(lineno, id)?);
    }
    r.expect("[centroids]")?;
    side.units.clear();
    for i in 0..n {
        let lineno = r.pos + 1;
        let line = r.next()?.to_string();
        let f: Vec<&str> = line.split(' ').collect();
        if f.len() != 4 || f[0] != "unit" || parse_usize(lineno, f[1])? != i {
            return Err(SnapshotError::Malformed(lineno, format!("bad unit header `{line}`")));
        }
        let kappa = parse_usize(lineno, f[2])?;
        let count = parse_usize(lineno, f[3])?;
        let mut unit = DisambiguationUnit::new(kappa);
        for _ in 0..count {
            unit.centroids.push(Array1::from(r.floats()?));
        }
        side.units.push(unit);
    }
    r.expect("[gate]")?;
    let lineno = r.pos + 1;
    let line = r.next()?.to_string();
    let f: Vec<&str> = line.split(' ').collect();
    if f.len() != 4 || f[0] != "prior" {
        return Err(SnapshotError::Malformed(lineno, format!("bad gate header `{line}`")));
    }
    side.gate.prior = f[1]
        .parse()
        .map_err(|_| SnapshotError::Malformed(lineno, format!("bad float `{}`", f[1])))?;
    side.gate.unit = DisambiguationUnit::new(parse_usize(lineno, f[2])?);
    let count = parse_usize(lineno, f[3])?;
    for _ in 0..count {
        side.gate.unit.centroids.push(Array1::from(r.floats()?));
    }
    Ok(())
}

/// Restores an engine from a snapshot, using `cfg` for everything the
/// snapshot does not store (thresholds, rates, network sizes).
pub fn load(path: &Path, cfg: Config) -> Result<Engine, SnapshotError> {
    let body = std::fs::read_to_string(path)?;
    let mut reader = Reader { lines: body.lines().collect(), pos: 0 };
    let magic = reader.next()?;
    if magic != MAGIC {
        return Err(SnapshotError::Header(magic.to_string()));
    }
    let mut engine = Engine::new(cfg);
    read_side(&mut reader, "entities", &mut engine.entities)?;
    read_side(&mut reader, "relations", &mut engine.relations)?;
    engine.check_invariants();
    Ok(engine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::MentionKind;
    use crate::encoder::{HashEncoder, MentionEncoder};

    fn populated_engine() -> Engine {
        let mut eng = Engine::new(Config::default());
        let enc = HashEncoder::new(32);
        let sentences: [(&str, &str, &str); 4] = [
            ("clyde", "went to", "the office"),
            ("parry", "is chasing", "a mouse"),
            ("clyde", "likes", "a mouse"),
            ("he", "works in", "the office"),
        ];
        for (i, (s, v, o)) in sentences.iter().enumerate() {
            let words: Vec<String> = vec![s.to_string(), v.to_string(), o.to_string()];
            let sup = if i < 2 { Some(format!("e{i}")) } else { None };
            eng.process(
                0,
                MentionKind::Entity,
                s,
                &enc.mention_embed(s),
                &enc.context_embed(&words, 0),
                sup.as_deref(),
            );
            eng.process(
                0,
                MentionKind::Relation,
                v,
                &enc.mention_embed(v),
                &enc.context_embed(&words, 1),
                None,
            );
        }
        eng
    }

    #[test]
    fn round_trip_preserves_state_exactly() {
        let eng = populated_engine();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.snap");
        save(&eng, &path).unwrap();
        let loaded = load(&path, Config::default()).unwrap();

        assert_eq!(
            loaded.entities.state.mention_count(),
            eng.entities.state.mention_count()
        );
        assert_eq!(
            loaded.entities.state.instance_count(),
            eng.entities.state.instance_count()
        );
        for i in 0..eng.entities.state.mention_count() {
            assert_eq!(
                loaded.entities.state.activation_row(i),
                eng.entities.state.activation_row(i)
            );
            assert_eq!(loaded.entities.state.embedding_at(i), eng.entities.state.embedding_at(i));
        }
        let recent: Vec<usize> = eng.entities.state.recent().collect();
        let loaded_recent: Vec<usize> = loaded.entities.state.recent().collect();
        assert_eq!(recent, loaded_recent);
        assert_eq!(loaded.entities.map.instance_of("e0"), eng.entities.map.instance_of("e0"));
        for (a, b) in loaded.entities.units.iter().zip(&eng.entities.units) {
            assert_eq!(a.centroids, b.centroids);
        }

        // a second save is byte-identical
        let path2 = dir.path().join("kb2.snap");
        save(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_file_errors() {
        let eng = populated_engine();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.snap");
        save(&eng, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let cut: String = body.lines().take(10).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, cut).unwrap();
        assert!(load(&path, Config::default()).is_err());
    }

    #[test]
    fn version_mismatch_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.snap");
        std::fs::write(&path, "streamkb-snapshot v9\n").unwrap();
        assert!(matches!(load(&path, Config::default()), Err(SnapshotError::Header(_))));
    }
}
