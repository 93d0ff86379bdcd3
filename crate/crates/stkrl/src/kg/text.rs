use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::graph::KnowledgeGraph;
use crate::kg::ids::{EntityId, IdTable, WordId};

/// One tokenized sentence mentioning a specific entity.
///
/// `anchor` indexes the token carrying the entity name; `position_ids` holds
/// each token's signed distance to the anchor, clipped to `[-d, d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSentence {
    pub entity: EntityId,
    pub tokens: Vec<WordId>,
    pub anchor: usize,
    pub position_ids: Vec<i32>,
}

impl ReferenceSentence {
    pub fn new(entity: EntityId, tokens: Vec<WordId>, anchor: usize, d: i32) -> Result<Self> {
        let position_ids = compute_position_ids(tokens.len(), anchor, d)?;
        Ok(ReferenceSentence {
            entity,
            tokens,
            anchor,
            position_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// `output[i] = clamp(i - anchor, -d, d)` for a sentence of length `n`.
pub fn compute_position_ids(n: usize, anchor: usize, d: i32) -> Result<Vec<i32>> {
    if n == 0 || anchor >= n {
        return Err(Error::Argument(format!(
            "anchor {anchor} out of range for sentence of length {n}"
        )));
    }
    if d < 1 {
        return Err(Error::Argument(format!("clip distance must be ≥ 1, got {d}")));
    }
    Ok((0..n)
        .map(|i| (i as i64 - anchor as i64).clamp(-(d as i64), d as i64) as i32)
        .collect())
}

/// All reference sentences of a dataset, grouped per entity, together with
/// the word vocabulary the token ids point into.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceCorpus {
    sentences: Vec<Vec<ReferenceSentence>>,
    cap: usize,
    pub vocab: IdTable,
}

impl ReferenceCorpus {
    pub fn new(n_entities: usize, cap: usize) -> Self {
        ReferenceCorpus {
            sentences: vec![Vec::new(); n_entities],
            cap,
            vocab: IdTable::new(),
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn n_entities(&self) -> usize {
        self.sentences.len()
    }

    pub fn n_sentences(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }

    pub fn n_words(&self) -> usize {
        self.vocab.len()
    }

    /// Sentences of one entity, in document order. Entities without any
    /// mention yield an empty slice.
    pub fn sentences(&self, entity: EntityId) -> &[ReferenceSentence] {
        &self.sentences[entity.index()]
    }

    /// Appends a sentence unless the entity already holds `cap` of them.
    pub fn push(&mut self, sentence: ReferenceSentence) {
        let list = &mut self.sentences[sentence.entity.index()];
        if list.len() < self.cap {
            list.push(sentence);
        }
    }
}

/// Lowercases an entity name and joins its whitespace-separated words with
/// underscores — the single token such a name collapses to in sentences.
pub fn collapsed_name(name: &str) -> String {
    name.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
}

/// Splits raw text into sentences at `.`, `!` or `?` followed by whitespace
/// (or end of input), dropping the terminators.
fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0usize;
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?') {
            let at_end = i + 1 == bytes.len();
            let before_space = !at_end && bytes[i + 1].is_ascii_whitespace();
            if at_end || before_space {
                let raw = text[start..i].trim();
                let raw = raw.trim_end_matches(['.', '!', '?']);
                if !raw.is_empty() {
                    out.push(raw.to_string());
                }
                start = i + 1;
            }
        }
    }
    let tail = text[start..].trim();
    let tail = tail.trim_end_matches(['.', '!', '?']);
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Lowercased whitespace tokens of one sentence.
fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .to_lowercase()
        .split_whitespace()
        .map(|t| t.to_string())
        .collect()
}

/// Greedily collapses multi-word entity names (longest match first) into
/// single underscore-joined tokens.
fn collapse_entity_names(tokens: &[String], patterns: &HashMap<String, Vec<Vec<String>>>) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let mut matched = None;
        if let Some(cands) = patterns.get(&tokens[i]) {
            for words in cands {
                if words.len() <= tokens.len() - i && tokens[i..i + words.len()] == words[..] {
                    matched = Some(words);
                    break;
                }
            }
        }
        match matched {
            Some(words) => {
                out.push(words.join("_"));
                i += words.len();
            }
            None => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    out
}

/// Scans plain text for mentions of the graph's entities and builds the
/// reference corpus: per entity, up to `cap` sentences in document order,
/// anchored at the first occurrence of the (collapsed) entity name.
pub fn extract_reference_sentences(
    text: &str,
    kg: &KnowledgeGraph,
    cap: usize,
    d: i32,
) -> Result<ReferenceCorpus> {
    // first word of a name → candidate word sequences, longest first
    let mut patterns: HashMap<String, Vec<Vec<String>>> = HashMap::new();
    // collapsed name → entities carrying it (usually one)
    let mut owners: HashMap<String, Vec<u32>> = HashMap::new();
    for id in 0..kg.n_entities() as u32 {
        let name = kg.entities.name(id);
        let words: Vec<String> = name
            .to_lowercase()
            .split_whitespace()
            .map(|w| w.to_string())
            .collect();
        if words.is_empty() {
            continue;
        }
        owners.entry(words.join("_")).or_default().push(id);
        let slot = patterns.entry(words[0].clone()).or_default();
        if !slot.contains(&words) {
            slot.push(words);
        }
    }
    for cands in patterns.values_mut() {
        cands.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    }

    let mut corpus = ReferenceCorpus::new(kg.n_entities(), cap);
    for sentence in split_sentences(text) {
        let tokens = collapse_entity_names(&tokenize(&sentence), &patterns);
        if tokens.is_empty() {
            continue;
        }
        // Which entities does this sentence mention, and where first?
        let mut mentioned: Vec<(u32, usize)> = Vec::new();
        for (pos, tok) in tokens.iter().enumerate() {
            if let Some(ids) = owners.get(tok) {
                for &id in ids {
                    if !mentioned.iter().any(|&(m, _)| m == id) {
                        mentioned.push((id, pos));
                    }
                }
            }
        }
        if mentioned.is_empty() {
            continue;
        }
        mentioned.sort_by_key(|&(id, _)| id);
        let word_ids: Vec<WordId> = tokens
            .iter()
            .map(|t| WordId(corpus.vocab.intern(t)))
            .collect();
        for (entity, anchor) in mentioned {
            corpus.push(ReferenceSentence::new(
                EntityId(entity),
                word_ids.clone(),
                anchor,
                d,
            )?);
        }
    }
    Ok(corpus)
}

/// Writes a corpus as `entity<TAB>anchor<TAB>token token …`, one sentence per
/// line, in entity order then document order. The first column holds the
/// entity's name — the same identifier the triple files use — so the cache
/// stays valid however a later load happens to number the entities.
pub fn save_corpus(
    corpus: &ReferenceCorpus,
    kg: &KnowledgeGraph,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    for entity in 0..corpus.n_entities() as u32 {
        for s in corpus.sentences(EntityId(entity)) {
            let words: Vec<&str> = s
                .tokens
                .iter()
                .map(|w| corpus.vocab.name(w.0))
                .collect();
            writeln!(
                out,
                "{}\t{}\t{}",
                kg.entities.name(entity),
                s.anchor,
                words.join(" ")
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a corpus cache written by [`save_corpus`].
///
/// Checks that each line's entity id is in range, the anchor is inside the
/// sentence, and the anchor token equals the entity's collapsed name.
pub fn load_corpus(
    path: impl AsRef<Path>,
    kg: &KnowledgeGraph,
    cap: usize,
    d: i32,
) -> Result<ReferenceCorpus> {
    let file = File::open(path.as_ref())?;
    load_corpus_from(BufReader::new(file), kg, cap, d)
}

/// Same as [`load_corpus`] but from any buffered reader.
pub fn load_corpus_from(
    reader: impl BufRead,
    kg: &KnowledgeGraph,
    cap: usize,
    d: i32,
) -> Result<ReferenceCorpus> {
    let mut corpus = ReferenceCorpus::new(kg.n_entities(), cap);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected entity<TAB>anchor<TAB>tokens".to_string(),
            });
        }
        let entity = kg.entities.get(fields[0]).ok_or_else(|| {
            Error::Vocab(format!(
                "unknown entity '{}' (line {lineno})",
                fields[0]
            ))
        })?;
        let anchor: usize = fields[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad anchor '{}'", fields[1]),
        })?;
        let tokens: Vec<&str> = fields[2].split_whitespace().collect();
        if tokens.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "sentence has no tokens".to_string(),
            });
        }
        if anchor >= tokens.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("anchor {anchor} out of range for {} tokens", tokens.len()),
            });
        }
        let expected = collapsed_name(kg.entities.name(entity));
        if tokens[anchor] != expected {
            return Err(Error::Format(format!(
                "line {lineno}: anchor token '{}' does not match entity name token '{expected}'",
                tokens[anchor]
            )));
        }
        let word_ids: Vec<WordId> = tokens
            .iter()
            .map(|t| WordId(corpus.vocab.intern(t)))
            .collect();
        corpus.push(ReferenceSentence::new(EntityId(entity), word_ids, anchor, d)?);
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::graph::{load_triples_from, Split};
    use std::io::Cursor;

    fn graph_with(names: &[&str]) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        // Wire the entities together with an arbitrary relation so they all
        // enter the table in a defined order.
        let mut lines = String::new();
        for pair in names.windows(2) {
            lines.push_str(&format!("{}\tr\t{}\n", pair[0], pair[1]));
        }
        if names.len() == 1 {
            lines.push_str(&format!("{}\tr\t{}\n", names[0], names[0]));
        }
        load_triples_from(Cursor::new(lines), &mut kg, Split::Train).unwrap();
        kg
    }

    #[test]
    fn position_ids_match_the_clip_rule() {
        assert_eq!(compute_position_ids(5, 2, 3).unwrap(), vec![-2, -1, 0, 1, 2]);
        assert_eq!(compute_position_ids(6, 0, 3).unwrap(), vec![0, 1, 2, 3, 3, 3]);
        assert_eq!(compute_position_ids(5, 4, 2).unwrap(), vec![-2, -2, -2, -1, 0]);
        assert!(compute_position_ids(5, 5, 2).is_err());
        assert!(compute_position_ids(0, 0, 2).is_err());
    }

    #[test]
    fn extracts_anchored_sentences() {
        let kg = graph_with(&["economics"]);
        let text = "Economics is the social science that describes the factors. Nothing here.";
        let corpus = extract_reference_sentences(text, &kg, 40, 3).unwrap();
        let sents = corpus.sentences(EntityId(0));
        assert_eq!(sents.len(), 1);
        assert_eq!(sents[0].anchor, 0);
        assert_eq!(sents[0].position_ids[0], 0);
        assert_eq!(corpus.vocab.name(sents[0].tokens[0].0), "economics");
    }

    #[test]
    fn multi_word_names_collapse_to_one_token() {
        let kg = graph_with(&["New York", "york"]);
        let text = "I love New York and york alike.";
        let corpus = extract_reference_sentences(text, &kg, 40, 3).unwrap();
        let ny = corpus.sentences(EntityId(0));
        assert_eq!(ny.len(), 1);
        assert_eq!(corpus.vocab.name(ny[0].tokens[ny[0].anchor].0), "new_york");
        // the standalone "york" token still matches the shorter entity
        let york = corpus.sentences(EntityId(1));
        assert_eq!(york.len(), 1);
        assert_eq!(york[0].anchor, ny[0].anchor + 2);
    }

    #[test]
    fn anchor_is_first_occurrence_and_cap_limits() {
        let kg = graph_with(&["a"]);
        let text = "a sees a. a again. a more.";
        let corpus = extract_reference_sentences(text, &kg, 2, 3).unwrap();
        let sents = corpus.sentences(EntityId(0));
        assert_eq!(sents.len(), 2, "cap applies");
        assert_eq!(sents[0].anchor, 0, "first occurrence wins");
    }

    #[test]
    fn extraction_is_idempotent() {
        let kg = graph_with(&["alpha", "beta"]);
        let text = "alpha meets beta! beta leaves? alpha stays.";
        let c1 = extract_reference_sentences(text, &kg, 40, 2).unwrap();
        let c2 = extract_reference_sentences(text, &kg, 40, 2).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn corpus_roundtrips_through_cache_file() {
        let kg = graph_with(&["alpha", "beta"]);
        let text = "alpha meets beta. beta leaves. alpha stays here now.";
        let corpus = extract_reference_sentences(text, &kg, 40, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.tsv");
        save_corpus(&corpus, &kg, &path).unwrap();
        let loaded = load_corpus(&path, &kg, 40, 2).unwrap();
        assert_eq!(loaded.n_sentences(), corpus.n_sentences());
        for e in 0..kg.n_entities() as u32 {
            let a = corpus.sentences(EntityId(e));
            let b = loaded.sentences(EntityId(e));
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.anchor, y.anchor);
                assert_eq!(x.position_ids, y.position_ids);
                let xs: Vec<&str> = x.tokens.iter().map(|w| corpus.vocab.name(w.0)).collect();
                let ys: Vec<&str> = y.tokens.iter().map(|w| loaded.vocab.name(w.0)).collect();
                assert_eq!(xs, ys);
            }
        }
    }

    #[test]
    fn corrupted_cache_lines_are_rejected() {
        let kg = graph_with(&["alpha"]);
        let bad_anchor = "alpha\t9\talpha stays";
        let err = load_corpus_from(Cursor::new(bad_anchor), &kg, 40, 2).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let wrong_token = "alpha\t0\tbeta stays";
        let err = load_corpus_from(Cursor::new(wrong_token), &kg, 40, 2).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        let unknown_entity = "zeta\t0\tzeta stays";
        let err = load_corpus_from(Cursor::new(unknown_entity), &kg, 40, 2).unwrap_err();
        assert!(matches!(err, Error::Vocab(_)));
    }
}
