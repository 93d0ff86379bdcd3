use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::ids::{EntityId, IdTable, RelationId};

/// A directed labeled edge `(head, relation, tail)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }
}

/// Which split a triple belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Entity/relation vocabularies plus the three triple splits.
///
/// `all_true` is the union of the splits and backs filtered evaluation;
/// `train_set` backs negative sampling.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeGraph {
    pub entities: IdTable,
    pub relations: IdTable,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    train_set: HashSet<Triple>,
    all_true: HashSet<Triple>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        KnowledgeGraph::default()
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    pub fn in_train(&self, t: &Triple) -> bool {
        self.train_set.contains(t)
    }

    /// True if the triple occurs in any split (train, valid or test).
    pub fn is_true_triple(&self, t: &Triple) -> bool {
        self.all_true.contains(t)
    }

    /// Inserts a triple, keeping splits disjoint: a triple already present in
    /// any split (this one or an earlier-loaded one) is silently skipped.
    pub fn add_triple(&mut self, split: Split, t: Triple) {
        if self.all_true.contains(&t) {
            return;
        }
        self.all_true.insert(t);
        match split {
            Split::Train => {
                self.train_set.insert(t);
                self.train.push(t);
            }
            Split::Valid => self.valid.push(t),
            Split::Test => self.test.push(t),
        }
    }

    /// Checks the structural invariants; used by tests and after synthesis.
    pub fn validate(&self) -> Result<()> {
        let ne = self.entities.len() as u32;
        let nr = self.relations.len() as u32;
        for (name, triples) in [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ] {
            for t in triples.iter() {
                if t.head.0 >= ne || t.tail.0 >= ne || t.relation.0 >= nr {
                    return Err(Error::Format(format!(
                        "{name} split holds a triple with out-of-range ids"
                    )));
                }
            }
        }
        let total = self.train.len() + self.valid.len() + self.test.len();
        if total != self.all_true.len() {
            return Err(Error::Format(
                "splits overlap or all_true is out of sync".to_string(),
            ));
        }
        Ok(())
    }
}

/// Reads tab-separated `head<TAB>relation<TAB>tail` lines into `kg`.
///
/// Only the train split may introduce new entity/relation names; names met in
/// valid/test that are absent from the tables are vocabulary errors. Duplicate
/// triples (within the split or across already-loaded splits) are dropped so
/// the splits stay disjoint.
pub fn load_triples(path: impl AsRef<Path>, kg: &mut KnowledgeGraph, split: Split) -> Result<()> {
    let file = File::open(path.as_ref())?;
    load_triples_from(BufReader::new(file), kg, split)
}

/// Same as [`load_triples`] but from any buffered reader.
pub fn load_triples_from(
    reader: impl BufRead,
    kg: &mut KnowledgeGraph,
    split: Split,
) -> Result<()> {
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty field".to_string(),
            });
        }
        let (h, r, t) = (fields[0], fields[1], fields[2]);
        let triple = match split {
            Split::Train => Triple {
                head: EntityId(kg.entities.intern(h)),
                relation: RelationId(kg.relations.intern(r)),
                tail: EntityId(kg.entities.intern(t)),
            },
            Split::Valid | Split::Test => {
                let head = kg.entities.get(h).ok_or_else(|| {
                    Error::Vocab(format!(
                        "unknown entity '{h}' in {} split (line {lineno})",
                        split.as_str()
                    ))
                })?;
                let rel = kg.relations.get(r).ok_or_else(|| {
                    Error::Vocab(format!(
                        "unknown relation '{r}' in {} split (line {lineno})",
                        split.as_str()
                    ))
                })?;
                let tail = kg.entities.get(t).ok_or_else(|| {
                    Error::Vocab(format!(
                        "unknown entity '{t}' in {} split (line {lineno})",
                        split.as_str()
                    ))
                })?;
                Triple::new(head, rel, tail)
            }
        };
        kg.add_triple(split, triple);
    }
    Ok(())
}
