//! Binary character matrix construction.
//!
//! Doculects become rows; two families of 0/1 characters become columns:
//! class-label characters (one per inferred cognate class, value 1 iff the
//! doculect's word for that concept carries the label) and
//! soundclass-concept characters (one per attested (sound, concept) pair,
//! value 1 iff the doculect's word for the concept contains the sound).
//! A doculect missing a concept has every character of that concept
//! undefined.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cognate::CognateClasses;
use crate::corpus::{Dataset, SoundClass};
use crate::{Error, Result};

/// Cell value for an undefined (missing-entry) character.
pub const UNDEF: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CharacterKind {
    ClassLabel,
    SoundclassConcept,
}

/// Payload disambiguated by kind: a class label or a sound class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Payload {
    Label(u32),
    Sound(SoundClass),
}

/// Identity of one matrix column.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CharacterId {
    pub concept: usize,
    pub kind: CharacterKind,
    pub payload: Payload,
}

impl CharacterId {
    /// Render against a concept list: `person:3` / `k/person`.
    pub fn display(&self, concepts: &[String]) -> String {
        match self.payload {
            Payload::Label(l) => format!("{}:{}", concepts[self.concept], l),
            Payload::Sound(s) => format!("{}/{}", s.as_char(), concepts[self.concept]),
        }
    }
}

/// One column: id plus a cell per doculect row (0, 1, or [`UNDEF`]).
#[derive(Debug, Clone)]
pub struct Character {
    pub id: CharacterId,
    pub cells: Vec<u8>,
}

/// The assembled matrix.
#[derive(Debug, Clone)]
pub struct CharacterMatrix {
    pub doculects: Vec<String>,
    pub concepts: Vec<String>,
    pub columns: Vec<Character>,
    pub dropped: Vec<String>,
}

/// Companion manifest describing the matrix composition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacterManifest {
    pub doculects: usize,
    pub class_label_columns: usize,
    pub soundclass_concept_columns: usize,
    pub dropped_columns: Vec<String>,
}

impl CharacterMatrix {
    pub fn kind_counts(&self) -> (usize, usize) {
        let cl = self
            .columns
            .iter()
            .filter(|c| c.id.kind == CharacterKind::ClassLabel)
            .count();
        (cl, self.columns.len() - cl)
    }

    pub fn manifest(&self) -> CharacterManifest {
        let (cl, sc) = self.kind_counts();
        CharacterManifest {
            doculects: self.doculects.len(),
            class_label_columns: cl,
            soundclass_concept_columns: sc,
            dropped_columns: self.dropped.clone(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("doculect");
        for col in &self.columns {
            out.push('\t');
            out.push_str(&col.id.display(&self.concepts));
        }
        out.push('\n');
        for (r, doc) in self.doculects.iter().enumerate() {
            out.push_str(doc);
            for col in &self.columns {
                out.push('\t');
                out.push(match col.cells[r] {
                    0 => '0',
                    1 => '1',
                    _ => '?',
                });
            }
            out.push('\n');
        }
        out
    }

    /// Parse the TSV produced by [`CharacterMatrix::to_tsv`]. Needs the
    /// concept list to resolve column ids.
    pub fn from_tsv(text: &str, concepts: &[String]) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty character matrix".into(),
        })?;
        let cols: Vec<&str> = header.split('\t').skip(1).collect();
        let mut ids = Vec::with_capacity(cols.len());
        for (k, name) in cols.iter().enumerate() {
            ids.push(parse_character_id(name, concepts).ok_or(Error::Parse {
                line: 1,
                msg: format!("bad character id \"{name}\" (column {k})"),
            })?);
        }
        let mut doculects = Vec::new();
        let mut cells: Vec<Vec<u8>> = vec![Vec::new(); ids.len()];
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<&str> = line.split('\t').collect();
            if row.len() != ids.len() + 1 {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: "wrong cell count".into(),
                });
            }
            doculects.push(row[0].to_string());
            for (k, cell) in row.iter().skip(1).enumerate() {
                cells[k].push(match *cell {
                    "0" => 0,
                    "1" => 1,
                    "?" => UNDEF,
                    other => {
                        return Err(Error::Parse {
                            line: i + 2,
                            msg: format!("bad cell \"{other}\""),
                        })
                    }
                });
            }
        }
        let columns = ids
            .into_iter()
            .zip(cells)
            .map(|(id, cells)| Character { id, cells })
            .collect();
        Ok(CharacterMatrix {
            doculects,
            concepts: concepts.to_vec(),
            columns,
            dropped: Vec::new(),
        })
    }
}

fn parse_character_id(name: &str, concepts: &[String]) -> Option<CharacterId> {
    if let Some((sound, concept)) = name.split_once('/') {
        let mut chars = sound.chars();
        let c = chars.next()?;
        if chars.next().is_some() {
            return None;
        }
        return Some(CharacterId {
            concept: concepts.iter().position(|x| x == concept)?,
            kind: CharacterKind::SoundclassConcept,
            payload: Payload::Sound(SoundClass::from_char(c)?),
        });
    }
    let (concept, label) = name.rsplit_once(':')?;
    Some(CharacterId {
        concept: concepts.iter().position(|x| x == concept)?,
        kind: CharacterKind::ClassLabel,
        payload: Payload::Label(label.parse().ok()?),
    })
}

impl fmt::Display for CharacterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CharacterKind::ClassLabel => write!(f, "class_label"),
            CharacterKind::SoundclassConcept => write!(f, "soundclass_concept"),
        }
    }
}

/// Build the character matrix from the inference doculects and the cognate
/// classes. All-0 columns (unobservable under the ascertainment-corrected
/// likelihood) are dropped and recorded.
pub fn build_characters(d: &Dataset, classes: &CognateClasses) -> Result<CharacterMatrix> {
    let docs = d.inference_doculects();
    let doc_ids: Vec<String> = docs.iter().map(|x| x.id.clone()).collect();
    let mut columns: Vec<Character> = Vec::new();

    for (c, _concept) in d.concepts.iter().enumerate() {
        let assignment = &classes.assignments[c];
        // Every defined word must carry a label, and vice versa.
        for doc in &docs {
            if doc.entries[c].is_some() && !assignment.contains_key(&doc.id) {
                return Err(Error::Validation(format!(
                    "no class label for word of doculect \"{}\", concept \"{}\"",
                    doc.id, d.concepts[c]
                )));
            }
        }
        for (doc_id, _) in assignment.iter() {
            if !docs.iter().any(|x| &x.id == doc_id && x.entries[c].is_some()) {
                return Err(Error::Validation(format!(
                    "class label refers to unknown word: doculect \"{doc_id}\", concept \"{}\"",
                    d.concepts[c]
                )));
            }
        }

        let labels: BTreeSet<u32> = assignment.values().copied().collect();
        for &label in &labels {
            let cells: Vec<u8> = docs
                .iter()
                .map(|doc| {
                    if doc.entries[c].is_none() {
                        UNDEF
                    } else if assignment.get(&doc.id) == Some(&label) {
                        1
                    } else {
                        0
                    }
                })
                .collect();
            columns.push(Character {
                id: CharacterId {
                    concept: c,
                    kind: CharacterKind::ClassLabel,
                    payload: Payload::Label(label),
                },
                cells,
            });
        }

        let mut sounds: BTreeSet<SoundClass> = BTreeSet::new();
        for doc in &docs {
            if let Some(w) = doc.entries[c].as_ref() {
                sounds.extend(w.segments().iter().copied());
            }
        }
        for &s in &sounds {
            let cells: Vec<u8> = docs
                .iter()
                .map(|doc| match doc.entries[c].as_ref() {
                    None => UNDEF,
                    Some(w) => u8::from(w.segments().contains(&s)),
                })
                .collect();
            columns.push(Character {
                id: CharacterId {
                    concept: c,
                    kind: CharacterKind::SoundclassConcept,
                    payload: Payload::Sound(s),
                },
                cells,
            });
        }
    }

    columns.sort_by(|a, b| a.id.cmp(&b.id));

    let mut dropped = Vec::new();
    columns.retain(|col| {
        let any_one = col.cells.iter().any(|&v| v == 1);
        let any_defined = col.cells.iter().any(|&v| v != UNDEF);
        if any_one && any_defined {
            true
        } else {
            dropped.push(col.id.display(&d.concepts));
            false
        }
    });

    Ok(CharacterMatrix {
        doculects: doc_ids,
        concepts: d.concepts.clone(),
        columns,
        dropped,
    })
}
