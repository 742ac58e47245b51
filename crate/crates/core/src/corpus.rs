//! Word-list corpus: the 41-symbol sound-class alphabet, phonetic strings,
//! doculects, and TSV parsing/serialization.
//!
//! Every downstream module consumes the [`Dataset`] built here. Raw
//! transcriptions may carry modifier marks (`~` joins the preceding two
//! symbols into one segment, `$` the preceding three); stripping keeps the
//! first symbol of the joined group and drops the rest, so e.g. `aixw~3`
//! becomes `aix3`. Any other character is rejected rather than guessed at.

use std::collections::BTreeMap;
use std::fmt;

use crate::{Error, Result};

/// The 41 sound-class symbols, in canonical order.
pub const ALPHABET: [char; 41] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r',
    's', 't', 'u', 'v', 'w', 'x', 'y', 'z', 'C', 'E', 'G', 'L', 'N', 'S', 'T', 'X', 'Z', '3',
    '4', '5', '7', '8', '!',
];

/// Number of sound classes.
pub const ALPHABET_SIZE: usize = 41;

/// The 40-concept schema of short word lists, in canonical order.
pub const CONCEPTS40: [&str; 40] = [
    "I", "you", "we", "one", "two", "person", "fish", "dog", "louse", "tree", "leaf", "skin",
    "blood", "bone", "horn", "ear", "eye", "nose", "tooth", "tongue", "knee", "hand", "breast",
    "liver", "drink", "see", "hear", "die", "come", "sun", "star", "water", "stone", "fire",
    "path", "mountain", "night", "full", "new", "name",
];

/// One of the 41 sound classes, stored as its index into [`ALPHABET`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SoundClass(pub u8);

impl SoundClass {
    /// Look up a symbol; `None` if it is not one of the 41 classes.
    pub fn from_char(c: char) -> Option<SoundClass> {
        ALPHABET
            .iter()
            .position(|&a| a == c)
            .map(|i| SoundClass(i as u8))
    }

    pub fn as_char(self) -> char {
        ALPHABET[self.0 as usize]
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for SoundClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl fmt::Display for SoundClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// A nonempty sequence of sound classes; no modifiers, no gaps.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PhoneticString(Vec<SoundClass>);

impl PhoneticString {
    pub fn new(segments: Vec<SoundClass>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Validation("empty phonetic string".into()));
        }
        Ok(PhoneticString(segments))
    }

    /// Parse an already-stripped transcription.
    pub fn parse(s: &str) -> Result<Self> {
        let mut segs = Vec::with_capacity(s.len());
        for c in s.chars() {
            match SoundClass::from_char(c) {
                Some(sc) => segs.push(sc),
                None => {
                    return Err(Error::Validation(format!(
                        "symbol '{c}' in \"{s}\" is not a sound class"
                    )))
                }
            }
        }
        PhoneticString::new(segs)
    }

    pub fn segments(&self) -> &[SoundClass] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PhoneticString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for sc in &self.0 {
            write!(f, "{}", sc.as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PhoneticString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

/// Strip modifier marks from a raw transcription.
///
/// `~` joins the preceding two symbols, `$` the preceding three; the first
/// symbol of the group survives. Errors if a mark lacks its group, if an
/// unknown character appears, or if nothing is left.
pub fn strip_diacritics(raw_word: &str) -> Result<PhoneticString> {
    if raw_word.is_empty() {
        return Err(Error::Validation("empty word".into()));
    }
    let mut out: Vec<SoundClass> = Vec::with_capacity(raw_word.len());
    for c in raw_word.chars() {
        match c {
            '~' => {
                if out.len() < 2 {
                    return Err(Error::Validation(format!(
                        "'~' without two preceding symbols in \"{raw_word}\""
                    )));
                }
                out.pop();
            }
            '$' => {
                if out.len() < 3 {
                    return Err(Error::Validation(format!(
                        "'$' without three preceding symbols in \"{raw_word}\""
                    )));
                }
                out.pop();
                out.pop();
            }
            _ => match SoundClass::from_char(c) {
                Some(sc) => out.push(sc),
                None => {
                    return Err(Error::Validation(format!(
                        "symbol '{c}' in \"{raw_word}\" is not a sound class or modifier"
                    )))
                }
            },
        }
    }
    if out.is_empty() {
        return Err(Error::Validation(format!(
            "word \"{raw_word}\" is empty after stripping"
        )));
    }
    PhoneticString::new(out)
}

/// Role of a doculect in the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Ingroup,
    Outgroup,
    Gold,
}

/// One word list. `entries[c]` is the first synonym for concept `c` (the
/// form used in inference); `synonyms[c]` keeps the full synonym list,
/// which only matters for gold doculects during evaluation.
#[derive(Debug, Clone)]
pub struct Doculect {
    pub id: String,
    pub role: Role,
    pub entries: Vec<Option<PhoneticString>>,
    pub synonyms: Vec<Vec<PhoneticString>>,
}

impl Doculect {
    pub fn defined_concepts(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.as_ref().map(|_| i))
    }
}

/// The full corpus: concepts in canonical order plus all doculects.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub concepts: Vec<String>,
    pub doculects: Vec<Doculect>,
}

impl Dataset {
    /// Doculects that feed inference (gold excluded).
    pub fn inference_doculects(&self) -> Vec<&Doculect> {
        self.doculects
            .iter()
            .filter(|d| d.role != Role::Gold)
            .collect()
    }

    pub fn ingroup_doculects(&self) -> Vec<&Doculect> {
        self.doculects
            .iter()
            .filter(|d| d.role == Role::Ingroup)
            .collect()
    }

    pub fn gold_doculects(&self) -> Vec<&Doculect> {
        self.doculects
            .iter()
            .filter(|d| d.role == Role::Gold)
            .collect()
    }

    pub fn doculect(&self, id: &str) -> Option<&Doculect> {
        self.doculects.iter().find(|d| d.id == id)
    }

    pub fn concept_index(&self, concept: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c == concept)
    }

    /// Mark the named doculects as outgroup / gold; everything else stays
    /// ingroup. Unknown names are an error.
    pub fn assign_roles(&mut self, outgroup: &[String], gold: &[String]) -> Result<()> {
        for name in outgroup.iter().chain(gold.iter()) {
            if !self.doculects.iter().any(|d| &d.id == name) {
                return Err(Error::Validation(format!("unknown doculect \"{name}\"")));
            }
        }
        for d in &mut self.doculects {
            d.role = if outgroup.contains(&d.id) {
                Role::Outgroup
            } else if gold.contains(&d.id) {
                Role::Gold
            } else {
                Role::Ingroup
            };
        }
        Ok(())
    }

    /// Serialize as wide TSV (header: `doculect` + concepts; cells hold all
    /// synonyms, comma-joined; missing cells empty).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("doculect");
        for c in &self.concepts {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for d in &self.doculects {
            out.push_str(&d.id);
            for syns in &d.synonyms {
                out.push('\t');
                let cell: Vec<String> = syns.iter().map(|w| w.to_string()).collect();
                out.push_str(&cell.join(", "));
            }
            out.push('\n');
        }
        out
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "XXX" || t == "?"
}

/// Parse a word-list TSV into a [`Dataset`].
///
/// Two layouts are accepted: wide (header `doculect<TAB>concept...`, one row
/// per doculect) and long (header `doculect<TAB>concept<TAB>word`). Cells may
/// hold several comma-separated synonyms; the first one becomes the inference
/// entry. All roles start as ingroup; see [`Dataset::assign_roles`].
pub fn parse_asjp_tsv(raw: &str, concept_schema: &[String]) -> Result<Dataset> {
    parse_delimited(raw, '\t', concept_schema)
}

/// Same as [`parse_asjp_tsv`] with a caller-chosen delimiter.
pub fn parse_delimited(raw: &str, delim: char, concept_schema: &[String]) -> Result<Dataset> {
    let mut lines = raw.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let head: Vec<&str> = header.split(delim).map(str::trim).collect();
    if head.len() < 2 || !head[0].eq_ignore_ascii_case("doculect") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with 'doculect'".into(),
        });
    }

    let long_format = head.len() == 3 && head[1].eq_ignore_ascii_case("concept");
    let n_concepts = concept_schema.len();
    let concept_pos: BTreeMap<&str, usize> = concept_schema
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    // Wide format: map header columns onto the schema.
    let mut col_to_concept: Vec<usize> = Vec::new();
    if !long_format {
        for (k, name) in head.iter().enumerate().skip(1) {
            match concept_pos.get(name) {
                Some(&i) => col_to_concept.push(i),
                None => {
                    return Err(Error::Parse {
                        line: 1,
                        msg: format!("unknown concept column \"{name}\""),
                    })
                }
            }
            let _ = k;
        }
        if col_to_concept.len() != n_concepts {
            return Err(Error::Parse {
                line: 1,
                msg: format!(
                    "expected {n_concepts} concept columns, found {}",
                    col_to_concept.len()
                ),
            });
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<Vec<PhoneticString>>> = BTreeMap::new();

    let parse_cell = |lineno: usize, doc: &str, concept: usize, cell: &str,
                          rows: &mut BTreeMap<String, Vec<Vec<PhoneticString>>>|
     -> Result<()> {
        if is_missing(cell) {
            return Ok(());
        }
        let mut syns = Vec::new();
        for part in cell.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let word = strip_diacritics(part).map_err(|e| Error::Validation(format!(
                "doculect \"{doc}\", concept \"{}\" (line {lineno}): {e}",
                concept_schema[concept]
            )))?;
            syns.push(word);
        }
        if !syns.is_empty() {
            rows.get_mut(doc).expect("row registered")[concept] = syns;
        }
        Ok(())
    };

    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(delim).collect();
        let doc = cells[0].trim();
        if doc.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty doculect name".into(),
            });
        }
        if long_format {
            if cells.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 3 columns, found {}", cells.len()),
                });
            }
            let concept = cells[1].trim();
            let &ci = concept_pos.get(concept).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("unknown concept \"{concept}\""),
            })?;
            if !rows.contains_key(doc) {
                order.push(doc.to_string());
                rows.insert(doc.to_string(), vec![Vec::new(); n_concepts]);
            }
            parse_cell(lineno, doc, ci, cells[2], &mut rows)?;
        } else {
            if cells.len() != n_concepts + 1 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {} columns, found {}", n_concepts + 1, cells.len()),
                });
            }
            if rows.contains_key(doc) {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("duplicate doculect \"{doc}\""),
                });
            }
            order.push(doc.to_string());
            rows.insert(doc.to_string(), vec![Vec::new(); n_concepts]);
            for (k, cell) in cells.iter().enumerate().skip(1) {
                parse_cell(lineno, doc, col_to_concept[k - 1], cell, &mut rows)?;
            }
        }
    }

    let doculects: Vec<Doculect> = order
        .into_iter()
        .map(|id| {
            let synonyms = rows.remove(&id).expect("registered row");
            let entries = synonyms
                .iter()
                .map(|syns| syns.first().cloned())
                .collect();
            Doculect {
                id,
                role: Role::Ingroup,
                entries,
                synonyms,
            }
        })
        .collect();

    if doculects.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no doculect rows".into(),
        });
    }

    Ok(Dataset {
        concepts: concept_schema.to_vec(),
        doculects,
    })
}

/// The canonical 40-concept schema as owned strings.
pub fn concepts40() -> Vec<String> {
    CONCEPTS40.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_has_41_distinct_symbols() {
        let mut set: Vec<char> = ALPHABET.to_vec();
        set.sort_unstable();
        set.dedup();
        assert_eq!(set.len(), 41);
    }

    #[test]
    fn strip_removes_joined_group() {
        assert_eq!(strip_diacritics("aixw~3").unwrap().to_string(), "aix3");
        assert_eq!(strip_diacritics("sol").unwrap().to_string(), "sol");
        assert_eq!(strip_diacritics("saNgw~is").unwrap().to_string(), "saNgis");
        assert_eq!(strip_diacritics("abc$o").unwrap().to_string(), "ao");
    }

    #[test]
    fn strip_rejects_malformed_input() {
        assert!(strip_diacritics("").is_err());
        assert!(strip_diacritics("a~b").is_err());
        assert!(strip_diacritics("ab$").is_err());
        assert!(strip_diacritics("a*b").is_err());
        assert!(strip_diacritics("aé").is_err());
    }

    fn tiny_schema() -> Vec<String> {
        vec!["horn".into(), "water".into()]
    }

    #[test]
    fn wide_parse_first_synonym_and_missing() {
        let tsv = "doculect\thorn\twater\nLATIN\tkornu\takw~a\nSPANISH\tkerno, kwerno\t\n";
        let d = parse_asjp_tsv(tsv, &tiny_schema()).unwrap();
        assert_eq!(d.doculects.len(), 2);
        let latin = d.doculect("LATIN").unwrap();
        assert_eq!(latin.entries[0].as_ref().unwrap().to_string(), "kornu");
        assert_eq!(latin.entries[1].as_ref().unwrap().to_string(), "aka");
        let sp = d.doculect("SPANISH").unwrap();
        assert_eq!(sp.entries[0].as_ref().unwrap().to_string(), "kerno");
        assert_eq!(sp.synonyms[0].len(), 2);
        assert!(sp.entries[1].is_none());
    }

    #[test]
    fn long_parse_matches_wide() {
        let long = "doculect\tconcept\tword\nLATIN\thorn\tkornu\nLATIN\twater\takw~a\n";
        let d = parse_asjp_tsv(long, &tiny_schema()).unwrap();
        let latin = d.doculect("LATIN").unwrap();
        assert_eq!(latin.entries[0].as_ref().unwrap().to_string(), "kornu");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let tsv = "doculect\thorn\twater\nLATIN\tkornu\n";
        match parse_asjp_tsv(tsv, &tiny_schema()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad = "doculect\thorn\twater\nLATIN\tkörnu\takwa\n";
        assert!(matches!(
            parse_asjp_tsv(bad, &tiny_schema()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn roles_and_round_trip() {
        let tsv = "doculect\thorn\twater\nLATIN\tkornu\takw~a\nSPANISH\tkerno\tagwa\n";
        let mut d = parse_asjp_tsv(tsv, &tiny_schema()).unwrap();
        d.assign_roles(&[], &["LATIN".into()]).unwrap();
        assert_eq!(d.gold_doculects().len(), 1);
        assert!(d.inference_doculects().iter().all(|x| x.id != "LATIN"));
        assert!(d.assign_roles(&["NOPE".into()], &[]).is_err());

        let re = parse_asjp_tsv(&d.to_tsv(), &tiny_schema()).unwrap();
        assert_eq!(re.doculects.len(), d.doculects.len());
        for (a, b) in re.doculects.iter().zip(d.doculects.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.synonyms, b.synonyms);
        }
    }
}
