//! Consistency-based progressive multiple sequence alignment.
//!
//! All pairwise PMI alignments of a cognate set form the library; each
//! alignment carries an identity score (proportion of identical matches,
//! gaps disregarded). Extended scores add, for every position pair, the
//! support of indirect alignments through every third word (path weight =
//! product of the two identity scores), normalized by the number of third
//! words plus one. Progressive alignment then merges child alignments
//! leaves-to-root along a guide tree, maximizing summed extended scores
//! per column; gaps only ever enter as whole columns, so child alignments
//! are never reordered.

use std::collections::BTreeMap;

use crate::align::{needleman_wunsch_affine, Alignment, ScoringModel};
use crate::corpus::PhoneticString;
use crate::tree::Tree;
use crate::{Error, Result};

/// Proportion of identical matches among the both-non-gap columns.
pub fn identity_score(al: &Alignment) -> f64 {
    let mut matches = 0usize;
    let mut aligned = 0usize;
    for (a, b) in al.top.iter().zip(al.bottom.iter()) {
        if let (Some(a), Some(b)) = (a, b) {
            aligned += 1;
            matches += usize::from(a == b);
        }
    }
    if aligned == 0 {
        0.0
    } else {
        matches as f64 / aligned as f64
    }
}

/// Pairwise alignments and identity scores over one cognate set.
#[derive(Debug, Clone)]
pub struct PairLibrary {
    /// (i, j) with i < j -> (alignment of word i vs word j, identity score).
    pub entries: BTreeMap<(usize, usize), (Alignment, f64)>,
    pub n_words: usize,
}

/// Align every unordered word pair of the set.
pub fn build_pair_library(
    words: &[(String, PhoneticString)],
    m: &ScoringModel,
) -> Result<PairLibrary> {
    if words.len() < 2 {
        return Err(Error::InsufficientData(
            "pair library needs at least two words".into(),
        ));
    }
    let mut entries = BTreeMap::new();
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            let al = needleman_wunsch_affine(&words[i].1, &words[j].1, m);
            let s = identity_score(&al);
            entries.insert((i, j), (al, s));
        }
    }
    Ok(PairLibrary {
        entries,
        n_words: words.len(),
    })
}

// Position map of an alignment: for each position of the top word, the
// aligned position of the bottom word (None across gaps), and vice versa.
fn position_maps(al: &Alignment) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let mut top_to_bottom = Vec::new();
    let mut bottom_to_top = Vec::new();
    let (mut ti, mut bi) = (0usize, 0usize);
    for (a, b) in al.top.iter().zip(al.bottom.iter()) {
        match (a, b) {
            (Some(_), Some(_)) => {
                top_to_bottom.push(Some(bi));
                bottom_to_top.push(Some(ti));
                ti += 1;
                bi += 1;
            }
            (Some(_), None) => {
                top_to_bottom.push(None);
                ti += 1;
            }
            (None, Some(_)) => {
                bottom_to_top.push(None);
                bi += 1;
            }
            (None, None) => unreachable!("gap-gap column"),
        }
    }
    (top_to_bottom, bottom_to_top)
}

/// Extended (consistency) scores for every position pair of every word pair.
#[derive(Debug, Clone)]
pub struct ExtendedScores {
    /// (i, j) with i < j -> len_i x len_j row-major support matrix.
    pub ext: BTreeMap<(usize, usize), Vec<f64>>,
    pub lens: Vec<usize>,
}

impl ExtendedScores {
    /// Support for linking position `pa` of word `a` with `pb` of word `b`.
    pub fn get(&self, a: usize, pa: usize, b: usize, pb: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let ((i, pi), (j, pj)) = if a < b {
            ((a, pa), (b, pb))
        } else {
            ((b, pb), (a, pa))
        };
        self.ext[&(i, j)][pi * self.lens[j] + pj]
    }
}

/// Combine direct and third-word-composed alignments into extended scores.
pub fn extend_library(lib: &PairLibrary, words: &[(String, PhoneticString)]) -> ExtendedScores {
    let n = lib.n_words;
    let lens: Vec<usize> = words.iter().map(|(_, w)| w.len()).collect();
    // maps[i][j]: position map word i -> word j (i != j)
    let mut maps: Vec<Vec<Option<Vec<Option<usize>>>>> = vec![vec![None; n]; n];
    let mut scores = vec![vec![0.0f64; n]; n];
    for (&(i, j), (al, s)) in &lib.entries {
        let (ij, ji) = position_maps(al);
        maps[i][j] = Some(ij);
        maps[j][i] = Some(ji);
        scores[i][j] = *s;
        scores[j][i] = *s;
    }

    let norm = (n - 2) as f64 + 1.0;
    let mut ext = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut table = vec![0.0f64; lens[i] * lens[j]];
            // direct support
            let m_ij = maps[i][j].as_ref().expect("library is complete");
            for (pi, link) in m_ij.iter().enumerate() {
                if let Some(pj) = link {
                    table[pi * lens[j] + pj] += scores[i][j];
                }
            }
            // composition through every third word
            for v in 0..n {
                if v == i || v == j {
                    continue;
                }
                let m_iv = maps[i][v].as_ref().expect("library is complete");
                let m_vj = maps[v][j].as_ref().expect("library is complete");
                let w = scores[i][v] * scores[v][j];
                if w == 0.0 {
                    continue;
                }
                for (pi, link) in m_iv.iter().enumerate() {
                    if let Some(pv) = link {
                        if let Some(pj) = m_vj[*pv] {
                            table[pi * lens[j] + pj] += w;
                        }
                    }
                }
            }
            for t in &mut table {
                *t /= norm;
            }
            ext.insert((i, j), table);
        }
    }
    ExtendedScores { ext, lens }
}

/// One aligned row: the source word plus its column layout.
#[derive(Debug, Clone)]
pub struct MsaRow {
    pub doculect: String,
    pub word_index: usize,
    pub word: PhoneticString,
    /// Per column: index into the word, or None for a gap.
    pub cols: Vec<Option<usize>>,
}

impl MsaRow {
    pub fn gapped_string(&self) -> String {
        self.cols
            .iter()
            .map(|c| match c {
                Some(p) => self.word.segments()[*p].as_char(),
                None => '-',
            })
            .collect()
    }
}

/// A multiple sequence alignment of one cognate set.
#[derive(Debug, Clone)]
pub struct Msa {
    pub rows: Vec<MsaRow>,
}

impl Msa {
    pub fn n_cols(&self) -> usize {
        self.rows.first().map(|r| r.cols.len()).unwrap_or(0)
    }

    /// Rows sorted by doculect id.
    pub fn sorted(mut self) -> Msa {
        self.rows.sort_by(|a, b| a.doculect.cmp(&b.doculect));
        self
    }

    /// Total consistency score: summed pairwise extended scores of all
    /// within-column position pairs.
    pub fn consistency_score(&self, ext: &ExtendedScores) -> f64 {
        let mut total = 0.0;
        for col in 0..self.n_cols() {
            for a in 0..self.rows.len() {
                let Some(pa) = self.rows[a].cols[col] else {
                    continue;
                };
                for b in (a + 1)..self.rows.len() {
                    if let Some(pb) = self.rows[b].cols[col] {
                        total += ext.get(
                            self.rows[a].word_index,
                            pa,
                            self.rows[b].word_index,
                            pb,
                        );
                    }
                }
            }
        }
        total
    }
}

// Merge two child alignments: NW over whole columns, maximizing summed
// pairwise extended scores; gap columns cost nothing. Ties prefer pairing,
// then consuming a column of `a`, then of `b`.
fn merge_profiles_impl(a: &Msa, b: &Msa, ext: &ExtendedScores) -> Msa {
    let (na, nb) = (a.n_cols(), b.n_cols());
    let mut score = vec![0.0f64; na * nb];
    for ci in 0..na {
        for cj in 0..nb {
            let mut total = 0.0;
            for ra in &a.rows {
                let Some(pa) = ra.cols[ci] else { continue };
                for rb in &b.rows {
                    if let Some(pb) = rb.cols[cj] {
                        total += ext.get(ra.word_index, pa, rb.word_index, pb);
                    }
                }
            }
            score[ci * nb + cj] = total;
        }
    }

    let w = nb + 1;
    let mut dp = vec![f64::NEG_INFINITY; (na + 1) * w];
    let mut from = vec![0u8; (na + 1) * w];
    dp[0] = 0.0;
    for i in 0..=na {
        for j in 0..=nb {
            if i == 0 && j == 0 {
                continue;
            }
            let at = i * w + j;
            let mut best = f64::NEG_INFINITY;
            let mut arg = 3u8;
            if i > 0 && j > 0 {
                let v = dp[(i - 1) * w + (j - 1)] + score[(i - 1) * nb + (j - 1)];
                if v > best {
                    best = v;
                    arg = 0;
                }
            }
            if i > 0 {
                let v = dp[(i - 1) * w + j];
                if v > best {
                    best = v;
                    arg = 1;
                }
            }
            if j > 0 {
                let v = dp[i * w + (j - 1)];
                if v > best {
                    best = v;
                    arg = 2;
                }
            }
            dp[at] = best;
            from[at] = arg;
        }
    }

    let mut ops = Vec::new();
    let (mut i, mut j) = (na, nb);
    while i > 0 || j > 0 {
        let op = from[i * w + j];
        ops.push(op);
        match op {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
    }
    ops.reverse();

    let build = |src: &Msa, take_on: [bool; 3], advance_on: [bool; 3]| -> Vec<MsaRow> {
        src.rows
            .iter()
            .map(|r| {
                let mut cols = Vec::with_capacity(ops.len());
                let mut k = 0usize;
                for &op in &ops {
                    if take_on[op as usize] {
                        cols.push(r.cols[k]);
                    } else {
                        cols.push(None);
                    }
                    if advance_on[op as usize] {
                        k += 1;
                    }
                }
                MsaRow {
                    doculect: r.doculect.clone(),
                    word_index: r.word_index,
                    word: r.word.clone(),
                    cols,
                }
            })
            .collect()
    };
    // op 0 consumes one column of each; op 1 consumes a-only; op 2 b-only.
    let mut rows = build(a, [true, true, false], [true, true, false]);
    rows.extend(build(b, [true, false, true], [true, false, true]));
    Msa { rows }
}

/// Progressive alignment of a cognate set along a pruned guide tree.
///
/// `words` pairs each doculect with its reflex; the guide tree must contain
/// exactly those doculects as leaves (prune it first).
pub fn progressive_align(
    words: &[(String, PhoneticString)],
    ext: &ExtendedScores,
    guide: &Tree,
) -> Result<Msa> {
    if words.is_empty() {
        return Err(Error::InsufficientData("no words to align".into()));
    }
    let word_of_doculect: BTreeMap<&str, usize> = words
        .iter()
        .enumerate()
        .map(|(i, (d, _))| (d.as_str(), i))
        .collect();
    if word_of_doculect.len() != words.len() {
        return Err(Error::Validation("duplicate doculect in cognate set".into()));
    }
    let leaves = guide.leaves();
    if leaves.len() != words.len() {
        return Err(Error::Validation(format!(
            "guide tree has {} leaves for {} words (prune it to the cognate set)",
            leaves.len(),
            words.len()
        )));
    }
    for &l in &leaves {
        let name = &guide.taxa[guide.nodes[l].taxon.unwrap()];
        if !word_of_doculect.contains_key(name.as_str()) {
            return Err(Error::Validation(format!(
                "guide tree leaf \"{name}\" has no word in the cognate set"
            )));
        }
    }

    fn rec(
        guide: &Tree,
        node: usize,
        words: &[(String, PhoneticString)],
        word_of_doculect: &BTreeMap<&str, usize>,
        ext: &ExtendedScores,
    ) -> Msa {
        let n = &guide.nodes[node];
        if let Some(t) = n.taxon {
            let name = guide.taxa[t].as_str();
            let wi = word_of_doculect[name];
            let (d, w) = &words[wi];
            return Msa {
                rows: vec![MsaRow {
                    doculect: d.clone(),
                    word_index: wi,
                    word: w.clone(),
                    cols: (0..w.len()).map(Some).collect(),
                }],
            };
        }
        let mut acc: Option<Msa> = None;
        for &c in &n.children {
            let child = rec(guide, c, words, word_of_doculect, ext);
            acc = Some(match acc {
                None => child,
                Some(prev) => merge_profiles_impl(&prev, &child, ext),
            });
        }
        acc.expect("internal node has children")
    }

    Ok(rec(guide, guide.root, words, &word_of_doculect, ext).sorted())
}
