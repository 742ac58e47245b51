//! Proto-form reconstruction over MSA columns and evaluation against a
//! gold ancestor list.
//!
//! Each MSA column yields one presence character per observed state (sound
//! class or gap); the state with the highest mean presence probability at
//! the ingroup ancestor, averaged over the posterior sample, is the
//! column's reconstruction. Concatenating the winners and deleting gaps
//! gives the proto-form. Evaluation is normalized Levenshtein distance
//! against the nearest gold synonym.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::asr::{ingroup_ancestor, marginal_state_probs};
use crate::chars::UNDEF;
use crate::corpus::{Dataset, PhoneticString, SoundClass};
use crate::msa::Msa;
use crate::phylo::{CharData, KindParams, TreeTables, KIND_CLASS_LABEL};
use crate::tree::Tree;
use crate::{Error, Result};

/// Presence character of one state in one MSA column. Cells are indexed by
/// the full doculect row universe; doculects outside the MSA are undefined.
#[derive(Debug, Clone)]
pub struct ColumnCharacter {
    pub column: usize,
    /// `None` is the gap state.
    pub state: Option<SoundClass>,
    pub cells: Vec<u8>,
}

/// One character per (column, observed state), gap included. States are
/// ordered sound classes first (alphabet order), gap last.
pub fn column_characters(msa: &Msa, doculects: &[String]) -> Vec<ColumnCharacter> {
    let row_of: BTreeMap<&str, usize> = doculects
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let mut out = Vec::new();
    for col in 0..msa.n_cols() {
        let mut states: Vec<Option<SoundClass>> = Vec::new();
        for row in &msa.rows {
            let s = row.cols[col].map(|p| row.word.segments()[p]);
            if !states.contains(&s) {
                states.push(s);
            }
        }
        states.sort_by_key(|s| match s {
            Some(sc) => sc.index(),
            None => usize::MAX,
        });
        for state in states {
            let mut cells = vec![UNDEF; doculects.len()];
            for row in &msa.rows {
                let r = row_of[row.doculect.as_str()];
                let s = row.cols[col].map(|p| row.word.segments()[p]);
                cells[r] = u8::from(s == state);
            }
            out.push(ColumnCharacter {
                column: col,
                state,
                cells,
            });
        }
    }
    out
}

/// A reconstructed proto-form.
#[derive(Debug, Clone)]
pub struct ProtoForm {
    pub concept: usize,
    /// `None` when every column reconstructed to gap.
    pub form: Option<PhoneticString>,
    /// Chosen state and its mean presence probability, per column.
    pub columns: Vec<(Option<SoundClass>, f64)>,
}

/// Reconstruct proto-forms for every concept MSA in one pass over the
/// rooted posterior sample. Column characters are evaluated under the
/// class-label kind's parameters of each sample entry.
pub fn reconstruct_proto_forms(
    msas: &[(usize, Msa)],
    rooted: &[(Tree, [KindParams; 2])],
    doculects: &[String],
    outgroup: &[String],
) -> Result<Vec<ProtoForm>> {
    if rooted.is_empty() {
        return Err(Error::InsufficientData("empty rooted sample".into()));
    }
    let data = CharData {
        taxa: doculects.to_vec(),
        groups: Vec::new(),
    };
    let all_chars: Vec<(usize, Vec<ColumnCharacter>)> = msas
        .iter()
        .map(|(concept, msa)| (*concept, column_characters(msa, doculects)))
        .collect();

    // Mean presence probability per character, averaged over the sample.
    let per_entry: Vec<Result<Vec<f64>>> = rooted
        .par_iter()
        .map(|(tree, kinds)| {
            let tables = TreeTables::new(tree, &data, kinds)?;
            let node = ingroup_ancestor(tree, outgroup)?;
            let mut probs = Vec::new();
            for (_, chars) in &all_chars {
                for ch in chars {
                    let d = marginal_state_probs(&tables, KIND_CLASS_LABEL, &ch.cells, node)?;
                    probs.push(d.p1);
                }
            }
            Ok(probs)
        })
        .collect();
    let mut mean: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for r in per_entry {
        let v = r?;
        if mean.is_empty() {
            mean = v;
        } else {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        n += 1;
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut out = Vec::new();
    let mut k = 0usize;
    for (concept, chars) in &all_chars {
        let n_cols = chars.iter().map(|c| c.column + 1).max().unwrap_or(0);
        let mut columns: Vec<(Option<SoundClass>, f64)> = Vec::with_capacity(n_cols);
        for col in 0..n_cols {
            let mut best: Option<(Option<SoundClass>, f64)> = None;
            for (ci, ch) in chars.iter().enumerate() {
                if ch.column != col {
                    continue;
                }
                let p = mean[k + ci];
                // states are pre-ordered (symbols then gap): strict greater
                // keeps the earliest on ties
                if best.map(|(_, bp)| p > bp).unwrap_or(true) {
                    best = Some((ch.state, p));
                }
            }
            columns.push(best.expect("every column has at least one state"));
        }
        k += chars.len();
        let segments: Vec<SoundClass> = columns.iter().filter_map(|(s, _)| *s).collect();
        let form = if segments.is_empty() {
            None
        } else {
            Some(PhoneticString::new(segments)?)
        };
        out.push(ProtoForm {
            concept: *concept,
            form,
            columns,
        });
    }
    Ok(out)
}

/// Unit-cost edit distance.
pub fn levenshtein(a: &PhoneticString, b: &PhoneticString) -> usize {
    let xs = a.segments();
    let ys = b.segments();
    let mut prev: Vec<usize> = (0..=ys.len()).collect();
    let mut cur = vec![0usize; ys.len() + 1];
    for (i, &x) in xs.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in ys.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[ys.len()]
}

/// Edit distance divided by the length of the longer string.
pub fn normalized_levenshtein(a: &PhoneticString, b: &PhoneticString) -> f64 {
    levenshtein(a, b) as f64 / a.len().max(b.len()) as f64
}

/// Evaluation of reconstructions (and every extant ingroup doculect)
/// against the gold ancestor list.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// Per concept: name and reconstruction score (None when either side
    /// is missing).
    pub per_concept: Vec<(String, Option<f64>)>,
    pub reconstruction_average: f64,
    /// Doculect id -> average score over concepts it shares with gold.
    pub extant_averages: BTreeMap<String, f64>,
    /// Concepts without any gold entry, excluded from all averages.
    pub concepts_missing_gold: Vec<String>,
}

/// Score reconstructions against the gold doculect's synonym lists (min
/// over synonyms per concept), plus the same score for every extant
/// ingroup doculect's word.
pub fn evaluate(
    protos: &[ProtoForm],
    gold: &[Vec<PhoneticString>],
    d: &Dataset,
) -> Result<EvalReport> {
    if gold.len() != d.concepts.len() {
        return Err(Error::Validation("gold list length mismatch".into()));
    }
    let best_against_gold = |w: &PhoneticString, c: usize| -> Option<f64> {
        gold[c]
            .iter()
            .map(|g| normalized_levenshtein(w, g))
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    };

    let mut per_concept = Vec::new();
    let mut missing_gold = Vec::new();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (c, concept) in d.concepts.iter().enumerate() {
        if gold[c].is_empty() {
            missing_gold.push(concept.clone());
            per_concept.push((concept.clone(), None));
            continue;
        }
        let score = protos
            .iter()
            .find(|p| p.concept == c)
            .and_then(|p| p.form.as_ref())
            .and_then(|f| best_against_gold(f, c));
        if let Some(s) = score {
            sum += s;
            n += 1;
        }
        per_concept.push((concept.clone(), score));
    }
    if n == 0 {
        return Err(Error::InsufficientData(
            "no concept has both a reconstruction and a gold entry".into(),
        ));
    }
    let reconstruction_average = sum / n as f64;

    let mut extant_averages = BTreeMap::new();
    for doc in d.ingroup_doculects() {
        let mut s = 0.0;
        let mut k = 0usize;
        for c in 0..d.concepts.len() {
            if gold[c].is_empty() {
                continue;
            }
            if let Some(w) = doc.entries[c].as_ref() {
                if let Some(v) = best_against_gold(w, c) {
                    s += v;
                    k += 1;
                }
            }
        }
        if k > 0 {
            extant_averages.insert(doc.id.clone(), s / k as f64);
        }
    }

    Ok(EvalReport {
        per_concept,
        reconstruction_average,
        extant_averages,
        concepts_missing_gold: missing_gold,
    })
}

/// Table of (concept, gold synonyms, reconstruction).
pub fn reconstructions_to_tsv(
    protos: &[ProtoForm],
    gold: &[Vec<PhoneticString>],
    concepts: &[String],
) -> String {
    let mut out = String::from("concept\tgold\treconstruction\n");
    for (c, concept) in concepts.iter().enumerate() {
        let g: Vec<String> = gold[c].iter().map(|w| w.to_string()).collect();
        let r = protos
            .iter()
            .find(|p| p.concept == c)
            .and_then(|p| p.form.as_ref())
            .map(|f| f.to_string())
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!("{concept}\t{}\t{r}\n", g.join(", ")));
    }
    out
}

/// Histogram data: per-doculect average scores with the reconstruction's
/// average as a marked row.
pub fn eval_to_fig_tsv(report: &EvalReport) -> String {
    let mut out = String::from("series\tdoculect\taverage_score\n");
    out.push_str(&format!(
        "reconstruction\t*\t{}\n",
        report.reconstruction_average
    ));
    for (doc, avg) in &report.extant_averages {
        out.push_str(&format!("extant\t{doc}\t{avg}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msa::MsaRow;

    fn ps(s: &str) -> PhoneticString {
        PhoneticString::parse(s).unwrap()
    }

    fn msa_from(rows: &[(&str, &str)]) -> Msa {
        let rows = rows
            .iter()
            .enumerate()
            .map(|(i, (doc, gapped))| {
                let word: String = gapped.chars().filter(|&c| c != '-').collect();
                let word = ps(&word);
                let mut k = 0usize;
                let cols = gapped
                    .chars()
                    .map(|c| {
                        if c == '-' {
                            None
                        } else {
                            let p = k;
                            k += 1;
                            Some(p)
                        }
                    })
                    .collect();
                MsaRow {
                    doculect: doc.to_string(),
                    word_index: i,
                    word,
                    cols,
                }
            })
            .collect();
        Msa { rows }
    }

    #[test]
    fn column_characters_enumerate_observed_states() {
        let msa = msa_from(&[("A", "va-klo"), ("B", "-o-ky-"), ("C", "wo-kLu")]);
        let docs: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let chars = column_characters(&msa, &docs);
        // column 0 states: v, w, gap -> 3 characters
        let col0: Vec<&ColumnCharacter> = chars.iter().filter(|c| c.column == 0).collect();
        assert_eq!(col0.len(), 3);
        // gap state is last
        assert_eq!(col0[2].state, None);
        // D is outside the MSA: undefined everywhere
        for ch in &chars {
            assert_eq!(ch.cells[3], UNDEF);
        }
        // each doculect in the MSA has exactly one state per column with 1
        for col in 0..6 {
            for row in 0..3 {
                let ones = chars
                    .iter()
                    .filter(|c| c.column == col && c.cells[row] == 1)
                    .count();
                assert_eq!(ones, 1);
            }
        }
        // unanimous column has a single character
        let col3: Vec<&ColumnCharacter> = chars.iter().filter(|c| c.column == 3).collect();
        assert_eq!(col3.len(), 1);
        assert_eq!(col3[0].state, Some(crate::corpus::SoundClass::from_char('k').unwrap()));
    }

    #[test]
    fn levenshtein_known_values_and_metric_properties() {
        assert_eq!(levenshtein(&ps("akwa"), &ps("akwa")), 0);
        assert_eq!(levenshtein(&ps("saNg"), &ps("saNgis")), 2);
        assert!((normalized_levenshtein(&ps("saNg"), &ps("saNgis")) - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(normalized_levenshtein(&ps("tu"), &ps("tu")), 0.0);
        // symmetry + triangle inequality on the unnormalized distance
        let words = ["akwa", "agwa", "apa", "o", "uy3", "vod3"];
        for a in &words {
            for b in &words {
                assert_eq!(levenshtein(&ps(a), &ps(b)), levenshtein(&ps(b), &ps(a)));
                for c in &words {
                    assert!(
                        levenshtein(&ps(a), &ps(c))
                            <= levenshtein(&ps(a), &ps(b)) + levenshtein(&ps(b), &ps(c))
                    );
                }
                if a != b {
                    assert!(levenshtein(&ps(a), &ps(b)) > 0);
                }
            }
        }
    }

    #[test]
    fn evaluate_prefers_best_gold_synonym() {
        let tsv = "doculect\thorn\tsun\nX\tkorno\tsole\nY\tbri\tdyell\n";
        let schema: Vec<String> = vec!["horn".into(), "sun".into()];
        let d = crate::corpus::parse_asjp_tsv(tsv, &schema).unwrap();
        let gold = vec![vec![ps("kornu"), ps("korno")], vec![ps("sol")]];
        let protos = vec![
            ProtoForm {
                concept: 0,
                form: Some(ps("korno")),
                columns: Vec::new(),
            },
            ProtoForm {
                concept: 1,
                form: Some(ps("sol")),
                columns: Vec::new(),
            },
        ];
        let r = evaluate(&protos, &gold, &d).unwrap();
        // horn matches the second synonym exactly; sun exactly
        assert_eq!(r.reconstruction_average, 0.0);
        // X: horn korno->korno 0, sun sole vs sol = 1/4
        assert!((r.extant_averages["X"] - 0.125).abs() < 1e-12);
        assert!(r.extant_averages["Y"] > r.extant_averages["X"]);
    }

    #[test]
    fn evaluate_reports_concepts_missing_gold() {
        let tsv = "doculect\thorn\tsun\nX\tkorno\tsole\n";
        let schema: Vec<String> = vec!["horn".into(), "sun".into()];
        let d = crate::corpus::parse_asjp_tsv(tsv, &schema).unwrap();
        let gold = vec![vec![ps("kornu")], vec![]];
        let protos = vec![ProtoForm {
            concept: 0,
            form: Some(ps("kornu")),
            columns: Vec::new(),
        }];
        let r = evaluate(&protos, &gold, &d).unwrap();
        assert_eq!(r.concepts_missing_gold, vec!["sun".to_string()]);
        assert_eq!(r.reconstruction_average, 0.0);
    }

    #[test]
    fn averages_are_permutation_invariant() {
        let tsv = "doculect\ta\tb\tc\nX\tka\tpo\tnu\n";
        let schema: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let d = crate::corpus::parse_asjp_tsv(tsv, &schema).unwrap();
        let gold = vec![vec![ps("ko")], vec![ps("po")], vec![ps("nuk")]];
        let protos: Vec<ProtoForm> = [(0, "ka"), (1, "pa"), (2, "nu")]
            .iter()
            .map(|&(c, w)| ProtoForm {
                concept: c,
                form: Some(ps(w)),
                columns: Vec::new(),
            })
            .collect();
        let r1 = evaluate(&protos, &gold, &d).unwrap();
        let rev: Vec<ProtoForm> = protos.into_iter().rev().collect();
        let r2 = evaluate(&rev, &gold, &d).unwrap();
        assert!((r1.reconstruction_average - r2.reconstruction_average).abs() < 1e-15);
    }
}
