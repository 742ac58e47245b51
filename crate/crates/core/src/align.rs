//! Pairwise alignment under a trainable PMI scoring model with affine gaps,
//! and the iterative loop that estimates the model from raw word lists.
//!
//! Scoring unit: PMI(a,b) = ln( s(a,b) / (q(a) q(b)) ), where s is the
//! probability of seeing `a` aligned to `b` and q are symbol frequencies.
//! Gap columns are charged affine penalties instead (open / extend).

use rayon::prelude::*;

use crate::corpus::{Dataset, PhoneticString, SoundClass, ALPHABET_SIZE};
use crate::{Error, Result};

/// Default gap-opening penalty of the trained model.
pub const GAP_OPEN: f64 = -2.49;
/// Default gap-extension penalty of the trained model.
pub const GAP_EXTEND: f64 = -1.70;
/// Default score threshold above which a word pair joins the training set.
pub const PMI_THRESHOLD: f64 = 4.45;
/// Default number of filtered re-estimation rounds.
pub const PMI_ITERATIONS: usize = 10;

/// Symmetric PMI matrix plus affine gap penalties.
#[derive(Debug, Clone)]
pub struct ScoringModel {
    pub pmi: Vec<f64>, // 41 x 41, row-major
    pub gap_open: f64,
    pub gap_extend: f64,
}

impl ScoringModel {
    pub fn new(pmi: Vec<f64>, gap_open: f64, gap_extend: f64) -> Result<Self> {
        if pmi.len() != ALPHABET_SIZE * ALPHABET_SIZE {
            return Err(Error::Validation("PMI matrix must be 41x41".into()));
        }
        if !(gap_open.is_finite() && gap_extend.is_finite() && gap_open <= 0.0 && gap_extend <= 0.0)
        {
            return Err(Error::Validation(
                "gap penalties must be finite and <= 0".into(),
            ));
        }
        for a in 0..ALPHABET_SIZE {
            for b in 0..a {
                let d = (pmi[a * ALPHABET_SIZE + b] - pmi[b * ALPHABET_SIZE + a]).abs();
                if d > 1e-9 {
                    return Err(Error::Validation("PMI matrix must be symmetric".into()));
                }
            }
        }
        Ok(ScoringModel {
            pmi,
            gap_open,
            gap_extend,
        })
    }

    #[inline]
    pub fn score(&self, a: SoundClass, b: SoundClass) -> f64 {
        self.pmi[a.index() * ALPHABET_SIZE + b.index()]
    }

    /// TSV serialization: 41 matrix rows then the two penalties.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in 0..ALPHABET_SIZE {
            let row: Vec<String> = (0..ALPHABET_SIZE)
                .map(|c| format!("{}", self.pmi[r * ALPHABET_SIZE + c]))
                .collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out.push_str(&format!("gap_open\t{}\n", self.gap_open));
        out.push_str(&format!("gap_extend\t{}\n", self.gap_extend));
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut pmi = vec![0.0; ALPHABET_SIZE * ALPHABET_SIZE];
        let mut gap_open = None;
        let mut gap_extend = None;
        let mut row = 0usize;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if cells[0] == "gap_open" || cells[0] == "gap_extend" {
                let v: f64 = cells
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or(Error::Parse {
                        line: i + 1,
                        msg: "bad penalty value".into(),
                    })?;
                if cells[0] == "gap_open" {
                    gap_open = Some(v);
                } else {
                    gap_extend = Some(v);
                }
                continue;
            }
            if row >= ALPHABET_SIZE || cells.len() != ALPHABET_SIZE {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "bad matrix row".into(),
                });
            }
            for (c, cell) in cells.iter().enumerate() {
                pmi[row * ALPHABET_SIZE + c] = cell.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("bad number \"{cell}\""),
                })?;
            }
            row += 1;
        }
        match (gap_open, gap_extend) {
            (Some(o), Some(e)) if row == ALPHABET_SIZE => ScoringModel::new(pmi, o, e),
            _ => Err(Error::Parse {
                line: 0,
                msg: "incomplete scoring model".into(),
            }),
        }
    }
}

/// A global alignment: equal-length gapped rows plus the aggregate score.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub top: Vec<Option<SoundClass>>,
    pub bottom: Vec<Option<SoundClass>>,
    pub score: f64,
}

impl Alignment {
    pub fn len(&self) -> usize {
        self.top.len()
    }

    pub fn is_empty(&self) -> bool {
        self.top.is_empty()
    }

    fn row_string(row: &[Option<SoundClass>]) -> String {
        row.iter()
            .map(|c| c.map(|s| s.as_char()).unwrap_or('-'))
            .collect()
    }

    pub fn top_string(&self) -> String {
        Self::row_string(&self.top)
    }

    pub fn bottom_string(&self) -> String {
        Self::row_string(&self.bottom)
    }
}

/// Identity model: 0 on the diagonal, -1 off it, -1/-1 gap penalties.
/// Aligning under it reproduces classic edit-distance behaviour.
pub fn levenshtein_init_model() -> ScoringModel {
    let mut pmi = vec![-1.0; ALPHABET_SIZE * ALPHABET_SIZE];
    for a in 0..ALPHABET_SIZE {
        pmi[a * ALPHABET_SIZE + a] = 0.0;
    }
    ScoringModel::new(pmi, -1.0, -1.0).expect("valid init model")
}

const NEG: f64 = f64::NEG_INFINITY;

// DP states: 0 = match, 1 = gap in bottom (consume top), 2 = gap in top.
// Ties prefer lower state index, which realizes the documented
// match > deletion > insertion ordering.
#[inline]
fn best3(m: f64, x: f64, y: f64) -> (f64, u8) {
    if m >= x && m >= y {
        (m, 0)
    } else if x >= y {
        (x, 1)
    } else {
        (y, 2)
    }
}

/// Score-only affine Needleman-Wunsch; cheaper than building the alignment.
pub fn nw_affine_score(x: &PhoneticString, y: &PhoneticString, m: &ScoringModel) -> f64 {
    let xs = x.segments();
    let ys = y.segments();
    let (n, mm) = (xs.len(), ys.len());
    let w = mm + 1;
    let mut sm = vec![NEG; w];
    let mut sx = vec![NEG; w];
    let mut sy = vec![NEG; w];
    sm[0] = 0.0;
    for j in 1..w {
        sy[j] = m.gap_open + (j as f64 - 1.0) * m.gap_extend;
    }
    let mut pm = vec![NEG; w];
    let mut px = vec![NEG; w];
    let mut py = vec![NEG; w];
    for i in 1..=n {
        std::mem::swap(&mut pm, &mut sm);
        std::mem::swap(&mut px, &mut sx);
        std::mem::swap(&mut py, &mut sy);
        sm[0] = NEG;
        sx[0] = m.gap_open + (i as f64 - 1.0) * m.gap_extend;
        sy[0] = NEG;
        let xi = xs[i - 1];
        for j in 1..w {
            let sub = m.score(xi, ys[j - 1]);
            sm[j] = sub + pm[j - 1].max(px[j - 1]).max(py[j - 1]);
            sx[j] = (pm[j] + m.gap_open)
                .max(px[j] + m.gap_extend)
                .max(py[j] + m.gap_open);
            sy[j] = (sm[j - 1] + m.gap_open)
                .max(sx[j - 1] + m.gap_open)
                .max(sy[j - 1] + m.gap_extend);
        }
    }
    sm[mm].max(sx[mm]).max(sy[mm])
}

/// Global alignment of `x` and `y` maximizing aggregate PMI under affine
/// gap penalties. Deterministic: ties resolve match > gap-in-bottom >
/// gap-in-top, both at the end cell and during traceback.
pub fn needleman_wunsch_affine(
    x: &PhoneticString,
    y: &PhoneticString,
    m: &ScoringModel,
) -> Alignment {
    let xs = x.segments();
    let ys = y.segments();
    let (n, mm) = (xs.len(), ys.len());
    let w = mm + 1;
    // Three DP layers with backpointers (previous state per layer).
    let mut score = vec![[NEG; 3]; (n + 1) * w];
    let mut from = vec![[0u8; 3]; (n + 1) * w];
    score[0][0] = 0.0;
    for j in 1..w {
        score[j][2] = m.gap_open + (j as f64 - 1.0) * m.gap_extend;
        from[j][2] = 2;
    }
    for i in 1..=n {
        score[i * w][1] = m.gap_open + (i as f64 - 1.0) * m.gap_extend;
        from[i * w][1] = 1;
        let xi = xs[i - 1];
        for j in 1..w {
            let at = i * w + j;
            let diag = (i - 1) * w + (j - 1);
            let up = (i - 1) * w + j;
            let left = i * w + (j - 1);

            let sub = m.score(xi, ys[j - 1]);
            let (b, s) = best3(score[diag][0], score[diag][1], score[diag][2]);
            score[at][0] = sub + b;
            from[at][0] = s;

            let (b, s) = best3(
                score[up][0] + m.gap_open,
                score[up][1] + m.gap_extend,
                score[up][2] + m.gap_open,
            );
            score[at][1] = b;
            from[at][1] = s;

            let (b, s) = best3(
                score[left][0] + m.gap_open,
                score[left][1] + m.gap_open,
                score[left][2] + m.gap_extend,
            );
            score[at][2] = b;
            from[at][2] = s;
        }
    }
    let end = n * w + mm;
    let (total, mut state) = best3(score[end][0], score[end][1], score[end][2]);

    let mut top = Vec::new();
    let mut bottom = Vec::new();
    let (mut i, mut j) = (n, mm);
    while i > 0 || j > 0 {
        let at = i * w + j;
        let prev = from[at][state as usize];
        match state {
            0 => {
                top.push(Some(xs[i - 1]));
                bottom.push(Some(ys[j - 1]));
                i -= 1;
                j -= 1;
            }
            1 => {
                top.push(Some(xs[i - 1]));
                bottom.push(None);
                i -= 1;
            }
            _ => {
                top.push(None);
                bottom.push(Some(ys[j - 1]));
                j -= 1;
            }
        }
        state = prev;
    }
    top.reverse();
    bottom.reverse();
    Alignment {
        top,
        bottom,
        score: total,
    }
}

/// Aggregate PMI of the best alignment (the alignment itself is discarded).
pub fn pmi_similarity(x: &PhoneticString, y: &PhoneticString, m: &ScoringModel) -> f64 {
    nw_affine_score(x, y, m)
}

/// Joint aligned-pair probabilities and marginal symbol frequencies.
#[derive(Debug, Clone)]
pub struct SymbolStats {
    /// s(a,b): symmetric, sums to 1 over ordered non-gap pairs.
    pub s: Vec<f64>,
    /// q(a): sums to 1.
    pub q: Vec<f64>,
}

fn smooth_joint(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + (ALPHABET_SIZE * ALPHABET_SIZE) as f64;
    counts.iter().map(|&c| (c + 1.0) / total).collect()
}

fn smooth_marginal(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + ALPHABET_SIZE as f64;
    counts.iter().map(|&c| (c + 1.0) / total).collect()
}

/// Count non-gap alignment columns into a symmetrized 41x41 table.
fn joint_counts(alignments: &[Alignment]) -> Vec<f64> {
    let mut counts = vec![0.0; ALPHABET_SIZE * ALPHABET_SIZE];
    for al in alignments {
        for (a, b) in al.top.iter().zip(al.bottom.iter()) {
            if let (Some(a), Some(b)) = (a, b) {
                counts[a.index() * ALPHABET_SIZE + b.index()] += 1.0;
                counts[b.index() * ALPHABET_SIZE + a.index()] += 1.0;
            }
        }
    }
    counts
}

/// Estimate symbol statistics from a corpus of alignments, with add-one
/// smoothing on both tables. Marginals count the non-gap symbols of the
/// aligned words themselves.
pub fn estimate_stats(alignments: &[Alignment]) -> Result<SymbolStats> {
    if alignments.is_empty() {
        return Err(Error::InsufficientData("no alignments to estimate from".into()));
    }
    let joint = joint_counts(alignments);
    let mut marg = vec![0.0; ALPHABET_SIZE];
    for al in alignments {
        for c in al.top.iter().chain(al.bottom.iter()).flatten() {
            marg[c.index()] += 1.0;
        }
    }
    Ok(SymbolStats {
        s: smooth_joint(&joint),
        q: smooth_marginal(&marg),
    })
}

/// Symbol frequencies over all inference words of the dataset.
pub fn corpus_symbol_freqs(d: &Dataset) -> Vec<f64> {
    let mut counts = vec![0.0; ALPHABET_SIZE];
    for doc in d.inference_doculects() {
        for w in doc.entries.iter().flatten() {
            for sc in w.segments() {
                counts[sc.index()] += 1.0;
            }
        }
    }
    smooth_marginal(&counts)
}

fn pmi_from(s: &[f64], q: &[f64], gap_open: f64, gap_extend: f64) -> ScoringModel {
    let mut pmi = vec![0.0; ALPHABET_SIZE * ALPHABET_SIZE];
    for a in 0..ALPHABET_SIZE {
        for b in 0..ALPHABET_SIZE {
            pmi[a * ALPHABET_SIZE + b] = (s[a * ALPHABET_SIZE + b] / (q[a] * q[b])).ln();
        }
    }
    ScoringModel::new(pmi, gap_open, gap_extend).expect("trained model is valid")
}

/// All synonymous cross-doculect word pairs of the inference dataset.
pub fn synonymous_pairs(d: &Dataset) -> Vec<(PhoneticString, PhoneticString)> {
    let docs = d.inference_doculects();
    let mut pairs = Vec::new();
    for c in 0..d.concepts.len() {
        for i in 0..docs.len() {
            let Some(a) = docs[i].entries[c].as_ref() else {
                continue;
            };
            for db in docs.iter().skip(i + 1) {
                if let Some(b) = db.entries[c].as_ref() {
                    pairs.push((a.clone(), b.clone()));
                }
            }
        }
    }
    pairs
}

/// Train the scoring model on a dataset.
///
/// Round zero aligns every synonymous cross-doculect pair under the
/// identity model and turns the counts into PMI scores with the standard
/// gap penalties. Each further round keeps only the pairs currently
/// scoring at or above `threshold`, re-aligns them, and re-estimates the
/// PMI table; marginal frequencies stay fixed at the corpus frequencies.
pub fn train_scoring_model(
    d: &Dataset,
    threshold: f64,
    iterations: usize,
) -> Result<ScoringModel> {
    let pairs = synonymous_pairs(d);
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "no synonymous cross-doculect pairs".into(),
        ));
    }
    let q = corpus_symbol_freqs(d);

    let align_all = |model: &ScoringModel, subset: &[(PhoneticString, PhoneticString)]| {
        subset
            .par_iter()
            .map(|(a, b)| needleman_wunsch_affine(a, b, model))
            .collect::<Vec<_>>()
    };

    // (i)-(iii): identity-model alignment, first PMI estimate, re-align.
    let init = levenshtein_init_model();
    let alignments = align_all(&init, &pairs);
    let s = smooth_joint(&joint_counts(&alignments));
    let mut model = pmi_from(&s, &q, GAP_OPEN, GAP_EXTEND);

    // (iv): filtered re-estimation rounds.
    for round in 0..iterations {
        let scores: Vec<f64> = pairs
            .par_iter()
            .map(|(a, b)| nw_affine_score(a, b, &model))
            .collect();
        let kept: Vec<(PhoneticString, PhoneticString)> = pairs
            .iter()
            .zip(scores.iter())
            .filter(|(_, &s)| s >= threshold)
            .map(|(p, _)| p.clone())
            .collect();
        if kept.is_empty() {
            return Err(Error::InsufficientData(format!(
                "PMI training starved: no pair scored >= {threshold} in round {round}"
            )));
        }
        let alignments = align_all(&model, &kept);
        let s = smooth_joint(&joint_counts(&alignments));
        model = pmi_from(&s, &q, GAP_OPEN, GAP_EXTEND);
    }
    Ok(model)
}
