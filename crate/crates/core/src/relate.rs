//! Word-list-level PMI distances and the statistical relatedness test.
//!
//! The distance between two doculects calibrates each synonymous pair's
//! PMI similarity against the empirical distribution of all non-synonymous
//! cross-pair similarities between the same two doculects (a rank score in
//! [0,1], 0.5 at chance level), then maps the mean calibrated score onto
//! [0,2]: `distance = 2 * (1 - mean)`. Chance-level word lists land near 1.
//!
//! The null model is an empirical CDF over distances of known-unrelated
//! pairs, linearly interpolated, with an exponential lower tail so that
//! distances far below every null sample still get a usable p-value.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::align::{pmi_similarity, ScoringModel};
use crate::corpus::{Dataset, Doculect, PhoneticString};
use crate::rngx::{substream, Stream};
use crate::{Error, Result};

/// Minimum shared concepts for a defined distance.
pub const MIN_SHARED_CONCEPTS: usize = 5;

/// Calibrated PMI distance between two word lists.
pub fn pmi_distance(a: &Doculect, b: &Doculect, m: &ScoringModel) -> Result<f64> {
    let words_a: Vec<(usize, &PhoneticString)> = a
        .entries
        .iter()
        .enumerate()
        .filter_map(|(c, w)| w.as_ref().map(|w| (c, w)))
        .collect();
    let words_b: Vec<(usize, &PhoneticString)> = b
        .entries
        .iter()
        .enumerate()
        .filter_map(|(c, w)| w.as_ref().map(|w| (c, w)))
        .collect();

    let mut synonymous: Vec<f64> = Vec::new();
    let mut background: Vec<f64> = Vec::new();
    for &(ca, wa) in &words_a {
        for &(cb, wb) in &words_b {
            let s = pmi_similarity(wa, wb, m);
            if ca == cb {
                synonymous.push(s);
            } else {
                background.push(s);
            }
        }
    }
    if synonymous.len() < MIN_SHARED_CONCEPTS {
        return Err(Error::InsufficientData(format!(
            "insufficient overlap: {} shared concepts between \"{}\" and \"{}\"",
            synonymous.len(),
            a.id,
            b.id
        )));
    }
    background.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = background.len() as f64;
    let mean_rank: f64 = synonymous
        .iter()
        .map(|&v| {
            let below = background.partition_point(|&w| w < v);
            let tied = background[below..].partition_point(|&w| w <= v);
            (below as f64 + 0.5 * tied as f64) / n
        })
        .sum::<f64>()
        / synonymous.len() as f64;
    Ok(2.0 * (1.0 - mean_rank))
}

/// Symmetric matrix of pairwise PMI distances over doculects.
#[derive(Debug, Clone)]
pub struct PmiDistanceMatrix {
    pub ids: Vec<String>,
    pub distances: Vec<f64>, // row-major, symmetric, 0 diagonal
}

impl PmiDistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.ids.len() + j]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("doculect");
        for id in &self.ids {
            out.push('\t');
            out.push_str(id);
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..self.ids.len() {
                out.push_str(&format!("\t{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// All-pairs distance matrix over the inference doculects, including the
/// computed self-distances on the diagonal (each row's minimum when the
/// scoring model is sane).
pub fn distance_matrix(d: &Dataset, m: &ScoringModel) -> Result<PmiDistanceMatrix> {
    let docs = d.inference_doculects();
    let n = docs.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .collect();
    let cells: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| pmi_distance(docs[i], docs[j], m))
        .collect();
    let mut distances = vec![0.0; n * n];
    for (&(i, j), cell) in pairs.iter().zip(cells) {
        let v = cell?;
        distances[i * n + j] = v;
        distances[j * n + i] = v;
    }
    Ok(PmiDistanceMatrix {
        ids: docs.iter().map(|x| x.id.clone()).collect(),
        distances,
    })
}

/// Empirical null distribution of PMI distances between unrelated pairs.
#[derive(Debug, Clone)]
pub struct NullModel {
    /// Sorted ascending.
    sample: Vec<f64>,
    /// Scale of the exponential extrapolation below the sample minimum.
    tail_scale: f64,
}

impl NullModel {
    pub fn sample(&self) -> &[f64] {
        &self.sample
    }
}

/// Fit the null model from distances of known-unrelated doculect pairs.
pub fn fit_null(unrelated_distances: &[f64]) -> Result<NullModel> {
    if unrelated_distances.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "null model needs >= 100 samples, got {}",
            unrelated_distances.len()
        )));
    }
    let mut sample = unrelated_distances.to_vec();
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite null distance".into()));
    }
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Exponential tail scale: shifted-exponential MLE over the order
    // statistics nearest the minimum. The extrapolation approximates the
    // local hazard at the extreme left, so only the closest points belong
    // in the estimate; averaging over a wider slice would inherit the
    // (typically much flatter) body of the distribution.
    let k = (sample.len() / 500).clamp(5, 20).min(sample.len());
    let x0 = sample[0];
    let mut scale = sample[..k].iter().map(|v| v - x0).sum::<f64>() / k as f64;
    if scale <= 0.0 {
        scale = 1e-6;
    }
    Ok(NullModel {
        sample,
        tail_scale: scale,
    })
}

impl NullModel {
    /// Interpolated empirical CDF with plug-in ranks k/(n+1) and an
    /// exponential lower tail below the sample minimum.
    pub fn cdf(&self, d: f64) -> f64 {
        let n = self.sample.len();
        let nf = n as f64;
        let x0 = self.sample[0];
        if d < x0 {
            return (1.0 / (nf + 1.0)) * ((d - x0) / self.tail_scale).exp();
        }
        let last = self.sample[n - 1];
        if d >= last {
            return (nf / (nf + 1.0)).min(1.0);
        }
        // index of first element > d
        let hi = self.sample.partition_point(|&w| w <= d);
        // interpolate between rank hi and hi+1 over [sample[hi-1], sample[hi]]
        let (x_lo, x_hi) = (self.sample[hi - 1], self.sample[hi]);
        let (p_lo, p_hi) = (hi as f64 / (nf + 1.0), (hi as f64 + 1.0) / (nf + 1.0));
        if x_hi > x_lo {
            p_lo + (p_hi - p_lo) * (d - x_lo) / (x_hi - x_lo)
        } else {
            p_lo
        }
    }
}

/// Holm-Bonferroni step-down adjustment. Returns adjusted p-values in the
/// input order.
pub fn holm_bonferroni(pvalues: &[f64]) -> Vec<f64> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running_max = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * pvalues[idx]).min(1.0);
        running_max = running_max.max(scaled);
        adjusted[idx] = running_max;
    }
    adjusted
}

/// One row of the relatedness verdict table.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub a: String,
    pub b: String,
    pub distance: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub related: bool,
}

/// Test every pair of the distance matrix against the null model at level
/// `alpha`, Holm-Bonferroni corrected over all pairs.
pub fn relatedness_test(
    targets: &PmiDistanceMatrix,
    null: &NullModel,
    alpha: f64,
) -> Vec<Verdict> {
    let n = targets.ids.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j, targets.get(i, j)));
        }
    }
    let raw: Vec<f64> = pairs.iter().map(|&(_, _, d)| null.cdf(d)).collect();
    let adjusted = holm_bonferroni(&raw);
    pairs
        .iter()
        .zip(raw.iter().zip(adjusted.iter()))
        .map(|(&(i, j, d), (&p, &padj))| Verdict {
            a: targets.ids[i].clone(),
            b: targets.ids[j].clone(),
            distance: d,
            p_raw: p,
            p_adjusted: padj,
            related: padj < alpha,
        })
        .collect()
}

pub fn verdicts_to_tsv(verdicts: &[Verdict]) -> String {
    let mut out = String::from("doculect_a\tdoculect_b\tdistance\tp_raw\tp_adjusted\tverdict\n");
    for v in verdicts {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            v.a,
            v.b,
            v.distance,
            v.p_raw,
            v.p_adjusted,
            if v.related { "related" } else { "unrelated" }
        ));
    }
    out
}

/// Simulate unrelated pairs by permuting concept-word assignments inside
/// two randomly chosen doculects, and collect their PMI distances.
pub fn permutation_null_distances(
    d: &Dataset,
    m: &ScoringModel,
    count: usize,
    seed: u64,
    stream_index: u64,
) -> Result<Vec<f64>> {
    let docs = d.inference_doculects();
    if docs.len() < 2 {
        return Err(Error::InsufficientData("need two doculects".into()));
    }
    let mut rng = substream(seed, Stream::RelateNull, stream_index);
    let mut jobs: Vec<(Doculect, Doculect)> = Vec::with_capacity(count);
    for _ in 0..count {
        let i = rng.gen_range(0..docs.len());
        let j = loop {
            let j = rng.gen_range(0..docs.len());
            if j != i {
                break j;
            }
        };
        jobs.push((permute_words(docs[i], &mut rng), permute_words(docs[j], &mut rng)));
    }
    let distances: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|(a, b)| pmi_distance(a, b, m))
        .collect();
    distances.into_iter().collect()
}

fn permute_words(doc: &Doculect, rng: &mut ChaCha12Rng) -> Doculect {
    let defined: Vec<usize> = doc.defined_concepts().collect();
    let mut shuffled = defined.clone();
    shuffled.shuffle(rng);
    let mut out = doc.clone();
    for (&from, &to) in defined.iter().zip(shuffled.iter()) {
        out.entries[to] = doc.entries[from].clone();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holm_matches_hand_computed_example() {
        let adjusted = holm_bonferroni(&[0.001, 0.00001]);
        assert!((adjusted[0] - 0.001).abs() < 1e-15);
        assert!((adjusted[1] - 0.00002).abs() < 1e-15);
    }

    #[test]
    fn holm_single_test_is_identity() {
        let adjusted = holm_bonferroni(&[0.00005]);
        assert!((adjusted[0] - 0.00005).abs() < 1e-18);
        // verdict at alpha = 1e-4: related
        assert!(adjusted[0] < 1e-4);
    }

    #[test]
    fn holm_never_beats_bonferroni_and_is_monotone() {
        let ps = [0.04, 0.001, 0.03, 0.0005, 0.2];
        let adj = holm_bonferroni(&ps);
        let m = ps.len() as f64;
        for (p, a) in ps.iter().zip(adj.iter()) {
            assert!(*a >= *p);
            assert!(*a <= (p * m).min(1.0) + 1e-15);
        }
        // reordering invariance
        let perm = [4usize, 2, 0, 1, 3];
        let ps2: Vec<f64> = perm.iter().map(|&i| ps[i]).collect();
        let adj2 = holm_bonferroni(&ps2);
        for (k, &i) in perm.iter().enumerate() {
            assert!((adj2[k] - adj[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn null_cdf_plug_in_ranks() {
        let xs: Vec<f64> = (1..=199).map(|i| i as f64).collect();
        let null = fit_null(&xs).unwrap();
        let n = xs.len() as f64;
        assert!((null.cdf(1.0) - 1.0 / (n + 1.0)).abs() < 1e-12);
        // median of 1..=199 is 100, rank 100 -> 100/200 = 0.5
        assert!((null.cdf(100.0) - 0.5).abs() < 1.0 / n + 1e-9);
        // monotone and bounded
        let mut prev = 0.0;
        for i in 0..400 {
            let d = i as f64 * 0.5;
            let c = null.cdf(d);
            assert!((0.0..=1.0).contains(&c));
            assert!(c >= prev - 1e-15);
            prev = c;
        }
    }

    #[test]
    fn null_lower_tail_decays_exponentially() {
        let xs: Vec<f64> = (0..500).map(|i| 1.0 + i as f64 * 0.001).collect();
        let null = fit_null(&xs).unwrap();
        let c1 = null.cdf(0.9);
        let c2 = null.cdf(0.8);
        assert!(c1 > 0.0 && c2 > 0.0);
        assert!(c2 < c1, "further below minimum must be less likely");
        let ratio = (c1 / c2).ln();
        assert!((ratio - 0.1 / null.tail_scale).abs() < 1e-9);
    }

    #[test]
    fn fit_null_requires_enough_samples() {
        assert!(fit_null(&[1.0; 99]).is_err());
        assert!(fit_null(&[1.0; 100]).is_ok());
    }

    #[test]
    fn held_out_half_gives_uniform_cdf_values() {
        // Simulated null: Box-Muller normal(1, 0.1) distances; fit on one
        // half, transform the other half, test uniformity.
        let mut state = 424242u64;
        let mut rnd = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64).max(1e-12)
        };
        let mut draws = Vec::with_capacity(4000);
        for _ in 0..2000 {
            let (u1, u2) = (rnd(), rnd());
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            draws.push(1.0 + 0.1 * r * theta.cos());
            draws.push(1.0 + 0.1 * r * theta.sin());
        }
        let (fit_half, held_out) = draws.split_at(2000);
        let null = fit_null(fit_half).unwrap();
        let pvals: Vec<f64> = held_out.iter().map(|&d| null.cdf(d)).collect();
        let p = crate::mathx::ks_uniform_pvalue(&pvals);
        assert!(p > 0.01, "KS p = {p}");
    }
}
