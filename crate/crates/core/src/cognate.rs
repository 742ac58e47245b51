//! Cognate clustering: a logistic model predicting synonymy from PMI
//! similarity, one weighted graph per concept, and weighted label
//! propagation over each graph.
//!
//! Words of different concepts never share a class label; labels are
//! compacted per concept in order of first appearance over doculect-sorted
//! vertices, so a fixed seed yields identical labelings everywhere.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::align::{pmi_similarity, ScoringModel};
use crate::corpus::Dataset;
use crate::rngx::{substream, Stream};
use crate::{Error, Result};

/// Logistic regression of synonymy on PMI similarity.
#[derive(Debug, Clone, Copy)]
pub struct SynonymyModel {
    pub intercept: f64,
    pub slope: f64,
    /// Set when the data were separable and a ridge fallback was used.
    pub regularized: bool,
}

impl SynonymyModel {
    pub fn probability(&self, similarity: f64) -> f64 {
        let z = self.intercept + self.slope * similarity;
        1.0 / (1.0 + (-z).exp())
    }
}

/// Default cap on sampled non-synonymous pairs for the logistic fit.
///
/// The cap is a memory guard. It also acts as the synonymy prior of the
/// fitted model: edges exist where predicted probability reaches 0.5, so
/// sampling far fewer non-synonymous pairs than exist drags the decision
/// boundary below the similarity range of chance resemblances and merges
/// whole concepts into single classes. The default exceeds the non-
/// synonymous pair population of a 40-concept, ~50-doculect dataset, so
/// at that scale the fit sees every pair.
pub const NONSYN_CAP: usize = 4_000_000;

/// Collect (similarity, is_synonymous) training pairs. Synonymous pairs are
/// all cross-doculect pairs per concept; non-synonymous pairs are sampled
/// down to `cap` with the given seed.
pub fn synonymy_training_pairs(
    d: &Dataset,
    m: &ScoringModel,
    cap: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let docs = d.inference_doculects();
    let n_concepts = d.concepts.len();

    let mut syn: Vec<(usize, usize, usize, usize)> = Vec::new();
    for c in 0..n_concepts {
        for i in 0..docs.len() {
            if docs[i].entries[c].is_none() {
                continue;
            }
            for j in i + 1..docs.len() {
                if docs[j].entries[c].is_some() {
                    syn.push((i, c, j, c));
                }
            }
        }
    }

    let mut rng = substream(seed, Stream::ClusterSubsample, 0);
    let mut nonsyn: Vec<(usize, usize, usize, usize)> = Vec::new();
    // Reservoir sample over unordered cross-doculect, cross-concept word
    // pairs (both concept orders are distinct word pairs).
    let mut seen = 0usize;
    for ca in 0..n_concepts {
        for cb in 0..n_concepts {
            if ca == cb {
                continue;
            }
            for i in 0..docs.len() {
                if docs[i].entries[ca].is_none() {
                    continue;
                }
                for j in (i + 1)..docs.len() {
                    if docs[j].entries[cb].is_none() {
                        continue;
                    }
                    seen += 1;
                    if nonsyn.len() < cap {
                        nonsyn.push((i, ca, j, cb));
                    } else {
                        let k = rng.gen_range(0..seen);
                        if k < cap {
                            nonsyn[k] = (i, ca, j, cb);
                        }
                    }
                }
            }
        }
    }

    let score = |(i, ca, j, cb): &(usize, usize, usize, usize)| {
        pmi_similarity(
            docs[*i].entries[*ca].as_ref().unwrap(),
            docs[*j].entries[*cb].as_ref().unwrap(),
            m,
        )
    };
    let mut xs: Vec<f64> = syn.par_iter().map(score).collect();
    let mut ys = vec![1.0; xs.len()];
    let neg: Vec<f64> = nonsyn.par_iter().map(score).collect();
    ys.extend(std::iter::repeat(0.0).take(neg.len()));
    xs.extend(neg);
    (xs, ys)
}

fn irls_fit(xs: &[f64], ys: &[f64], ridge: f64) -> (f64, f64, bool) {
    let n = xs.len() as f64;
    let mut b0 = (ys.iter().sum::<f64>() / n).clamp(1e-6, 1.0 - 1e-6);
    b0 = (b0 / (1.0 - b0)).ln();
    let mut b1 = 0.0f64;
    let mut converged = false;
    for _ in 0..100 {
        let mut g0 = -ridge * b0;
        let mut g1 = -ridge * b1;
        let (mut h00, mut h01, mut h11) = (ridge, 0.0, ridge);
        for (&x, &y) in xs.iter().zip(ys.iter()) {
            let p = 1.0 / (1.0 + (-(b0 + b1 * x)).exp());
            let r = y - p;
            let w = (p * (1.0 - p)).max(1e-12);
            g0 += r;
            g1 += r * x;
            h00 += w;
            h01 += w * x;
            h11 += w * x * x;
        }
        let det = h00 * h11 - h01 * h01;
        if det.abs() < 1e-30 {
            break;
        }
        let d0 = (g0 * h11 - g1 * h01) / det;
        let d1 = (g1 * h00 - g0 * h01) / det;
        b0 += d0;
        b1 += d1;
        if (g0 * g0 + g1 * g1).sqrt() < 1e-8 {
            converged = true;
            break;
        }
        if !b0.is_finite() || !b1.is_finite() || b0.abs() > 1e6 || b1.abs() > 1e6 {
            return (f64::NAN, f64::NAN, false);
        }
    }
    (b0, b1, converged)
}

/// Maximum-likelihood logistic fit of synonymy on similarity, by iteratively
/// reweighted least squares. Falls back to a weak ridge (1e-6) when the data
/// are perfectly separable.
pub fn fit_synonymy_model(xs: &[f64], ys: &[f64]) -> Result<SynonymyModel> {
    let pos = ys.iter().filter(|&&y| y == 1.0).count();
    let neg = ys.len() - pos;
    if pos < 1000 || neg < 1000 {
        return Err(Error::InsufficientData(format!(
            "logistic fit needs >= 1000 pairs of each kind, got {pos} synonymous / {neg} non-synonymous"
        )));
    }
    let (b0, b1, converged) = irls_fit(xs, ys, 0.0);
    if converged && b0.is_finite() {
        return Ok(SynonymyModel {
            intercept: b0,
            slope: b1,
            regularized: false,
        });
    }
    eprintln!("warning: logistic fit did not converge (separable data?); refitting with ridge 1e-6");
    let (b0, b1, _) = irls_fit(xs, ys, 1e-6);
    if !b0.is_finite() {
        return Err(Error::Numeric("ridge logistic fit diverged".into()));
    }
    Ok(SynonymyModel {
        intercept: b0,
        slope: b1,
        regularized: true,
    })
}

/// Convenience wrapper: build training pairs from the dataset and fit.
pub fn fit_synonymy_model_on(
    d: &Dataset,
    m: &ScoringModel,
    cap: usize,
    seed: u64,
) -> Result<SynonymyModel> {
    let (xs, ys) = synonymy_training_pairs(d, m, cap, seed);
    fit_synonymy_model(&xs, &ys)
}

/// Weighted graph over the words of one concept. Vertices are doculects
/// (one word each); edges exist where predicted synonymy probability is at
/// least 0.5, weighted by that probability.
#[derive(Debug, Clone)]
pub struct CognateGraph {
    pub concept: usize,
    /// Doculect ids of the vertices, sorted.
    pub vertices: Vec<String>,
    /// (i, j, weight) with i < j and weight in [0.5, 1].
    pub edges: Vec<(usize, usize, f64)>,
}

/// Build the cognate graph for one concept. `edge_threshold` is the
/// minimum predicted synonymy probability for an edge (0.5 by default).
pub fn build_cognate_graph(
    concept: usize,
    d: &Dataset,
    m: &ScoringModel,
    syn: &SynonymyModel,
    edge_threshold: f64,
) -> CognateGraph {
    let mut docs: Vec<&crate::corpus::Doculect> = d
        .inference_doculects()
        .into_iter()
        .filter(|doc| doc.entries[concept].is_some())
        .collect();
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    let vertices: Vec<String> = docs.iter().map(|doc| doc.id.clone()).collect();
    let mut edges = Vec::new();
    for i in 0..docs.len() {
        for j in i + 1..docs.len() {
            let s = pmi_similarity(
                docs[i].entries[concept].as_ref().unwrap(),
                docs[j].entries[concept].as_ref().unwrap(),
                m,
            );
            let p = syn.probability(s);
            if p >= edge_threshold {
                edges.push((i, j, p));
            }
        }
    }
    CognateGraph {
        concept,
        vertices,
        edges,
    }
}

/// Weighted label propagation with a seeded asynchronous schedule.
///
/// Every vertex starts with its own label; sweeps visit vertices in a fresh
/// seeded shuffle, each vertex adopting the label with maximal summed
/// incident edge weight (ties to the smallest label id). Stops when a sweep
/// changes nothing, or after 100 sweeps with a warning. Final labels are
/// compacted to consecutive integers in order of first appearance.
pub fn label_propagation(g: &CognateGraph, seed: u64) -> BTreeMap<String, u32> {
    let n = g.vertices.len();
    let mut rng = substream(seed, Stream::LabelPropagation, g.concept as u64);
    let mut labels: Vec<usize> = (0..n).collect();

    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, w) in &g.edges {
        adj[i].push((j, w));
        adj[j].push((i, w));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut converged = false;
    for _sweep in 0..100 {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &v in &order {
            if adj[v].is_empty() {
                continue;
            }
            let mut mass: BTreeMap<usize, f64> = BTreeMap::new();
            for &(u, w) in &adj[v] {
                *mass.entry(labels[u]).or_insert(0.0) += w;
            }
            // max by weight, ties to smallest label id (BTreeMap order)
            let (&best, _) = mass
                .iter()
                .max_by(|(la, wa), (lb, wb)| {
                    wa.partial_cmp(wb)
                        .unwrap()
                        .then_with(|| lb.cmp(la))
                })
                .expect("nonempty neighborhood");
            if best != labels[v] {
                labels[v] = best;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        eprintln!(
            "warning: label propagation did not converge in 100 sweeps (concept {})",
            g.concept
        );
    }

    // Compact in first-appearance order over doculect-sorted vertices.
    let mut next = 0u32;
    let mut mapping: BTreeMap<usize, u32> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (v, doc) in g.vertices.iter().enumerate() {
        let compact = *mapping.entry(labels[v]).or_insert_with(|| {
            let l = next;
            next += 1;
            l
        });
        out.insert(doc.clone(), compact);
    }
    out
}

/// Class labels for every concept: `assignments[c][doculect] = label`.
#[derive(Debug, Clone)]
pub struct CognateClasses {
    pub assignments: Vec<BTreeMap<String, u32>>,
}

impl CognateClasses {
    /// One output row per word: (doculect, concept, word, class label).
    pub fn to_tsv(&self, d: &Dataset) -> String {
        let mut out = String::from("doculect\tconcept\tword\tclass_label\n");
        for (c, concept) in d.concepts.iter().enumerate() {
            for (doc, label) in &self.assignments[c] {
                let word = d
                    .doculect(doc)
                    .and_then(|x| x.entries[c].as_ref())
                    .map(|w| w.to_string())
                    .unwrap_or_default();
                out.push_str(&format!("{doc}\t{concept}\t{word}\t{label}\n"));
            }
        }
        out
    }
}

/// Cluster every concept of the dataset.
pub fn cluster_dataset(
    d: &Dataset,
    m: &ScoringModel,
    syn: &SynonymyModel,
    edge_threshold: f64,
    seed: u64,
) -> CognateClasses {
    let assignments: Vec<BTreeMap<String, u32>> = (0..d.concepts.len())
        .into_par_iter()
        .map(|c| {
            let g = build_cognate_graph(c, d, m, syn, edge_threshold);
            label_propagation(&g, seed)
        })
        .collect();
    CognateClasses { assignments }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_fit_crosses_half_at_threshold() {
        // Separable-ish data with noise: synonymy mostly above sim 5.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..2000 {
            let x = i as f64 / 100.0; // 0..20
            xs.push(x);
            // noisy threshold at 5 with a soft band
            let y = if x > 5.0 { 1.0 } else { 0.0 };
            ys.push(y);
            // add overlap so the fit is not separable
            xs.push(x);
            ys.push(if x > 4.0 && i % 7 == 0 { 1.0 - y } else { y });
        }
        let m = fit_synonymy_model(&xs, &ys).unwrap();
        assert!(m.slope > 0.0);
        let cross = -m.intercept / m.slope;
        assert!((4.0..6.0).contains(&cross), "crossing at {cross}");
        assert!((m.probability(cross) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn logistic_fit_matches_gradient_descent_oracle() {
        // Fixed synthetic set with deterministic congruential noise. The
        // minimum-pair precondition is bypassed by calling irls_fit directly
        // so the oracle can stay small.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut state = 12345u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let x = rnd() * 10.0;
            let p = 1.0 / (1.0 + (-(x - 5.0)).exp());
            xs.push(x);
            ys.push(if rnd() < p { 1.0 } else { 0.0 });
        }
        let (b0_irls, b1_irls, converged) = irls_fit(&xs, &ys, 0.0);
        assert!(converged);

        // Gradient ascent on mean-centered similarity (same optimum, better
        // conditioning), mapped back afterwards.
        let n = xs.len() as f64;
        let xbar = xs.iter().sum::<f64>() / n;
        let (mut a0, mut a1) = (0.0f64, 0.0f64);
        for _ in 0..1_000_000 {
            let (mut g0, mut g1) = (0.0, 0.0);
            for (&x, &y) in xs.iter().zip(ys.iter()) {
                let z = x - xbar;
                let p = 1.0 / (1.0 + (-(a0 + a1 * z)).exp());
                g0 += y - p;
                g1 += (y - p) * z;
            }
            a0 += 0.3 * g0 / n;
            a1 += 0.3 * g1 / n;
            if (g0 * g0 + g1 * g1).sqrt() < 1e-11 {
                break;
            }
        }
        let b1 = a1;
        let b0 = a0 - a1 * xbar;
        assert!((b0_irls - b0).abs() < 1e-4, "{b0_irls} vs {b0}");
        assert!((b1_irls - b1).abs() < 1e-4, "{b1_irls} vs {b1}");
    }

    #[test]
    fn logistic_fit_requires_enough_pairs() {
        let xs = vec![1.0; 100];
        let ys = vec![1.0; 100];
        assert!(fit_synonymy_model(&xs, &ys).is_err());
    }

    fn graph(vertices: usize, edges: &[(usize, usize, f64)]) -> CognateGraph {
        CognateGraph {
            concept: 0,
            vertices: (0..vertices).map(|i| format!("D{i:02}")).collect(),
            edges: edges.to_vec(),
        }
    }

    #[test]
    fn edgeless_graph_keeps_singleton_labels() {
        let g = graph(5, &[]);
        let labels = label_propagation(&g, 3);
        let distinct: std::collections::BTreeSet<u32> = labels.values().copied().collect();
        assert_eq!(distinct.len(), 5);
    }

    #[test]
    fn two_cliques_with_weak_bridge_stay_separate() {
        // Two 4-cliques joined by a single 0.5 edge: propagation settles on
        // one label per clique (verified by exhausting the 8-vertex graph:
        // each bridge endpoint has 3 same-clique neighbors at weight 0.9
        // against one 0.5 cross edge).
        let mut edges = Vec::new();
        for a in 0..4 {
            for b in (a + 1)..4 {
                edges.push((a, b, 0.9));
                edges.push((a + 4, b + 4, 0.9));
            }
        }
        edges.push((3, 4, 0.5));
        let g = graph(8, &edges);
        let labels = label_propagation(&g, 99);
        let left: std::collections::BTreeSet<u32> =
            (0..4).map(|i| labels[&format!("D{i:02}")]).collect();
        let right: std::collections::BTreeSet<u32> =
            (4..8).map(|i| labels[&format!("D{i:02}")]).collect();
        assert_eq!(left.len(), 1);
        assert_eq!(right.len(), 1);
        assert_ne!(left, right);
    }

    #[test]
    fn label_propagation_is_deterministic() {
        let mut edges = Vec::new();
        for a in 0..6 {
            for b in (a + 1)..6 {
                if (a + b) % 3 != 0 {
                    edges.push((a, b, 0.5 + 0.05 * (a + b) as f64));
                }
            }
        }
        let g = graph(6, &edges);
        let l1 = label_propagation(&g, 42);
        let l2 = label_propagation(&g, 42);
        assert_eq!(l1, l2);
    }

    #[test]
    fn final_label_is_held_within_component() {
        let g = graph(5, &[(0, 1, 0.8), (1, 2, 0.8), (3, 4, 0.9)]);
        let labels = label_propagation(&g, 5);
        // component {0,1,2} and {3,4}: labels must not leak across
        let a: std::collections::BTreeSet<u32> =
            (0..3).map(|i| labels[&format!("D{i:02}")]).collect();
        let b: std::collections::BTreeSet<u32> =
            (3..5).map(|i| labels[&format!("D{i:02}")]).collect();
        assert!(a.is_disjoint(&b));
    }
}
