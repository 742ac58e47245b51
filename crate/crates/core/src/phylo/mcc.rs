//! Maximum clade credibility summary of a rooted tree sample.

use std::collections::HashMap;

use crate::tree::Tree;
use crate::{Error, Result};

/// Tabulate clade frequencies over rooted trees and return the sample tree
/// maximizing the product of its clade frequencies, annotated with per-node
/// support. Ties go to the earliest tree in the sample.
pub fn maximum_clade_credibility(sample: &[Tree]) -> Result<Tree> {
    if sample.is_empty() {
        return Err(Error::Validation("empty tree sample".into()));
    }
    let n = sample.len() as f64;
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for t in sample {
        for mask in t.rooted_clades() {
            *counts.entry(mask).or_insert(0) += 1;
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, t) in sample.iter().enumerate() {
        let score: f64 = t
            .rooted_clades()
            .iter()
            .map(|m| (counts[m] as f64 / n).ln())
            .sum();
        if best.map(|(s, _)| score > s).unwrap_or(true) {
            best = Some((score, i));
        }
    }
    let (_, idx) = best.expect("nonempty sample");
    let mut mcc = sample[idx].clone();
    let masks = mcc.clade_masks();
    for node in 0..mcc.nodes.len() {
        if !mcc.nodes[node].is_leaf() {
            let freq = counts[&masks[node]] as f64 / n;
            mcc.nodes[node].support = Some(freq);
        }
    }
    Ok(mcc)
}
