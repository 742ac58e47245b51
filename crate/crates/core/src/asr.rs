//! Marginal ancestral state reconstruction.
//!
//! The distribution over a node's state is obtained by clamping the node to
//! each value and evaluating the (gamma-mixed) clamped likelihood, which
//! already carries the equilibrium weight of the root — Bayes rule with the
//! equilibrium distribution as the prior. Averaging root-of-ingroup
//! probabilities over a posterior sample selects the proto cognate class
//! per concept.

use rayon::prelude::*;

use crate::chars::{CharacterKind, CharacterMatrix, Payload, UNDEF};
use crate::phylo::{CharData, KindParams, PosteriorSample, TreeTables, KIND_CLASS_LABEL};
use crate::tree::Tree;
use crate::{Error, Result};

/// Posterior state distribution at one node for one character.
#[derive(Debug, Clone, Copy)]
pub struct NodeStateDistribution {
    pub node: usize,
    pub p0: f64,
    pub p1: f64,
}

/// Marginal distribution of a character's state at `node`, from the two
/// clamped likelihoods. `cells` is indexed like the matrix rows behind
/// `tables`. Errors when the character is undefined at every leaf.
pub fn marginal_state_probs(
    tables: &TreeTables,
    kind: usize,
    cells: &[u8],
    node: usize,
) -> Result<NodeStateDistribution> {
    if cells.iter().all(|&v| v == UNDEF) {
        return Err(Error::Validation(
            "uninformative character at node: undefined at every leaf".into(),
        ));
    }
    let mut partial = vec![[0.0f64; 2]; tables.tree.nodes.len()];
    let l0 = tables.char_log_lik(kind, cells, Some((node, 0)), &mut partial);
    let l1 = tables.char_log_lik(kind, cells, Some((node, 1)), &mut partial);
    let m = l0.max(l1);
    if !m.is_finite() {
        return Err(Error::Numeric("both clamped likelihoods vanished".into()));
    }
    let e0 = (l0 - m).exp();
    let e1 = (l1 - m).exp();
    let p1 = e1 / (e0 + e1);
    Ok(NodeStateDistribution {
        node,
        p0: 1.0 - p1,
        p1,
    })
}

/// The child of the root on the ingroup side of an outgroup-rooted tree.
pub fn ingroup_ancestor(tree: &Tree, outgroup: &[String]) -> Result<usize> {
    let mut og_mask = 0u64;
    for name in outgroup {
        let t = tree
            .taxa
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| Error::Tree(format!("unknown outgroup taxon \"{name}\"")))?;
        og_mask |= 1 << t;
    }
    let masks = tree.clade_masks();
    let root_children = &tree.nodes[tree.root].children;
    if root_children.len() != 2 {
        return Err(Error::Tree("tree is not rooted (root degree != 2)".into()));
    }
    root_children
        .iter()
        .copied()
        .find(|&c| masks[c] & og_mask == 0)
        .ok_or_else(|| Error::Tree("no root child is free of outgroup taxa".into()))
    }

/// Root every posterior tree with the outgroup; entries where the outgroup
/// is not monophyletic are skipped and counted.
pub fn root_sample(
    sample: &PosteriorSample,
    outgroup: &[String],
) -> (Vec<(Tree, [KindParams; 2])>, usize) {
    let mut rooted = Vec::with_capacity(sample.entries.len());
    let mut skipped = 0;
    for e in &sample.entries {
        match e.tree.root_with_outgroup(outgroup) {
            Ok(t) => rooted.push((t, e.kinds)),
            Err(_) => skipped += 1,
        }
    }
    (rooted, skipped)
}

/// Chosen proto cognate class for one concept.
#[derive(Debug, Clone)]
pub struct ProtoClassChoice {
    pub concept: usize,
    pub label: u32,
    pub mean_p1: f64,
    pub runner_up: Option<(u32, f64)>,
}

/// For each concept, the class label with the highest mean probability of
/// presence at the ingroup ancestor across the rooted sample. Ties break
/// to the label attested in more doculects, then to the smaller label id.
/// Concepts without class-label characters are reported separately.
pub fn select_proto_classes(
    rooted: &[(Tree, [KindParams; 2])],
    chars: &CharacterMatrix,
    outgroup: &[String],
) -> Result<(Vec<ProtoClassChoice>, Vec<usize>)> {
    if rooted.is_empty() {
        return Err(Error::InsufficientData("empty rooted sample".into()));
    }
    let data = CharData::from_matrix(chars);
    let label_cols: Vec<(usize, usize, u32)> = chars
        .columns
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match (c.id.kind, c.id.payload) {
            (CharacterKind::ClassLabel, Payload::Label(l)) => Some((i, c.id.concept, l)),
            _ => None,
        })
        .collect();

    // Per entry, p1 of every class-label column at the ingroup ancestor.
    let per_entry: Vec<Result<Vec<f64>>> = rooted
        .par_iter()
        .map(|(tree, kinds)| {
            let tables = TreeTables::new(tree, &data, kinds)?;
            let node = ingroup_ancestor(tree, outgroup)?;
            label_cols
                .iter()
                .map(|&(col, _, _)| {
                    marginal_state_probs(&tables, KIND_CLASS_LABEL, &chars.columns[col].cells, node)
                        .map(|d| d.p1)
                })
                .collect()
        })
        .collect();

    let mut mean = vec![0.0f64; label_cols.len()];
    let mut n_entries = 0usize;
    for r in per_entry {
        let v = r?;
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
        n_entries += 1;
    }
    for m in &mut mean {
        *m /= n_entries as f64;
    }

    let mut choices = Vec::new();
    let mut unreconstructable = Vec::new();
    for concept in 0..chars.concepts.len() {
        let mut cands: Vec<(u32, f64, usize)> = label_cols
            .iter()
            .zip(mean.iter())
            .filter(|((_, c, _), _)| *c == concept)
            .map(|(&(col, _, l), &m)| {
                let attested = chars.columns[col].cells.iter().filter(|&&v| v == 1).count();
                (l, m, attested)
            })
            .collect();
        if cands.is_empty() {
            unreconstructable.push(concept);
            continue;
        }
        cands.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(b.2.cmp(&a.2))
                .then(a.0.cmp(&b.0))
        });
        choices.push(ProtoClassChoice {
            concept,
            label: cands[0].0,
            mean_p1: cands[0].1,
            runner_up: cands.get(1).map(|&(l, m, _)| (l, m)),
        });
    }
    Ok((choices, unreconstructable))
}

pub fn choices_to_tsv(choices: &[ProtoClassChoice], concepts: &[String]) -> String {
    let mut out =
        String::from("concept\tchosen_label\tmean_probability\trunner_up\trunner_up_probability\n");
    for c in choices {
        let (ru, rup) = match c.runner_up {
            Some((l, p)) => (l.to_string(), p.to_string()),
            None => ("-".into(), "-".into()),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            concepts[c.concept], c.label, c.mean_p1, ru, rup
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chars::{Character, CharacterId};
    use crate::phylo::ctmc::{transition_matrix, CtmcParams};
    use crate::tree::parse_newick;

    fn matrix(taxa: &[&str], cols: Vec<(u32, Vec<u8>)>) -> CharacterMatrix {
        CharacterMatrix {
            doculects: taxa.iter().map(|s| s.to_string()).collect(),
            concepts: vec!["c".into()],
            columns: cols
                .into_iter()
                .map(|(l, cells)| Character {
                    id: CharacterId {
                        concept: 0,
                        kind: CharacterKind::ClassLabel,
                        payload: Payload::Label(l),
                    },
                    cells,
                })
                .collect(),
            dropped: Vec::new(),
        }
    }

    fn tables<'a>(
        tree: &'a Tree,
        data: &CharData,
        pi1: f64,
        shape: f64,
    ) -> TreeTables<'a> {
        let kinds = [
            KindParams { pi1, shape },
            KindParams { pi1: 0.5, shape: 1.0 },
        ];
        TreeTables::new(tree, data, &kinds).unwrap()
    }

    #[test]
    fn zero_branches_pin_the_root_state() {
        let m = matrix(&["A", "B"], vec![(0, vec![1, 1])]);
        let t = parse_newick("(A:1e-9,B:1e-9);", &m.doculects).unwrap();
        let data = CharData::from_matrix(&m);
        let tb = tables(&t, &data, 0.4, 1.0);
        let d = marginal_state_probs(&tb, 0, &m.columns[0].cells, t.root).unwrap();
        assert!(d.p1 > 1.0 - 1e-6);
        assert!((d.p0 + d.p1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_leaf_closed_form() {
        // Rooted two-leaf tree, leaves in states (1,0), equal branches t,
        // symmetric rates: p1 = pi1 P11 P10 / sum_x pi_x Px1 Px0.
        let m = matrix(&["A", "B"], vec![(0, vec![1, 0])]);
        let t = 0.37;
        let tree = parse_newick(&format!("(A:{t},B:{t});"), &m.doculects).unwrap();
        let data = CharData::from_matrix(&m);
        // symmetric rates come from pi1 = 0.5; use shape large enough that
        // category multipliers stay near 1 but mixing is still exercised
        let shape = 7.3;
        let tb = tables(&tree, &data, 0.5, shape);
        let d = marginal_state_probs(&tb, 0, &m.columns[0].cells, tree.root).unwrap();

        let ctmc = CtmcParams::from_equilibrium(0.5).unwrap();
        let gamma = crate::phylo::GammaRates::discretize(shape).unwrap();
        let (mut joint1, mut joint0) = (0.0, 0.0);
        for &mult in &gamma.multipliers {
            let p = transition_matrix(&ctmc, t, mult);
            joint1 += 0.5 * p[1][1] * p[1][0] / 4.0;
            joint0 += 0.5 * p[0][1] * p[0][0] / 4.0;
        }
        let expect = joint1 / (joint0 + joint1);
        assert!((d.p1 - expect).abs() < 1e-10, "{} vs {expect}", d.p1);
    }

    #[test]
    fn clamped_sum_recovers_unclamped_at_root() {
        let m = matrix(&["A", "B", "C", "D"], vec![(0, vec![1, 0, UNDEF, 1])]);
        let tree =
            parse_newick("((A:0.3,B:0.5):0.2,(C:0.1,D:0.7):0.4);", &m.doculects).unwrap();
        let data = CharData::from_matrix(&m);
        let tb = tables(&tree, &data, 0.3, 0.9);
        let mut partial = vec![[0.0f64; 2]; tree.nodes.len()];
        let unclamped = tb.char_log_lik(0, &m.columns[0].cells, None, &mut partial);
        let l0 = tb.char_log_lik(0, &m.columns[0].cells, Some((tree.root, 0)), &mut partial);
        let l1 = tb.char_log_lik(0, &m.columns[0].cells, Some((tree.root, 1)), &mut partial);
        let sum = (l0.exp() + l1.exp()).ln();
        assert!((sum - unclamped).abs() < 1e-10);
    }

    #[test]
    fn all_undefined_character_errors() {
        let m = matrix(&["A", "B"], vec![(0, vec![UNDEF, UNDEF])]);
        let t = parse_newick("(A:0.1,B:0.1);", &m.doculects).unwrap();
        let data = CharData::from_matrix(&m);
        let tb = tables(&t, &data, 0.5, 1.0);
        assert!(marginal_state_probs(&tb, 0, &m.columns[0].cells, t.root).is_err());
    }

    #[test]
    fn universal_label_is_selected_with_high_probability() {
        let taxa = ["A", "B", "C", "OUT"];
        let m = matrix(
            &taxa,
            vec![(0, vec![1, 1, 1, 1]), (1, vec![0, 0, 0, 0])],
        );
        // drop the all-0 column as build_characters would
        let m = CharacterMatrix {
            columns: vec![m.columns[0].clone(), {
                let mut c = m.columns[1].clone();
                c.cells = vec![0, 1, 0, 0];
                c
            }],
            ..m
        };
        let tree = parse_newick(
            "(((A:0.1,B:0.1):0.1,C:0.2):0.15,OUT:0.15);",
            &m.doculects,
        )
        .unwrap();
        let kinds = [
            KindParams { pi1: 0.3, shape: 1.0 },
            KindParams { pi1: 0.5, shape: 1.0 },
        ];
        let rooted = vec![(tree, kinds)];
        let (choices, un) =
            select_proto_classes(&rooted, &m, &["OUT".to_string()]).unwrap();
        assert!(un.is_empty());
        assert_eq!(choices.len(), 1);
        assert_eq!(choices[0].label, 0);
        assert!(choices[0].mean_p1 > 0.9);
        assert!(choices[0].runner_up.unwrap().0 == 1);
    }

    #[test]
    fn single_tree_average_equals_single_model_asr() {
        let m = matrix(&["A", "B", "C", "OUT"], vec![(0, vec![1, 0, 1, 0])]);
        let tree = parse_newick(
            "(((A:0.1,B:0.3):0.1,C:0.2):0.15,OUT:0.15);",
            &m.doculects,
        )
        .unwrap();
        let kinds = [
            KindParams { pi1: 0.4, shape: 1.3 },
            KindParams { pi1: 0.5, shape: 1.0 },
        ];
        let data = CharData::from_matrix(&m);
        let tb = TreeTables::new(&tree, &data, &kinds).unwrap();
        let node = ingroup_ancestor(&tree, &["OUT".to_string()]).unwrap();
        let direct = marginal_state_probs(&tb, 0, &m.columns[0].cells, node).unwrap();
        let rooted = vec![(tree.clone(), kinds)];
        let (choices, _) = select_proto_classes(&rooted, &m, &["OUT".to_string()]).unwrap();
        assert!((choices[0].mean_p1 - direct.p1).abs() < 1e-15);
    }
}
