//! Tree likelihood for binary characters: pruning over the tree with
//! per-kind CTMC parameters, 4-category gamma rate mixing, and an
//! ascertainment correction for unobservable all-0 characters.
//!
//! Characters are grouped by (kind, concept): all characters of a group
//! share one defined-taxon set, so the all-0 correction is computed once
//! per group. Undefined cells contribute a flat (1,1) partial, which is
//! how missing entries stay out of the likelihood.

use rayon::prelude::*;

use crate::chars::{CharacterKind, CharacterMatrix, UNDEF};
use crate::phylo::ctmc::{transition_matrix, CtmcParams, GammaRates, GAMMA_CATEGORIES};
use crate::tree::Tree;
use crate::{Error, Result};

/// Kind index of class-label characters.
pub const KIND_CLASS_LABEL: usize = 0;
/// Kind index of soundclass-concept characters.
pub const KIND_SOUNDCLASS: usize = 1;

/// Free parameters of one character kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KindParams {
    pub pi1: f64,
    pub shape: f64,
}

impl KindParams {
    pub fn derive(&self) -> Result<(CtmcParams, GammaRates)> {
        Ok((
            CtmcParams::from_equilibrium(self.pi1)?,
            GammaRates::discretize(self.shape)?,
        ))
    }
}

/// Characters sharing one kind and one defined-taxon set.
#[derive(Debug, Clone)]
pub struct CharGroup {
    pub kind: usize,
    /// Defined flag per matrix row.
    pub defined: Vec<bool>,
    /// Cells per character, indexed by matrix row (0, 1, UNDEF).
    pub chars: Vec<Vec<u8>>,
    /// Character display names, for diagnostics.
    pub names: Vec<String>,
}

/// The likelihood-ready view of a character matrix.
#[derive(Debug, Clone)]
pub struct CharData {
    pub taxa: Vec<String>,
    pub groups: Vec<CharGroup>,
}

impl CharData {
    pub fn from_matrix(m: &CharacterMatrix) -> CharData {
        let mut groups: Vec<CharGroup> = Vec::new();
        // Columns are sorted by (concept, kind, payload); consecutive runs
        // with equal (concept, kind) become one group.
        let mut current: Option<(usize, CharacterKind)> = None;
        for col in &m.columns {
            let key = (col.id.concept, col.id.kind);
            if current != Some(key) {
                current = Some(key);
                groups.push(CharGroup {
                    kind: match col.id.kind {
                        CharacterKind::ClassLabel => KIND_CLASS_LABEL,
                        CharacterKind::SoundclassConcept => KIND_SOUNDCLASS,
                    },
                    defined: col.cells.iter().map(|&v| v != UNDEF).collect(),
                    chars: Vec::new(),
                    names: Vec::new(),
                });
            }
            let g = groups.last_mut().expect("group exists");
            debug_assert_eq!(
                g.defined,
                col.cells.iter().map(|&v| v != UNDEF).collect::<Vec<_>>(),
                "characters of one concept share the defined set"
            );
            g.chars.push(col.cells.clone());
            g.names.push(col.id.display(&m.concepts));
        }
        CharData {
            taxa: m.doculects.clone(),
            groups,
        }
    }

    pub fn n_chars(&self) -> usize {
        self.groups.iter().map(|g| g.chars.len()).sum()
    }
}

/// Per-evaluation tables: transition matrices for every (kind, node,
/// category) plus the taxon-to-row map.
pub struct TreeTables<'t> {
    pub tree: &'t Tree,
    post: Vec<usize>,
    taxon_to_row: Vec<usize>,
    pmat: [Vec<[[[f64; 2]; 2]; GAMMA_CATEGORIES]>; 2],
    derived: [(CtmcParams, GammaRates); 2],
}

impl<'t> TreeTables<'t> {
    pub fn new(tree: &'t Tree, data: &CharData, kinds: &[KindParams; 2]) -> Result<Self> {
        if tree.taxa.len() != data.taxa.len() {
            return Err(Error::Validation(format!(
                "tree has {} taxa, matrix has {}",
                tree.taxa.len(),
                data.taxa.len()
            )));
        }
        let mut taxon_to_row = Vec::with_capacity(tree.taxa.len());
        for name in &tree.taxa {
            let row = data
                .taxa
                .iter()
                .position(|t| t == name)
                .ok_or_else(|| Error::Validation(format!("taxon \"{name}\" not in matrix")))?;
            taxon_to_row.push(row);
        }
        let derived = [kinds[0].derive()?, kinds[1].derive()?];
        let post = tree.post_order();
        let n = tree.nodes.len();
        let mut pmat = [vec![Default::default(); n], vec![Default::default(); n]];
        for kind in 0..2 {
            let (ctmc, gamma) = &derived[kind];
            let table: &mut Vec<[[[f64; 2]; 2]; GAMMA_CATEGORIES]> = &mut pmat[kind];
            for &node in &post {
                if node == tree.root {
                    continue;
                }
                let t = tree.nodes[node].length;
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::Numeric(format!("bad branch length {t}")));
                }
                for (c, &mult) in gamma.multipliers.iter().enumerate() {
                    table[node][c] = transition_matrix(ctmc, t, mult);
                }
            }
        }
        Ok(TreeTables {
            tree,
            post,
            taxon_to_row,
            pmat,
            derived,
        })
    }

    pub fn equilibrium(&self, kind: usize) -> (f64, f64) {
        let ctmc = &self.derived[kind].0;
        (ctmc.pi0, ctmc.pi1)
    }

    /// One pruning pass for one gamma category. `cells` is indexed by
    /// matrix row; `clamp` fixes a node's state. Returns ln L.
    fn prune_category(
        &self,
        kind: usize,
        cat: usize,
        cells: &[u8],
        clamp: Option<(usize, u8)>,
        partial: &mut [[f64; 2]],
    ) -> f64 {
        const SCALE_FLOOR: f64 = 1e-260;
        const SCALE: f64 = 1e260;
        let ln_scale = SCALE.ln();
        let mut log_offset = 0.0;
        let tree = self.tree;
        for &node in &self.post {
            let mut p = [1.0f64, 1.0];
            if let Some(t) = tree.nodes[node].taxon {
                match cells[self.taxon_to_row[t]] {
                    0 => p[1] = 0.0,
                    1 => p[0] = 0.0,
                    _ => {}
                }
            }
            for &child in &tree.nodes[node].children {
                let m = &self.pmat[kind][child][cat];
                let c = partial[child];
                p[0] *= m[0][0] * c[0] + m[0][1] * c[1];
                p[1] *= m[1][0] * c[0] + m[1][1] * c[1];
            }
            if let Some((cn, cs)) = clamp {
                if cn == node {
                    p[1 - cs as usize] = 0.0;
                }
            }
            if p[0] < SCALE_FLOOR && p[1] < SCALE_FLOOR {
                p[0] *= SCALE;
                p[1] *= SCALE;
                log_offset -= ln_scale;
            }
            partial[node] = p;
        }
        let (pi0, pi1) = self.equilibrium(kind);
        let root = partial[tree.root];
        let lik = pi0 * root[0] + pi1 * root[1];
        lik.ln() + log_offset
    }

    /// Batched pruning: one post-order walk per category handles every
    /// character of a group at once, so the per-node transition matrices
    /// are loaded once per node instead of once per character.
    fn prune_group_category(
        &self,
        group: &CharGroup,
        cat: usize,
        partial: &mut [f64],
        offsets: &mut [f64],
        out: &mut [f64],
    ) {
        const SCALE_FLOOR: f64 = 1e-260;
        const SCALE: f64 = 1e260;
        let ln_scale = SCALE.ln();
        let nc = group.chars.len();
        let width = nc * 2;
        let tree = self.tree;
        offsets.fill(0.0);
        for &node in &self.post {
            let base = node * width;
            // leaf observation indicator (or neutral for internal nodes)
            if let Some(t) = tree.nodes[node].taxon {
                let row = self.taxon_to_row[t];
                for (c, cells) in group.chars.iter().enumerate() {
                    let (p0, p1) = match cells[row] {
                        0 => (1.0, 0.0),
                        1 => (0.0, 1.0),
                        _ => (1.0, 1.0),
                    };
                    partial[base + 2 * c] = p0;
                    partial[base + 2 * c + 1] = p1;
                }
            } else {
                partial[base..base + width].fill(1.0);
            }
            for &child in &tree.nodes[node].children {
                let m = &self.pmat[group.kind][child][cat];
                let (m00, m01, m10, m11) = (m[0][0], m[0][1], m[1][0], m[1][1]);
                let cbase = child * width;
                // disjoint parent/child views let the loop vectorize
                let (lo, hi) = if cbase < base {
                    let (a, b) = partial.split_at_mut(base);
                    (&a[cbase..cbase + width], &mut b[..width])
                } else {
                    let (a, b) = partial.split_at_mut(cbase);
                    let parent = &mut a[base..base + width];
                    // reborrow in the (child above parent) orientation
                    (&b[..width] as &[f64], parent)
                };
                for (p, c) in hi.chunks_exact_mut(2).zip(lo.chunks_exact(2)) {
                    p[0] *= m00 * c[0] + m01 * c[1];
                    p[1] *= m10 * c[0] + m11 * c[1];
                }
            }
            for c in 0..nc {
                let p0 = partial[base + 2 * c];
                let p1 = partial[base + 2 * c + 1];
                if p0 < SCALE_FLOOR && p1 < SCALE_FLOOR {
                    partial[base + 2 * c] = p0 * SCALE;
                    partial[base + 2 * c + 1] = p1 * SCALE;
                    offsets[c] -= ln_scale;
                }
            }
        }
        let (pi0, pi1) = self.equilibrium(group.kind);
        let rbase = tree.root * width;
        for c in 0..nc {
            let lik = pi0 * partial[rbase + 2 * c] + pi1 * partial[rbase + 2 * c + 1];
            out[c] = lik.ln() + offsets[c];
        }
    }

    /// Gamma-mixed ln likelihood of one character (no ascertainment term).
    pub fn char_log_lik(
        &self,
        kind: usize,
        cells: &[u8],
        clamp: Option<(usize, u8)>,
        partial: &mut [[f64; 2]],
    ) -> f64 {
        let mut cat_ll = [0.0f64; GAMMA_CATEGORIES];
        for (c, ll) in cat_ll.iter_mut().enumerate() {
            *ll = self.prune_category(kind, c, cells, clamp, partial);
        }
        log_mean_exp(&cat_ll)
    }

    /// ln Pr[all defined cells are 0] for a group (gamma-mixed).
    pub fn all_zero_log_prob(&self, group: &CharGroup, partial: &mut [[f64; 2]]) -> f64 {
        let cells: Vec<u8> = group
            .defined
            .iter()
            .map(|&d| if d { 0 } else { UNDEF })
            .collect();
        self.char_log_lik(group.kind, &cells, None, partial)
    }

    /// Ascertainment-corrected ln likelihood of a whole group.
    pub fn group_log_lik(&self, group: &CharGroup) -> Result<f64> {
        let mut partial = vec![[0.0f64; 2]; self.tree.nodes.len()];
        let ln_a = self.all_zero_log_prob(group, &mut partial);
        let a = ln_a.exp();
        if !(a < 1.0 - 1e-15) {
            return Err(Error::Numeric(format!(
                "ascertainment correction degenerate: Pr[all-0] = {a}"
            )));
        }
        let ln_denom = (1.0 - a).ln();

        let nc = group.chars.len();
        let mut batched = vec![0.0f64; self.tree.nodes.len() * nc * 2];
        let mut offsets = vec![0.0f64; nc];
        let mut cat_out = vec![0.0f64; nc];
        let mut per_char = vec![[f64::NEG_INFINITY; GAMMA_CATEGORIES]; nc];
        for cat in 0..GAMMA_CATEGORIES {
            self.prune_group_category(group, cat, &mut batched, &mut offsets, &mut cat_out);
            for c in 0..nc {
                per_char[c][cat] = cat_out[c];
            }
        }
        let mut total = 0.0;
        for (i, cats) in per_char.iter().enumerate() {
            let ll = log_mean_exp(cats);
            if !ll.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite likelihood for character {}",
                    group.names[i]
                )));
            }
            total += ll - ln_denom;
        }
        Ok(total)
    }

    /// Total corrected ln likelihood over all groups, deterministic
    /// (parallel map preserves order, summation is sequential).
    pub fn total_log_lik(&self, data: &CharData) -> Result<f64> {
        let per_group: Vec<Result<f64>> = data
            .groups
            .par_iter()
            .map(|g| self.group_log_lik(g))
            .collect();
        let mut total = 0.0;
        for r in per_group {
            total += r?;
        }
        Ok(total)
    }

    /// Total for only the groups of one kind.
    pub fn kind_log_lik(&self, data: &CharData, kind: usize) -> Result<f64> {
        let per_group: Vec<Result<f64>> = data
            .groups
            .par_iter()
            .filter(|g| g.kind == kind)
            .map(|g| self.group_log_lik(g))
            .collect();
        let mut total = 0.0;
        for r in per_group {
            total += r?;
        }
        Ok(total)
    }
}

fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + (s / xs.len() as f64).ln()
}

/// Ascertainment-corrected, gamma-mixed log likelihood of a character
/// matrix on a tree, with separate parameters per character kind.
pub fn log_likelihood(
    tree: &Tree,
    chars: &CharacterMatrix,
    kinds: &[KindParams; 2],
) -> Result<f64> {
    let data = CharData::from_matrix(chars);
    let tables = TreeTables::new(tree, &data, kinds)?;
    tables.total_log_lik(&data)
}
