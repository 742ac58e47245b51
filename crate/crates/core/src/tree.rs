//! Phylogenies: arena-backed trees with branch lengths, Newick I/O,
//! outgroup rooting, pruning, and clade bookkeeping.
//!
//! Two shapes occur in the pipeline. The MCMC works on *leaf-rooted*
//! trees: the root is a leaf with exactly one child and every other
//! internal node has two children, a bijective stand-in for unrooted
//! binary topologies. Rooted analyses (ASR, MCC, guide trees) use trees
//! whose root is an internal node of degree two, produced by
//! [`Tree::root_with_outgroup`].

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Error, Result};

/// One tree node. `length` is the branch to the parent (0 for the root).
#[derive(Debug, Clone)]
pub struct Node {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub length: f64,
    /// Taxon index for leaves.
    pub taxon: Option<usize>,
    /// Posterior clade support, set on MCC trees.
    pub support: Option<f64>,
}

impl Node {
    fn bare() -> Node {
        Node {
            parent: None,
            children: Vec::new(),
            length: 0.0,
            taxon: None,
            support: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A phylogeny over a fixed taxon list.
#[derive(Debug, Clone)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub root: usize,
    /// Taxon names; leaves refer to this list by index.
    pub taxa: Vec<String>,
}

impl Tree {
    /// Nodes in post order (children strictly before parents).
    pub fn post_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((n, expanded)) = stack.pop() {
            if expanded {
                order.push(n);
            } else {
                stack.push((n, true));
                for &c in &self.nodes[n].children {
                    stack.push((c, false));
                }
            }
        }
        order
    }

    /// Taxon-bearing nodes. On leaf-rooted trees this includes the root.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].taxon.is_some() && self.reachable(i))
            .collect()
    }

    // Node arenas may keep dead slots after surgery; only reachable nodes count.
    fn reachable(&self, mut n: usize) -> bool {
        let mut hops = 0;
        while let Some(p) = self.nodes[n].parent {
            n = p;
            hops += 1;
            if hops > self.nodes.len() {
                return false;
            }
        }
        n == self.root
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Sum of all branch lengths.
    pub fn tree_length(&self) -> f64 {
        self.post_order()
            .iter()
            .filter(|&&n| n != self.root)
            .map(|&n| self.nodes[n].length)
            .sum()
    }

    /// Taxon-set bitmask below each node (taxa indices as bit positions).
    pub fn clade_masks(&self) -> Vec<u64> {
        assert!(self.taxa.len() <= 64, "clade masks support up to 64 taxa");
        let mut masks = vec![0u64; self.nodes.len()];
        for n in self.post_order() {
            if let Some(t) = self.nodes[n].taxon {
                masks[n] |= 1 << t;
            }
            for &c in &self.nodes[n].children.clone() {
                masks[n] |= masks[c];
            }
        }
        masks
    }

    /// Unrooted splits: for each edge, the side of the split not containing
    /// taxon 0, excluding trivial (single-taxon / all-but-one) splits.
    pub fn splits(&self) -> BTreeSet<u64> {
        let masks = self.clade_masks();
        let full = masks[self.root];
        let mut out = BTreeSet::new();
        for n in 0..self.nodes.len() {
            if n == self.root || !self.reachable(n) {
                continue;
            }
            let below = masks[n];
            let side = if below & 1 == 0 { below } else { full & !below };
            if side.count_ones() >= 2 && (full & !side).count_ones() >= 2 {
                out.insert(side);
            }
        }
        out
    }

    /// Rooted clades (taxon masks of internal nodes, root included).
    pub fn rooted_clades(&self) -> Vec<u64> {
        let masks = self.clade_masks();
        (0..self.nodes.len())
            .filter(|&n| !self.nodes[n].is_leaf() && self.reachable(n))
            .map(|n| masks[n])
            .collect()
    }

    fn require_taxon(&self, name: &str) -> Result<usize> {
        self.taxa
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::Tree(format!("unknown taxon \"{name}\"")))
    }

    /// Place the root on the edge separating `outgroup` from the rest,
    /// splitting that edge at its midpoint. The outgroup must form one
    /// side of an existing split, otherwise the offending leaves are named.
    pub fn root_with_outgroup(&self, outgroup: &[String]) -> Result<Tree> {
        let mut og_mask = 0u64;
        for name in outgroup {
            og_mask |= 1 << self.require_taxon(name)?;
        }
        if og_mask == 0 {
            return Err(Error::Tree("empty outgroup".into()));
        }
        let masks = self.clade_masks();
        let full = masks[self.root];
        if og_mask == full {
            return Err(Error::Tree("outgroup covers all taxa".into()));
        }
        // Find an edge whose below-set is exactly the outgroup or its complement.
        let mut edge_child = None;
        for n in 0..self.nodes.len() {
            if n == self.root || !self.reachable(n) {
                continue;
            }
            if masks[n] == og_mask || masks[n] == full & !og_mask {
                edge_child = Some(n);
                break;
            }
        }
        let Some(child) = edge_child else {
            let names: Vec<&str> = (0..self.taxa.len())
                .filter(|&t| og_mask >> t & 1 == 1)
                .map(|t| self.taxa[t].as_str())
                .collect();
            return Err(Error::Tree(format!(
                "outgroup {{{}}} is not monophyletic in this tree",
                names.join(", ")
            )));
        };
        Ok(self.root_at_edge(child, 0.5))
    }

    /// Re-root on the edge above `child`, placing the new degree-2 root at
    /// `fraction` of the way from `child` to its parent.
    pub fn root_at_edge(&self, child: usize, fraction: f64) -> Tree {
        assert!(child != self.root, "cannot root above the root");
        let mut t = self.clone();
        for node in &mut t.nodes {
            node.support = None;
        }
        let parent = t.nodes[child].parent.expect("non-root has parent");
        let len = t.nodes[child].length;

        // Path from `parent` up to the old root; edge path[i]--path[i+1]
        // is stored on path[i] and must move to path[i+1] when flipped.
        let mut path = vec![parent];
        while let Some(p) = t.nodes[*path.last().unwrap()].parent {
            path.push(p);
        }
        let orig: Vec<f64> = path.iter().map(|&n| t.nodes[n].length).collect();

        t.nodes[parent].children.retain(|&c| c != child);
        for i in 0..path.len() - 1 {
            let (lower, upper) = (path[i], path[i + 1]);
            t.nodes[upper].children.retain(|&c| c != lower);
            t.nodes[lower].children.push(upper);
            t.nodes[upper].parent = Some(lower);
            t.nodes[upper].length = orig[i];
        }
        t.nodes[parent].parent = None;

        // New root splits the original edge at `fraction`.
        let new_root = t.nodes.len();
        t.nodes.push(Node::bare());
        t.nodes[new_root].children = vec![child, parent];
        t.nodes[child].parent = Some(new_root);
        t.nodes[child].length = len * fraction;
        t.nodes[parent].parent = Some(new_root);
        t.nodes[parent].length = len * (1.0 - fraction);
        t.root = new_root;

        // A former degree-2 root is now a unary internal node: splice it out.
        let old_root = self.root;
        if t.nodes[old_root].taxon.is_none() && t.nodes[old_root].children.len() == 1 {
            let only = t.nodes[old_root].children[0];
            let gp = t.nodes[old_root].parent.expect("unary old root has parent");
            let merged = t.nodes[old_root].length + t.nodes[only].length;
            let pos = t.nodes[gp]
                .children
                .iter()
                .position(|&c| c == old_root)
                .expect("old root is its parent's child");
            t.nodes[gp].children[pos] = only;
            t.nodes[only].parent = Some(gp);
            t.nodes[only].length = merged;
            t.nodes[old_root].children.clear();
            t.nodes[old_root].parent = None;
        }
        t.compact()
    }

    /// Drop unreachable arena slots and renumber nodes.
    pub fn compact(&self) -> Tree {
        let mut map = vec![usize::MAX; self.nodes.len()];
        let order = self.post_order();
        let mut nodes = Vec::with_capacity(order.len());
        for &old in &order {
            map[old] = nodes.len();
            nodes.push(self.nodes[old].clone());
        }
        for node in &mut nodes {
            node.parent = node.parent.map(|p| map[p]);
            for c in &mut node.children {
                *c = map[*c];
            }
        }
        Tree {
            root: map[self.root],
            nodes,
            taxa: self.taxa.clone(),
        }
    }

    /// Restrict to the taxa in `keep`, suppressing unary nodes (their edge
    /// lengths merge). The result keeps this tree's root direction.
    pub fn prune_to(&self, keep: &BTreeSet<usize>) -> Result<Tree> {
        if keep.is_empty() {
            return Err(Error::Tree("cannot prune to an empty taxon set".into()));
        }
        debug_assert!(
            self.nodes[self.root].taxon.is_none(),
            "prune_to expects a rooted tree, not a leaf-rooted one"
        );
        let mut t = Tree {
            nodes: Vec::new(),
            root: 0,
            taxa: self.taxa.clone(),
        };
        let built = self.prune_rec(self.root, keep, &mut t);
        match built {
            Some((idx, _)) => {
                t.root = idx;
                t.nodes[idx].parent = None;
                t.nodes[idx].length = 0.0;
                Ok(t.compact())
            }
            None => Err(Error::Tree("no kept taxa in tree".into())),
        }
    }

    // Returns (new node index, accumulated pendant length) for surviving subtrees.
    fn prune_rec(&self, n: usize, keep: &BTreeSet<usize>, out: &mut Tree) -> Option<(usize, f64)> {
        let node = &self.nodes[n];
        if node.is_leaf() {
            let t = node.taxon?;
            if !keep.contains(&t) {
                return None;
            }
            let idx = out.nodes.len();
            out.nodes.push(Node {
                parent: None,
                children: Vec::new(),
                length: node.length,
                taxon: Some(t),
                support: None,
            });
            return Some((idx, node.length));
        }
        let kept: Vec<(usize, f64)> = node
            .children
            .iter()
            .filter_map(|&c| self.prune_rec(c, keep, out))
            .collect();
        match kept.len() {
            0 => None,
            1 => {
                // Unary: splice through, extending the child's edge.
                let (idx, _) = kept[0];
                out.nodes[idx].length += node.length;
                Some((idx, out.nodes[idx].length))
            }
            _ => {
                let idx = out.nodes.len();
                out.nodes.push(Node {
                    parent: None,
                    children: kept.iter().map(|&(i, _)| i).collect(),
                    length: node.length,
                    taxon: None,
                    support: node.support,
                });
                for &(c, _) in &kept {
                    out.nodes[c].parent = Some(idx);
                }
                Some((idx, node.length))
            }
        }
    }

    /// Serialize to Newick. Branch lengths use the shortest exact decimal
    /// form; clade supports, when present, are written as `[&support=..]`
    /// comments on internal nodes.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.newick_rec(self.root, &mut out);
        out.push(';');
        out
    }

    fn newick_rec(&self, n: usize, out: &mut String) {
        let node = &self.nodes[n];
        if !node.children.is_empty() {
            out.push('(');
            for (i, &c) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                self.newick_rec(c, out);
            }
            out.push(')');
        }
        if let Some(t) = node.taxon {
            out.push_str(&self.taxa[t]);
        }
        if let Some(s) = node.support {
            out.push_str(&format!("[&support={s}]"));
        }
        if n != self.root {
            out.push_str(&format!(":{}", node.length));
        }
    }

    /// A random leaf-rooted binary topology over `taxa` (random sequential
    /// edge attachment), branch lengths i.i.d. Exponential(`rate`).
    pub fn random(taxa: Vec<String>, rate: f64, rng: &mut impl Rng) -> Tree {
        fn draw<R: Rng>(rng: &mut R, rate: f64) -> f64 {
            -(rng.gen_range(1e-12..1.0f64)).ln() / rate
        }
        assert!(taxa.len() >= 3, "need at least 3 taxa");
        let n = taxa.len();
        let mut t = Tree {
            nodes: Vec::new(),
            root: 0,
            taxa,
        };
        for i in 0..n {
            let len = draw(rng, rate);
            t.nodes.push(Node {
                parent: None,
                children: Vec::new(),
                length: len,
                taxon: Some(i),
                support: None,
            });
        }
        t.nodes[0].length = 0.0;
        // Seed with the 3-taxon star: leaf 0 is the root, an internal node
        // holds leaves 1 and 2. Every later leaf splits a random edge.
        let top = t.nodes.len();
        let len = draw(rng, rate);
        t.nodes.push(Node {
            parent: Some(0),
            children: vec![1, 2],
            length: len,
            taxon: None,
            support: None,
        });
        t.nodes[0].children = vec![top];
        t.nodes[1].parent = Some(top);
        t.nodes[2].parent = Some(top);
        let mut attachable: Vec<usize> = vec![1, 2, top];
        let mut order: Vec<usize> = (3..n).collect();
        order.shuffle(rng);
        for leaf in order {
            let &at = attachable.choose(rng).expect("nonempty");
            let parent = t.nodes[at].parent.unwrap();
            let mid = t.nodes.len();
            let len = draw(rng, rate);
            t.nodes.push(Node {
                parent: Some(parent),
                children: vec![at, leaf],
                length: len,
                taxon: None,
                support: None,
            });
            let pos = t.nodes[parent]
                .children
                .iter()
                .position(|&c| c == at)
                .unwrap();
            t.nodes[parent].children[pos] = mid;
            t.nodes[at].parent = Some(mid);
            t.nodes[leaf].parent = Some(mid);
            attachable.push(leaf);
            attachable.push(mid);
        }
        t
    }

    /// Check the leaf-rooted shape: root is a leaf with one child, other
    /// internal nodes have exactly two children.
    pub fn is_leaf_rooted_binary(&self) -> bool {
        if self.nodes[self.root].taxon.is_none() || self.nodes[self.root].children.len() != 1 {
            return false;
        }
        self.post_order().iter().all(|&n| {
            let node = &self.nodes[n];
            if n == self.root {
                true
            } else if node.is_leaf() {
                node.taxon.is_some()
            } else {
                node.children.len() == 2
            }
        })
    }
}

/// Parse a Newick string against a known taxon list.
///
/// Supports names, branch lengths, and `[&support=x]` comments; other
/// comment payloads are skipped.
pub fn parse_newick(text: &str, taxa: &[String]) -> Result<Tree> {
    let mut tree = Tree {
        nodes: Vec::new(),
        root: 0,
        taxa: taxa.to_vec(),
    };
    let chars: Vec<char> = text.trim().chars().collect();
    let mut pos = 0usize;
    let root = parse_clade(&chars, &mut pos, &mut tree)?;
    if pos < chars.len() && chars[pos] == ';' {
        pos += 1;
    }
    if chars[pos..].iter().any(|c| !c.is_whitespace()) {
        return Err(Error::Tree("trailing characters after ';'".into()));
    }
    tree.root = root;
    tree.nodes[root].parent = None;
    Ok(tree)
}

fn parse_clade(chars: &[char], pos: &mut usize, tree: &mut Tree) -> Result<usize> {
    let idx = tree.nodes.len();
    tree.nodes.push(Node::bare());
    if *pos < chars.len() && chars[*pos] == '(' {
        *pos += 1;
        loop {
            let child = parse_clade(chars, pos, tree)?;
            tree.nodes[child].parent = Some(idx);
            tree.nodes[idx].children.push(child);
            match chars.get(*pos) {
                Some(',') => *pos += 1,
                Some(')') => {
                    *pos += 1;
                    break;
                }
                _ => return Err(Error::Tree("expected ',' or ')'".into())),
            }
        }
    }
    // Optional name.
    let start = *pos;
    while *pos < chars.len()
        && !matches!(chars[*pos], ',' | ')' | '(' | ':' | ';' | '[')
        && !chars[*pos].is_whitespace()
    {
        *pos += 1;
    }
    if *pos > start {
        let name: String = chars[start..*pos].iter().collect();
        let t = tree
            .taxa
            .iter()
            .position(|x| *x == name)
            .ok_or_else(|| Error::Tree(format!("unknown taxon \"{name}\" in newick")))?;
        tree.nodes[idx].taxon = Some(t);
    }
    // Optional comment.
    if chars.get(*pos) == Some(&'[') {
        let end = chars[*pos..]
            .iter()
            .position(|&c| c == ']')
            .ok_or_else(|| Error::Tree("unterminated comment".into()))?
            + *pos;
        let body: String = chars[*pos + 1..end].iter().collect();
        if let Some(v) = body.strip_prefix("&support=") {
            tree.nodes[idx].support = v.parse().ok();
        }
        *pos = end + 1;
    }
    // Optional branch length.
    if chars.get(*pos) == Some(&':') {
        *pos += 1;
        let start = *pos;
        while *pos < chars.len()
            && matches!(chars[*pos], '0'..='9' | '.' | '-' | '+' | 'e' | 'E')
        {
            *pos += 1;
        }
        let num: String = chars[start..*pos].iter().collect();
        tree.nodes[idx].length = num
            .parse()
            .map_err(|_| Error::Tree(format!("bad branch length \"{num}\"")))?;
    }
    Ok(idx)
}
