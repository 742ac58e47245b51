//! Metropolis-Hastings sampler over leaf-rooted binary trees, branch
//! lengths, and per-kind CTMC/gamma parameters.
//!
//! Moves: nearest-neighbor interchange, subtree-prune-regraft, single
//! branch-length multiplier, whole-tree multiplier, gamma-shape multiplier
//! and equilibrium-frequency slide (each per character kind). Priors:
//! uniform over topologies, Exponential(10) on branch lengths,
//! Exponential(1) on gamma shapes, flat on equilibrium frequencies.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::phylo::likelihood::{CharData, KindParams, TreeTables};
use crate::rngx::{substream, Stream};
use crate::tree::Tree;
use crate::{Error, Result};

/// Rate of the exponential prior on branch lengths (mean 0.1).
pub const BRANCH_PRIOR_RATE: f64 = 10.0;
/// Rate of the exponential prior on gamma shapes (mean 1).
pub const SHAPE_PRIOR_RATE: f64 = 1.0;

/// Relative move weights.
#[derive(Debug, Clone)]
pub struct MoveWeights {
    pub nni: f64,
    pub spr: f64,
    pub branch_multiplier: f64,
    pub tree_multiplier: f64,
    pub shape_slide: f64,
    pub pi_slide: f64,
}

impl Default for MoveWeights {
    fn default() -> Self {
        MoveWeights {
            nni: 3.0,
            spr: 1.0,
            branch_multiplier: 4.0,
            tree_multiplier: 1.0,
            shape_slide: 1.0,
            pi_slide: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub generations: usize,
    pub chains: usize,
    pub burnin_frac: f64,
    /// Total retained sample size across chains.
    pub retain_total: usize,
    pub seed: u64,
    pub weights: MoveWeights,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            generations: 1_100_000,
            chains: 2,
            burnin_frac: 0.10,
            retain_total: 2_000,
            seed: 1,
            weights: MoveWeights::default(),
        }
    }
}

/// One retained posterior draw.
#[derive(Debug, Clone)]
pub struct PosteriorEntry {
    pub tree: Tree,
    pub kinds: [KindParams; 2],
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub chain: usize,
    pub generation: usize,
}

impl PosteriorEntry {
    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood + self.log_prior
    }
}

/// The retained sample plus sampler diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub entries: Vec<PosteriorEntry>,
    /// move name -> (accepted, proposed)
    pub acceptance: BTreeMap<String, (u64, u64)>,
}

fn log_prior(tree: &Tree, kinds: &[KindParams; 2]) -> f64 {
    let mut lp = 0.0;
    for n in tree.post_order() {
        if n != tree.root {
            lp += BRANCH_PRIOR_RATE.ln() - BRANCH_PRIOR_RATE * tree.nodes[n].length;
        }
    }
    for k in kinds {
        lp += SHAPE_PRIOR_RATE.ln() - SHAPE_PRIOR_RATE * k.shape;
    }
    lp
}

#[derive(Clone, Copy, PartialEq)]
enum Dirty {
    Tree,
    Kind(usize),
    Nothing,
}

struct Proposal {
    name: &'static str,
    tree: Option<Tree>,
    kinds: [KindParams; 2],
    ln_hastings: f64,
    dirty: Dirty,
}

fn subtree_nodes(tree: &Tree, x: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![x];
    while let Some(n) = stack.pop() {
        out.push(n);
        stack.extend(tree.nodes[n].children.iter().copied());
    }
    out
}

fn propose_nni(tree: &Tree, rng: &mut ChaCha12Rng) -> Option<Tree> {
    let candidates: Vec<usize> = (0..tree.nodes.len())
        .filter(|&v| {
            v != tree.root
                && tree.nodes[v].children.len() == 2
                && tree.nodes[v].parent != Some(tree.root)
        })
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let v = candidates[rng.gen_range(0..candidates.len())];
    let u = tree.nodes[v].parent.expect("candidate has parent");
    let s = *tree.nodes[u]
        .children
        .iter()
        .find(|&&c| c != v)
        .expect("binary internal node");
    let a = tree.nodes[v].children[rng.gen_range(0..2)];

    let mut t = tree.clone();
    let pos_s = t.nodes[u].children.iter().position(|&c| c == s).unwrap();
    let pos_a = t.nodes[v].children.iter().position(|&c| c == a).unwrap();
    t.nodes[u].children[pos_s] = a;
    t.nodes[v].children[pos_a] = s;
    t.nodes[a].parent = Some(u);
    t.nodes[s].parent = Some(v);
    Some(t)
}

fn propose_spr(tree: &Tree, rng: &mut ChaCha12Rng) -> Option<(Tree, f64)> {
    let prunable: Vec<usize> = (0..tree.nodes.len())
        .filter(|&x| x != tree.root && tree.nodes[x].parent != Some(tree.root))
        .collect();
    if prunable.is_empty() {
        return None;
    }
    let x = prunable[rng.gen_range(0..prunable.len())];
    let p = tree.nodes[x].parent.unwrap();
    let c = *tree.nodes[p].children.iter().find(|&&k| k != x).unwrap();
    let g = tree.nodes[p].parent.expect("p is not the root");

    let mut t = tree.clone();
    // Splice p out: g adopts c, edge lengths merge.
    let merged = t.nodes[p].length + t.nodes[c].length;
    let pos = t.nodes[g].children.iter().position(|&k| k == p).unwrap();
    t.nodes[g].children[pos] = c;
    t.nodes[c].parent = Some(g);
    t.nodes[c].length = merged;

    // Candidate regraft edges: any remaining node except the root and the
    // pruned subtree (p rides along as the junction to reinsert).
    let sub = subtree_nodes(&t, x);
    let targets: Vec<usize> = (0..t.nodes.len())
        .filter(|&e| e != t.root && e != p && !sub.contains(&e))
        .collect();
    if targets.is_empty() {
        return None;
    }
    let e = targets[rng.gen_range(0..targets.len())];
    let le = t.nodes[e].length;
    let u: f64 = rng.gen_range(0.0..1.0);

    let g2 = t.nodes[e].parent.unwrap();
    let pos = t.nodes[g2].children.iter().position(|&k| k == e).unwrap();
    t.nodes[g2].children[pos] = p;
    t.nodes[p].parent = Some(g2);
    t.nodes[p].children = vec![e, x];
    t.nodes[p].length = u * le;
    t.nodes[e].parent = Some(p);
    t.nodes[e].length = (1.0 - u) * le;
    // x stays attached to p with its own branch length.

    let ln_hastings = (le / merged).ln();
    Some((t, ln_hastings))
}

fn run_chain(
    chain: usize,
    data: &CharData,
    taxa: &[String],
    cfg: &McmcConfig,
) -> Result<(Vec<PosteriorEntry>, BTreeMap<String, (u64, u64)>)> {
    let mut rng = substream(cfg.seed, Stream::McmcChain, chain as u64);
    let retain = cfg.retain_total / cfg.chains
        + usize::from(chain < cfg.retain_total % cfg.chains);
    let burnin = (cfg.burnin_frac * cfg.generations as f64) as usize;
    if retain > 0 && cfg.generations <= burnin {
        return Err(Error::Validation("chain too short for burn-in".into()));
    }
    let thin = if retain == 0 {
        usize::MAX
    } else {
        ((cfg.generations - burnin) / retain).max(1)
    };
    if retain > 0 && burnin + retain * thin > cfg.generations {
        return Err(Error::Validation(format!(
            "cannot retain {retain} samples from {} generations",
            cfg.generations
        )));
    }

    let mut tree = Tree::random(taxa.to_vec(), BRANCH_PRIOR_RATE, &mut rng);
    let mut kinds = [
        KindParams { pi1: 0.5, shape: 1.0 },
        KindParams { pi1: 0.5, shape: 1.0 },
    ];
    let tables = TreeTables::new(&tree, data, &kinds)?;
    let mut ll_kind = [
        tables.kind_log_lik(data, 0)?,
        tables.kind_log_lik(data, 1)?,
    ];
    drop(tables);
    let mut lp = log_prior(&tree, &kinds);

    let w = &cfg.weights;
    let total_w = w.nni + w.spr + w.branch_multiplier + w.tree_multiplier + w.shape_slide + w.pi_slide;
    let mut acc: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let mut entries = Vec::with_capacity(retain);

    for gen in 1..=cfg.generations {
        let pick = rng.gen_range(0.0..total_w);
        let proposal: Proposal = if pick < w.nni {
            match propose_nni(&tree, &mut rng) {
                Some(t) => Proposal {
                    name: "nni",
                    tree: Some(t),
                    kinds,
                    ln_hastings: 0.0,
                    dirty: Dirty::Tree,
                },
                None => Proposal {
                    name: "nni",
                    tree: None,
                    kinds,
                    ln_hastings: 0.0,
                    dirty: Dirty::Nothing,
                },
            }
        } else if pick < w.nni + w.spr {
            match propose_spr(&tree, &mut rng) {
                Some((t, h)) => Proposal {
                    name: "spr",
                    tree: Some(t),
                    kinds,
                    ln_hastings: h,
                    dirty: Dirty::Tree,
                },
                None => Proposal {
                    name: "spr",
                    tree: None,
                    kinds,
                    ln_hastings: 0.0,
                    dirty: Dirty::Nothing,
                },
            }
        } else if pick < w.nni + w.spr + w.branch_multiplier {
            // multiply one branch length
            let mut t = tree.clone();
            let n = loop {
                let n = rng.gen_range(0..t.nodes.len());
                if n != t.root {
                    break n;
                }
            };
            let m = (2.0 * (rng.gen_range(0.0..1.0f64) - 0.5)).exp();
            t.nodes[n].length *= m;
            Proposal {
                name: "branch_multiplier",
                tree: Some(t),
                kinds,
                ln_hastings: m.ln(),
                dirty: Dirty::Tree,
            }
        } else if pick < w.nni + w.spr + w.branch_multiplier + w.tree_multiplier {
            let mut t = tree.clone();
            let m = (0.5 * (rng.gen_range(0.0..1.0f64) - 0.5)).exp();
            let mut edges = 0;
            for n in 0..t.nodes.len() {
                if n != t.root {
                    t.nodes[n].length *= m;
                    edges += 1;
                }
            }
            Proposal {
                name: "tree_multiplier",
                tree: Some(t),
                kinds,
                ln_hastings: edges as f64 * m.ln(),
                dirty: Dirty::Tree,
            }
        } else if pick < total_w - w.pi_slide {
            let k = rng.gen_range(0..2usize);
            let m = (1.0 * (rng.gen_range(0.0..1.0f64) - 0.5)).exp();
            let mut kinds2 = kinds;
            kinds2[k].shape *= m;
            if kinds2[k].shape < 1e-2 || kinds2[k].shape > 1e2 {
                // outside the supported discretization range: auto-reject
                Proposal {
                    name: "shape_slide",
                    tree: None,
                    kinds,
                    ln_hastings: f64::NEG_INFINITY,
                    dirty: Dirty::Kind(k),
                }
            } else {
                Proposal {
                    name: "shape_slide",
                    tree: None,
                    kinds: kinds2,
                    ln_hastings: m.ln(),
                    dirty: Dirty::Kind(k),
                }
            }
        } else {
            let k = rng.gen_range(0..2usize);
            let delta = rng.gen_range(-0.1..0.1);
            let mut pi1 = kinds[k].pi1 + delta;
            let (lo, hi) = (1e-4, 1.0 - 1e-4);
            // reflect into the open interval
            for _ in 0..4 {
                if pi1 < lo {
                    pi1 = 2.0 * lo - pi1;
                }
                if pi1 > hi {
                    pi1 = 2.0 * hi - pi1;
                }
            }
            let mut kinds2 = kinds;
            kinds2[k].pi1 = pi1;
            Proposal {
                name: "pi_slide",
                tree: None,
                kinds: kinds2,
                ln_hastings: 0.0,
                dirty: Dirty::Kind(k),
            }
        };

        let entry = acc.entry(proposal.name.to_string()).or_insert((0, 0));
        entry.1 += 1;

        if proposal.dirty == Dirty::Nothing || proposal.ln_hastings == f64::NEG_INFINITY {
            // nothing proposable or auto-rejected
        } else {
            let cand_tree = proposal.tree.as_ref().unwrap_or(&tree);
            let mut cand_ll = ll_kind;
            let ok = (|| -> Result<()> {
                let tables = TreeTables::new(cand_tree, data, &proposal.kinds)?;
                match proposal.dirty {
                    Dirty::Tree => {
                        cand_ll[0] = tables.kind_log_lik(data, 0)?;
                        cand_ll[1] = tables.kind_log_lik(data, 1)?;
                    }
                    Dirty::Kind(k) => {
                        cand_ll[k] = tables.kind_log_lik(data, k)?;
                    }
                    Dirty::Nothing => {}
                }
                Ok(())
            })();
            match ok {
                Err(Error::Numeric(msg)) => {
                    return Err(Error::Numeric(format!(
                        "chain {chain} generation {gen}: {msg}"
                    )))
                }
                Err(e) => return Err(e),
                Ok(()) => {}
            }
            let cand_lp = log_prior(cand_tree, &proposal.kinds);
            let ln_alpha = (cand_ll[0] + cand_ll[1] + cand_lp)
                - (ll_kind[0] + ll_kind[1] + lp)
                + proposal.ln_hastings;
            if ln_alpha >= 0.0 || rng.gen_range(0.0..1.0f64).ln() < ln_alpha {
                entry.0 += 1;
                if let Some(t) = proposal.tree {
                    tree = t;
                }
                kinds = proposal.kinds;
                ll_kind = cand_ll;
                lp = cand_lp;
            }
        }

        if retain > 0 && gen > burnin && (gen - burnin) % thin == 0 && entries.len() < retain {
            entries.push(PosteriorEntry {
                tree: tree.compact(),
                kinds,
                log_likelihood: ll_kind[0] + ll_kind[1],
                log_prior: lp,
                chain,
                generation: gen,
            });
        }
    }

    if entries.len() < retain {
        return Err(Error::Validation(format!(
            "chain {chain} retained {} of {retain} requested samples",
            entries.len()
        )));
    }
    Ok((entries, acc))
}

/// Sample the posterior over trees and parameters. Chains run in parallel
/// with independent RNG streams; retained draws are concatenated in chain
/// order, so results are deterministic for a fixed config.
pub fn mcmc_sample(data: &CharData, cfg: &McmcConfig) -> Result<PosteriorSample> {
    if data.taxa.len() < 4 {
        return Err(Error::Validation(format!(
            "need at least 4 doculects, got {}",
            data.taxa.len()
        )));
    }
    if cfg.chains == 0 {
        return Err(Error::Validation("need at least one chain".into()));
    }
    let results: Vec<Result<(Vec<PosteriorEntry>, BTreeMap<String, (u64, u64)>)>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..cfg.chains)
                .map(|chain| scope.spawn(move || run_chain(chain, data, &data.taxa, cfg)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect()
        });

    let mut entries = Vec::with_capacity(cfg.retain_total);
    let mut acceptance: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for r in results {
        let (e, a) = r?;
        entries.extend(e);
        for (k, (acc, tot)) in a {
            let slot = acceptance.entry(k).or_insert((0, 0));
            slot.0 += acc;
            slot.1 += tot;
        }
    }
    for e in &entries {
        if !e.log_posterior().is_finite() {
            return Err(Error::Numeric(
                "posterior sample contains non-finite log posterior".into(),
            ));
        }
    }
    Ok(PosteriorSample {
        entries,
        acceptance,
    })
}

/// Simulate `n_chars` binary characters of one kind down a fixed tree,
/// rejecting all-0 outcomes (matching the ascertainment-corrected model).
/// Returns per-character leaf states indexed by tree taxon.
pub fn simulate_characters(
    tree: &Tree,
    params: &KindParams,
    n_chars: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Vec<u8>>> {
    let (ctmc, gamma) = params.derive()?;
    let n_taxa = tree.taxa.len();
    // Parent-before-child order.
    let mut pre = tree.post_order();
    pre.reverse();
    let mut out = Vec::with_capacity(n_chars);
    let mut states = vec![0u8; tree.nodes.len()];
    while out.len() < n_chars {
        let cat = rng.gen_range(0..gamma.multipliers.len());
        let mult = gamma.multipliers[cat];
        for &n in &pre {
            states[n] = if n == tree.root {
                u8::from(rng.gen_range(0.0..1.0f64) < ctmc.pi1)
            } else {
                let p = crate::phylo::ctmc::transition_matrix(
                    &ctmc,
                    tree.nodes[n].length,
                    mult,
                );
                let parent = states[tree.nodes[n].parent.unwrap()];
                u8::from(rng.gen_range(0.0..1.0f64) < p[parent as usize][1])
            };
        }
        let mut leaf_states = vec![0u8; n_taxa];
        let mut any_one = false;
        for l in tree.leaves() {
            let t = tree.nodes[l].taxon.unwrap();
            leaf_states[t] = states[l];
            any_one |= states[l] == 1;
        }
        if any_one {
            out.push(leaf_states);
        }
    }
    Ok(out)
}
