//! Independent oracles for the likelihood engine and the sampler: exhaustive
//! state enumeration, analytic CTMC identities, re-rooting invariance, and a
//! prior-recovery run of the data-free chain.

use protolex::chars::{Character, CharacterId, CharacterKind, CharacterMatrix, Payload, UNDEF};
use protolex::mathx::{effective_sample_size, mean, variance};
use protolex::phylo::{
    log_likelihood, mcmc_sample, simulate_characters, transition_matrix, CharData, CharGroup,
    CtmcParams, GammaRates, KindParams, McmcConfig, MoveWeights, BRANCH_PRIOR_RATE,
};
use protolex::rngx::{substream, Stream};
use protolex::tree::Tree;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Brute-force likelihood: enumerate the states of every node, take the
/// product of edge transition probabilities and the root prior, sum.
/// Gamma-mixed per character, then ascertainment-corrected per group.
fn brute_force_group_ll(tree: &Tree, group_cells: &[Vec<u8>], defined: &[bool], kp: &KindParams) -> f64 {
    let ctmc = CtmcParams::from_equilibrium(kp.pi1).unwrap();
    let gamma = GammaRates::discretize(kp.shape).unwrap();
    let nodes = tree.post_order();
    let n = nodes.len();

    let char_lik = |cells: &dyn Fn(usize) -> u8| -> f64 {
        let mut mixed = 0.0;
        for &mult in &gamma.multipliers {
            let mut total = 0.0;
            for assign in 0u32..(1 << n) {
                let state = |node: usize| -> u8 {
                    let k = nodes.iter().position(|&x| x == node).unwrap();
                    (assign >> k & 1) as u8
                };
                let mut p = 1.0;
                // leaf observation indicators
                let mut ok = true;
                for &node in &nodes {
                    if let Some(t) = tree.nodes[node].taxon {
                        let obs = cells(t);
                        if obs != UNDEF && state(node) != obs {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                for &node in &nodes {
                    if node == tree.root {
                        p *= if state(node) == 1 { ctmc.pi1 } else { ctmc.pi0 };
                    } else {
                        let parent = tree.nodes[node].parent.unwrap();
                        let m = transition_matrix(&ctmc, tree.nodes[node].length, mult);
                        p *= m[state(parent) as usize][state(node) as usize];
                    }
                }
                total += p;
            }
            mixed += total / gamma.multipliers.len() as f64;
        }
        mixed
    };

    let all_zero = char_lik(&|t| if defined[t] { 0 } else { UNDEF });
    let mut ll = 0.0;
    for cells in group_cells {
        let l = char_lik(&|t| cells[t]);
        ll += l.ln() - (1.0 - all_zero).ln();
    }
    ll
}

fn matrix_from(taxa: &[String], cols: Vec<(CharacterKind, Vec<u8>)>) -> CharacterMatrix {
    CharacterMatrix {
        doculects: taxa.to_vec(),
        concepts: vec!["c".into()],
        columns: cols
            .into_iter()
            .enumerate()
            .map(|(i, (kind, cells))| Character {
                id: CharacterId {
                    concept: 0,
                    kind,
                    payload: match kind {
                        CharacterKind::ClassLabel => Payload::Label(i as u32),
                        CharacterKind::SoundclassConcept => {
                            Payload::Sound(protolex::corpus::SoundClass(i as u8))
                        }
                    },
                },
                cells,
            })
            .collect(),
        dropped: Vec::new(),
    }
}

#[test]
fn pruning_matches_enumeration_on_50_random_instances() {
    let start = std::time::Instant::now();
    let mut rng = substream(123, Stream::Simulation, 40);
    for trial in 0..50 {
        let n_leaves = rng.gen_range(3..=5usize);
        let taxa: Vec<String> = (0..n_leaves).map(|i| format!("T{i}")).collect();
        let tree = Tree::random(taxa.clone(), 3.0, &mut rng);
        let kinds = [
            KindParams {
                pi1: rng.gen_range(0.1..0.9),
                shape: rng.gen_range(0.3..4.0),
            },
            KindParams {
                pi1: rng.gen_range(0.1..0.9),
                shape: rng.gen_range(0.3..4.0),
            },
        ];
        // one concept per kind, 1-3 characters each, occasional undefined rows
        let defined: Vec<bool> = (0..n_leaves)
            .map(|_| rng.gen_range(0.0..1.0f64) > 0.2)
            .collect();
        let defined = if defined.iter().any(|&d| d) {
            defined
        } else {
            vec![true; n_leaves]
        };
        let mut cols = Vec::new();
        for kind in [CharacterKind::ClassLabel, CharacterKind::SoundclassConcept] {
            for _ in 0..rng.gen_range(1..=3usize) {
                let cells: Vec<u8> = defined
                    .iter()
                    .map(|&d| {
                        if d {
                            u8::from(rng.gen_range(0.0..1.0f64) < 0.5)
                        } else {
                            UNDEF
                        }
                    })
                    .collect();
                if cells.iter().any(|&v| v == 1) {
                    cols.push((kind, cells));
                }
            }
        }
        if cols.is_empty() {
            continue;
        }
        let m = matrix_from(&taxa, cols.clone());
        let fast = log_likelihood(&tree, &m, &kinds).unwrap();

        let mut slow = 0.0;
        for kind_enum in [CharacterKind::ClassLabel, CharacterKind::SoundclassConcept] {
            let group: Vec<Vec<u8>> = cols
                .iter()
                .filter(|(k, _)| *k == kind_enum)
                .map(|(_, c)| c.clone())
                .collect();
            if group.is_empty() {
                continue;
            }
            let kp = if kind_enum == CharacterKind::ClassLabel {
                kinds[0]
            } else {
                kinds[1]
            };
            slow += brute_force_group_ll(&tree, &group, &defined, &kp);
        }
        assert!(
            (fast - slow).abs() < 1e-8,
            "trial {trial}: pruning {fast} vs enumeration {slow}"
        );
    }
    assert!(
        start.elapsed().as_secs() < 10,
        "likelihood oracle must finish within 10 s"
    );
}

#[test]
fn ctmc_identities_hold_for_1000_random_parameterizations() {
    let mut rng = substream(55, Stream::Simulation, 41);
    for _ in 0..1000 {
        let pi1 = rng.gen_range(0.01..0.99);
        let p = CtmcParams::from_equilibrium(pi1).unwrap();
        let t = rng.gen_range(0.0..8.0);
        let mult = rng.gen_range(0.05..4.0);

        let i = transition_matrix(&p, 0.0, 1.0);
        assert!((i[0][0] - 1.0).abs() < 1e-14 && (i[1][1] - 1.0).abs() < 1e-14);
        assert!(i[0][1].abs() < 1e-14 && i[1][0].abs() < 1e-14);

        let m = transition_matrix(&p, t, mult);
        assert!((m[0][0] + m[0][1] - 1.0).abs() < 1e-12);
        assert!((m[1][0] + m[1][1] - 1.0).abs() < 1e-12);

        let s = rng.gen_range(0.0..4.0);
        let a = transition_matrix(&p, s, 1.0);
        let b = transition_matrix(&p, t, 1.0);
        let c = transition_matrix(&p, s + t, 1.0);
        for x in 0..2 {
            for y in 0..2 {
                let prod = a[x][0] * b[0][y] + a[x][1] * b[1][y];
                assert!((prod - c[x][y]).abs() < 1e-10);
            }
        }
        // stationarity
        let s0 = p.pi0 * m[0][0] + p.pi1 * m[1][0];
        assert!((s0 - p.pi0).abs() < 1e-12);
    }
}

#[test]
fn rerooting_invariance_on_8_leaf_tree() {
    let taxa: Vec<String> = (0..8).map(|i| format!("T{i}")).collect();
    let mut rng = substream(7, Stream::Simulation, 42);
    let tree = Tree::random(taxa.clone(), 8.0, &mut rng);
    let cols: Vec<(CharacterKind, Vec<u8>)> = (0..6)
        .map(|k| {
            let kind = if k % 2 == 0 {
                CharacterKind::ClassLabel
            } else {
                CharacterKind::SoundclassConcept
            };
            let cells: Vec<u8> = (0..8)
                .map(|_| {
                    let r: f64 = rng.gen_range(0.0..1.0);
                    if r < 0.1 {
                        UNDEF
                    } else {
                        u8::from(r > 0.55)
                    }
                })
                .collect();
            (kind, cells)
        })
        .filter(|(_, cells)| cells.iter().any(|&v| v == 1))
        .collect();
    let m = matrix_from(&taxa, cols);
    let kinds = [
        KindParams { pi1: 0.35, shape: 0.8 },
        KindParams { pi1: 0.6, shape: 2.2 },
    ];
    let base = log_likelihood(&tree, &m, &kinds).unwrap();
    for k in 0..10 {
        let child = loop {
            let c = rng.gen_range(0..tree.nodes.len());
            if c != tree.root {
                break c;
            }
        };
        let frac = rng.gen_range(0.1..0.9);
        let rerooted = tree.root_at_edge(child, frac);
        let ll = log_likelihood(&rerooted, &m, &kinds).unwrap();
        assert!((ll - base).abs() < 1e-10, "placement {k}: {ll} vs {base}");
    }
}

#[test]
fn data_free_chain_recovers_prior_moments() {
    let data = CharData {
        taxa: (0..6).map(|i| format!("T{i}")).collect(),
        groups: Vec::new(),
    };
    let cfg = McmcConfig {
        generations: 120_000,
        chains: 1,
        burnin_frac: 0.1,
        retain_total: 1_000,
        seed: 31,
        weights: MoveWeights::default(),
    };
    let sample = mcmc_sample(&data, &cfg).unwrap();
    assert_eq!(sample.entries.len(), 1000);

    let branch_means: Vec<f64> = sample
        .entries
        .iter()
        .map(|e| {
            let edges: Vec<f64> = e
                .tree
                .post_order()
                .into_iter()
                .filter(|&n| n != e.tree.root)
                .map(|n| e.tree.nodes[n].length)
                .collect();
            mean(&edges)
        })
        .collect();
    let shapes: Vec<f64> = sample.entries.iter().map(|e| e.kinds[0].shape).collect();

    // Exponential(10) branch prior: per-tree mean of 9 edges has mean 0.1.
    let ess_b = effective_sample_size(&branch_means);
    let se_b = (variance(&branch_means) / ess_b).sqrt();
    let mb = mean(&branch_means);
    assert!(
        (mb - 1.0 / BRANCH_PRIOR_RATE).abs() < 3.0 * se_b,
        "branch mean {mb} vs 0.1 (se {se_b}, ess {ess_b})"
    );

    // Exponential(1) shape prior: mean 1 (the shape proposal is bounded to
    // [1e-2, 1e2], which clips a negligible prior mass).
    let ess_s = effective_sample_size(&shapes);
    let se_s = (variance(&shapes) / ess_s).sqrt();
    let ms = mean(&shapes);
    assert!(
        (ms - 1.0).abs() < 3.0 * se_s,
        "shape mean {ms} vs 1.0 (se {se_s}, ess {ess_s})"
    );
}

#[test]
fn sampler_recovers_clades_from_simulated_characters() {
    // Forward-simulate characters on a known 6-leaf tree, then check the
    // sampler concentrates on its splits.
    let taxa: Vec<String> = (0..6).map(|i| format!("T{i}")).collect();
    // leaf-rooted form: everything hangs under T0
    let tree = protolex::tree::parse_newick(
        "((((T1:0.08,T2:0.06):0.12,(T3:0.07,T4:0.09):0.11):0.1,T5:0.25):0.05)T0;",
        &taxa,
    )
    .unwrap();
    assert!(tree.is_leaf_rooted_binary());
    let truth = tree.splits();

    let kp = KindParams { pi1: 0.4, shape: 1.0 };
    let mut rng: ChaCha12Rng = substream(17, Stream::Simulation, 43);
    let sims = simulate_characters(&tree, &kp, 400, &mut rng).unwrap();
    let data = CharData {
        taxa: taxa.clone(),
        groups: vec![CharGroup {
            kind: 0,
            defined: vec![true; 6],
            chars: sims,
            names: (0..400).map(|i| format!("sim{i}")).collect(),
        }],
    };
    let cfg = McmcConfig {
        generations: 40_000,
        chains: 2,
        burnin_frac: 0.2,
        retain_total: 400,
        seed: 77,
        weights: MoveWeights::default(),
    };
    let sample = mcmc_sample(&data, &cfg).unwrap();
    for split in &truth {
        let freq = sample
            .entries
            .iter()
            .filter(|e| e.tree.splits().contains(split))
            .count() as f64
            / sample.entries.len() as f64;
        assert!(freq >= 0.9, "split {split:b} at {freq}");
    }
}
