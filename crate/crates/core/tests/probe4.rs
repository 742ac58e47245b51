//! Timing probe for the likelihood engine.
use protolex::chars::CharacterMatrix;
use protolex::phylo::{CharData, KindParams, TreeTables};
use protolex::rngx::{substream, Stream};
use protolex::tree::Tree;

#[test]
#[ignore = "diagnostic probe"]
fn probe_likelihood_speed() {
    let text = std::fs::read_to_string("/tmp/run1/characters.tsv").unwrap();
    let concepts = protolex::corpus::concepts40();
    let m = CharacterMatrix::from_tsv(&text, &concepts).unwrap();
    let data = CharData::from_matrix(&m);
    println!("{} chars, {} groups", data.n_chars(), data.groups.len());
    let mut rng = substream(1, Stream::Simulation, 99);
    let tree = Tree::random(m.doculects.clone(), 10.0, &mut rng);
    let kinds = [
        KindParams { pi1: 0.3, shape: 1.0 },
        KindParams { pi1: 0.4, shape: 1.2 },
    ];
    let t0 = std::time::Instant::now();
    let n = 500;
    let mut acc = 0.0;
    for _ in 0..n {
        let tables = TreeTables::new(&tree, &data, &kinds).unwrap();
        acc += tables.total_log_lik(&data).unwrap();
    }
    println!("total ll {acc:.3}; {:?} per evaluation", t0.elapsed() / n);
}
