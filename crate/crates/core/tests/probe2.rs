//! Second diagnostic: trained-model similarity landscape for short words.

use protolex::align::{pmi_similarity, train_scoring_model};
use protolex::corpus::{concepts40, parse_asjp_tsv, PhoneticString, SoundClass};

const DATA: &str = include_str!("../../../data/romance_albanian_latin.tsv");

#[test]
#[ignore = "diagnostic probe"]
fn probe_similarity_landscape() {
    let mut d = parse_asjp_tsv(DATA, &concepts40()).unwrap();
    d.assign_roles(
        &[
            "ALBANIAN".into(),
            "ALBANIAN_GHEG".into(),
            "ALBANIAN_TOSK".into(),
        ],
        &["LATIN".into()],
    )
    .unwrap();
    let model = train_scoring_model(&d, 4.45, 10).unwrap();

    println!("--- PMI diagonal for common symbols ---");
    for c in "aeiou3kgtdsznrlmpbfvwyLNSC5".chars() {
        let sc = SoundClass::from_char(c).unwrap();
        println!("PMI({c},{c}) = {:.3}", model.score(sc, sc));
    }
    println!("--- selected off-diagonals ---");
    for (a, b) in [
        ('k', 'g'), ('o', 'u'), ('e', 'i'), ('l', 'L'), ('r', 'l'), ('s', 'S'),
        ('i', 'y'), ('u', 'w'), ('a', '3'), ('e', 'E'), ('b', 'v'), ('g', 'j'),
        ('n', 'N'), ('k', 'C'),
    ] {
        let x = SoundClass::from_char(a).unwrap();
        let y = SoundClass::from_char(b).unwrap();
        println!("PMI({a},{b}) = {:.3}", model.score(x, y));
    }
    println!("--- short-word sims ---");
    let sim = |a: &str, b: &str| {
        pmi_similarity(
            &PhoneticString::parse(a).unwrap(),
            &PhoneticString::parse(b).unwrap(),
            &model,
        )
    };
    for (a, b) in [
        ("os", "os"), ("tu", "tu"), ("om", "om"), ("ok", "oky"), ("oky", "okyo"),
        ("okiu", "okyo"), ("sol", "sol"), ("sol", "sole"), ("sole", "soare"),
        ("sol", "solEy"), ("nos", "nos"), ("nos", "noi"), ("nos", "nois"),
        ("om", "omo"), ("omo", "omine"), ("vaklo", "wokLu"), ("vaklo", "okklu"),
        ("os", "osso"), ("osso", "ossu"), ("os", "weso"), ("akwa", "agwa"),
        ("akwa", "aua"), ("akwa", "ap3"), ("unu", "uno"), ("un", "unu"),
        ("stela", "stella"), ("stela", "stea"), ("stela", "stida"), ("stela", "etwal"),
        ("tu", "ti"), ("tu", "tue"), ("persona", "persoan3"), ("vet3", "persona"),
    ] {
        println!("sim({a:8},{b:8}) = {:.3}", sim(a, b));
    }
}
