//! Table-6-style MSA probe against a finished run directory.

use std::collections::BTreeMap;

use protolex::align::ScoringModel;
use protolex::corpus::{concepts40, parse_asjp_tsv, PhoneticString};
use protolex::msa::{build_pair_library, extend_library, progressive_align, Msa, MsaRow};
use protolex::tree::parse_newick;

#[test]
#[ignore = "diagnostic probe"]
fn probe_eye_msa() {
    let run = std::path::Path::new("/tmp/run1");
    let raw = std::fs::read_to_string("../../data/romance_albanian_latin.tsv").unwrap();
    let mut d = parse_asjp_tsv(&raw, &concepts40()).unwrap();
    d.assign_roles(
        &["ALBANIAN".into(), "ALBANIAN_GHEG".into(), "ALBANIAN_TOSK".into()],
        &["LATIN".into()],
    )
    .unwrap();
    let model =
        ScoringModel::from_tsv(&std::fs::read_to_string(run.join("scoring_model.tsv")).unwrap())
            .unwrap();
    let table6: [(&str, &str); 10] = [
        ("DALMATIAN", "va-klo"),
        ("ITALIAN", "-okkyo"),
        ("ITALIAN_GROSSETO_TUSCAN", "-o-kyo"),
        ("NEAPOLITAN_CALABRESE", "wo-kyo"),
        ("ROMANIAN_2", "-o-ky-"),
        ("ROMANIAN_MEGLENO", "wo-kLu"),
        ("SARDINIAN_LOGUDARESE", "-o-kru"),
        ("SICILIAN_UnnamedInSource", "-o-kiu"),
        ("TURIA_AROMANIAN", "-o-kLu"),
        ("VLACH", "-okklu"),
    ];
    let eye = d.concept_index("eye").unwrap();
    let words: Vec<(String, PhoneticString)> = table6
        .iter()
        .map(|(doc, _)| (doc.to_string(), d.doculect(doc).unwrap().entries[eye].clone().unwrap()))
        .collect();
    let matrix_docs: Vec<String> = d.inference_doculects().iter().map(|x| x.id.clone()).collect();
    let mcc = parse_newick(
        std::fs::read_to_string(run.join("mcc.nwk")).unwrap().trim(),
        &matrix_docs,
    )
    .unwrap();
    let keep: std::collections::BTreeSet<usize> = words
        .iter()
        .map(|(doc, _)| mcc.taxa.iter().position(|t| t == doc).unwrap())
        .collect();
    let guide = mcc.prune_to(&keep).unwrap();
    let lib = build_pair_library(&words, &model).unwrap();
    let ext = extend_library(&lib, &words);
    let msa = progressive_align(&words, &ext, &guide).unwrap();
    let mine: BTreeMap<&str, String> = msa
        .rows
        .iter()
        .map(|r| (r.doculect.as_str(), r.gapped_string()))
        .collect();
    let mut matches = 0;
    for (doc, want) in table6 {
        let got = &mine[doc];
        let ok = got == want;
        matches += usize::from(ok);
        println!("{doc:26} {got:8} want {want:8} {}", if ok { "OK" } else { "x" });
    }
    let reference = Msa {
        rows: table6
            .iter()
            .map(|(doc, gapped)| {
                let wi = words.iter().position(|(x, _)| x == doc).unwrap();
                let mut k = 0usize;
                MsaRow {
                    doculect: doc.to_string(),
                    word_index: wi,
                    word: words[wi].1.clone(),
                    cols: gapped
                        .chars()
                        .map(|c| {
                            if c == '-' {
                                None
                            } else {
                                let p = k;
                                k += 1;
                                Some(p)
                            }
                        })
                        .collect(),
                }
            })
            .collect(),
    };
    println!(
        "matches {matches}/10; consistency mine {:.4} vs reference {:.4}",
        msa.consistency_score(&ext),
        reference.consistency_score(&ext)
    );

    // also: the run's own eye block
    let blocks = std::fs::read_to_string(run.join("msa_blocks.tsv")).unwrap();
    println!("--- run msa block for eye ---");
    for line in blocks.lines().filter(|l| l.starts_with("eye\t")) {
        println!("{line}");
    }
}
