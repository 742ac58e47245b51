//! Pipeline stages. Each stage reads its prerequisites from the run
//! directory, computes, and writes its artifacts atomically under fixed
//! names, updating the manifest as it goes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use protolex::align::{
    needleman_wunsch_affine, train_scoring_model, ScoringModel,
};
use protolex::asr::{choices_to_tsv, select_proto_classes};
use protolex::chars::{build_characters, CharacterMatrix};
use protolex::cognate::{cluster_dataset, fit_synonymy_model, synonymy_training_pairs, CognateClasses};
use protolex::corpus::{concepts40, parse_asjp_tsv, Dataset, PhoneticString};
use protolex::msa::{build_pair_library, extend_library, progressive_align, Msa, MsaRow};
use protolex::phylo::{
    maximum_clade_credibility, mcmc_sample, CharData, KindParams, McmcConfig, MoveWeights,
    PosteriorEntry, PosteriorSample,
};
use protolex::recon::{
    eval_to_fig_tsv, evaluate, reconstruct_proto_forms, reconstructions_to_tsv, ProtoForm,
};
use protolex::relate::{
    distance_matrix, fit_null, permutation_null_distances, relatedness_test, verdicts_to_tsv,
};
use protolex::tree::{parse_newick, Tree};

use crate::config::RunConfig;
use crate::manifest::{atomic_write, checksum, RunManifest, StageRecord};

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_MISSING_PREREQ: i32 = 2;
pub const EXIT_BAD_CONFIG: i32 = 3;

#[derive(Debug)]
pub struct StageError {
    pub exit_code: i32,
    pub message: String,
}

impl StageError {
    fn internal(msg: impl fmt::Display) -> StageError {
        StageError {
            exit_code: EXIT_INTERNAL,
            message: msg.to_string(),
        }
    }

    fn missing(artifact: &str, needed_by: &str) -> StageError {
        StageError {
            exit_code: EXIT_MISSING_PREREQ,
            message: format!(
                "missing prerequisite artifact \"{artifact}\" (run its producing stage before `{needed_by}`)"
            ),
        }
    }
}

impl From<protolex::Error> for StageError {
    fn from(e: protolex::Error) -> StageError {
        StageError::internal(e)
    }
}

impl From<std::io::Error> for StageError {
    fn from(e: std::io::Error) -> StageError {
        StageError::internal(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    TrainAlign,
    Distances,
    Relate,
    Cluster,
    Characters,
    Phylo,
    Asr,
    Msa,
    Reconstruct,
    Evaluate,
    All,
}

impl Stage {
    pub const ORDER: [Stage; 10] = [
        Stage::TrainAlign,
        Stage::Distances,
        Stage::Relate,
        Stage::Cluster,
        Stage::Characters,
        Stage::Phylo,
        Stage::Asr,
        Stage::Msa,
        Stage::Reconstruct,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::TrainAlign => "train-align",
            Stage::Distances => "distances",
            Stage::Relate => "relate",
            Stage::Cluster => "cluster",
            Stage::Characters => "characters",
            Stage::Phylo => "phylo",
            Stage::Asr => "asr",
            Stage::Msa => "msa",
            Stage::Reconstruct => "reconstruct",
            Stage::Evaluate => "evaluate",
            Stage::All => "all",
        }
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Stage, String> {
        Ok(match s {
            "train-align" => Stage::TrainAlign,
            "distances" => Stage::Distances,
            "relate" => Stage::Relate,
            "cluster" => Stage::Cluster,
            "characters" => Stage::Characters,
            "phylo" => Stage::Phylo,
            "asr" => Stage::Asr,
            "msa" => Stage::Msa,
            "reconstruct" => Stage::Reconstruct,
            "evaluate" => Stage::Evaluate,
            "all" => Stage::All,
            other => {
                return Err(format!(
                    "unknown stage \"{other}\" (expected one of train-align, distances, relate, cluster, characters, phylo, asr, msa, reconstruct, evaluate, all)"
                ))
            }
        })
    }
}

// Fixed artifact names.
pub const SCORING_MODEL: &str = "scoring_model.tsv";
pub const ALIGNMENT_DUMP: &str = "alignments.tsv";
pub const DISTANCES: &str = "pmi_distances.tsv";
pub const NULL_DISTANCES: &str = "null_distances.tsv";
pub const VERDICTS: &str = "relate_verdicts.tsv";
pub const CLASSES: &str = "cognate_classes.tsv";
pub const CHARACTERS: &str = "characters.tsv";
pub const CHAR_MANIFEST: &str = "characters_manifest.json";
pub const POSTERIOR_TREES: &str = "posterior.trees";
pub const POSTERIOR_SCALARS: &str = "posterior_scalars.tsv";
pub const MCC_TREE: &str = "mcc.nwk";
pub const PROTO_CLASSES: &str = "proto_classes.tsv";
pub const MSA_BLOCKS: &str = "msa_blocks.tsv";
pub const RECONSTRUCTIONS: &str = "reconstructions.tsv";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const FIG_DATA: &str = "fig6_data.tsv";
pub const MANIFEST: &str = "manifest.json";

pub struct Runner {
    cfg: RunConfig,
    dataset: Dataset,
}

impl Runner {
    pub fn new(cfg: RunConfig) -> Result<Runner, StageError> {
        let raw = std::fs::read_to_string(&cfg.data).map_err(|e| StageError {
            exit_code: EXIT_BAD_CONFIG,
            message: format!("cannot read data file {}: {e}", cfg.data.display()),
        })?;
        let mut dataset = parse_asjp_tsv(&raw, &concepts40()).map_err(|e| StageError {
            exit_code: EXIT_BAD_CONFIG,
            message: format!("data file: {e}"),
        })?;
        dataset
            .assign_roles(&cfg.outgroup, &cfg.gold)
            .map_err(|e| StageError {
                exit_code: EXIT_BAD_CONFIG,
                message: e.to_string(),
            })?;
        std::fs::create_dir_all(&cfg.out)?;
        Ok(Runner { cfg, dataset })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn read_artifact(&self, name: &str, needed_by: &str) -> Result<String, StageError> {
        std::fs::read_to_string(self.path(name))
            .map_err(|_| StageError::missing(name, needed_by))
    }

    fn write_artifact(
        &self,
        record: &mut StageRecord,
        name: &str,
        contents: &str,
    ) -> Result<(), StageError> {
        atomic_write(&self.path(name), contents.as_bytes())?;
        record
            .artifacts
            .insert(name.to_string(), checksum(contents.as_bytes()));
        Ok(())
    }

    fn finish_stage(&self, stage: Stage, record: StageRecord) -> Result<(), StageError> {
        let mpath = self.path(MANIFEST);
        let mut manifest = RunManifest::load(&mpath);
        manifest.config = self.cfg.as_map();
        let data_bytes = std::fs::read(&self.cfg.data)?;
        manifest.inputs.insert(
            self.cfg.data.display().to_string(),
            checksum(&data_bytes),
        );
        manifest.stages.insert(stage.name().to_string(), record);
        manifest.save(&mpath)?;
        Ok(())
    }

    pub fn run(&self, stage: Stage) -> Result<(), StageError> {
        if stage == Stage::All {
            for s in Stage::ORDER {
                self.run(s)?;
            }
            return Ok(());
        }
        let start = Instant::now();
        let mut record = StageRecord::default();
        match stage {
            Stage::TrainAlign => self.stage_train_align(&mut record)?,
            Stage::Distances => self.stage_distances(&mut record)?,
            Stage::Relate => self.stage_relate(&mut record)?,
            Stage::Cluster => self.stage_cluster(&mut record)?,
            Stage::Characters => self.stage_characters(&mut record)?,
            Stage::Phylo => self.stage_phylo(&mut record)?,
            Stage::Asr => self.stage_asr(&mut record)?,
            Stage::Msa => self.stage_msa(&mut record)?,
            Stage::Reconstruct => self.stage_reconstruct(&mut record)?,
            Stage::Evaluate => self.stage_evaluate(&mut record)?,
            Stage::All => unreachable!(),
        }
        record.seconds = start.elapsed().as_secs_f64();
        eprintln!("stage {} finished in {:.1}s", stage.name(), record.seconds);
        self.finish_stage(stage, record)
    }

    fn load_model(&self, needed_by: &str) -> Result<ScoringModel, StageError> {
        let text = self.read_artifact(SCORING_MODEL, needed_by)?;
        Ok(ScoringModel::from_tsv(&text)?)
    }

    fn load_classes(&self, needed_by: &str) -> Result<CognateClasses, StageError> {
        let text = self.read_artifact(CLASSES, needed_by)?;
        let mut assignments = vec![BTreeMap::new(); self.dataset.concepts.len()];
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != 4 {
                return Err(StageError::internal(format!(
                    "{CLASSES}: bad row at line {}",
                    i + 1
                )));
            }
            let concept = self
                .dataset
                .concept_index(cells[1])
                .ok_or_else(|| StageError::internal(format!("unknown concept {}", cells[1])))?;
            let label: u32 = cells[3]
                .parse()
                .map_err(|_| StageError::internal(format!("bad label {}", cells[3])))?;
            assignments[concept].insert(cells[0].to_string(), label);
        }
        Ok(CognateClasses { assignments })
    }

    fn load_matrix(&self, needed_by: &str) -> Result<CharacterMatrix, StageError> {
        let text = self.read_artifact(CHARACTERS, needed_by)?;
        Ok(CharacterMatrix::from_tsv(&text, &self.dataset.concepts)?)
    }

    fn load_posterior(
        &self,
        taxa: &[String],
        needed_by: &str,
    ) -> Result<Vec<(Tree, [KindParams; 2])>, StageError> {
        let trees_text = self.read_artifact(POSTERIOR_TREES, needed_by)?;
        let scalars_text = self.read_artifact(POSTERIOR_SCALARS, needed_by)?;
        let mut entries = Vec::new();
        let mut scalar_lines = scalars_text.lines().skip(1);
        for (i, newick) in trees_text.lines().enumerate() {
            if newick.trim().is_empty() {
                continue;
            }
            let tree = parse_newick(newick, taxa)?;
            let scalars = scalar_lines.next().ok_or_else(|| {
                StageError::internal(format!("{POSTERIOR_SCALARS} shorter than {POSTERIOR_TREES}"))
            })?;
            let cells: Vec<&str> = scalars.split('\t').collect();
            if cells.len() < 10 {
                return Err(StageError::internal(format!(
                    "{POSTERIOR_SCALARS}: bad row at line {}",
                    i + 2
                )));
            }
            let parse = |s: &str| -> Result<f64, StageError> {
                s.parse()
                    .map_err(|_| StageError::internal(format!("bad scalar \"{s}\"")))
            };
            let kinds = [
                KindParams {
                    pi1: parse(cells[6])?,
                    shape: parse(cells[7])?,
                },
                KindParams {
                    pi1: parse(cells[8])?,
                    shape: parse(cells[9])?,
                },
            ];
            entries.push((tree, kinds));
        }
        if entries.is_empty() {
            return Err(StageError::internal("posterior sample is empty"));
        }
        Ok(entries)
    }

    fn stage_train_align(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let model = train_scoring_model(
            &self.dataset,
            self.cfg.pmi_threshold,
            self.cfg.pmi_iterations,
        )?;
        self.write_artifact(record, SCORING_MODEL, &model.to_tsv())?;
        if self.cfg.dump_alignments {
            let mut dump = String::from("doculect_a\tdoculect_b\tconcept\ttop\tbottom\tscore\n");
            let docs = self.dataset.inference_doculects();
            for (c, concept) in self.dataset.concepts.iter().enumerate() {
                for i in 0..docs.len() {
                    let Some(a) = docs[i].entries[c].as_ref() else {
                        continue;
                    };
                    for doc_b in docs.iter().skip(i + 1) {
                        let Some(b) = doc_b.entries[c].as_ref() else {
                            continue;
                        };
                        let al = needleman_wunsch_affine(a, b, &model);
                        dump.push_str(&format!(
                            "{}\t{}\t{}\t{}\t{}\t{}\n",
                            docs[i].id,
                            doc_b.id,
                            concept,
                            al.top_string(),
                            al.bottom_string(),
                            al.score
                        ));
                    }
                }
            }
            self.write_artifact(record, ALIGNMENT_DUMP, &dump)?;
        }
        Ok(())
    }

    fn stage_distances(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let model = self.load_model("distances")?;
        let dm = distance_matrix(&self.dataset, &model)?;
        self.write_artifact(record, DISTANCES, &dm.to_tsv())
    }

    fn stage_relate(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let model = self.load_model("relate")?;
        let dm_text = self.read_artifact(DISTANCES, "relate")?;
        let dm = parse_distance_matrix(&dm_text)?;
        let null_distances = permutation_null_distances(
            &self.dataset,
            &model,
            self.cfg.null_permutations,
            self.cfg.seed,
            0,
        )?;
        let mut null_text = String::from("distance\n");
        for v in &null_distances {
            null_text.push_str(&format!("{v}\n"));
        }
        self.write_artifact(record, NULL_DISTANCES, &null_text)?;
        let null = fit_null(&null_distances)?;
        let verdicts = relatedness_test(&dm, &null, self.cfg.alpha);
        let related = verdicts.iter().filter(|v| v.related).count();
        record
            .notes
            .insert("related_pairs".into(), related.to_string());
        record
            .notes
            .insert("tested_pairs".into(), verdicts.len().to_string());
        self.write_artifact(record, VERDICTS, &verdicts_to_tsv(&verdicts))
    }

    fn stage_cluster(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let model = self.load_model("cluster")?;
        let (xs, ys) = synonymy_training_pairs(
            &self.dataset,
            &model,
            self.cfg.nonsyn_cap,
            self.cfg.seed,
        );
        let syn = fit_synonymy_model(&xs, &ys)?;
        record
            .notes
            .insert("synonymy_intercept".into(), syn.intercept.to_string());
        record
            .notes
            .insert("synonymy_slope".into(), syn.slope.to_string());
        let classes = cluster_dataset(
            &self.dataset,
            &model,
            &syn,
            self.cfg.edge_probability_threshold,
            self.cfg.seed,
        );
        self.write_artifact(record, CLASSES, &classes.to_tsv(&self.dataset))
    }

    fn stage_characters(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let classes = self.load_classes("characters")?;
        let matrix = build_characters(&self.dataset, &classes)?;
        self.write_artifact(record, CHARACTERS, &matrix.to_tsv())?;
        let manifest = serde_json::to_string_pretty(&matrix.manifest())
            .map_err(StageError::internal)?;
        self.write_artifact(record, CHAR_MANIFEST, &manifest)
    }

    fn stage_phylo(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let matrix = self.load_matrix("phylo")?;
        let data = CharData::from_matrix(&matrix);
        let mcmc_cfg = McmcConfig {
            generations: self.cfg.generations,
            chains: self.cfg.chains,
            burnin_frac: self.cfg.burnin_frac,
            retain_total: self.cfg.posterior_size,
            seed: self.cfg.seed,
            weights: MoveWeights::default(),
        };
        let sample = mcmc_sample(&data, &mcmc_cfg)?;

        let mut trees = String::new();
        let mut scalars = String::from(
            "chain\tgeneration\tlog_posterior\tlog_likelihood\tlog_prior\ttree_length\tpi1_class_label\tshape_class_label\tpi1_soundclass\tshape_soundclass\n",
        );
        for e in &sample.entries {
            trees.push_str(&e.tree.to_newick());
            trees.push('\n');
            scalars.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.chain,
                e.generation,
                e.log_posterior(),
                e.log_likelihood,
                e.log_prior,
                e.tree.tree_length(),
                e.kinds[0].pi1,
                e.kinds[0].shape,
                e.kinds[1].pi1,
                e.kinds[1].shape,
            ));
        }
        self.write_artifact(record, POSTERIOR_TREES, &trees)?;
        self.write_artifact(record, POSTERIOR_SCALARS, &scalars)?;
        for (name, (acc, total)) in &sample.acceptance {
            record.notes.insert(
                format!("acceptance_{name}"),
                format!("{:.4}", *acc as f64 / (*total).max(1) as f64),
            );
        }

        let (rooted, skipped) = root_posterior(&sample, &self.cfg.outgroup);
        record.notes.insert(
            "outgroup_non_monophyletic".into(),
            format!("{skipped}/{}", sample.entries.len()),
        );
        if rooted.is_empty() {
            return Err(StageError::internal(
                "no posterior tree had a monophyletic outgroup",
            ));
        }
        let mcc = maximum_clade_credibility(&rooted)?;
        self.write_artifact(record, MCC_TREE, &(mcc.to_newick() + "\n"))
    }

    fn stage_asr(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let matrix = self.load_matrix("asr")?;
        let entries = self.load_posterior(&matrix.doculects, "asr")?;
        let mut rooted = Vec::new();
        let mut skipped = 0usize;
        for (tree, kinds) in &entries {
            match tree.root_with_outgroup(&self.cfg.outgroup) {
                Ok(t) => rooted.push((t, *kinds)),
                Err(_) => skipped += 1,
            }
        }
        record.notes.insert(
            "outgroup_non_monophyletic".into(),
            format!("{skipped}/{}", entries.len()),
        );
        let (choices, unreconstructable) =
            select_proto_classes(&rooted, &matrix, &self.cfg.outgroup)?;
        if !unreconstructable.is_empty() {
            let names: Vec<&str> = unreconstructable
                .iter()
                .map(|&c| self.dataset.concepts[c].as_str())
                .collect();
            record
                .notes
                .insert("unreconstructable_concepts".into(), names.join(","));
        }
        self.write_artifact(
            record,
            PROTO_CLASSES,
            &choices_to_tsv(&choices, &self.dataset.concepts),
        )
    }

    fn stage_msa(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let model = self.load_model("msa")?;
        let classes = self.load_classes("msa")?;
        let proto_text = self.read_artifact(PROTO_CLASSES, "msa")?;
        let mcc_text = self.read_artifact(MCC_TREE, "msa")?;
        let matrix_docs: Vec<String> = self
            .dataset
            .inference_doculects()
            .iter()
            .map(|d| d.id.clone())
            .collect();
        let mcc = parse_newick(mcc_text.trim(), &matrix_docs)?;

        let mut out = String::from("concept\tclass_label\tdoculect\talignment\n");
        for line in proto_text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            let concept_name = cells[0];
            let label: u32 = cells[1]
                .parse()
                .map_err(|_| StageError::internal(format!("bad label {}", cells[1])))?;
            let concept = self
                .dataset
                .concept_index(concept_name)
                .ok_or_else(|| StageError::internal(format!("unknown concept {concept_name}")))?;
            let members: Vec<(String, PhoneticString)> = classes.assignments[concept]
                .iter()
                .filter(|(_, &l)| l == label)
                .map(|(doc, _)| {
                    let w = self
                        .dataset
                        .doculect(doc)
                        .and_then(|d| d.entries[concept].clone())
                        .expect("labeled word exists");
                    (doc.clone(), w)
                })
                .collect();
            let msa = msa_for_members(&members, &model, &mcc)?;
            for row in &msa.rows {
                out.push_str(&format!(
                    "{concept_name}\t{label}\t{}\t{}\n",
                    row.doculect,
                    row.gapped_string()
                ));
            }
        }
        self.write_artifact(record, MSA_BLOCKS, &out)
    }

    fn stage_reconstruct(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let matrix = self.load_matrix("reconstruct")?;
        let blocks_text = self.read_artifact(MSA_BLOCKS, "reconstruct")?;
        let entries = self.load_posterior(&matrix.doculects, "reconstruct")?;
        let mut rooted = Vec::new();
        for (tree, kinds) in &entries {
            if let Ok(t) = tree.root_with_outgroup(&self.cfg.outgroup) {
                rooted.push((t, *kinds));
            }
        }
        let msas = parse_msa_blocks(&blocks_text, &self.dataset)?;
        let forms = reconstruct_proto_forms(&msas, &rooted, &matrix.doculects, &self.cfg.outgroup)?;
        let unrecon: Vec<&str> = forms
            .iter()
            .filter(|f| f.form.is_none())
            .map(|f| self.dataset.concepts[f.concept].as_str())
            .collect();
        if !unrecon.is_empty() {
            record
                .notes
                .insert("all_gap_reconstructions".into(), unrecon.join(","));
        }
        let gold = gold_synonyms(&self.dataset)?;
        self.write_artifact(
            record,
            RECONSTRUCTIONS,
            &reconstructions_to_tsv(&forms, &gold, &self.dataset.concepts),
        )
    }

    fn stage_evaluate(&self, record: &mut StageRecord) -> Result<(), StageError> {
        let text = self.read_artifact(RECONSTRUCTIONS, "evaluate")?;
        let mut forms = Vec::new();
        for line in text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != 3 {
                return Err(StageError::internal(format!(
                    "{RECONSTRUCTIONS}: bad row \"{line}\""
                )));
            }
            let concept = self
                .dataset
                .concept_index(cells[0])
                .ok_or_else(|| StageError::internal(format!("unknown concept {}", cells[0])))?;
            let form = if cells[2] == "-" {
                None
            } else {
                Some(PhoneticString::parse(cells[2])?)
            };
            forms.push(ProtoForm {
                concept,
                form,
                columns: Vec::new(),
            });
        }
        let gold = gold_synonyms(&self.dataset)?;
        let report = evaluate(&forms, &gold, &self.dataset)?;
        record.notes.insert(
            "reconstruction_average".into(),
            report.reconstruction_average.to_string(),
        );
        let json = serde_json::to_string_pretty(&report).map_err(StageError::internal)?;
        self.write_artifact(record, EVAL_REPORT, &json)?;
        self.write_artifact(record, FIG_DATA, &eval_to_fig_tsv(&report))
    }
}

/// Gold synonym lists per concept (first gold doculect).
fn gold_synonyms(d: &Dataset) -> Result<Vec<Vec<PhoneticString>>, StageError> {
    let gold = d
        .gold_doculects()
        .first()
        .copied()
        .cloned()
        .ok_or_else(|| StageError::internal("no gold doculect in dataset"))?;
    Ok(gold.synonyms)
}

fn root_posterior(
    sample: &PosteriorSample,
    outgroup: &[String],
) -> (Vec<Tree>, usize) {
    let mut rooted = Vec::new();
    let mut skipped = 0usize;
    for PosteriorEntry { tree, .. } in &sample.entries {
        match tree.root_with_outgroup(outgroup) {
            Ok(t) => rooted.push(t),
            Err(_) => skipped += 1,
        }
    }
    (rooted, skipped)
}

/// MSA for a cognate set: guide tree pruned to the members, pair library
/// extended into consistency scores, progressive merge. Singleton sets
/// degenerate to the word itself.
fn msa_for_members(
    members: &[(String, PhoneticString)],
    model: &ScoringModel,
    mcc: &Tree,
) -> Result<Msa, StageError> {
    if members.is_empty() {
        return Err(StageError::internal("empty cognate set"));
    }
    if members.len() == 1 {
        let (doc, w) = &members[0];
        return Ok(Msa {
            rows: vec![MsaRow {
                doculect: doc.clone(),
                word_index: 0,
                word: w.clone(),
                cols: (0..w.len()).map(Some).collect(),
            }],
        });
    }
    let keep: std::collections::BTreeSet<usize> = members
        .iter()
        .map(|(doc, _)| {
            mcc.taxa
                .iter()
                .position(|t| t == doc)
                .ok_or_else(|| StageError::internal(format!("doculect {doc} not in guide tree")))
        })
        .collect::<Result<_, _>>()?;
    let guide = mcc.prune_to(&keep)?;
    let lib = build_pair_library(members, model)?;
    let ext = extend_library(&lib, members);
    Ok(progressive_align(members, &ext, &guide)?)
}

/// Rebuild per-concept MSAs from the serialized blocks.
fn parse_msa_blocks(
    text: &str,
    d: &Dataset,
) -> Result<Vec<(usize, Msa)>, StageError> {
    let mut grouped: BTreeMap<usize, Vec<(String, String)>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 4 {
            return Err(StageError::internal(format!("bad MSA block row \"{line}\"")));
        }
        let concept = d
            .concept_index(cells[0])
            .ok_or_else(|| StageError::internal(format!("unknown concept {}", cells[0])))?;
        grouped
            .entry(concept)
            .or_default()
            .push((cells[2].to_string(), cells[3].to_string()));
    }
    let mut out = Vec::new();
    for (concept, rows) in grouped {
        let msa_rows: Vec<MsaRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (doc, gapped))| {
                let letters: String = gapped.chars().filter(|&c| c != '-').collect();
                let word = PhoneticString::parse(&letters)?;
                let mut k = 0usize;
                let cols = gapped
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
                    .collect();
                Ok(MsaRow {
                    doculect: doc,
                    word_index: i,
                    word,
                    cols,
                })
            })
            .collect::<Result<_, protolex::Error>>()?;
        out.push((concept, Msa { rows: msa_rows }));
    }
    Ok(out)
}

fn parse_distance_matrix(text: &str) -> Result<protolex::relate::PmiDistanceMatrix, StageError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| StageError::internal("empty distance matrix"))?;
    let ids: Vec<String> = header.split('\t').skip(1).map(|s| s.to_string()).collect();
    let n = ids.len();
    let mut distances = vec![0.0; n * n];
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != n + 1 {
            return Err(StageError::internal(format!(
                "distance matrix row {} has {} cells",
                i + 2,
                cells.len()
            )));
        }
        for (j, cell) in cells.iter().skip(1).enumerate() {
            distances[i * n + j] = cell
                .parse()
                .map_err(|_| StageError::internal(format!("bad distance \"{cell}\"")))?;
        }
    }
    Ok(protolex::relate::PmiDistanceMatrix { ids, distances })
}
