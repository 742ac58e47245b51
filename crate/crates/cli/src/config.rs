//! Run configuration: every tunable of the pipeline with its default,
//! loadable from a flat key=value file and overridable by CLI flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// All pipeline tunables. Defaults reproduce the reference configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub gap_open: f64,
    pub gap_extend: f64,
    pub pmi_threshold: f64,
    pub pmi_iterations: usize,
    pub nonsyn_cap: usize,
    pub edge_probability_threshold: f64,
    pub alpha: f64,
    pub gamma_categories: usize,
    pub posterior_size: usize,
    pub chains: usize,
    pub generations: usize,
    pub burnin_frac: f64,
    pub null_permutations: usize,
    pub outgroup: Vec<String>,
    pub gold: Vec<String>,
    pub threads: usize,
    pub dump_alignments: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: PathBuf::from("data/romance_albanian_latin.tsv"),
            out: PathBuf::from("run"),
            seed: 42,
            gap_open: -2.49,
            gap_extend: -1.70,
            pmi_threshold: 4.45,
            pmi_iterations: 10,
            nonsyn_cap: protolex::cognate::NONSYN_CAP,
            edge_probability_threshold: 0.5,
            alpha: 1e-4,
            gamma_categories: 4,
            posterior_size: 2_000,
            chains: 2,
            generations: 1_100_000,
            burnin_frac: 0.10,
            null_permutations: 5_000,
            outgroup: vec![
                "ALBANIAN".into(),
                "ALBANIAN_GHEG".into(),
                "ALBANIAN_TOSK".into(),
            ],
            gold: vec!["LATIN".into()],
            threads: 0,
            dump_alignments: false,
        }
    }
}

impl RunConfig {
    /// The reduced-effort profile: smaller posterior, shorter chains.
    pub fn apply_fast_profile(&mut self) {
        self.posterior_size = 200;
        self.generations = 200_000;
    }

    /// Parse a flat `key = value` file over the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(format!("config line {}: expected key = value", lineno + 1))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| format!("config line {}: {e}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value \"{v}\" for {key}"))
        }
        match key {
            "data" => self.data = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = num(value, key)?,
            "gap_open" => self.gap_open = num(value, key)?,
            "gap_extend" => self.gap_extend = num(value, key)?,
            "pmi_threshold" => self.pmi_threshold = num(value, key)?,
            "pmi_iterations" => self.pmi_iterations = num(value, key)?,
            "nonsyn_cap" => self.nonsyn_cap = num(value, key)?,
            "edge_probability_threshold" => {
                self.edge_probability_threshold = num(value, key)?
            }
            "alpha" => self.alpha = num(value, key)?,
            "gamma_categories" => self.gamma_categories = num(value, key)?,
            "posterior_size" => self.posterior_size = num(value, key)?,
            "chains" => self.chains = num(value, key)?,
            "generations" => self.generations = num(value, key)?,
            "burnin_frac" => self.burnin_frac = num(value, key)?,
            "null_permutations" => self.null_permutations = num(value, key)?,
            "outgroup" => {
                self.outgroup = value.split(',').map(|s| s.trim().to_string()).collect()
            }
            "gold" => self.gold = value.split(',').map(|s| s.trim().to_string()).collect(),
            "threads" => self.threads = num(value, key)?,
            "dump_alignments" => self.dump_alignments = num(value, key)?,
            other => return Err(format!("unknown config key \"{other}\"")),
        }
        Ok(())
    }

    /// Validate every tunable against its legal range.
    pub fn validate(&self) -> Result<(), String> {
        fn check(ok: bool, msg: &str) -> Result<(), String> {
            if ok {
                Ok(())
            } else {
                Err(msg.to_string())
            }
        }
        check(
            self.gap_open.is_finite() && self.gap_open <= 0.0,
            "gap_open must be finite and <= 0",
        )?;
        check(
            self.gap_extend.is_finite() && self.gap_extend <= 0.0,
            "gap_extend must be finite and <= 0",
        )?;
        check(self.pmi_threshold.is_finite(), "pmi_threshold must be finite")?;
        check(
            (1..=1000).contains(&self.pmi_iterations),
            "pmi_iterations must be in 1..=1000",
        )?;
        check(self.nonsyn_cap >= 1000, "nonsyn_cap must be >= 1000")?;
        check(
            self.edge_probability_threshold > 0.0 && self.edge_probability_threshold < 1.0,
            "edge_probability_threshold must be in (0,1)",
        )?;
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha must be in (0,1)")?;
        check(
            self.gamma_categories == 4,
            "gamma_categories must be 4 (the rate model is fixed at four categories)",
        )?;
        check(self.posterior_size >= 1, "posterior_size must be >= 1")?;
        check(self.chains >= 1, "chains must be >= 1")?;
        check(
            self.generations >= 1000,
            "generations must be >= 1000",
        )?;
        check(
            (0.0..=0.9).contains(&self.burnin_frac),
            "burnin_frac must be in [0, 0.9]",
        )?;
        check(
            self.null_permutations >= 100,
            "null_permutations must be >= 100",
        )?;
        check(!self.outgroup.is_empty(), "outgroup must not be empty")?;
        check(!self.gold.is_empty(), "gold must not be empty")?;
        Ok(())
    }

    /// Snapshot for the manifest.
    pub fn as_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("data".into(), self.data.display().to_string());
        m.insert("out".into(), self.out.display().to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("gap_open".into(), self.gap_open.to_string());
        m.insert("gap_extend".into(), self.gap_extend.to_string());
        m.insert("pmi_threshold".into(), self.pmi_threshold.to_string());
        m.insert("pmi_iterations".into(), self.pmi_iterations.to_string());
        m.insert("nonsyn_cap".into(), self.nonsyn_cap.to_string());
        m.insert(
            "edge_probability_threshold".into(),
            self.edge_probability_threshold.to_string(),
        );
        m.insert("alpha".into(), self.alpha.to_string());
        m.insert("gamma_categories".into(), self.gamma_categories.to_string());
        m.insert("posterior_size".into(), self.posterior_size.to_string());
        m.insert("chains".into(), self.chains.to_string());
        m.insert("generations".into(), self.generations.to_string());
        m.insert("burnin_frac".into(), self.burnin_frac.to_string());
        m.insert(
            "null_permutations".into(),
            self.null_permutations.to_string(),
        );
        m.insert("outgroup".into(), self.outgroup.join(","));
        m.insert("gold".into(), self.gold.join(","));
        m.insert("threads".into(), self.threads.to_string());
        m.insert("dump_alignments".into(), self.dump_alignments.to_string());
        m
    }
}
