//! Experiment runner: configuration, pipeline stages and report assembly.

pub mod experiment;
pub mod pipeline;
pub mod render;
pub mod simulate;
pub mod stats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{ItemType, Phase};
use crate::datagen::Seeds;
use crate::error::{Error, Result};
use crate::ga::{GaConfig, GaGrid};
use crate::labels::LabelScheme;
use crate::ml::{Family, ModelSpec};
use crate::prompting::{HttpSettings, MockBackend};
use crate::survey::{QcConfig, TimingParams};

pub use experiment::{ExperimentData, ExperimentReport};
pub use pipeline::run_experiment;
pub use pipeline::Stage;

/// Everything one experiment run needs. Every section has defaults, so an
/// empty file is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Scheme the model votes are collected and scored on. Human votes are
    /// always six-way and collapsed when this is `3way`.
    pub scheme: LabelScheme,
    /// Which survey phase the human distributions come from.
    pub phase: Phase,
    pub folds: usize,
    pub paths: Paths,
    pub backend: BackendConfig,
    pub collection: CollectionSettings,
    pub ga: GaConfig,
    pub ga_grid: GaGrid,
    pub ml: MlConfig,
    pub baselines: Baselines,
    pub datagen: DatagenConfig,
    pub survey: SurveyConfig,
    pub features: FeatureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            scheme: LabelScheme::SixWay,
            phase: Phase::System1,
            folds: 5,
            paths: Paths::default(),
            backend: BackendConfig::default(),
            collection: CollectionSettings::default(),
            ga: GaConfig::default(),
            ga_grid: GaGrid::default(),
            ml: MlConfig::default(),
            baselines: Baselines::default(),
            datagen: DatagenConfig::default(),
            survey: SurveyConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

/// File names, resolved against `work_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub work_dir: PathBuf,
    pub items: PathBuf,
    pub transcripts: PathBuf,
    pub participants: PathBuf,
    pub attention_checks: PathBuf,
    pub human_votes: PathBuf,
    pub qc: PathBuf,
    pub model_votes: PathBuf,
    pub folds: PathBuf,
    pub weights: PathBuf,
    pub fit: PathBuf,
    pub eval: PathBuf,
    pub ml_baseline: PathBuf,
    pub report: PathBuf,
    pub tables_dir: PathBuf,
    pub figures_dir: PathBuf,
    /// Optional template bank replacing the bundled one.
    pub templates: Option<PathBuf>,
    /// Optional sentiment lexicon (`token<TAB>valence`).
    pub lexicon: Option<PathBuf>,
    /// Optional stopword list, one token per line.
    pub stopwords: Option<PathBuf>,
    /// Optional text file, one sentence per line, for the perplexity model.
    /// The item texts are used when absent.
    pub lm_corpus: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work_dir: PathBuf::from("."),
            items: "items.jsonl".into(),
            transcripts: "gen_transcripts.jsonl".into(),
            participants: "participants.jsonl".into(),
            attention_checks: "attention_checks.json".into(),
            human_votes: "human_votes.jsonl".into(),
            qc: "qc.csv".into(),
            model_votes: "model_votes.jsonl".into(),
            folds: "folds.json".into(),
            weights: "weights.json".into(),
            fit: "fit.json".into(),
            eval: "eval.json".into(),
            ml_baseline: "ml_baseline.json".into(),
            report: "report.json".into(),
            tables_dir: "tables".into(),
            figures_dir: "figures".into(),
            templates: None,
            lexicon: None,
            stopwords: None,
            lm_corpus: None,
        }
    }
}

impl Paths {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.work_dir.join(p)
        }
    }

    pub fn items(&self) -> PathBuf {
        self.resolve(&self.items)
    }
    pub fn transcripts(&self) -> PathBuf {
        self.resolve(&self.transcripts)
    }
    pub fn participants(&self) -> PathBuf {
        self.resolve(&self.participants)
    }
    pub fn attention_checks(&self) -> PathBuf {
        self.resolve(&self.attention_checks)
    }
    pub fn human_votes(&self) -> PathBuf {
        self.resolve(&self.human_votes)
    }
    pub fn qc(&self) -> PathBuf {
        self.resolve(&self.qc)
    }
    pub fn model_votes(&self) -> PathBuf {
        self.resolve(&self.model_votes)
    }
    pub fn folds(&self) -> PathBuf {
        self.resolve(&self.folds)
    }
    pub fn weights(&self) -> PathBuf {
        self.resolve(&self.weights)
    }
    pub fn fit(&self) -> PathBuf {
        self.resolve(&self.fit)
    }
    pub fn eval(&self) -> PathBuf {
        self.resolve(&self.eval)
    }
    pub fn ml_baseline(&self) -> PathBuf {
        self.resolve(&self.ml_baseline)
    }
    pub fn report(&self) -> PathBuf {
        self.resolve(&self.report)
    }
    pub fn tables_dir(&self) -> PathBuf {
        self.resolve(&self.tables_dir)
    }
    pub fn figures_dir(&self) -> PathBuf {
        self.resolve(&self.figures_dir)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => Err(Error::Config(format!("unknown backend `{other}`, expected mock or http"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub mock: MockBackend,
    pub http: HttpSettings,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            mock: MockBackend::default(),
            http: HttpSettings::default(),
        }
    }
}

/// Vote collection knobs. The seed is derived from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectionSettings {
    pub temperature: f64,
    pub max_attempts: usize,
    pub max_in_flight: usize,
}

impl Default for CollectionSettings {
    fn default() -> Self {
        CollectionSettings {
            temperature: 1.0,
            max_attempts: 3,
            max_in_flight: 4,
        }
    }
}

/// Input encodings for the classical models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// The seven hand-built features.
    Base,
    /// Base features plus bag-of-words counts.
    Counts,
    /// Base features plus tf-idf weights.
    Tfidf,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Base => "base",
            Encoding::Counts => "counts",
            Encoding::Tfidf => "tfidf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlConfig {
    /// Families tried on gold-label classification.
    pub classifiers: Vec<Family>,
    /// Families tried on vote-variance regression.
    pub regressors: Vec<Family>,
    pub encodings: Vec<Encoding>,
    /// Grid overrides per family name; families not listed use a small default grid.
    pub grids: BTreeMap<String, Vec<ModelSpec>>,
    /// Ridge penalty of the parametric EMS baseline.
    pub parametric_lambda: f64,
}

impl Default for MlConfig {
    fn default() -> Self {
        MlConfig {
            classifiers: vec![
                Family::MajorityClass,
                Family::SgdLinear,
                Family::DecisionTree,
                Family::RandomForest,
                Family::FeedForward,
            ],
            regressors: vec![
                Family::Mean,
                Family::Median,
                Family::SgdLinear,
                Family::DecisionTree,
                Family::RandomForest,
                Family::FeedForward,
                Family::Ridge,
            ],
            encodings: vec![Encoding::Base, Encoding::Counts, Encoding::Tfidf],
            grids: BTreeMap::new(),
            parametric_lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Baselines {
    pub base_prompting: bool,
    pub uniform: bool,
    pub normal: bool,
    pub ml_parametric: bool,
}

impl Default for Baselines {
    fn default() -> Self {
        Baselines {
            base_prompting: true,
            uniform: true,
            normal: true,
            ml_parametric: true,
        }
    }
}

/// One generation request: an item type and its seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub item_type: ItemType,
    #[serde(default)]
    pub seeds: Seeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenConfig {
    /// Plans to run; empty means the built-in seed set.
    pub plans: Vec<PlanRequest>,
    pub temperature: f64,
    /// Completion length cap for generation calls on the HTTP backend.
    pub max_tokens: u32,
    /// Simulated survey participants written next to the items; 0 disables.
    pub simulate_participants: usize,
    /// Share of simulated participants answering at random.
    pub careless_rate: f64,
    /// Share of simulated participants who stop early.
    pub incomplete_rate: f64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            plans: Vec::new(),
            temperature: 1.0,
            max_tokens: 400,
            simulate_participants: 60,
            careless_rate: 0.1,
            incomplete_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveyConfig {
    pub timing: TimingParams,
    pub qc: QcConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub lm_order: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { lm_order: 3 }
    }
}

impl ExperimentConfig {
    /// Reads a TOML or JSON config. The format follows the extension and
    /// falls back to trying both. A relative `work_dir` is taken relative
    /// to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let mut cfg = match ext {
            "toml" => Self::from_toml(&text)?,
            "json" => Self::from_json(&text)?,
            _ => Self::from_toml(&text).or_else(|_| Self::from_json(&text))?,
        };
        if cfg.paths.work_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.paths.work_dir = base.join(&cfg.paths.work_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("toml: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("json: {e}")))
    }

    /// Checks values that do not depend on files.
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        self.ga.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.ga_grid.cells().is_empty() {
            return Err(Error::Config("ga_grid has no cells".into()));
        }
        if self.collection.max_attempts == 0 || self.collection.max_in_flight == 0 {
            return Err(Error::Config("collection.max_attempts and max_in_flight must be positive".into()));
        }
        if self.ml.encodings.is_empty() {
            return Err(Error::Config("ml.encodings is empty".into()));
        }
        if !(self.ml.parametric_lambda > 0.0) {
            return Err(Error::Config("ml.parametric_lambda must be positive".into()));
        }
        for name in self.ml.grids.keys() {
            let known = self
                .ml
                .classifiers
                .iter()
                .chain(&self.ml.regressors)
                .any(|f| f.name() == name);
            if !known {
                return Err(Error::Config(format!("ml.grids has an entry for unused family `{name}`")));
            }
        }
        for rate in [self.datagen.careless_rate, self.datagen.incomplete_rate] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("datagen rate {rate} outside [0, 1]")));
            }
        }
        if self.features.lm_order == 0 {
            return Err(Error::Config("features.lm_order must be >= 1".into()));
        }
        Ok(())
    }

    /// Grid for `family`: the configured override or the default.
    pub fn ml_grid(&self, family: Family) -> Vec<ModelSpec> {
        let seed = crate::seed::derive_seed(self.seed, &["ml", family.name()]);
        match self.ml.grids.get(family.name()) {
            Some(specs) => specs.iter().map(|s| ModelSpec { seed, ..*s }).collect(),
            None => crate::ml::default_grid(family, seed),
        }
    }
}

/// Errors with a config error unless `path` exists.
pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} not found at {}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_configs_take_defaults() {
        let t = ExperimentConfig::from_toml("").unwrap();
        let j = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(t, ExperimentConfig::default());
        assert_eq!(j, t);
        assert_eq!(t.folds, 5);
        assert_eq!(t.ga.population, 256);
        t.validate().unwrap();
    }

    #[test]
    fn toml_overrides_nested_fields() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 11\nscheme = \"3way\"\nphase = 2\n[ga]\ngenerations = 4\n[paths]\nwork_dir = \"out\"\n[backend]\nkind = \"http\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.scheme, LabelScheme::ThreeWay);
        assert_eq!(cfg.phase, Phase::System2);
        assert_eq!(cfg.ga.generations, 4);
        assert_eq!(cfg.ga.population, 256);
        assert_eq!(cfg.backend.kind, BackendKind::Http);
        assert_eq!(cfg.paths.report(), PathBuf::from("out/report.json"));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(ExperimentConfig::from_toml("sed = 3"), Err(Error::Config(_))));
        let cfg = ExperimentConfig::from_toml("folds = 1").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn load_resolves_work_dir_next_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"paths": {"work_dir": "run"}}"#).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.work_dir, dir.path().join("run"));
    }
}
