//! File-backed pipeline stages. Each stage reads the artifacts of the
//! previous ones from the work directory and writes its own atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Item, ItemType, VoteSet};
use crate::datagen::{Generator, Seeds, TemplateBank, TranscriptEntry};
use crate::error::{Error, Result};
use crate::ga::{FoldPlan, WeightsRecord};
use crate::io::{read_human_votes, read_items, read_json, read_jsonl, write_atomic, write_json, write_jsonl};
use crate::prompting::collect::{base_record, group_model_votes, persona_records};
use crate::prompting::backend::API_KEY_ENV;
use crate::prompting::{Backend, CollectionConfig, Collector, HttpBackend, HttpSettings, ModelVoteRecord, Style, Trait};
use crate::seed::derive_seed;
use crate::survey::{human_votes, qc_csv, run_qc, AttentionCheck, ParticipantRecord, QcDecision};
use crate::text::{parse_stopwords, tokenize, Lexicon, NgramLM, DEFAULT_STOPWORDS};

use super::experiment::{
    dataset_stats, evaluate, fit, ml_baseline, EvalOutput, ExperimentData, ExperimentReport, FitOutput,
    MlBaselineReport,
};
use super::render;
use super::simulate::{attention_items, checks_for, simulate_participants, SimulationSettings};
use super::{require_file, BackendConfig, BackendKind, ExperimentConfig, PlanRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Datagen,
    Collect,
    SurveyQc,
    FitGa,
    Eval,
    MlBaseline,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Datagen => "datagen",
            Stage::Collect => "collect",
            Stage::SurveyQc => "survey-qc",
            Stage::FitGa => "fit-ga",
            Stage::Eval => "eval",
            Stage::MlBaseline => "ml-baseline",
            Stage::Report => "report",
        })
    }
}

/// Builds the configured backend. `max_tokens` overrides the HTTP cap.
pub fn make_backend(cfg: &BackendConfig, kind: BackendKind, max_tokens: Option<u32>) -> Box<dyn Backend> {
    match kind {
        BackendKind::Mock => Box::new(cfg.mock),
        BackendKind::Http => {
            let settings = HttpSettings {
                max_tokens: max_tokens.or(cfg.http.max_tokens),
                ..cfg.http.clone()
            };
            if std::env::var(API_KEY_ENV).map_or(true, |k| k.is_empty()) {
                log::warn!("{API_KEY_ENV} is not set; sending requests without an API key");
            }
            Box::new(HttpBackend::from_env(settings))
        }
    }
}

fn seeds(pairs: &[(&str, &str)]) -> Seeds {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// The built-in generation requests: a few items of every generatable type.
pub fn default_plan_requests() -> Vec<PlanRequest> {
    let mut out = Vec::new();
    let mut push = |item_type: ItemType, pairs: &[(&str, &str)]| {
        out.push(PlanRequest {
            item_type,
            seeds: seeds(pairs),
        })
    };
    for (id, gender, profession, race, religion) in [
        ("stereo-1", "woman", "engineer", "Asian", "Buddhist"),
        ("stereo-2", "man", "nurse", "Black", "Christian"),
        ("stereo-3", "woman", "lawyer", "Hispanic", "Catholic"),
        ("stereo-4", "man", "teacher", "White", "Jewish"),
        ("stereo-5", "woman", "farmer", "Arab", "Muslim"),
    ] {
        push(
            ItemType::StereoNLI,
            &[
                ("id", id),
                ("gender", gender),
                ("profession", profession),
                ("race", race),
                ("religion", religion),
            ],
        );
    }
    for (family, template) in [
        ("post_hoc", "1"),
        ("post_hoc", "4"),
        ("slippery_slope", "2"),
        ("slippery_slope", "7"),
        ("straw_person", "3"),
        ("straw_person", "9"),
    ] {
        let id = format!("fallacy-{family}-{template}");
        push(ItemType::Fallacy, &[("id", &id), ("family", family), ("template", template)]);
    }
    for (i, (word, figure)) in [("chess player", "1"), ("gardener", "2"), ("violinist", "3"), ("sailor", "4")]
        .iter()
        .enumerate()
    {
        let id = format!("syllogism-{}", i + 1);
        push(ItemType::Syllogism, &[("id", &id), ("seed_word", word), ("figure", figure)]);
    }
    for (i, (word, figure)) in [("nurse", "1"), ("mechanic", "3")].iter().enumerate() {
        let id = format!("stereo-syllogism-{}", i + 1);
        push(ItemType::StereoSyllogism, &[("id", &id), ("seed_word", word), ("figure", figure)]);
    }
    for (i, setting) in ["a small town bakery", "a university library"].iter().enumerate() {
        let id = format!("e-guilt-{}", i + 1);
        push(ItemType::EGuilt, &[("id", &id), ("setting", setting)]);
    }
    for (i, setting) in ["a harbor warehouse", "a mountain ski lodge"].iter().enumerate() {
        let id = format!("c-guilt-{}", i + 1);
        push(ItemType::CGuilt, &[("id", &id), ("setting", setting)]);
    }
    for (i, statement) in ["Lena is a generous person.", "Omar is an experienced pilot."].iter().enumerate() {
        let id = format!("p-primacy-{}", i + 1);
        push(ItemType::PPrimacyRecency, &[("id", &id), ("statement", statement)]);
    }
    for (i, (statement, negation)) in [
        ("Grace is a patient teacher.", "Grace is not a patient teacher."),
        ("Victor is an honest shopkeeper.", "Victor is not an honest shopkeeper."),
    ]
    .iter()
    .enumerate()
    {
        let id = format!("n-primacy-{}", i + 1);
        push(ItemType::NPrimacyRecency, &[("id", &id), ("statement", statement), ("negation", negation)]);
    }
    out
}

/// Calls of one executed plan, as stored in the transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub plan_id: String,
    pub item_type: ItemType,
    pub item_ids: Vec<String>,
    pub calls: Vec<TranscriptEntry>,
}

pub fn load_bank(cfg: &ExperimentConfig) -> Result<TemplateBank> {
    match &cfg.paths.templates {
        Some(p) => TemplateBank::load(&cfg.paths.resolve(p)),
        None => Ok(TemplateBank::bundled()),
    }
}

/// Runs every generation request. StereoNLI stories run in order and each
/// story after the first borrows the previous story's premise and
/// entailment conclusion for its neutral branch.
pub fn generate_items(
    cfg: &ExperimentConfig,
    backend: &dyn Backend,
) -> Result<(Vec<Item>, Vec<TranscriptRecord>)> {
    let bank = load_bank(cfg)?;
    let requests = if cfg.datagen.plans.is_empty() {
        default_plan_requests()
    } else {
        cfg.datagen.plans.clone()
    };
    let generator = Generator::new(backend).with_temperature(cfg.datagen.temperature);
    let mut items = Vec::new();
    let mut transcripts = Vec::new();
    let mut previous_story: Option<(String, String)> = None;
    for (i, req) in requests.iter().enumerate() {
        let mut seeds = req.seeds.clone();
        if req.item_type == ItemType::StereoNLI && !seeds.contains_key("other_premise") {
            if let Some((p, c)) = &previous_story {
                seeds.insert("other_premise".into(), p.clone());
                seeds.insert("other_conclusion".into(), c.clone());
            }
        }
        let rng_seed = derive_seed(cfg.seed, &["datagen", &i.to_string()]);
        let stage = |e: Error| e.in_stage(format!("datagen request {i} ({})", req.item_type));
        let plan = crate::datagen::plan_generation_with(&bank, req.item_type, &seeds, rng_seed).map_err(stage)?;
        let generated = generator.run(&plan).map_err(stage)?;
        if req.item_type == ItemType::StereoNLI {
            let text = |key: &str| {
                generated
                    .transcript
                    .iter()
                    .find(|t| t.key == key)
                    .map(|t| t.response.split_whitespace().collect::<Vec<_>>().join(" "))
            };
            if let (Some(p), Some(c)) = (text("premise"), text("conclusion_entailment")) {
                previous_story = Some((p, c));
            }
        }
        log::info!("generated {} item(s) from plan {}", generated.items.len(), plan.id);
        transcripts.push(TranscriptRecord {
            plan_id: generated.plan_id.clone(),
            item_type: req.item_type,
            item_ids: generated.items.iter().map(|it| it.id.clone()).collect(),
            calls: generated.transcript,
        });
        items.extend(generated.items);
    }
    Ok((items, transcripts))
}

/// Trains the perplexity model on the configured corpus or on the item texts.
pub fn build_lm(cfg: &ExperimentConfig, items: &[Item]) -> Result<NgramLM> {
    let corpus: Vec<String> = match &cfg.paths.lm_corpus {
        Some(p) => {
            let path = cfg.paths.resolve(p);
            std::fs::read_to_string(&path)
                .map_err(|e| Error::Io { path: path.clone(), source: e })?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect()
        }
        None => items
            .iter()
            .flat_map(|i| [i.premise.clone(), i.conclusion.clone()])
            .collect(),
    };
    let mut lm = NgramLM::new(cfg.features.lm_order)?;
    lm.train(&corpus)?;
    Ok(lm)
}

pub fn load_lexicon(cfg: &ExperimentConfig) -> Result<Lexicon> {
    match &cfg.paths.lexicon {
        Some(p) => Lexicon::load(&cfg.paths.resolve(p)),
        None => Ok(Lexicon::bundled()),
    }
}

pub fn load_stopwords(cfg: &ExperimentConfig) -> Result<BTreeSet<String>> {
    match &cfg.paths.stopwords {
        Some(p) => crate::text::load_stopwords(&cfg.paths.resolve(p)),
        None => Ok(parse_stopwords(DEFAULT_STOPWORDS)),
    }
}

/// Phase 1 time budget of each item from its length and perplexity.
pub fn base_times(cfg: &ExperimentConfig, items: &[Item], lm: &NgramLM) -> Result<BTreeMap<String, f64>> {
    items
        .iter()
        .map(|it| {
            let text = format!("{} {}", it.premise, it.conclusion);
            let words = tokenize(&text).len() as f64;
            let ppl = lm.perplexity(&text)?;
            Ok((it.id.clone(), cfg.survey.timing.base_time(words, ppl)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatagenSummary {
    /// Generated items, not counting the check items.
    pub items: usize,
    pub check_items: usize,
    /// Check presentations across both phases.
    pub attention_checks: usize,
    pub participants: usize,
}

/// `datagen`: items, transcripts, attention checks and (optionally)
/// simulated participants.
pub fn stage_datagen(cfg: &ExperimentConfig, backend: &dyn Backend) -> Result<DatagenSummary> {
    let (mut items, transcripts) = generate_items(cfg, backend)?;
    let checks_items = attention_items();
    let checks = checks_for(&checks_items);
    let generated = items.len();
    let check_items = checks_items.len();
    items.extend(checks_items.into_iter().map(|(i, _)| i));
    crate::data::validate_items(&items)?;
    let paths = &cfg.paths;
    write_jsonl(&paths.items(), &items)?;
    write_jsonl(&paths.transcripts(), &transcripts)?;
    write_json(&paths.attention_checks(), &checks)?;
    let mut participants = 0;
    if cfg.datagen.simulate_participants > 0 {
        let lm = build_lm(cfg, &items)?;
        let times = base_times(cfg, &items, &lm)?;
        let settings = SimulationSettings {
            participants: cfg.datagen.simulate_participants,
            careless_rate: cfg.datagen.careless_rate,
            incomplete_rate: cfg.datagen.incomplete_rate,
            seed: derive_seed(cfg.seed, &["survey"]),
        };
        let records = simulate_participants(&items, &checks, &times, &cfg.survey.timing, &settings)?;
        participants = records.len();
        write_jsonl(&paths.participants(), &records)?;
    }
    Ok(DatagenSummary {
        items: generated,
        check_items,
        attention_checks: checks.len(),
        participants,
    })
}

/// Which prompting styles `collect` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StyleChoice {
    Base,
    Persona,
    Both,
}

impl std::str::FromStr for StyleChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(StyleChoice::Base),
            "persona" => Ok(StyleChoice::Persona),
            "both" => Ok(StyleChoice::Both),
            other => Err(Error::Config(format!("unknown style `{other}`, expected base, persona or both"))),
        }
    }
}

pub fn collection_config(cfg: &ExperimentConfig) -> CollectionConfig {
    CollectionConfig {
        temperature: cfg.collection.temperature,
        max_attempts: cfg.collection.max_attempts,
        max_in_flight: cfg.collection.max_in_flight,
        seed: derive_seed(cfg.seed, &["collect"]),
    }
}

/// Votes for every non-check item and every requested style.
///
/// `existing` records are reused and never re-requested.
pub fn collect_votes(
    cfg: &ExperimentConfig,
    backend: &dyn Backend,
    items: &[Item],
    styles: StyleChoice,
    existing: Vec<ModelVoteRecord>,
    mut on_item: impl FnMut(&[ModelVoteRecord]) -> Result<()>,
) -> Result<Vec<ModelVoteRecord>> {
    let collector = Collector::new(backend, collection_config(cfg))?;
    let have: BTreeSet<(String, Style)> = existing.iter().map(|r| (r.item_id.clone(), r.style)).collect();
    let mut records = existing;
    for item in items.iter().filter(|i| i.item_type != ItemType::AttentionCheck) {
        let stage = |e: Error| e.in_stage(format!("collect `{}`", item.id));
        let mut fresh = Vec::new();
        let want_base = matches!(styles, StyleChoice::Base | StyleChoice::Both);
        let want_persona = matches!(styles, StyleChoice::Persona | StyleChoice::Both);
        if want_base && !have.contains(&(item.id.clone(), Style::Base)) {
            fresh.push(base_record(&item.id, collector.base_votes(item, cfg.scheme).map_err(stage)?));
        }
        let persona_done = Trait::ALL
            .iter()
            .all(|t| have.contains(&(item.id.clone(), Style::Persona(*t))));
        if want_persona && !persona_done {
            if Trait::ALL.iter().any(|t| have.contains(&(item.id.clone(), Style::Persona(*t)))) {
                return Err(Error::InvalidInput(format!(
                    "item `{}` has a partial set of persona records; remove them to recollect",
                    item.id
                )));
            }
            fresh.extend(persona_records(&collector.persona_votes(item, cfg.scheme).map_err(stage)?));
        }
        if !fresh.is_empty() {
            on_item(&fresh)?;
            records.extend(fresh);
        }
    }
    Ok(canonical_order(records, items))
}

fn canonical_order(mut records: Vec<ModelVoteRecord>, items: &[Item]) -> Vec<ModelVoteRecord> {
    let pos: BTreeMap<&str, usize> = items.iter().enumerate().map(|(i, it)| (it.id.as_str(), i)).collect();
    records.sort_by(|a, b| {
        let pa = pos.get(a.item_id.as_str()).copied().unwrap_or(usize::MAX);
        let pb = pos.get(b.item_id.as_str()).copied().unwrap_or(usize::MAX);
        (pa, &a.item_id, a.style).cmp(&(pb, &b.item_id, b.style))
    });
    records
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub items: usize,
    pub records: usize,
    pub new_records: usize,
}

/// `collect`: appends each item's new records as soon as they arrive, then
/// rewrites the file in canonical order.
pub fn stage_collect(cfg: &ExperimentConfig, backend: &dyn Backend, styles: StyleChoice) -> Result<CollectSummary> {
    let paths = &cfg.paths;
    require_file(&paths.items(), "items file")?;
    let items = read_items(&paths.items())?;
    let votes_path = paths.model_votes();
    let existing: Vec<ModelVoteRecord> = if votes_path.is_file() {
        read_jsonl(&votes_path)?
    } else {
        Vec::new()
    };
    let before = existing.len();
    if let Some(parent) = votes_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    let records = collect_votes(cfg, backend, &items, styles, existing, |fresh| {
        crate::io::append_jsonl(&votes_path, fresh)
    })?;
    write_jsonl(&votes_path, &records)?;
    Ok(CollectSummary {
        items: items.iter().filter(|i| i.item_type != ItemType::AttentionCheck).count(),
        records: records.len(),
        new_records: records.len() - before,
    })
}

/// Participants, checks and QC decisions.
pub struct SurveyInputs {
    pub records: Vec<ParticipantRecord>,
    pub checks: Vec<AttentionCheck>,
    pub decisions: Vec<(String, QcDecision)>,
}

pub fn load_survey(cfg: &ExperimentConfig) -> Result<Option<SurveyInputs>> {
    let paths = &cfg.paths;
    if !paths.participants().is_file() {
        return Ok(None);
    }
    require_file(&paths.attention_checks(), "attention check file")?;
    let records: Vec<ParticipantRecord> = read_jsonl(&paths.participants())?;
    let checks: Vec<AttentionCheck> = read_json(&paths.attention_checks())?;
    let decisions = run_qc(&records, &checks, &cfg.survey.qc).map_err(|e| e.in_stage("survey QC"))?;
    Ok(Some(SurveyInputs {
        records,
        checks,
        decisions,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcSummary {
    pub participants: usize,
    pub kept: usize,
    pub vote_sets: usize,
}

/// `survey-qc`: QC table and human vote sets from the participant file.
pub fn stage_survey_qc(cfg: &ExperimentConfig) -> Result<QcSummary> {
    require_file(&cfg.paths.participants(), "participant file")?;
    let survey = load_survey(cfg)?.expect("participant file exists");
    let votes = human_votes(&survey.records, &survey.decisions)?;
    write_atomic(&cfg.paths.qc(), qc_csv(&survey.decisions)?.as_bytes())?;
    let lines: Vec<crate::data::HumanVoteRecord> = votes.iter().map(Into::into).collect();
    write_jsonl(&cfg.paths.human_votes(), &lines)?;
    Ok(QcSummary {
        participants: survey.records.len(),
        kept: survey.decisions.iter().filter(|(_, d)| d.is_keep()).count(),
        vote_sets: votes.len(),
    })
}

/// Human votes from `human_votes.jsonl`, or from the participant file
/// through QC when that is all there is.
pub fn load_human_votes(cfg: &ExperimentConfig, survey: Option<&SurveyInputs>) -> Result<Vec<VoteSet>> {
    let path = cfg.paths.human_votes();
    if path.is_file() {
        return read_human_votes(&path);
    }
    match survey {
        Some(s) => human_votes(&s.records, &s.decisions),
        None => Err(Error::Config(format!(
            "no human votes: neither {} nor {} exists",
            path.display(),
            cfg.paths.participants().display()
        ))),
    }
}

/// Everything later stages read, loaded and joined.
pub struct Loaded {
    pub data: ExperimentData,
    pub survey: Option<SurveyInputs>,
}

/// Loads items, human votes and model votes. With `live` set, a missing
/// model vote file is filled by collecting from the configured backend
/// in memory.
pub fn load_inputs(cfg: &ExperimentConfig, live: bool) -> Result<Loaded> {
    let paths = &cfg.paths;
    require_file(&paths.items(), "items file")?;
    let items = read_items(&paths.items())?;
    let survey = load_survey(cfg)?;
    let human = load_human_votes(cfg, survey.as_ref())?;
    let records: Vec<ModelVoteRecord> = if paths.model_votes().is_file() {
        read_jsonl(&paths.model_votes())?
    } else if live {
        let backend = make_backend(&cfg.backend, cfg.backend.kind, None);
        collect_votes(cfg, backend.as_ref(), &items, StyleChoice::Both, Vec::new(), |_| Ok(()))?
    } else {
        return Err(Error::Config(format!(
            "model votes not found at {}; run collect first",
            paths.model_votes().display()
        )));
    };
    let model = group_model_votes(records, cfg.scheme)?;
    let lm = build_lm(cfg, &items)?;
    let lexicon = load_lexicon(cfg)?;
    let data = ExperimentData::assemble(
        &items,
        &human,
        model,
        cfg.scheme,
        cfg.phase,
        cfg.baselines.base_prompting,
        &lm,
        &lexicon,
    )?;
    Ok(Loaded { data, survey })
}

/// `fit-ga`: fold plan, fitted weights and the search trace.
pub fn stage_fit(cfg: &ExperimentConfig) -> Result<FitOutput> {
    let loaded = load_inputs(cfg, false)?;
    let out = fit(cfg, &loaded.data)?;
    write_json(&cfg.paths.folds(), &out.plan)?;
    write_json(&cfg.paths.weights(), &out.weights)?;
    write_json(&cfg.paths.fit(), &out.details)?;
    Ok(out)
}

fn load_fit(cfg: &ExperimentConfig) -> Result<(FoldPlan, Vec<WeightsRecord>)> {
    require_file(&cfg.paths.folds(), "fold plan (run fit-ga)")?;
    require_file(&cfg.paths.weights(), "weights file (run fit-ga)")?;
    Ok((read_json(&cfg.paths.folds())?, read_json(&cfg.paths.weights())?))
}

/// `eval`: recomputes every metric from the stored weights.
pub fn stage_eval(cfg: &ExperimentConfig) -> Result<EvalOutput> {
    let loaded = load_inputs(cfg, false)?;
    let (plan, weights) = load_fit(cfg)?;
    let out = evaluate(cfg, &loaded.data, &plan, &weights)?;
    write_json(&cfg.paths.eval(), &out)?;
    render::write_eval_tables(&cfg.paths.tables_dir(), &out)?;
    Ok(out)
}

/// `ml-baseline`: grid-searched classical models.
pub fn stage_ml(cfg: &ExperimentConfig) -> Result<MlBaselineReport> {
    let loaded = load_inputs(cfg, false)?;
    let stopwords = load_stopwords(cfg)?;
    let out = ml_baseline(cfg, &loaded.data, &stopwords)?;
    write_json(&cfg.paths.ml_baseline(), &out)?;
    render::write_ml_table(&cfg.paths.tables_dir(), &out)?;
    Ok(out)
}

fn survey_view(s: &Option<SurveyInputs>) -> Option<(&[ParticipantRecord], &[(String, QcDecision)])> {
    s.as_ref().map(|s| (s.records.as_slice(), s.decisions.as_slice()))
}

/// `report`: evaluation recomputed from the weights, the ML baseline file
/// when present, dataset statistics, tables and figures.
pub fn stage_report(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let loaded = load_inputs(cfg, false)?;
    let (plan, weights) = load_fit(cfg)?;
    let eval = evaluate(cfg, &loaded.data, &plan, &weights)?;
    let ml = if cfg.paths.ml_baseline().is_file() {
        Some(read_json(&cfg.paths.ml_baseline())?)
    } else {
        None
    };
    let stats = dataset_stats(&loaded.data, survey_view(&loaded.survey))?;
    let report = ExperimentReport::new(cfg, eval, weights, ml, stats)?;
    write_report(cfg, &report)?;
    Ok(report)
}

pub fn write_report(cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<()> {
    write_json(&cfg.paths.report(), report)?;
    render::write_report_tables(&cfg.paths.tables_dir(), report)?;
    render::write_figures(&cfg.paths.figures_dir(), report)
}

/// Runs fit, evaluation, the classical baselines and dataset statistics in
/// memory. Inputs are read from the configured paths; model votes are
/// collected from the backend when their file is missing.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let loaded = load_inputs(cfg, true).map_err(|e| e.in_stage("load"))?;
    let fitted = fit(cfg, &loaded.data).map_err(|e| e.in_stage("fit"))?;
    let eval = evaluate(cfg, &loaded.data, &fitted.plan, &fitted.weights).map_err(|e| e.in_stage("eval"))?;
    let ml = if cfg.ml.classifiers.is_empty() && cfg.ml.regressors.is_empty() {
        None
    } else {
        let stopwords = load_stopwords(cfg)?;
        Some(ml_baseline(cfg, &loaded.data, &stopwords).map_err(|e| e.in_stage("ml-baseline"))?)
    };
    let stats = dataset_stats(&loaded.data, survey_view(&loaded.survey)).map_err(|e| e.in_stage("stats"))?;
    ExperimentReport::new(cfg, eval, fitted.weights, ml, stats)
}
