//! Item generation pipelines driven by a chat backend.
//!
//! A [`GenerationPlan`] is an ordered list of steps. Backend calls produce
//! named values, later calls consume them through `{slot}` placeholders, and
//! the plan ends by rephrasing every premise and conclusion in a call of its
//! own. Premises and conclusions are never requested in the same call.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Item, ItemType};
use crate::error::{Error, Result};
use crate::prompting::Backend;
use crate::seed::derive_seed;

const BUNDLED_TEMPLATES: &str = include_str!("../data/templates.json");

/// Caller-supplied seed words and choices, keyed by name.
pub type Seeds = BTreeMap<String, String>;

// ---------------------------------------------------------------------------
// Template bank

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RephraseTemplates {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StereoNliTemplates {
    pub premise_system: String,
    pub premise_user: String,
    pub entailment_user: String,
    pub contradiction_user: String,
    pub neutral_user: String,
}

/// A premise template and the conclusion template it pairs with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePair(pub String, pub String);

impl TemplatePair {
    pub fn premise(&self) -> &str {
        &self.0
    }

    pub fn conclusion(&self) -> &str {
        &self.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallacyTemplates {
    pub premise_system: String,
    pub premise_user: String,
    pub conclusion_system: String,
    pub conclusion_user: String,
    pub post_hoc: Vec<TemplatePair>,
    pub slippery_slope: Vec<TemplatePair>,
    pub straw_person: Vec<TemplatePair>,
}

/// Term order of one syllogistic figure, e.g. major "M is P", minor "S is M".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Figure {
    pub major: String,
    pub minor: String,
    pub conclusion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyllogismTemplates {
    pub premise_system: String,
    pub premise_user: String,
    pub conclusion_system: String,
    pub conclusion_user: String,
    pub figures: Vec<Figure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiltTemplates {
    pub crime_system: String,
    pub crime_user: String,
    pub features_system: String,
    pub features_user: String,
    pub suspect_entailment_system: String,
    pub suspect_contradiction_system: String,
    pub suspect_user: String,
    pub verdict_system: String,
    pub verdict_user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimacyRecencyTemplates {
    pub likely_true_system: String,
    pub likely_false_system: String,
    pub user: String,
    pub likely_true_count: usize,
    pub likely_false_count: usize,
}

/// Every prompt string used by the generation pipelines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateBank {
    pub version: u32,
    pub rephrase: RephraseTemplates,
    pub stereo_nli: StereoNliTemplates,
    pub fallacy: FallacyTemplates,
    pub syllogism: SyllogismTemplates,
    pub guilt: GuiltTemplates,
    pub primacy_recency: PrimacyRecencyTemplates,
}

impl TemplateBank {
    /// The bank shipped with the crate.
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_TEMPLATES).expect("bundled template bank parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bank: TemplateBank = serde_json::from_str(&text)?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        if self.syllogism.figures.is_empty() {
            return Err(Error::Config("template bank has no syllogism figures".into()));
        }
        for family in FallacyFamily::ALL {
            if self.fallacy_pairs(family).is_empty() {
                return Err(Error::Config(format!("template bank has no {family} templates")));
            }
        }
        Ok(())
    }

    pub fn fallacy_pairs(&self, family: FallacyFamily) -> &[TemplatePair] {
        match family {
            FallacyFamily::PostHoc => &self.fallacy.post_hoc,
            FallacyFamily::SlipperySlope => &self.fallacy.slippery_slope,
            FallacyFamily::StrawPerson => &self.fallacy.straw_person,
        }
    }
}

impl Default for TemplateBank {
    fn default() -> Self {
        Self::bundled()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallacyFamily {
    PostHoc,
    SlipperySlope,
    StrawPerson,
}

impl FallacyFamily {
    pub const ALL: [FallacyFamily; 3] = [
        FallacyFamily::PostHoc,
        FallacyFamily::SlipperySlope,
        FallacyFamily::StrawPerson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FallacyFamily::PostHoc => "post_hoc",
            FallacyFamily::SlipperySlope => "slippery_slope",
            FallacyFamily::StrawPerson => "straw_person",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        FallacyFamily::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| Error::InvalidInput(format!("unknown fallacy family `{s}`")))
    }
}

impl fmt::Display for FallacyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Prompt text with unresolved slots

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Text(String),
    /// Filled at run time from the value with this key.
    Slot(String),
}

/// A prompt whose plan-time placeholders are already substituted.
///
/// Kept as segments so text inserted from seeds is never re-scanned for
/// placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptText {
    segments: Vec<Segment>,
}

fn is_slot_name(name: &str) -> bool {
    !name.is_empty() && !name.contains(['{', '}', '\n'])
}

impl PromptText {
    pub fn literal(text: &str) -> Self {
        PromptText {
            segments: if text.is_empty() {
                Vec::new()
            } else {
                vec![Segment::Text(text.to_string())]
            },
        }
    }

    /// Parses `{name}` placeholders in `template`. Names found in `consts`
    /// are substituted now; names in `slots` become run-time slots, renamed
    /// to the given value key. Any other placeholder is an error.
    pub fn bind(template: &str, consts: &[(&str, &str)], slots: &[(&str, &str)]) -> Result<Self> {
        let mut segments: Vec<Segment> = Vec::new();
        let push_text = |segments: &mut Vec<Segment>, s: &str| {
            if s.is_empty() {
                return;
            }
            if let Some(Segment::Text(t)) = segments.last_mut() {
                t.push_str(s);
            } else {
                segments.push(Segment::Text(s.to_string()));
            }
        };
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            let close = rest[open..].find('}').map(|c| open + c);
            let name = close.map(|c| &rest[open + 1..c]).filter(|n| is_slot_name(n));
            let (Some(close), Some(name)) = (close, name) else {
                push_text(&mut segments, &rest[..=open]);
                rest = &rest[open + 1..];
                continue;
            };
            push_text(&mut segments, &rest[..open]);
            if let Some((_, v)) = consts.iter().find(|(k, _)| *k == name) {
                push_text(&mut segments, v);
            } else if let Some((_, key)) = slots.iter().find(|(k, _)| *k == name) {
                segments.push(Segment::Slot(key.to_string()));
            } else {
                return Err(Error::Config(format!("template placeholder `{{{name}}}` has no binding")));
            }
            rest = &rest[close + 1..];
        }
        push_text(&mut segments, rest);
        Ok(PromptText { segments })
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(k) => Some(k.as_str()),
            Segment::Text(_) => None,
        })
    }

    pub fn is_resolved(&self) -> bool {
        self.slots().next().is_none()
    }

    pub fn render(&self, values: &BTreeMap<String, String>) -> Result<String> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(k) => out.push_str(
                    values
                        .get(k)
                        .ok_or_else(|| Error::InvalidInput(format!("no value for slot `{k}`")))?,
                ),
            }
        }
        Ok(out)
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => f.write_str(t)?,
                Segment::Slot(k) => write!(f, "{{{k}}}")?,
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Plans

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallRole {
    Premise,
    Conclusion,
    Rephrase,
    Auxiliary,
}

/// How a completion becomes the call's value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputKind {
    /// Whitespace-normalized text.
    Text,
    /// First nonempty line.
    FirstLine,
    /// One entry per nonempty line, list markers stripped.
    Lines,
    /// `KEY: value` lines filled into the bracket slots of `template`.
    Fill { template: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptCall {
    /// Name of the value this call produces.
    pub key: String,
    pub role: CallRole,
    pub system: PromptText,
    pub user: PromptText,
    pub output: OutputKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Part {
    /// All lines of a value joined by spaces.
    Value { key: String },
    Line { key: String, index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Call(PromptCall),
    /// Keeps `count` lines of a list value, chosen by the selection hook.
    Select { from: String, count: usize, into: String },
    /// Space-joins parts into a new value.
    Compose { into: String, parts: Vec<Part> },
    Literal { into: String, text: String },
}

impl Step {
    fn produces(&self) -> &str {
        match self {
            Step::Call(c) => &c.key,
            Step::Select { into, .. } | Step::Compose { into, .. } | Step::Literal { into, .. } => into,
        }
    }

    fn consumes(&self) -> Vec<&str> {
        match self {
            Step::Call(c) => c.system.slots().chain(c.user.slots()).collect(),
            Step::Select { from, .. } => vec![from.as_str()],
            Step::Compose { parts, .. } => parts
                .iter()
                .map(|p| match p {
                    Part::Value { key } | Part::Line { key, .. } => key.as_str(),
                })
                .collect(),
            Step::Literal { .. } => Vec::new(),
        }
    }
}

/// How one generated item is read off the plan's values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub id: String,
    pub item_type: ItemType,
    pub premise_key: String,
    pub conclusion_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub id: String,
    pub item_type: ItemType,
    pub template_id: String,
    pub seeds: Seeds,
    pub rng_seed: u64,
    pub steps: Vec<Step>,
    pub items: Vec<ItemSpec>,
}

impl GenerationPlan {
    pub fn calls(&self) -> impl Iterator<Item = &PromptCall> {
        self.steps.iter().filter_map(|s| match s {
            Step::Call(c) => Some(c),
            _ => None,
        })
    }

    /// Index among the calls of the call producing `key`.
    pub fn call_index(&self, key: &str) -> Option<usize> {
        self.calls().position(|c| c.key == key)
    }

    /// Checks every value is produced once before use and that each item's
    /// premise and conclusion come from distinct rephrase calls closing the plan.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("plan `{}`: {m}", self.id)));
        let mut known = BTreeSet::new();
        for step in &self.steps {
            for k in step.consumes() {
                if !known.contains(k) {
                    return bad(format!("value `{k}` used before it is produced"));
                }
            }
            if !known.insert(step.produces().to_string()) {
                return bad(format!("value `{}` produced twice", step.produces()));
            }
        }
        if self.items.is_empty() {
            return bad("no items".into());
        }
        let calls: Vec<&PromptCall> = self.calls().collect();
        let mut finals = BTreeSet::new();
        for spec in &self.items {
            if spec.premise_key == spec.conclusion_key {
                return bad(format!("item `{}` reads premise and conclusion from one value", spec.id));
            }
            for key in [&spec.premise_key, &spec.conclusion_key] {
                match calls.iter().find(|c| &c.key == key) {
                    Some(c) if c.role == CallRole::Rephrase => {
                        finals.insert(key.as_str());
                    }
                    _ => return bad(format!("item `{}` value `{key}` is not a rephrase call", spec.id)),
                }
            }
        }
        let tail: BTreeSet<&str> = calls[calls.len() - finals.len()..]
            .iter()
            .map(|c| c.key.as_str())
            .collect();
        if tail != finals {
            return bad("plan does not end with the rephrase calls".into());
        }
        Ok(())
    }
}

/// The rephrasing call for one finished sentence.
pub fn rephrase_call(sentence: &str) -> Result<PromptCall> {
    rephrase_call_with(&TemplateBank::bundled(), sentence)
}

pub fn rephrase_call_with(bank: &TemplateBank, sentence: &str) -> Result<PromptCall> {
    if sentence.trim().is_empty() {
        return Err(Error::InvalidInput("cannot rephrase an empty sentence".into()));
    }
    Ok(PromptCall {
        key: "rephrased".into(),
        role: CallRole::Rephrase,
        system: PromptText::literal(&bank.rephrase.system),
        user: PromptText::bind(&bank.rephrase.user, &[("sentence", sentence)], &[])?,
        output: OutputKind::Text,
    })
}

fn rephrase_step(bank: &TemplateBank, source: &str) -> Result<(Step, String)> {
    let key = format!("{source}_rephrased");
    let call = PromptCall {
        key: key.clone(),
        role: CallRole::Rephrase,
        system: PromptText::literal(&bank.rephrase.system),
        user: PromptText::bind(&bank.rephrase.user, &[], &[("sentence", source)])?,
        output: OutputKind::Text,
    };
    Ok((Step::Call(call), key))
}

fn call(key: &str, role: CallRole, system: PromptText, user: PromptText, output: OutputKind) -> Step {
    Step::Call(PromptCall {
        key: key.into(),
        role,
        system,
        user,
        output,
    })
}

fn seed<'a>(seeds: &'a Seeds, key: &str, item_type: ItemType) -> Result<&'a str> {
    match seeds.get(key).map(|s| s.trim()) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::InvalidInput(format!("{item_type} generation needs seed `{key}`"))),
    }
}

fn numbered(seeds: &Seeds, key: &str, item_type: ItemType, max: usize) -> Result<usize> {
    let raw = seed(seeds, key, item_type)?;
    match raw.parse::<usize>() {
        Ok(n) if (1..=max).contains(&n) => Ok(n),
        _ => Err(Error::InvalidInput(format!(
            "seed `{key}` must be a number from 1 to {max}, got `{raw}`"
        ))),
    }
}

fn plan_id(item_type: ItemType, seeds: &Seeds, rng_seed: u64) -> String {
    if let Some(id) = seeds.get("id").filter(|s| !s.trim().is_empty()) {
        return id.trim().to_string();
    }
    let mut tags = vec!["plan-id", item_type.name()];
    for (k, v) in seeds {
        tags.push(k);
        tags.push(v);
    }
    format!("{}-{:08x}", item_type.name().to_ascii_lowercase(), derive_seed(rng_seed, &tags) >> 32)
}

/// Stereotype traits the StereoNLI conclusion may be about. Gender is
/// deliberately absent.
pub const STEREO_DETAIL_TRAITS: [&str; 3] = ["profession", "race", "religion"];

/// [`plan_generation_with`] over the bundled template bank.
pub fn plan_generation(item_type: ItemType, seeds: &Seeds, rng_seed: u64) -> Result<GenerationPlan> {
    plan_generation_with(&TemplateBank::bundled(), item_type, seeds, rng_seed)
}

/// Builds the call sequence for one item (or one StereoNLI premise with its
/// conclusion branches).
///
/// Seeds by type:
/// - StereoNLI: `gender`, `profession`, `race`, `religion`; optional
///   `detail` (one of [`STEREO_DETAIL_TRAITS`], drawn otherwise) and the
///   neutral-branch pairing `other_premise` + `other_conclusion`.
/// - Fallacy: `family` and 1-based `template`.
/// - Syllogism, StereoSyllogism: `seed_word` and 1-based `figure`.
/// - EGuilt, CGuilt: `setting`.
/// - PPrimacyRecency: `statement`; NPrimacyRecency also `negation`.
///
/// Any type may carry an `id` seed to fix the item id.
pub fn plan_generation_with(
    bank: &TemplateBank,
    item_type: ItemType,
    seeds: &Seeds,
    rng_seed: u64,
) -> Result<GenerationPlan> {
    let id = plan_id(item_type, seeds, rng_seed);
    let single = |premise: &str, conclusion: &str| ItemSpec {
        id: id.clone(),
        item_type,
        premise_key: premise.into(),
        conclusion_key: conclusion.into(),
        branch: None,
    };
    let mut steps = Vec::new();
    let mut items = Vec::new();
    let template_id;
    match item_type {
        ItemType::StereoNLI => {
            let t = &bank.stereo_nli;
            let traits = ["gender", "profession", "race", "religion"]
                .map(|k| seed(seeds, k, item_type).map(|v| (k, v)));
            let traits = traits.into_iter().collect::<Result<Vec<_>>>()?;
            let detail_trait = match seeds.get("detail") {
                Some(d) => STEREO_DETAIL_TRAITS
                    .into_iter()
                    .find(|t| t == &d.trim())
                    .ok_or_else(|| Error::InvalidInput(format!("StereoNLI detail must be one of {STEREO_DETAIL_TRAITS:?}, got `{d}`")))?,
                None => {
                    let pick = derive_seed(rng_seed, &["stereo-detail", &id]) % STEREO_DETAIL_TRAITS.len() as u64;
                    STEREO_DETAIL_TRAITS[pick as usize]
                }
            };
            let detail = seed(seeds, detail_trait, item_type)?;
            template_id = format!("stereo_nli/{detail_trait}");
            steps.push(call(
                "premise",
                CallRole::Premise,
                PromptText::literal(&t.premise_system),
                PromptText::bind(&t.premise_user, &traits, &[])?,
                OutputKind::Text,
            ));
            let mut branches = vec![
                ("entailment", &t.entailment_user),
                ("contradiction", &t.contradiction_user),
            ];
            let pairing = match (seeds.get("other_premise"), seeds.get("other_conclusion")) {
                (Some(p), Some(c)) if !p.trim().is_empty() && !c.trim().is_empty() => Some((p.trim(), c.trim())),
                (None, None) => None,
                _ => {
                    return Err(Error::InvalidInput(
                        "StereoNLI neutral pairing needs both `other_premise` and `other_conclusion`".into(),
                    ))
                }
            };
            if pairing.is_some() {
                branches.push(("neutral", &t.neutral_user));
            }
            for (branch, template) in &branches {
                let user = match (*branch, pairing) {
                    ("neutral", Some((p1, c1))) => PromptText::bind(
                        template,
                        &[("premise1", p1), ("conclusion1", c1)],
                        &[("premise2", "premise")],
                    )?,
                    _ => PromptText::bind(template, &[("detail", detail)], &[("premise", "premise")])?,
                };
                steps.push(call(
                    &format!("conclusion_{branch}"),
                    CallRole::Conclusion,
                    PromptText::default(),
                    user,
                    OutputKind::Text,
                ));
            }
            let (step, premise_key) = rephrase_step(bank, "premise")?;
            steps.push(step);
            for (branch, _) in &branches {
                let (step, key) = rephrase_step(bank, &format!("conclusion_{branch}"))?;
                steps.push(step);
                let suffix = branch[..1].to_ascii_uppercase();
                items.push(ItemSpec {
                    id: format!("{id}-{suffix}"),
                    item_type,
                    premise_key: premise_key.clone(),
                    conclusion_key: key,
                    branch: Some(branch.to_string()),
                });
            }
        }
        ItemType::Fallacy => {
            let t = &bank.fallacy;
            let family = FallacyFamily::parse(seed(seeds, "family", item_type)?)?;
            let pairs = bank.fallacy_pairs(family);
            let n = numbered(seeds, "template", item_type, pairs.len())?;
            let pair = &pairs[n - 1];
            template_id = format!("fallacy/{family}/{n}");
            steps.push(call(
                "premise",
                CallRole::Premise,
                PromptText::literal(&t.premise_system),
                PromptText::bind(&t.premise_user, &[("premise template", pair.premise())], &[])?,
                OutputKind::Fill {
                    template: pair.premise().to_string(),
                },
            ));
            steps.push(call(
                "conclusion",
                CallRole::Conclusion,
                PromptText::literal(&t.conclusion_system),
                PromptText::bind(
                    &t.conclusion_user,
                    &[
                        ("premise template", pair.premise()),
                        ("conclusion template", pair.conclusion()),
                    ],
                    &[("premise", "premise")],
                )?,
                OutputKind::FirstLine,
            ));
            let (s1, p) = rephrase_step(bank, "premise")?;
            let (s2, c) = rephrase_step(bank, "conclusion")?;
            steps.extend([s1, s2]);
            items.push(single(&p, &c));
        }
        ItemType::Syllogism | ItemType::StereoSyllogism => {
            let t = &bank.syllogism;
            let word = seed(seeds, "seed_word", item_type)?;
            let n = numbered(seeds, "figure", item_type, t.figures.len())?;
            let figure = &t.figures[n - 1];
            template_id = format!("syllogism/figure{n}");
            for (key, pattern) in [("major_premise", &figure.major), ("minor_premise", &figure.minor)] {
                let position = if pattern.starts_with("M ") { "beginning" } else { "end" };
                steps.push(call(
                    key,
                    CallRole::Premise,
                    PromptText::literal(&t.premise_system),
                    PromptText::bind(
                        &t.premise_user,
                        &[
                            ("n_premises", "1"),
                            ("seed_word", word),
                            ("template", pattern),
                            ("variable", "M"),
                            ("beginning_or_end", position),
                        ],
                        &[],
                    )?,
                    OutputKind::FirstLine,
                ));
            }
            steps.push(Step::Compose {
                into: "premise".into(),
                parts: vec![
                    Part::Value { key: "major_premise".into() },
                    Part::Value { key: "minor_premise".into() },
                ],
            });
            steps.push(call(
                "conclusion",
                CallRole::Conclusion,
                PromptText::literal(&t.conclusion_system),
                PromptText::bind(
                    &t.conclusion_user,
                    &[("seed_word", word)],
                    &[("minor_premise", "minor_premise"), ("major_premise", "major_premise")],
                )?,
                OutputKind::FirstLine,
            ));
            let (s1, p) = rephrase_step(bank, "premise")?;
            let (s2, c) = rephrase_step(bank, "conclusion")?;
            steps.extend([s1, s2]);
            items.push(single(&p, &c));
        }
        ItemType::EGuilt | ItemType::CGuilt => {
            let t = &bank.guilt;
            let setting = seed(seeds, "setting", item_type)?;
            let (form, suspect_system) = if item_type == ItemType::EGuilt {
                ("entailment", &t.suspect_entailment_system)
            } else {
                ("contradiction", &t.suspect_contradiction_system)
            };
            template_id = format!("guilt/{form}");
            steps.push(call(
                "crime",
                CallRole::Premise,
                PromptText::literal(&t.crime_system),
                PromptText::bind(&t.crime_user, &[("setting", setting)], &[])?,
                OutputKind::Text,
            ));
            steps.push(call(
                "features",
                CallRole::Auxiliary,
                PromptText::literal(&t.features_system),
                PromptText::bind(&t.features_user, &[], &[("crime", "crime")])?,
                OutputKind::Lines,
            ));
            steps.push(call(
                "suspect",
                CallRole::Premise,
                PromptText::literal(suspect_system),
                PromptText::bind(&t.suspect_user, &[], &[("crime", "crime"), ("features", "features")])?,
                OutputKind::Text,
            ));
            steps.push(Step::Compose {
                into: "premise".into(),
                parts: vec![Part::Value { key: "crime".into() }, Part::Value { key: "suspect".into() }],
            });
            steps.push(call(
                "conclusion",
                CallRole::Conclusion,
                PromptText::literal(&t.verdict_system),
                PromptText::bind(&t.verdict_user, &[], &[("suspect", "suspect")])?,
                OutputKind::FirstLine,
            ));
            let (s1, p) = rephrase_step(bank, "premise")?;
            let (s2, c) = rephrase_step(bank, "conclusion")?;
            steps.extend([s1, s2]);
            items.push(single(&p, &c));
        }
        ItemType::PPrimacyRecency | ItemType::NPrimacyRecency => {
            let t = &bank.primacy_recency;
            if t.likely_true_count < 2 || t.likely_false_count == 0 {
                return Err(Error::Config(
                    "primacy/recency needs at least two likely-true and one likely-false sentence".into(),
                ));
            }
            let statement = seed(seeds, "statement", item_type)?;
            let conclusion = if item_type == ItemType::PPrimacyRecency {
                template_id = "primacy_recency/positive".into();
                statement
            } else {
                template_id = "primacy_recency/negative".into();
                seed(seeds, "negation", item_type)?
            };
            for (key, system) in [("likely_true", &t.likely_true_system), ("likely_false", &t.likely_false_system)] {
                steps.push(call(
                    key,
                    CallRole::Premise,
                    PromptText::literal(system),
                    PromptText::bind(&t.user, &[("statement", statement)], &[])?,
                    OutputKind::Lines,
                ));
            }
            steps.push(Step::Select {
                from: "likely_true".into(),
                count: t.likely_true_count,
                into: "true_selected".into(),
            });
            steps.push(Step::Select {
                from: "likely_false".into(),
                count: t.likely_false_count,
                into: "false_selected".into(),
            });
            let mut parts = vec![Part::Line {
                key: "true_selected".into(),
                index: 0,
            }];
            parts.push(Part::Value {
                key: "false_selected".into(),
            });
            parts.extend((1..t.likely_true_count).map(|index| Part::Line {
                key: "true_selected".into(),
                index,
            }));
            steps.push(Step::Compose {
                into: "premise".into(),
                parts,
            });
            steps.push(Step::Literal {
                into: "conclusion".into(),
                text: conclusion.to_string(),
            });
            let (s1, p) = rephrase_step(bank, "premise")?;
            let (s2, c) = rephrase_step(bank, "conclusion")?;
            steps.extend([s1, s2]);
            items.push(single(&p, &c));
        }
        ItemType::AttentionCheck => return Err(Error::InvalidType(item_type.name().to_string())),
    }
    let plan = GenerationPlan {
        id,
        item_type,
        template_id,
        seeds: seeds.clone(),
        rng_seed,
        steps,
        items,
    };
    plan.validate()?;
    Ok(plan)
}

/// Parses an item type name for generation; only generatable types pass.
pub fn generatable_type(name: &str) -> Result<ItemType> {
    let t: ItemType = name.parse()?;
    if t == ItemType::AttentionCheck {
        return Err(Error::InvalidType(name.to_string()));
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Execution

/// One backend call as executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub call_index: usize,
    pub key: String,
    pub role: CallRole,
    pub system: String,
    pub user: String,
    pub response: String,
    pub attempts: u32,
}

/// The items a plan produced and the calls that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub plan_id: String,
    pub items: Vec<Item>,
    pub transcript: Vec<TranscriptEntry>,
}

/// Chooses `count` of the candidate lines for a selection step; returns indices.
pub type Selector = dyn Fn(&str, &[String], usize) -> Vec<usize> + Send + Sync;

/// Default curation: the first `count` candidates.
pub fn first_n(_key: &str, _candidates: &[String], count: usize) -> Vec<usize> {
    (0..count).collect()
}

pub struct Generator<'a> {
    backend: &'a dyn Backend,
    temperature: f64,
    selector: &'a Selector,
}

impl<'a> Generator<'a> {
    pub fn new(backend: &'a dyn Backend) -> Self {
        Generator {
            backend,
            temperature: 1.0,
            selector: &first_n,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_selector(mut self, selector: &'a Selector) -> Self {
        self.selector = selector;
        self
    }

    /// Executes the plan's steps in order. Empty completions get one retry
    /// with a fresh seed.
    pub fn run(&self, plan: &GenerationPlan) -> Result<Generated> {
        plan.validate()?;
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        let mut transcript = Vec::new();
        let mut call_index = 0;
        for step in &plan.steps {
            let value = match step {
                Step::Call(c) => {
                    let index = call_index;
                    call_index += 1;
                    let gen_err = |message: String| Error::Generation {
                        call_index: index,
                        message,
                    };
                    let system = c.system.render(&values).map_err(|e| gen_err(e.to_string()))?;
                    let user = c.user.render(&values).map_err(|e| gen_err(e.to_string()))?;
                    let mut response = String::new();
                    let mut attempts = 0;
                    while attempts < 2 && response.trim().is_empty() {
                        attempts += 1;
                        let seed = derive_seed(plan.rng_seed, &["gen-call", &plan.id, &c.key, &attempts.to_string()]);
                        response = self
                            .backend
                            .complete(&system, &user, self.temperature, seed)
                            .map_err(|e| gen_err(e.to_string()))?;
                    }
                    if response.trim().is_empty() {
                        return Err(gen_err(format!("empty completion for `{}` after retry", c.key)));
                    }
                    let value = process_output(&c.output, &response).map_err(gen_err)?;
                    transcript.push(TranscriptEntry {
                        call_index: index,
                        key: c.key.clone(),
                        role: c.role,
                        system,
                        user,
                        response,
                        attempts,
                    });
                    value
                }
                Step::Select { from, count, into } => {
                    let candidates: Vec<String> = values[from].lines().map(str::to_string).collect();
                    let picked = (self.selector)(from, &candidates, *count);
                    let distinct: BTreeSet<usize> = picked.iter().copied().collect();
                    if picked.len() != *count || distinct.len() != *count || picked.iter().any(|i| *i >= candidates.len()) {
                        return Err(Error::Generation {
                            call_index: call_index.saturating_sub(1),
                            message: format!(
                                "selecting {count} of {} lines from `{from}` for `{into}` gave {picked:?}",
                                candidates.len()
                            ),
                        });
                    }
                    picked.iter().map(|i| candidates[*i].as_str()).collect::<Vec<_>>().join("\n")
                }
                Step::Compose { parts, .. } => {
                    let mut pieces = Vec::new();
                    for part in parts {
                        match part {
                            Part::Value { key } => pieces.extend(values[key].lines().map(str::to_string)),
                            Part::Line { key, index } => pieces.push(
                                values[key].lines().nth(*index).map(str::to_string).ok_or_else(|| {
                                    Error::Generation {
                                        call_index: call_index.saturating_sub(1),
                                        message: format!("value `{key}` has no line {index}"),
                                    }
                                })?,
                            ),
                        }
                    }
                    pieces.join(" ")
                }
                Step::Literal { text, .. } => text.clone(),
            };
            values.insert(step.produces().to_string(), value);
        }

        let transcript_json = serde_json::to_value(&transcript)?;
        let items = plan
            .items
            .iter()
            .map(|spec| {
                let mut item = Item::new(
                    spec.id.clone(),
                    spec.item_type,
                    values[&spec.premise_key].clone(),
                    values[&spec.conclusion_key].clone(),
                )?;
                let md = &mut item.metadata;
                md.insert("template_id".into(), plan.template_id.clone().into());
                md.insert("plan_id".into(), plan.id.clone().into());
                md.insert("seeds".into(), serde_json::to_value(&plan.seeds)?);
                if let Some(b) = &spec.branch {
                    md.insert("branch".into(), b.clone().into());
                }
                md.insert("premise_call".into(), plan.call_index(&spec.premise_key).into());
                md.insert("conclusion_call".into(), plan.call_index(&spec.conclusion_key).into());
                md.insert("transcript".into(), transcript_json.clone());
                Ok(item)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Generated {
            plan_id: plan.id.clone(),
            items,
            transcript,
        })
    }
}

/// Runs `plan` with default settings and returns its items.
pub fn run_generation(backend: &dyn Backend, plan: &GenerationPlan) -> Result<Vec<Item>> {
    Ok(Generator::new(backend).run(plan)?.items)
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_marker(line: &str) -> &str {
    let l = line.trim();
    let l = l.trim_start_matches(['-', '*', '\u{2022}']).trim_start();
    let digits = l.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &l[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim_start();
        }
    }
    l
}

fn process_output(kind: &OutputKind, response: &str) -> std::result::Result<String, String> {
    let lines: Vec<&str> = response.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    match kind {
        OutputKind::Text => Ok(normalize_ws(response)),
        OutputKind::FirstLine => Ok(normalize_ws(lines[0])),
        OutputKind::Lines => Ok(lines
            .iter()
            .map(|l| normalize_ws(strip_marker(l)))
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join("\n")),
        OutputKind::Fill { template } => fill_brackets(template, response),
    }
}

/// Distinct `[...]` slot names of a bracket template, in order of appearance.
pub fn bracket_slots(template: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('[') {
        let Some(len) = rest[open..].find(']') else { break };
        let name = &rest[open + 1..open + len];
        if !out.contains(&name) {
            out.push(name);
        }
        rest = &rest[open + len + 1..];
    }
    out
}

/// Fills the bracket slots of `template` from a `KEY: value` response.
///
/// Keys are matched by slot name when every slot is named in the response;
/// otherwise values are taken in order.
pub fn fill_brackets(template: &str, response: &str) -> std::result::Result<String, String> {
    let slots = bracket_slots(template);
    let entries: Vec<(Option<&str>, &str)> = response
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| match l.split_once(':') {
            Some((k, v)) => (Some(k.trim()), v.trim()),
            None => (None, l),
        })
        .collect();
    let clean = |v: &str| v.trim().trim_end_matches('.').trim().to_string();
    let by_name: Option<Vec<String>> = slots
        .iter()
        .map(|s| entries.iter().find(|(k, _)| *k == Some(*s)).map(|(_, v)| clean(v)))
        .collect();
    let values = match by_name {
        Some(v) => v,
        None if entries.len() >= slots.len() => entries.iter().take(slots.len()).map(|(_, v)| clean(v)).collect(),
        None => {
            return Err(format!(
                "response has {} lines but template needs {} fillers",
                entries.len(),
                slots.len()
            ))
        }
    };
    if let Some(i) = values.iter().position(|v| v.is_empty()) {
        return Err(format!("empty filler for [{}]", slots[i]));
    }
    let mut out = template.to_string();
    for (slot, value) in slots.iter().zip(&values) {
        out = out.replace(&format!("[{slot}]"), value);
    }
    Ok(out)
}

/// Every distinct prompt string of the bank as (name, text), for goldens.
pub fn bank_prompt_strings(bank: &TemplateBank) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vec![
        ("rephrase_system".into(), bank.rephrase.system.clone()),
        ("rephrase_user".into(), bank.rephrase.user.clone()),
        ("stereo_nli_premise_system".into(), bank.stereo_nli.premise_system.clone()),
        ("stereo_nli_premise_user".into(), bank.stereo_nli.premise_user.clone()),
        ("stereo_nli_entailment_user".into(), bank.stereo_nli.entailment_user.clone()),
        ("stereo_nli_contradiction_user".into(), bank.stereo_nli.contradiction_user.clone()),
        ("stereo_nli_neutral_user".into(), bank.stereo_nli.neutral_user.clone()),
        ("fallacy_premise_system".into(), bank.fallacy.premise_system.clone()),
        ("fallacy_premise_user".into(), bank.fallacy.premise_user.clone()),
        ("fallacy_conclusion_system".into(), bank.fallacy.conclusion_system.clone()),
        ("fallacy_conclusion_user".into(), bank.fallacy.conclusion_user.clone()),
        ("syllogism_premise_system".into(), bank.syllogism.premise_system.clone()),
        ("syllogism_premise_user".into(), bank.syllogism.premise_user.clone()),
        ("syllogism_conclusion_system".into(), bank.syllogism.conclusion_system.clone()),
        ("syllogism_conclusion_user".into(), bank.syllogism.conclusion_user.clone()),
    ];
    for family in FallacyFamily::ALL {
        for (i, pair) in bank.fallacy_pairs(family).iter().enumerate() {
            out.push((format!("{family}_{}_premise", i + 1), pair.premise().to_string()));
            out.push((format!("{family}_{}_conclusion", i + 1), pair.conclusion().to_string()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{EchoBackend, FnBackend, MockBackend};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn seeds(pairs: &[(&str, &str)]) -> Seeds {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn stereo_seeds() -> Seeds {
        seeds(&[
            ("gender", "female"),
            ("profession", "nurse"),
            ("race", "Norwegian"),
            ("religion", "Lutheran"),
            ("other_premise", "Omar bakes bread every morning."),
            ("other_conclusion", "Omar owns a bakery."),
        ])
    }

    fn all_plans() -> Vec<GenerationPlan> {
        vec![
            plan_generation(ItemType::StereoNLI, &stereo_seeds(), 1).unwrap(),
            plan_generation(ItemType::Fallacy, &seeds(&[("family", "post_hoc"), ("template", "1")]), 2).unwrap(),
            plan_generation(ItemType::Fallacy, &seeds(&[("family", "straw_person"), ("template", "9")]), 2).unwrap(),
            plan_generation(ItemType::Syllogism, &seeds(&[("seed_word", "chess player"), ("figure", "1")]), 3).unwrap(),
            plan_generation(ItemType::StereoSyllogism, &seeds(&[("seed_word", "Muslim"), ("figure", "4")]), 3).unwrap(),
            plan_generation(ItemType::EGuilt, &seeds(&[("setting", "a harbor warehouse")]), 4).unwrap(),
            plan_generation(ItemType::CGuilt, &seeds(&[("setting", "a harbor warehouse")]), 4).unwrap(),
            plan_generation(ItemType::PPrimacyRecency, &seeds(&[("statement", "Simon is a professor.")]), 5).unwrap(),
            plan_generation(
                ItemType::NPrimacyRecency,
                &seeds(&[("statement", "Simon is a professor."), ("negation", "Simon is not a professor.")]),
                5,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn bank_has_all_templates() {
        let bank = TemplateBank::bundled();
        assert_eq!(bank.fallacy.post_hoc.len(), 10);
        assert_eq!(bank.fallacy.slippery_slope.len(), 10);
        assert_eq!(bank.fallacy.straw_person.len(), 9);
        assert_eq!(bank.syllogism.figures.len(), 4);
        assert_eq!(bank.fallacy.post_hoc[0].premise(), "[A] happened right before [B].");
        assert_eq!(bank.fallacy.post_hoc[0].conclusion(), "[A] caused [B].");
        bank.validate().unwrap();
    }

    #[test]
    fn rephrase_call_examples() {
        let c = rephrase_call("X.").unwrap();
        assert_eq!(c.user.to_string(), "Sentence: X.");
        assert!(c.system.to_string().contains("grammatically correct"));
        assert_eq!(c.role, CallRole::Rephrase);
        assert!(rephrase_call("  ").is_err());
        // braces in the sentence are data, not placeholders
        assert_eq!(rephrase_call("a {premise} b").unwrap().user.to_string(), "Sentence: a {premise} b");
    }

    #[test]
    fn post_hoc_premise_call_uses_template() {
        let plan = plan_generation(ItemType::Fallacy, &seeds(&[("family", "post_hoc"), ("template", "1")]), 0).unwrap();
        let first = plan.calls().next().unwrap();
        assert_eq!(first.role, CallRole::Premise);
        assert!(first.user.to_string().contains("[A] happened right before [B]."));
        assert_eq!(plan.template_id, "fallacy/post_hoc/1");
    }

    #[test]
    fn syllogism_keeps_figure_order() {
        let plan = plan_generation(ItemType::Syllogism, &seeds(&[("seed_word", "chess player"), ("figure", "1")]), 0).unwrap();
        let calls: Vec<_> = plan.calls().collect();
        assert_eq!(calls[0].key, "major_premise");
        let major = calls[0].user.to_string();
        let minor = calls[1].user.to_string();
        assert!(major.contains("template 'M is P'") && major.contains("towards the beginning"));
        assert!(minor.contains("template 'S is M'") && minor.contains("towards the end"));
        assert!(major.contains("about chess player (singular/plural)"));
        let concl = calls[2].user.to_string();
        assert!(concl.starts_with("Sentence Pair:\n{minor_premise}\n{major_premise}\nSeed word: chess player"));
    }

    #[test]
    fn plans_end_with_rephrasing() {
        for plan in all_plans() {
            let calls: Vec<_> = plan.calls().collect();
            let n_final = plan.items.len() + 1;
            for c in &calls[calls.len() - n_final..] {
                assert_eq!(c.role, CallRole::Rephrase, "{}", plan.id);
                assert!(c.system.to_string().starts_with("You are a writing assistant"));
            }
        }
    }

    #[test]
    fn seeds_and_types_are_checked() {
        let e = plan_generation(ItemType::Fallacy, &seeds(&[("family", "post_hoc")]), 0).unwrap_err();
        assert!(matches!(e, Error::InvalidInput(_)));
        let e = plan_generation(ItemType::Fallacy, &seeds(&[("family", "post_hoc"), ("template", "11")]), 0).unwrap_err();
        assert!(matches!(e, Error::InvalidInput(_)));
        assert!(matches!(
            plan_generation(ItemType::AttentionCheck, &Seeds::new(), 0),
            Err(Error::InvalidType(_))
        ));
        assert!(matches!(generatable_type("Riddle"), Err(Error::InvalidType(_))));
        let mut s = stereo_seeds();
        s.remove("race");
        assert!(plan_generation(ItemType::StereoNLI, &s, 0).is_err());
        s = stereo_seeds();
        s.remove("other_conclusion");
        assert!(plan_generation(ItemType::StereoNLI, &s, 0).is_err());
    }

    #[test]
    fn planning_is_deterministic() {
        assert_eq!(all_plans(), all_plans());
        let a = plan_generation(ItemType::StereoNLI, &stereo_seeds(), 1).unwrap();
        let details: BTreeSet<String> = (0..40)
            .map(|s| plan_generation(ItemType::StereoNLI, &stereo_seeds(), s).unwrap().template_id)
            .collect();
        assert_eq!(details.len(), 3, "detail draw covers all non-gender traits: {details:?}");
        assert!(!a.template_id.contains("gender"));
    }

    #[test]
    fn echo_transcript_matches_plan() {
        // fallacy fills and primacy selections need structured replies an echo cannot give
        let echoable = |t: ItemType| {
            !matches!(t, ItemType::Fallacy | ItemType::PPrimacyRecency | ItemType::NPrimacyRecency)
        };
        for plan in all_plans().into_iter().filter(|p| echoable(p.item_type)) {
            let out = Generator::new(&EchoBackend).run(&plan).unwrap();
            let calls: Vec<_> = plan.calls().collect();
            assert_eq!(out.transcript.len(), calls.len());
            let mut values = BTreeMap::new();
            for (entry, c) in out.transcript.iter().zip(&calls) {
                assert_eq!(entry.key, c.key);
                assert_eq!(entry.role, c.role);
                assert_eq!(entry.response, entry.user, "echo");
                // slots in later calls see exactly the earlier recorded outputs
                if c.user.slots().all(|k| values.contains_key(k)) {
                    assert_eq!(c.user.render(&values).unwrap(), entry.user);
                }
                values.insert(c.key.clone(), process_output(&c.output, &entry.response).unwrap());
            }
        }
    }

    #[test]
    fn stereo_nli_yields_three_items_sharing_a_premise() {
        let plan = plan_generation(ItemType::StereoNLI, &stereo_seeds(), 9).unwrap();
        let items = run_generation(&MockBackend::default(), &plan).unwrap();
        assert_eq!(items.len(), 3);
        assert!(items.iter().all(|i| i.premise == items[0].premise));
        let branches: Vec<_> = items.iter().map(|i| i.metadata["branch"].as_str().unwrap()).collect();
        assert_eq!(branches, ["entailment", "contradiction", "neutral"]);
        let neutral_call = &plan.calls().find(|c| c.key == "conclusion_neutral").unwrap().user.to_string();
        assert!(neutral_call.contains("STORY 1: Omar bakes bread every morning.\nSTORY 2: {premise}"));
    }

    #[test]
    fn premise_and_conclusion_come_from_different_calls() {
        for plan in all_plans() {
            let out = Generator::new(&MockBackend::default()).run(&plan).unwrap();
            for item in &out.items {
                let p = item.metadata["premise_call"].as_u64().unwrap() as usize;
                let c = item.metadata["conclusion_call"].as_u64().unwrap() as usize;
                assert_ne!(p, c);
                assert_eq!(out.transcript[p].role, CallRole::Rephrase);
                assert_eq!(out.transcript[c].role, CallRole::Rephrase);
                assert_eq!(normalize_ws(&out.transcript[p].response), item.premise);
            }
            // no premise-role call is also asked for a conclusion
            for e in &out.transcript {
                if e.role == CallRole::Premise {
                    assert!(!e.user.contains("Template 2") && !e.user.contains("assumption"));
                }
            }
            let again = Generator::new(&MockBackend::default()).run(&plan).unwrap();
            assert_eq!(out, again);
        }
    }

    #[test]
    fn empty_completion_retries_once() {
        let plan = plan_generation(ItemType::Fallacy, &seeds(&[("family", "post_hoc"), ("template", "1")]), 0).unwrap();
        let calls = AtomicUsize::new(0);
        let flaky = FnBackend(|_: &str, _: &str, _: f64, _: u64| {
            Ok(if calls.fetch_add(1, Ordering::SeqCst) == 0 { "  ".into() } else { "A: rain\nB: floods".into() })
        });
        let out = Generator::new(&flaky).run(&plan).unwrap();
        assert_eq!(out.transcript[0].attempts, 2);
        assert_eq!(out.transcript[1].user, "Template 1: [A] happened right before [B].\nFilled Template 1: rain happened right before floods.\nTemplate 2: [A] caused [B].");

        let silent = FnBackend(|_: &str, _: &str, _: f64, _: u64| Ok(String::new()));
        match run_generation(&silent, &plan) {
            Err(Error::Generation { call_index: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn backend_failure_names_the_call() {
        let plan = plan_generation(ItemType::Syllogism, &seeds(&[("seed_word", "cat"), ("figure", "2")]), 0).unwrap();
        let n = AtomicUsize::new(0);
        let failing = FnBackend(|_: &str, _: &str, _: f64, _: u64| {
            if n.fetch_add(1, Ordering::SeqCst) == 2 {
                Err(Error::Backend { item_id: None, message: "boom".into() })
            } else {
                Ok("Cats are mammals".into())
            }
        });
        match run_generation(&failing, &plan) {
            Err(Error::Generation { call_index: 2, message }) => assert!(message.contains("boom")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fill_brackets_by_name_and_position() {
        assert_eq!(
            fill_brackets("[A] caused [B].", "B: floods\nA: rain.").unwrap(),
            "rain caused floods."
        );
        assert_eq!(
            fill_brackets("[Person A] believes in [Complex Idea].", "Dana\nfree markets").unwrap(),
            "Dana believes in free markets."
        );
        assert_eq!(
            fill_brackets("The line between [A] and [B] is so thin, allowing [A] practically guarantees [B] will occur.", "A: x\nB: y").unwrap(),
            "The line between x and y is so thin, allowing x practically guarantees y will occur."
        );
        assert!(fill_brackets("[A] caused [B].", "only one").is_err());
    }

    #[test]
    fn selection_hook_and_primacy_order() {
        let plan = plan_generation(ItemType::PPrimacyRecency, &seeds(&[("statement", "Simon is a professor.")]), 0).unwrap();
        let backend = FnBackend(|system: &str, user: &str, _: f64, _: u64| {
            Ok(if system.contains("likely not be true") {
                "1. f1\n2. f2\n3. f3\n4. f4\n5. f5".to_string()
            } else if system.contains("likely be true") {
                "t1\nt2\nt3\nt4\nt5".to_string()
            } else {
                user.trim_start_matches("Sentence: ").to_string()
            })
        });
        let items = run_generation(&backend, &plan).unwrap();
        assert_eq!(items[0].premise, "t1 f1 f2 f3 t2");
        assert_eq!(items[0].conclusion, "Simon is a professor.");
        let last_two = |_: &str, c: &[String], n: usize| (c.len() - n..c.len()).collect::<Vec<_>>();
        let out = Generator::new(&backend).with_selector(&last_two).run(&plan).unwrap();
        assert_eq!(out.items[0].premise, "t4 f3 f4 f5 t5");
    }
}
