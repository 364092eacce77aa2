//! Sampling votes from a backend: ten base-prompt samples per item, or ten
//! samples for each of the ten personas reduced to one majority vote each.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{majority_label, Item};
use crate::error::{Error, Result};
use crate::labels::{Label, LabelScheme};
use crate::seed::derive_seed;

use super::backend::Backend;
use super::parse::parse_vote;
use super::personas::Trait;
use super::prompts::{build_base_prompt, build_personality_prompt, build_user_prompt};

/// Votes per prompting style.
pub const VOTES_PER_STYLE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectionConfig {
    pub temperature: f64,
    /// Attempts per slot before giving up on unparseable replies.
    pub max_attempts: usize,
    /// Upper bound on concurrent backend calls.
    pub max_in_flight: usize,
    pub seed: u64,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        CollectionConfig {
            temperature: 1.0,
            max_attempts: 3,
            max_in_flight: 4,
            seed: 0,
        }
    }
}

/// Prompting style of a vote record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Style {
    Base,
    Persona(Trait),
}

impl Style {
    pub fn tag(self) -> &'static str {
        match self {
            Style::Base => "base",
            Style::Persona(t) => t.code(),
        }
    }
}

impl Serialize for Style {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for Style {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "base" {
            Ok(Style::Base)
        } else {
            s.parse::<Trait>()
                .map(Style::Persona)
                .map_err(serde::de::Error::custom)
        }
    }
}

/// Samples drawn under one persona and their majority.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitVotes {
    pub persona: Trait,
    pub samples: Vec<Label>,
    pub majority: Label,
}

/// Persona-prompted votes for one item, in [`Trait::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonaVotes {
    pub item_id: String,
    pub scheme: LabelScheme,
    pub traits: Vec<TraitVotes>,
}

impl PersonaVotes {
    /// Builds from per-trait samples; majorities use the smallest-ordinal tie-break.
    pub fn from_samples(
        item_id: impl Into<String>,
        scheme: LabelScheme,
        samples: Vec<(Trait, Vec<Label>)>,
    ) -> Result<Self> {
        let item_id = item_id.into();
        let mut by_trait: BTreeMap<Trait, Vec<Label>> = samples.into_iter().collect();
        let traits = Trait::ALL
            .iter()
            .map(|t| {
                let samples = by_trait.remove(t).ok_or_else(|| {
                    Error::InvalidInput(format!("item `{item_id}` is missing persona {t}"))
                })?;
                Ok(TraitVotes {
                    persona: *t,
                    majority: majority_label(&samples, scheme)?,
                    samples,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PersonaVotes {
            item_id,
            scheme,
            traits,
        })
    }

    /// The ten per-persona majority votes.
    pub fn majorities(&self) -> Vec<Label> {
        self.traits.iter().map(|t| t.majority).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.traits.len() != Trait::ALL.len()
            || self.traits.iter().zip(Trait::ALL).any(|(tv, t)| tv.persona != t)
        {
            return Err(Error::InvalidInput(format!(
                "item `{}` does not have exactly one entry per persona in canonical order",
                self.item_id
            )));
        }
        Ok(())
    }

    pub fn to_three_way(&self) -> Result<PersonaVotes> {
        if self.scheme == LabelScheme::ThreeWay {
            return Ok(self.clone());
        }
        let samples = self
            .traits
            .iter()
            .map(|t| {
                let mapped = t
                    .samples
                    .iter()
                    .map(|l| crate::labels::map_6to3(*l))
                    .collect::<Result<Vec<_>>>()?;
                Ok((t.persona, mapped))
            })
            .collect::<Result<Vec<_>>>()?;
        PersonaVotes::from_samples(self.item_id.clone(), LabelScheme::ThreeWay, samples)
    }
}

/// One line of `model_votes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVoteRecord {
    pub item_id: String,
    pub style: Style,
    pub samples: Vec<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub majority: Option<Label>,
}

/// All model votes known for one item.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelVotes {
    pub base: Option<Vec<Label>>,
    pub persona: Option<PersonaVotes>,
}

pub fn base_record(item_id: &str, samples: Vec<Label>) -> ModelVoteRecord {
    ModelVoteRecord {
        item_id: item_id.to_string(),
        style: Style::Base,
        samples,
        majority: None,
    }
}

pub fn persona_records(votes: &PersonaVotes) -> Vec<ModelVoteRecord> {
    votes
        .traits
        .iter()
        .map(|t| ModelVoteRecord {
            item_id: votes.item_id.clone(),
            style: Style::Persona(t.persona),
            samples: t.samples.clone(),
            majority: Some(t.majority),
        })
        .collect()
}

/// Groups vote records by item. Persona majorities are recomputed from the
/// samples; a stored majority that disagrees is an error.
pub fn group_model_votes(
    records: Vec<ModelVoteRecord>,
    scheme: LabelScheme,
) -> Result<BTreeMap<String, ModelVotes>> {
    let mut base: BTreeMap<String, Vec<Label>> = BTreeMap::new();
    let mut persona: BTreeMap<String, Vec<(Trait, Vec<Label>, Option<Label>)>> = BTreeMap::new();
    for r in records {
        if let Some(bad) = r.samples.iter().find(|l| !scheme.contains(**l)) {
            return Err(Error::InvalidLabel {
                label: bad.to_string(),
                scheme: scheme.to_string(),
            });
        }
        match r.style {
            Style::Base => {
                if base.insert(r.item_id.clone(), r.samples).is_some() {
                    return Err(Error::InvalidInput(format!(
                        "duplicate base votes for item `{}`",
                        r.item_id
                    )));
                }
            }
            Style::Persona(t) => persona
                .entry(r.item_id)
                .or_default()
                .push((t, r.samples, r.majority)),
        }
    }
    let mut out: BTreeMap<String, ModelVotes> = BTreeMap::new();
    for (id, samples) in base {
        out.entry(id).or_default().base = Some(samples);
    }
    for (id, entries) in persona {
        let stored: Vec<(Trait, Option<Label>)> = entries.iter().map(|(t, _, m)| (*t, *m)).collect();
        if entries.len() != Trait::ALL.len() {
            return Err(Error::InvalidInput(format!(
                "item `{id}` has {} persona records, expected {}",
                entries.len(),
                Trait::ALL.len()
            )));
        }
        let pv = PersonaVotes::from_samples(
            id.clone(),
            scheme,
            entries.into_iter().map(|(t, s, _)| (t, s)).collect(),
        )?;
        for (t, m) in stored {
            if let Some(m) = m {
                if pv.traits[t.index()].majority != m {
                    return Err(Error::InvalidInput(format!(
                        "item `{id}` persona {t}: stored majority {m} disagrees with samples"
                    )));
                }
            }
        }
        out.entry(id).or_default().persona = Some(pv);
    }
    Ok(out)
}

/// Issues collection calls against a backend with bounded concurrency.
pub struct Collector<'a> {
    backend: &'a dyn Backend,
    config: CollectionConfig,
    pool: rayon::ThreadPool,
}

impl<'a> Collector<'a> {
    pub fn new(backend: &'a dyn Backend, config: CollectionConfig) -> Result<Self> {
        if config.max_attempts == 0 || config.max_in_flight == 0 {
            return Err(Error::InvalidParameter(
                "max_attempts and max_in_flight must be positive".into(),
            ));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_in_flight)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Collector {
            backend,
            config,
            pool,
        })
    }

    fn sample(&self, item: &Item, style: Style, system: &str, slot: usize, scheme: LabelScheme) -> Result<Label> {
        let user = build_user_prompt(item);
        let mut last = String::new();
        for attempt in 0..self.config.max_attempts {
            let seed = derive_seed(
                self.config.seed,
                &[&item.id, style.tag(), &slot.to_string(), &attempt.to_string()],
            );
            let reply = self
                .backend
                .complete(system, &user, self.config.temperature, seed)
                .map_err(|e| Error::Backend {
                    item_id: Some(item.id.clone()),
                    message: format!("{} slot {slot}: {e}", style.tag()),
                })?;
            match parse_vote(&reply, scheme) {
                Ok(label) => return Ok(label),
                Err(_) => last = reply,
            }
        }
        Err(Error::CollectionFailure {
            item_id: item.id.clone(),
            style: style.tag().to_string(),
            slot,
            reason: format!(
                "{} consecutive unparseable replies, last: {last:?}",
                self.config.max_attempts
            ),
        })
    }

    /// Ten independent base-prompt samples.
    pub fn base_votes(&self, item: &Item, scheme: LabelScheme) -> Result<Vec<Label>> {
        let system = build_base_prompt(scheme);
        self.pool.install(|| {
            (0..VOTES_PER_STYLE)
                .into_par_iter()
                .map(|slot| self.sample(item, Style::Base, &system, slot, scheme))
                .collect()
        })
    }

    /// Ten samples for each persona, reduced to per-persona majorities.
    pub fn persona_votes(&self, item: &Item, scheme: LabelScheme) -> Result<PersonaVotes> {
        let systems: Vec<String> = Trait::ALL
            .iter()
            .map(|t| build_personality_prompt(*t, scheme))
            .collect();
        let flat: Vec<Label> = self.pool.install(|| {
            (0..Trait::ALL.len() * VOTES_PER_STYLE)
                .into_par_iter()
                .map(|i| {
                    let (t, slot) = (i / VOTES_PER_STYLE, i % VOTES_PER_STYLE);
                    self.sample(item, Style::Persona(Trait::ALL[t]), &systems[t], slot, scheme)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let samples = Trait::ALL
            .iter()
            .zip(flat.chunks(VOTES_PER_STYLE))
            .map(|(t, chunk)| (*t, chunk.to_vec()))
            .collect();
        PersonaVotes::from_samples(item.id.clone(), scheme, samples)
    }
}

pub fn collect_base_votes(
    backend: &dyn Backend,
    item: &Item,
    scheme: LabelScheme,
    config: &CollectionConfig,
) -> Result<Vec<Label>> {
    Collector::new(backend, config.clone())?.base_votes(item, scheme)
}

pub fn collect_persona_votes(
    backend: &dyn Backend,
    item: &Item,
    scheme: LabelScheme,
    config: &CollectionConfig,
) -> Result<PersonaVotes> {
    Collector::new(backend, config.clone())?.persona_votes(item, scheme)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::data::ItemType;
    use crate::prompting::backend::{FnBackend, MockBackend};

    fn item() -> Item {
        Item::new("it-1", ItemType::Syllogism, "All cats are mammals.", "Tom is a mammal.").unwrap()
    }

    #[test]
    fn base_votes_are_ten_and_deterministic() {
        let mock = MockBackend::default();
        let cfg = CollectionConfig {
            seed: 42,
            ..Default::default()
        };
        let a = collect_base_votes(&mock, &item(), LabelScheme::SixWay, &cfg).unwrap();
        let b = collect_base_votes(&mock, &item(), LabelScheme::SixWay, &cfg).unwrap();
        assert_eq!(a.len(), VOTES_PER_STYLE);
        assert_eq!(a, b);
    }

    #[test]
    fn output_independent_of_concurrency() {
        let mock = MockBackend::default();
        let serial = CollectionConfig {
            max_in_flight: 1,
            seed: 9,
            ..Default::default()
        };
        let wide = CollectionConfig {
            max_in_flight: 16,
            ..serial.clone()
        };
        assert_eq!(
            collect_persona_votes(&mock, &item(), LabelScheme::ThreeWay, &serial).unwrap(),
            collect_persona_votes(&mock, &item(), LabelScheme::ThreeWay, &wide).unwrap()
        );
    }

    #[test]
    fn persona_votes_shape() {
        let mock = MockBackend::default();
        let pv = collect_persona_votes(&mock, &item(), LabelScheme::SixWay, &CollectionConfig::default())
            .unwrap();
        pv.validate().unwrap();
        assert_eq!(pv.majorities().len(), 10);
        assert!(pv.traits.iter().all(|t| t.samples.len() == 10));
    }

    #[test]
    fn persona_majority_tie_breaks_low() {
        let mut samples: Vec<(Trait, Vec<Label>)> =
            Trait::ALL.iter().map(|t| (*t, vec![Label::F; 10])).collect();
        samples[3].1 = [vec![Label::B; 5], vec![Label::A; 5]].concat();
        let pv = PersonaVotes::from_samples("x", LabelScheme::SixWay, samples).unwrap();
        assert_eq!(pv.traits[3].majority, Label::A);
    }

    #[test]
    fn thrice_unparseable_slot_fails() {
        let calls = AtomicUsize::new(0);
        let backend = FnBackend(|_: &str, _: &str, _: f64, _: u64| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("Z".to_string())
        });
        let cfg = CollectionConfig {
            max_in_flight: 1,
            ..Default::default()
        };
        let err = collect_base_votes(&backend, &item(), LabelScheme::SixWay, &cfg).unwrap_err();
        assert!(matches!(err, Error::CollectionFailure { slot: 0, .. }), "{err}");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retry_recovers_with_fresh_seed() {
        let seen = std::sync::Mutex::new(Vec::new());
        let backend = FnBackend(|_: &str, _: &str, _: f64, seed: u64| {
            let mut s = seen.lock().unwrap();
            s.push(seed);
            Ok(if s.len() % 2 == 1 { "???".into() } else { "D".into() })
        });
        let cfg = CollectionConfig {
            max_in_flight: 1,
            ..Default::default()
        };
        let votes = collect_base_votes(&backend, &item(), LabelScheme::SixWay, &cfg).unwrap();
        assert_eq!(votes, vec![Label::D; 10]);
        let seeds = seen.into_inner().unwrap();
        assert_eq!(seeds.len(), 20);
        assert_ne!(seeds[0], seeds[1]);
    }

    #[test]
    fn transport_error_names_item() {
        let backend = FnBackend(|_: &str, _: &str, _: f64, _: u64| {
            Err(Error::Backend {
                item_id: None,
                message: "connection refused".into(),
            })
        });
        let err = collect_base_votes(&backend, &item(), LabelScheme::SixWay, &CollectionConfig::default())
            .unwrap_err();
        match err {
            Error::Backend { item_id, .. } => assert_eq!(item_id.as_deref(), Some("it-1")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn records_round_trip_and_group() {
        let mock = MockBackend::default();
        let it = item();
        let cfg = CollectionConfig::default();
        let pv = collect_persona_votes(&mock, &it, LabelScheme::SixWay, &cfg).unwrap();
        let base = collect_base_votes(&mock, &it, LabelScheme::SixWay, &cfg).unwrap();
        let mut records = persona_records(&pv);
        records.push(base_record(&it.id, base.clone()));
        let text = crate::io::to_jsonl(&records).unwrap();
        assert!(text.contains("\"style\":\"O+\""));
        let parsed: Vec<ModelVoteRecord> =
            text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let grouped = group_model_votes(parsed, LabelScheme::SixWay).unwrap();
        assert_eq!(grouped[&it.id].persona.as_ref().unwrap(), &pv);
        assert_eq!(grouped[&it.id].base.as_ref().unwrap(), &base);
    }
}
