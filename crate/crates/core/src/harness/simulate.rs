//! Synthetic survey participants, for running the pipeline without a real
//! study. Each participant has a response bias; careless ones answer at
//! random and some stop before the end.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Item, ItemType, Phase};
use crate::error::{Error, Result};
use crate::labels::{Label, LabelScheme};
use crate::seed::{derive_seed, unit_interval};
use crate::survey::{
    allotted_time, update_pacer, AttentionCheck, PacerState, ParticipantRecord, Response, TimingParams,
};

/// Hand-written items with an obvious three-way answer.
pub fn attention_items() -> Vec<(Item, Label)> {
    let rows = [
        (
            "check-1",
            "Maria put three apples and two pears in a bowl on the kitchen table.",
            "There is fruit in the bowl on the kitchen table.",
            Label::Entailment,
        ),
        (
            "check-2",
            "Every window in the office stayed closed for the whole day.",
            "One of the office windows was open for the whole day.",
            Label::Contradiction,
        ),
        (
            "check-3",
            "Tom bought a new bicycle on Monday morning.",
            "Tom's favorite color is green.",
            Label::Neutral,
        ),
        (
            "check-4",
            "The train left the station at noon with Priya on board.",
            "Priya was on the train when it left the station.",
            Label::Entailment,
        ),
    ];
    rows.into_iter()
        .map(|(id, p, c, gold)| {
            let item = Item::new(id, ItemType::AttentionCheck, p, c).expect("authored check items are valid");
            (item, gold)
        })
        .collect()
}

/// Every check item asked in both phases.
pub fn checks_for(items: &[(Item, Label)]) -> Vec<AttentionCheck> {
    [Phase::System1, Phase::System2]
        .into_iter()
        .flat_map(|phase| {
            items.iter().map(move |(item, gold)| AttentionCheck {
                item_id: item.id.clone(),
                phase,
                gold: *gold,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSettings {
    pub participants: usize,
    pub careless_rate: f64,
    pub incomplete_rate: f64,
    pub seed: u64,
}

fn clamp_label(x: f64) -> Label {
    let i = x.round().clamp(1.0, 6.0) as usize;
    LabelScheme::SixWay.labels()[i - 1]
}

fn six_way_for(gold: Label, rng: &mut ChaCha8Rng) -> Label {
    let pair = match gold {
        Label::Contradiction => [Label::A, Label::B],
        Label::Neutral => [Label::C, Label::D],
        _ => [Label::E, Label::F],
    };
    pair[rng.random_range(0..2)]
}

/// Simulated participants answering `items` (checks included, ids must be
/// unique) in a per-participant random order; phase 2 repeats phase 1's
/// order. Phase 1 is paced with `timing`, using `base_times` per item.
pub fn simulate_participants(
    items: &[Item],
    checks: &[AttentionCheck],
    base_times: &BTreeMap<String, f64>,
    timing: &TimingParams,
    settings: &SimulationSettings,
) -> Result<Vec<ParticipantRecord>> {
    if items.is_empty() {
        return Err(Error::EmptyInput("simulation needs items"));
    }
    let gold: BTreeMap<&str, Label> = checks.iter().map(|c| (c.item_id.as_str(), c.gold)).collect();
    // latent agreement point of each item on the 1..6 scale
    let center: BTreeMap<&str, f64> = items
        .iter()
        .map(|it| {
            let u = unit_interval(derive_seed(settings.seed, &["item-center", &it.id]));
            (it.id.as_str(), 1.0 + 5.0 * u)
        })
        .collect();
    let noise1 = Normal::new(0.0, 1.1).expect("valid normal");
    let noise2 = Normal::new(0.0, 0.6).expect("valid normal");
    let bias_dist = Normal::new(0.0, 0.5).expect("valid normal");

    (0..settings.participants)
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, &["participant", &p.to_string()]));
            let careless = rng.random::<f64>() < settings.careless_rate;
            let incomplete = rng.random::<f64>() < settings.incomplete_rate;
            let bias = bias_dist.sample(&mut rng);
            let mut order: Vec<&Item> = items.iter().collect();
            order.shuffle(&mut rng);

            let mut responses = Vec::with_capacity(2 * order.len());
            let mut state = PacerState::default();
            let mut first: BTreeMap<&str, f64> = BTreeMap::new();
            for item in &order {
                let base = *base_times
                    .get(&item.id)
                    .ok_or_else(|| Error::InvalidInput(format!("no base time for `{}`", item.id)))?;
                let allotted = allotted_time(base, &state, timing);
                let rt = if careless {
                    allotted * rng.random_range(0.1..0.5)
                } else {
                    allotted * rng.random_range(0.5..1.05)
                };
                state = update_pacer(state, rt, allotted, timing)?;
                let (label, value) = match (careless, gold.get(item.id.as_str())) {
                    (true, _) => {
                        let l = LabelScheme::SixWay.labels()[rng.random_range(0..6)];
                        (l, (l.index() + 1) as f64)
                    }
                    (false, Some(g)) => {
                        let l = if rng.random::<f64>() < 0.95 {
                            six_way_for(*g, &mut rng)
                        } else {
                            LabelScheme::SixWay.labels()[rng.random_range(0..6)]
                        };
                        (l, (l.index() + 1) as f64)
                    }
                    (false, None) => {
                        let v = center[item.id.as_str()] + bias + noise1.sample(&mut rng);
                        (clamp_label(v), v)
                    }
                };
                first.insert(item.id.as_str(), value);
                responses.push(Response {
                    item_id: item.id.clone(),
                    phase: Phase::System1,
                    label,
                    response_time_s: Some(rt),
                    allotted_s: Some(allotted),
                });
            }
            for item in &order {
                let base = base_times[&item.id];
                let label = match (careless, gold.get(item.id.as_str())) {
                    (true, _) => LabelScheme::SixWay.labels()[rng.random_range(0..6)],
                    (false, Some(g)) => six_way_for(*g, &mut rng),
                    (false, None) => {
                        // reflection pulls the answer toward the item's center
                        let v = 0.4 * first[item.id.as_str()] + 0.6 * center[item.id.as_str()] + noise2.sample(&mut rng);
                        clamp_label(v)
                    }
                };
                responses.push(Response {
                    item_id: item.id.clone(),
                    phase: Phase::System2,
                    label,
                    response_time_s: Some(base * rng.random_range(1.0..3.0)),
                    allotted_s: None,
                });
            }
            if incomplete {
                let cut = rng.random_range(order.len() / 2..responses.len());
                responses.truncate(cut);
            }
            Ok(ParticipantRecord {
                participant_id: format!("P{p:03}"),
                complete: !incomplete,
                responses,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::{run_qc, QcConfig};

    fn setup() -> (Vec<Item>, Vec<AttentionCheck>, BTreeMap<String, f64>) {
        let checks_items = attention_items();
        let checks = checks_for(&checks_items);
        let mut items: Vec<Item> = (0..6)
            .map(|i| Item::new(format!("it{i}"), ItemType::Fallacy, "A premise.", "A conclusion.").unwrap())
            .collect();
        items.extend(checks_items.into_iter().map(|(i, _)| i));
        let bases = items.iter().map(|i| (i.id.clone(), 12.0)).collect();
        (items, checks, bases)
    }

    #[test]
    fn records_validate_and_are_seed_stable() {
        let (items, checks, bases) = setup();
        let s = SimulationSettings {
            participants: 40,
            careless_rate: 0.2,
            incomplete_rate: 0.1,
            seed: 3,
        };
        let a = simulate_participants(&items, &checks, &bases, &TimingParams::default(), &s).unwrap();
        let b = simulate_participants(&items, &checks, &bases, &TimingParams::default(), &s).unwrap();
        assert_eq!(a, b);
        for r in &a {
            r.validate().unwrap();
            for resp in r.responses.iter().filter(|x| x.phase == Phase::System1) {
                assert!(resp.allotted_s.unwrap() >= 10.0);
            }
        }
        let decisions = run_qc(&a, &checks, &QcConfig::default()).unwrap();
        let kept = decisions.iter().filter(|(_, d)| d.is_keep()).count();
        assert!(kept > 20 && kept < 40, "kept {kept}");
        assert!(a.iter().any(|r| !r.complete));
    }

    #[test]
    fn eight_checks_over_two_phases() {
        let checks = checks_for(&attention_items());
        assert_eq!(checks.len(), 8);
    }
}
