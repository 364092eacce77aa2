//! Survey timing model and participant quality control.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{Phase, VoteSet};
use crate::error::{Error, Result};
use crate::labels::{map_6to3, Label, LabelScheme};

/// Coefficients of the per-question time budget and the pacing rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingParams {
    /// Seconds per word.
    pub a: f64,
    /// Seconds per perplexity unit.
    pub b: f64,
    /// Intercept in seconds.
    pub c: f64,
    pub fast_frac: f64,
    pub slow_frac: f64,
    pub down: f64,
    pub up: f64,
    /// Minimum allotted time in seconds.
    pub floor: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            a: 0.0787,
            b: 0.0016,
            c: 6.3276,
            fast_frac: 0.7,
            slow_frac: 0.9,
            down: 0.9,
            up: 1.1,
            floor: 10.0,
        }
    }
}

impl TimingParams {
    /// `a * words + b * perplexity + c`.
    pub fn base_time(&self, words: f64, perplexity: f64) -> Result<f64> {
        if !(words >= 0.0) || !(perplexity >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "base time needs nonnegative inputs, got length {words} and perplexity {perplexity}"
            )));
        }
        Ok(self.a * words + self.b * perplexity + self.c)
    }
}

/// [`TimingParams::base_time`] with the default coefficients.
pub fn base_time(words: f64, perplexity: f64) -> Result<f64> {
    TimingParams::default().base_time(words, perplexity)
}

/// Pacing state of one participant.
///
/// Kept as event counts so the multiplier is `down^fast * up^slow` no matter
/// in which order the events arrived.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacerState {
    pub fast: u32,
    pub slow: u32,
}

impl PacerState {
    pub fn multiplier(&self, params: &TimingParams) -> f64 {
        params.down.powi(self.fast as i32) * params.up.powi(self.slow as i32)
    }
}

/// Registers one response: fast answers shrink later budgets, slow ones grow them.
pub fn update_pacer(
    state: PacerState,
    response_time: f64,
    allotted: f64,
    params: &TimingParams,
) -> Result<PacerState> {
    if !(allotted > 0.0) {
        return Err(Error::InvalidInput(format!("allotted time must be > 0, got {allotted}")));
    }
    if !(response_time >= 0.0) {
        return Err(Error::InvalidInput(format!("response time must be >= 0, got {response_time}")));
    }
    let mut next = state;
    if response_time < params.fast_frac * allotted {
        next.fast += 1;
    } else if response_time > params.slow_frac * allotted {
        next.slow += 1;
    }
    Ok(next)
}

/// `max(floor, base * multiplier)`.
pub fn allotted_time(base: f64, state: &PacerState, params: &TimingParams) -> f64 {
    (base * state.multiplier(params)).max(params.floor)
}

/// Allotted time for each question of a timed sequence given the observed
/// response times. `bases[i]` is the base time of question `i`.
pub fn simulate_pacing(bases: &[f64], response_times: &[f64], params: &TimingParams) -> Result<Vec<f64>> {
    if bases.len() != response_times.len() {
        return Err(Error::InvalidInput(format!(
            "{} base times but {} response times",
            bases.len(),
            response_times.len()
        )));
    }
    let mut state = PacerState::default();
    let mut out = Vec::with_capacity(bases.len());
    for (base, rt) in bases.iter().zip(response_times) {
        let allotted = allotted_time(*base, &state, params);
        out.push(allotted);
        state = update_pacer(state, *rt, allotted, params)?;
    }
    Ok(out)
}

/// One answer given by a participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub item_id: String,
    pub phase: Phase,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allotted_s: Option<f64>,
}

/// One line of `participants.jsonl`, responses in the order given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant_id: String,
    pub complete: bool,
    pub responses: Vec<Response>,
}

impl ParticipantRecord {
    /// Checks labels are 6-way, phase 1 precedes phase 2, no (item, phase)
    /// repeats, and phase 2 follows the phase 1 question order.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(format!("participant `{}`: {m}", self.participant_id)));
        let mut seen = BTreeSet::new();
        let mut in_phase2 = false;
        let mut order1 = Vec::new();
        let mut order2 = Vec::new();
        for r in &self.responses {
            if r.label.scheme() != LabelScheme::SixWay {
                return fail(format!("response {} to `{}` is not a 6-way label", r.label, r.item_id));
            }
            if !seen.insert((r.item_id.clone(), r.phase)) {
                return fail(format!("duplicate response to `{}` in phase {}", r.item_id, r.phase));
            }
            match r.phase {
                Phase::System1 if in_phase2 => return fail("phase 1 response after phase 2 began".into()),
                Phase::System1 => order1.push(r.item_id.as_str()),
                Phase::System2 => {
                    in_phase2 = true;
                    order2.push(r.item_id.as_str());
                }
            }
        }
        let follows = order1.iter().filter(|id| order2.contains(id)).copied().collect::<Vec<_>>();
        if follows != order2 {
            return fail("phase 2 questions are not in phase 1 order".into());
        }
        Ok(())
    }

    pub fn response(&self, item_id: &str, phase: Phase) -> Option<&Response> {
        self.responses
            .iter()
            .find(|r| r.item_id == item_id && r.phase == phase)
    }
}

/// A high-agreement item used as an attention check in one phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionCheck {
    pub item_id: String,
    pub phase: Phase,
    /// Expected answer on the 3-way scale.
    pub gold: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    pub expected_checks: usize,
    /// Participants with more mismatches than this are excluded.
    pub max_mismatches: usize,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            expected_checks: 8,
            max_mismatches: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExcludeReason {
    Incomplete,
    Attention { mismatches: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum QcDecision {
    Keep { mismatches: usize },
    Exclude(ExcludeReason),
}

impl QcDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, QcDecision::Keep { .. })
    }
}

/// [`attention_filter_with`] under the default eight checks / more-than-five rule.
pub fn attention_filter(record: &ParticipantRecord, checks: &[AttentionCheck]) -> Result<QcDecision> {
    attention_filter_with(record, checks, &QcConfig::default())
}

/// Incomplete participants are excluded first; otherwise a check matches
/// when the 6-way answer maps to the check's 3-way gold, and a missing
/// answer counts as a mismatch.
pub fn attention_filter_with(
    record: &ParticipantRecord,
    checks: &[AttentionCheck],
    config: &QcConfig,
) -> Result<QcDecision> {
    if checks.len() != config.expected_checks {
        return Err(Error::InvalidInput(format!(
            "expected {} attention checks, got {}",
            config.expected_checks,
            checks.len()
        )));
    }
    let keys: BTreeSet<(&str, Phase)> = checks.iter().map(|c| (c.item_id.as_str(), c.phase)).collect();
    if keys.len() != checks.len() {
        return Err(Error::InvalidInput("attention checks repeat an (item, phase) pair".into()));
    }
    if let Some(c) = checks.iter().find(|c| c.gold.scheme() != LabelScheme::ThreeWay) {
        return Err(Error::InvalidInput(format!(
            "attention check `{}` gold {} is not a 3-way label",
            c.item_id, c.gold
        )));
    }
    if !record.complete {
        return Ok(QcDecision::Exclude(ExcludeReason::Incomplete));
    }
    let mut mismatches = 0;
    for check in checks {
        let matched = match record.response(&check.item_id, check.phase) {
            Some(r) => map_6to3(r.label)? == check.gold,
            None => false,
        };
        if !matched {
            mismatches += 1;
        }
    }
    Ok(if mismatches > config.max_mismatches {
        QcDecision::Exclude(ExcludeReason::Attention { mismatches })
    } else {
        QcDecision::Keep { mismatches }
    })
}

/// One row of the QC report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcRow {
    pub participant_id: String,
    pub decision: String,
    pub reason: String,
    pub mismatches: Option<usize>,
}

impl QcRow {
    pub fn new(participant_id: &str, decision: &QcDecision) -> Self {
        let (d, reason, mismatches) = match decision {
            QcDecision::Keep { mismatches } => ("keep", String::new(), Some(*mismatches)),
            QcDecision::Exclude(ExcludeReason::Incomplete) => ("exclude", "incomplete".into(), None),
            QcDecision::Exclude(ExcludeReason::Attention { mismatches }) => {
                ("exclude", "attention".into(), Some(*mismatches))
            }
        };
        QcRow {
            participant_id: participant_id.to_string(),
            decision: d.into(),
            reason,
            mismatches,
        }
    }
}

/// Validates every record and decides keep/exclude for each.
pub fn run_qc(
    records: &[ParticipantRecord],
    checks: &[AttentionCheck],
    config: &QcConfig,
) -> Result<Vec<(String, QcDecision)>> {
    let mut ids = BTreeSet::new();
    records
        .iter()
        .map(|r| {
            if !ids.insert(r.participant_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "participant `{}` appears twice",
                    r.participant_id
                )));
            }
            r.validate()?;
            Ok((r.participant_id.clone(), attention_filter_with(r, checks, config)?))
        })
        .collect()
}

pub fn qc_csv(decisions: &[(String, QcDecision)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (id, d) in decisions {
        w.serialize(QcRow::new(id, d))
            .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Human vote sets per (item, phase) from the kept participants, sorted by item then phase.
pub fn human_votes(records: &[ParticipantRecord], decisions: &[(String, QcDecision)]) -> Result<Vec<VoteSet>> {
    let keep: BTreeSet<&str> = decisions
        .iter()
        .filter(|(_, d)| d.is_keep())
        .map(|(id, _)| id.as_str())
        .collect();
    let mut grouped: BTreeMap<(String, Phase), Vec<Label>> = BTreeMap::new();
    for r in records.iter().filter(|r| keep.contains(r.participant_id.as_str())) {
        for resp in &r.responses {
            grouped
                .entry((resp.item_id.clone(), resp.phase))
                .or_default()
                .push(resp.label);
        }
    }
    grouped
        .into_iter()
        .map(|((item, phase), votes)| VoteSet::new(item, phase, LabelScheme::SixWay, votes))
        .collect()
}

/// Recomputes phase 1 budgets from item base times and compares them with
/// the recorded ones. Returns `(item_id, recorded, expected)` for every
/// response that differs by more than `tolerance`.
pub fn audit_timing(
    record: &ParticipantRecord,
    base_times: &BTreeMap<String, f64>,
    params: &TimingParams,
    tolerance: f64,
) -> Result<Vec<(String, f64, f64)>> {
    let mut state = PacerState::default();
    let mut out = Vec::new();
    for r in record.responses.iter().filter(|r| r.phase == Phase::System1) {
        let base = *base_times
            .get(&r.item_id)
            .ok_or_else(|| Error::InvalidInput(format!("no base time for item `{}`", r.item_id)))?;
        let expected = allotted_time(base, &state, params);
        if let Some(recorded) = r.allotted_s {
            if (recorded - expected).abs() > tolerance {
                out.push((r.item_id.clone(), recorded, expected));
            }
        }
        if let Some(rt) = r.response_time_s {
            state = update_pacer(state, rt, expected, params)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn base_time_examples() {
        assert!((base_time(0.0, 0.0).unwrap() - 6.3276).abs() < 1e-12);
        assert!((base_time(20.0, 100.0).unwrap() - 8.0616).abs() < 1e-9);
        assert!(base_time(21.0, 100.0).unwrap() > base_time(20.0, 100.0).unwrap());
        assert!(base_time(-1.0, 3.0).is_err());
    }

    #[test]
    fn pacer_examples() {
        let p = TimingParams::default();
        let s = PacerState::default();
        let fast = update_pacer(update_pacer(s, 1.0, 20.0, &p).unwrap(), 1.0, 20.0, &p).unwrap();
        assert!((fast.multiplier(&p) - 0.81).abs() < 1e-12);
        let slow = update_pacer(s, 19.0, 20.0, &p).unwrap();
        assert!((slow.multiplier(&p) - 1.1).abs() < 1e-12);
        assert_eq!(update_pacer(s, 16.0, 20.0, &p).unwrap(), s);
        assert!(update_pacer(s, 1.0, 0.0, &p).is_err());
        // band edges are inclusive on the unchanged side
        assert_eq!(update_pacer(s, 14.0, 20.0, &p).unwrap(), s);
        assert_eq!(update_pacer(s, 18.0, 20.0, &p).unwrap(), s);
    }

    #[test]
    fn allotted_examples() {
        let p = TimingParams::default();
        let two_fast = PacerState { fast: 2, slow: 0 };
        assert_eq!(allotted_time(12.0, &two_fast, &p), 10.0);
        let one_slow = PacerState { fast: 0, slow: 1 };
        assert!((allotted_time(12.0, &one_slow, &p) - 13.2).abs() < 1e-12);
        assert_eq!(allotted_time(8.0616, &PacerState::default(), &p), 10.0);
    }

    fn checks() -> Vec<AttentionCheck> {
        (0..4)
            .flat_map(|i| {
                [Phase::System1, Phase::System2].map(|phase| AttentionCheck {
                    item_id: format!("chk{i}"),
                    phase,
                    gold: Label::Entailment,
                })
            })
            .collect()
    }

    fn participant(mismatches: usize, complete: bool) -> ParticipantRecord {
        let cs = checks();
        let mut responses: Vec<Response> = cs
            .iter()
            .enumerate()
            .map(|(i, c)| Response {
                item_id: c.item_id.clone(),
                phase: c.phase,
                label: if i < mismatches { Label::B } else { Label::F },
                response_time_s: None,
                allotted_s: None,
            })
            .collect();
        responses.sort_by_key(|r| r.phase);
        ParticipantRecord {
            participant_id: format!("p{mismatches}{complete}"),
            complete,
            responses,
        }
    }

    #[test]
    fn attention_examples() {
        let cs = checks();
        assert_eq!(
            attention_filter(&participant(6, true), &cs).unwrap(),
            QcDecision::Exclude(ExcludeReason::Attention { mismatches: 6 })
        );
        assert_eq!(attention_filter(&participant(5, true), &cs).unwrap(), QcDecision::Keep { mismatches: 5 });
        assert_eq!(
            attention_filter(&participant(0, false), &cs).unwrap(),
            QcDecision::Exclude(ExcludeReason::Incomplete)
        );
        assert!(attention_filter(&participant(0, true), &cs[..7]).is_err());
        // a missing answer is a mismatch
        let mut p = participant(5, true);
        p.responses.pop();
        assert!(!attention_filter(&p, &cs).unwrap().is_keep());
    }

    #[test]
    fn record_validation() {
        let mut p = participant(0, true);
        assert!(p.validate().is_ok());
        p.responses.swap(0, 7);
        assert!(p.validate().is_err());
        let mut q = participant(0, true);
        let last = q.responses.len() - 1;
        q.responses.swap(last - 1, last);
        assert!(q.validate().is_err(), "phase 2 out of phase 1 order");
    }

    #[test]
    fn votes_only_from_kept_participants() {
        let cs = checks();
        let records = vec![participant(0, true), participant(7, true), participant(1, true)];
        let decisions = run_qc(&records, &cs, &QcConfig::default()).unwrap();
        let votes = human_votes(&records, &decisions).unwrap();
        assert_eq!(votes.len(), 8);
        assert!(votes.iter().all(|v| v.votes.len() == 2));
        let csv = qc_csv(&decisions).unwrap();
        assert!(csv.starts_with("participant_id,decision,reason,mismatches\n"));
        assert!(csv.contains("p7true,exclude,attention,7"));
    }

    #[test]
    fn timing_audit_replays_pacing() {
        let p = TimingParams::default();
        let bases: BTreeMap<String, f64> = [("a", 20.0), ("b", 20.0), ("c", 20.0)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let allotted = simulate_pacing(&[20.0; 3], &[1.0, 1.0, 15.0], &p).unwrap();
        assert_eq!(allotted[0], 20.0);
        assert!((allotted[2] - 16.2).abs() < 1e-12);
        let record = ParticipantRecord {
            participant_id: "x".into(),
            complete: true,
            responses: ["a", "b", "c"]
                .iter()
                .zip(&allotted)
                .zip([1.0, 1.0, 15.0])
                .map(|((id, al), rt)| Response {
                    item_id: id.to_string(),
                    phase: Phase::System1,
                    label: Label::C,
                    response_time_s: Some(rt),
                    allotted_s: Some(*al),
                })
                .collect(),
        };
        assert!(audit_timing(&record, &bases, &p, 1e-9).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn multiplier_is_order_free(events in prop::collection::vec(prop::bool::ANY, 0..30)) {
            let p = TimingParams::default();
            let apply = |evs: &[bool]| {
                evs.iter().fold(PacerState::default(), |s, fast| {
                    update_pacer(s, if *fast { 0.0 } else { 100.0 }, 50.0, &p).unwrap()
                })
            };
            let mut rev = events.clone();
            rev.reverse();
            let (a, b) = (apply(&events), apply(&rev));
            prop_assert_eq!(a.multiplier(&p), b.multiplier(&p));
            let n = events.iter().filter(|f| **f).count() as i32;
            let m = events.len() as i32 - n;
            prop_assert_eq!(a.multiplier(&p), 0.9f64.powi(n) * 1.1f64.powi(m));
        }

        #[test]
        fn attention_is_order_independent(mis in 0usize..9, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut cs = checks();
            let rec = participant(mis, true);
            let before = attention_filter(&rec, &cs).unwrap();
            cs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(before, attention_filter(&rec, &cs).unwrap());
        }
    }
}
