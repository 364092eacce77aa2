//! Items, vote sets, and normalized vote distributions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{map_6to3, ordinal_of, Label, LabelScheme};

/// Tolerance on the total mass of a normalized distribution.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ItemType {
    StereoNLI,
    Fallacy,
    Syllogism,
    StereoSyllogism,
    EGuilt,
    CGuilt,
    PPrimacyRecency,
    NPrimacyRecency,
    AttentionCheck,
}

impl ItemType {
    pub const ALL: [ItemType; 9] = [
        ItemType::StereoNLI,
        ItemType::Fallacy,
        ItemType::Syllogism,
        ItemType::StereoSyllogism,
        ItemType::EGuilt,
        ItemType::CGuilt,
        ItemType::PPrimacyRecency,
        ItemType::NPrimacyRecency,
        ItemType::AttentionCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ItemType::StereoNLI => "StereoNLI",
            ItemType::Fallacy => "Fallacy",
            ItemType::Syllogism => "Syllogism",
            ItemType::StereoSyllogism => "StereoSyllogism",
            ItemType::EGuilt => "EGuilt",
            ItemType::CGuilt => "CGuilt",
            ItemType::PPrimacyRecency => "PPrimacyRecency",
            ItemType::NPrimacyRecency => "NPrimacyRecency",
            ItemType::AttentionCheck => "AttentionCheck",
        }
    }
}

impl fmt::Display for ItemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ItemType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ItemType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidType(s.to_string()))
    }
}

/// One NLI stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub item_type: ItemType,
    pub premise: String,
    pub conclusion: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Item {
    pub fn new(
        id: impl Into<String>,
        item_type: ItemType,
        premise: impl Into<String>,
        conclusion: impl Into<String>,
    ) -> Result<Self> {
        let item = Item {
            id: id.into(),
            item_type,
            premise: premise.into(),
            conclusion: conclusion.into(),
            metadata: BTreeMap::new(),
        };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidInput("item id is empty".into()));
        }
        if self.premise.trim().is_empty() || self.conclusion.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "item `{}` has an empty premise or conclusion",
                self.id
            )));
        }
        Ok(())
    }

    /// Precomputed numeric metadata value, if present.
    pub fn metadata_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(|v| v.as_f64())
    }
}

/// Checks that every item is valid and ids are unique.
pub fn validate_items(items: &[Item]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for item in items {
        item.validate()?;
        if !seen.insert(item.id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate item id `{}`", item.id)));
        }
    }
    Ok(())
}

/// Survey phase: 1 is the timed, distracted pass; 2 the untimed reflective pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Phase {
    System1,
    System2,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::System1 => 1,
            Phase::System2 => 2,
        }
    }
}

impl TryFrom<u8> for Phase {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Phase::System1),
            2 => Ok(Phase::System2),
            other => Err(format!("phase must be 1 or 2, got {other}")),
        }
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        p.number()
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// All votes cast on one item in one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteSet {
    pub item_id: String,
    pub phase: Phase,
    pub scheme: LabelScheme,
    pub votes: Vec<Label>,
}

impl VoteSet {
    pub fn new(
        item_id: impl Into<String>,
        phase: Phase,
        scheme: LabelScheme,
        votes: Vec<Label>,
    ) -> Result<Self> {
        if let Some(bad) = votes.iter().find(|l| !scheme.contains(**l)) {
            return Err(Error::InvalidLabel {
                label: bad.code().to_string(),
                scheme: scheme.to_string(),
            });
        }
        Ok(VoteSet {
            item_id: item_id.into(),
            phase,
            scheme,
            votes,
        })
    }

    /// The same votes collapsed onto the three-way scheme.
    pub fn to_three_way(&self) -> Result<VoteSet> {
        match self.scheme {
            LabelScheme::ThreeWay => Ok(self.clone()),
            LabelScheme::SixWay => Ok(VoteSet {
                item_id: self.item_id.clone(),
                phase: self.phase,
                scheme: LabelScheme::ThreeWay,
                votes: self.votes.iter().map(|l| map_6to3(*l)).collect::<Result<_>>()?,
            }),
        }
    }

    pub fn in_scheme(&self, scheme: LabelScheme) -> Result<VoteSet> {
        match (self.scheme, scheme) {
            (a, b) if a == b => Ok(self.clone()),
            (LabelScheme::SixWay, LabelScheme::ThreeWay) => self.to_three_way(),
            (a, b) => Err(Error::SchemeMismatch {
                left: a.to_string(),
                right: b.to_string(),
            }),
        }
    }
}

/// Wire format of one line of `human_votes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanVoteRecord {
    pub item_id: String,
    pub phase: Phase,
    pub votes: Vec<Label>,
}

impl HumanVoteRecord {
    /// Human votes are always collected on the six-way scheme.
    pub fn into_vote_set(self) -> Result<VoteSet> {
        VoteSet::new(self.item_id, self.phase, LabelScheme::SixWay, self.votes)
    }
}

impl From<&VoteSet> for HumanVoteRecord {
    fn from(v: &VoteSet) -> Self {
        HumanVoteRecord {
            item_id: v.item_id.clone(),
            phase: v.phase,
            votes: v.votes.clone(),
        }
    }
}

/// Per-label counts in ordinal order.
pub fn label_counts(votes: &[Label], scheme: LabelScheme) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; scheme.size()];
    for &v in votes {
        counts[ordinal_of(v, scheme)? - 1] += 1;
    }
    Ok(counts)
}

/// Modal label with ties broken toward the smallest ordinal.
pub fn majority_label(votes: &[Label], scheme: LabelScheme) -> Result<Label> {
    if votes.is_empty() {
        return Err(Error::EmptyInput("vote list"));
    }
    let counts = label_counts(votes, scheme)?;
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Ok(scheme.labels()[best])
}

/// The gold label: modal vote, smallest-ordinal tie-break.
pub fn gold_label(votes: &VoteSet) -> Result<Label> {
    majority_label(&votes.votes, votes.scheme)
}

/// Population variance of the one-based ordinal values of the votes.
pub fn ordinal_variance(votes: &VoteSet) -> Result<f64> {
    if votes.votes.is_empty() {
        return Err(Error::EmptyInput("vote set"));
    }
    let values = votes
        .votes
        .iter()
        .map(|l| ordinal_of(*l, votes.scheme).map(|o| o as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(population_variance(&values))
}

/// Mean of the one-based ordinal values of the votes.
pub fn ordinal_mean(votes: &VoteSet) -> Result<f64> {
    if votes.votes.is_empty() {
        return Err(Error::EmptyInput("vote set"));
    }
    let sum = votes
        .votes
        .iter()
        .map(|l| ordinal_of(*l, votes.scheme).map(|o| o as f64))
        .sum::<Result<f64>>()?;
    Ok(sum / votes.votes.len() as f64)
}

pub(crate) fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Relative label frequencies of a vote set.
pub fn to_distribution(votes: &VoteSet) -> Result<VoteDistribution> {
    if votes.votes.is_empty() {
        return Err(Error::EmptyInput("vote set"));
    }
    VoteDistribution::from_labels(&votes.votes, votes.scheme)
}

/// A probability vector over the labels of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct VoteDistribution {
    scheme: LabelScheme,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDistribution {
    scheme: LabelScheme,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for VoteDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        VoteDistribution::new(raw.scheme, raw.probs)
    }
}

impl VoteDistribution {
    pub fn new(scheme: LabelScheme, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != scheme.size() {
            return Err(Error::InvalidDistribution(format!(
                "expected {} entries for {scheme}, got {}",
                scheme.size(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(VoteDistribution { scheme, probs })
    }

    /// Normalizes a nonnegative weight vector.
    pub fn from_weights(scheme: LabelScheme, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        VoteDistribution::new(scheme, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn from_labels(labels: &[Label], scheme: LabelScheme) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("vote list"));
        }
        let n = labels.len() as f64;
        let counts = label_counts(labels, scheme)?;
        VoteDistribution::new(scheme, counts.into_iter().map(|c| c as f64 / n).collect())
    }

    pub fn onehot(label: Label) -> Self {
        let scheme = label.scheme();
        let mut probs = vec![0.0; scheme.size()];
        probs[label.index()] = 1.0;
        VoteDistribution { scheme, probs }
    }

    pub fn uniform(scheme: LabelScheme) -> Self {
        let k = scheme.size();
        VoteDistribution {
            scheme,
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, label: Label) -> f64 {
        if self.scheme.contains(label) {
            self.probs[label.index()]
        } else {
            0.0
        }
    }

    /// Expected one-based ordinal value.
    pub fn mean_ordinal(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    pub fn variance_ordinal(&self) -> f64 {
        let mean = self.mean_ordinal();
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| ((i + 1) as f64 - mean).powi(2) * p)
            .sum()
    }

    /// Sums adjacent pairs of six-way mass into the three-way scheme.
    pub fn to_three_way(&self) -> Result<VoteDistribution> {
        match self.scheme {
            LabelScheme::ThreeWay => Ok(self.clone()),
            LabelScheme::SixWay => {
                let mut probs = vec![0.0; 3];
                for (label, p) in self.scheme.labels().iter().zip(&self.probs) {
                    probs[map_6to3(*label)?.index()] += p;
                }
                Ok(VoteDistribution {
                    scheme: LabelScheme::ThreeWay,
                    probs,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::*;

    fn six(votes: Vec<Label>) -> VoteSet {
        VoteSet::new("i", Phase::System1, LabelScheme::SixWay, votes).unwrap()
    }

    #[test]
    fn gold_label_examples() {
        assert_eq!(gold_label(&six(vec![A, A, B])).unwrap(), A);
        assert_eq!(gold_label(&six(vec![A, B])).unwrap(), A);
        let mut v = vec![E; 20];
        v.extend(vec![F; 10]);
        assert_eq!(gold_label(&six(v)).unwrap(), E);
        assert!(matches!(gold_label(&six(vec![])), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(ordinal_variance(&six(vec![C, C, C])).unwrap(), 0.0);
        assert_eq!(ordinal_variance(&six(vec![A, F])).unwrap(), 6.25);
        assert!((ordinal_variance(&six(vec![A, B, C])).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(ordinal_variance(&six(vec![])).is_err());
    }

    #[test]
    fn distribution_examples() {
        let d = to_distribution(&six(vec![A, A, B, B])).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let d = to_distribution(&six(vec![F; 30])).unwrap();
        assert_eq!(d.probs(), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let d = to_distribution(&six(vec![A, B, C, D, E, F])).unwrap();
        assert!(d.probs().iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
        assert!(to_distribution(&six(vec![])).is_err());
    }

    #[test]
    fn rejects_foreign_labels() {
        assert!(VoteSet::new("i", Phase::System2, LabelScheme::SixWay, vec![A, Neutral]).is_err());
        assert!(VoteDistribution::new(LabelScheme::ThreeWay, vec![0.5, 0.6, 0.0]).is_err());
        assert!(VoteDistribution::new(LabelScheme::ThreeWay, vec![1.0, 0.0]).is_err());
        assert!(VoteDistribution::new(LabelScheme::ThreeWay, vec![1.5, -0.5, 0.0]).is_err());
    }

    #[test]
    fn phase_wire_format() {
        let rec: HumanVoteRecord =
            serde_json::from_str(r#"{"item_id":"x","phase":2,"votes":["A","F"]}"#).unwrap();
        assert_eq!(rec.phase, Phase::System2);
        assert!(serde_json::from_str::<HumanVoteRecord>(r#"{"item_id":"x","phase":3,"votes":[]}"#).is_err());
        assert_eq!(
            serde_json::to_string(&rec).unwrap(),
            r#"{"item_id":"x","phase":2,"votes":["A","F"]}"#
        );
    }

    #[test]
    fn item_validation() {
        assert!(Item::new("x", ItemType::Fallacy, "P.", "").is_err());
        let a = Item::new("x", ItemType::Fallacy, "P.", "C.").unwrap();
        assert!(validate_items(&[a.clone(), a]).is_err());
        assert_eq!("egUilt".parse::<ItemType>().unwrap(), ItemType::EGuilt);
    }

    /// Gold label agrees with the argmax of the distribution, checked over
    /// every six-way vote list of length 1..=4 (and spot lengths 5, 6 by proptest).
    #[test]
    fn gold_matches_distribution_argmax_exhaustive() {
        fn rec(prefix: &mut Vec<Label>, depth: usize) {
            if !prefix.is_empty() {
                let vs = six(prefix.clone());
                let d = to_distribution(&vs).unwrap();
                let mut best = 0;
                for i in 1..6 {
                    if d.probs()[i] > d.probs()[best] {
                        best = i;
                    }
                }
                assert_eq!(gold_label(&vs).unwrap().index(), best);
            }
            if depth == 0 {
                return;
            }
            for l in LabelScheme::SixWay.labels() {
                prefix.push(*l);
                rec(prefix, depth - 1);
                prefix.pop();
            }
        }
        rec(&mut Vec::new(), 4);
    }

    fn arb_votes() -> impl Strategy<Value = Vec<Label>> {
        prop::collection::vec(0usize..6, 1..40)
            .prop_map(|v| v.into_iter().map(|i| LabelScheme::SixWay.labels()[i]).collect())
    }

    proptest! {
        #[test]
        fn distribution_is_normalized(votes in arb_votes()) {
            let d = to_distribution(&six(votes)).unwrap();
            prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn mapping_conserves_mass(votes in arb_votes()) {
            let vs = six(votes);
            let d6 = to_distribution(&vs).unwrap();
            let d3 = d6.to_three_way().unwrap();
            let p = d6.probs();
            prop_assert_eq!(d3.probs(), &[p[0] + p[1], p[2] + p[3], p[4] + p[5]][..]);
        }

        #[test]
        fn variance_permutation_invariant(votes in arb_votes(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = votes.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = ordinal_variance(&six(votes)).unwrap();
            let b = ordinal_variance(&six(shuffled)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
