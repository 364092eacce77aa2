//! Dataset statistics: label shift between phases and feature correlations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{ItemType, Phase};
use crate::distmath::{kendall_tau, KendallTau};
use crate::error::{Error, Result};
use crate::labels::{Label, LabelScheme};
use crate::survey::ParticipantRecord;

/// Significance level below which a tau entry is shown.
pub const TAU_ALPHA: f64 = 0.05;

/// One participant's answer to one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantVote {
    pub participant_id: String,
    pub item_id: String,
    pub label: Label,
}

/// Splits participant records into phase 1 and phase 2 votes.
pub fn participant_votes(records: &[ParticipantRecord]) -> (Vec<ParticipantVote>, Vec<ParticipantVote>) {
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    for r in records {
        for resp in &r.responses {
            let v = ParticipantVote {
                participant_id: r.participant_id.clone(),
                item_id: resp.item_id.clone(),
                label: resp.label,
            };
            match resp.phase {
                Phase::System1 => p1.push(v),
                Phase::System2 => p2.push(v),
            }
        }
    }
    (p1, p2)
}

/// 6×6 counts, rows are phase 1 labels A..F, columns phase 2 labels.
pub type FlowMatrix = Vec<Vec<u64>>;

/// Phase 1 → phase 2 label flows per item type, over (participant, item) pairs.
pub fn label_shift_flows(
    phase1: &[ParticipantVote],
    phase2: &[ParticipantVote],
    item_types: &BTreeMap<String, ItemType>,
) -> Result<BTreeMap<ItemType, FlowMatrix>> {
    let index = |votes: &[ParticipantVote], phase: u8| -> Result<BTreeMap<(String, String), Label>> {
        let mut out = BTreeMap::new();
        for v in votes {
            if v.label.scheme() != LabelScheme::SixWay {
                return Err(Error::InvalidLabel {
                    label: v.label.to_string(),
                    scheme: LabelScheme::SixWay.to_string(),
                });
            }
            if out
                .insert((v.participant_id.clone(), v.item_id.clone()), v.label)
                .is_some()
            {
                return Err(Error::InvalidInput(format!(
                    "participant `{}` answered `{}` twice in phase {phase}",
                    v.participant_id, v.item_id
                )));
            }
        }
        Ok(out)
    };
    let first = index(phase1, 1)?;
    let second = index(phase2, 2)?;
    let mut unpaired: Vec<String> = Vec::new();
    for (key, phase) in [(&first, 1), (&second, 2)] {
        let other = if phase == 1 { &second } else { &first };
        for (p, i) in key.keys() {
            if !other.contains_key(&(p.clone(), i.clone())) {
                unpaired.push(format!("{p}/{i} (phase {phase} only)"));
            }
        }
    }
    if !unpaired.is_empty() {
        return Err(Error::Pairing(unpaired));
    }
    let mut flows: BTreeMap<ItemType, FlowMatrix> = BTreeMap::new();
    for ((p, item), l1) in &first {
        let l2 = second[&(p.clone(), item.clone())];
        let t = item_types
            .get(item)
            .ok_or_else(|| Error::InvalidInput(format!("no item type for `{item}`")))?;
        let m = flows.entry(*t).or_insert_with(|| vec![vec![0; 6]; 6]);
        m[l1.index()][l2.index()] += 1;
    }
    Ok(flows)
}

/// Label percentages per phase and the signed change in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramDelta {
    pub labels: Vec<String>,
    pub phase1_pct: Vec<f64>,
    pub phase2_pct: Vec<f64>,
    pub delta_pp: Vec<f64>,
}

pub fn label_histogram_delta(phase1: &[Label], phase2: &[Label]) -> Result<HistogramDelta> {
    if phase1.is_empty() || phase2.is_empty() {
        return Err(Error::EmptyInput("label histogram needs votes in both phases"));
    }
    let scheme = phase1[0].scheme();
    if let Some(bad) = phase1.iter().chain(phase2).find(|l| l.scheme() != scheme) {
        return Err(Error::SchemeMismatch {
            left: scheme.to_string(),
            right: bad.scheme().to_string(),
        });
    }
    let pct = |votes: &[Label]| {
        let mut counts = vec![0usize; scheme.size()];
        for l in votes {
            counts[l.index()] += 1;
        }
        counts
            .into_iter()
            .map(|c| 100.0 * c as f64 / votes.len() as f64)
            .collect::<Vec<_>>()
    };
    let (a, b) = (pct(phase1), pct(phase2));
    Ok(HistogramDelta {
        labels: scheme.labels().iter().map(|l| l.code().to_string()).collect(),
        delta_pp: b.iter().zip(&a).map(|(y, x)| y - x).collect(),
        phase1_pct: a,
        phase2_pct: b,
    })
}

/// Pairwise Kendall tau among named per-item columns.
///
/// `None` marks pairs where tau is undefined (a constant column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauMatrix {
    pub names: Vec<String>,
    pub entries: Vec<Vec<Option<KendallTau>>>,
}

impl TauMatrix {
    /// Tau values with `p >= alpha` (and undefined entries) blanked.
    pub fn masked(&self, alpha: f64) -> Vec<Vec<Option<f64>>> {
        self.entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| e.filter(|k| k.p_value < alpha).map(|k| k.tau))
                    .collect()
            })
            .collect()
    }
}

pub fn feature_tau_matrix(names: &[String], columns: &[Vec<f64>]) -> Result<TauMatrix> {
    if names.len() != columns.len() {
        return Err(Error::InvalidInput(format!(
            "{} names for {} columns",
            names.len(),
            columns.len()
        )));
    }
    let unique: BTreeSet<&String> = names.iter().collect();
    if unique.len() != names.len() {
        return Err(Error::InvalidInput("duplicate feature names".into()));
    }
    let n = columns.len();
    let mut entries = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let cell = match kendall_tau(&columns[i], &columns[j]) {
                Ok(k) => Some(k),
                // a constant column leaves tau undefined; anything else is a real error
                Err(Error::InvalidInput(_)) if columns[i].len() == columns[j].len() && columns[i].len() >= 2 => None,
                Err(e) => return Err(e),
            };
            entries[i][j] = cell;
            entries[j][i] = cell;
        }
    }
    Ok(TauMatrix {
        names: names.to_vec(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(p: &str, i: &str, l: Label) -> ParticipantVote {
        ParticipantVote {
            participant_id: p.into(),
            item_id: i.into(),
            label: l,
        }
    }

    fn types() -> BTreeMap<String, ItemType> {
        [("i1", ItemType::Fallacy), ("i2", ItemType::Syllogism)]
            .iter()
            .map(|(k, t)| (k.to_string(), *t))
            .collect()
    }

    #[test]
    fn unchanged_votes_give_a_diagonal() {
        let votes = vec![pv("p1", "i1", Label::A), pv("p2", "i1", Label::C), pv("p1", "i2", Label::F)];
        let flows = label_shift_flows(&votes, &votes, &types()).unwrap();
        for m in flows.values() {
            for (i, row) in m.iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    if i != j {
                        assert_eq!(*c, 0);
                    }
                }
            }
        }
        let total: u64 = flows.values().flatten().flatten().sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn single_change_lands_in_one_cell() {
        let p1 = vec![pv("p1", "i1", Label::E), pv("p2", "i1", Label::E)];
        let p2 = vec![pv("p1", "i1", Label::B), pv("p2", "i1", Label::E)];
        let flows = label_shift_flows(&p1, &p2, &types()).unwrap();
        let m = &flows[&ItemType::Fallacy];
        // E is the fifth label and B the second
        assert_eq!(m[4][1], 1);
        assert_eq!(m[4][4], 1);
        let row_sums: Vec<u64> = m.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![0, 0, 0, 0, 2, 0]);
    }

    #[test]
    fn unpaired_votes_are_listed() {
        let p1 = vec![pv("p1", "i1", Label::E), pv("p2", "i1", Label::E)];
        let p2 = vec![pv("p1", "i1", Label::B), pv("p3", "i1", Label::E)];
        match label_shift_flows(&p1, &p2, &types()) {
            Err(Error::Pairing(list)) => {
                assert_eq!(list, vec!["p2/i1 (phase 1 only)", "p3/i1 (phase 2 only)"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn histogram_examples() {
        let same = vec![Label::A, Label::E, Label::E];
        let d = label_histogram_delta(&same, &same).unwrap();
        assert!(d.delta_pp.iter().all(|x| *x == 0.0));
        let d = label_histogram_delta(&[Label::E; 4], &[Label::F; 3]).unwrap();
        assert_eq!(d.delta_pp, vec![0.0, 0.0, 0.0, 0.0, -100.0, 100.0]);
        assert!(label_histogram_delta(&[], &same).is_err());
    }

    #[test]
    fn tau_matrix_is_symmetric_with_unit_diagonal() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let cols = vec![
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![2.0, 1.0, 4.0, 3.0, 6.0, 5.0],
            vec![3.0, 3.0, 3.0, 3.0, 3.0, 3.0],
        ];
        let m = feature_tau_matrix(&names, &cols).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.entries[i][j], m.entries[j][i]);
            }
        }
        assert_eq!(m.entries[0][0].unwrap().tau, 1.0);
        assert!(m.entries[2][2].is_none());
        let masked = m.masked(TAU_ALPHA);
        // tau(a, b) = 0.6 with p ~ 0.09: kept in the JSON, hidden when rendered
        let ab = m.entries[0][1].unwrap();
        assert!(ab.p_value >= TAU_ALPHA);
        assert!(masked[0][1].is_none());
    }

    #[test]
    fn mask_threshold_is_strict() {
        let m = TauMatrix {
            names: vec!["x".into()],
            entries: vec![vec![Some(KendallTau { tau: 0.5, p_value: 0.05 })]],
        };
        assert_eq!(m.masked(0.05)[0][0], None);
        let m2 = TauMatrix {
            names: vec!["x".into()],
            entries: vec![vec![Some(KendallTau { tau: 0.5, p_value: 0.049_999 })]],
        };
        assert_eq!(m2.masked(0.05)[0][0], Some(0.5));
    }
}
