//! Ordinal label schemes for graded NLI judgments.
//!
//! The six-way scheme refines the classic three-way one; each pair of
//! adjacent six-way labels collapses onto a single three-way label.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which label set an item is judged under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelScheme {
    #[serde(rename = "6way", alias = "SixWay")]
    SixWay,
    #[serde(rename = "3way", alias = "ThreeWay")]
    ThreeWay,
}

const SIX_WAY: [Label; 6] = [Label::A, Label::B, Label::C, Label::D, Label::E, Label::F];
const THREE_WAY: [Label; 3] = [Label::Contradiction, Label::Neutral, Label::Entailment];

impl LabelScheme {
    pub const ALL: [LabelScheme; 2] = [LabelScheme::SixWay, LabelScheme::ThreeWay];

    /// Number of labels, `k`.
    pub fn size(self) -> usize {
        self.labels().len()
    }

    /// Labels in ordinal order.
    pub fn labels(self) -> &'static [Label] {
        match self {
            LabelScheme::SixWay => &SIX_WAY,
            LabelScheme::ThreeWay => &THREE_WAY,
        }
    }

    /// Label at zero-based position `index`.
    pub fn label_at(self, index: usize) -> Option<Label> {
        self.labels().get(index).copied()
    }

    pub fn contains(self, label: Label) -> bool {
        label.scheme() == self
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelScheme::SixWay => "6way",
            LabelScheme::ThreeWay => "3way",
        }
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "6way" | "6-way" | "six" | "sixway" => Ok(LabelScheme::SixWay),
            "3way" | "3-way" | "three" | "threeway" => Ok(LabelScheme::ThreeWay),
            _ => Err(Error::InvalidParameter(format!("unknown label scheme `{s}`"))),
        }
    }
}

/// A single categorical judgment. Six-way codes are the letters A–F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
    C,
    D,
    E,
    F,
    Contradiction,
    Neutral,
    Entailment,
}

impl Label {
    pub fn scheme(self) -> LabelScheme {
        match self {
            Label::A | Label::B | Label::C | Label::D | Label::E | Label::F => LabelScheme::SixWay,
            Label::Contradiction | Label::Neutral | Label::Entailment => LabelScheme::ThreeWay,
        }
    }

    /// Zero-based position within its scheme.
    pub fn index(self) -> usize {
        match self {
            Label::A | Label::Contradiction => 0,
            Label::B | Label::Neutral => 1,
            Label::C | Label::Entailment => 2,
            Label::D => 3,
            Label::E => 4,
            Label::F => 5,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Label::A => "A",
            Label::B => "B",
            Label::C => "C",
            Label::D => "D",
            Label::E => "E",
            Label::F => "F",
            Label::Contradiction => "Contradiction",
            Label::Neutral => "Neutral",
            Label::Entailment => "Entailment",
        }
    }

    /// Option text shown to annotators and models.
    pub fn text(self) -> &'static str {
        match self {
            Label::A => "Absolutely must be false",
            Label::B => "Is more likely to be false",
            Label::C => "Has strong reasons to be true and strong reasons to be false",
            Label::D => "Has no reasons to be either true or false",
            Label::E => "Is more likely to be true",
            Label::F => "Absolutely must be true",
            Label::Contradiction => "s2 contradicts s1",
            Label::Neutral => "Cannot pick either of the above or both are likely",
            Label::Entailment => "s2 entails s1",
        }
    }

    /// Parses a label code in the given scheme.
    pub fn parse(code: &str, scheme: LabelScheme) -> Result<Label> {
        scheme
            .labels()
            .iter()
            .copied()
            .find(|l| l.code() == code)
            .ok_or_else(|| Error::InvalidLabel {
                label: code.to_string(),
                scheme: scheme.to_string(),
            })
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::parse(s, LabelScheme::SixWay).or_else(|_| Label::parse(s, LabelScheme::ThreeWay))
    }
}

/// One-based ordinal value of `label` in `scheme` (A→1 … F→6; Contradiction→1 … Entailment→3).
pub fn ordinal_of(label: Label, scheme: LabelScheme) -> Result<usize> {
    if !scheme.contains(label) {
        return Err(Error::InvalidLabel {
            label: label.code().to_string(),
            scheme: scheme.to_string(),
        });
    }
    Ok(label.index() + 1)
}

/// Collapses a six-way label onto the three-way scheme.
pub fn map_6to3(label: Label) -> Result<Label> {
    match label {
        Label::A | Label::B => Ok(Label::Contradiction),
        Label::C | Label::D => Ok(Label::Neutral),
        Label::E | Label::F => Ok(Label::Entailment),
        other => Err(Error::InvalidLabel {
            label: other.code().to_string(),
            scheme: LabelScheme::SixWay.to_string(),
        }),
    }
}
