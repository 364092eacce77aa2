use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// High (+) or low (-) pole of one Big Five trait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Trait {
    OpennessHigh,
    OpennessLow,
    ConscientiousnessHigh,
    ConscientiousnessLow,
    ExtraversionHigh,
    ExtraversionLow,
    AgreeablenessHigh,
    AgreeablenessLow,
    NeuroticismHigh,
    NeuroticismLow,
}

impl Trait {
    /// Canonical order used for weight vectors and reports.
    pub const ALL: [Trait; 10] = [
        Trait::OpennessHigh,
        Trait::OpennessLow,
        Trait::ConscientiousnessHigh,
        Trait::ConscientiousnessLow,
        Trait::ExtraversionHigh,
        Trait::ExtraversionLow,
        Trait::AgreeablenessHigh,
        Trait::AgreeablenessLow,
        Trait::NeuroticismHigh,
        Trait::NeuroticismLow,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Trait::OpennessHigh => "O+",
            Trait::OpennessLow => "O-",
            Trait::ConscientiousnessHigh => "C+",
            Trait::ConscientiousnessLow => "C-",
            Trait::ExtraversionHigh => "E+",
            Trait::ExtraversionLow => "E-",
            Trait::AgreeablenessHigh => "A+",
            Trait::AgreeablenessLow => "A-",
            Trait::NeuroticismHigh => "N+",
            Trait::NeuroticismLow => "N-",
        }
    }

    /// Persona description substituted into the personality prompt.
    pub fn persona(self) -> &'static str {
        match self {
            Trait::OpennessHigh => {
                "You're open to new experiences, creative, inventive, curious, and imaginative."
            }
            Trait::OpennessLow => {
                "You prefer routine and familiarity, consistent, conventional, and cautious."
            }
            Trait::ConscientiousnessHigh => "You're organized, efficient, reliable, and responsible.",
            Trait::ConscientiousnessLow => "You're flexible, spontaneous, extravagant, and careless.",
            Trait::ExtraversionHigh => "You're friendly, outgoing, sociable, and energetic.",
            Trait::ExtraversionLow => "You're reserved, quiet, introverted, and solitary.",
            Trait::AgreeablenessHigh => "You're cooperative, warm, friendly, and compassionate.",
            Trait::AgreeablenessLow => "You're competitive, detached, critical, and judgemental.",
            Trait::NeuroticismHigh => "You're anxious, stressed, nervous, and emotionally sensitive.",
            Trait::NeuroticismLow => "You're calm, stable, confident, and emotionally resilient.",
        }
    }

    /// Position in [`Trait::ALL`].
    pub fn index(self) -> usize {
        Trait::ALL.iter().position(|t| *t == self).unwrap_or_default()
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Trait {
    type Err = Error;

    /// Accepts `O-`, `O--` and the Unicode minus `O−` for low poles.
    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().replace('\u{2212}', "-").replace("--", "-");
        Trait::ALL
            .into_iter()
            .find(|t| t.code().eq_ignore_ascii_case(&normalized))
            .ok_or_else(|| Error::InvalidTrait(s.to_string()))
    }
}

impl TryFrom<String> for Trait {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Trait> for String {
    fn from(t: Trait) -> String {
        t.code().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for t in Trait::ALL {
            assert_eq!(t.code().parse::<Trait>().unwrap(), t);
        }
        assert_eq!("N−".parse::<Trait>().unwrap(), Trait::NeuroticismLow);
        assert_eq!("a--".parse::<Trait>().unwrap(), Trait::AgreeablenessLow);
        assert!(matches!("X+".parse::<Trait>(), Err(Error::InvalidTrait(_))));
    }

    #[test]
    fn order_is_fixed() {
        let codes: Vec<_> = Trait::ALL.iter().map(|t| t.code()).collect();
        assert_eq!(codes, ["O+", "O-", "C+", "C-", "E+", "E-", "A+", "A-", "N+", "N-"]);
        assert_eq!(Trait::NeuroticismLow.index(), 9);
    }
}
