use crate::error::{Error, Result};
use crate::labels::{Label, LabelScheme};

fn is_wrapper(c: char) -> bool {
    c.is_whitespace() || (c.is_ascii_punctuation() && c != '+' && c != '-') || c == '“' || c == '”'
}

fn strip_wrappers(s: &str) -> &str {
    s.trim_matches(is_wrapper)
}

/// Extracts a vote from the first nonempty line of a model response.
pub fn parse_vote(response: &str, scheme: LabelScheme) -> Result<Label> {
    let line = response
        .lines()
        .map(str::trim)
        .find(|l| !strip_wrappers(l).is_empty())
        .ok_or_else(|| Error::UnparseableResponse(response.to_string()))?;
    let core = strip_wrappers(line);
    let unparseable = || Error::UnparseableResponse(response.to_string());

    let by_text = |s: &str| {
        let s = strip_wrappers(s);
        scheme
            .labels()
            .iter()
            .copied()
            .find(|l| l.text().eq_ignore_ascii_case(s))
    };
    let by_code = |s: &str| {
        scheme
            .labels()
            .iter()
            .copied()
            .find(|l| l.code().eq_ignore_ascii_case(s))
    };

    if let Some(label) = by_code(core).or_else(|| by_text(core)) {
        return Ok(label);
    }

    // "<code><sep> <option text>", e.g. "B. Is more likely to be false" or
    // "Entailment: s2 entails s1".
    let split = core
        .char_indices()
        .find(|(_, c)| matches!(c, '.' | ')' | ':' | '-' | '\u{2013}'))
        .map(|(i, c)| (&core[..i], &core[i + c.len_utf8()..]));
    if let Some((head, rest)) = split {
        if let Some(label) = by_code(strip_wrappers(head)) {
            let rest = strip_wrappers(rest);
            return match by_text(rest) {
                Some(other) if other != label => Err(unparseable()),
                _ if rest.is_empty() || by_text(rest).is_some() => Ok(label),
                _ => Err(unparseable()),
            };
        }
    }
    Err(unparseable())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::prompts::canonical_renderings;

    #[test]
    fn examples() {
        assert_eq!(parse_vote("E", LabelScheme::SixWay).unwrap(), Label::E);
        assert_eq!(
            parse_vote("B. Is more likely to be false", LabelScheme::SixWay).unwrap(),
            Label::B
        );
        assert_eq!(parse_vote("neutral", LabelScheme::ThreeWay).unwrap(), Label::Neutral);
    }

    #[test]
    fn tolerant_forms() {
        assert_eq!(parse_vote("\n\n  **f**\nbecause...", LabelScheme::SixWay).unwrap(), Label::F);
        assert_eq!(parse_vote("(c)", LabelScheme::SixWay).unwrap(), Label::C);
        assert_eq!(parse_vote("D)", LabelScheme::SixWay).unwrap(), Label::D);
        assert_eq!(
            parse_vote("is more likely to be TRUE.", LabelScheme::SixWay).unwrap(),
            Label::E
        );
        assert_eq!(
            parse_vote("\"Contradiction.\"", LabelScheme::ThreeWay).unwrap(),
            Label::Contradiction
        );
        assert_eq!(
            parse_vote("Entailment: s2 entails s1", LabelScheme::ThreeWay).unwrap(),
            Label::Entailment
        );
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["Z", "", "   \n", "I think the answer is", "A. Absolutely must be true", "G."] {
            assert!(
                matches!(parse_vote(bad, LabelScheme::SixWay), Err(Error::UnparseableResponse(_))),
                "{bad:?}"
            );
        }
        assert!(parse_vote("E", LabelScheme::ThreeWay).is_err());
        assert!(parse_vote("Entailment", LabelScheme::SixWay).is_err());
    }

    #[test]
    fn parse_inverts_every_canonical_rendering() {
        for scheme in LabelScheme::ALL {
            for &label in scheme.labels() {
                for r in canonical_renderings(label) {
                    assert_eq!(parse_vote(&r, scheme).unwrap(), label, "{r}");
                }
            }
        }
    }
}
