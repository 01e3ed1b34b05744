use serde_json::{Map, Value};
use thiserror::Error;

use super::LabelScheme;
use crate::agents::DecisionPair;
use crate::market::{Action, Signal};

/// Why a reply could not be turned into a decision pair.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("no JSON object found in reply")]
    NoObject,
    #[error("reply object lacks key {0}")]
    MissingKey(String),
    #[error("unrecognized action {0:?}")]
    UnrecognizedAction(String),
}

/// Maps an action string to an [`Action`] by its leading keyword.
///
/// The unfilled template text ("BUY/SELL/NO TRADE ...") is rejected.
pub fn parse_action(text: &str) -> Result<Action, ParseFailure> {
    let cleaned = text
        .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '*' | '`' | '-'))
        .to_ascii_uppercase();
    let unrecognized = || ParseFailure::UnrecognizedAction(text.to_string());
    for prefix in ["NO TRADE", "NO-TRADE", "NO_TRADE", "NOTRADE"] {
        if cleaned.starts_with(prefix) {
            return Ok(Action::NoTrade);
        }
    }
    let word_end = cleaned
        .find(|c: char| !c.is_ascii_alphabetic())
        .unwrap_or(cleaned.len());
    if cleaned[word_end..].starts_with('/') {
        return Err(unrecognized());
    }
    match &cleaned[..word_end] {
        "BUY" => Ok(Action::Buy),
        "SELL" => Ok(Action::Sell),
        _ => Err(unrecognized()),
    }
}

/// Every JSON object that starts somewhere in `text`, in order of position
/// (so nested objects are candidates too).
pub(crate) fn objects(text: &str) -> Vec<Map<String, Value>> {
    text.match_indices('{')
        .filter_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(map))) => Some(map),
                _ => None,
            }
        })
        .collect()
}

fn lookup<'a>(map: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.iter()
        .find(|(k, _)| k.trim().eq_ignore_ascii_case(key))
        .map(|(_, v)| v)
}

/// Extracts a decision pair from a model reply.
///
/// Surrounding prose and code fences are tolerated; keys are matched
/// case-insensitively under the variant's label scheme. Reasoning keys are
/// optional, action keys are not.
pub fn parse_decision(text: &str, scheme: LabelScheme) -> Result<DecisionPair, ParseFailure> {
    let candidates = objects(text);
    if candidates.is_empty() {
        return Err(ParseFailure::NoObject);
    }
    let good_key = scheme.action_key(Signal::Good);
    let bad_key = scheme.action_key(Signal::Bad);
    let best = candidates
        .iter()
        .find(|m| lookup(m, &good_key).is_some() && lookup(m, &bad_key).is_some());
    let Some(map) = best else {
        let missing = if candidates.iter().any(|m| lookup(m, &good_key).is_some()) {
            bad_key
        } else {
            good_key
        };
        return Err(ParseFailure::MissingKey(missing.to_string()));
    };
    let action = |key: &str| -> Result<Action, ParseFailure> {
        match lookup(map, key) {
            Some(Value::String(s)) => parse_action(s),
            Some(other) => Err(ParseFailure::UnrecognizedAction(other.to_string())),
            None => Err(ParseFailure::MissingKey(key.to_string())),
        }
    };
    let reasoning = |signal| {
        lookup(map, &scheme.reasoning_key(signal))
            .map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .unwrap_or_default()
    };
    Ok(DecisionPair::new(action(&good_key)?, action(&bad_key)?)
        .with_reasoning(reasoning(Signal::Good), reasoning(Signal::Bad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Action::{Buy, NoTrade, Sell};

    #[test]
    fn leading_keywords() {
        assert_eq!(
            parse_action("BUY at the price of 50 conditional on observing a white signal"),
            Ok(Buy)
        );
        assert_eq!(parse_action("sell at 84.48"), Ok(Sell));
        assert_eq!(
            parse_action("NO TRADE at the price of 30 conditional on observing a blue signal"),
            Ok(NoTrade)
        );
        assert_eq!(parse_action("**BUY** at 50"), Ok(Buy));
        assert!(parse_action("BUY/SELL/NO TRADE at the price of 50").is_err());
        assert!(parse_action("HOLD").is_err());
        assert!(parse_action("BUYING").is_err());
    }

    #[test]
    fn well_formed() {
        let reply = r#"{"actionWhite": "BUY at the price of 50 conditional on observing a white signal",
            "actionBlue": "SELL at the price of 50 conditional on observing a blue signal",
            "reasoningWhite": "EV 70 > 50.", "reasoningBlue": "EV 30 < 50."}"#;
        let pair = parse_decision(reply, LabelScheme::WhiteBlue).unwrap();
        assert_eq!((pair.action_good, pair.action_bad), (Buy, Sell));
        assert_eq!(pair.reasoning_bad, "EV 30 < 50.");
        assert!(pair.valid);
    }

    #[test]
    fn fenced_and_wrapped() {
        let reply = "Here is my answer:\n```json\n{\"actionGreen\": \"BUY at 50\", \"actionRed\": \"NO TRADE at 50\"}\n```\nThanks.";
        let pair = parse_decision(reply, LabelScheme::GreenRed).unwrap();
        assert_eq!((pair.action_good, pair.action_bad), (Buy, NoTrade));
        assert_eq!(pair.reasoning_good, "");
    }

    #[test]
    fn missing_key() {
        let reply = r#"{"actionWhite": "BUY at 50"}"#;
        assert_eq!(
            parse_decision(reply, LabelScheme::WhiteBlue),
            Err(ParseFailure::MissingKey("actionBlue".into()))
        );
        assert_eq!(
            parse_decision("I would buy.", LabelScheme::WhiteBlue),
            Err(ParseFailure::NoObject)
        );
    }

    #[test]
    fn scheme_semantics_preserved() {
        let wb = r#"{"actionWhite": "BUY", "actionBlue": "SELL"}"#;
        let rg = r#"{"actionRed": "BUY", "actionGreen": "SELL"}"#;
        assert_eq!(
            parse_decision(wb, LabelScheme::WhiteBlue).unwrap(),
            parse_decision(rg, LabelScheme::RedGreen).unwrap()
        );
    }
}
