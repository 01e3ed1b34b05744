use serde_json::json;

use crate::agents::{decide_signal_only, DecisionContext};
use crate::gateway::{ChatProvider, ChatRequest, ProviderError, ProviderReply};
use crate::market::{self, Action, Signal};

/// Offline stand-in for a chat model.
///
/// Reads the price, colour words and signal accuracy out of the rendered
/// prompts and answers like a model that values the asset from its signal
/// alone, with reasoning in the usual expected-value style. Replies are a
/// pure function of the prompts.
#[derive(Debug, Default, Clone)]
pub struct SyntheticProvider;

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let len = text[from..].find(end)?;
    Some(&text[from..from + len])
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

impl ChatProvider for SyntheticProvider {
    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        let bad_prompt = |what: &str| ProviderError::Fatal(format!("synthetic provider: no {what} in prompt"));
        let price: f64 = between(&request.user, "at a price of ", "?")
            .and_then(|p| p.trim().parse().ok())
            .ok_or_else(|| bad_prompt("price"))?;
        let mut colors = request
            .user
            .match_indices("If you receive a ")
            .filter_map(|(i, m)| between(&request.user[i + m.len()..], "", " signal"));
        let good = colors.next().ok_or_else(|| bad_prompt("signal colour"))?.to_string();
        let bad = colors
            .next()
            .ok_or_else(|| bad_prompt("second signal colour"))?
            .to_string();
        let accuracy = between(&request.system, "signal with probability ", "%")
            .and_then(|a| a.trim().parse::<f64>().ok())
            .map(|a| a / 100.0)
            .unwrap_or(market::DEFAULT_SIGNAL_ACCURACY);

        let mut ctx = DecisionContext::first_round(crate::market::TreatmentSpec::treatment_i());
        ctx.spec.signal_accuracy = accuracy;
        ctx.state.price = price;
        let pair = decide_signal_only(&ctx);

        let price_text = market::format_price(price);
        let explain = |signal: Signal, color: &str| {
            let ev = match signal {
                Signal::Good => 100.0 * accuracy,
                Signal::Bad => 100.0 * (1.0 - accuracy),
            };
            let (hi, lo) = match signal {
                Signal::Good => (accuracy, 1.0 - accuracy),
                Signal::Bad => (1.0 - accuracy, accuracy),
            };
            let ev_text = market::format_price(ev);
            let head = format!(
                "With a {} signal, the expected value is {ev_text} ({}% chance of 100, {}% chance of 0).",
                capitalize(color),
                market::format_price(100.0 * hi),
                market::format_price(100.0 * lo)
            );
            let tail = match pair.action_for(signal) {
                Action::Buy => {
                    format!(" The price of {price_text} is below this expected value, so buying is profitable.")
                }
                Action::Sell => {
                    format!(" The price of {price_text} is above this expected value, so selling is profitable.")
                }
                Action::NoTrade => {
                    " Since this matches the current price, there's no clear advantage to trading.".to_string()
                }
            };
            head + &tail
        };
        let action_text = |signal: Signal, color: &str| {
            format!(
                "{} at the price of {price_text} conditional on observing a {color} signal",
                pair.action_for(signal).label()
            )
        };
        let (gk, bk) = (capitalize(&good), capitalize(&bad));
        let body = json!({
            format!("action{gk}"): action_text(Signal::Good, &good),
            format!("action{bk}"): action_text(Signal::Bad, &bad),
            format!("reasoning{gk}"): explain(Signal::Good, &good),
            format!("reasoning{bk}"): explain(Signal::Bad, &bad),
        });
        let text = serde_json::to_string_pretty(&body).expect("reply serializes");
        Ok(ProviderReply { text, usage: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{AdapterKind, Gateway, ProviderConfig};
    use crate::llm::{build_system_prompt, build_user_prompt, parse_decision, LabelScheme, PromptVariant};
    use crate::market::TreatmentSpec;
    use std::sync::Arc;

    #[test]
    fn answers_the_rendered_prompt() {
        let gw = Gateway::new(
            ProviderConfig::offline("synthetic", AdapterKind::Synthetic),
            Arc::new(SyntheticProvider),
        );
        for scheme in LabelScheme::ALL {
            let variant = PromptVariant {
                label_scheme: scheme,
                ..Default::default()
            };
            let spec = TreatmentSpec::treatment_i();
            let ctx = DecisionContext::from_history(spec, &[Action::Buy, Action::Buy]);
            let reply = gw
                .complete(
                    &build_system_prompt(&variant, &spec),
                    &build_user_prompt(&variant, &ctx),
                )
                .unwrap();
            let pair = parse_decision(&reply.text, scheme).unwrap();
            assert_eq!((pair.action_good, pair.action_bad), (Action::Sell, Action::Sell));
            assert!(pair.reasoning_bad.contains("expected value is 30"));
        }
    }
}
