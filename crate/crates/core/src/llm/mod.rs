//! LLM-facing layer: prompt rendering, reply parsing and the LLM agent.
//!
//! Prompt text lives in versioned templates under `templates/v1`; rendering
//! is a pure function of the variant and the decision context, so the
//! output is byte-stable and golden-testable.

mod agent;
pub(crate) mod parse;
mod persona;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::agents::DecisionContext;
use crate::market::{self, herding_verdict, HerdingVerdict, PayoffPolicy, Signal, TreatmentSpec};

pub use agent::{decide_llm, LlmAgent, DEFAULT_PARSE_RETRY_LIMIT};
pub use parse::{parse_action, parse_decision, ParseFailure};
pub use persona::{Characteristics, CharacteristicsSampler, PersonaPreset};
pub use synthetic::SyntheticProvider;

/// Template set version recorded in manifests.
pub const TEMPLATE_VERSION: &str = "v1";

mod templates {
    pub const SYSTEM: &str = include_str!("../../templates/v1/system.txt");
    pub const NOISE_TRADER_NOTE: &str = include_str!("../../templates/v1/noise_trader_note.txt");
    pub const USER: &str = include_str!("../../templates/v1/user.txt");
    pub const GUIDANCE_FIRST_ROUND: &str = include_str!("../../templates/v1/guidance_first_round.txt");
    pub const GUIDANCE_BUY_HERD: &str = include_str!("../../templates/v1/guidance_buy_herd.txt");
    pub const GUIDANCE_SELL_HERD: &str = include_str!("../../templates/v1/guidance_sell_herd.txt");
    pub const CHARACTERISTICS: &str = include_str!("../../templates/v1/characteristics.txt");
    pub const CORRECTION: &str = include_str!("../../templates/v1/correction.txt");
}

/// Display colours for the good and bad signal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    #[default]
    WhiteBlue,
    GreenRed,
    /// Inverted connotation: red is good, green is bad.
    RedGreen,
}

impl LabelScheme {
    pub const ALL: [LabelScheme; 3] = [LabelScheme::WhiteBlue, LabelScheme::GreenRed, LabelScheme::RedGreen];

    /// Lower-case colour word for a signal.
    pub fn color(self, signal: Signal) -> &'static str {
        let (good, bad) = match self {
            LabelScheme::WhiteBlue => ("white", "blue"),
            LabelScheme::GreenRed => ("green", "red"),
            LabelScheme::RedGreen => ("red", "green"),
        };
        match signal {
            Signal::Good => good,
            Signal::Bad => bad,
        }
    }

    /// Capitalised colour used in response keys (`actionWhite`).
    pub fn key_color(self, signal: Signal) -> String {
        capitalize(self.color(signal))
    }

    pub fn action_key(self, signal: Signal) -> String {
        format!("action{}", self.key_color(signal))
    }

    pub fn reasoning_key(self, signal: Signal) -> String {
        format!("reasoning{}", self.key_color(signal))
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelScheme::WhiteBlue => "white_blue",
            LabelScheme::GreenRed => "green_red",
            LabelScheme::RedGreen => "red_green",
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Whether the user prompt tells the model when herding is optimal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guidance {
    #[default]
    Baseline,
    Optimal,
}

impl Guidance {
    pub fn name(self) -> &'static str {
        match self {
            Guidance::Baseline => "baseline",
            Guidance::Optimal => "optimal",
        }
    }
}

/// Everything besides the market state that shapes the prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub guidance: Guidance,
    pub label_scheme: LabelScheme,
    /// Persona or characteristics block appended to the system prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
    pub payoff_policy: PayoffPolicy,
    pub participant_count: u32,
    pub round_count: u32,
}

impl Default for PromptVariant {
    fn default() -> Self {
        Self {
            guidance: Guidance::Baseline,
            label_scheme: LabelScheme::WhiteBlue,
            persona: None,
            payoff_policy: PayoffPolicy::default(),
            participant_count: 8,
            round_count: 8,
        }
    }
}

/// Fills `{{name}}` placeholders, drops paragraphs that render empty and
/// trims the trailing newline of the template file.
fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut text = template.trim_end().to_string();
    for (name, value) in vars {
        text = text.replace(&format!("{{{{{name}}}}}"), value);
    }
    debug_assert!(!text.contains("{{"), "unfilled placeholder in {text}");
    text.split("\n\n")
        .filter(|p| !p.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn color_vars(scheme: LabelScheme) -> [(&'static str, String); 4] {
    [
        ("good", scheme.color(Signal::Good).to_string()),
        ("bad", scheme.color(Signal::Bad).to_string()),
        ("Good", scheme.key_color(Signal::Good)),
        ("Bad", scheme.key_color(Signal::Bad)),
    ]
}

fn as_refs<'a>(vars: &'a [(&'a str, String)]) -> Vec<(&'a str, &'a str)> {
    vars.iter().map(|(k, v)| (*k, v.as_str())).collect()
}

/// Plain number with at most `decimals` decimals and no trailing zeros.
fn plain_number(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

struct Currency {
    plural: &'static str,
    singular: &'static str,
}

fn currency(label: &str) -> Currency {
    match label.to_ascii_uppercase().as_str() {
        "USD" => Currency {
            plural: "US dollars",
            singular: "dollar",
        },
        "EUR" => Currency {
            plural: "euros",
            singular: "euro",
        },
        _ => Currency {
            plural: "British pounds",
            singular: "pound",
        },
    }
}

/// The conversion clause of the payoff paragraph.
fn conversion_clause(policy: &PayoffPolicy) -> String {
    let cur = currency(&policy.currency_label);
    let rate = policy.exchange_rate;
    if rate == 0.0 {
        format!(
            "converted into {} at an exchange rate of zero, so the lira is worthless",
            cur.plural
        )
    } else if rate >= 1.0 {
        format!(
            "converted into {} at the rate of {} lire per {}",
            cur.plural,
            plain_number(rate, 6),
            cur.singular
        )
    } else {
        let short = cur.plural.rsplit(' ').next().unwrap_or(cur.plural);
        format!(
            "converted into {} at the rate of {} {} per lira",
            cur.plural,
            plain_number(1.0 / rate, 6),
            short
        )
    }
}

/// Fee wording, e.g. "70 pounds" or "70 US dollars".
fn fee_words(policy: &PayoffPolicy) -> (String, &'static str) {
    let cur = currency(&policy.currency_label);
    let unit = match cur.plural {
        "British pounds" => "pounds",
        other => other,
    };
    (plain_number(policy.participation_fee, 2), unit)
}

/// Renders the experiment instructions.
pub fn build_system_prompt(variant: &PromptVariant, spec: &TreatmentSpec) -> String {
    let a = spec.signal_accuracy;
    let (fee, unit) = fee_words(&variant.payoff_policy);
    let noise_note = if spec.has_event_uncertainty() {
        templates::NOISE_TRADER_NOTE.trim_end().to_string()
    } else {
        String::new()
    };
    let mut vars: Vec<(&str, String)> = vec![
        ("participants", variant.participant_count.to_string()),
        ("rounds", variant.round_count.to_string()),
        ("noise_trader_note", noise_note),
        ("accuracy", plain_number(100.0 * a, 4)),
        ("inaccuracy", plain_number(100.0 * (1.0 - a), 4)),
        ("conversion", conversion_clause(&variant.payoff_policy)),
        ("fee", fee),
        ("currency_plural", unit.to_string()),
        ("persona", variant.persona.clone().unwrap_or_default()),
    ];
    vars.extend(color_vars(variant.label_scheme));
    render(templates::SYSTEM, &as_refs(&vars))
}

/// The HISTORY block: executed trades, selection notices, own past answers.
pub fn render_history(scheme: LabelScheme, ctx: &DecisionContext) -> String {
    let mut lines = Vec::new();
    for trade in &ctx.executed {
        lines.push(format!(
            "Round {}: the selected participant chose {} at price {}",
            trade.round,
            trade.action.label(),
            market::format_price(trade.price)
        ));
    }
    for round in &ctx.selected_rounds {
        lines.push(format!("You were selected to trade in round {round}"));
    }
    if !ctx.own_past.is_empty() {
        lines.push("Your previous decisions:".to_string());
        for past in &ctx.own_past {
            if !past.pair.valid {
                lines.push(format!("Round {}: no valid decision was recorded", past.round));
                continue;
            }
            for signal in Signal::BOTH {
                let reasoning = past.pair.reasoning_for(signal).trim();
                let mut line = format!(
                    "Round {}, {} signal: {}",
                    past.round,
                    scheme.color(signal),
                    past.pair.action_for(signal).label()
                );
                if !reasoning.is_empty() {
                    line.push_str(" - ");
                    line.push_str(reasoning);
                }
                lines.push(line);
            }
        }
    }
    lines.join("\n")
}

/// Renders the per-round question.
pub fn build_user_prompt(variant: &PromptVariant, ctx: &DecisionContext) -> String {
    let scheme = variant.label_scheme;
    let colors = color_vars(scheme);
    let color_refs = as_refs(&colors);
    let first = ctx.round <= 1;
    let (first_round_note, herd_note) = match variant.guidance {
        Guidance::Baseline => (String::new(), String::new()),
        Guidance::Optimal if first => (render(templates::GUIDANCE_FIRST_ROUND, &color_refs), String::new()),
        Guidance::Optimal => {
            let note = match herding_verdict(&ctx.spec, &ctx.state) {
                HerdingVerdict::BuyHerdOptimal => templates::GUIDANCE_BUY_HERD.trim_end(),
                HerdingVerdict::SellHerdOptimal => templates::GUIDANCE_SELL_HERD.trim_end(),
                HerdingVerdict::None => "",
            };
            (String::new(), note.to_string())
        }
    };
    let history = if first {
        String::new()
    } else {
        render_history(scheme, ctx)
    };
    let mut vars: Vec<(&str, String)> = vec![
        ("round", ctx.round.to_string()),
        ("guidance_first_round", first_round_note),
        ("history", history),
        ("guidance_herd", herd_note),
        ("price", market::format_price(ctx.state.price)),
    ];
    vars.extend(colors.iter().cloned());
    render(templates::USER, &as_refs(&vars))
}

/// Reminder appended to the user prompt after an unreadable reply.
pub fn correction_suffix(scheme: LabelScheme) -> String {
    render(templates::CORRECTION, &as_refs(&color_vars(scheme)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Action::{Buy, Sell};

    fn variant() -> PromptVariant {
        PromptVariant::default()
    }

    #[test]
    fn noise_sentence_only_with_event_uncertainty() {
        let s1 = build_system_prompt(&variant(), &TreatmentSpec::treatment_i());
        let s2 = build_system_prompt(&variant(), &TreatmentSpec::treatment_ii());
        let needle = "The market maker will update the price as if";
        assert!(!s1.contains(needle));
        assert!(s2.contains(needle));
        assert!(!s1.contains("\n\n\n"));
    }

    #[test]
    fn default_payoff_wording() {
        let s = build_system_prompt(&variant(), &TreatmentSpec::treatment_i());
        assert!(s.contains("converted into British pounds at the rate of 3 lire per pound."));
        assert!(s.contains("you are paid 70 pounds for participating"));
        assert!(s.ends_with("regardless of your payoff."));
    }

    #[test]
    fn payoff_variants() {
        let mut v = variant();
        v.payoff_policy.exchange_rate = 0.0;
        assert!(build_system_prompt(&v, &TreatmentSpec::treatment_i()).contains("exchange rate of zero"));
        v.payoff_policy.exchange_rate = 1e-6;
        assert!(
            build_system_prompt(&v, &TreatmentSpec::treatment_i()).contains("at the rate of 1000000 pounds per lira")
        );
        v.payoff_policy = PayoffPolicy {
            currency_label: "USD".into(),
            ..PayoffPolicy::default()
        };
        let s = build_system_prompt(&v, &TreatmentSpec::treatment_i());
        assert!(s.contains("converted into US dollars at the rate of 3 lire per dollar."));
        assert!(s.contains("paid 70 US dollars"));
    }

    #[test]
    fn persona_is_appended_last() {
        let mut v = variant();
        v.persona = Some(PersonaPreset::Rational.text().to_string());
        let s = build_system_prompt(&v, &TreatmentSpec::treatment_i());
        assert!(s.ends_with(PersonaPreset::Rational.text()));
        assert!(s.contains("regardless of your payoff.\n\nYou are a rational agent"));
    }

    #[test]
    fn first_round_user_prompt() {
        let ctx = DecisionContext::first_round(TreatmentSpec::treatment_i());
        let u = build_user_prompt(&variant(), &ctx);
        assert!(u.starts_with(
            "This is round 1.\n\nIf you receive a white signal, will you buy, sell, or not trade at a price of 50?"
        ));
        assert!(u.contains(
            "\"actionBlue\": \"BUY/SELL/NO TRADE at the price of 50 conditional on observing a blue signal\","
        ));
        assert!(u.contains("(1-2 sentences) \","));
        assert!(u.ends_with('}'));
    }

    #[test]
    fn optimal_guidance_sentences() {
        let v = PromptVariant {
            guidance: Guidance::Optimal,
            ..variant()
        };
        let ctx = DecisionContext::first_round(TreatmentSpec::treatment_i());
        assert!(build_user_prompt(&v, &ctx)
            .contains("it is optimal to buy given a white signal and sell given a blue signal"));

        let ctx = DecisionContext::from_history(TreatmentSpec::treatment_ii(), &[Buy, Buy]);
        let u = build_user_prompt(&v, &ctx);
        assert!(u.contains("optimal to follow the herd and buy regardless of the signal"));

        let ctx = DecisionContext::from_history(TreatmentSpec::treatment_ii(), &[Sell, Sell]);
        assert!(build_user_prompt(&v, &ctx).contains("follow the herd and sell regardless"));

        let ctx = DecisionContext::from_history(TreatmentSpec::treatment_i(), &[Buy, Buy]);
        assert!(!build_user_prompt(&v, &ctx).contains("follow the herd"));
    }

    #[test]
    fn recolored_keys() {
        let v = PromptVariant {
            label_scheme: LabelScheme::RedGreen,
            ..variant()
        };
        let u = build_user_prompt(&v, &DecisionContext::first_round(TreatmentSpec::treatment_i()));
        assert!(u.contains("\"actionRed\""));
        assert!(u.contains("\"reasoningGreen\""));
        assert!(!u.to_lowercase().contains("white"));
        assert!(!u.to_lowercase().contains("blue"));
    }

    #[test]
    fn history_block() {
        let ctx = DecisionContext::from_history(TreatmentSpec::treatment_i(), &[Buy, Buy]);
        let u = build_user_prompt(&variant(), &ctx);
        assert!(u.contains(
            "This is round 3.\n\nRound 1: the selected participant chose BUY at price 50\nRound 2: the selected participant chose BUY at price 70\n\nIf you receive"
        ));
        assert!(u.contains("at a price of 84.48?"));
    }

    #[test]
    fn rendering_is_pure() {
        let ctx = DecisionContext::from_history(TreatmentSpec::treatment_ii(), &[Buy, Sell]);
        let v = variant();
        assert_eq!(build_user_prompt(&v, &ctx), build_user_prompt(&v, &ctx));
    }
}
