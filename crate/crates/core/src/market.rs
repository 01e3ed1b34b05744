//! Sequential-trading market model.
//!
//! A single risky asset worth 0 or 100 (50 when no information event occurs),
//! a Bayesian market maker quoting `p_t = 100 * q_t` from the public trade
//! history, and informed traders who additionally condition on a private
//! signal. Everything here is a pure function of its inputs.
//!
//! Two beliefs are tracked side by side:
//!
//! - `q`: the market maker's probability that `v = 100`, updated with the
//!   unconditional informed share `rho * mu`;
//! - `q_star`: the same update seen by an informed trader, who knows an
//!   event happened and therefore uses `rho = 1`.
//!
//! The gap between the two is what makes herding optimal under event
//! uncertainty.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::ModelError;

/// Absolute tolerance on the 0–100 value scale. Comparisons closer than this
/// are treated as equalities (indifference).
pub const EPSILON: f64 = 1e-9;

/// Default probability that the signal points in the direction of the value.
pub const DEFAULT_SIGNAL_ACCURACY: f64 = 0.7;

/// Price posted in the first round, the unconditional expected value.
pub const DEFAULT_INITIAL_PRICE: f64 = 50.0;

/// How the market maker moves the posted price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceUpdating {
    /// `price = 100 * q` after every trade.
    Bayesian,
    /// The price never leaves the initial price.
    Frozen,
}

/// Model parameterization for one experimental regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentSpec {
    /// Probability of an information event (rho).
    pub event_probability: f64,
    /// Probability that a selected trader is informed given an event (mu).
    pub informed_fraction: f64,
    pub signal_accuracy: f64,
    pub price_updating: PriceUpdating,
    pub initial_price: f64,
}

impl TreatmentSpec {
    pub fn new(
        event_probability: f64,
        informed_fraction: f64,
        signal_accuracy: f64,
        price_updating: PriceUpdating,
        initial_price: f64,
    ) -> Result<Self, ModelError> {
        let spec = Self {
            event_probability,
            informed_fraction,
            signal_accuracy,
            price_updating,
            initial_price,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// No event uncertainty, everyone informed, Bayesian prices.
    pub fn treatment_i() -> Self {
        Self {
            event_probability: 1.0,
            informed_fraction: 1.0,
            signal_accuracy: DEFAULT_SIGNAL_ACCURACY,
            price_updating: PriceUpdating::Bayesian,
            initial_price: DEFAULT_INITIAL_PRICE,
        }
    }

    /// Event uncertainty: rho = 0.15, mu = 0.95, Bayesian prices.
    pub fn treatment_ii() -> Self {
        Self {
            event_probability: 0.15,
            informed_fraction: 0.95,
            ..Self::treatment_i()
        }
    }

    /// Like treatment I but the posted price never moves.
    pub fn treatment_iii() -> Self {
        Self {
            price_updating: PriceUpdating::Frozen,
            ..Self::treatment_i()
        }
    }

    /// Looks up a preset by its conventional number (1, 2 or 3).
    pub fn preset(number: u8) -> Option<Self> {
        match number {
            1 => Some(Self::treatment_i()),
            2 => Some(Self::treatment_ii()),
            3 => Some(Self::treatment_iii()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.event_probability) {
            return Err(ModelError::OutOfRange {
                field: "event_probability",
                value: self.event_probability,
                expected: "[0, 1]",
            });
        }
        if !in_unit(self.informed_fraction) {
            return Err(ModelError::OutOfRange {
                field: "informed_fraction",
                value: self.informed_fraction,
                expected: "[0, 1]",
            });
        }
        if !(self.signal_accuracy > 0.5 && self.signal_accuracy <= 1.0) {
            return Err(ModelError::OutOfRange {
                field: "signal_accuracy",
                value: self.signal_accuracy,
                expected: "(0.5, 1]",
            });
        }
        if !(self.initial_price > 0.0 && self.initial_price < 100.0) {
            return Err(ModelError::OutOfRange {
                field: "initial_price",
                value: self.initial_price,
                expected: "(0, 100)",
            });
        }
        Ok(())
    }

    /// Probability, from the market maker's side, that a trade comes from an
    /// informed trader.
    pub fn informed_share(&self) -> f64 {
        self.event_probability * self.informed_fraction
    }

    /// True when the market maker is unsure whether an event happened.
    pub fn has_event_uncertainty(&self) -> bool {
        self.event_probability < 1.0
    }

    /// Prior belief matching the initial price.
    pub fn initial_belief(&self) -> f64 {
        match self.price_updating {
            PriceUpdating::Bayesian => self.initial_price / 100.0,
            // the frozen price is only a posted quote; beliefs start at the prior
            PriceUpdating::Frozen => 0.5,
        }
    }
}

/// Fundamental value of the asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssetValue {
    #[serde(rename = "0")]
    Low,
    /// Only reachable when no information event happens.
    #[serde(rename = "50")]
    Unchanged,
    #[serde(rename = "100")]
    High,
}

impl AssetValue {
    pub fn value(self) -> f64 {
        match self {
            AssetValue::Low => 0.0,
            AssetValue::Unchanged => 50.0,
            AssetValue::High => 100.0,
        }
    }
}

/// Private signal polarity. Display colours live in the prompt layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Good,
    Bad,
}

impl Signal {
    pub const BOTH: [Signal; 2] = [Signal::Good, Signal::Bad];
}

/// A trader's action in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Buy,
    Sell,
    NoTrade,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Buy, Action::Sell, Action::NoTrade];

    /// +1 for buy, -1 for sell, 0 for no trade.
    pub fn direction(self) -> i32 {
        match self {
            Action::Buy => 1,
            Action::Sell => -1,
            Action::NoTrade => 0,
        }
    }

    /// Buy and sell swapped.
    pub fn mirrored(self) -> Self {
        match self {
            Action::Buy => Action::Sell,
            Action::Sell => Action::Buy,
            Action::NoTrade => Action::NoTrade,
        }
    }

    /// Upper-case wording used in prompts and replies.
    pub fn label(self) -> &'static str {
        match self {
            Action::Buy => "BUY",
            Action::Sell => "SELL",
            Action::NoTrade => "NO TRADE",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Whose belief is being updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perspective {
    MarketMaker,
    /// Knows an information event occurred, so uses `rho = 1`.
    InformedTrader,
}

/// Executed actions, one per completed round.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TradeHistory(Vec<Action>);

impl TradeHistory {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn push(&mut self, action: Action) {
        self.0.push(action);
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<Action>> for TradeHistory {
    fn from(actions: Vec<Action>) -> Self {
        Self(actions)
    }
}

impl FromIterator<Action> for TradeHistory {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Public market state before the next trade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    /// Market maker's probability of `v = 100`.
    pub q: f64,
    /// Informed trader's probability of `v = 100` from the public history.
    pub q_star: f64,
    /// Posted price.
    pub price: f64,
    pub history: TradeHistory,
}

impl MarketState {
    pub fn initial(spec: &TreatmentSpec) -> Self {
        let q = spec.initial_belief();
        Self {
            q,
            q_star: q,
            price: spec.initial_price,
            history: TradeHistory::new(),
        }
    }

    /// Replays `actions` from the initial state.
    pub fn from_history(spec: &TreatmentSpec, actions: &[Action]) -> Self {
        actions
            .iter()
            .fold(Self::initial(spec), |state, &action| price_after(spec, &state, action))
    }

    /// The same state with the price rounded for display.
    pub fn displayed(&self) -> Self {
        Self {
            price: display_price(self.price),
            ..self.clone()
        }
    }

    pub fn imbalance(&self) -> i32 {
        trade_imbalance(&self.history)
    }
}

/// Rounds a price to the two decimals shown to traders.
pub fn display_price(price: f64) -> f64 {
    (price * 100.0).round() / 100.0
}

/// Formats a displayed price without trailing zeros ("50", "84.48", "57.9").
pub fn format_price(price: f64) -> String {
    let s = format!("{:.2}", display_price(price));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Expected value of the asset for each signal realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefPair {
    pub ev_good: f64,
    pub ev_bad: f64,
}

impl BeliefPair {
    pub fn for_signal(&self, signal: Signal) -> f64 {
        match signal {
            Signal::Good => self.ev_good,
            Signal::Bad => self.ev_bad,
        }
    }
}

/// Whether ignoring the private signal is optimal in the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HerdingVerdict {
    None,
    BuyHerdOptimal,
    SellHerdOptimal,
}

impl HerdingVerdict {
    /// The cascade action implied by the verdict, if any.
    pub fn action(self) -> Option<Action> {
        match self {
            HerdingVerdict::None => None,
            HerdingVerdict::BuyHerdOptimal => Some(Action::Buy),
            HerdingVerdict::SellHerdOptimal => Some(Action::Sell),
        }
    }
}

/// Optimal action for an informed trader given one signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimalAction {
    Buy,
    Sell,
    Indifferent,
}

/// Conversion of lire into the payout currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PayoffPolicy {
    /// Lire per unit of payout currency. Zero makes lire worthless.
    pub exchange_rate: f64,
    pub participation_fee: f64,
    pub currency_label: String,
}

impl Default for PayoffPolicy {
    fn default() -> Self {
        Self {
            exchange_rate: 3.0,
            participation_fee: 70.0,
            currency_label: "GBP".to_string(),
        }
    }
}

impl PayoffPolicy {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.exchange_rate >= 0.0 && self.exchange_rate.is_finite()) {
            return Err(ModelError::OutOfRange {
                field: "exchange_rate",
                value: self.exchange_rate,
                expected: "[0, inf)",
            });
        }
        Ok(())
    }
}

/// Probability of observing `action` given `v = 100` and given `v = 0`,
/// when a trade is informed with probability `informed`.
fn action_likelihoods(accuracy: f64, informed: f64, action: Action) -> (f64, f64) {
    let noise = (1.0 - informed) / 3.0;
    let toward = accuracy * informed + noise;
    let against = (1.0 - accuracy) * informed + noise;
    match action {
        Action::Buy => (toward, against),
        Action::Sell => (against, toward),
        Action::NoTrade => (noise, noise),
    }
}

/// One step of Bayesian updating of `P(v = 100)` after observing `action`.
///
/// Panics if `q` is not a probability; beliefs never leave `[0, 1]`, so an
/// out-of-range input is a caller bug. Certainty (0 or 1) is absorbing.
pub fn update_belief(spec: &TreatmentSpec, q: f64, action: Action, perspective: Perspective) -> f64 {
    assert!((0.0..=1.0).contains(&q), "belief must be a probability, got {q}");
    if action == Action::NoTrade || q == 0.0 || q == 1.0 {
        return q;
    }
    let informed = match perspective {
        Perspective::MarketMaker => spec.informed_share(),
        Perspective::InformedTrader => spec.informed_fraction,
    };
    let (high, low) = action_likelihoods(spec.signal_accuracy, informed, action);
    let num = high * q;
    let den = num + low * (1.0 - q);
    if den == 0.0 {
        q
    } else {
        num / den
    }
}

/// Advances the market by one executed action.
///
/// In frozen mode the posted price stays at the initial price while both
/// beliefs keep updating.
pub fn price_after(spec: &TreatmentSpec, state: &MarketState, action: Action) -> MarketState {
    let q = update_belief(spec, state.q, action, Perspective::MarketMaker);
    let q_star = update_belief(spec, state.q_star, action, Perspective::InformedTrader);
    let price = match spec.price_updating {
        PriceUpdating::Bayesian => 100.0 * q,
        PriceUpdating::Frozen => spec.initial_price,
    };
    let mut history = state.history.clone();
    history.push(action);
    MarketState {
        q,
        q_star,
        price,
        history,
    }
}

/// `E(v | signal, history)` for an informed trader.
pub fn expected_values(spec: &TreatmentSpec, state: &MarketState) -> BeliefPair {
    let a = spec.signal_accuracy;
    let qs = state.q_star;
    let posterior = |weight: f64| {
        let num = weight * qs;
        let den = num + (1.0 - weight) * (1.0 - qs);
        if den == 0.0 {
            // only reachable with a perfectly accurate signal contradicting certainty
            qs
        } else {
            num / den
        }
    };
    BeliefPair {
        ev_good: 100.0 * posterior(a),
        ev_bad: 100.0 * posterior(1.0 - a),
    }
}

/// Compares the posted price with the expected value given `signal`.
pub fn optimal_action(spec: &TreatmentSpec, state: &MarketState, signal: Signal) -> OptimalAction {
    let ev = expected_values(spec, state).for_signal(signal);
    compare_price(state.price, ev)
}

/// Buy if `price < value`, sell if `price > value`, otherwise indifferent.
pub fn compare_price(price: f64, value: f64) -> OptimalAction {
    if price < value - EPSILON {
        OptimalAction::Buy
    } else if price > value + EPSILON {
        OptimalAction::Sell
    } else {
        OptimalAction::Indifferent
    }
}

/// Whether herding is optimal before the next trade.
///
/// With Bayesian prices herding is optimal when both conditional values lie
/// strictly on the same side of the price. With a frozen price it is the
/// classic cascade rule: an imbalance of at least two in either direction.
pub fn herding_verdict(spec: &TreatmentSpec, state: &MarketState) -> HerdingVerdict {
    match spec.price_updating {
        PriceUpdating::Bayesian => {
            let evs = expected_values(spec, state);
            let lo = evs.ev_good.min(evs.ev_bad);
            let hi = evs.ev_good.max(evs.ev_bad);
            if lo > state.price + EPSILON {
                HerdingVerdict::BuyHerdOptimal
            } else if hi < state.price - EPSILON {
                HerdingVerdict::SellHerdOptimal
            } else {
                HerdingVerdict::None
            }
        }
        PriceUpdating::Frozen => {
            let imbalance = state.imbalance();
            if imbalance >= 2 {
                HerdingVerdict::BuyHerdOptimal
            } else if imbalance <= -2 {
                HerdingVerdict::SellHerdOptimal
            } else {
                HerdingVerdict::None
            }
        }
    }
}

/// Buys minus sells.
pub fn trade_imbalance(history: &TradeHistory) -> i32 {
    history.actions().iter().map(|a| a.direction()).sum()
}

/// Payoff in lire once the value is revealed.
pub fn realized_payoff(action: Action, price: f64, value: AssetValue) -> f64 {
    let v = value.value();
    match action {
        Action::Buy => v - price,
        Action::Sell => price - v,
        Action::NoTrade => 0.0,
    }
}

/// Payoff in lire expected by an informed trader holding `signal`.
pub fn expected_payoff(action: Action, price: f64, beliefs: &BeliefPair, signal: Signal) -> f64 {
    let ev = beliefs.for_signal(signal);
    match action {
        Action::Buy => ev - price,
        Action::Sell => price - ev,
        Action::NoTrade => 0.0,
    }
}

/// Participation fee plus trading payoff converted at the exchange rate.
pub fn convert_payout(total_lire: f64, policy: &PayoffPolicy) -> f64 {
    let trading = if policy.exchange_rate == 0.0 {
        0.0
    } else {
        total_lire / policy.exchange_rate
    };
    policy.participation_fee + trading
}
