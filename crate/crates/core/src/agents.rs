//! Trader agents.
//!
//! Every agent answers the strategy-method question: what would you do at
//! the current price if your signal were good, and what if it were bad. The
//! rule-based agents here double as oracles for the classifier and the
//! session engine; the LLM-backed agent lives in [`crate::llm`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatExchange, GatewayError};
use crate::market::{self, compare_price, expected_values, Action, MarketState, OptimalAction, Signal, TreatmentSpec};

/// Conditional actions for both signals plus the stated reasons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionPair {
    pub action_good: Action,
    pub action_bad: Action,
    #[serde(default)]
    pub reasoning_good: String,
    #[serde(default)]
    pub reasoning_bad: String,
    /// False when no usable answer could be obtained.
    pub valid: bool,
}

impl DecisionPair {
    pub fn new(action_good: Action, action_bad: Action) -> Self {
        Self {
            action_good,
            action_bad,
            reasoning_good: String::new(),
            reasoning_bad: String::new(),
            valid: true,
        }
    }

    pub fn with_reasoning(mut self, good: impl Into<String>, bad: impl Into<String>) -> Self {
        self.reasoning_good = good.into();
        self.reasoning_bad = bad.into();
        self
    }

    /// Placeholder for an unrecoverable answer.
    pub fn invalid() -> Self {
        Self {
            valid: false,
            ..Self::new(Action::NoTrade, Action::NoTrade)
        }
    }

    pub fn action_for(&self, signal: Signal) -> Action {
        match signal {
            Signal::Good => self.action_good,
            Signal::Bad => self.action_bad,
        }
    }

    pub fn reasoning_for(&self, signal: Signal) -> &str {
        match signal {
            Signal::Good => &self.reasoning_good,
            Signal::Bad => &self.reasoning_bad,
        }
    }
}

/// A trade that went through, as every participant sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutedTrade {
    pub round: u32,
    pub action: Action,
    /// Displayed price the trade executed at.
    pub price: f64,
}

/// An agent's own earlier answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PastDecision {
    pub round: u32,
    pub pair: DecisionPair,
}

/// Everything an agent may condition on in round `round`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionContext {
    /// 1-based round index.
    pub round: u32,
    pub spec: TreatmentSpec,
    /// Market state with the price rounded as displayed.
    pub state: MarketState,
    pub own_past: Vec<PastDecision>,
    /// Rounds in which this agent's trade was executed so far.
    pub selected_rounds: Vec<u32>,
    pub executed: Vec<ExecutedTrade>,
}

impl DecisionContext {
    /// Context for the first round of a session.
    pub fn first_round(spec: TreatmentSpec) -> Self {
        Self {
            round: 1,
            state: MarketState::initial(&spec).displayed(),
            spec,
            own_past: Vec::new(),
            selected_rounds: Vec::new(),
            executed: Vec::new(),
        }
    }

    /// Builds a context from an executed history alone, with no memory of
    /// the agent's own answers. Handy for tests and fixtures.
    pub fn from_history(spec: TreatmentSpec, actions: &[Action]) -> Self {
        let mut state = MarketState::initial(&spec);
        let mut executed = Vec::with_capacity(actions.len());
        for (i, &action) in actions.iter().enumerate() {
            executed.push(ExecutedTrade {
                round: i as u32 + 1,
                action,
                price: market::display_price(state.price),
            });
            state = market::price_after(&spec, &state, action);
        }
        Self {
            round: actions.len() as u32 + 1,
            spec,
            state: state.displayed(),
            own_past: Vec::new(),
            selected_rounds: Vec::new(),
            executed,
        }
    }

    pub fn was_selected_last_round(&self) -> bool {
        self.round > 1 && self.selected_rounds.last() == Some(&(self.round - 1))
    }

    pub fn imbalance(&self) -> i32 {
        self.state.imbalance()
    }
}

/// Agent families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    BayesianRational,
    SignalOnly,
    Noise,
    FixedHerd,
    FixedContrarian,
    Llm,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::BayesianRational => "bayesian_rational",
            AgentKind::SignalOnly => "signal_only",
            AgentKind::Noise => "noise",
            AgentKind::FixedHerd => "fixed_herd",
            AgentKind::FixedContrarian => "fixed_contrarian",
            AgentKind::Llm => "llm",
        }
    }
}

/// What a rule agent does when price equals its expected value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Trade in the direction of the signal (buy on good, sell on bad).
    #[default]
    FollowSignal,
    NoTrade,
}

/// One agent's answer for a round, plus any model calls it made.
#[derive(Debug, Clone)]
pub struct AgentReply {
    pub pair: DecisionPair,
    pub exchanges: Vec<ChatExchange>,
    /// Parse retries consumed (LLM agents only).
    pub retries: u32,
}

impl From<DecisionPair> for AgentReply {
    fn from(pair: DecisionPair) -> Self {
        Self {
            pair,
            exchanges: Vec::new(),
            retries: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent unavailable: {0}")]
    Unavailable(#[from] GatewayError),
}

/// A participant in a session.
pub trait TraderAgent: Send {
    fn kind(&self) -> AgentKind;

    /// Grouping key for reports, e.g. the rule name or `provider/model`.
    fn model_key(&self) -> String {
        self.kind().name().to_string()
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Result<AgentReply, AgentError>;

    /// Agents that block on network calls are queried concurrently.
    fn is_remote(&self) -> bool {
        false
    }
}

fn resolve(optimal: OptimalAction, signal: Signal, tie_break: TieBreak) -> Action {
    match optimal {
        OptimalAction::Buy => Action::Buy,
        OptimalAction::Sell => Action::Sell,
        OptimalAction::Indifferent => match (tie_break, signal) {
            (TieBreak::NoTrade, _) => Action::NoTrade,
            (TieBreak::FollowSignal, Signal::Good) => Action::Buy,
            (TieBreak::FollowSignal, Signal::Bad) => Action::Sell,
        },
    }
}

/// Compares the displayed price with `E(v | signal, history)`.
pub fn decide_bayesian_rational(ctx: &DecisionContext, tie_break: TieBreak) -> DecisionPair {
    let evs = expected_values(&ctx.spec, &ctx.state);
    let pick = |signal| {
        resolve(
            compare_price(ctx.state.price, evs.for_signal(signal)),
            signal,
            tie_break,
        )
    };
    DecisionPair::new(pick(Signal::Good), pick(Signal::Bad))
}

/// Ignores the trade history: values the asset at `100 * a` on a good
/// signal and `100 * (1 - a)` on a bad one.
pub fn decide_signal_only(ctx: &DecisionContext) -> DecisionPair {
    let a = ctx.spec.signal_accuracy;
    let pick = |value: f64| match compare_price(ctx.state.price, value) {
        OptimalAction::Buy => Action::Buy,
        OptimalAction::Sell => Action::Sell,
        OptimalAction::Indifferent => Action::NoTrade,
    };
    DecisionPair::new(pick(100.0 * a), pick(100.0 * (1.0 - a)))
}

/// Uniform over the three actions, independently for each signal.
pub fn decide_noise<R: Rng + ?Sized>(rng: &mut R) -> DecisionPair {
    let mut draw = || Action::ALL[rng.gen_range(0..3)];
    let good = draw();
    let bad = draw();
    DecisionPair::new(good, bad)
}

/// Follows (`FixedHerd`) or opposes (`FixedContrarian`) the trade imbalance
/// on both signals; no trade when the imbalance is zero.
///
/// Panics on any other kind.
pub fn decide_fixed(kind: AgentKind, ctx: &DecisionContext) -> DecisionPair {
    let sign = ctx.imbalance().signum();
    let sign = match kind {
        AgentKind::FixedHerd => sign,
        AgentKind::FixedContrarian => -sign,
        other => panic!("decide_fixed called with {other:?}"),
    };
    let action = match sign {
        1 => Action::Buy,
        -1 => Action::Sell,
        _ => Action::NoTrade,
    };
    DecisionPair::new(action, action)
}

#[derive(Debug, Clone, Default)]
pub struct BayesianRationalAgent {
    pub tie_break: TieBreak,
}

impl TraderAgent for BayesianRationalAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::BayesianRational
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Result<AgentReply, AgentError> {
        Ok(decide_bayesian_rational(ctx, self.tie_break).into())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SignalOnlyAgent;

impl TraderAgent for SignalOnlyAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::SignalOnly
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Result<AgentReply, AgentError> {
        Ok(decide_signal_only(ctx).into())
    }
}

/// Noise trader with its own random stream.
#[derive(Debug, Clone)]
pub struct NoiseAgent {
    rng: ChaCha8Rng,
}

impl NoiseAgent {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }
}

impl TraderAgent for NoiseAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Noise
    }

    fn decide(&mut self, _ctx: &DecisionContext) -> Result<AgentReply, AgentError> {
        Ok(decide_noise(&mut self.rng).into())
    }
}

#[derive(Debug, Clone)]
pub struct FixedAgent {
    kind: AgentKind,
}

impl FixedAgent {
    pub fn herd() -> Self {
        Self {
            kind: AgentKind::FixedHerd,
        }
    }

    pub fn contrarian() -> Self {
        Self {
            kind: AgentKind::FixedContrarian,
        }
    }
}

impl TraderAgent for FixedAgent {
    fn kind(&self) -> AgentKind {
        self.kind
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Result<AgentReply, AgentError> {
        Ok(decide_fixed(self.kind, ctx).into())
    }
}
