use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::environment::Environment;
use super::ExperimentConfig;
use crate::agents::{
    AgentError, AgentKind, AgentReply, DecisionContext, DecisionPair, ExecutedTrade, PastDecision, TraderAgent,
};
use crate::gateway::{ChatExchange, GatewayError, TranscriptError, TranscriptLog};
use crate::llm::{Guidance, LabelScheme};
use crate::market::{
    self, convert_payout, expected_payoff, expected_values, herding_verdict, realized_payoff, Action, BeliefPair,
    HerdingVerdict, MarketState, Signal, TreatmentSpec,
};

/// One trading period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: u32,
    /// Posted price before the trade, full precision.
    pub price: f64,
    /// Price as shown to agents.
    pub displayed_price: f64,
    pub imbalance: i32,
    /// Herding verdict in the displayed pre-trade state.
    pub verdict: HerdingVerdict,
    /// Informed-trader expected values before the trade.
    pub beliefs: BeliefPair,
    /// Every agent's answer, indexed by agent id.
    pub decisions: Vec<DecisionPair>,
    pub selected_agent: usize,
    pub realized_signal: Signal,
    pub executed_action: Action,
    /// The selected answer was unusable and executed as no trade.
    pub executed_invalid: bool,
    pub state_after: MarketState,
}

/// Who sat at each seat of the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentInfo {
    pub id: usize,
    pub kind: AgentKind,
    /// `provider/model` for LLM agents, the rule name otherwise.
    pub model_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<Guidance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_scheme: Option<LabelScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
}

/// One executed trade of one agent and what it earned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeOutcome {
    pub round: u32,
    pub signal: Signal,
    pub action: Action,
    pub price: f64,
    pub realized_lire: f64,
    pub expected_lire: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPayoff {
    pub agent: usize,
    pub trades: Vec<TradeOutcome>,
    pub realized_lire: f64,
    pub expected_lire: f64,
    /// Fee plus converted trading payoff.
    pub payout: f64,
}

/// Complete, replayable account of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_index: u32,
    pub treatment: TreatmentSpec,
    pub environment_seed: u64,
    pub environment: Environment,
    pub agents: Vec<AgentInfo>,
    pub rounds: Vec<RoundRecord>,
    pub payoffs: Vec<AgentPayoff>,
}

impl SessionRecord {
    pub fn decision_count(&self) -> usize {
        self.rounds.iter().map(|r| r.decisions.len()).sum()
    }

    /// Displayed price before each round, then after the last trade.
    pub fn displayed_prices(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.rounds.iter().map(|r| r.displayed_price).collect();
        if let Some(last) = self.rounds.last() {
            out.push(market::display_price(last.state_after.price));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("round {round}, agent {agent}: {source}")]
    Agent {
        round: u32,
        agent: usize,
        #[source]
        source: AgentError,
    },
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
    #[error("I/O on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SessionError {
    /// True when the failure came from a model provider (auth, transport).
    pub fn is_provider(&self) -> bool {
        matches!(self, SessionError::Agent { .. })
            || matches!(self, SessionError::Setup(m) if m.starts_with("provider"))
    }

    pub fn gateway_error(&self) -> Option<&GatewayError> {
        match self {
            SessionError::Agent {
                source: AgentError::Unavailable(e),
                ..
            } => Some(e),
            _ => None,
        }
    }
}

/// Replay diverged from the record.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("replay diverges at round {round}: {detail}")]
pub struct IntegrityError {
    pub round: u32,
    pub detail: String,
}

/// Steps a session one round at a time.
pub struct SessionRunner {
    spec: TreatmentSpec,
    session: u32,
    environment_seed: u64,
    env: Environment,
    agents: Vec<Box<dyn TraderAgent>>,
    infos: Vec<AgentInfo>,
    state: MarketState,
    own_past: Vec<Vec<PastDecision>>,
    selected: Vec<Vec<u32>>,
    executed: Vec<ExecutedTrade>,
    rounds: Vec<RoundRecord>,
    policy: market::PayoffPolicy,
    sequential: bool,
}

impl SessionRunner {
    pub fn new(
        cfg: &ExperimentConfig,
        session: u32,
        env: Environment,
        agents: Vec<Box<dyn TraderAgent>>,
        infos: Vec<AgentInfo>,
    ) -> Self {
        let n = agents.len();
        Self {
            spec: cfg.treatment,
            session,
            environment_seed: cfg.environment_seed,
            state: MarketState::initial(&cfg.treatment),
            env,
            agents,
            infos,
            own_past: vec![Vec::new(); n],
            selected: vec![Vec::new(); n],
            executed: Vec::new(),
            rounds: Vec::new(),
            policy: cfg.payoff.clone(),
            sequential: false,
        }
    }

    /// Queries agents one after another even when they are remote. Replays
    /// need this so identical prompts are answered in recorded agent order.
    pub fn sequential(mut self, yes: bool) -> Self {
        self.sequential = yes;
        self
    }

    pub fn is_finished(&self) -> bool {
        self.rounds.len() >= self.env.signals.len()
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn state(&self) -> &MarketState {
        &self.state
    }

    fn context_for(&self, agent: usize, round: u32) -> DecisionContext {
        DecisionContext {
            round,
            spec: self.spec,
            state: self.state.displayed(),
            own_past: self.own_past[agent].clone(),
            selected_rounds: self.selected[agent].clone(),
            executed: self.executed.clone(),
        }
    }

    fn query_all(&mut self, round: u32) -> Vec<Result<AgentReply, AgentError>> {
        let contexts: Vec<DecisionContext> = (0..self.agents.len()).map(|i| self.context_for(i, round)).collect();
        if !self.sequential && self.agents.iter().any(|a| a.is_remote()) {
            std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .agents
                    .iter_mut()
                    .zip(&contexts)
                    .map(|(agent, ctx)| s.spawn(move || agent.decide(ctx)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("agent thread panicked"))
                    .collect()
            })
        } else {
            self.agents
                .iter_mut()
                .zip(&contexts)
                .map(|(agent, ctx)| agent.decide(ctx))
                .collect()
        }
    }

    /// Runs the next round. Returns the record and the model calls made,
    /// tagged with session, round and agent, in agent order.
    pub fn step(&mut self) -> Result<(&RoundRecord, Vec<ChatExchange>), SessionError> {
        assert!(!self.is_finished(), "session already finished");
        let t = self.rounds.len() as u32 + 1;
        let idx = (t - 1) as usize;
        let displayed = self.state.displayed();

        let mut decisions = Vec::with_capacity(self.agents.len());
        let mut exchanges = Vec::new();
        for (agent, reply) in self.query_all(t).into_iter().enumerate() {
            let reply = reply.map_err(|source| SessionError::Agent {
                round: t,
                agent,
                source,
            })?;
            for mut ex in reply.exchanges {
                ex.session = Some(self.session);
                ex.round = Some(t);
                ex.agent = Some(agent);
                exchanges.push(ex);
            }
            decisions.push(reply.pair);
        }

        let selected = self.env.selection[idx];
        let signal = self.env.signals[idx];
        let chosen = &decisions[selected];
        let (action, invalid) = if chosen.valid {
            (chosen.action_for(signal), false)
        } else {
            (Action::NoTrade, true)
        };

        let before = self.state.clone();
        self.state = market::price_after(&self.spec, &before, action);
        self.executed.push(ExecutedTrade {
            round: t,
            action,
            price: displayed.price,
        });
        self.selected[selected].push(t);
        for (agent, pair) in decisions.iter().enumerate() {
            self.own_past[agent].push(PastDecision {
                round: t,
                pair: pair.clone(),
            });
        }
        self.rounds.push(RoundRecord {
            round: t,
            price: before.price,
            displayed_price: displayed.price,
            imbalance: displayed.imbalance(),
            verdict: herding_verdict(&self.spec, &displayed),
            beliefs: expected_values(&self.spec, &displayed),
            decisions,
            selected_agent: selected,
            realized_signal: signal,
            executed_action: action,
            executed_invalid: invalid,
            state_after: self.state.clone(),
        });
        Ok((self.rounds.last().expect("just pushed"), exchanges))
    }

    /// Settles payoffs and returns the finished record.
    pub fn finish(self) -> SessionRecord {
        let payoffs = settle(&self.rounds, self.infos.len(), self.env.value, &self.policy);
        SessionRecord {
            session_index: self.session,
            treatment: self.spec,
            environment_seed: self.environment_seed,
            environment: self.env,
            agents: self.infos,
            rounds: self.rounds,
            payoffs,
        }
    }
}

/// Each agent is paid for the rounds in which it was selected.
pub fn settle(
    rounds: &[RoundRecord],
    agents: usize,
    value: market::AssetValue,
    policy: &market::PayoffPolicy,
) -> Vec<AgentPayoff> {
    (0..agents)
        .map(|agent| {
            let trades: Vec<TradeOutcome> = rounds
                .iter()
                .filter(|r| r.selected_agent == agent)
                .map(|r| TradeOutcome {
                    round: r.round,
                    signal: r.realized_signal,
                    action: r.executed_action,
                    price: r.price,
                    realized_lire: realized_payoff(r.executed_action, r.price, value),
                    expected_lire: expected_payoff(r.executed_action, r.price, &r.beliefs, r.realized_signal),
                })
                .collect();
            let realized_lire = trades.iter().map(|t| t.realized_lire).sum();
            let expected_lire = trades.iter().map(|t| t.expected_lire).sum();
            AgentPayoff {
                agent,
                payout: convert_payout(realized_lire, policy),
                trades,
                realized_lire,
                expected_lire,
            }
        })
        .collect()
}

/// Runs every round, appending model calls to `log` as they happen.
pub fn run_session(mut runner: SessionRunner, log: &mut TranscriptLog) -> Result<SessionRecord, SessionError> {
    while !runner.is_finished() {
        let (_, exchanges) = runner.step()?;
        for ex in exchanges {
            log.record_exchange(ex)?;
        }
    }
    Ok(runner.finish())
}

/// Field-by-field comparison of two round records.
pub fn diff_round(expected: &RoundRecord, actual: &RoundRecord) -> Option<String> {
    if expected.displayed_price != actual.displayed_price {
        return Some(format!(
            "price {} recorded, {} replayed",
            expected.displayed_price, actual.displayed_price
        ));
    }
    if expected.decisions.len() != actual.decisions.len() {
        return Some("different number of agents".into());
    }
    for (agent, (e, a)) in expected.decisions.iter().zip(&actual.decisions).enumerate() {
        if e != a {
            return Some(format!("agent {agent} decision differs"));
        }
    }
    if expected.selected_agent != actual.selected_agent || expected.realized_signal != actual.realized_signal {
        return Some("selection or signal differs".into());
    }
    if expected != actual {
        return Some("round state differs".into());
    }
    None
}
