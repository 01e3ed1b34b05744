//! Sequential-trading herding laboratory.
//!
//! The crate is organised bottom-up:
//!
//! - [`market`]: Bayesian market maker, informed-trader beliefs, optimal
//!   actions, the herding oracle and payoff arithmetic.
//! - [`agents`]: the trader-agent contract and rule-based reference agents.
//! - [`llm`]: prompt rendering, reply parsing and the LLM-backed agent.
//! - [`gateway`]: provider-agnostic chat client with retries, a concurrency
//!   cap and transcript persistence.
//! - [`session`]: environment draws, the round/session state machine,
//!   experiment bundles and replay.
//! - [`analysis`]: behavior taxonomy, aggregate tables, payoff statistics,
//!   price series, reasoning grading and reference comparisons.

pub mod agents;
pub mod analysis;
pub mod error;
pub mod gateway;
pub mod llm;
pub mod market;
pub mod session;

pub use agents::{AgentKind, DecisionContext, DecisionPair, TraderAgent};
pub use error::ModelError;
pub use market::{
    Action, AssetValue, BeliefPair, HerdingVerdict, MarketState, PayoffPolicy, PriceUpdating, Signal, TradeHistory,
    TreatmentSpec,
};
pub use session::{ExperimentConfig, RoundRecord, SessionRecord};

/// Version string written into bundle manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
