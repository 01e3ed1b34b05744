//! Session orchestration.
//!
//! A session draws nature's moves from a dedicated environment stream,
//! queries every agent each round under the strategy method, executes the
//! selected agent's action for the realized signal and settles payoffs.
//! Experiments run sessions in parallel and persist them as a bundle
//! directory that can be resumed and replayed.

mod bundle;
mod config;
mod engine;
mod environment;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::agents::{AgentKind, BayesianRationalAgent, FixedAgent, NoiseAgent, SignalOnlyAgent, TraderAgent};
use crate::analysis::HeuristicGrader;
use crate::gateway::{
    network_provider, read_transcript, AdapterKind, ChatExchange, ChatProvider, ChatRequest, ConcurrencyLimiter,
    Gateway, GatewayError, ProviderConfig, ProviderError, ProviderReply, TranscriptProvider,
};
use crate::llm::{CharacteristicsSampler, LlmAgent, PersonaPreset, SyntheticProvider};

pub use bundle::{
    replay, replay_bundle, run_experiment, Bundle, Manifest, RunOutcome, SessionStatus, SessionStatusKind,
};
pub use config::{AgentSpec, ConfigError, ExperimentConfig, PromptSettings};
pub use engine::{
    diff_round, run_session, settle, AgentInfo, AgentPayoff, IntegrityError, RoundRecord, SessionError, SessionRecord,
    SessionRunner, TradeOutcome,
};
pub use environment::{agent_rng, draw_environment, draw_environment_with, environment_rng, Environment};

/// A configured provider: adapter plus an in-flight cap shared by every
/// session that uses it.
#[derive(Clone)]
pub struct ProviderHandle {
    pub config: ProviderConfig,
    provider: Arc<dyn ChatProvider>,
    limiter: Arc<ConcurrencyLimiter>,
    /// Recorded exchanges for the transcript adapter; each session is
    /// served only its own.
    recorded: Option<Arc<Vec<ChatExchange>>>,
}

impl std::fmt::Debug for ProviderHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderHandle")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

/// Serves recorded replies first and falls through to the live adapter.
struct Resuming {
    cache: TranscriptProvider,
    live: Arc<dyn ChatProvider>,
}

impl ChatProvider for Resuming {
    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        match self.cache.take(&request.system, &request.user) {
            Some(text) => Ok(text.into()),
            None => self.live.send(request),
        }
    }
}

fn load_transcripts(path: &Path) -> Result<Vec<ChatExchange>, GatewayError> {
    let err = |e: String| GatewayError::Config(format!("transcript {}: {e}", path.display()));
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path).map_err(|e| err(e.to_string()))? {
            let p = entry.map_err(|e| err(e.to_string()))?.path();
            if p.extension().is_some_and(|x| x == "jsonl") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut out = Vec::new();
    for f in files {
        out.extend(read_transcript(&f).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

impl ProviderHandle {
    /// Instantiates the adapter named in the config.
    pub fn build(config: &ProviderConfig) -> Result<Self, GatewayError> {
        let provider: Arc<dyn ChatProvider> = match config.adapter {
            AdapterKind::Openai | AdapterKind::Anthropic => Arc::new(network_provider(config)?),
            AdapterKind::Synthetic => Arc::new(SyntheticProvider),
            AdapterKind::HeuristicGrader => Arc::new(HeuristicGrader),
            AdapterKind::Transcript => {
                let path = config
                    .transcript
                    .as_ref()
                    .ok_or_else(|| GatewayError::Config("transcript adapter needs a transcript path".into()))?;
                return Ok(Self::recorded(config.clone(), load_transcripts(path)?));
            }
        };
        Ok(Self::with_provider(config.clone(), provider))
    }

    /// Serves `exchanges` back, matched by session and prompt.
    pub fn recorded(config: ProviderConfig, exchanges: Vec<ChatExchange>) -> Self {
        let mut handle = Self::with_provider(config, Arc::new(TranscriptProvider::default()));
        handle.recorded = Some(Arc::new(exchanges));
        handle
    }

    /// Answers come from a recording, so agents must be queried in order.
    pub fn is_recorded(&self) -> bool {
        self.recorded.is_some()
    }

    pub fn with_provider(config: ProviderConfig, provider: Arc<dyn ChatProvider>) -> Self {
        Self {
            limiter: Arc::new(ConcurrencyLimiter::new(config.concurrent_request_limit)),
            config,
            provider,
            recorded: None,
        }
    }

    /// A gateway for one session; `prior` replies (from an interrupted run)
    /// are served before any live request.
    pub fn gateway(&self, session: u32, prior: &[ChatExchange]) -> Gateway {
        let mine: Vec<&ChatExchange> = prior
            .iter()
            .filter(|ex| ex.provider_id == self.config.provider_id)
            .collect();
        let provider: Arc<dyn ChatProvider> = if let Some(recorded) = &self.recorded {
            Arc::new(TranscriptProvider::new(
                recorded.iter().filter(|ex| ex.session.is_none_or(|s| s == session)),
            ))
        } else if mine.is_empty() {
            self.provider.clone()
        } else {
            Arc::new(Resuming {
                cache: TranscriptProvider::new(mine),
                live: self.provider.clone(),
            })
        };
        Gateway::new(self.config.clone(), provider).with_limiter(self.limiter.clone())
    }
}

pub type Providers = BTreeMap<String, ProviderHandle>;

/// Builds handles for every provider the config declares.
pub fn build_providers(cfg: &ExperimentConfig) -> Result<Providers, GatewayError> {
    cfg.providers
        .iter()
        .map(|(key, p)| Ok((key.clone(), ProviderHandle::build(p)?)))
        .collect()
}

fn resolve_persona(setting: &str, cfg: &ExperimentConfig, session: u32, agent: usize) -> String {
    if setting == "characteristics" {
        let mut rng = agent_rng(cfg.agent_seed, session, agent, 1);
        CharacteristicsSampler::default().sample(&mut rng).render()
    } else if let Some(preset) = PersonaPreset::from_name(setting) {
        preset.text().to_string()
    } else {
        setting.to_string()
    }
}

/// Agents of one session and who sits in each seat.
pub type Seats = (Vec<Box<dyn TraderAgent>>, Vec<AgentInfo>);

/// Instantiates the agents of one session in config order.
pub fn build_agents(
    cfg: &ExperimentConfig,
    session: u32,
    providers: &Providers,
    prior: &[ChatExchange],
) -> Result<Seats, SessionError> {
    let mut gateways: BTreeMap<&str, Arc<Gateway>> = BTreeMap::new();
    let mut agents: Vec<Box<dyn TraderAgent>> = Vec::new();
    let mut infos = Vec::new();
    for group in &cfg.agents {
        for _ in 0..group.count {
            let id = agents.len();
            let mut info = AgentInfo {
                id,
                kind: group.kind,
                model_key: group.kind.name().to_string(),
                guidance: None,
                label_scheme: None,
                persona: None,
            };
            let agent: Box<dyn TraderAgent> = match group.kind {
                AgentKind::BayesianRational => Box::new(BayesianRationalAgent {
                    tie_break: group.tie_break,
                }),
                AgentKind::SignalOnly => Box::new(SignalOnlyAgent),
                AgentKind::Noise => Box::new(NoiseAgent::new(agent_rng(cfg.agent_seed, session, id, 0))),
                AgentKind::FixedHerd => Box::new(FixedAgent::herd()),
                AgentKind::FixedContrarian => Box::new(FixedAgent::contrarian()),
                AgentKind::Llm => {
                    let key = group.provider.as_deref().unwrap_or_default();
                    let handle = providers
                        .get(key)
                        .ok_or_else(|| SessionError::Setup(format!("provider {key} is not configured")))?;
                    let gateway = gateways
                        .entry(key)
                        .or_insert_with(|| Arc::new(handle.gateway(session, prior)))
                        .clone();
                    let mut variant = cfg.variant_for(group);
                    variant.persona = group
                        .persona
                        .as_deref()
                        .or(cfg.prompt.persona.as_deref())
                        .map(|s| resolve_persona(s, cfg, session, id));
                    info.model_key = handle.config.model_key();
                    info.guidance = Some(variant.guidance);
                    info.label_scheme = Some(variant.label_scheme);
                    info.persona = variant.persona.clone();
                    let mut agent = LlmAgent::new(variant, gateway);
                    agent.parse_retry_limit = cfg.parse_retry_limit;
                    Box::new(agent)
                }
            };
            agents.push(agent);
            infos.push(info);
        }
    }
    Ok((agents, infos))
}

/// A runner for `session` with freshly built agents.
pub fn session_runner(
    cfg: &ExperimentConfig,
    session: u32,
    providers: &Providers,
    prior: &[ChatExchange],
) -> Result<SessionRunner, SessionError> {
    let (agents, infos) = build_agents(cfg, session, providers, prior)?;
    let sequential = !prior.is_empty() || providers.values().any(ProviderHandle::is_recorded);
    Ok(SessionRunner::new(cfg, session, draw_environment(cfg, session), agents, infos).sequential(sequential))
}

/// Runs every session in memory, without persistence. Intended for
/// rule-agent studies and tests; sessions run in parallel.
pub fn simulate(cfg: &ExperimentConfig, providers: &Providers) -> Result<Vec<SessionRecord>, SessionError> {
    use rayon::prelude::*;
    (0..cfg.sessions)
        .into_par_iter()
        .map(|s| {
            let mut log = crate::gateway::TranscriptLog::in_memory();
            run_session(session_runner(cfg, s, providers, &[])?, &mut log)
        })
        .collect()
}
