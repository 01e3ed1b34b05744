//! Experiment configuration (TOML).
//!
//! ```toml
//! [experiment]
//! name = "treatment-2-rules"
//! sessions = 4
//! rounds = 8
//! agents_per_session = 8
//! environment_seed = 2024
//!
//! [treatment]
//! preset = 2            # or explicit event_probability / informed_fraction / ...
//!
//! [prompt]
//! guidance = "baseline" # or "optimal"
//! label_scheme = "white_blue"
//!
//! [[agents]]
//! kind = "llm"
//! count = 8
//! provider = "synthetic"
//!
//! [providers.synthetic]
//! adapter = "synthetic"
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentKind, TieBreak};
use crate::gateway::ProviderConfig;
use crate::llm::{Guidance, LabelScheme, PromptVariant, DEFAULT_PARSE_RETRY_LIMIT};
use crate::market::{PayoffPolicy, PriceUpdating, TreatmentSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn issues(&self) -> Vec<String> {
        match self {
            ConfigError::Parse(m) => vec![m.clone()],
            ConfigError::Invalid(v) => v.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    treatment: RawTreatment,
    #[serde(default)]
    payoff: Option<PayoffPolicy>,
    #[serde(default)]
    prompt: PromptSettings,
    #[serde(default)]
    agents: Vec<AgentSpec>,
    #[serde(default)]
    providers: BTreeMap<String, ProviderConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: Option<String>,
    sessions: Option<u32>,
    rounds: Option<u32>,
    agents_per_session: Option<u32>,
    environment_seed: Option<u64>,
    agent_seed: Option<u64>,
    length_variant: Option<bool>,
    parse_retry_limit: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTreatment {
    preset: Option<u8>,
    event_probability: Option<f64>,
    informed_fraction: Option<f64>,
    signal_accuracy: Option<f64>,
    price_updating: Option<PriceUpdating>,
    initial_price: Option<f64>,
}

/// Prompt knobs shared by all LLM agents unless overridden per agent group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSettings {
    #[serde(default)]
    pub guidance: Guidance,
    #[serde(default)]
    pub label_scheme: LabelScheme,
    /// A preset name (`human`, `professional_trader`, `robo_advisor`,
    /// `rational`), `characteristics` for a sampled profile, or literal text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
}

/// One group of identical agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: AgentKind,
    #[serde(default = "one")]
    pub count: u32,
    /// Provider key for `llm` agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<Guidance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_scheme: Option<LabelScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
}

fn one() -> u32 {
    1
}

impl AgentSpec {
    pub fn new(kind: AgentKind, count: u32) -> Self {
        Self {
            kind,
            count,
            provider: None,
            tie_break: TieBreak::default(),
            guidance: None,
            label_scheme: None,
            persona: None,
        }
    }

    pub fn llm(provider: impl Into<String>, count: u32) -> Self {
        Self {
            provider: Some(provider.into()),
            ..Self::new(AgentKind::Llm, count)
        }
    }
}

/// Fully resolved experiment description; this is what manifests record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub sessions: u32,
    pub rounds: u32,
    pub agents_per_session: u32,
    pub environment_seed: u64,
    /// Seed for agent-side randomness (noise traders, sampled personas).
    pub agent_seed: u64,
    /// Allows `rounds != agents_per_session`.
    pub length_variant: bool,
    pub parse_retry_limit: u32,
    pub treatment: TreatmentSpec,
    pub payoff: PayoffPolicy,
    pub prompt: PromptSettings,
    pub agents: Vec<AgentSpec>,
    pub providers: BTreeMap<String, ProviderConfig>,
}

impl ExperimentConfig {
    /// The canonical protocol: 4 sessions of 8 rounds with 8 agents.
    pub fn canonical(treatment: TreatmentSpec, agents: Vec<AgentSpec>) -> Self {
        Self {
            name: "experiment".to_string(),
            sessions: 4,
            rounds: 8,
            agents_per_session: 8,
            environment_seed: 0,
            agent_seed: 0,
            length_variant: false,
            parse_retry_limit: DEFAULT_PARSE_RETRY_LIMIT,
            treatment,
            payoff: PayoffPolicy::default(),
            prompt: PromptSettings::default(),
            agents,
            providers: BTreeMap::new(),
        }
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut issues = Vec::new();

        let t = &raw.treatment;
        let base = match t.preset {
            Some(n) => TreatmentSpec::preset(n).unwrap_or_else(|| {
                issues.push(format!("treatment.preset: {n} is not one of 1, 2, 3"));
                TreatmentSpec::treatment_i()
            }),
            None => TreatmentSpec::treatment_i(),
        };
        let treatment = TreatmentSpec {
            event_probability: t.event_probability.unwrap_or(base.event_probability),
            informed_fraction: t.informed_fraction.unwrap_or(base.informed_fraction),
            signal_accuracy: t.signal_accuracy.unwrap_or(base.signal_accuracy),
            price_updating: t.price_updating.unwrap_or(base.price_updating),
            initial_price: t.initial_price.unwrap_or(base.initial_price),
        };

        let e = raw.experiment;
        let environment_seed = e.environment_seed.unwrap_or(0);
        let mut providers = raw.providers;
        for (key, p) in providers.iter_mut() {
            if p.provider_id.is_empty() {
                p.provider_id = key.clone();
            }
        }
        let cfg = Self {
            name: e.name.unwrap_or_else(|| "experiment".to_string()),
            sessions: e.sessions.unwrap_or(4),
            rounds: e.rounds.unwrap_or(8),
            agents_per_session: e.agents_per_session.unwrap_or(8),
            environment_seed,
            agent_seed: e.agent_seed.unwrap_or(environment_seed),
            length_variant: e.length_variant.unwrap_or(false),
            parse_retry_limit: e.parse_retry_limit.unwrap_or(DEFAULT_PARSE_RETRY_LIMIT),
            treatment,
            payoff: raw.payoff.unwrap_or_default(),
            prompt: raw.prompt,
            agents: raw.agents,
            providers,
        };
        issues.extend(cfg.validate());
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// Schema-level and protocol invariants, each prefixed with its field path.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let t = &self.treatment;
        let probability = |name: &str, x: f64, issues: &mut Vec<String>| {
            if !(0.0..=1.0).contains(&x) {
                issues.push(format!("treatment.{name}: {x} is outside [0, 1]"));
            }
        };
        probability("event_probability", t.event_probability, &mut issues);
        probability("informed_fraction", t.informed_fraction, &mut issues);
        if !(t.signal_accuracy > 0.5 && t.signal_accuracy <= 1.0) {
            issues.push(format!(
                "treatment.signal_accuracy: {} is outside (0.5, 1]",
                t.signal_accuracy
            ));
        }
        if !(t.initial_price > 0.0 && t.initial_price < 100.0) {
            issues.push(format!(
                "treatment.initial_price: {} is outside (0, 100)",
                t.initial_price
            ));
        }
        if issues.is_empty() {
            if let Err(e) = t.validate() {
                issues.push(format!("treatment: {e}"));
            }
        }
        if let Err(e) = self.payoff.validate() {
            issues.push(format!("payoff: {e}"));
        }

        if self.sessions == 0 {
            issues.push("experiment.sessions: must be at least 1".into());
        }
        if self.rounds == 0 {
            issues.push("experiment.rounds: must be at least 1".into());
        }
        if self.agents_per_session == 0 {
            issues.push("experiment.agents_per_session: must be at least 1".into());
        }
        if self.rounds != self.agents_per_session && !self.length_variant {
            issues.push(format!(
                "experiment.rounds: {} rounds with {} agents breaks the trade-exactly-once protocol; set experiment.length_variant = true",
                self.rounds, self.agents_per_session
            ));
        }

        if self.agents.is_empty() {
            issues.push("agents: at least one [[agents]] group is required".into());
        }
        let total: u32 = self.agents.iter().map(|a| a.count).sum();
        if !self.agents.is_empty() && total != self.agents_per_session {
            issues.push(format!(
                "agents: counts add up to {total} but experiment.agents_per_session is {}",
                self.agents_per_session
            ));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.count == 0 {
                issues.push(format!("agents[{i}].count: must be at least 1"));
            }
            match (a.kind, &a.provider) {
                (AgentKind::Llm, None) => issues.push(format!("agents[{i}].provider: required for llm agents")),
                (AgentKind::Llm, Some(p)) if !self.providers.contains_key(p) => {
                    issues.push(format!("agents[{i}].provider: no [providers.{p}] section"))
                }
                (kind, Some(_)) if kind != AgentKind::Llm => {
                    issues.push(format!("agents[{i}].provider: only llm agents use a provider"))
                }
                _ => {}
            }
        }
        for (key, p) in &self.providers {
            for issue in p.validate() {
                issues.push(format!("providers.{key}: {issue}"));
            }
        }
        issues
    }

    /// Total agents that call a model.
    pub fn llm_agent_count(&self) -> u32 {
        self.agents
            .iter()
            .filter(|a| a.kind == AgentKind::Llm)
            .map(|a| a.count)
            .sum()
    }

    /// Prompt variant for one agent group; the persona is resolved later.
    pub fn variant_for(&self, spec: &AgentSpec) -> PromptVariant {
        PromptVariant {
            guidance: spec.guidance.unwrap_or(self.prompt.guidance),
            label_scheme: spec.label_scheme.unwrap_or(self.prompt.label_scheme),
            persona: None,
            payoff_policy: self.payoff.clone(),
            participant_count: self.agents_per_session,
            round_count: self.rounds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = r#"
        [experiment]
        name = "t1"
        environment_seed = 11

        [treatment]
        preset = 1

        [[agents]]
        kind = "bayesian_rational"
        count = 8
    "#;

    #[test]
    fn canonical_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(CANONICAL).unwrap();
        assert_eq!((cfg.sessions, cfg.rounds, cfg.agents_per_session), (4, 8, 8));
        assert_eq!(cfg.treatment, TreatmentSpec::treatment_i());
        assert_eq!(cfg.agent_seed, 11);
        assert_eq!(cfg.payoff, PayoffPolicy::default());
    }

    #[test]
    fn out_of_range_rho() {
        let text = CANONICAL.replace("preset = 1", "event_probability = 1.5");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(
            err.issues()
                .iter()
                .any(|m| m.starts_with("treatment.event_probability")),
            "{err}"
        );
    }

    #[test]
    fn length_requires_flag() {
        let text = CANONICAL.replace("environment_seed = 11", "environment_seed = 11\nrounds = 20");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.issues().iter().any(|m| m.starts_with("experiment.rounds")), "{err}");
        let ok = text.replace("rounds = 20", "rounds = 20\nlength_variant = true");
        assert!(ExperimentConfig::from_toml_str(&ok).is_ok());
    }

    #[test]
    fn llm_agents_need_a_provider_section() {
        let text = CANONICAL.replace("kind = \"bayesian_rational\"", "kind = \"llm\"\nprovider = \"x\"");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.issues().iter().any(|m| m.contains("[providers.x]")), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = CANONICAL.replace("name = \"t1\"", "name = \"t1\"\nsesions = 3");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(CANONICAL).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
    }
}
