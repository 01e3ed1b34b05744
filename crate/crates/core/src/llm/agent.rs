use std::sync::Arc;

use super::{build_system_prompt, build_user_prompt, correction_suffix, parse_decision, PromptVariant};
use crate::agents::{AgentError, AgentKind, AgentReply, DecisionContext, DecisionPair, TraderAgent};
use crate::gateway::{ChatExchange, Gateway};

/// Corrective re-asks after an unreadable reply.
pub const DEFAULT_PARSE_RETRY_LIMIT: u32 = 2;

/// Renders, asks, parses; re-asks with a format reminder up to
/// `parse_retry_limit` times before giving up with an invalid pair.
///
/// Every call is returned as a [`ChatExchange`] so the caller can persist
/// it; transport failures surface as [`AgentError::Unavailable`].
pub fn decide_llm(
    ctx: &DecisionContext,
    variant: &PromptVariant,
    gateway: &Gateway,
    parse_retry_limit: u32,
) -> Result<AgentReply, AgentError> {
    let system = build_system_prompt(variant, &ctx.spec);
    let base_user = build_user_prompt(variant, ctx);
    let cfg = gateway.config();
    let mut exchanges = Vec::new();
    for attempt in 0..=parse_retry_limit {
        let user = if attempt == 0 {
            base_user.clone()
        } else {
            format!("{base_user}\n\n{}", correction_suffix(variant.label_scheme))
        };
        let completion = gateway.complete(&system, &user)?;
        let parsed = parse_decision(&completion.text, variant.label_scheme);
        if let Err(e) = &parsed {
            log::debug!("round {}: unreadable reply (attempt {attempt}): {e}", ctx.round);
        }
        exchanges.push(ChatExchange {
            seq: 0,
            session: None,
            round: Some(ctx.round),
            agent: None,
            attempt,
            provider_id: cfg.provider_id.clone(),
            model_id: cfg.model_id.clone(),
            temperature: cfg.temperature,
            system: system.clone(),
            user,
            reply: completion.text,
            parsed: parsed.as_ref().ok().cloned(),
            transport_retries: completion.retries,
            started_ms: completion.started_ms,
            latency_ms: completion.latency_ms,
            usage: completion.usage,
        });
        if let Ok(pair) = parsed {
            return Ok(AgentReply {
                pair,
                exchanges,
                retries: attempt,
            });
        }
    }
    Ok(AgentReply {
        pair: DecisionPair::invalid(),
        exchanges,
        retries: parse_retry_limit,
    })
}

/// Trader backed by a chat model.
#[derive(Debug, Clone)]
pub struct LlmAgent {
    pub variant: PromptVariant,
    pub gateway: Arc<Gateway>,
    pub parse_retry_limit: u32,
}

impl LlmAgent {
    pub fn new(variant: PromptVariant, gateway: Arc<Gateway>) -> Self {
        Self {
            variant,
            gateway,
            parse_retry_limit: DEFAULT_PARSE_RETRY_LIMIT,
        }
    }
}

impl TraderAgent for LlmAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Llm
    }

    fn model_key(&self) -> String {
        self.gateway.config().model_key()
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Result<AgentReply, AgentError> {
        decide_llm(ctx, &self.variant, &self.gateway, self.parse_retry_limit)
    }

    fn is_remote(&self) -> bool {
        true
    }
}
