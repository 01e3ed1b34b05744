use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use super::{ChatExchange, ChatProvider, ChatRequest, ProviderError, ProviderReply};

type Scripted = Result<ProviderReply, ProviderError>;

/// Returns pre-programmed outcomes in order, regardless of the request.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    script: Mutex<VecDeque<Scripted>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedProvider {
    pub fn new(script: Vec<Scripted>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Always-successful script from plain reply texts.
    pub fn replies<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(texts.into_iter().map(|t| Ok(ProviderReply::from(t.into()))).collect())
    }

    /// Requests seen so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl ChatProvider for ScriptedProvider {
    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        self.requests
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.clone());
        self.script
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .unwrap_or_else(|| Err(ProviderError::Fatal("script exhausted".into())))
    }
}

/// Adapter around a closure; handy for instrumented mocks.
pub struct FnProvider<F> {
    f: F,
}

impl<F> FnProvider<F>
where
    F: Fn(&ChatRequest) -> Result<ProviderReply, ProviderError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&ChatRequest) -> Result<ProviderReply, ProviderError> + Send + Sync,
{
    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        (self.f)(request)
    }
}

/// Replays recorded replies keyed by the exact `(system, user)` pair.
///
/// Identical prompts are answered in recording order, so agents that see
/// the same context in the same round still get their own replies back.
#[derive(Debug, Default)]
pub struct TranscriptProvider {
    replies: Mutex<HashMap<(String, String), VecDeque<String>>>,
}

impl TranscriptProvider {
    pub fn new<'a, I>(exchanges: I) -> Self
    where
        I: IntoIterator<Item = &'a ChatExchange>,
    {
        let mut replies: HashMap<(String, String), VecDeque<String>> = HashMap::new();
        for ex in exchanges {
            replies
                .entry((ex.system.clone(), ex.user.clone()))
                .or_default()
                .push_back(ex.reply.clone());
        }
        Self {
            replies: Mutex::new(replies),
        }
    }

    /// Removes and returns the next recorded reply for this prompt pair.
    pub fn take(&self, system: &str, user: &str) -> Option<String> {
        self.replies
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get_mut(&(system.to_string(), user.to_string()))
            .and_then(VecDeque::pop_front)
    }

    pub fn remaining(&self) -> usize {
        self.replies
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .map(VecDeque::len)
            .sum()
    }
}

impl ChatProvider for TranscriptProvider {
    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        self.take(&request.system, &request.user)
            .map(ProviderReply::from)
            .ok_or_else(|| ProviderError::Fatal("no recorded reply for this prompt".into()))
    }
}
