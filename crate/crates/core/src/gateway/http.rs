use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatProvider, ChatRequest, GatewayError, ProviderError, ProviderReply, Usage};

/// Request/response layout of a chat endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireFormat {
    OpenAiChat,
    AnthropicMessages,
}

const ANTHROPIC_VERSION: &str = "2023-06-01";

/// Blocking HTTP adapter. The API key is held in memory only.
pub struct HttpProvider {
    format: WireFormat,
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("format", &self.format)
            .field("endpoint", &self.endpoint)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpProvider {
    pub fn new(format: WireFormat, endpoint: String, api_key: String, timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(Self {
            format,
            endpoint,
            api_key,
            client,
        })
    }

    pub fn request_body(format: WireFormat, request: &ChatRequest) -> Value {
        match format {
            WireFormat::OpenAiChat => json!({
                "model": request.model_id,
                "messages": [
                    {"role": "system", "content": request.system},
                    {"role": "user", "content": request.user},
                ],
                "temperature": request.temperature,
                "max_tokens": request.max_output_tokens,
            }),
            WireFormat::AnthropicMessages => json!({
                "model": request.model_id,
                "system": request.system,
                "messages": [{"role": "user", "content": request.user}],
                "temperature": request.temperature,
                "max_tokens": request.max_output_tokens,
            }),
        }
    }

    pub fn parse_body(format: WireFormat, body: &Value) -> Result<ProviderReply, ProviderError> {
        let as_u64 = |v: &Value, key: &str| v.get(key).and_then(Value::as_u64);
        match format {
            WireFormat::OpenAiChat => {
                let text = body
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .ok_or_else(|| ProviderError::Fatal("response has no choices[0].message.content".into()))?;
                let usage = body.get("usage").map(|u| Usage {
                    input_tokens: as_u64(u, "prompt_tokens"),
                    output_tokens: as_u64(u, "completion_tokens"),
                });
                Ok(ProviderReply {
                    text: text.to_string(),
                    usage,
                })
            }
            WireFormat::AnthropicMessages => {
                let blocks = body
                    .get("content")
                    .and_then(Value::as_array)
                    .ok_or_else(|| ProviderError::Fatal("response has no content array".into()))?;
                // thinking blocks are skipped; only text blocks form the reply
                let text: String = blocks
                    .iter()
                    .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
                    .filter_map(|b| b.get("text").and_then(Value::as_str))
                    .collect();
                let usage = body.get("usage").map(|u| Usage {
                    input_tokens: as_u64(u, "input_tokens"),
                    output_tokens: as_u64(u, "output_tokens"),
                });
                Ok(ProviderReply { text, usage })
            }
        }
    }
}

fn classify_status(status: u16, body: &str) -> ProviderError {
    let msg = format!("HTTP {status}: {}", body.chars().take(300).collect::<String>());
    match status {
        401 | 403 => ProviderError::Auth(msg),
        408 | 409 | 425 | 429 | 500..=599 => ProviderError::Transient(msg),
        _ => ProviderError::Fatal(msg),
    }
}

impl ChatProvider for HttpProvider {
    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        let body = Self::request_body(self.format, request);
        let builder = self.client.post(&self.endpoint).json(&body);
        let builder = match self.format {
            WireFormat::OpenAiChat => builder.bearer_auth(&self.api_key),
            WireFormat::AnthropicMessages => builder
                .header("x-api-key", &self.api_key)
                .header("anthropic-version", ANTHROPIC_VERSION),
        };
        let response = builder.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                ProviderError::Transient(e.to_string())
            } else {
                ProviderError::Fatal(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| ProviderError::Transient(format!("reading body: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::Fatal(format!("invalid JSON body: {e}")))?;
        Self::parse_body(self.format, &value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest {
            model_id: "m-1".into(),
            system: "sys".into(),
            user: "usr".into(),
            temperature: 0.7,
            max_output_tokens: 512,
        }
    }

    #[test]
    fn openai_body_layout() {
        let body = HttpProvider::request_body(WireFormat::OpenAiChat, &req());
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "usr");
        assert_eq!(body["temperature"], 0.7);
    }

    #[test]
    fn anthropic_body_layout() {
        let body = HttpProvider::request_body(WireFormat::AnthropicMessages, &req());
        assert_eq!(body["system"], "sys");
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["max_tokens"], 512);
    }

    #[test]
    fn anthropic_skips_thinking_blocks() {
        let body = json!({
            "content": [
                {"type": "thinking", "thinking": "hmm"},
                {"type": "text", "text": "{\"a\": 1}"}
            ],
            "usage": {"input_tokens": 10, "output_tokens": 3}
        });
        let reply = HttpProvider::parse_body(WireFormat::AnthropicMessages, &body).unwrap();
        assert_eq!(reply.text, "{\"a\": 1}");
        assert_eq!(reply.usage.unwrap().output_tokens, Some(3));
    }

    #[test]
    fn status_classes() {
        assert!(matches!(classify_status(401, ""), ProviderError::Auth(_)));
        assert!(matches!(classify_status(429, ""), ProviderError::Transient(_)));
        assert!(matches!(classify_status(503, ""), ProviderError::Transient(_)));
        assert!(matches!(classify_status(400, ""), ProviderError::Fatal(_)));
    }
}
