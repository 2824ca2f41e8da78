use serde::{Deserialize, Serialize};

use super::prompt::ChatMessage;
use crate::http::{HttpConfig, JsonClient};
use crate::{Error, Result};

pub const CHAT_API_KEY_VAR: &str = "CHAT_API_KEY";
pub const DEFAULT_CHAT_MODEL: &str = "gpt-4o";

#[derive(Debug, Clone)]
pub struct ChatConfig {
    pub http: HttpConfig,
    pub model: String,
}

impl ChatConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        ChatConfig {
            http: HttpConfig::new(endpoint).with_api_key_from_env(CHAT_API_KEY_VAR),
            model: DEFAULT_CHAT_MODEL.to_string(),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// Client for a chat-completion endpoint (`{model, messages}` in,
/// `choices[0].message.content` out).
#[derive(Debug, Clone)]
pub struct ChatClient {
    client: JsonClient,
    model: String,
}

impl ChatClient {
    pub fn new(config: ChatConfig) -> Result<Self> {
        Ok(ChatClient {
            client: JsonClient::new(config.http)?,
            model: config.model,
        })
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let reply: ChatReply = self.client.post(&ChatRequest {
            model: &self.model,
            messages,
            temperature: 0.0,
        })?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Protocol("chat reply has no message content".into()))
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::test_http::MockServer;

    #[test]
    fn sends_messages_and_reads_content() {
        let server = MockServer::start(|_, _| {
            (200, r#"{"choices":[{"message":{"role":"assistant","content":"No"}}]}"#.into())
        });
        let mut cfg = ChatConfig::new(&server.url);
        cfg.http.api_key = Some("k".into());
        cfg.http.backoff = Duration::ZERO;
        let client = ChatClient::new(cfg).unwrap();
        let msgs = vec![ChatMessage {
            role: "user".into(),
            content: "hi".into(),
        }];
        assert_eq!(client.complete(&msgs).unwrap(), "No");
        let req: serde_json::Value =
            serde_json::from_str(&server.requests.lock().unwrap()[0].body).unwrap();
        assert_eq!(req["model"], "gpt-4o");
        assert_eq!(req["messages"][0]["content"], "hi");
    }

    #[test]
    fn empty_choices_is_protocol_error() {
        let server = MockServer::start(|_, _| (200, r#"{"choices":[]}"#.into()));
        let client = ChatClient::new(ChatConfig::new(&server.url)).unwrap();
        assert!(matches!(client.complete(&[]), Err(Error::Protocol(_))));
    }
}
