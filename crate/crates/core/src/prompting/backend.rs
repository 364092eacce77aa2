//! Chat-completion backends: the contract, deterministic mocks, and an
//! OpenAI-compatible HTTP client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Label, LabelScheme};
use crate::seed::{stable_hash, unit_interval};

use super::prompts::{canonical_renderings, task_definition};

/// Something that answers a (system, user) prompt pair.
///
/// Implementations must tolerate concurrent calls.
pub trait Backend: Send + Sync {
    fn complete(&self, system: &str, user: &str, temperature: f64, seed: u64) -> Result<String>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, system: &str, user: &str, temperature: f64, seed: u64) -> Result<String> {
        (**self).complete(system, user, temperature, seed)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, system: &str, user: &str, temperature: f64, seed: u64) -> Result<String> {
        (**self).complete(system, user, temperature, seed)
    }
}

/// Adapts a closure into a backend. Handy for scripted tests.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&str, &str, f64, u64) -> Result<String> + Send + Sync,
{
    fn complete(&self, system: &str, user: &str, temperature: f64, seed: u64) -> Result<String> {
        (self.0)(system, user, temperature, seed)
    }
}

/// Returns the user prompt unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

impl Backend for EchoBackend {
    fn complete(&self, _system: &str, user: &str, _temperature: f64, _seed: u64) -> Result<String> {
        Ok(user.to_string())
    }
}

/// Offline stand-in for an LLM: a pure function of (system, user, seed).
///
/// For labeling prompts each (system, user) pair has a preferred option,
/// answered with probability `fidelity`; otherwise a label is drawn
/// uniformly. Any other prompt gets five lines of synthetic prose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockBackend {
    pub fidelity: f64,
    /// Probability of an unparseable reply.
    pub garbage_rate: f64,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend {
            fidelity: 0.6,
            garbage_rate: 0.0,
        }
    }
}

const NOUNS: [&str; 12] = [
    "teacher", "river", "engineer", "village", "garden", "doctor", "market", "lantern", "pilot",
    "library", "farmer", "harbor",
];
const VERBS: [&str; 8] = [
    "visits", "admires", "repairs", "avoids", "describes", "follows", "paints", "remembers",
];
const ADJECTIVES: [&str; 8] = [
    "quiet", "busy", "ancient", "bright", "crowded", "distant", "careful", "modern",
];

impl MockBackend {
    fn scheme_of(system: &str) -> Option<LabelScheme> {
        LabelScheme::ALL
            .into_iter()
            .find(|s| system.contains(task_definition(*s)))
    }

    fn answer(&self, scheme: LabelScheme, system: &str, user: &str, seed: u64) -> String {
        let k = scheme.size() as u64;
        let prompt_hash = stable_hash(&[system.as_bytes(), user.as_bytes()]);
        let seed_bytes = seed.to_le_bytes();
        let draw = stable_hash(&[system.as_bytes(), user.as_bytes(), &seed_bytes]);
        let u = unit_interval(draw);
        if u < self.garbage_rate {
            return "I would need more context to answer.".to_string();
        }
        let index = if u < self.garbage_rate + self.fidelity * (1.0 - self.garbage_rate) {
            prompt_hash % k
        } else {
            (draw >> 7) % k
        };
        let label: Label = scheme.labels()[index as usize];
        let renderings = canonical_renderings(label);
        renderings[((draw >> 23) % renderings.len() as u64) as usize].clone()
    }

    fn prose(system: &str, user: &str, seed: u64) -> String {
        let seed_bytes = seed.to_le_bytes();
        (0..5u8)
            .map(|line| {
                let h = stable_hash(&[system.as_bytes(), user.as_bytes(), &seed_bytes, &[line]]);
                let pick = |list: &[&'static str], shift: u32| list[((h >> shift) % list.len() as u64) as usize];
                format!(
                    "The {} {} {} the {} {}.",
                    pick(&ADJECTIVES, 0),
                    pick(&NOUNS, 8),
                    pick(&VERBS, 16),
                    pick(&ADJECTIVES, 24),
                    pick(&NOUNS, 32)
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Backend for MockBackend {
    fn complete(&self, system: &str, user: &str, _temperature: f64, seed: u64) -> Result<String> {
        Ok(match Self::scheme_of(system) {
            Some(scheme) => self.answer(scheme, system, user, seed),
            None => Self::prose(system, user, seed),
        })
    }
}

/// Environment variable holding the API key for [`HttpBackend`].
pub const API_KEY_ENV: &str = "SPECTRUM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    /// Full chat-completions URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Retries on transport errors, 429 and 5xx responses.
    pub max_retries: u32,
    pub max_tokens: Option<u32>,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            timeout_secs: 60,
            max_retries: 3,
            max_tokens: Some(32),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

/// Remote chat-completion service speaking the OpenAI wire format.
pub struct HttpBackend {
    settings: HttpSettings,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// Reads the API key from [`API_KEY_ENV`].
    pub fn from_env(settings: HttpSettings) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(settings, key)
    }

    pub fn new(settings: HttpSettings, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            settings,
            api_key,
            agent,
        }
    }

    fn request_once(&self, body: &ChatRequest<'_>) -> std::result::Result<String, (bool, String)> {
        let mut req = self
            .agent
            .post(&self.settings.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let retryable = status == 429 || status >= 500;
            return Err((retryable, format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, format!("malformed response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| (false, "response has no message content".to_string()))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, system: &str, user: &str, temperature: f64, seed: u64) -> Result<String> {
        let body = ChatRequest {
            model: &self.settings.model,
            // some generation steps have no system prompt
            messages: [("system", system), ("user", user)]
                .into_iter()
                .filter(|(role, content)| *role == "user" || !content.is_empty())
                .map(|(role, content)| ChatMessage { role, content })
                .collect(),
            temperature,
            seed,
            max_tokens: self.settings.max_tokens,
        };
        let mut attempt = 0;
        loop {
            match self.request_once(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, message)) => {
                    if !retryable || attempt >= self.settings.max_retries {
                        return Err(Error::Backend {
                            item_id: None,
                            message,
                        });
                    }
                    log::warn!("backend call failed (attempt {}): {message}", attempt + 1);
                    std::thread::sleep(Duration::from_millis(250 << attempt.min(6)));
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::parse::parse_vote;
    use crate::prompting::prompts::build_base_prompt;

    #[test]
    fn mock_is_deterministic_and_parseable() {
        let mock = MockBackend::default();
        let sys = build_base_prompt(LabelScheme::SixWay);
        for seed in 0..50 {
            let a = mock.complete(&sys, "s1: P.\ns2: C.", 1.0, seed).unwrap();
            let b = mock.complete(&sys, "s1: P.\ns2: C.", 1.0, seed).unwrap();
            assert_eq!(a, b);
            parse_vote(&a, LabelScheme::SixWay).unwrap();
        }
        let prose = mock.complete("You are a writing assistant", "Sentence: x", 1.0, 3).unwrap();
        assert_eq!(prose.lines().count(), 5);
    }

    #[test]
    fn mock_garbage_rate_one_never_parses() {
        let mock = MockBackend {
            fidelity: 0.6,
            garbage_rate: 1.0,
        };
        let sys = build_base_prompt(LabelScheme::ThreeWay);
        let reply = mock.complete(&sys, "s1: a\ns2: b", 1.0, 1).unwrap();
        assert!(parse_vote(&reply, LabelScheme::ThreeWay).is_err());
    }

    #[test]
    fn echo_returns_user_prompt() {
        assert_eq!(EchoBackend.complete("sys", "hello", 1.0, 0).unwrap(), "hello");
    }
}
