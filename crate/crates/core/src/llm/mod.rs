//! Remote action selection through a text completion endpoint.
//!
//! Contract: `POST {"prompt": ..., "model": ...}` answered by `{"text": ...}`,
//! authenticated with a bearer token read from a configurable environment
//! variable. The answer must name exactly one element by its list number.

pub mod mock;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::{ElementKind, ScreenParse, UIElement};

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_TOKEN_ENV: &str = "GUISCOUT_SELECTOR_TOKEN";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(20);
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub endpoint: String,
    /// Environment variable holding the bearer token; unset means no auth header.
    pub token_env: String,
    pub model: String,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub max_retries: u32,
}

impl SelectorConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token_env: DEFAULT_TOKEN_ENV.to_owned(),
            model: DEFAULT_MODEL.to_owned(),
            timeout: DEFAULT_TIMEOUT,
            max_retries: DEFAULT_RETRIES,
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// What the remote model is told about the current screen.
#[derive(Debug, Clone, Copy)]
pub struct SelectorContext<'a> {
    pub parse: &'a ScreenParse,
    pub explored: &'a BTreeSet<String>,
    pub category: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectorError {
    #[error("empty_parse: nothing on screen to choose from")]
    EmptyParse,
    #[error("invalid selector configuration: {0}")]
    Config(String),
    #[error("selector_unavailable: {0}")]
    Unavailable(String),
    #[error("unparseable: response {0:?} names no element number")]
    Unparseable(String),
    #[error("out_of_range: element {choice} requested from a list of {len}")]
    OutOfRange { choice: u64, len: usize },
}

impl SelectorError {
    /// Short machine-readable code used in fallback logs.
    pub fn code(&self) -> &'static str {
        match self {
            SelectorError::EmptyParse => "empty_parse",
            SelectorError::Config(_) | SelectorError::Unavailable(_) => "selector_unavailable",
            SelectorError::Unparseable(_) => "unparseable",
            SelectorError::OutOfRange { .. } => "out_of_range",
        }
    }
}

fn kind_label(kind: ElementKind) -> &'static str {
    kind.as_str()
}

fn element_line(i: usize, e: &UIElement) -> String {
    let b = e.bbox;
    format!("{}. [{}] {} (x={}, y={}, w={}, h={})", i + 1, kind_label(e.kind), e.name, b.x, b.y, b.w, b.h)
}

/// Serializes the context into the prompt sent to the model.
pub fn build_prompt(ctx: &SelectorContext<'_>) -> Result<String, SelectorError> {
    if ctx.parse.elements.is_empty() {
        return Err(SelectorError::EmptyParse);
    }
    let mut p = String::new();
    p.push_str("You are exploring a desktop application to discover as many distinct screens and functions as possible.\n");
    let _ = writeln!(p, "Application category: {}", ctx.category.unwrap_or("unknown"));
    p.push_str("\nElements on the current screen:\n");
    for (i, e) in ctx.parse.elements.iter().enumerate() {
        p.push_str(&element_line(i, e));
        p.push('\n');
    }
    p.push_str("\nElements already explored:\n");
    if ctx.explored.is_empty() {
        p.push_str("(none)\n");
    }
    for name in ctx.explored {
        let _ = writeln!(p, "- {name}");
    }
    p.push_str(
        "\nSelect the element most likely to yield new and diverse outcomes. \
         Answer with exactly one element number from the list and nothing else.\n",
    );
    Ok(p)
}

/// Reads the leading element number out of a model answer.
pub fn parse_choice(text: &str, len: usize) -> Result<usize, SelectorError> {
    let trimmed = text.trim().trim_start_matches(|c: char| !c.is_ascii_digit() && !c.is_alphanumeric());
    let digits: String = trimmed.chars().take_while(char::is_ascii_digit).collect();
    let Ok(choice) = digits.parse::<u64>() else {
        return Err(SelectorError::Unparseable(text.to_owned()));
    };
    match usize::try_from(choice) {
        Ok(n) if (1..=len).contains(&n) => Ok(n - 1),
        _ => Err(SelectorError::OutOfRange { choice, len }),
    }
}

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
    model: &'a str,
}

#[derive(Deserialize)]
struct Response {
    text: String,
}

/// Blocking HTTP client for the selector endpoint.
#[derive(Debug, Clone)]
pub struct RemoteSelector {
    config: SelectorConfig,
    client: reqwest::blocking::Client,
}

impl RemoteSelector {
    pub fn new(config: SelectorConfig) -> Result<Self, SelectorError> {
        if config.timeout.is_zero() {
            return Err(SelectorError::Config("timeout must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| SelectorError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &SelectorConfig {
        &self.config
    }

    fn complete(&self, prompt: &str) -> Result<String, SelectorError> {
        let token = std::env::var(&self.config.token_env).ok();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            let mut req = self.client.post(&self.config.endpoint).json(&Request { prompt, model: &self.config.model });
            if let Some(t) = &token {
                req = req.bearer_auth(t);
            }
            match req.send().and_then(|r| r.error_for_status()).and_then(|r| r.json::<Response>()) {
                Ok(r) => return Ok(r.text),
                Err(e) => {
                    tracing::debug!(attempt, error = %e, "selector request failed");
                    last = e.to_string();
                }
            }
        }
        Err(SelectorError::Unavailable(last))
    }

    /// Asks the model for an element; the returned name is always on screen.
    pub fn select(&self, ctx: &SelectorContext<'_>) -> Result<String, SelectorError> {
        let prompt = build_prompt(ctx)?;
        let text = self.complete(&prompt)?;
        let idx = parse_choice(&text, ctx.parse.elements.len())?;
        Ok(ctx.parse.elements[idx].name.clone())
    }
}

/// [`RemoteSelector::select`] when a client exists, `selector_unavailable` otherwise.
pub fn select_remote(selector: Option<&RemoteSelector>, ctx: &SelectorContext<'_>) -> Result<String, SelectorError> {
    match selector {
        Some(s) => s.select(ctx),
        None => {
            build_prompt(ctx)?;
            Err(SelectorError::Unavailable("no endpoint configured".into()))
        }
    }
}
