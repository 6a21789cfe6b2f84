//! Chat-completion client for the remote bilingual judge.
//!
//! Requests are `{"model": ..., "messages": [{"role": "user", "content": ...}]}`
//! and the answer is read from `choices[0].message.content` (or a top-level
//! `message.content`). Transport failures, non-2xx statuses and unparseable
//! answers are retried with exponential backoff.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::BilingualLabel;
use crate::lang::{Lang, LanguagePair};

pub const DOCUMENT_PLACEHOLDER: &str = "{document}";
pub const LANGUAGES_PLACEHOLDER: &str = "{languages}";
pub const DEFAULT_VERIFY_PROMPT: &str = include_str!("../data/prompts/verify.txt");
pub const DEFAULT_CLASSIFY_PROMPT: &str = include_str!("../data/prompts/classify.txt");

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("invalid judge config: {0}")]
    Config(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("unparseable judge answer: {0:?}")]
    Unparseable(String),
    #[error("judge gave up after {attempts} attempts; last error: {last}")]
    Exhausted { attempts: u32, last: Box<JudgeError> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub verify_prompt_template: String,
    pub classify_prompt_template: String,
    /// Extra attempts after the first.
    pub max_retries: u32,
    pub timeout_secs: f64,
    /// First backoff delay; doubles after each failed attempt.
    pub backoff_ms: u64,
    pub api_key: Option<String>,
    pub headers: BTreeMap<String, String>,
    /// Ask the judge whether a candidate is bilingual instead of using the
    /// heuristic check.
    pub verify_remotely: bool,
    /// Maximum requests in flight.
    pub concurrency: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            endpoint_url: String::new(),
            model_name: "llama-3.3-70b-instruct".into(),
            verify_prompt_template: DEFAULT_VERIFY_PROMPT.into(),
            classify_prompt_template: DEFAULT_CLASSIFY_PROMPT.into(),
            max_retries: 3,
            timeout_secs: 60.0,
            backoff_ms: 500,
            api_key: None,
            headers: BTreeMap::new(),
            verify_remotely: true,
            concurrency: 4,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.endpoint_url.is_empty() {
            return Err(JudgeError::Config("endpoint_url is empty".into()));
        }
        for (name, t) in [
            ("verify_prompt_template", &self.verify_prompt_template),
            ("classify_prompt_template", &self.classify_prompt_template),
        ] {
            let n = t.matches(DOCUMENT_PLACEHOLDER).count();
            if n != 1 {
                return Err(JudgeError::Config(format!(
                    "{name} must contain {DOCUMENT_PLACEHOLDER} exactly once, found {n}"
                )));
            }
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(JudgeError::Config("timeout_secs must be positive".into()));
        }
        Ok(())
    }
}

fn language_name(lang: Lang) -> String {
    match lang.as_str() {
        "en" => "English".into(),
        "de" => "German".into(),
        "es" => "Spanish".into(),
        "fr" => "French".into(),
        other => other.to_string(),
    }
}

pub fn render_prompt(template: &str, pair: LanguagePair, document: &str) -> String {
    let languages = format!("{} and {}", language_name(pair.pivot), language_name(pair.partner));
    // Languages first, so placeholder-like text inside the document survives.
    template
        .replace(LANGUAGES_PLACEHOLDER, &languages)
        .replace(DOCUMENT_PLACEHOLDER, document)
}

/// Upper-case words of an answer, with "code-switching" variants joined.
fn answer_words(answer: &str) -> Vec<String> {
    let upper = answer
        .to_uppercase()
        .replace("CODE-SWITCHING", "CODE_SWITCHING")
        .replace("CODE SWITCHING", "CODE_SWITCHING");
    upper
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Exactly one distinct category token must appear.
pub fn parse_category(answer: &str) -> Option<BilingualLabel> {
    let mut found = None;
    for w in answer_words(answer) {
        let label = match w.as_str() {
            "PARALLEL" => BilingualLabel::Parallel,
            "CODE_SWITCHING" => BilingualLabel::CodeSwitching,
            "MISCELLANEOUS" => BilingualLabel::Miscellaneous,
            _ => continue,
        };
        match found {
            Some(prev) if prev != label => return None,
            _ => found = Some(label),
        }
    }
    found
}

pub fn parse_verdict(answer: &str) -> Option<bool> {
    let mut found = None;
    for w in answer_words(answer) {
        let v = match w.as_str() {
            "YES" => true,
            "NO" => false,
            _ => continue,
        };
        match found {
            Some(prev) if prev != v => return None,
            _ => found = Some(v),
        }
    }
    found
}

fn extract_content(body: &Value) -> Option<&str> {
    body.pointer("/choices/0/message/content")
        .or_else(|| body.pointer("/message/content"))
        .and_then(Value::as_str)
}

pub struct JudgeClient {
    config: JudgeConfig,
    agent: ureq::Agent,
}

impl JudgeClient {
    pub fn new(config: JudgeConfig) -> Result<Self, JudgeError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(JudgeClient { config, agent })
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    fn complete_once(&self, prompt: &str) -> Result<String, JudgeError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let mut req = self.agent.post(&self.config.endpoint_url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        for (k, v) in &self.config.headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send_json(&body).map_err(|e| JudgeError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| JudgeError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(JudgeError::Transport(format!("HTTP {status}")));
        }
        let value: Value = serde_json::from_str(&text).map_err(|_| JudgeError::Unparseable(text.clone()))?;
        extract_content(&value)
            .map(str::to_string)
            .ok_or(JudgeError::Unparseable(text))
    }

    fn ask<T>(&self, prompt: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T, JudgeError> {
        let attempts = self.config.max_retries + 1;
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
            match self.complete_once(prompt) {
                Ok(answer) => match parse(&answer) {
                    Some(v) => return Ok(v),
                    None => last = Some(JudgeError::Unparseable(answer)),
                },
                Err(e) => last = Some(e),
            }
        }
        Err(JudgeError::Exhausted {
            attempts,
            last: Box::new(last.expect("at least one attempt")),
        })
    }

    pub fn verify(&self, document: &str, pair: LanguagePair) -> Result<bool, JudgeError> {
        let prompt = render_prompt(&self.config.verify_prompt_template, pair, document);
        self.ask(&prompt, parse_verdict)
    }

    pub fn classify(&self, document: &str, pair: LanguagePair) -> Result<BilingualLabel, JudgeError> {
        let prompt = render_prompt(&self.config.classify_prompt_template, pair, document);
        self.ask(&prompt, parse_category)
    }
}
