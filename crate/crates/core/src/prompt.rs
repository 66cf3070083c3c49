//! Instruction rewriting and prompt embeddings.
//!
//! A vision-language model turns a static instruction into a prompt that
//! narrates the edit as a process. Without an endpoint, or when the call
//! fails, a fixed template is used instead.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::backends::EMBEDDING_DIM;
use crate::error::{Error, Result};
use crate::http::{self, RetryPolicy};
use crate::image_io;
use crate::tensor::Frame;

pub const DEFAULT_SYSTEM_PROMPT: &str = include_str!("../assets/cot_system_prompt.txt");
pub const FALLBACK_REASONING: &str = "[offline template: no vision-language model consulted]";
pub const BYPASS_REASONING: &str = "[enhancement disabled: instruction used verbatim]";

pub const ENV_URL: &str = "IFEDIT_VLM_URL";
pub const ENV_MODEL: &str = "IFEDIT_VLM_MODEL";
pub const ENV_KEY: &str = "IFEDIT_VLM_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptSource {
    Remote,
    Fallback,
    /// Enhancement switched off; the raw instruction is the prompt.
    Bypass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedPrompt {
    pub original: String,
    pub reasoning: String,
    pub temporal_prompt: String,
    pub source: PromptSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_system_prompt")]
    pub system_prompt: String,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_system_prompt() -> String {
    DEFAULT_SYSTEM_PROMPT.to_string()
}

impl VlmConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout_ms: default_timeout_ms(),
            retry: RetryPolicy::default(),
            system_prompt: default_system_prompt(),
        }
    }

    /// `None` when `IFEDIT_VLM_URL` is unset.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_URL).ok().filter(|u| !u.is_empty())?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".to_string());
        let mut cfg = Self::new(url, model);
        cfg.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Some(cfg)
    }

    pub fn completions_url(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.base_url.trim_end_matches('/')
        )
    }
}

pub fn fallback_prompt(instruction: &str) -> String {
    format!(
        "The scene evolves continuously over time: {instruction} The camera and unrelated scene elements remain unchanged throughout."
    )
}

/// Prompt built from the template alone.
pub fn fallback(instruction: &str) -> EnhancedPrompt {
    EnhancedPrompt {
        original: instruction.to_string(),
        reasoning: FALLBACK_REASONING.to_string(),
        temporal_prompt: fallback_prompt(instruction),
        source: PromptSource::Fallback,
    }
}

/// The instruction passed through untouched.
pub fn bypass(instruction: &str) -> Result<EnhancedPrompt> {
    if instruction.trim().is_empty() {
        return Err(Error::argument("instruction is empty"));
    }
    Ok(EnhancedPrompt {
        original: instruction.to_string(),
        reasoning: BYPASS_REASONING.to_string(),
        temporal_prompt: instruction.to_string(),
        source: PromptSource::Bypass,
    })
}

/// Split a `REASONING: ... PROMPT: ...` reply.
pub fn parse_reply(content: &str) -> Result<(String, String)> {
    let r = content
        .find("REASONING:")
        .ok_or_else(|| Error::Protocol("reply has no REASONING: section".into()))?;
    let p = content
        .find("PROMPT:")
        .ok_or_else(|| Error::Protocol("reply has no PROMPT: section".into()))?;
    if p < r {
        return Err(Error::Protocol("PROMPT: precedes REASONING:".into()));
    }
    let reasoning = content[r + "REASONING:".len()..p].trim().to_string();
    let prompt = content[p + "PROMPT:".len()..].trim().to_string();
    if prompt.is_empty() {
        return Err(Error::Protocol("empty PROMPT: section".into()));
    }
    Ok((reasoning, prompt))
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: String,
}

fn request_body(cfg: &VlmConfig, image: &Frame, instruction: &str) -> serde_json::Value {
    let data_url = format!(
        "data:image/png;base64,{}",
        B64.encode(image_io::encode_png(image))
    );
    json!({
        "model": cfg.model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": cfg.system_prompt},
            {"role": "user", "content": [
                {"type": "image_url", "image_url": {"url": data_url}},
                {"type": "text", "text": format!("Instruction: {instruction}")},
            ]},
        ],
    })
}

fn call_remote(cfg: &VlmConfig, image: &Frame, instruction: &str) -> Result<(String, String)> {
    let client = http::client(Duration::from_millis(cfg.timeout_ms))?;
    let resp: ChatResponse = http::post_json(
        &client,
        &cfg.completions_url(),
        cfg.api_key.as_deref(),
        &request_body(cfg, image, instruction),
        &cfg.retry,
    )?;
    let content = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::Protocol("reply has no choices".into()))?
        .message
        .content;
    parse_reply(&content)
}

/// Rewrite `instruction` into a temporal prompt. Never fails for a non-empty
/// instruction: remote errors fall back to the template.
pub fn enhance(
    image: &Frame,
    instruction: &str,
    endpoint: Option<&VlmConfig>,
) -> Result<EnhancedPrompt> {
    if instruction.trim().is_empty() {
        return Err(Error::argument("instruction is empty"));
    }
    let Some(cfg) = endpoint else {
        return Ok(fallback(instruction));
    };
    match call_remote(cfg, image, instruction) {
        Ok((reasoning, temporal_prompt)) => Ok(EnhancedPrompt {
            original: instruction.to_string(),
            reasoning,
            temporal_prompt,
            source: PromptSource::Remote,
        }),
        Err(e) => {
            log::warn!("prompt enhancement failed, using template: {e}");
            Ok(fallback(instruction))
        }
    }
}

/// Deterministic 64-d embedding in `[-1, 1]` from SHA-256 of the text.
pub fn embed(text: &str) -> Result<Vec<f32>> {
    if text.is_empty() {
        return Err(Error::argument("cannot embed empty text"));
    }
    let mut out = Vec::with_capacity(EMBEDDING_DIM);
    let mut block = 0u32;
    while out.len() < EMBEDDING_DIM {
        let mut h = Sha256::new();
        h.update(b"ifedit-embed-v1");
        h.update(block.to_le_bytes());
        h.update(text.as_bytes());
        for word in h.finalize().chunks_exact(4) {
            let u = u32::from_le_bytes([word[0], word[1], word[2], word[3]]);
            out.push((u as f64 / u32::MAX as f64 * 2.0 - 1.0) as f32);
        }
        block += 1;
    }
    out.truncate(EMBEDDING_DIM);
    Ok(out)
}
