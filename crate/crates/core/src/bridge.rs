//! Optional external-service client for real prompt compression and
//! similarity scoring. The synthetic fidelity model is the default
//! everywhere; nothing else in the crate blocks on this module, and the
//! test suite drives it exclusively through recorded fixtures.
//!
//! Wire protocol: two JSON POST routes.
//!   POST /compress  {"text": string, "target_ratio": real}
//!              ->   {"text": string, "original_tokens": int, "compressed_tokens": int}
//!   POST /score     {"a": string, "b": string}
//!              ->   {"score": real}

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeConfig {
    pub compress_endpoint_url: String,
    pub score_endpoint_url: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    #[serde(default)]
    pub auth_token: Option<String>,
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_s > 0.0) {
            return Err(Error::Bridge("timeout_s must be > 0".into()));
        }
        for url in [&self.compress_endpoint_url, &self.score_endpoint_url] {
            if !(url.starts_with("http://") || url.starts_with("https://")) {
                return Err(Error::Bridge(format!("malformed endpoint url: {url}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionResult {
    pub compressed_text: String,
    pub original_tokens: u32,
    pub compressed_tokens: u32,
    pub achieved_kappa: f64,
}

/// A transient failure is retried; anything else is final.
#[derive(Debug)]
pub enum TransportError {
    Transient(String),
    Fatal(String),
}

/// The one seam between the client logic and the network. Production uses
/// HTTP; tests use canned fixtures.
pub trait Transport {
    fn post_json(
        &self,
        url: &str,
        body: &Value,
        timeout_s: f64,
        auth_token: Option<&str>,
    ) -> std::result::Result<Value, TransportError>;
}

/// Blocking HTTP transport.
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        body: &Value,
        timeout_s: f64,
        auth_token: Option<&str>,
    ) -> std::result::Result<Value, TransportError> {
        let mut req = ureq::post(url)
            .timeout(std::time::Duration::from_secs_f64(timeout_s));
        if let Some(token) = auth_token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| TransportError::Fatal(format!("malformed response body: {e}"))),
            Err(ureq::Error::Status(code, _)) if (500..600).contains(&code) => {
                Err(TransportError::Transient(format!("server error {code}")))
            }
            Err(ureq::Error::Status(code, _)) => {
                Err(TransportError::Fatal(format!("http status {code}")))
            }
            Err(ureq::Error::Transport(t)) => Err(TransportError::Transient(t.to_string())),
        }
    }
}

pub struct BridgeClient<T: Transport> {
    config: BridgeConfig,
    transport: T,
    /// Warnings accumulated from tolerated anomalies (clamped scores,
    /// off-target ratios).
    pub warnings: Vec<String>,
}

impl<T: Transport> BridgeClient<T> {
    pub fn new(config: BridgeConfig, transport: T) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, transport, warnings: Vec::new() })
    }

    fn post_with_retries(&self, url: &str, body: &Value) -> Result<Value> {
        let mut last_err = String::new();
        for _ in 0..=self.config.max_retries {
            match self.transport.post_json(
                url,
                body,
                self.config.timeout_s,
                self.config.auth_token.as_deref(),
            ) {
                Ok(v) => return Ok(v),
                Err(TransportError::Transient(e)) => last_err = e,
                Err(TransportError::Fatal(e)) => return Err(Error::Bridge(e)),
            }
        }
        Err(Error::Bridge(format!(
            "gave up after {} retries: {last_err}",
            self.config.max_retries
        )))
    }

    /// Requests compression toward `target_kappa`. A target of 1 is a
    /// bypass: the input is returned unchanged with no network call.
    /// Achieved ratios more than 20% (relative) off target are reported as
    /// warnings, not failures.
    pub fn compress(&mut self, prompt_text: &str, target_kappa: f64) -> Result<CompressionResult> {
        if prompt_text.is_empty() {
            return Err(Error::Bridge("empty prompt".into()));
        }
        if !(target_kappa > 0.0 && target_kappa <= 1.0) {
            return Err(Error::Bridge(format!("target_kappa {target_kappa} outside (0, 1]")));
        }
        if target_kappa >= 1.0 {
            let tokens = prompt_text.split_whitespace().count().max(1) as u32;
            return Ok(CompressionResult {
                compressed_text: prompt_text.to_string(),
                original_tokens: tokens,
                compressed_tokens: tokens,
                achieved_kappa: 1.0,
            });
        }

        let body = serde_json::json!({ "text": prompt_text, "target_ratio": target_kappa });
        let resp = self.post_with_retries(&self.config.compress_endpoint_url, &body)?;

        let text = resp
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Bridge("response missing 'text'".into()))?
            .to_string();
        let original = resp
            .get("original_tokens")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Bridge("response missing 'original_tokens'".into()))?;
        let compressed = resp
            .get("compressed_tokens")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Bridge("response missing 'compressed_tokens'".into()))?;
        if original == 0 || compressed == 0 || compressed > original {
            return Err(Error::Bridge(format!(
                "implausible token counts: {compressed}/{original}"
            )));
        }
        let achieved = compressed as f64 / original as f64;
        if (achieved - target_kappa).abs() / target_kappa > 0.2 {
            self.warnings.push(format!(
                "achieved kappa {achieved:.4} more than 20% off target {target_kappa:.4}"
            ));
        }
        Ok(CompressionResult {
            compressed_text: text,
            original_tokens: original as u32,
            compressed_tokens: compressed as u32,
            achieved_kappa: achieved,
        })
    }

    /// Scores two texts in [0, 1]. Out-of-range server scores are clamped
    /// with a warning.
    pub fn score_similarity(&mut self, text_a: &str, text_b: &str) -> Result<f64> {
        if text_a.is_empty() || text_b.is_empty() {
            return Err(Error::Bridge("empty text".into()));
        }
        let body = serde_json::json!({ "a": text_a, "b": text_b });
        let resp = self.post_with_retries(&self.config.score_endpoint_url, &body)?;
        let score = resp
            .get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Bridge("response missing 'score'".into()))?;
        if !(0.0..=1.0).contains(&score) {
            self.warnings
                .push(format!("server score {score} outside [0,1]; clamped"));
        }
        Ok(score.clamp(0.0, 1.0))
    }
}
