use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{check_output, Denoiser, DenoiserInput};
use crate::dump::RawTensor;
use crate::error::{Error, Result};
use crate::http::{self, RetryPolicy};
use crate::tensor::{TemporalMask, VideoLatent};

pub const ENV_URL: &str = "IFEDIT_BACKEND_URL";
pub const ENV_TIMEOUT_MS: &str = "IFEDIT_BACKEND_TIMEOUT_MS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Upper bound on the serialized request body.
    #[serde(default = "default_max_payload")]
    pub max_payload_bytes: usize,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_payload() -> usize {
    256 << 20
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_ms: default_timeout_ms(),
            retry: RetryPolicy::default(),
            max_payload_bytes: default_max_payload(),
        }
    }

    /// Read `IFEDIT_BACKEND_URL` and `IFEDIT_BACKEND_TIMEOUT_MS`.
    pub fn from_env() -> Result<Self> {
        let url =
            std::env::var(ENV_URL).map_err(|_| Error::Config(format!("{ENV_URL} is not set")))?;
        let mut cfg = Self::new(url);
        if let Ok(ms) = std::env::var(ENV_TIMEOUT_MS) {
            cfg.timeout_ms = ms
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_TIMEOUT_MS}={ms:?} is not an integer")))?;
        }
        Ok(cfg)
    }

    pub fn predict_url(&self) -> String {
        format!("{}/v1/predict", self.base_url.trim_end_matches('/'))
    }
}

/// Wire body of `POST /v1/predict`. Tensors are base64 `IFED` dumps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictRequest {
    pub z: String,
    pub y: String,
    pub m: String,
    pub t: f64,
    pub emb: Vec<f32>,
    /// Original temporal index of each slice; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictResponse {
    pub x0: String,
}

pub(crate) fn encode_tensor(t: &RawTensor) -> String {
    B64.encode(t.to_bytes())
}

pub(crate) fn decode_tensor(field: &str, s: &str) -> Result<RawTensor> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::Protocol(format!("field {field:?} is not base64: {e}")))?;
    RawTensor::from_bytes(&bytes).map_err(|e| Error::Protocol(format!("field {field:?}: {e}")))
}

impl PredictRequest {
    pub fn from_input(input: &DenoiserInput<'_>) -> Self {
        Self {
            z: encode_tensor(&input.z.into()),
            y: encode_tensor(&input.y.into()),
            m: encode_tensor(&input.m.into()),
            t: input.t,
            emb: input.embedding.to_vec(),
            pos: Some(input.positions.to_vec()),
        }
    }

    /// Decode into owned tensors: `(z, y, m, positions)`.
    pub fn decode(&self) -> Result<(VideoLatent, VideoLatent, TemporalMask, Vec<usize>)> {
        let z = decode_tensor("z", &self.z)?.into_latent()?;
        let y = decode_tensor("y", &self.y)?.into_latent()?;
        let m = decode_tensor("m", &self.m)?.into_mask()?;
        let pos = self
            .pos
            .clone()
            .unwrap_or_else(|| (0..z.frames()).collect());
        Ok((z, y, m, pos))
    }
}

impl PredictResponse {
    pub fn from_latent(x0: &VideoLatent) -> Self {
        Self {
            x0: encode_tensor(&x0.into()),
        }
    }
}

/// Client for a model server speaking the predict protocol.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        let client = http::client(Duration::from_millis(config.timeout_ms))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }
}

impl Denoiser for RemoteBackend {
    fn predict(&self, input: &DenoiserInput<'_>) -> Result<VideoLatent> {
        input.validate()?;
        let body = PredictRequest::from_input(input);
        let size = body.z.len() + body.y.len() + body.m.len() + 16 * body.emb.len();
        if size > self.config.max_payload_bytes {
            return Err(Error::argument(format!(
                "request payload of ~{size} bytes exceeds cap of {}",
                self.config.max_payload_bytes
            )));
        }
        let resp: PredictResponse = http::post_json(
            &self.client,
            &self.config.predict_url(),
            None,
            &body,
            &self.config.retry,
        )?;
        let raw = decode_tensor("x0", &resp.x0)?;
        if raw.dims != input.z.dims() {
            return Err(Error::Contract {
                expected: input.z.dims().to_vec(),
                actual: raw.dims,
            });
        }
        let out = raw
            .into_latent()
            .map_err(|e| Error::Protocol(e.to_string()))?;
        check_output(input, &out)?;
        Ok(out)
    }

    fn descriptor(&self) -> String {
        format!("remote({})", self.config.base_url)
    }
}
