use std::sync::Arc;

use super::{Denoiser, DenoiserInput};
use crate::error::Result;
use crate::scheduler::{expert_for, ExpertPhase};
use crate::tensor::VideoLatent;

/// Two experts split at `switch_t`: `high` for `t > switch_t`, `low` otherwise.
#[derive(Clone)]
pub struct MoeDenoiser {
    pub high: Arc<dyn Denoiser>,
    pub low: Arc<dyn Denoiser>,
    pub switch_t: f64,
}

impl std::fmt::Debug for MoeDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MoeDenoiser")
            .field("high", &self.high.descriptor())
            .field("low", &self.low.descriptor())
            .field("switch_t", &self.switch_t)
            .finish()
    }
}

impl MoeDenoiser {
    pub fn new(high: Arc<dyn Denoiser>, low: Arc<dyn Denoiser>, switch_t: f64) -> Self {
        Self {
            high,
            low,
            switch_t,
        }
    }

    /// Both roles served by one backend.
    pub fn shared(backend: Arc<dyn Denoiser>, switch_t: f64) -> Self {
        Self::new(backend.clone(), backend, switch_t)
    }

    /// Predict and report which expert ran.
    pub fn predict_routed(&self, input: &DenoiserInput<'_>) -> Result<(VideoLatent, ExpertPhase)> {
        let phase = expert_for(input.t, self.switch_t);
        let expert = match phase {
            ExpertPhase::HighNoise => &self.high,
            ExpertPhase::LowNoise => &self.low,
        };
        Ok((expert.predict(input)?, phase))
    }
}

impl Denoiser for MoeDenoiser {
    fn predict(&self, input: &DenoiserInput<'_>) -> Result<VideoLatent> {
        self.predict_routed(input).map(|(x, _)| x)
    }

    fn descriptor(&self) -> String {
        format!(
            "moe(high={}, low={}, switch_t={})",
            self.high.descriptor(),
            self.low.descriptor(),
            self.switch_t
        )
    }
}
