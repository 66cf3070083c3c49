use super::{AnalyticBackend, Denoiser, DenoiserInput};
use crate::error::{Error, Result};
use crate::tensor::VideoLatent;

/// `slice_j <- (1 - lambda) slice_j + lambda * mean(slice_{j-1}, slice_{j+1})`,
/// with neighbor indices clamped to the valid range.
pub fn temporal_smooth(x: &VideoLatent, lambda: f64) -> Result<VideoLatent> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::argument(format!(
            "coupling must lie in [0, 1), got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(x.clone());
    }
    let [c, f, _, _] = x.dims();
    let s = x.sites();
    let lam = lambda as f32;
    let mut data = Vec::with_capacity(x.data().len());
    for ch in 0..c {
        for j in 0..f {
            let prev = x.plane(ch, j.saturating_sub(1));
            let next = x.plane(ch, (j + 1).min(f - 1));
            let cur = x.plane(ch, j);
            data.extend((0..s).map(|i| (1.0 - lam) * cur[i] + lam * 0.5 * (prev[i] + next[i])));
        }
    }
    VideoLatent::new(x.dims(), data)
}

/// Analytic posterior followed by cross-frame averaging, so retained slices
/// depend on their temporal neighbors.
#[derive(Debug, Clone)]
pub struct CoupledBackend {
    inner: AnalyticBackend,
    lambda: f64,
}

impl CoupledBackend {
    pub fn new(inner: AnalyticBackend, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::argument(format!(
                "coupling must lie in [0, 1), got {lambda}"
            )));
        }
        Ok(Self { inner, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Denoiser for CoupledBackend {
    fn predict(&self, input: &DenoiserInput<'_>) -> Result<VideoLatent> {
        let x0 = self.inner.predict(input)?;
        temporal_smooth(&x0, self.lambda)
    }

    fn descriptor(&self) -> String {
        format!(
            "coupled(lambda={}, {})",
            self.lambda,
            self.inner.descriptor()
        )
    }
}
