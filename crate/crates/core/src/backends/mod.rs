//! Denoiser backends.
//!
//! Every backend predicts the clean latent `x0` from a noisy latent and its
//! conditioning. [`AnalyticBackend`] is a closed-form Gaussian posterior
//! mean, [`CoupledBackend`] adds cross-frame averaging on top of it,
//! [`RemoteBackend`] forwards to a model server and [`MoeDenoiser`] routes
//! between two experts by timestep.

mod analytic;
mod coupled;
mod moe;
mod remote;

use crate::error::{Error, Result};
use crate::tensor::{concat_channels, TemporalMask, VideoLatent};

pub use analytic::{posterior_mean, AnalyticBackend, AnalyticSpec, MotionProgram};
pub use coupled::{temporal_smooth, CoupledBackend};
pub use moe::MoeDenoiser;
pub use remote::{PredictRequest, PredictResponse, RemoteBackend, RemoteConfig};

/// Length of the prompt embedding vector.
pub const EMBEDDING_DIM: usize = 64;

/// Arguments of one denoiser call.
///
/// `positions[j]` is the original temporal index of slice `j`; it is the
/// identity before temporal dropout and the retained index list after.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserInput<'a> {
    pub z: &'a VideoLatent,
    pub y: &'a VideoLatent,
    pub m: &'a TemporalMask,
    pub t: f64,
    pub embedding: &'a [f32],
    pub positions: &'a [usize],
}

impl DenoiserInput<'_> {
    pub fn validate(&self) -> Result<()> {
        let zd = self.z.dims();
        let yd = self.y.dims();
        for (i, axis) in ["temporal", "height", "width"].into_iter().enumerate() {
            if zd[i + 1] != yd[i + 1] {
                return Err(Error::Shape {
                    axis,
                    expected: zd[i + 1],
                    actual: yd[i + 1],
                });
            }
        }
        let md = self.m.dims();
        if md != [zd[1], zd[2], zd[3]] {
            return Err(Error::Shape {
                axis: "mask",
                expected: zd[1],
                actual: md[0],
            });
        }
        if self.positions.len() != zd[1] {
            return Err(Error::Shape {
                axis: "positions",
                expected: zd[1],
                actual: self.positions.len(),
            });
        }
        if !(self.t > 0.0 && self.t <= 1.0) {
            return Err(Error::argument(format!(
                "timestep {} outside (0, 1]",
                self.t
            )));
        }
        Ok(())
    }

    /// The backbone input `[z | y | m]`.
    pub fn packed(&self) -> Result<VideoLatent> {
        concat_channels(self.z, self.y, self.m)
    }
}

/// A clean-latent predictor. Implementations are deterministic and callable
/// from several threads at once.
pub trait Denoiser: Send + Sync {
    fn predict(&self, input: &DenoiserInput<'_>) -> Result<VideoLatent>;

    fn descriptor(&self) -> String;
}

impl<D: Denoiser + ?Sized> Denoiser for std::sync::Arc<D> {
    fn predict(&self, input: &DenoiserInput<'_>) -> Result<VideoLatent> {
        (**self).predict(input)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

pub(crate) fn check_output(input: &DenoiserInput<'_>, out: &VideoLatent) -> Result<()> {
    if out.dims() != input.z.dims() {
        return Err(Error::Contract {
            expected: input.z.dims().to_vec(),
            actual: out.dims().to_vec(),
        });
    }
    Ok(())
}
