//! Instruction-driven image editing on top of an image-to-video denoiser.
//!
//! The input image becomes frame 0 of a pseudo-video, a two-expert sampler
//! denoises the clip, temporal latents are thinned once the high-noise
//! phase ends, and the sharpest late frame is cleaned up by a short
//! still-video pass through the same model.
//!
//! ```text
//! image + instruction
//!   -> prompt::enhance -> prompt::embed
//!   -> codec::encode([image, 0, ...]) + mask
//!   -> for t in schedule: tld::maybe_apply, MoeDenoiser, euler_step
//!   -> codec::decode -> scpr::select_sharpest -> refine
//! ```

pub mod backends;
pub mod codec;
pub mod dump;
pub mod error;
pub mod harness;
mod http;
pub mod image_io;
pub mod pipeline;
pub mod prompt;
pub mod scheduler;
pub mod scpr;
pub mod stub;
pub mod tensor;
pub mod tld;

pub use backends::{Denoiser, DenoiserInput, MoeDenoiser};
pub use codec::{Codec, CodecSpec};
pub use error::{Error, Phase, PipelineError, Result};
pub use http::RetryPolicy;
pub use pipeline::{edit, BackendConfig, EditConfig, EditRequest, EditResult, Editor};
pub use scheduler::{ExpertPhase, NoiseSchedule};
pub use tensor::{Frame, PixelVideo, TemporalMask, VideoLatent};
pub use tld::{ComputeLedger, Trajectory};
