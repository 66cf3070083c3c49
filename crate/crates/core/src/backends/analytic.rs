use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_output, Denoiser, DenoiserInput};
use crate::codec::Codec;
use crate::error::{Error, Result};
use crate::scheduler::Step;
use crate::tensor::VideoLatent;

/// How the target latent evolves over latent frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MotionProgram {
    /// Every frame repeats the conditioning frame.
    Identity,
    /// Frame `j` is the conditioning frame translated by `j * v` latent sites,
    /// with `v` drawn from a hash of the prompt embedding and seed, each
    /// component in `[-max_step, max_step]`.
    Seeded { max_step: usize },
}

impl Default for MotionProgram {
    fn default() -> Self {
        MotionProgram::Seeded { max_step: 1 }
    }
}

impl MotionProgram {
    /// Per-frame velocity `(dy, dx)` in latent sites.
    pub fn velocity(&self, embedding: &[f32], seed: u64) -> (isize, isize) {
        match *self {
            MotionProgram::Identity => (0, 0),
            MotionProgram::Seeded { max_step: 0 } => (0, 0),
            MotionProgram::Seeded { max_step } => {
                let mut h = Sha256::new();
                h.update(b"ifedit-motion");
                h.update(seed.to_le_bytes());
                for v in embedding {
                    h.update(v.to_le_bytes());
                }
                let d = h.finalize();
                let span = 2 * max_step as u64 + 1;
                let pick = |b: &[u8]| {
                    let x = u64::from_le_bytes(b.try_into().unwrap());
                    (x % span) as isize - max_step as isize
                };
                let (dy, dx) = (pick(&d[0..8]), pick(&d[8..16]));
                if dy == 0 && dx == 0 {
                    (0, max_step as isize)
                } else {
                    (dy, dx)
                }
            }
        }
    }
}

/// Prior `z0 ~ N(mu_c, tau^2 I)` around a target built from the conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSpec {
    pub tau: f64,
    #[serde(default)]
    pub motion: MotionProgram,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AnalyticSpec {
    fn default() -> Self {
        Self {
            tau: 0.5,
            motion: MotionProgram::default(),
            seed: 0,
        }
    }
}

/// Posterior mean `E[z0 | z_t]` for `z_t = alpha z0 + sigma eps`, elementwise.
pub fn posterior_mean(
    mu: &VideoLatent,
    z_t: &VideoLatent,
    tau: f64,
    t: f64,
) -> Result<VideoLatent> {
    mu.ensure_same_dims(z_t)?;
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::argument(format!(
            "prior std must be finite and >= 0, got {tau}"
        )));
    }
    let Step { alpha, sigma, .. } = Step::at(t);
    let denom = alpha * alpha * tau * tau + sigma * sigma;
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "posterior undefined at t={t} with tau={tau}"
        )));
    }
    let gain = alpha * tau * tau / denom;
    let data = mu
        .data()
        .iter()
        .zip(z_t.data())
        .map(|(&m, &z)| {
            let m = m as f64;
            (m + gain * (z as f64 - alpha * m)) as f32
        })
        .collect();
    VideoLatent::new(mu.dims(), data)
}

/// The Gaussian-posterior oracle denoiser.
#[derive(Debug, Clone)]
pub struct AnalyticBackend {
    spec: AnalyticSpec,
    codec: Arc<Codec>,
}

impl AnalyticBackend {
    pub fn new(spec: AnalyticSpec, codec: Arc<Codec>) -> Result<Self> {
        if !spec.tau.is_finite() || spec.tau < 0.0 {
            return Err(Error::Config(format!(
                "tau must be finite and >= 0, got {}",
                spec.tau
            )));
        }
        Ok(Self { spec, codec })
    }

    pub fn spec(&self) -> &AnalyticSpec {
        &self.spec
    }

    /// `mu_c` for the slices in `positions`: slice 0 of `y` at position 0, and
    /// the still-lifted, translated slice 0 elsewhere.
    pub fn target_latent(
        &self,
        y: &VideoLatent,
        positions: &[usize],
        embedding: &[f32],
    ) -> Result<VideoLatent> {
        if positions.first() != Some(&0) {
            return Err(Error::argument(
                "conditioning slice 0 must be retained to build the target",
            ));
        }
        let first = y.slice(0)?;
        let lifted = self.codec.lift_still(&first)?;
        let (vy, vx) = self.spec.motion.velocity(embedding, self.spec.seed);
        let [c, _, h, w] = y.dims();
        let sites = h * w;
        let mut data = vec![0.0f32; c * positions.len() * sites];
        for (i, &pos) in positions.iter().enumerate() {
            let src = if pos == 0 { &first } else { &lifted };
            let (dy, dx) = (pos as isize * vy, pos as isize * vx);
            for ch in 0..c {
                let dst = &mut data[(ch * positions.len() + i) * sites..][..sites];
                roll_plane(
                    src.plane(ch, 0),
                    dst,
                    h,
                    w,
                    if pos == 0 { 0 } else { dy },
                    if pos == 0 { 0 } else { dx },
                );
            }
        }
        VideoLatent::new([c, positions.len(), h, w], data)
    }
}

fn roll_plane(src: &[f32], dst: &mut [f32], h: usize, w: usize, dy: isize, dx: isize) {
    let (hi, wi) = (h as isize, w as isize);
    for y in 0..hi {
        let sy = (y - dy).rem_euclid(hi) as usize;
        for x in 0..wi {
            let sx = (x - dx).rem_euclid(wi) as usize;
            dst[y as usize * w + x as usize] = src[sy * w + sx];
        }
    }
}

impl Denoiser for AnalyticBackend {
    fn predict(&self, input: &DenoiserInput<'_>) -> Result<VideoLatent> {
        input.validate()?;
        let mu = self.target_latent(input.y, input.positions, input.embedding)?;
        let out = posterior_mean(&mu, input.z, self.spec.tau, input.t)?;
        check_output(input, &out)?;
        Ok(out)
    }

    fn descriptor(&self) -> String {
        format!(
            "analytic(tau={}, motion={:?})",
            self.spec.tau, self.spec.motion
        )
    }
}
