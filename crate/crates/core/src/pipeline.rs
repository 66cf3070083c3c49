//! End-to-end editing: prompt, conditioning, denoising with dropout,
//! decoding, sharpest-frame selection and still-video refinement.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{
    AnalyticBackend, AnalyticSpec, CoupledBackend, Denoiser, DenoiserInput, MoeDenoiser,
    MotionProgram, RemoteBackend, RemoteConfig,
};
use crate::codec::{Codec, CodecSpec};
use crate::error::{Error, InPhase, Phase, PipelineError, Result};
use crate::http::RetryPolicy;
use crate::prompt::{self, EnhancedPrompt, VlmConfig};
use crate::scheduler::make_schedule;
use crate::scpr::{self, RefineConfig, SharpnessReport};
use crate::tensor::{Frame, PixelVideo, TemporalMask, VideoLatent};
use crate::tld::{maybe_apply, ComputeLedger, DenoiseState, DropoutPolicy, Trajectory};

/// Which denoiser serves both experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendConfig {
    Analytic {
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default)]
        motion: MotionProgram,
    },
    Coupled {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default)]
        motion: MotionProgram,
    },
    Remote {
        /// Falls back to `IFEDIT_BACKEND_URL` when absent.
        #[serde(default)]
        url: Option<String>,
        #[serde(default)]
        timeout_ms: Option<u64>,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_tau() -> f64 {
    0.5
}

fn default_lambda() -> f64 {
    0.25
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Analytic {
            tau: default_tau(),
            motion: MotionProgram::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditConfig {
    /// Pixel frames generated per edit; must be `1 mod q`.
    pub frames: usize,
    pub steps: usize,
    /// Dropout stride `K`.
    pub stride: usize,
    /// Dropout trigger `T_th`.
    pub threshold: f64,
    pub switch_t: f64,
    pub seed: u64,
    pub codec: CodecSpec,
    pub backend: BackendConfig,
    pub enhance: bool,
    pub refine: bool,
    pub tld: bool,
    pub refinement: RefineConfig,
    pub vlm: Option<VlmConfig>,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            frames: 33,
            steps: 8,
            stride: 3,
            threshold: 0.9,
            switch_t: 0.9,
            seed: 0,
            codec: CodecSpec::default(),
            backend: BackendConfig::default(),
            enhance: true,
            refine: true,
            tld: true,
            refinement: RefineConfig::default(),
            vlm: None,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        self.codec.latent_frames(self.frames).map_err(|_| {
            Error::Config(format!(
                "frames={} must be 1 mod {}",
                self.frames, self.codec.temporal
            ))
        })?;
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride K must be >= 1".into()));
        }
        for (name, v) in [("threshold", self.threshold), ("switch_t", self.switch_t)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name}={v} must lie in (0, 1]")));
            }
        }
        if self.refine {
            self.refinement
                .validate(&self.codec)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config JSON: {e}")))
    }

    /// Seed for the refinement trajectory's noise.
    pub fn refine_seed(&self) -> u64 {
        self.seed ^ 0x5EED_0F5C_9B1E_0001
    }
}

#[derive(Debug, Clone)]
pub struct EditRequest {
    pub input_image: Frame,
    pub instruction: String,
    pub config: EditConfig,
}

/// Where the final frame came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub clip: Trajectory,
    /// Index into that clip's decoded frames.
    pub frame: usize,
}

#[derive(Debug, Clone)]
pub struct EditResult {
    pub output: Frame,
    pub provenance: Provenance,
    /// Decoded edit clip.
    pub clip: PixelVideo,
    pub candidate_range: std::ops::Range<usize>,
    pub candidates: SharpnessReport,
    /// Sharpest candidate, before refinement.
    pub selected: Frame,
    pub refinement: Option<SharpnessReport>,
    pub ledger: ComputeLedger,
    pub prompt: EnhancedPrompt,
    pub final_latent: VideoLatent,
    pub duration: Duration,
}

impl EditResult {
    /// SHA-256 over the output frame's `f32` bits, hex encoded.
    pub fn output_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.output.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-step callback, used for chain-of-frames dumps.
pub trait StepObserver {
    fn on_step(
        &mut self,
        trajectory: Trajectory,
        step: usize,
        t: f64,
        z: &VideoLatent,
        positions: &[usize],
    ) -> Result<()>;
}

struct TrajectoryOutput {
    video: PixelVideo,
    latent: VideoLatent,
}

/// A configured editor. Cheap to share across threads for independent runs.
#[derive(Debug, Clone)]
pub struct Editor {
    config: EditConfig,
    codec: Arc<Codec>,
    moe: MoeDenoiser,
}

impl Editor {
    pub fn new(config: EditConfig) -> Result<Self> {
        config.validate()?;
        let codec = Arc::new(Codec::new(config.codec)?);
        let backend = build_backend(&config, codec.clone())?;
        let moe = MoeDenoiser::shared(backend, config.switch_t);
        Ok(Self { config, codec, moe })
    }

    /// Editor over an explicit denoiser pair.
    pub fn with_moe(config: EditConfig, moe: MoeDenoiser) -> Result<Self> {
        config.validate()?;
        let codec = Arc::new(Codec::new(config.codec)?);
        Ok(Self { config, codec, moe })
    }

    pub fn config(&self) -> &EditConfig {
        &self.config
    }

    pub fn codec(&self) -> &Arc<Codec> {
        &self.codec
    }

    pub fn moe(&self) -> &MoeDenoiser {
        &self.moe
    }

    /// Encoded pseudo-video `[image, 0, ..., 0]` and its observation mask.
    pub fn condition(&self, image: &Frame, frames: usize) -> Result<(VideoLatent, TemporalMask)> {
        let y = self
            .codec
            .encode(&PixelVideo::pseudo_video(image, frames)?)?;
        let m = TemporalMask::first_observed(y.frames(), y.height(), y.width())?;
        Ok((y, m))
    }

    pub fn initial_noise(&self, dims: [usize; 4], seed: u64) -> Result<VideoLatent> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.iter().product();
        let data = (0..n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect::<Vec<f32>>();
        VideoLatent::new(dims, data)
    }

    pub fn edit(&self, image: &Frame, instruction: &str) -> Result<EditResult, PipelineError> {
        self.edit_observed(image, instruction, None)
    }

    pub fn edit_observed(
        &self,
        image: &Frame,
        instruction: &str,
        mut observer: Option<&mut dyn StepObserver>,
    ) -> Result<EditResult, PipelineError> {
        let started = Instant::now();
        let cfg = &self.config;

        let prompt = if cfg.enhance {
            let vlm = cfg.vlm.clone().or_else(VlmConfig::from_env);
            prompt::enhance(image, instruction, vlm.as_ref())
        } else {
            prompt::bypass(instruction)
        }
        .in_phase(Phase::Enhance)?;
        let embedding = prompt::embed(&prompt.temporal_prompt).in_phase(Phase::Enhance)?;

        let mut ledger = ComputeLedger::new();
        let edit = self.trajectory(
            image,
            &embedding,
            cfg.frames,
            cfg.steps,
            cfg.seed,
            Trajectory::Edit,
            &mut ledger,
            reborrow(&mut observer),
        )?;

        let candidate_range =
            scpr::candidate_range(edit.video.len(), &cfg.codec).in_phase(Phase::Select)?;
        let candidates = &edit.video.frames()[candidate_range.clone()];
        let report = scpr::select_sharpest(candidates).in_phase(Phase::Select)?;
        let selected = candidates[report.selected].clone();
        log::debug!(
            "selected candidate {} (clip frame {}) score {:.4}",
            report.selected,
            candidate_range.start + report.selected,
            report.selected_score
        );

        let (output, provenance, refinement) = if cfg.refine {
            let (frame, rep) = self.refine(&selected, &mut ledger, observer)?;
            let prov = Provenance {
                clip: Trajectory::Refine,
                frame: rep.selected,
            };
            (frame, prov, Some(rep))
        } else {
            let prov = Provenance {
                clip: Trajectory::Edit,
                frame: candidate_range.start + report.selected,
            };
            (selected.clone(), prov, None)
        };
        log::info!(
            "final frame from {:?} clip frame {}",
            provenance.clip,
            provenance.frame
        );

        Ok(EditResult {
            output,
            provenance,
            clip: edit.video,
            candidate_range,
            candidates: report,
            selected,
            refinement,
            ledger,
            prompt,
            final_latent: edit.latent,
            duration: started.elapsed(),
        })
    }

    /// Re-run the editor on `x_star` with the still prompt and return the
    /// sharpest frame of the resulting clip.
    pub fn refine(
        &self,
        x_star: &Frame,
        ledger: &mut ComputeLedger,
        observer: Option<&mut dyn StepObserver>,
    ) -> Result<(Frame, SharpnessReport), PipelineError> {
        let rc = &self.config.refinement;
        rc.validate(&self.config.codec).in_phase(Phase::Refine)?;
        let embedding = prompt::embed(&rc.still_prompt).in_phase(Phase::Refine)?;
        let out = self.trajectory(
            x_star,
            &embedding,
            rc.frames,
            rc.steps,
            self.config.refine_seed(),
            Trajectory::Refine,
            ledger,
            observer,
        )?;
        let report = scpr::select_sharpest(out.video.frames()).in_phase(Phase::Refine)?;
        Ok((out.video.frame(report.selected).clone(), report))
    }

    #[allow(clippy::too_many_arguments)]
    fn trajectory(
        &self,
        image: &Frame,
        embedding: &[f32],
        frames: usize,
        steps: usize,
        seed: u64,
        kind: Trajectory,
        ledger: &mut ComputeLedger,
        mut observer: Option<&mut dyn StepObserver>,
    ) -> Result<TrajectoryOutput, PipelineError> {
        let phase_of = |p| {
            if kind == Trajectory::Refine {
                Phase::Refine
            } else {
                p
            }
        };
        let (y, m) = self
            .condition(image, frames)
            .in_phase(phase_of(Phase::Condition))?;
        let z = self
            .initial_noise(y.dims(), seed)
            .in_phase(phase_of(Phase::Noise))?;
        let mut state = DenoiseState::new(z, y, m).in_phase(phase_of(Phase::Condition))?;
        let tld = match kind {
            Trajectory::Edit => self.config.tld,
            Trajectory::Refine => self.config.refinement.tld,
        };
        let mut policy = if tld {
            Some(
                DropoutPolicy::new(self.config.stride, self.config.threshold)
                    .in_phase(phase_of(Phase::Denoise))?,
            )
        } else {
            None
        };
        let schedule = make_schedule(steps).in_phase(phase_of(Phase::Denoise))?;

        for (i, (t, t_next)) in schedule.transitions().enumerate() {
            let mut step = || -> Result<()> {
                if let Some(p) = policy.as_mut() {
                    if maybe_apply(&mut state, p, t)? {
                        log::debug!(
                            "{kind:?} step {i}: dropout kept positions {:?}",
                            state.positions
                        );
                    }
                }
                let input = DenoiserInput {
                    z: &state.z,
                    y: &state.y,
                    m: &state.m,
                    t,
                    embedding,
                    positions: &state.positions,
                };
                let (x0, expert) = self.moe.predict_routed(&input)?;
                let next = crate::scheduler::euler_step(&state.z, &x0, t, t_next)?;
                ledger.record(kind, t, expert, next.frames(), next.sites());
                state.z = next;
                Ok(())
            };
            step().in_phase(phase_of(Phase::Denoise))?;
            if let Some(obs) = reborrow(&mut observer) {
                obs.on_step(kind, i, t, &state.z, &state.positions)
                    .in_phase(Phase::Output)?;
            }
        }

        let video = self
            .codec
            .decode(&state.z)
            .in_phase(phase_of(Phase::Decode))?;
        Ok(TrajectoryOutput {
            video,
            latent: state.z,
        })
    }
}

fn reborrow<'s>(o: &'s mut Option<&mut dyn StepObserver>) -> Option<&'s mut dyn StepObserver> {
    match o {
        Some(x) => Some(&mut **x),
        None => None,
    }
}

fn build_backend(config: &EditConfig, codec: Arc<Codec>) -> Result<Arc<dyn Denoiser>> {
    Ok(match &config.backend {
        BackendConfig::Analytic { tau, motion } => Arc::new(AnalyticBackend::new(
            AnalyticSpec {
                tau: *tau,
                motion: *motion,
                seed: config.seed,
            },
            codec,
        )?),
        BackendConfig::Coupled {
            lambda,
            tau,
            motion,
        } => {
            let inner = AnalyticBackend::new(
                AnalyticSpec {
                    tau: *tau,
                    motion: *motion,
                    seed: config.seed,
                },
                codec,
            )?;
            Arc::new(CoupledBackend::new(inner, *lambda).map_err(|e| Error::Config(e.to_string()))?)
        }
        BackendConfig::Remote {
            url,
            timeout_ms,
            retry,
        } => {
            let mut rc = match url {
                Some(u) => RemoteConfig::new(u.clone()),
                None => RemoteConfig::from_env()?,
            };
            if let Some(ms) = timeout_ms {
                rc.timeout_ms = *ms;
            }
            rc.retry = *retry;
            Arc::new(RemoteBackend::new(rc)?)
        }
    })
}

/// Build an editor for `request.config` and run it.
pub fn edit(request: &EditRequest) -> Result<EditResult, PipelineError> {
    if request.instruction.trim().is_empty() {
        return Err(PipelineError::new(
            Phase::Enhance,
            Error::argument("instruction is empty"),
        ));
    }
    request
        .config
        .codec
        .check_spatial(request.input_image.height(), request.input_image.width())
        .in_phase(Phase::Condition)?;
    let editor = Editor::new(request.config.clone()).in_phase(Phase::Condition)?;
    editor.edit(&request.input_image, &request.instruction)
}
