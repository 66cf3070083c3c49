//! Temporal latent dropout: one-shot temporal subsampling of the denoising
//! state once `t <= threshold`, plus token accounting.
//!
//! Index 0 (the observed frame) and the final index (the edit target) are
//! always retained.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::{make_schedule, ExpertPhase};
use crate::tensor::{temporal_select, TemporalMask, VideoLatent};

/// `{0, K, 2K, ...} ∩ [0, frames) ∪ {frames - 1}`, sorted.
pub fn dropout_indices(frames: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::argument("dropout stride must be >= 1"));
    }
    if frames == 0 {
        return Err(Error::argument("dropout needs at least one latent frame"));
    }
    let mut idx: Vec<usize> = (0..frames).step_by(stride).collect();
    if *idx.last().unwrap() != frames - 1 {
        idx.push(frames - 1);
    }
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutPolicy {
    pub stride: usize,
    pub threshold: f64,
    applied: bool,
}

impl DropoutPolicy {
    pub fn new(stride: usize, threshold: f64) -> Result<Self> {
        if stride == 0 {
            return Err(Error::argument("dropout stride must be >= 1"));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::argument(format!(
                "dropout threshold must lie in (0, 1], got {threshold}"
            )));
        }
        Ok(Self {
            stride,
            threshold,
            applied: false,
        })
    }

    pub fn applied(&self) -> bool {
        self.applied
    }
}

/// The tensors carried through the denoising loop.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseState {
    pub z: VideoLatent,
    pub y: VideoLatent,
    pub m: TemporalMask,
    /// Original temporal index of each current slice.
    pub positions: Vec<usize>,
}

impl DenoiseState {
    pub fn new(z: VideoLatent, y: VideoLatent, m: TemporalMask) -> Result<Self> {
        let (zd, yd) = (z.dims(), y.dims());
        for (i, axis) in ["temporal", "height", "width"].into_iter().enumerate() {
            if zd[i + 1] != yd[i + 1] {
                return Err(Error::Shape {
                    axis,
                    expected: zd[i + 1],
                    actual: yd[i + 1],
                });
            }
        }
        if m.dims() != [z.frames(), z.height(), z.width()] {
            return Err(Error::Shape {
                axis: "mask",
                expected: z.frames(),
                actual: m.frames(),
            });
        }
        let positions = (0..z.frames()).collect();
        Ok(Self { z, y, m, positions })
    }

    fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            z: temporal_select(&self.z, indices)?,
            y: temporal_select(&self.y, indices)?,
            m: self.m.select(indices)?,
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
        })
    }
}

/// Subsample `state` in place if the trigger fires. Returns whether it did.
pub fn maybe_apply(state: &mut DenoiseState, policy: &mut DropoutPolicy, t: f64) -> Result<bool> {
    if policy.applied || t > policy.threshold {
        return Ok(false);
    }
    let indices = dropout_indices(state.z.frames(), policy.stride)?;
    *state = state.select(&indices)?;
    policy.applied = true;
    Ok(true)
}

/// `(baseline, reduced)` token-steps for one trajectory.
pub fn predicted_token_steps(
    frames: usize,
    steps: usize,
    threshold: f64,
    stride: usize,
    height: usize,
    width: usize,
) -> Result<(u64, u64)> {
    let schedule = make_schedule(steps)?;
    let sites = (height * width) as u64;
    let kept = dropout_indices(frames, stride)?.len() as u64;
    let pre = schedule.steps().iter().filter(|s| s.t > threshold).count() as u64;
    let post = steps as u64 - pre;
    let baseline = steps as u64 * frames as u64 * sites;
    Ok((baseline, pre * frames as u64 * sites + post * kept * sites))
}

/// Which trajectory a ledger record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trajectory {
    Edit,
    Refine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub trajectory: Trajectory,
    pub t: f64,
    pub expert: ExpertPhase,
    pub frames: usize,
    pub sites: usize,
    pub token_steps: u64,
}

/// Append-only per-step cost log of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComputeLedger {
    records: Vec<StepRecord>,
}

impl ComputeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        trajectory: Trajectory,
        t: f64,
        expert: ExpertPhase,
        frames: usize,
        sites: usize,
    ) {
        let step = self.records.len();
        self.records.push(StepRecord {
            step,
            trajectory,
            t,
            expert,
            frames,
            sites,
            token_steps: (frames * sites) as u64,
        });
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.records.iter().map(|r| r.token_steps).sum()
    }

    pub fn total_for(&self, trajectory: Trajectory) -> u64 {
        self.records
            .iter()
            .filter(|r| r.trajectory == trajectory)
            .map(|r| r.token_steps)
            .sum()
    }

    pub fn experts(&self, trajectory: Trajectory) -> Vec<ExpertPhase> {
        self.records
            .iter()
            .filter(|r| r.trajectory == trajectory)
            .map(|r| r.expert)
            .collect()
    }

    /// CSV with columns `step,t,expert,frames,token_steps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,t,expert,frames,token_steps\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                r.t,
                r.expert.label(),
                r.frames,
                r.token_steps
            ));
        }
        out
    }
}
