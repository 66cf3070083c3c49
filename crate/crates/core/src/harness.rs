//! Synthetic scenes, the bench and ablation drivers, and per-step dumps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backends::MotionProgram;
use crate::dump::RawTensor;
use crate::error::{Error, Phase, PipelineError, Result};
use crate::image_io;
use crate::pipeline::{BackendConfig, EditConfig, EditResult, Editor, StepObserver};
use crate::prompt::PromptSource;
use crate::scpr::{self, laplacian_score};
use crate::tensor::{Frame, PixelVideo, VideoLatent};
use crate::tld::{predicted_token_steps, Trajectory};

/// One synthetic editing case.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: Frame,
    pub instruction: String,
}

const SHAPES: [&str; 3] = ["square", "circle", "triangle"];
const ACTIONS: [&str; 6] = [
    "moves right",
    "moves left",
    "moves up",
    "moves down",
    "grows",
    "shrinks",
];

/// `count` scenes of a colored shape over a striped or checkered background.
pub fn synthetic_suite(count: usize, size: usize, seed: u64) -> Vec<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let shape = SHAPES[i % SHAPES.len()];
            let action = ACTIONS[rng.random_range(0..ACTIONS.len())];
            Scene {
                image: render_scene(&mut rng, shape, size),
                instruction: format!("the {shape} {action}"),
            }
        })
        .collect()
}

fn render_scene(rng: &mut ChaCha8Rng, shape: &str, size: usize) -> Frame {
    let s = size as f32;
    let period = rng.random_range(3.0..9.0f32);
    let checker = rng.random_bool(0.5);
    let bg: [f32; 3] = [
        rng.random_range(0.1..0.5),
        rng.random_range(0.1..0.5),
        rng.random_range(0.1..0.5),
    ];
    let fg: [f32; 3] = [
        rng.random_range(0.6..1.0),
        rng.random_range(0.6..1.0),
        rng.random_range(0.0..0.4),
    ];
    let (cx, cy) = (
        rng.random_range(0.3..0.7) * s,
        rng.random_range(0.3..0.7) * s,
    );
    let r = rng.random_range(0.12..0.22) * s;
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
            let inside = match shape {
                "square" => (fx - cx).abs() <= r && (fy - cy).abs() <= r,
                "circle" => (fx - cx).powi(2) + (fy - cy).powi(2) <= r * r,
                _ => fy >= cy - r && fy <= cy + r && (fx - cx).abs() <= (fy - (cy - r)) * 0.5,
            };
            let texture = if checker {
                if ((fx / period) as i32 + (fy / period) as i32) % 2 == 0 {
                    1.0
                } else {
                    0.7
                }
            } else {
                0.85 + 0.15 * (fx * std::f32::consts::TAU / period).sin()
            };
            for c in 0..3 {
                data.push(if inside { fg[c] } else { bg[c] * texture });
            }
        }
    }
    Frame::new(size, size, data).expect("scene dims")
}

/// Peak signal-to-noise ratio in dB for `[0, 1]` images; infinite when identical.
pub fn psnr(a: &Frame, b: &Frame) -> f64 {
    let (a, b) = (a.clamped(), b.clamped());
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.2}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub trial: usize,
    pub instruction: String,
    pub edit_token_steps: u64,
    pub baseline_token_steps: u64,
    pub total_token_steps: u64,
    pub speedup: f64,
    pub wall_ms: f64,
    pub psnr_tld_vs_full: f64,
    pub hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub backend: String,
    pub rows: Vec<BenchRow>,
    /// Mean PSNR of dropout vs full runs on the coupled backend, per stride.
    pub psnr_by_stride: Vec<(usize, f64)>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "trial,instruction,edit_token_steps,baseline_token_steps,total_token_steps,speedup,wall_ms,psnr_tld_vs_full,hash\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},\"{}\",{},{},{},{:.4},{:.2},{},{}",
                r.trial,
                r.instruction,
                r.edit_token_steps,
                r.baseline_token_steps,
                r.total_token_steps,
                r.speedup,
                r.wall_ms,
                fmt_db(r.psnr_tld_vs_full),
                r.hash
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("# Bench\n\nBackend: `{}`\n\n", self.backend);
        out.push_str("| trial | instruction | token-steps | baseline | speedup | wall (ms) | PSNR TLD vs full (dB) | hash |\n");
        out.push_str("|---:|---|---:|---:|---:|---:|---:|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.3}x | {:.1} | {} | `{}` |",
                r.trial,
                r.instruction,
                r.edit_token_steps,
                r.baseline_token_steps,
                r.speedup,
                r.wall_ms,
                fmt_db(r.psnr_tld_vs_full),
                &r.hash[..16]
            );
        }
        if !self.psnr_by_stride.is_empty() {
            out.push_str(
                "\n## Coupled backend, dropout vs full\n\n| K | mean PSNR (dB) |\n|---:|---:|\n",
            );
            for (k, p) in &self.psnr_by_stride {
                let _ = writeln!(out, "| {k} | {} |", fmt_db(*p));
            }
        }
        out
    }
}

fn coupled(config: &EditConfig) -> EditConfig {
    let motion = match &config.backend {
        BackendConfig::Analytic { motion, .. } | BackendConfig::Coupled { motion, .. } => *motion,
        BackendConfig::Remote { .. } => MotionProgram::default(),
    };
    let lambda = match &config.backend {
        BackendConfig::Coupled { lambda, .. } => *lambda,
        _ => 0.25,
    };
    let tau = match &config.backend {
        BackendConfig::Analytic { tau, .. } | BackendConfig::Coupled { tau, .. } => *tau,
        _ => 0.5,
    };
    EditConfig {
        backend: BackendConfig::Coupled {
            lambda,
            tau,
            motion,
        },
        ..config.clone()
    }
}

fn run(config: EditConfig, scene: &Scene) -> Result<EditResult, PipelineError> {
    let editor = Editor::new(config).map_err(|e| PipelineError::new(Phase::Condition, e))?;
    editor.edit(&scene.image, &scene.instruction)
}

/// Mean PSNR between dropout-on and dropout-off outputs on the coupled backend.
pub fn coupled_psnr(
    config: &EditConfig,
    scenes: &[Scene],
    stride: usize,
) -> Result<f64, PipelineError> {
    let base = coupled(config);
    let mut total = 0.0;
    for (i, scene) in scenes.iter().enumerate() {
        let seed = config.seed.wrapping_add(i as u64);
        let with = run(
            EditConfig {
                stride,
                tld: true,
                seed,
                ..base.clone()
            },
            scene,
        )?;
        let without = run(
            EditConfig {
                tld: false,
                seed,
                ..base.clone()
            },
            scene,
        )?;
        total += psnr(&with.output, &without.output);
    }
    Ok(total / scenes.len() as f64)
}

/// Seeded synthetic edits under `config`, one row per trial.
pub fn bench(
    config: &EditConfig,
    trials: usize,
    strides: &[usize],
) -> Result<BenchReport, PipelineError> {
    if trials == 0 {
        return Err(PipelineError::new(
            Phase::Condition,
            Error::Config("trials must be >= 1".into()),
        ));
    }
    let scenes = synthetic_suite(trials, 64, config.seed);
    let mut rows = Vec::with_capacity(trials);
    let codec = config.codec;
    let f_lat = codec
        .latent_frames(config.frames)
        .map_err(|e| PipelineError::new(Phase::Condition, e))?;
    for (trial, scene) in scenes.iter().enumerate() {
        let cfg = EditConfig {
            seed: config.seed.wrapping_add(trial as u64),
            ..config.clone()
        };
        let result = run(cfg.clone(), scene)?;
        let (h, w) = (
            scene.image.height() / codec.spatial,
            scene.image.width() / codec.spatial,
        );
        let (baseline, _) =
            predicted_token_steps(f_lat, cfg.steps, cfg.threshold, cfg.stride, h, w)
                .map_err(|e| PipelineError::new(Phase::Denoise, e))?;
        let edit_steps = result.ledger.total_for(Trajectory::Edit);
        let psnr_tld = coupled_psnr(&cfg, std::slice::from_ref(scene), cfg.stride)?;
        rows.push(BenchRow {
            trial,
            instruction: scene.instruction.clone(),
            edit_token_steps: edit_steps,
            baseline_token_steps: baseline,
            total_token_steps: result.ledger.total(),
            speedup: baseline as f64 / edit_steps as f64,
            wall_ms: result.duration.as_secs_f64() * 1e3,
            psnr_tld_vs_full: psnr_tld,
            hash: result.output_hash(),
        });
    }
    let psnr_by_stride = strides
        .iter()
        .map(|&k| coupled_psnr(config, &scenes, k).map(|p| (k, p)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BenchReport {
        backend: format!("{:?}", config.backend),
        rows,
        psnr_by_stride,
    })
}

/// Frame scorer used for selection; lets a costlier judge be swapped in.
pub trait FrameScorer: Sync {
    fn score(&self, frame: &Frame) -> Result<f64>;
    fn calls(&self) -> usize;
}

/// Stand-in for a VLM judge: Laplacian score, but every call is counted.
#[derive(Debug, Default)]
pub struct CountingScorer {
    calls: AtomicUsize,
}

impl FrameScorer for CountingScorer {
    fn score(&self, frame: &Frame) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        laplacian_score(frame)
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub sharpness: f64,
    pub token_steps: f64,
    pub wall_ms: f64,
    pub psnr_vs_full: f64,
    pub scorer_calls: f64,
    pub prompt_sources: Vec<PromptSource>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub scenes: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("config,sharpness,token_steps,wall_ms,psnr_vs_full,scorer_calls\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.1},{:.2},{},{:.1}",
                r.name,
                r.sharpness,
                r.token_steps,
                r.wall_ms,
                fmt_db(r.psnr_vs_full),
                r.scorer_calls
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("# Ablation ({} synthetic scenes)\n\n", self.scenes);
        out.push_str(
            "| config | sharpness | token-steps | wall (ms) | PSNR vs full (dB) | scorer calls |\n",
        );
        out.push_str("|---|---:|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {:.4} | {:.0} | {:.1} | {} | {:.1} |",
                r.name,
                r.sharpness,
                r.token_steps,
                r.wall_ms,
                fmt_db(r.psnr_vs_full),
                r.scorer_calls
            );
        }
        out
    }
}

/// Row names, in table order.
pub const ABLATION_ROWS: [&str; 7] = [
    "K=3 (default)",
    "K=1",
    "K=2",
    "K=4",
    "no-enhance",
    "no-refine",
    "vlm-filter",
];

/// Run the configuration grid over `scenes`.
pub fn ablate(config: &EditConfig, scenes: &[Scene]) -> Result<AblationTable, PipelineError> {
    if scenes.is_empty() {
        return Err(PipelineError::new(
            Phase::Condition,
            Error::Config("ablation needs scenes".into()),
        ));
    }
    let variants: Vec<(&str, EditConfig)> = vec![
        (
            ABLATION_ROWS[0],
            EditConfig {
                stride: 3,
                ..config.clone()
            },
        ),
        (
            ABLATION_ROWS[1],
            EditConfig {
                stride: 1,
                ..config.clone()
            },
        ),
        (
            ABLATION_ROWS[2],
            EditConfig {
                stride: 2,
                ..config.clone()
            },
        ),
        (
            ABLATION_ROWS[3],
            EditConfig {
                stride: 4,
                ..config.clone()
            },
        ),
        (
            ABLATION_ROWS[4],
            EditConfig {
                enhance: false,
                ..config.clone()
            },
        ),
        (
            ABLATION_ROWS[5],
            EditConfig {
                refine: false,
                ..config.clone()
            },
        ),
        (
            ABLATION_ROWS[6],
            EditConfig {
                refine: false,
                ..config.clone()
            },
        ),
    ];
    let n = scenes.len() as f64;
    let mut rows = Vec::new();
    for (name, cfg) in variants {
        let vlm_filter = name == "vlm-filter";
        let mut sharp = 0.0;
        let mut tokens = 0.0;
        let mut wall = 0.0;
        let mut db = 0.0;
        let mut calls = 0.0;
        let mut sources = Vec::new();
        for (i, scene) in scenes.iter().enumerate() {
            let seed = config.seed.wrapping_add(i as u64);
            let cfg = EditConfig {
                seed,
                ..cfg.clone()
            };
            let result = run(cfg.clone(), scene)?;
            let full = run(
                EditConfig {
                    tld: false,
                    ..cfg.clone()
                },
                scene,
            )?;
            let output = if vlm_filter {
                // Judge every decoded frame of the clip instead of refining.
                let scorer = CountingScorer::default();
                let best = select_with(&scorer, result.clip.frames())
                    .map_err(|e| PipelineError::new(Phase::Select, e))?;
                calls += scorer.calls() as f64;
                result.clip.frame(best).clone()
            } else {
                calls += (result.candidates.scores.len()
                    + result.refinement.as_ref().map_or(0, |r| r.scores.len()))
                    as f64;
                result.output.clone()
            };
            let full_output = if vlm_filter {
                let scorer = CountingScorer::default();
                let best = select_with(&scorer, full.clip.frames())
                    .map_err(|e| PipelineError::new(Phase::Select, e))?;
                full.clip.frame(best).clone()
            } else {
                full.output.clone()
            };
            sharp += laplacian_score(&output.clamped())
                .map_err(|e| PipelineError::new(Phase::Select, e))?;
            tokens += result.ledger.total() as f64;
            wall += result.duration.as_secs_f64() * 1e3;
            db += psnr(&output, &full_output);
            sources.push(result.prompt.source);
        }
        rows.push(AblationRow {
            name: name.to_string(),
            sharpness: sharp / n,
            token_steps: tokens / n,
            wall_ms: wall / n,
            psnr_vs_full: db / n,
            scorer_calls: calls / n,
            prompt_sources: sources,
        });
    }
    Ok(AblationTable {
        scenes: scenes.len(),
        rows,
    })
}

/// Argmax under `scorer`, lowest index on ties.
pub fn select_with(scorer: &dyn FrameScorer, frames: &[Frame]) -> Result<usize> {
    let scores = frames
        .iter()
        .map(|f| scorer.score(f))
        .collect::<Result<Vec<_>>>()?;
    Ok(scpr::SharpnessReport::from_scores(scores)?.selected)
}

/// Writes per-step frame grids and `IFED` latents for the edit trajectory.
pub struct DumpObserver<'a> {
    dir: PathBuf,
    editor: &'a Editor,
    pub written: Vec<PathBuf>,
}

impl<'a> DumpObserver<'a> {
    pub fn new(dir: &Path, editor: &'a Editor) -> Self {
        Self {
            dir: dir.to_path_buf(),
            editor,
            written: Vec::new(),
        }
    }
}

impl StepObserver for DumpObserver<'_> {
    fn on_step(
        &mut self,
        trajectory: Trajectory,
        step: usize,
        t: f64,
        z: &VideoLatent,
        _positions: &[usize],
    ) -> Result<()> {
        if trajectory != Trajectory::Edit {
            return Ok(());
        }
        let stem = format!("step{step:02}_t{t:.3}");
        let latent = self.dir.join(format!("{stem}.ifed"));
        RawTensor::from(z).write(&latent)?;
        let video: PixelVideo = self.editor.codec().decode(z)?;
        let columns = (video.len() as f64).sqrt().ceil() as usize;
        let grid = image_io::grid(video.frames(), columns)?;
        let png = self.dir.join(format!("{stem}_grid.png"));
        image_io::write_png(&grid, &png)?;
        self.written.extend([latent, png]);
        Ok(())
    }
}

/// Files written by [`inspect`].
#[derive(Debug, Clone)]
pub struct InspectSummary {
    pub files: Vec<PathBuf>,
    pub result: EditResult,
}

/// Run one edit and write its artifacts under `dir`: always `ledger.csv` and
/// `sharpness.json`; with `dumps`, also per-step grids and latents and the
/// final clip frames.
pub fn inspect(
    editor: &Editor,
    image: &Frame,
    instruction: &str,
    dir: &Path,
    dumps: bool,
) -> Result<InspectSummary, PipelineError> {
    let out = |e| PipelineError::new(Phase::Output, e);
    std::fs::create_dir_all(dir).map_err(|e| out(Error::io(dir, e)))?;
    let mut files = Vec::new();
    let result = if dumps {
        let mut obs = DumpObserver::new(dir, editor);
        let r = editor.edit_observed(image, instruction, Some(&mut obs))?;
        files.extend(obs.written);
        for (i, f) in r
            .candidate_range
            .clone()
            .zip(&r.clip.frames()[r.candidate_range.clone()])
        {
            let p = dir.join(format!("final_clip_{i:02}.png"));
            image_io::write_png(f, &p).map_err(out)?;
            files.push(p);
        }
        r
    } else {
        editor.edit(image, instruction)?
    };
    let ledger = dir.join("ledger.csv");
    std::fs::write(&ledger, result.ledger.to_csv()).map_err(|e| out(Error::io(&ledger, e)))?;
    let report = dir.join("sharpness.json");
    std::fs::write(&report, result.candidates.to_json()).map_err(|e| out(Error::io(&report, e)))?;
    files.extend([ledger, report]);
    Ok(InspectSummary { files, result })
}
