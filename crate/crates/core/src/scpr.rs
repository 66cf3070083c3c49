//! Sharpness scoring and sharpest-frame selection.
//!
//! The score is the mean absolute response of the 4-neighbor Laplacian
//! `[[0,1,0],[1,-4,1],[0,1,0]]` on the channel-mean grayscale image, with
//! edge-clamped borders. The still-video refinement pass itself lives in
//! [`crate::pipeline`], since it reruns the whole editor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::CodecSpec;
use crate::error::{Error, Result};
use crate::tensor::{Frame, PixelVideo};

pub const STILL_PROMPT: &str =
    "A perfectly still video that enhances image clarity and fine details";

/// Mean absolute Laplacian of a grayscale plane.
pub fn laplacian_score_gray(gray: &[f64], height: usize, width: usize) -> Result<f64> {
    if height == 0 || width == 0 || gray.len() != height * width {
        return Err(Error::argument("sharpness needs a non-empty frame"));
    }
    let at = |y: isize, x: isize| {
        let yc = y.clamp(0, height as isize - 1) as usize;
        let xc = x.clamp(0, width as isize - 1) as usize;
        gray[yc * width + xc]
    };
    let mut sum = 0.0;
    for y in 0..height as isize {
        for x in 0..width as isize {
            let r = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x);
            sum += r.abs();
        }
    }
    Ok(sum / (height * width) as f64)
}

pub fn laplacian_score(frame: &Frame) -> Result<f64> {
    laplacian_score_gray(&frame.grayscale(), frame.height(), frame.width())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub scores: Vec<f64>,
    pub selected: usize,
    pub selected_score: f64,
}

impl SharpnessReport {
    /// Argmax over precomputed scores; ties go to the lowest index.
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::argument("cannot select from zero frames"));
        }
        let mut selected = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[selected] {
                selected = i;
            }
        }
        Ok(Self {
            selected_score: scores[selected],
            selected,
            scores,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Score every frame (in parallel) and pick the sharpest.
pub fn select_sharpest(frames: &[Frame]) -> Result<SharpnessReport> {
    let scores = frames
        .par_iter()
        .map(laplacian_score)
        .collect::<Result<Vec<_>>>()?;
    SharpnessReport::from_scores(scores)
}

/// Indices of the pixel frames decoded from the final latent frame.
pub fn candidate_range(video_len: usize, spec: &CodecSpec) -> Result<std::ops::Range<usize>> {
    let f_lat = spec.latent_frames(video_len)?;
    Ok(spec.group_range(f_lat - 1))
}

pub fn candidate_frames(video: &PixelVideo, spec: &CodecSpec) -> Result<Vec<Frame>> {
    let range = candidate_range(video.len(), spec)?;
    Ok(video.frames()[range].to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub still_prompt: String,
    /// Pixel frames in the refinement clip.
    pub frames: usize,
    pub steps: usize,
    /// Dropout in the refinement pass, with the editor's stride and
    /// threshold. Independent of the main pass switch, because the argmax
    /// runs over whatever frames the refinement clip still has.
    pub tld: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            still_prompt: STILL_PROMPT.to_string(),
            frames: 9,
            steps: 4,
            tld: true,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self, spec: &CodecSpec) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::argument("refinement needs at least one step"));
        }
        if self.still_prompt.trim().is_empty() {
            return Err(Error::argument("refinement prompt is empty"));
        }
        spec.latent_frames(self.frames).map(|_| ()).map_err(|_| {
            Error::argument(format!(
                "refinement clip of {} frames is not 1 mod {}",
                self.frames, spec.temporal
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gray_frame(h: usize, w: usize, values: &[f32]) -> Frame {
        Frame::new(h, w, values.iter().flat_map(|&v| [v, v, v]).collect()).unwrap()
    }

    /// Explicit 3x3 correlation with a padded copy of the image.
    fn brute_force(gray: &[f64], h: usize, w: usize) -> f64 {
        let kernel = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
        let (ph, pw) = (h + 2, w + 2);
        let mut padded = vec![0.0; ph * pw];
        for y in 0..ph {
            for x in 0..pw {
                let sy = (y as isize - 1).clamp(0, h as isize - 1) as usize;
                let sx = (x as isize - 1).clamp(0, w as isize - 1) as usize;
                padded[y * pw + x] = gray[sy * w + sx];
            }
        }
        let mut total = 0.0;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ky, row) in kernel.iter().enumerate() {
                    for (kx, k) in row.iter().enumerate() {
                        acc += k * padded[(y + ky) * pw + x + kx];
                    }
                }
                total += f64::abs(acc);
            }
        }
        total / (h * w) as f64
    }

    fn box_blur(f: &Frame, radius: isize) -> Frame {
        let (h, w) = (f.height() as isize, f.width() as isize);
        let mut out = vec![0.0f32; f.data().len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for dy in -radius..=radius {
                        for dx in -radius..=radius {
                            let yy = (y + dy).clamp(0, h - 1) as usize;
                            let xx = (x + dx).clamp(0, w - 1) as usize;
                            acc += f.get(yy, xx, c);
                        }
                    }
                    out[(y * w + x) as usize * 3 + c] = acc / ((2 * radius + 1).pow(2)) as f32;
                }
            }
        }
        Frame::new(f.height(), f.width(), out).unwrap()
    }

    fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Frame {
        Frame::new(h, w, (0..h * w * 3).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn constant_frames_score_zero() {
        for v in [0.0, 0.3, 1.0] {
            assert_eq!(
                laplacian_score(&Frame::filled(7, 5, v).unwrap()).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn center_impulse_matches_brute_force() {
        let mut vals = vec![0.0f32; 9];
        vals[4] = 1.0;
        let f = gray_frame(3, 3, &vals);
        let got = laplacian_score(&f).unwrap();
        let want = brute_force(&f.grayscale(), 3, 3);
        // center -4, four edge neighbors +1 each, corners 0
        assert_eq!(want, 8.0 / 9.0);
        assert_eq!(got, want);
    }

    #[test]
    fn matches_brute_force_on_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let (h, w) = (rng.random_range(1..12), rng.random_range(1..12));
            let f = random_frame(&mut rng, h, w);
            let got = laplacian_score(&f).unwrap();
            let want = brute_force(&f.grayscale(), h, w);
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_lowers_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let f = random_frame(&mut rng, 24, 24);
            assert!(laplacian_score(&box_blur(&f, 2)).unwrap() < laplacian_score(&f).unwrap());
        }
    }

    #[test]
    fn interior_translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (h, w) = (20, 20);
        let mut data = vec![0.0f32; h * w * 3];
        for y in 6..12 {
            for x in 5..11 {
                for c in 0..3 {
                    data[(y * w + x) * 3 + c] = rng.random();
                }
            }
        }
        let f = Frame::new(h, w, data).unwrap();
        let base = laplacian_score(&f).unwrap();
        for (dy, dx) in [(2, 3), (-3, 1), (4, -2)] {
            let shifted = f.rolled(dy, dx);
            assert!((laplacian_score(&shifted).unwrap() - base).abs() <= 1e-9);
        }
    }

    #[test]
    fn selection_rules() {
        assert_eq!(
            SharpnessReport::from_scores(vec![1.0, 5.0, 3.0])
                .unwrap()
                .selected,
            1
        );
        assert_eq!(
            SharpnessReport::from_scores(vec![2.0, 2.0, 2.0])
                .unwrap()
                .selected,
            0
        );
        assert!(SharpnessReport::from_scores(vec![]).is_err());
        assert!(select_sharpest(&[]).is_err());
    }

    #[test]
    fn selection_is_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let frames: Vec<Frame> = (0..4).map(|_| random_frame(&mut rng, 8, 8)).collect();
            let scaled: Vec<Frame> = frames.iter().map(|f| f.map(|v| v * 0.37)).collect();
            assert_eq!(
                select_sharpest(&frames).unwrap().selected,
                select_sharpest(&scaled).unwrap().selected
            );
        }
    }

    #[test]
    fn candidate_ranges() {
        let q4 = CodecSpec {
            temporal: 4,
            spatial: 2,
        };
        assert_eq!(candidate_range(33, &q4).unwrap(), 29..33);
        assert_eq!(candidate_range(1, &q4).unwrap(), 0..1);
        let q2 = CodecSpec {
            temporal: 2,
            spatial: 2,
        };
        assert_eq!(candidate_range(9, &q2).unwrap(), 7..9);
    }

    #[test]
    fn refine_config_validation() {
        let spec = CodecSpec::default();
        assert!(RefineConfig::default().validate(&spec).is_ok());
        let zero = RefineConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(zero.validate(&spec).is_err());
        let bad = RefineConfig {
            frames: 8,
            ..Default::default()
        };
        assert!(bad.validate(&spec).is_err());
    }
}
