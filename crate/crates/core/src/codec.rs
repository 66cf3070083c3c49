//! Exactly invertible group codec.
//!
//! Latent frame 0 holds pixel frame 0 alone; latent frame `j >= 1` holds
//! pixel frames `[1 + (j-1)q, 1 + jq)`. At every latent site the `q` frames'
//! `p x p x 3` patches are flattened into a vector of `C = 3 q p^2` values and
//! multiplied by a fixed seeded orthonormal matrix. Decoding applies the
//! transpose, so the round trip only loses float rounding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Frame, PixelVideo, VideoLatent};

const BASIS_SEED: u64 = 0x1FED_C0DE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecSpec {
    /// Pixel frames per latent frame.
    pub temporal: usize,
    /// Spatial compression per axis.
    pub spatial: usize,
}

impl Default for CodecSpec {
    fn default() -> Self {
        Self {
            temporal: 4,
            spatial: 2,
        }
    }
}

impl CodecSpec {
    pub fn latent_channels(&self) -> usize {
        3 * self.temporal * self.spatial * self.spatial
    }

    pub fn validate(&self) -> Result<()> {
        if self.temporal == 0 || self.spatial == 0 {
            return Err(Error::Config(format!(
                "codec factors must be >= 1, got q={} p={}",
                self.temporal, self.spatial
            )));
        }
        Ok(())
    }

    /// Latent frame count for `pixel_frames` frames.
    pub fn latent_frames(&self, pixel_frames: usize) -> Result<usize> {
        if pixel_frames == 0 || !(pixel_frames - 1).is_multiple_of(self.temporal) {
            return Err(Error::Shape {
                axis: "temporal",
                expected: pixel_frames.saturating_sub(1) / self.temporal * self.temporal + 1,
                actual: pixel_frames,
            });
        }
        Ok(1 + (pixel_frames - 1) / self.temporal)
    }

    pub fn pixel_frames(&self, latent_frames: usize) -> usize {
        1 + latent_frames.saturating_sub(1) * self.temporal
    }

    /// Pixel frame range decoded from latent frame `j`.
    pub fn group_range(&self, j: usize) -> std::ops::Range<usize> {
        if j == 0 {
            0..1
        } else {
            let start = 1 + (j - 1) * self.temporal;
            start..start + self.temporal
        }
    }

    pub fn check_spatial(&self, height: usize, width: usize) -> Result<()> {
        if !height.is_multiple_of(self.spatial) {
            return Err(Error::Shape {
                axis: "height",
                expected: height / self.spatial * self.spatial,
                actual: height,
            });
        }
        if !width.is_multiple_of(self.spatial) {
            return Err(Error::Shape {
                axis: "width",
                expected: width / self.spatial * self.spatial,
                actual: width,
            });
        }
        Ok(())
    }
}

/// A codec instance: its layout plus the orthonormal basis.
#[derive(Debug, Clone)]
pub struct Codec {
    spec: CodecSpec,
    // Row-major C x C.
    basis: Vec<f64>,
    // basis * replicate-block-0 * basis^T, row-major C x C.
    still_lift: Vec<f64>,
}

impl Codec {
    pub fn new(spec: CodecSpec) -> Result<Self> {
        spec.validate()?;
        let c = spec.latent_channels();
        let basis = orthonormal_basis(c, BASIS_SEED);
        let block = 3 * spec.spatial * spec.spatial;
        // L[i][j] = sum_k Q[i][k] * Q[j][k mod block]
        let mut still_lift = vec![0.0; c * c];
        for i in 0..c {
            for j in 0..c {
                let mut acc = 0.0;
                for k in 0..c {
                    acc += basis[i * c + k] * basis[j * c + k % block];
                }
                still_lift[i * c + j] = acc;
            }
        }
        Ok(Self {
            spec,
            basis,
            still_lift,
        })
    }

    pub fn spec(&self) -> &CodecSpec {
        &self.spec
    }

    pub fn encode(&self, video: &PixelVideo) -> Result<VideoLatent> {
        let spec = &self.spec;
        let (h, w) = (video.height(), video.width());
        spec.check_spatial(h, w)?;
        let f_lat = spec.latent_frames(video.len())?;
        let p = spec.spatial;
        let c = spec.latent_channels();
        let (hl, wl) = (h / p, w / p);
        let sites = hl * wl;
        let mut data = vec![0.0f32; c * f_lat * sites];
        let mut patch = vec![0.0f64; c];
        for j in 0..f_lat {
            let group = spec.group_range(j);
            for sy in 0..hl {
                for sx in 0..wl {
                    patch.fill(0.0);
                    for (k, fi) in group.clone().enumerate() {
                        gather_patch(video.frame(fi), sy, sx, p, &mut patch[k * 3 * p * p..]);
                    }
                    let site = sy * wl + sx;
                    for row in 0..c {
                        let q = &self.basis[row * c..(row + 1) * c];
                        let acc: f64 = q.iter().zip(&patch).map(|(a, b)| a * b).sum();
                        data[(row * f_lat + j) * sites + site] = acc as f32;
                    }
                }
            }
        }
        VideoLatent::new([c, f_lat, hl, wl], data)
    }

    /// Inverse of [`Codec::encode`]; no clamping.
    pub fn decode(&self, z: &VideoLatent) -> Result<PixelVideo> {
        let spec = &self.spec;
        let c = spec.latent_channels();
        if z.channels() != c {
            return Err(Error::Shape {
                axis: "channel",
                expected: c,
                actual: z.channels(),
            });
        }
        let p = spec.spatial;
        let (f_lat, hl, wl) = (z.frames(), z.height(), z.width());
        let (h, w) = (hl * p, wl * p);
        let n_frames = spec.pixel_frames(f_lat);
        let mut frames = vec![vec![0.0f32; h * w * 3]; n_frames];
        let mut coeffs = vec![0.0f64; c];
        let mut patch = vec![0.0f64; c];
        for j in 0..f_lat {
            let group = spec.group_range(j);
            for sy in 0..hl {
                for sx in 0..wl {
                    for (ch, v) in coeffs.iter_mut().enumerate() {
                        *v = z.get(ch, j, sy, sx) as f64;
                    }
                    // patch = Q^T coeffs
                    patch.fill(0.0);
                    for (row, &cv) in coeffs.iter().enumerate() {
                        let q = &self.basis[row * c..(row + 1) * c];
                        for (pv, qv) in patch.iter_mut().zip(q) {
                            *pv += qv * cv;
                        }
                    }
                    for (k, fi) in group.clone().enumerate() {
                        scatter_patch(&mut frames[fi], w, sy, sx, p, &patch[k * 3 * p * p..]);
                    }
                }
            }
        }
        PixelVideo::new(
            frames
                .into_iter()
                .map(|d| Frame::new(h, w, d))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Map a single-frame latent (encoded like latent frame 0) to the group
    /// latent whose `q` decoded frames all equal that frame.
    pub fn lift_still(&self, first: &VideoLatent) -> Result<VideoLatent> {
        let c = self.spec.latent_channels();
        if first.channels() != c {
            return Err(Error::Shape {
                axis: "channel",
                expected: c,
                actual: first.channels(),
            });
        }
        if first.frames() != 1 {
            return Err(Error::Shape {
                axis: "temporal",
                expected: 1,
                actual: first.frames(),
            });
        }
        let sites = first.sites();
        let src = first.data();
        let mut out = vec![0.0f32; c * sites];
        for site in 0..sites {
            for row in 0..c {
                let l = &self.still_lift[row * c..(row + 1) * c];
                let acc: f64 = (0..c).map(|k| l[k] * src[k * sites + site] as f64).sum();
                out[row * sites + site] = acc as f32;
            }
        }
        VideoLatent::new(first.dims(), out)
    }
}

fn gather_patch(frame: &Frame, sy: usize, sx: usize, p: usize, out: &mut [f64]) {
    for ch in 0..3 {
        for dy in 0..p {
            for dx in 0..p {
                out[(ch * p + dy) * p + dx] = frame.get(sy * p + dy, sx * p + dx, ch) as f64;
            }
        }
    }
}

fn scatter_patch(frame: &mut [f32], width: usize, sy: usize, sx: usize, p: usize, patch: &[f64]) {
    for ch in 0..3 {
        for dy in 0..p {
            for dx in 0..p {
                let (y, x) = (sy * p + dy, sx * p + dx);
                frame[(y * width + x) * 3 + ch] = patch[(ch * p + dy) * p + dx] as f32;
            }
        }
    }
}

/// Rows of a seeded Gaussian matrix, orthonormalized by modified Gram-Schmidt.
fn orthonormal_basis(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m: Vec<f64> = (0..n * n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
            for k in 0..n {
                m[i * n + k] -= dot * m[j * n + k];
            }
        }
        let norm = (0..n).map(|k| m[i * n + k].powi(2)).sum::<f64>().sqrt();
        for k in 0..n {
            m[i * n + k] /= norm;
        }
    }
    m
}
