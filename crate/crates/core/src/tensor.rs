//! Tensor value types shared by every stage of the editor.
//!
//! Latents are stored as `f32` in row-major `(C, F, H, W)` order, so a
//! temporal slice is `C` strided blocks of `H * W` values. Nothing here
//! mutates after construction.

use crate::error::{Error, Result};

/// One RGB frame, `height x width x 3`, interleaved, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::argument("frame dimensions must be non-zero"));
        }
        if data.len() != height * width * 3 {
            return Err(Error::Shape {
                axis: "pixel",
                expected: height * width * 3,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width * 3])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    /// Per-pixel channel mean, row-major.
    pub fn grayscale(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|px| (px[0] as f64 + px[1] as f64 + px[2] as f64) / 3.0)
            .collect()
    }

    /// Copy with every value clamped to `[0, 1]`.
    pub fn clamped(&self) -> Frame {
        Frame {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Frame {
        Frame {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Circular shift by `(dy, dx)` pixels.
    pub fn rolled(&self, dy: isize, dx: isize) -> Frame {
        let (h, w) = (self.height as isize, self.width as isize);
        let mut data = vec![0.0; self.data.len()];
        for y in 0..h {
            let sy = (y - dy).rem_euclid(h);
            for x in 0..w {
                let sx = (x - dx).rem_euclid(w);
                let dst = ((y * w + x) * 3) as usize;
                let src = ((sy * w + sx) * 3) as usize;
                data[dst..dst + 3].copy_from_slice(&self.data[src..src + 3]);
            }
        }
        Frame {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Frame) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// A clip of frames sharing one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelVideo {
    frames: Vec<Frame>,
}

impl PixelVideo {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::argument("a video needs at least one frame"))?;
        let (h, w) = (first.height, first.width);
        for f in &frames[1..] {
            if f.height != h {
                return Err(Error::Shape {
                    axis: "height",
                    expected: h,
                    actual: f.height,
                });
            }
            if f.width != w {
                return Err(Error::Shape {
                    axis: "width",
                    expected: w,
                    actual: f.width,
                });
            }
        }
        Ok(Self { frames })
    }

    /// `[first, 0, 0, ...]`: the conditioning clip with `len - 1` zero placeholders.
    pub fn pseudo_video(first: &Frame, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::argument("pseudo-video length must be >= 1"));
        }
        let mut frames = Vec::with_capacity(len);
        frames.push(first.clone());
        let blank = Frame::filled(first.height, first.width, 0.0)?;
        frames.extend(std::iter::repeat_n(blank, len - 1));
        Self::new(frames)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    /// Whether every value lies in `[0, 1]`.
    pub fn in_unit_range(&self) -> bool {
        self.frames
            .iter()
            .all(|f| f.data.iter().all(|v| (0.0..=1.0).contains(v)))
    }
}

/// Latent tensor with dims `(C, F, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoLatent {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl VideoLatent {
    pub fn new(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::argument(format!(
                "latent dims must all be >= 1, got {dims:?}"
            )));
        }
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::Shape {
                axis: "element",
                expected: n,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("latent contains non-finite values"));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.dims[0]
    }

    pub fn frames(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    /// Spatial sites per temporal slice.
    pub fn sites(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, f: usize, y: usize, x: usize) -> usize {
        ((c * self.dims[1] + f) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn get(&self, c: usize, f: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, f, y, x)]
    }

    /// The `H * W` plane of channel `c` at temporal slice `f`.
    pub fn plane(&self, c: usize, f: usize) -> &[f32] {
        let s = self.sites();
        let start = (c * self.dims[1] + f) * s;
        &self.data[start..start + s]
    }

    /// Temporal slice `f` as a single-frame latent.
    pub fn slice(&self, f: usize) -> Result<VideoLatent> {
        temporal_select(self, &[f])
    }

    /// Channels `[start, end)` as a new latent.
    pub fn channel_block(&self, start: usize, end: usize) -> Result<VideoLatent> {
        if start >= end || end > self.dims[0] {
            return Err(Error::argument(format!(
                "channel block {start}..{end} invalid for {} channels",
                self.dims[0]
            )));
        }
        let per_channel = self.dims[1] * self.sites();
        let data = self.data[start * per_channel..end * per_channel].to_vec();
        VideoLatent::new(
            [end - start, self.dims[1], self.dims[2], self.dims[3]],
            data,
        )
    }

    pub fn ensure_same_dims(&self, other: &VideoLatent) -> Result<()> {
        const AXES: [&str; 4] = ["channel", "temporal", "height", "width"];
        for (i, axis) in AXES.iter().enumerate() {
            if self.dims[i] != other.dims[i] {
                return Err(Error::Shape {
                    axis,
                    expected: self.dims[i],
                    actual: other.dims[i],
                });
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &VideoLatent) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub(crate) fn from_parts_unchecked(dims: [usize; 4], data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        Self { dims, data }
    }
}

/// Observation mask at latent temporal resolution, dims `(F, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalMask {
    inner: VideoLatent,
}

impl TemporalMask {
    /// Slice 0 observed (ones), every later slice unobserved (zeros).
    pub fn first_observed(frames: usize, height: usize, width: usize) -> Result<Self> {
        let sites = height * width;
        let mut data = vec![0.0; frames * sites];
        data[..sites].fill(1.0);
        Ok(Self {
            inner: VideoLatent::new([1, frames, height, width], data)?,
        })
    }

    /// Build from raw `(F, H, W)` values. Entries must be 0 or 1 and constant per slice.
    pub fn from_values(dims: [usize; 3], values: Vec<f32>) -> Result<Self> {
        let inner = VideoLatent::new([1, dims[0], dims[1], dims[2]], values)?;
        for f in 0..dims[0] {
            let plane = inner.plane(0, f);
            let v = plane[0];
            if v != 0.0 && v != 1.0 {
                return Err(Error::argument(format!("mask value {v} is not binary")));
            }
            if plane.iter().any(|&p| p != v) {
                return Err(Error::argument(format!("mask slice {f} is not constant")));
            }
        }
        Ok(Self { inner })
    }

    pub fn dims(&self) -> [usize; 3] {
        let d = self.inner.dims;
        [d[1], d[2], d[3]]
    }

    pub fn frames(&self) -> usize {
        self.inner.dims[1]
    }

    pub fn values(&self) -> &[f32] {
        &self.inner.data
    }

    /// Value of temporal slice `f` (constant across the slice).
    pub fn slice_value(&self, f: usize) -> f32 {
        self.inner.plane(0, f)[0]
    }

    /// The mask as a single-channel latent, ready for channel concatenation.
    pub fn as_latent(&self) -> &VideoLatent {
        &self.inner
    }

    pub fn select(&self, indices: &[usize]) -> Result<TemporalMask> {
        Ok(TemporalMask {
            inner: temporal_select(&self.inner, indices)?,
        })
    }
}

/// Stack `[z | y | m]` along the channel axis.
pub fn concat_channels(z: &VideoLatent, y: &VideoLatent, m: &TemporalMask) -> Result<VideoLatent> {
    let m = m.as_latent();
    for other in [y, m] {
        for (i, axis) in ["temporal", "height", "width"].iter().enumerate() {
            if z.dims[i + 1] != other.dims[i + 1] {
                return Err(Error::Shape {
                    axis,
                    expected: z.dims[i + 1],
                    actual: other.dims[i + 1],
                });
            }
        }
    }
    let channels = z.dims[0] + y.dims[0] + 1;
    let mut data = Vec::with_capacity(z.data.len() + y.data.len() + m.data.len());
    data.extend_from_slice(&z.data);
    data.extend_from_slice(&y.data);
    data.extend_from_slice(&m.data);
    Ok(VideoLatent::from_parts_unchecked(
        [channels, z.dims[1], z.dims[2], z.dims[3]],
        data,
    ))
}

/// Keep temporal slices `indices` (strictly increasing), copying them bit-for-bit.
pub fn temporal_select(x: &VideoLatent, indices: &[usize]) -> Result<VideoLatent> {
    if indices.is_empty() {
        return Err(Error::argument(
            "temporal selection needs at least one index",
        ));
    }
    let frames = x.dims[1];
    for (i, &idx) in indices.iter().enumerate() {
        if idx >= frames {
            return Err(Error::Index {
                index: idx,
                len: frames,
            });
        }
        if i > 0 && idx <= indices[i - 1] {
            return Err(Error::argument(format!(
                "indices must be strictly increasing, got {indices:?}"
            )));
        }
    }
    let s = x.sites();
    let mut data = Vec::with_capacity(x.dims[0] * indices.len() * s);
    for c in 0..x.dims[0] {
        for &idx in indices {
            data.extend_from_slice(x.plane(c, idx));
        }
    }
    Ok(VideoLatent::from_parts_unchecked(
        [x.dims[0], indices.len(), x.dims[2], x.dims[3]],
        data,
    ))
}
