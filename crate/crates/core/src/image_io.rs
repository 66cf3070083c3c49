//! PNG boundary. Values are clamped to `[0, 1]` and quantized only here.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Frame;

pub fn to_rgb8(frame: &Frame) -> RgbImage {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let bytes = frame
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    RgbImage::from_raw(w, h, bytes).expect("frame buffer matches dims")
}

pub fn from_rgb8(img: &RgbImage) -> Frame {
    let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    Frame::new(img.height() as usize, img.width() as usize, data).expect("image dims are non-zero")
}

pub fn encode_png(frame: &Frame) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    to_rgb8(frame)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn write_png(frame: &Frame, path: &Path) -> Result<()> {
    std::fs::write(path, encode_png(frame)).map_err(|e| Error::io(path, e))
}

pub fn read_png(path: &Path) -> Result<Frame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(from_rgb8(&img.to_rgb8()))
}

/// Tile frames left-to-right, top-to-bottom, `columns` per row, black filler.
pub fn grid(frames: &[Frame], columns: usize) -> Result<Frame> {
    let first = frames
        .first()
        .ok_or_else(|| Error::argument("grid needs at least one frame"))?;
    let (fh, fw) = (first.height(), first.width());
    let columns = columns.clamp(1, frames.len());
    let rows = frames.len().div_ceil(columns);
    let (h, w) = (rows * fh, columns * fw);
    let mut img = RgbImage::new(w as u32, h as u32);
    for (i, f) in frames.iter().enumerate() {
        let (oy, ox) = ((i / columns) * fh, (i % columns) * fw);
        let tile = to_rgb8(f);
        for (x, y, px) in tile.enumerate_pixels() {
            img.put_pixel(ox as u32 + x, oy as u32 + y, Rgb(px.0));
        }
    }
    Ok(from_rgb8(&img))
}
