//! Frame preprocessing: square cropping and bilinear resampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Axis-aligned pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CropMode {
    /// Largest centred square.
    CenterSquare,
    /// Smallest square containing `bbox` grown by `expand` pixels on every side.
    FaceBox { bbox: BoundingBox, expand: usize },
}

/// A square crop window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWindow {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

impl CropMode {
    /// The window for a `width × height` frame, shifted (and if necessary
    /// shrunk) to stay inside the frame.
    pub fn window(&self, width: usize, height: usize) -> CropWindow {
        match *self {
            CropMode::CenterSquare => {
                let size = width.min(height);
                CropWindow {
                    x: (width - size) / 2,
                    y: (height - size) / 2,
                    size,
                }
            }
            CropMode::FaceBox { bbox, expand } => {
                let w = bbox.width + 2 * expand;
                let h = bbox.height + 2 * expand;
                let side = w.max(h);
                let x0 = bbox.x as isize - expand as isize - ((side - w) / 2) as isize;
                let y0 = bbox.y as isize - expand as isize - ((side - h) / 2) as isize;
                let size = side.min(width).min(height);
                // Keep the window centred on the box when it had to shrink.
                let shrink = ((side - size) / 2) as isize;
                let x = (x0 + shrink).clamp(0, (width - size) as isize) as usize;
                let y = (y0 + shrink).clamp(0, (height - size) as isize) as usize;
                CropWindow { x, y, size }
            }
        }
    }
}

pub fn crop(frame: &Frame, window: CropWindow) -> Result<Frame> {
    if window.size == 0 || window.x + window.size > frame.width() || window.y + window.size > frame.height() {
        return Err(Error::contract("crop window exceeds the frame"));
    }
    let out = Frame::from_fn(window.size, window.size, frame.channels(), |c, y, x| {
        frame.get(c, y + window.y, x + window.x)
    });
    Ok(out.with_position(frame.index, frame.timestamp))
}

/// Bilinear resampling with half-pixel centres. Equal sizes copy exactly.
pub fn resize_bilinear(frame: &Frame, width: usize, height: usize) -> Result<Frame> {
    if width == 0 || height == 0 {
        return Err(Error::contract("resize target must be non-empty"));
    }
    if (width, height) == (frame.width(), frame.height()) {
        return Ok(frame.clone());
    }
    let taps = |out: usize, inp: usize| -> alloc::vec::Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = libm::floor(s) as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = taps(width, frame.width());
    let ys = taps(height, frame.height());
    let out = Frame::from_fn(width, height, frame.channels(), |c, y, x| {
        let (y0, y1, ty) = ys[y];
        let (x0, x1, tx) = xs[x];
        let top = (1.0 - tx) * frame.get(c, y0, x0) + tx * frame.get(c, y0, x1);
        let bottom = (1.0 - tx) * frame.get(c, y1, x0) + tx * frame.get(c, y1, x1);
        ((1.0 - ty) * top + ty * bottom).clamp(0.0, 1.0)
    });
    Ok(out.with_position(frame.index, frame.timestamp))
}

/// Crop then resample to a `target × target` square.
pub fn preprocess(frame: &Frame, mode: CropMode, target: usize) -> Result<Frame> {
    let window = mode.window(frame.width(), frame.height());
    resize_bilinear(&crop(frame, window)?, target, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_box_window_is_expanded() {
        let mode = CropMode::FaceBox {
            bbox: BoundingBox {
                x: 400,
                y: 300,
                width: 200,
                height: 200,
            },
            expand: 15,
        };
        assert_eq!(mode.window(1920, 1080), CropWindow { x: 385, y: 285, size: 230 });
        // Near the border the window slides inside the frame.
        let edge = CropMode::FaceBox {
            bbox: BoundingBox {
                x: 5,
                y: 0,
                width: 100,
                height: 60,
            },
            expand: 15,
        };
        let w = edge.window(640, 480);
        assert_eq!((w.x, w.y, w.size), (0, 0, 130));
    }

    #[test]
    fn center_square() {
        assert_eq!(CropMode::CenterSquare.window(1920, 1080), CropWindow { x: 420, y: 0, size: 1080 });
        assert_eq!(CropMode::CenterSquare.window(30, 50), CropWindow { x: 0, y: 10, size: 30 });
    }

    #[test]
    fn preprocess_shapes_and_identity() {
        let f = Frame::from_fn(64, 48, 3, |c, y, x| ((c + y + x) % 7) as f64 / 7.0);
        let out = preprocess(&f, CropMode::CenterSquare, 16).unwrap();
        assert_eq!(out.shape(), (16, 16, 3));
        assert!(out.is_unit_range());

        let sq = Frame::from_fn(64, 64, 1, |_, y, x| ((y * 64 + x) % 255) as f64 / 255.0);
        assert_eq!(preprocess(&sq, CropMode::CenterSquare, 64).unwrap(), sq);
    }

    #[test]
    fn downsample_by_two_averages_pairs() {
        let f = Frame::from_fn(4, 4, 1, |_, y, x| (y * 4 + x) as f64 / 16.0);
        let half = resize_bilinear(&f, 2, 2).unwrap();
        // Sample (0.5, 0.5) sits between pixels 0, 1, 4, 5.
        assert!((half.get(0, 0, 0) - (0.0 + 1.0 + 4.0 + 5.0) / 64.0).abs() < 1e-12);
    }
}
