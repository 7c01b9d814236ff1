//! Procedural test clips.

use alloc::vec::Vec;
use core::f64::consts::PI;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frame::{Frame, FrameSequence};

/// A soft coloured blob orbiting the frame centre on a dark background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobClip {
    pub size: usize,
    pub frames: usize,
    pub channels: usize,
    pub fps: f64,
    /// Gaussian standard deviation of the blob, in pixels.
    pub blob_sigma: f64,
    /// Orbit radius as a fraction of the frame size.
    pub orbit: f64,
    /// Frames per full orbit.
    pub period: f64,
}

impl Default for BlobClip {
    fn default() -> Self {
        BlobClip {
            size: 64,
            frames: 200,
            channels: 3,
            fps: 30.0,
            blob_sigma: 6.0,
            orbit: 0.25,
            period: 100.0,
        }
    }
}

const BACKGROUND: [f64; 3] = [0.08, 0.1, 0.14];
const BLOB: [f64; 3] = [0.95, 0.7, 0.35];

impl BlobClip {
    pub fn frame(&self, i: usize) -> Frame {
        let s = self.size as f64;
        let phase = 2.0 * PI * i as f64 / self.period;
        let cx = 0.5 * (s - 1.0) + self.orbit * s * libm::cos(phase);
        let cy = 0.5 * (s - 1.0) + self.orbit * s * libm::sin(phase);
        let inv = 1.0 / (2.0 * self.blob_sigma * self.blob_sigma);
        Frame::from_fn(self.size, self.size, self.channels, |c, y, x| {
            let d2 = (x as f64 - cx) * (x as f64 - cx) + (y as f64 - cy) * (y as f64 - cy);
            let a = libm::exp(-d2 * inv);
            let k = c % 3;
            (BACKGROUND[k] * (1.0 - a) + BLOB[k] * a).clamp(0.0, 1.0)
        })
    }

    pub fn sequence(&self) -> Result<FrameSequence> {
        let frames: Vec<Frame> = (0..self.frames).map(|i| self.frame(i)).collect();
        FrameSequence::new("translating-blob", frames, self.fps)
    }
}
