//! Raster frames and ordered clips.
//!
//! Pixels are stored planar (channel-major, then row-major), as `f64` in
//! `[0, 1]` for ingested data.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    /// Position in the source clip.
    pub index: usize,
    /// Seconds from the start of the source clip.
    pub timestamp: f64,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::contract("frame dimensions must be positive"));
        }
        if data.len() != width * height * channels {
            return Err(Error::contract("frame data length does not match its shape"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("frame contains non-finite values"));
        }
        Ok(Frame {
            width,
            height,
            channels,
            data,
            index: 0,
            timestamp: 0.0,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Frame {
            width,
            height,
            channels,
            data: alloc::vec![0.0; width * height * channels],
            index: 0,
            timestamp: 0.0,
        }
    }

    /// Builds a frame from `f(channel, row, col)`.
    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Frame {
            width,
            height,
            channels,
            data,
            index: 0,
            timestamp: 0.0,
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Frame {
            width,
            height,
            channels,
            data,
            index: 0,
            timestamp: 0.0,
        }
    }

    pub fn with_position(mut self, index: usize, timestamp: f64) -> Self {
        self.index = index;
        self.timestamp = timestamp;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of pixels per channel.
    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.shape() == other.shape()
    }

    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Mean absolute per-pixel difference between two frames of equal shape.
pub fn mean_l1(a: &Frame, b: &Frame) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::contract("L1 distance between frames of different shape"));
    }
    Ok(mean_l1_unchecked(a.data(), b.data()))
}

pub(crate) fn mean_l1_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// An ordered clip of equally-shaped frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    fps: f64,
    pub name: alloc::string::String,
}

impl FrameSequence {
    /// Validates shape agreement, pixel range and `fps`, then renumbers the
    /// frames `0..n` with timestamps `i / fps`.
    pub fn new(name: impl Into<alloc::string::String>, mut frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::contract("fps must be positive"));
        }
        if let Some(first) = frames.first() {
            if frames.iter().any(|f| !f.same_shape(first)) {
                return Err(Error::contract("all frames in a sequence must share a shape"));
            }
        }
        if frames.iter().any(|f| !f.is_unit_range()) {
            return Err(Error::contract("sequence frames must lie in [0, 1]"));
        }
        for (i, f) in frames.iter_mut().enumerate() {
            f.index = i;
            f.timestamp = i as f64 / fps;
        }
        Ok(FrameSequence {
            frames,
            fps,
            name: name.into(),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// Frame time Δt.
    pub fn frame_time(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn get(&self, i: usize) -> Option<&Frame> {
        self.frames.get(i)
    }

    /// `(height, width, channels)` of the frames, if any.
    pub fn shape(&self) -> Option<(usize, usize, usize)> {
        self.frames.first().map(Frame::shape)
    }

    /// First `n` frames (or all of them if fewer).
    pub fn truncated(&self, n: usize) -> FrameSequence {
        FrameSequence {
            frames: self.frames[..n.min(self.frames.len())].to_vec(),
            fps: self.fps,
            name: self.name.clone(),
        }
    }
}

/// Frames `start..start + batch_size` of the sequence, in order.
pub fn batch_sequential(seq: &FrameSequence, batch_size: usize, start: usize) -> Result<&[Frame]> {
    batch_within(seq, batch_size, start, seq.len())
}

/// As [`batch_sequential`], bounded by the curriculum's active frame count.
pub fn batch_within(seq: &FrameSequence, batch_size: usize, start: usize, active: usize) -> Result<&[Frame]> {
    let available = active.min(seq.len());
    if batch_size == 0 || start + batch_size > available {
        return Err(Error::Range {
            start,
            len: batch_size,
            available,
        });
    }
    Ok(&seq.frames[start..start + batch_size])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seq(n: usize) -> FrameSequence {
        let frames = (0..n).map(|i| Frame::from_fn(2, 2, 1, |_, _, _| i as f64 / n as f64)).collect();
        FrameSequence::new("t", frames, 30.0).unwrap()
    }

    #[test]
    fn batch_examples() {
        let s = seq(100);
        let b = batch_sequential(&s, 32, 0).unwrap();
        assert_eq!(b.len(), 32);
        assert!(b.iter().enumerate().all(|(i, f)| f.index == i));
        let b = batch_sequential(&s, 1, 99).unwrap();
        assert_eq!(b[0].index, 99);
        assert!(matches!(
            batch_sequential(&s, 32, 80),
            Err(Error::Range {
                start: 80,
                len: 32,
                available: 100
            })
        ));
    }

    #[test]
    fn batches_tile_the_sequence() {
        let s = seq(96);
        let mut out = Vec::new();
        for start in (0..96).step_by(32) {
            out.extend_from_slice(batch_sequential(&s, 32, start).unwrap());
        }
        assert_eq!(out.as_slice(), s.frames());
    }

    #[test]
    fn sequence_rejects_bad_input() {
        let a = Frame::zeros(2, 2, 1);
        let b = Frame::zeros(3, 3, 1);
        assert!(FrameSequence::new("x", vec![a.clone(), b], 30.0).is_err());
        assert!(FrameSequence::new("x", vec![a.clone()], 0.0).is_err());
        let bright = Frame::from_fn(2, 2, 1, |_, _, _| 1.5);
        assert!(FrameSequence::new("x", vec![a, bright], 30.0).is_err());
        assert!(Frame::new(2, 2, 1, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn sequence_assigns_indices_and_timestamps() {
        let s = seq(4);
        assert_eq!(s.get(3).unwrap().index, 3);
        assert!((s.get(3).unwrap().timestamp - 0.1).abs() < 1e-12);
        assert!((s.frame_time() - 1.0 / 30.0).abs() < 1e-15);
    }
}
