//! The deformation operator and multi-step reconstruction.
//!
//! Warping is backward (gather): output pixel `(r, c)` is the bilinear sample
//! of the input at `(r + dy, c + dx)`. Sample positions outside the image are
//! clamped to the border, so every output pixel is a convex combination of
//! input pixels.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::DisplacementField;
use crate::frame::{mean_l1_unchecked, Frame, FrameSequence};

#[derive(Clone, Copy)]
struct Axis {
    i0: usize,
    i1: usize,
    t: f64,
    /// False when the position was clamped, so it does not move with the field.
    live: bool,
}

#[inline]
fn axis(p: f64, n: usize) -> Axis {
    if n == 1 {
        return Axis {
            i0: 0,
            i1: 0,
            t: 0.0,
            live: false,
        };
    }
    let max = (n - 1) as f64;
    let (q, live) = if p < 0.0 {
        (0.0, false)
    } else if p > max {
        (max, false)
    } else {
        (p, true)
    };
    let i0 = (libm::floor(q) as usize).min(n - 2);
    Axis {
        i0,
        i1: i0 + 1,
        t: q - i0 as f64,
        live,
    }
}

/// Warps planar `channels × height × width` data by a planar field.
pub(crate) fn warp_raw(width: usize, height: usize, channels: usize, img: &[f64], field: &[f64]) -> Vec<f64> {
    let n = width * height;
    let mut out = alloc::vec![0.0; channels * n];
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let ax = axis(x as f64 + field[p], width);
            let ay = axis(y as f64 + field[n + p], height);
            let (w00, w01) = ((1.0 - ay.t) * (1.0 - ax.t), (1.0 - ay.t) * ax.t);
            let (w10, w11) = (ay.t * (1.0 - ax.t), ay.t * ax.t);
            for c in 0..channels {
                let plane = &img[c * n..(c + 1) * n];
                let v00 = plane[ay.i0 * width + ax.i0];
                let v01 = plane[ay.i0 * width + ax.i1];
                let v10 = plane[ay.i1 * width + ax.i0];
                let v11 = plane[ay.i1 * width + ax.i1];
                let v = if ax.t == 0.0 && ay.t == 0.0 {
                    v00
                } else {
                    w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11
                };
                let lo = v00.min(v01).min(v10).min(v11);
                let hi = v00.max(v01).max(v10).max(v11);
                out[c * n + p] = v.clamp(lo, hi);
            }
        }
    }
    out
}

/// Accumulates gradients of a warp given the gradient of its output.
///
/// `grad_img`, when present, receives the gradient with respect to the input
/// image; `grad_field` receives the gradient with respect to the field.
#[allow(clippy::too_many_arguments)]
pub(crate) fn warp_backward_raw(
    width: usize,
    height: usize,
    channels: usize,
    img: &[f64],
    field: &[f64],
    grad_out: &[f64],
    mut grad_img: Option<&mut [f64]>,
    grad_field: &mut [f64],
) {
    let n = width * height;
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let ax = axis(x as f64 + field[p], width);
            let ay = axis(y as f64 + field[n + p], height);
            let (mut gdx, mut gdy) = (0.0, 0.0);
            for c in 0..channels {
                let g = grad_out[c * n + p];
                if g == 0.0 {
                    continue;
                }
                let plane = &img[c * n..(c + 1) * n];
                let i00 = ay.i0 * width + ax.i0;
                let i01 = ay.i0 * width + ax.i1;
                let i10 = ay.i1 * width + ax.i0;
                let i11 = ay.i1 * width + ax.i1;
                let (v00, v01, v10, v11) = (plane[i00], plane[i01], plane[i10], plane[i11]);
                if ax.live {
                    gdx += g * ((1.0 - ay.t) * (v01 - v00) + ay.t * (v11 - v10));
                }
                if ay.live {
                    gdy += g * ((1.0 - ax.t) * (v10 - v00) + ax.t * (v11 - v01));
                }
                if let Some(gi) = grad_img.as_deref_mut() {
                    let gp = &mut gi[c * n..(c + 1) * n];
                    gp[i00] += g * (1.0 - ay.t) * (1.0 - ax.t);
                    gp[i01] += g * (1.0 - ay.t) * ax.t;
                    gp[i10] += g * ay.t * (1.0 - ax.t);
                    gp[i11] += g * ay.t * ax.t;
                }
            }
            grad_field[p] += gdx;
            grad_field[n + p] += gdy;
        }
    }
}

fn check_field(frame: &Frame, field: &DisplacementField) -> Result<()> {
    if (frame.width(), frame.height()) != (field.width(), field.height()) {
        return Err(Error::contract("displacement field grid does not match the frame"));
    }
    if !field.is_finite() {
        return Err(Error::contract("displacement field contains non-finite values"));
    }
    Ok(())
}

/// Bilinear backward warp of `frame` by `field`.
pub fn warp(frame: &Frame, field: &DisplacementField) -> Result<Frame> {
    check_field(frame, field)?;
    let data = warp_raw(frame.width(), frame.height(), frame.channels(), frame.data(), field.data());
    Ok(Frame::from_raw(frame.width(), frame.height(), frame.channels(), data).with_position(frame.index, frame.timestamp))
}

/// Warps `f0` once by the sum of all `fields`.
pub fn summed_reconstruct(f0: &Frame, fields: &[DisplacementField]) -> Result<Frame> {
    let (first, rest) = fields
        .split_first()
        .ok_or_else(|| Error::contract("reconstruction needs at least one field"))?;
    check_field(f0, first)?;
    let mut total = first.clone();
    for u in rest {
        check_field(f0, u)?;
        total.add_assign(u)?;
    }
    warp(f0, &total)
}

/// Warps `f0` by each field in turn.
pub fn composed_reconstruct(f0: &Frame, fields: &[DisplacementField]) -> Result<Frame> {
    if fields.is_empty() {
        return Err(Error::contract("reconstruction needs at least one field"));
    }
    let mut current = f0.clone();
    for u in fields {
        current = warp(&current, u)?;
    }
    Ok(current)
}

/// Mean over frames of the mean per-pixel L1 distance.
pub fn deformation_loss(pred: &[Frame], truth: &[Frame]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::contract("prediction and ground truth differ in length"));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        if !p.same_shape(t) {
            return Err(Error::contract("prediction and ground truth differ in shape"));
        }
        total += mean_l1_unchecked(p.data(), t.data());
    }
    Ok(total / pred.len() as f64)
}

/// Per-frame reconstruction error from frame 0 by the two multi-step methods.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulationCurves {
    /// L1 of `summed_reconstruct(f0, u[..=i])` against frame `i + 1`.
    pub summed: Vec<f64>,
    /// L1 of `composed_reconstruct(f0, u[..=i])` against frame `i + 1`.
    pub composed: Vec<f64>,
}

/// Error accumulated when rebuilding the whole clip from its first frame with
/// the one-step fields `fields[i]: frame i -> frame i + 1`.
pub fn error_accumulation_curves(seq: &FrameSequence, fields: &[DisplacementField]) -> Result<AccumulationCurves> {
    let frames = seq.frames();
    if frames.len() < 2 || fields.len() != frames.len() - 1 {
        return Err(Error::contract("need one field per consecutive frame pair"));
    }
    let f0 = &frames[0];
    let mut summed = Vec::with_capacity(fields.len());
    let mut composed = Vec::with_capacity(fields.len());
    let mut total = DisplacementField::zeros(f0.width(), f0.height());
    let mut current = f0.clone();
    for (u, truth) in fields.iter().zip(&frames[1..]) {
        check_field(f0, u)?;
        total.add_assign(u)?;
        let s = warp(f0, &total)?;
        summed.push(mean_l1_unchecked(s.data(), truth.data()));
        current = warp(&current, u)?;
        composed.push(mean_l1_unchecked(current.data(), truth.data()));
    }
    Ok(AccumulationCurves { summed, composed })
}
