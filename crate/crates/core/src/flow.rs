//! Dense optical flow by coarse-to-fine iterative Lucas–Kanade.
//!
//! Flow follows the warp convention: the estimated field `u` satisfies
//! `source(p + u(p)) ≈ target(p)`, so `warp(source, u)` moves the source
//! toward the target.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DisplacementField;
use crate::frame::{mean_l1_unchecked, Frame};
use crate::warp::{warp, warp_raw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Half-width of the square aggregation window.
    pub window_radius: usize,
    pub iterations: usize,
    /// Coarsest pyramid level side; levels stop halving below this.
    pub min_size: usize,
    pub max_levels: usize,
    /// Tikhonov weight added to the normal equations.
    pub regularisation: f64,
    /// Largest update per iteration, in pixels at the current level.
    pub max_step: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            window_radius: 2,
            iterations: 6,
            min_size: 8,
            max_levels: 5,
            regularisation: 1e-4,
            max_step: 1.0,
        }
    }
}

/// Channel mean of a planar image.
fn luminance(frame: &Frame) -> Vec<f64> {
    let n = frame.plane_len();
    let c = frame.channels() as f64;
    (0..n)
        .map(|p| (0..frame.channels()).map(|k| frame.data()[k * n + p]).sum::<f64>() / c)
        .collect()
}

/// 2× box downsample; odd trailing rows/columns are dropped.
fn halve(img: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (w2, h2) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(w2 * h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let i = 2 * y * w + 2 * x;
            out.push(0.25 * (img[i] + img[i + 1] + img[i + w] + img[i + w + 1]));
        }
    }
    (out, w2, h2)
}

/// Doubles a field to a `w × h` grid, scaling the vectors by 2. Pixels past
/// the doubled extent copy the nearest coarse value.
fn double(field: &[f64], cw: usize, ch: usize, w: usize, h: usize) -> Vec<f64> {
    let (cn, n) = (cw * ch, w * h);
    let mut out = alloc::vec![0.0; 2 * n];
    for y in 0..h {
        let cy = (y / 2).min(ch - 1);
        for x in 0..w {
            let cx = (x / 2).min(cw - 1);
            out[y * w + x] = 2.0 * field[cy * cw + cx];
            out[n + y * w + x] = 2.0 * field[cn + cy * cw + cx];
        }
    }
    out
}

/// Sums over a `(2r+1)²` window (clipped at the border) for every pixel.
fn box_sum(v: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut integral = alloc::vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += v[y * w + x];
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            out.push(integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0] + integral[y0 * (w + 1) + x0]);
        }
    }
    out
}

fn refine(src: &[f64], tgt: &[f64], w: usize, h: usize, field: &mut [f64], params: &FlowParams) {
    let n = w * h;
    for _ in 0..params.iterations {
        let warped = warp_raw(w, h, 1, src, field);
        let (mut ixx, mut ixy, mut iyy, mut ixt, mut iyt) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for y in 0..h {
            for x in 0..w {
                let at = |xx: usize, yy: usize| warped[yy * w + xx];
                let gx = if w > 1 {
                    let (l, r) = (x.saturating_sub(1), (x + 1).min(w - 1));
                    (at(r, y) - at(l, y)) / (r - l) as f64
                } else {
                    0.0
                };
                let gy = if h > 1 {
                    let (u, d) = (y.saturating_sub(1), (y + 1).min(h - 1));
                    (at(x, d) - at(x, u)) / (d - u) as f64
                } else {
                    0.0
                };
                let it = warped[y * w + x] - tgt[y * w + x];
                ixx.push(gx * gx);
                ixy.push(gx * gy);
                iyy.push(gy * gy);
                ixt.push(gx * it);
                iyt.push(gy * it);
            }
        }
        let r = params.window_radius;
        let (sxx, sxy, syy, sxt, syt) = (
            box_sum(&ixx, w, h, r),
            box_sum(&ixy, w, h, r),
            box_sum(&iyy, w, h, r),
            box_sum(&ixt, w, h, r),
            box_sum(&iyt, w, h, r),
        );
        let mut moved = false;
        for p in 0..n {
            let a = sxx[p] + params.regularisation;
            let d = syy[p] + params.regularisation;
            let b = sxy[p];
            let det = a * d - b * b;
            if det <= 0.0 || !det.is_finite() {
                continue;
            }
            let du = (-(d * sxt[p]) + b * syt[p]) / det;
            let dv = (b * sxt[p] - a * syt[p]) / det;
            let s = params.max_step;
            let (du, dv) = (du.clamp(-s, s), dv.clamp(-s, s));
            if du.abs() > 1e-9 || dv.abs() > 1e-9 {
                moved = true;
            }
            field[p] += du;
            field[n + p] += dv;
        }
        if !moved {
            break;
        }
    }
}

/// Dense flow from `source` to `target` on the luminance channel.
pub fn estimate_flow(source: &Frame, target: &Frame, params: &FlowParams) -> Result<DisplacementField> {
    if !source.same_shape(target) {
        return Err(Error::contract("flow needs frames of the same shape"));
    }
    let (w, h) = (source.width(), source.height());
    let mut pyramid = alloc::vec![(luminance(source), luminance(target), w, h)];
    while pyramid.len() < params.max_levels.max(1) {
        let (s, t, lw, lh) = pyramid.last().expect("non-empty pyramid");
        if lw / 2 < params.min_size || lh / 2 < params.min_size {
            break;
        }
        let (s2, w2, h2) = halve(s, *lw, *lh);
        let (t2, _, _) = halve(t, *lw, *lh);
        pyramid.push((s2, t2, w2, h2));
    }
    let mut field: Vec<f64> = Vec::new();
    let mut prev = (0, 0);
    for (s, t, lw, lh) in pyramid.iter().rev() {
        field = if field.is_empty() {
            alloc::vec![0.0; 2 * lw * lh]
        } else {
            double(&field, prev.0, prev.1, *lw, *lh)
        };
        refine(s, t, *lw, *lh, &mut field, params);
        prev = (*lw, *lh);
    }
    if field.iter().any(|v| !v.is_finite()) {
        field.iter_mut().for_each(|v| *v = 0.0);
    }
    DisplacementField::new(w, h, field)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowWarp {
    pub frame: Frame,
    pub field: DisplacementField,
    /// The estimated flow made the match worse and the identity was used.
    pub fell_back: bool,
}

/// Warps `source` toward `target` along estimated flow. Never does worse
/// than the unwarped source in mean L1.
pub fn flow_warp(source: &Frame, target: &Frame, params: &FlowParams) -> Result<FlowWarp> {
    let field = estimate_flow(source, target, params)?;
    let warped = warp(source, &field)?;
    let before = mean_l1_unchecked(source.data(), target.data());
    let after = mean_l1_unchecked(warped.data(), target.data());
    if after > before {
        return Ok(FlowWarp {
            frame: source.clone(),
            field: DisplacementField::zeros(source.width(), source.height()),
            fell_back: true,
        });
    }
    Ok(FlowWarp {
        frame: warped,
        field,
        fell_back: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::mean_l1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn texture(shift_x: f64, shift_y: f64) -> Frame {
        Frame::from_fn(48, 48, 1, |_, y, x| {
            let (x, y) = (x as f64 - shift_x, y as f64 - shift_y);
            0.5 + 0.2 * libm::sin(x * 0.31) * libm::cos(y * 0.23) + 0.15 * libm::sin((x + 2.0 * y) * 0.17)
        })
    }

    #[test]
    fn self_flow_is_near_zero() {
        let f = texture(0.0, 0.0);
        let out = flow_warp(&f, &f, &FlowParams::default()).unwrap();
        assert!(out.field.mean_magnitude() < 1e-6);
        let control = warp(&f, &DisplacementField::constant(48, 48, 1.0, 0.0)).unwrap();
        assert!(mean_l1(&out.frame, &f).unwrap() < mean_l1(&control, &f).unwrap());
    }

    #[test]
    fn recovers_two_pixel_shift() {
        // target(p) = source(p - (2, 0)), so the backward field is (-2, 0).
        let source = texture(0.0, 0.0);
        let target = texture(2.0, 0.0);
        let field = estimate_flow(&source, &target, &FlowParams::default()).unwrap();
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 8..40 {
            for x in 8..40 {
                let (dx, dy) = field.at(y, x);
                sx += dx;
                sy += dy;
                n += 1.0;
            }
        }
        let (mx, my) = (sx / n, sy / n);
        assert!((libm::hypot(mx, my) - 2.0).abs() < 0.5, "mean flow ({mx}, {my})");
        assert!((mx + 2.0).abs() < 0.5);
    }

    #[test]
    fn noise_pair_stays_valid_and_no_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut noise = || Frame::new(32, 32, 3, (0..32 * 32 * 3).map(|_| rng.random::<f64>()).collect()).unwrap();
        let (a, b) = (noise(), noise());
        let out = flow_warp(&a, &b, &FlowParams::default()).unwrap();
        assert!(out.frame.is_unit_range());
        assert!(mean_l1(&out.frame, &b).unwrap() <= mean_l1(&a, &b).unwrap() + 1e-6);
    }

    #[test]
    fn box_sum_matches_direct_sum() {
        let v: Vec<f64> = (0..35).map(|i| i as f64).collect();
        let s = box_sum(&v, 7, 5, 1);
        // Corner (0,0): rows 0..2, cols 0..2.
        assert_eq!(s[0], 0.0 + 1.0 + 7.0 + 8.0);
        // Centre (2,3).
        let direct: f64 = (1..4).flat_map(|y| (2..5).map(move |x| (y * 7 + x) as f64)).sum();
        assert_eq!(s[2 * 7 + 3], direct);
    }
}
