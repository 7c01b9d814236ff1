//! Screened Poisson blending on the pixel grid.
//!
//! Solves `(L + λI) f = L s + λ t` per channel, where `L` is the 5-point graph
//! Laplacian with reflective boundary (`(Lf)_p = Σ_q (f_p − f_q)` over
//! in-grid neighbours), `s` supplies gradients and `t` supplies colour. `L` is
//! symmetric positive semi-definite, so the system is solved by conjugate
//! gradients. At `λ = 0` the solution is fixed up to a constant, which is
//! chosen so that `mean(f) = mean(s)`.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Absolute ∞-norm the conjugate-gradient residual is driven below.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

/// `(L + λI) f`.
fn apply(f: &[f64], w: usize, h: usize, lambda: f64, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let v = f[p];
            let mut acc = lambda * v;
            if x > 0 {
                acc += v - f[p - 1];
            }
            if x + 1 < w {
                acc += v - f[p + 1];
            }
            if y > 0 {
                acc += v - f[p - w];
            }
            if y + 1 < h {
                acc += v - f[p + w];
            }
            out[p] = acc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSolve {
    /// Solution before clamping.
    pub values: Vec<f64>,
    /// `‖(L + λI) f − rhs‖∞` of the returned values.
    pub residual: f64,
    pub iterations: usize,
    /// `½ fᵀ(L + λI) f − fᵀ rhs` at the start and after every iteration.
    pub energy: Vec<f64>,
}

/// Solves one channel. `target` is also the starting point.
pub fn solve_plane(target: &[f64], source: &[f64], w: usize, h: usize, lambda: f64) -> Result<PlaneSolve> {
    let n = w * h;
    if target.len() != n || source.len() != n || n == 0 {
        return Err(Error::contract("plane sizes do not match the grid"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::contract("screening weight must be finite and non-negative"));
    }
    let mut rhs = alloc::vec![0.0; n];
    apply(source, w, h, 0.0, &mut rhs);
    rhs.iter_mut().zip(target).for_each(|(r, t)| *r += lambda * t);

    let mut f = target.to_vec();
    let mut af = alloc::vec![0.0; n];
    let energy_of = |f: &[f64], af: &[f64]| 0.5 * dot(f, af) - dot(f, &rhs);
    apply(&f, w, h, lambda, &mut af);
    let mut r: Vec<f64> = rhs.iter().zip(&af).map(|(b, a)| b - a).collect();
    let mut energy = alloc::vec![energy_of(&f, &af)];
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    let mut ad = alloc::vec![0.0; n];
    let max_iter = 20 * n + 100;
    let mut iterations = 0;
    while inf_norm(&r) >= SOLVER_TOLERANCE && iterations < max_iter {
        apply(&d, w, h, lambda, &mut ad);
        let dad = dot(&d, &ad);
        if dad <= 0.0 {
            break;
        }
        let alpha = rr / dad;
        f.iter_mut().zip(&d).for_each(|(x, di)| *x += alpha * di);
        iterations += 1;
        if iterations % 64 == 0 {
            // Recompute the residual to stop rounding drift.
            apply(&f, w, h, lambda, &mut af);
            r.iter_mut().zip(rhs.iter().zip(&af)).for_each(|(ri, (b, a))| *ri = b - a);
        } else {
            r.iter_mut().zip(&ad).for_each(|(ri, a)| *ri -= alpha * a);
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        d.iter_mut().zip(&r).for_each(|(di, ri)| *di = ri + beta * *di);
        apply(&f, w, h, lambda, &mut af);
        energy.push(energy_of(&f, &af));
    }
    if lambda == 0.0 {
        let shift = (source.iter().sum::<f64>() - f.iter().sum::<f64>()) / n as f64;
        f.iter_mut().for_each(|v| *v += shift);
    }
    apply(&f, w, h, lambda, &mut af);
    let residual = inf_norm(&rhs.iter().zip(&af).map(|(b, a)| b - a).collect::<Vec<_>>());
    Ok(PlaneSolve {
        values: f,
        residual,
        iterations,
        energy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendResult {
    /// Blended frame clamped to [0, 1].
    pub frame: Frame,
    /// Per-channel solves before clamping.
    pub channels: Vec<PlaneSolve>,
}

impl BlendResult {
    pub fn max_residual(&self) -> f64 {
        self.channels.iter().fold(0.0, |m, c| m.max(c.residual))
    }
}

/// Takes colour from `target` and gradients from `warped_source`; larger
/// `lambda` pulls the result toward `target`.
pub fn screened_poisson_blend(target: &Frame, warped_source: &Frame, lambda: f64) -> Result<BlendResult> {
    if !target.same_shape(warped_source) {
        return Err(Error::contract("blend inputs differ in shape"));
    }
    let (w, h) = (target.width(), target.height());
    let mut data = Vec::with_capacity(target.len());
    let mut channels = Vec::with_capacity(target.channels());
    for c in 0..target.channels() {
        let solve = solve_plane(target.channel(c), warped_source.channel(c), w, h, lambda)?;
        data.extend(solve.values.iter().map(|v| v.clamp(0.0, 1.0)));
        channels.push(solve);
    }
    Ok(BlendResult {
        frame: Frame::from_raw(w, h, target.channels(), data),
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(w: usize, h: usize, phase: f64) -> Frame {
        Frame::from_fn(w, h, 2, |c, y, x| {
            0.5 + 0.3 * libm::sin(0.2 * x as f64 + phase + c as f64) * libm::cos(0.15 * y as f64)
        })
    }

    #[test]
    fn identical_inputs_are_a_fixed_point() {
        let f = smooth(20, 14, 0.0);
        for lambda in [0.0, 1.0, 50.0] {
            let out = screened_poisson_blend(&f, &f, lambda).unwrap();
            assert!(out.max_residual() < 1e-8);
            let diff = out.frame.data().iter().zip(f.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff < 1e-8, "λ={lambda}: {diff}");
        }
    }

    #[test]
    fn energy_decreases_during_solve() {
        let t = smooth(24, 24, 0.0);
        let s = smooth(24, 24, 1.3);
        let solve = solve_plane(t.channel(0), s.channel(0), 24, 24, 0.5).unwrap();
        assert!(solve.residual < 1e-8);
        assert!(solve.energy.windows(2).all(|e| e[1] <= e[0] + 1e-9));
        assert!(solve.iterations > 1);
    }

    #[test]
    fn zero_lambda_copies_gradients_and_pins_mean() {
        let t = smooth(16, 12, 0.0);
        let s = smooth(16, 12, 2.0);
        let solve = solve_plane(t.channel(1), s.channel(1), 16, 12, 0.0).unwrap();
        let src = s.channel(1);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&solve.values) - mean(src)).abs() < 1e-12);
        for (v, s) in solve.values.iter().zip(src) {
            assert!((v - s).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = smooth(4, 4, 0.0);
        assert!(screened_poisson_blend(&f, &smooth(4, 5, 0.0), 1.0).is_err());
        assert!(screened_poisson_blend(&f, &f, -1.0).is_err());
        assert!(screened_poisson_blend(&f, &f, f64::NAN).is_err());
    }
}
