//! Curves through keyframe codes in latent space.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::LatentCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathMode {
    /// Straight segments between consecutive keys.
    #[default]
    Linear,
    /// Centripetal Catmull-Rom through the keys, with reflected end tangents.
    Spline,
}

fn check_keys(keys: &[LatentCode]) -> Result<()> {
    if keys.len() < 2 {
        return Err(Error::contract("a latent path needs at least two keys"));
    }
    let d = keys[0].dim();
    if keys.iter().any(|k| k.dim() != d) {
        return Err(Error::contract("keys have different latent dimensions"));
    }
    Ok(())
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Blend `a` at knot `ta` with `b` at knot `tb`, evaluated at `t`.
fn knot_lerp(a: &[f64], b: &[f64], ta: f64, tb: f64, t: f64) -> Vec<f64> {
    let wa = (tb - t) / (tb - ta);
    let wb = (t - ta) / (tb - ta);
    a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
}

fn catmull_rom(p: [&[f64]; 4], u: f64) -> Vec<f64> {
    let dist = |a: &[f64], b: &[f64]| libm::sqrt(libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()));
    let d01 = dist(p[0], p[1]);
    let d12 = dist(p[1], p[2]);
    let d23 = dist(p[2], p[3]);
    if d12 == 0.0 {
        return p[1].to_vec();
    }
    if d01 == 0.0 || d23 == 0.0 {
        return lerp(p[1], p[2], u);
    }
    let (t0, t1) = (0.0, d01);
    let t2 = t1 + d12;
    let t3 = t2 + d23;
    let t = t1 + u * d12;
    let a1 = knot_lerp(p[0], p[1], t0, t1, t);
    let a2 = knot_lerp(p[1], p[2], t1, t2, t);
    let a3 = knot_lerp(p[2], p[3], t2, t3, t);
    let b1 = knot_lerp(&a1, &a2, t0, t2, t);
    let b2 = knot_lerp(&a2, &a3, t1, t3, t);
    knot_lerp(&b1, &b2, t1, t2, t)
}

/// Point at parameter `t ∈ [0,1]` of segment `segment` (from `keys[segment]`
/// to `keys[segment + 1]`). `t = 0` and `t = 1` return the keys exactly.
pub fn segment_point(keys: &[LatentCode], segment: usize, t: f64, mode: PathMode) -> Result<LatentCode> {
    check_keys(keys)?;
    if segment + 1 >= keys.len() {
        return Err(Error::contract("segment index out of range"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::contract("segment parameter must lie in [0, 1]"));
    }
    if t == 0.0 {
        return Ok(keys[segment].clone());
    }
    if t == 1.0 {
        return Ok(keys[segment + 1].clone());
    }
    let a = keys[segment].as_slice();
    let b = keys[segment + 1].as_slice();
    let values = match mode {
        PathMode::Linear => lerp(a, b, t),
        PathMode::Spline => {
            let before = match segment.checked_sub(1) {
                Some(i) => keys[i].as_slice().to_vec(),
                None => a.iter().zip(b).map(|(x, y)| 2.0 * x - y).collect(),
            };
            let after = match keys.get(segment + 2) {
                Some(k) => k.as_slice().to_vec(),
                None => b.iter().zip(a).map(|(x, y)| 2.0 * x - y).collect(),
            };
            catmull_rom([&before, a, b, &after], t)
        }
    };
    LatentCode::new(values)
}

/// `steps` samples per segment at `t = j / steps`, followed by the last key:
/// `steps · (keys − 1) + 1` codes in total.
pub fn latent_path(keys: &[LatentCode], steps: usize, mode: PathMode) -> Result<Vec<LatentCode>> {
    check_keys(keys)?;
    if steps == 0 {
        return Err(Error::contract("at least one step per segment is required"));
    }
    let mut out = Vec::with_capacity(steps * (keys.len() - 1) + 1);
    for s in 0..keys.len() - 1 {
        for j in 0..steps {
            out.push(segment_point(keys, s, j as f64 / steps as f64, mode)?);
        }
    }
    out.push(keys[keys.len() - 1].clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn code(v: &[f64]) -> LatentCode {
        LatentCode::new(v.to_vec()).unwrap()
    }

    #[test]
    fn one_step_linear_is_the_keys() {
        let keys = [code(&[0.0, 1.0]), code(&[2.0, -1.0])];
        assert_eq!(latent_path(&keys, 1, PathMode::Linear).unwrap(), keys);
    }

    #[test]
    fn three_steps_hit_thirds() {
        let keys = [code(&[0.0, 3.0]), code(&[3.0, 0.0])];
        let path = latent_path(&keys, 3, PathMode::Linear).unwrap();
        assert_eq!(path.len(), 4);
        assert_eq!(path[1].as_slice(), &[1.0, 2.0]);
        assert_eq!(path[2].as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn spline_passes_through_keys() {
        let keys = [code(&[0.0, 0.0]), code(&[1.0, 2.0]), code(&[3.0, 1.0]), code(&[4.0, 4.0])];
        let path = latent_path(&keys, 5, PathMode::Spline).unwrap();
        assert_eq!(path.len(), 16);
        for (i, k) in keys.iter().enumerate() {
            assert_eq!(&path[i * 5], k);
        }
    }

    #[test]
    fn spline_is_c1_at_keys() {
        let keys = [code(&[0.0, 0.0]), code(&[1.0, 2.0]), code(&[3.0, 1.0])];
        let h = 1e-6;
        let p = |s, t| segment_point(&keys, s, t, PathMode::Spline).unwrap().into_vec();
        let left: Vec<f64> = p(0, 1.0 - h).iter().zip(p(0, 1.0)).map(|(a, b)| (b - a) / h).collect();
        let right: Vec<f64> = p(1, h).iter().zip(p(1, 0.0)).map(|(a, b)| (a - b) / h).collect();
        // Tangents agree in direction once rescaled by the segment knot spans.
        let cross = left[0] * right[1] - left[1] * right[0];
        let dot = left[0] * right[0] + left[1] * right[1];
        assert!(dot > 0.0);
        assert!(cross.abs() < 1e-4 * dot, "{left:?} {right:?}");
    }

    #[test]
    fn repeated_keys_give_constant_segment() {
        let keys = [code(&[1.0, 1.0]), code(&[1.0, 1.0]), code(&[2.0, 0.0])];
        for mode in [PathMode::Linear, PathMode::Spline] {
            let path = latent_path(&keys, 4, mode).unwrap();
            assert!(path[..5].iter().all(|z| z == &keys[0]));
            assert!(path.iter().all(|z| z.as_slice().iter().all(|v| v.is_finite())));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(latent_path(&[code(&[0.0])], 2, PathMode::Linear).is_err());
        assert!(latent_path(&[code(&[0.0]), code(&[0.0, 1.0])], 2, PathMode::Linear).is_err());
        assert!(latent_path(&[code(&[0.0]), code(&[1.0])], 0, PathMode::Linear).is_err());
    }

    proptest! {
        #[test]
        fn collinear_spline_stays_on_line(
            origin in prop::collection::vec(-5.0f64..5.0, 3),
            dir in prop::collection::vec(-1.0f64..1.0, 3),
            ts in prop::collection::vec(-4.0f64..4.0, 3..5),
        ) {
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let keys: Vec<LatentCode> = ts.iter()
                .map(|t| code(&origin.iter().zip(&dir).map(|(o, d)| o + t * d).collect::<Vec<_>>()))
                .collect();
            for z in latent_path(&keys, 7, PathMode::Spline).unwrap() {
                let rel: Vec<f64> = z.as_slice().iter().zip(&origin).map(|(a, b)| a - b).collect();
                let along = rel.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() / (norm * norm);
                let off = rel.iter().zip(&dir).map(|(a, b)| (a - along * b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(off < 1e-6, "off-line by {}", off);
            }
        }

        #[test]
        fn linear_progress_is_monotone(a in prop::collection::vec(-3.0f64..3.0, 4), b in prop::collection::vec(-3.0f64..3.0, 4), steps in 1usize..12) {
            let d: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
            prop_assume!(d.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            let path = latent_path(&[code(&a), code(&b)], steps, PathMode::Linear).unwrap();
            let proj: Vec<f64> = path.iter().map(|z| z.as_slice().iter().zip(&d).map(|(x, y)| x * y).sum()).collect();
            prop_assert!(proj.windows(2).all(|w| w[1] > w[0]));
            prop_assert_eq!(path.len(), steps + 1);
        }
    }
}
