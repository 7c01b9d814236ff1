//! The linear encoder: an orthonormal PCA basis over flattened frames.
//!
//! Because the basis rows are orthonormal, the encoder map
//! `f -> B (f - mean)` has operator 2-norm exactly 1, so an image
//! perturbation never grows when it reaches latent space.

use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence};

/// A coordinate in the latent space `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("latent code contains non-finite values"));
        }
        Ok(LatentCode { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        LatentCode { values }
    }

    pub fn zeros(dim: usize) -> Self {
        LatentCode {
            values: alloc::vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    pub fn distance_squared(&self, other: &LatentCode) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    width: usize,
    height: usize,
    channels: usize,
    mean: Vec<f64>,
    /// `dim` rows of length `width * height * channels`, row-major.
    rows: Vec<f64>,
    dim: usize,
    explained_variance: Vec<f64>,
}

/// Relative eigenvalue floor below which a direction counts as zero-variance.
const RANK_TOLERANCE: f64 = 1e-10;

impl PcaBasis {
    /// Reassembles a basis from stored parts, re-validating its shape.
    pub fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        mean: Vec<f64>,
        rows: Vec<f64>,
        explained_variance: Vec<f64>,
    ) -> Result<Self> {
        let d = width * height * channels;
        let dim = explained_variance.len();
        if mean.len() != d || rows.len() != dim * d {
            return Err(Error::contract("basis parts do not match the frame shape"));
        }
        Ok(PcaBasis {
            width,
            height,
            channels,
            mean,
            rows,
            dim,
            explained_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(height, width, channels)` of the frames this basis encodes.
    pub fn frame_shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_frame(&self) -> Frame {
        Frame::from_raw(self.width, self.height, self.channels, self.mean.clone())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.mean.len();
        &self.rows[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        if frame.shape() != self.frame_shape() {
            return Err(Error::contract("frame shape does not match the basis"));
        }
        Ok(())
    }

    /// `z = B (f - mean)`.
    pub fn encode(&self, frame: &Frame) -> Result<LatentCode> {
        self.check_frame(frame)?;
        Ok(LatentCode::from_raw(self.encode_raw(frame.data())))
    }

    pub(crate) fn encode_raw(&self, data: &[f64]) -> Vec<f64> {
        let centred: Vec<f64> = data.iter().zip(&self.mean).map(|(f, m)| f - m).collect();
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(&centred).map(|(b, c)| b * c).sum())
            .collect()
    }

    /// `mean + Bᵀ z`, unclamped.
    pub fn reconstruct(&self, z: &LatentCode) -> Result<Frame> {
        if z.dim() != self.dim {
            return Err(Error::contract("latent dimension does not match the basis"));
        }
        let mut out = self.mean.clone();
        for (i, &zi) in z.as_slice().iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.row(i)) {
                *o += zi * b;
            }
        }
        Ok(Frame::from_raw(self.width, self.height, self.channels, out))
    }

    /// Root-mean-square per-pixel residual of projecting `frame` onto the
    /// basis span.
    pub fn projection_residual(&self, frame: &Frame) -> Result<f64> {
        let z = self.encode(frame)?;
        let back = self.reconstruct(&z)?;
        let sq: f64 = frame.data().iter().zip(back.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(libm::sqrt(sq / frame.len() as f64))
    }

    /// Largest singular value of the encoder map, by power iteration on `BᵀB`.
    pub fn encoder_operator_norm(&self) -> f64 {
        let d = self.mean.len();
        if self.dim == 0 {
            return 0.0;
        }
        // Deterministic start vector with a component along every row.
        let mut v: Vec<f64> = (0..d).map(|j| 1.0 + ((j * 7919) % 101) as f64 / 101.0).collect();
        let mut sigma = 0.0;
        for _ in 0..50 {
            let nv = libm::sqrt(v.iter().map(|x| x * x).sum());
            v.iter_mut().for_each(|x| *x /= nv);
            let bv: Vec<f64> = (0..self.dim)
                .map(|i| self.row(i).iter().zip(&v).map(|(b, x)| b * x).sum())
                .collect();
            let next_sigma = libm::sqrt(bv.iter().map(|x| x * x).sum());
            let mut w = alloc::vec![0.0; d];
            for (i, &bi) in bv.iter().enumerate() {
                for (o, b) in w.iter_mut().zip(self.row(i)) {
                    *o += bi * b;
                }
            }
            v = w;
            if (next_sigma - sigma).abs() < 1e-15 {
                sigma = next_sigma;
                break;
            }
            sigma = next_sigma;
        }
        sigma
    }

    /// Largest entry of `|B Bᵀ - I|`.
    pub fn gram_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let dot: f64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Fits a `dim`-row basis to every frame of the sequence.
pub fn fit_pca_basis(seq: &FrameSequence, dim: usize) -> Result<PcaBasis> {
    fit_frames(seq.frames(), dim)
}

pub fn fit_frames(frames: &[Frame], dim: usize) -> Result<PcaBasis> {
    let first = frames.first().ok_or_else(|| Error::contract("cannot fit a basis to zero frames"))?;
    if frames.iter().any(|f| !f.same_shape(first)) {
        return Err(Error::contract("all frames must share a shape"));
    }
    let n = frames.len();
    let d = first.len();
    if dim > n.min(d) {
        return Err(Error::contract("basis dimension exceeds min(frame count, pixel count)"));
    }

    let mut mean = alloc::vec![0.0; d];
    for f in frames {
        for (m, v) in mean.iter_mut().zip(f.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // Centred data, one frame per row.
    let x = DMatrix::from_fn(n, d, |i, j| frames[i].data()[j] - mean[j]);
    let total: f64 = x.iter().map(|v| v * v).sum();
    if dim > 0 && total == 0.0 {
        return Err(Error::DegenerateVariance);
    }

    let mut rows: Vec<f64> = Vec::with_capacity(dim * d);
    let mut variance = Vec::with_capacity(dim);
    let normaliser = (n.max(2) - 1) as f64;

    if dim > 0 {
        // Work in the smaller of the Gram (n × n) and covariance (d × d) spaces.
        let small = if n <= d { &x * x.transpose() } else { x.transpose() * &x };
        let eig = SymmetricEigen::new(small);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]].max(0.0);
        for &k in order.iter().take(dim) {
            let lambda = eig.eigenvalues[k].max(0.0);
            variance.push(lambda / normaliser);
            if lambda <= RANK_TOLERANCE * top {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            if n <= d {
                let scale = 1.0 / libm::sqrt(lambda);
                rows.extend((0..d).map(|j| (0..n).map(|i| x[(i, j)] * v[i]).sum::<f64>() * scale));
            } else {
                rows.extend(v.iter().copied());
            }
        }
    }

    orthonormalise(&mut rows, d);
    complete_basis(&mut rows, d, dim);
    fix_signs(&mut rows, d);

    Ok(PcaBasis {
        width: first.width(),
        height: first.height(),
        channels: first.channels(),
        mean,
        rows,
        dim,
        explained_variance: variance,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two passes of modified Gram-Schmidt over the rows.
fn orthonormalise(rows: &mut [f64], d: usize) {
    let count = rows.len() / d;
    for i in 0..count {
        for _ in 0..2 {
            for j in 0..i {
                let (done, rest) = rows.split_at_mut(i * d);
                let prev = &done[j * d..(j + 1) * d];
                let cur = &mut rest[..d];
                let p = dot(prev, cur);
                cur.iter_mut().zip(prev).for_each(|(c, q)| *c -= p * q);
            }
            let cur = &mut rows[i * d..(i + 1) * d];
            let norm = libm::sqrt(dot(cur, cur));
            cur.iter_mut().for_each(|c| *c /= norm);
        }
    }
}

/// Pads a rank-deficient basis with orthonormal complement directions drawn
/// from the standard basis.
fn complete_basis(rows: &mut Vec<f64>, d: usize, dim: usize) {
    let mut candidate = 0;
    while rows.len() / d < dim && candidate < d {
        let mut v = alloc::vec![0.0; d];
        v[candidate] = 1.0;
        candidate += 1;
        for _ in 0..2 {
            for r in rows.chunks_exact(d) {
                let p = dot(r, &v);
                v.iter_mut().zip(r).for_each(|(x, q)| *x -= p * q);
            }
        }
        let norm = libm::sqrt(dot(&v, &v));
        if norm > 0.5 {
            v.iter_mut().for_each(|x| *x /= norm);
            rows.extend_from_slice(&v);
        }
    }
}

/// Makes the first non-negligible coefficient of each row positive.
fn fix_signs(rows: &mut [f64], d: usize) {
    for r in rows.chunks_exact_mut(d) {
        if let Some(&lead) = r.iter().find(|v| v.abs() > 1e-9) {
            if lead < 0.0 {
                r.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lcg_frames(n: usize, w: usize, h: usize, seed: u64) -> Vec<Frame> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                Frame::from_fn(w, h, 1, |_, _, _| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 11) as f64 / (1u64 << 53) as f64
                })
            })
            .collect()
    }

    #[test]
    fn plane_frames_reconstruct_exactly() {
        let a = lcg_frames(1, 4, 4, 1).remove(0);
        let b = lcg_frames(1, 4, 4, 2).remove(0);
        let frames: Vec<Frame> = [(0.2, 0.3), (0.7, 0.1), (0.4, 0.6)]
            .iter()
            .map(|&(s, t)| Frame::new(4, 4, 1, a.data().iter().zip(b.data()).map(|(x, y)| s * x + t * y).collect()).unwrap())
            .collect();
        let basis = fit_frames(&frames, 2).unwrap();
        for f in &frames {
            assert!(basis.projection_residual(f).unwrap() < 1e-6);
        }
    }

    #[test]
    fn encode_examples() {
        let frames = lcg_frames(10, 5, 5, 3);
        let basis = fit_frames(&frames, 4).unwrap();
        let z = basis.encode(&basis.mean_frame()).unwrap();
        assert!(z.as_slice().iter().all(|v| v.abs() < 1e-12));

        let e1 = Frame::new(5, 5, 1, basis.mean().iter().zip(basis.row(0)).map(|(m, r)| m + r).collect()).unwrap();
        let z = basis.encode(&e1).unwrap();
        assert!((z.as_slice()[0] - 1.0).abs() < 1e-12);
        assert!(z.as_slice()[1..].iter().all(|v| v.abs() < 1e-12));

        for f in &frames {
            let z = basis.encode(f).unwrap();
            let centred: f64 = f.data().iter().zip(basis.mean()).map(|(a, m)| (a - m) * (a - m)).sum();
            assert!(z.norm() <= libm::sqrt(centred) + 1e-12);
        }
        assert!(basis.encode(&Frame::zeros(4, 4, 1)).is_err());
    }

    #[test]
    fn duplicated_frames_give_same_basis() {
        let frames = lcg_frames(6, 4, 4, 9);
        let twice: Vec<Frame> = frames.iter().chain(&frames).cloned().collect();
        let a = fit_frames(&frames, 3).unwrap();
        let b = fit_frames(&twice, 3).unwrap();
        for (x, y) in a.rows().iter().zip(b.rows()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        let frames = lcg_frames(3, 2, 2, 4);
        assert!(matches!(fit_frames(&frames, 4), Err(Error::Contract(_))));
        let flat = vec![Frame::zeros(3, 3, 1); 5];
        assert_eq!(fit_frames(&flat, 1), Err(Error::DegenerateVariance));
        assert!(fit_frames(&flat, 0).is_ok());
    }

    #[test]
    fn rank_deficient_request_is_completed_orthonormally() {
        // Three frames span at most a 2-dimensional centred subspace.
        let frames = lcg_frames(3, 3, 3, 5);
        let basis = fit_frames(&frames, 3).unwrap();
        assert_eq!(basis.dim(), 3);
        assert!(basis.gram_deviation() < 1e-12);
        assert!((basis.encoder_operator_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tall_data_uses_covariance_route() {
        // More frames than pixels.
        let frames = lcg_frames(30, 3, 2, 6);
        let basis = fit_frames(&frames, 6).unwrap();
        assert!(basis.gram_deviation() < 1e-10);
        let ev = basis.explained_variance();
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    }
}
