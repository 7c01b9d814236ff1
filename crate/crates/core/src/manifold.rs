//! The configuration manifold: a PCA encoder paired with a convolutional
//! decoder from latent codes to configuration points.
//!
//! Training maps a batch of sequential frames to configuration points, takes
//! consecutive differences as displacement fields and rebuilds the batch from
//! its first frame twice: once warping by the running sum of fields, once by
//! composing one warp per field. The loss is the sum of both mean L1 errors.

use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumConfig, CurriculumState};
use crate::error::{Error, Result};
use crate::field::{ConfigurationPoint, DisplacementField};
use crate::frame::{mean_l1_unchecked, Frame, FrameSequence};
use crate::nn::loss::l1_mean;
use crate::nn::optim::{Adam, Optimizer};
use crate::nn::{Gradients, Layer, LayerKind, Network, Tensor};
use crate::pca::{fit_pca_basis, LatentCode, PcaBasis};
use crate::warp::{self, warp_backward_raw, warp_raw, AccumulationCurves};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Side of the grid the dense projection produces.
    pub coarse_size: usize,
    /// Channels at the coarse grid; halved per upsampling block.
    pub base_width: usize,
    pub min_width: usize,
    pub leaky_slope: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            coarse_size: 4,
            base_width: 32,
            min_width: 8,
            leaky_slope: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldConfig {
    pub zdim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub curriculum: CurriculumConfig,
    pub decoder: DecoderConfig,
    /// Warp ground-truth frames (instead of previous reconstructions) along
    /// the composed path.
    pub teacher_forced: bool,
    pub seed: u64,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig {
            zdim: 200,
            learning_rate: 1e-5,
            batch_size: 32,
            curriculum: CurriculumConfig::default(),
            decoder: DecoderConfig::default(),
            teacher_forced: false,
            seed: 0,
        }
    }
}

/// Number of stride-2 upsampling blocks from `coarse` to `size`.
fn upsampling_levels(size: usize, coarse: usize) -> Result<usize> {
    if coarse == 0 || !size.is_multiple_of(coarse) || !(size / coarse).is_power_of_two() {
        return Err(Error::contract(format!(
            "frame size {size} is not the decoder grid {coarse} times a power of two"
        )));
    }
    Ok((size / coarse).trailing_zeros() as usize)
}

/// Fixed input standardisation from the basis variances.
fn input_scale(basis: &PcaBasis) -> Vec<f64> {
    let ev = basis.explained_variance();
    let floor = 1e-6 * ev.iter().cloned().fold(0.0, f64::max) + 1e-12;
    ev.iter().map(|v| 1.0 / libm::sqrt(v.max(0.0) + floor)).collect()
}

/// Decoder layers for `basis`, with all parameters zero.
pub fn decoder_architecture(basis: &PcaBasis, config: &DecoderConfig) -> Result<Network> {
    let (h, w, _) = basis.frame_shape();
    if h != w {
        return Err(Error::contract("the decoder expects square frames"));
    }
    let levels = upsampling_levels(h, config.coarse_size)?;
    let g = config.coarse_size;
    let width = |i: usize| (config.base_width >> i.min(63)).max(config.min_width);
    let zdim = basis.dim();
    let mut layers = alloc::vec![Layer::new("input_scale", LayerKind::Scale(input_scale(basis)))];
    let first = if levels == 0 { 2 } else { width(0) };
    layers.push(Layer::new(
        "project",
        LayerKind::Dense {
            inputs: zdim,
            outputs: first * g * g,
        },
    ));
    layers.push(Layer::new(
        "project_grid",
        LayerKind::Reshape {
            channels: first,
            height: g,
            width: g,
        },
    ));
    if levels > 0 {
        layers.push(Layer::new("project_act", LayerKind::LeakyRelu(config.leaky_slope)));
    }
    for i in 0..levels {
        let last = i + 1 == levels;
        let out = if last { 2 } else { width(i + 1) };
        layers.push(Layer::new(
            format!("up{i}"),
            LayerKind::ConvTranspose2d {
                in_channels: width(i),
                out_channels: out,
                kernel: 4,
                stride: 2,
                padding: 1,
            },
        ));
        if !last {
            layers.push(Layer::new(format!("up{i}_act"), LayerKind::LeakyRelu(config.leaky_slope)));
        }
    }
    Ok(Network::new(layers))
}

/// Fan-in initialised decoder whose final layer is zero, so every code
/// initially maps to the zero configuration (all displacements zero).
pub fn init_decoder(basis: &PcaBasis, config: &DecoderConfig, seed: u64) -> Result<Network> {
    let mut net = decoder_architecture(basis, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = net
        .layers()
        .iter()
        .rposition(Layer::has_params)
        .expect("decoder has a parametrised layer");
    for (i, layer) in net.layers_mut().iter_mut().enumerate() {
        if !layer.has_params() {
            continue;
        }
        if i == last {
            layer.zero_params();
        } else {
            layer.init_he(&mut rng, 1.0);
        }
    }
    Ok(net)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    basis: PcaBasis,
    decoder: Network,
    pub config: ManifoldConfig,
}

impl ManifoldModel {
    /// Fits the basis on every frame and initialises the decoder.
    pub fn initialise(seq: &FrameSequence, config: ManifoldConfig) -> Result<Self> {
        let basis = fit_pca_basis(seq, config.zdim)?;
        let decoder = init_decoder(&basis, &config.decoder, config.seed)?;
        Ok(ManifoldModel { basis, decoder, config })
    }

    pub fn from_parts(basis: PcaBasis, decoder: Network, config: ManifoldConfig) -> Result<Self> {
        let (h, w, _) = basis.frame_shape();
        let out = decoder.output_shape([1, basis.dim(), 1, 1])?;
        if out != [1, 2, h, w] {
            return Err(Error::contract("decoder output does not match the frame grid"));
        }
        Ok(ManifoldModel { basis, decoder, config })
    }

    pub fn basis(&self) -> &PcaBasis {
        &self.basis
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn decoder_mut(&mut self) -> &mut Network {
        &mut self.decoder
    }

    pub fn zdim(&self) -> usize {
        self.basis.dim()
    }

    pub fn grid(&self) -> (usize, usize) {
        let (h, w, _) = self.basis.frame_shape();
        (w, h)
    }

    pub fn encode(&self, frame: &Frame) -> Result<LatentCode> {
        self.basis.encode(frame)
    }

    pub fn decode(&self, z: &LatentCode) -> Result<ConfigurationPoint> {
        Ok(self.decode_batch(core::slice::from_ref(z))?.remove(0))
    }

    pub fn decode_batch(&self, codes: &[LatentCode]) -> Result<Vec<ConfigurationPoint>> {
        let zdim = self.zdim();
        if codes.iter().any(|z| z.dim() != zdim) {
            return Err(Error::contract("latent dimension does not match the model"));
        }
        let (w, h) = self.grid();
        let mut out = Vec::with_capacity(codes.len());
        for chunk in codes.chunks(64) {
            let slices: Vec<&[f64]> = chunk.iter().map(LatentCode::as_slice).collect();
            let x = self.decoder.forward(&Tensor::stack(&slices, zdim, 1, 1)?)?;
            for i in 0..chunk.len() {
                out.push(ConfigurationPoint::new(w, h, x.sample(i).to_vec())?);
            }
        }
        Ok(out)
    }

    /// `decode(encode(frame))`.
    pub fn configuration(&self, frame: &Frame) -> Result<ConfigurationPoint> {
        self.decode(&self.encode(frame)?)
    }

    fn configurations(&self, frames: &[Frame]) -> Result<Vec<ConfigurationPoint>> {
        let codes = frames.iter().map(|f| self.encode(f)).collect::<Result<Vec<_>>>()?;
        self.decode_batch(&codes)
    }

    /// Displacement fields between consecutive frames of `seq`.
    pub fn one_step_fields(&self, seq: &FrameSequence) -> Result<Vec<DisplacementField>> {
        let xs = self.configurations(seq.frames())?;
        xs.windows(2).map(|p| crate::field::displacement_between(&p[0], &p[1])).collect()
    }

    /// Mean per-pixel L1 of `warp(f_i, x_{i+1} - x_i)` against `f_{i+1}`.
    pub fn one_step_error(&self, seq: &FrameSequence) -> Result<f64> {
        let fields = self.one_step_fields(seq)?;
        if fields.is_empty() {
            return Err(Error::contract("need at least two frames"));
        }
        let mut total = 0.0;
        for (i, u) in fields.iter().enumerate() {
            let pred = warp::warp(&seq.frames()[i], u)?;
            total += mean_l1_unchecked(pred.data(), seq.frames()[i + 1].data());
        }
        Ok(total / fields.len() as f64)
    }

    /// Summed and composed reconstruction error of the whole clip from frame 0.
    pub fn accumulation_curves(&self, seq: &FrameSequence) -> Result<AccumulationCurves> {
        warp::error_accumulation_curves(seq, &self.one_step_fields(seq)?)
    }

    /// Training objective on one batch of sequential frames.
    pub fn batch_loss(&self, frames: &[Frame]) -> Result<BatchLoss> {
        let codes = frames.iter().map(|f| self.encode(f)).collect::<Result<Vec<_>>>()?;
        Ok(batch_objective(&self.decoder, frames, &codes, self.config.teacher_forced, false)?.0)
    }

    /// Training objective and its decoder gradient on one batch.
    pub fn batch_loss_and_gradient(&self, frames: &[Frame]) -> Result<(BatchLoss, Gradients)> {
        let codes = frames.iter().map(|f| self.encode(f)).collect::<Result<Vec<_>>>()?;
        let (loss, grads) = batch_objective(&self.decoder, frames, &codes, self.config.teacher_forced, true)?;
        Ok((loss, grads.expect("gradient requested")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    /// Mean L1 of the running-sum reconstructions.
    pub summed: f64,
    /// Mean L1 of the composed reconstructions.
    pub composed: f64,
}

impl BatchLoss {
    pub fn total(&self) -> f64 {
        self.summed + self.composed
    }
}

fn batch_objective(
    decoder: &Network,
    frames: &[Frame],
    codes: &[LatentCode],
    teacher_forced: bool,
    want_grad: bool,
) -> Result<(BatchLoss, Option<Gradients>)> {
    let b = frames.len();
    if b < 2 {
        return Err(Error::contract("a training batch needs at least two frames"));
    }
    let (h, w, c) = frames[0].shape();
    let n = w * h;
    let zdim = codes[0].dim();
    let slices: Vec<&[f64]> = codes.iter().map(LatentCode::as_slice).collect();
    let tape = decoder.forward_tape(&Tensor::stack(&slices, zdim, 1, 1)?)?;
    let x = tape.output();
    let fields: Vec<Vec<f64>> = (0..b - 1)
        .map(|j| x.sample(j + 1).iter().zip(x.sample(j)).map(|(a, b)| a - b).collect())
        .collect();
    let m = (b - 1) as f64;
    let mut grad_u = alloc::vec![alloc::vec![0.0; 2 * n]; b - 1];
    let f0 = frames[0].data();

    // Summed: frame j is f0 warped by u_0 + ... + u_{j-1}.
    let mut summed = 0.0;
    let mut running = alloc::vec![0.0; 2 * n];
    let mut grad_sum_suffix = alloc::vec![alloc::vec![0.0; 2 * n]; b];
    for j in 1..b {
        running.iter_mut().zip(&fields[j - 1]).for_each(|(r, u)| *r += u);
        let recon = warp_raw(w, h, c, f0, &running);
        let (l, mut g) = l1_mean(&recon, frames[j].data());
        summed += l / m;
        if want_grad {
            g.iter_mut().for_each(|v| *v /= m);
            warp_backward_raw(w, h, c, f0, &running, &g, None, &mut grad_sum_suffix[j]);
        }
    }
    if want_grad {
        // u_i contributes to every running sum j > i.
        for j in (1..b - 1).rev() {
            let (head, tail) = grad_sum_suffix.split_at_mut(j + 1);
            head[j].iter_mut().zip(&tail[0]).for_each(|(a, v)| *a += v);
        }
        for i in 0..b - 1 {
            grad_u[i].copy_from_slice(&grad_sum_suffix[i + 1]);
        }
    }

    // Composed: frame j is the previous reconstruction warped by u_{j-1}.
    let mut composed = 0.0;
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(b);
    let mut state_grads: Vec<Vec<f64>> = Vec::with_capacity(b);
    states.push(f0.to_vec());
    state_grads.push(Vec::new());
    for j in 1..b {
        let src = if teacher_forced { frames[j - 1].data() } else { &states[j - 1] };
        let next = warp_raw(w, h, c, src, &fields[j - 1]);
        let (l, mut g) = l1_mean(&next, frames[j].data());
        composed += l / m;
        g.iter_mut().for_each(|v| *v /= m);
        states.push(next);
        state_grads.push(g);
    }
    if !want_grad {
        return Ok((BatchLoss { summed, composed }, None));
    }
    let mut carry = alloc::vec![0.0; c * n];
    for j in (1..b).rev() {
        carry.iter_mut().zip(&state_grads[j]).for_each(|(a, g)| *a += g);
        let src = if teacher_forced { frames[j - 1].data() } else { &states[j - 1] };
        let mut grad_img = alloc::vec![0.0; c * n];
        let img_slot = if teacher_forced { None } else { Some(grad_img.as_mut_slice()) };
        warp_backward_raw(w, h, c, src, &fields[j - 1], &carry, img_slot, &mut grad_u[j - 1]);
        carry = grad_img;
    }

    let mut grad_x = Tensor::zeros(x.shape());
    for j in 0..b {
        let gx = grad_x.sample_mut(j);
        if j >= 1 {
            gx.iter_mut().zip(&grad_u[j - 1]).for_each(|(a, g)| *a += g);
        }
        if j + 1 < b {
            gx.iter_mut().zip(&grad_u[j]).for_each(|(a, g)| *a -= g);
        }
    }
    let (_, grads) = decoder.backward(&tape, grad_x);
    Ok((BatchLoss { summed, composed }, Some(grads)))
}

/// Start indices of the sequential batches covering `active` frames. A short
/// tail is covered by one extra batch ending at the last active frame.
pub fn batch_starts(active: usize, batch: usize) -> Vec<(usize, usize)> {
    if active < 2 {
        return Vec::new();
    }
    if active <= batch {
        return alloc::vec![(0, active)];
    }
    let mut out: Vec<(usize, usize)> = (0..=active - batch).step_by(batch).map(|s| (s, batch)).collect();
    if out.last().map(|&(s, len)| s + len) != Some(active) {
        out.push((active - batch, batch));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: usize,
    pub epoch: usize,
    pub active: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldReport {
    /// Mean batch loss over the full clip before training.
    pub initial_loss: f64,
    /// Mean batch loss over the full clip after training.
    pub final_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Best epoch loss so far, recorded at the end of each stage.
    pub stage_best: Vec<f64>,
    pub steps: usize,
}

/// Hooks into a training run. All methods default to no-ops.
pub trait ManifoldObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) {}
    fn on_stage_end(&mut self, _stage: usize, _model: &ManifoldModel) {}
}

impl ManifoldObserver for () {}

pub struct ManifoldTrainer<'a> {
    seq: &'a FrameSequence,
    model: ManifoldModel,
    codes: Vec<LatentCode>,
    optimizer: Adam,
    curriculum: CurriculumState,
    rng: ChaCha8Rng,
    steps: usize,
    last_loss: Option<f64>,
}

impl<'a> ManifoldTrainer<'a> {
    pub fn new(seq: &'a FrameSequence, config: ManifoldConfig) -> Result<Self> {
        if seq.len() < 2 {
            return Err(Error::contract("manifold training needs at least two frames"));
        }
        let model = ManifoldModel::initialise(seq, config)?;
        Self::with_model(seq, model)
    }

    /// Continues training an existing model (its basis is kept as is).
    pub fn with_model(seq: &'a FrameSequence, model: ManifoldModel) -> Result<Self> {
        if seq.len() < 2 {
            return Err(Error::contract("manifold training needs at least two frames"));
        }
        if model.config.batch_size < 2 {
            return Err(Error::contract("batch size must be at least 2"));
        }
        let codes = seq.frames().iter().map(|f| model.encode(f)).collect::<Result<Vec<_>>>()?;
        let curriculum = CurriculumState::new(model.config.curriculum, seq.len());
        let rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x6d61_6e69);
        let optimizer = Adam::new(model.config.learning_rate);
        Ok(ManifoldTrainer {
            seq,
            model,
            codes,
            optimizer,
            curriculum,
            rng,
            steps: 0,
            last_loss: None,
        })
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn into_model(self) -> ManifoldModel {
        self.model
    }

    pub fn curriculum(&self) -> &CurriculumState {
        &self.curriculum
    }

    /// Mean batch loss over the first `active` frames, without updating.
    pub fn dataset_loss(&self, active: usize) -> Result<f64> {
        let batches = batch_starts(active.min(self.seq.len()), self.model.config.batch_size);
        let mut total = 0.0;
        for &(s, len) in &batches {
            let frames = &self.seq.frames()[s..s + len];
            total += batch_objective(
                &self.model.decoder,
                frames,
                &self.codes[s..s + len],
                self.model.config.teacher_forced,
                false,
            )?
            .0
            .total();
        }
        Ok(total / batches.len() as f64)
    }

    /// One optimizer step on frames `start..start + len`.
    pub fn step(&mut self, start: usize, len: usize) -> Result<BatchLoss> {
        let frames = &self.seq.frames()[start..start + len];
        let (loss, grads) = batch_objective(
            &self.model.decoder,
            frames,
            &self.codes[start..start + len],
            self.model.config.teacher_forced,
            true,
        )?;
        let grads = grads.expect("gradient requested");
        if !loss.total().is_finite() || !grads.is_finite() {
            return Err(Error::Training {
                message: format!("non-finite loss on frames {start}..{}", start + len),
                stage: self.curriculum.stage,
                step: self.steps,
                last_finite_loss: self.last_loss,
            });
        }
        let before = self.model.decoder.clone();
        self.optimizer.step(&mut self.model.decoder, &grads);
        if !self.model.decoder.is_finite() {
            self.model.decoder = before;
            return Err(Error::Training {
                message: "parameters became non-finite".into(),
                stage: self.curriculum.stage,
                step: self.steps,
                last_finite_loss: self.last_loss,
            });
        }
        self.steps += 1;
        self.last_loss = Some(loss.total());
        Ok(loss)
    }

    /// One pass over the active prefix in shuffled batch order; returns the
    /// mean batch loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let mut batches = batch_starts(self.curriculum.active, self.model.config.batch_size);
        batches.shuffle(&mut self.rng);
        let mut total = 0.0;
        for &(s, len) in &batches {
            total += self.step(s, len)?.total();
        }
        self.curriculum.epoch += 1;
        Ok(total / batches.len() as f64)
    }

    /// Runs the whole curriculum.
    pub fn train(&mut self, observer: &mut dyn ManifoldObserver) -> Result<ManifoldReport> {
        let initial_loss = self.dataset_loss(self.seq.len())?;
        let mut epochs = Vec::new();
        let mut stage_best = Vec::new();
        let mut best = f64::INFINITY;
        loop {
            while !self.curriculum.stage_complete() {
                let loss = self.run_epoch()?;
                best = best.min(loss);
                let record = EpochRecord {
                    stage: self.curriculum.stage,
                    epoch: self.curriculum.epoch,
                    active: self.curriculum.active,
                    loss,
                };
                observer.on_epoch(&record);
                epochs.push(record);
            }
            stage_best.push(best);
            observer.on_stage_end(self.curriculum.stage, &self.model);
            if self.curriculum.is_saturated() || self.curriculum.increment == 0 {
                break;
            }
            self.curriculum = self.curriculum.advance();
        }
        Ok(ManifoldReport {
            initial_loss,
            final_loss: self.dataset_loss(self.seq.len())?,
            epochs,
            stage_best,
            steps: self.steps,
        })
    }
}

/// Fits the basis, initialises the decoder and runs the full curriculum.
pub fn train_manifold(
    seq: &FrameSequence,
    config: ManifoldConfig,
    observer: &mut dyn ManifoldObserver,
) -> Result<(ManifoldModel, ManifoldReport)> {
    let mut trainer = ManifoldTrainer::new(seq, config)?;
    let report = trainer.train(observer)?;
    Ok((trainer.into_model(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::BlobClip;

    fn small_clip(frames: usize) -> FrameSequence {
        BlobClip {
            size: 16,
            frames,
            channels: 1,
            blob_sigma: 2.5,
            period: 40.0,
            ..BlobClip::default()
        }
        .sequence()
        .unwrap()
    }

    fn small_config(zdim: usize) -> ManifoldConfig {
        ManifoldConfig {
            zdim,
            batch_size: 8,
            decoder: DecoderConfig {
                coarse_size: 4,
                base_width: 8,
                min_width: 4,
                leaky_slope: 0.2,
            },
            ..ManifoldConfig::default()
        }
    }

    #[test]
    fn fresh_decoder_outputs_zero_configuration() {
        let seq = small_clip(12);
        let model = ManifoldModel::initialise(&seq, small_config(4)).unwrap();
        let x = model.decode(&LatentCode::new(alloc::vec![3.0, -1.0, 0.5, 2.0]).unwrap()).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
        assert_eq!((x.width(), x.height()), (16, 16));
        assert!(model.decode(&LatentCode::zeros(3)).is_err());
    }

    #[test]
    fn decode_is_deterministic() {
        let seq = small_clip(12);
        let mut model = ManifoldModel::initialise(&seq, small_config(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for l in model.decoder_mut().layers_mut() {
            if l.has_params() {
                l.init_he(&mut rng, 1.0);
            }
        }
        let z = model.encode(&seq.frames()[3]).unwrap();
        assert_eq!(model.decode(&z).unwrap(), model.decode(&z.clone()).unwrap());
    }

    #[test]
    fn static_clip_has_zero_loss() {
        let f = small_clip(1).frames()[0].clone();
        let mut frames = alloc::vec![f.clone(); 9];
        frames[4] = small_clip(5).frames()[4].clone();
        let seq = FrameSequence::new("static", frames, 30.0).unwrap();
        let model = ManifoldModel::initialise(&seq, small_config(2)).unwrap();
        let static_frames = alloc::vec![f; 8];
        assert_eq!(model.batch_loss(&static_frames).unwrap().total(), 0.0);
    }

    #[test]
    fn batch_starts_cover_active_prefix() {
        assert_eq!(batch_starts(100, 32), [(0, 32), (32, 32), (64, 32), (68, 32)]);
        assert_eq!(batch_starts(96, 32), [(0, 32), (32, 32), (64, 32)]);
        assert_eq!(batch_starts(10, 32), [(0, 10)]);
        assert!(batch_starts(1, 32).is_empty());
    }

    #[test]
    fn rejects_non_power_of_two_grid() {
        let seq = FrameSequence::new(
            "odd",
            (0..4)
                .map(|i| Frame::from_fn(12, 12, 1, |_, y, x| ((x + y + i) % 5) as f64 / 5.0))
                .collect(),
            30.0,
        )
        .unwrap();
        assert!(ManifoldModel::initialise(&seq, small_config(2)).is_err());
    }

    #[test]
    fn training_reduces_loss() {
        let seq = small_clip(24);
        let mut config = small_config(6);
        config.learning_rate = 1e-3;
        config.curriculum = CurriculumConfig {
            seed_frames: 16,
            increment: 8,
            epochs_per_stage: 4,
        };
        let (model, report) = train_manifold(&seq, config, &mut ()).unwrap();
        assert!(report.final_loss.is_finite());
        assert!(report.final_loss < report.initial_loss);
        assert_eq!(report.stage_best.len(), 2);
        assert!(report.stage_best.windows(2).all(|w| w[1] <= w[0]));
        let curves = model.accumulation_curves(&seq).unwrap();
        assert_eq!(curves.summed.len(), 23);
    }

    #[test]
    fn teacher_forced_gradient_matches_finite_differences() {
        let seq = small_clip(6);
        let mut config = small_config(3);
        config.teacher_forced = true;
        let mut model = ManifoldModel::initialise(&seq, config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for l in model.decoder_mut().layers_mut() {
            if l.has_params() {
                l.init_he(&mut rng, 0.5);
            }
        }
        let frames = &seq.frames()[..5];
        let (_, grads) = model.batch_loss_and_gradient(frames).unwrap();
        let total = model.decoder().param_count();
        let h = 1e-4;
        let mut checked = 0;
        for k in (0..total).step_by(total / 12) {
            let orig = model.decoder().param(k);
            *model.decoder_mut().param_mut(k) = orig + h;
            let up = model.batch_loss(frames).unwrap().total();
            *model.decoder_mut().param_mut(k) = orig - h;
            let down = model.batch_loss(frames).unwrap().total();
            *model.decoder_mut().param_mut(k) = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.get(k);
            if fd.abs() > 1e-6 {
                assert!((fd - an).abs() <= 0.05 * fd.abs().max(an.abs()), "param {k}: fd {fd} analytic {an}");
                checked += 1;
            }
        }
        assert!(checked > 3);
    }
}
