//! Adversarially trained image generator from configuration points to frames.
//!
//! The generator is an encoder-decoder: stride-2 convolutions down to a small
//! bottleneck, transposed convolutions back up, and a sigmoid head. The
//! discriminator reuses the encoder half and ends in one logit. Discriminator
//! targets are soft: real frames near 0 and generated frames near 1, with
//! occasional swaps.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumConfig, CurriculumState};
use crate::error::{Error, Result};
use crate::field::ConfigurationPoint;
use crate::frame::{mean_l1_unchecked, Frame, FrameSequence};
use crate::manifold::{batch_starts, ManifoldModel, ManifoldTrainer};
use crate::nn::layers::sigmoid;
use crate::nn::loss::{bce_with_logits, l1_mean};
use crate::nn::optim::{Adam, Optimizer, Sgd};
use crate::nn::{Gradients, Layer, LayerKind, Network, Tensor};
use crate::pca::LatentCode;

/// Logits are clamped to this magnitude before squashing, which keeps the
/// discriminator probability strictly inside (0, 1) in f64.
const LOGIT_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Channels after the first downsampling block; doubled per block.
    pub base_width: usize,
    pub max_width: usize,
    /// Side of the bottleneck grid.
    pub bottleneck: usize,
    pub leaky_slope: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            base_width: 32,
            max_width: 256,
            bottleneck: 4,
            leaky_slope: 0.2,
        }
    }
}

impl GeneratorConfig {
    fn width(&self, level: usize) -> usize {
        (self.base_width << level.min(32)).min(self.max_width).max(1)
    }

    fn levels(&self, size: usize) -> Result<usize> {
        let b = self.bottleneck;
        if b == 0 || !size.is_multiple_of(b) || !(size / b).is_power_of_two() {
            return Err(Error::contract(format!(
                "frame size {size} is not the bottleneck {b} times a power of two"
            )));
        }
        Ok((size / b).trailing_zeros() as usize)
    }
}

fn down(name: String, cin: usize, cout: usize) -> Layer {
    Layer::new(
        name,
        LayerKind::Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel: 4,
            stride: 2,
            padding: 1,
        },
    )
}

fn up(name: String, cin: usize, cout: usize) -> Layer {
    Layer::new(
        name,
        LayerKind::ConvTranspose2d {
            in_channels: cin,
            out_channels: cout,
            kernel: 4,
            stride: 2,
            padding: 1,
        },
    )
}

fn same(name: String, cin: usize, cout: usize) -> Layer {
    Layer::new(
        name,
        LayerKind::Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
    )
}

/// Generator layers for `size × size` grids producing `channels` channels,
/// with all parameters zero.
pub fn generator_architecture(size: usize, channels: usize, config: &GeneratorConfig) -> Result<Network> {
    let levels = config.levels(size)?;
    let act = || LayerKind::LeakyRelu(config.leaky_slope);
    let mut layers = Vec::new();
    if levels == 0 {
        layers.push(same("out".into(), 2, channels));
    } else {
        for i in 0..levels {
            let cin = if i == 0 { 2 } else { config.width(i - 1) };
            layers.push(down(format!("enc{i}"), cin, config.width(i)));
            layers.push(Layer::new(format!("enc{i}_act"), act()));
        }
        for i in (0..levels).rev() {
            let cout = if i == 0 { channels } else { config.width(i - 1) };
            layers.push(up(format!("dec{i}"), config.width(i), cout));
            if i > 0 {
                layers.push(Layer::new(format!("dec{i}_act"), act()));
            }
        }
    }
    layers.push(Layer::new("out_squash", LayerKind::Sigmoid));
    Ok(Network::new(layers))
}

/// Discriminator layers for `size × size` frames with `channels` channels,
/// with all parameters zero. The network outputs one logit per frame.
pub fn discriminator_architecture(size: usize, channels: usize, config: &GeneratorConfig) -> Result<Network> {
    let levels = config.levels(size)?;
    let mut layers = Vec::new();
    let mut c = channels;
    for i in 0..levels {
        layers.push(down(format!("enc{i}"), c, config.width(i)));
        layers.push(Layer::new(format!("enc{i}_act"), LayerKind::LeakyRelu(config.leaky_slope)));
        c = config.width(i);
    }
    let b = config.bottleneck;
    layers.push(Layer::new(
        "logit",
        LayerKind::Dense {
            inputs: c * b * b,
            outputs: 1,
        },
    ));
    Ok(Network::new(layers))
}

fn init_network(net: &mut Network, rng: &mut ChaCha8Rng) {
    for layer in net.layers_mut() {
        if layer.has_params() {
            layer.init_he(rng, 1.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    network: Network,
    size: usize,
    channels: usize,
    pub config: GeneratorConfig,
}

impl GeneratorModel {
    pub fn new(size: usize, channels: usize, config: GeneratorConfig, seed: u64) -> Result<Self> {
        let mut network = generator_architecture(size, channels, &config)?;
        init_network(&mut network, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(GeneratorModel {
            network,
            size,
            channels,
            config,
        })
    }

    pub fn from_network(network: Network, size: usize, channels: usize, config: GeneratorConfig) -> Result<Self> {
        if network.output_shape([1, 2, size, size])? != [1, channels, size, size] {
            return Err(Error::contract("generator output does not match the frame shape"));
        }
        Ok(GeneratorModel {
            network,
            size,
            channels,
            config,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    /// `(size, channels)` of generated frames.
    pub fn frame_shape(&self) -> (usize, usize) {
        (self.size, self.channels)
    }

    pub fn generate(&self, x: &ConfigurationPoint) -> Result<Frame> {
        Ok(self.generate_batch(core::slice::from_ref(x))?.remove(0))
    }

    pub fn generate_batch(&self, xs: &[ConfigurationPoint]) -> Result<Vec<Frame>> {
        let s = self.size;
        if xs.iter().any(|x| (x.width(), x.height()) != (s, s)) {
            return Err(Error::contract("configuration point grid does not match the generator"));
        }
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(32) {
            let slices: Vec<&[f64]> = chunk.iter().map(ConfigurationPoint::data).collect();
            let y = self.network.forward(&Tensor::stack(&slices, 2, s, s)?)?;
            for i in 0..chunk.len() {
                out.push(Frame::from_raw(s, s, self.channels, y.sample(i).to_vec()));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorModel {
    network: Network,
    size: usize,
    channels: usize,
}

impl DiscriminatorModel {
    pub fn new(size: usize, channels: usize, config: &GeneratorConfig, seed: u64) -> Result<Self> {
        let mut network = discriminator_architecture(size, channels, config)?;
        init_network(&mut network, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(DiscriminatorModel { network, size, channels })
    }

    pub fn from_network(network: Network, size: usize, channels: usize) -> Result<Self> {
        if network.output_shape([1, channels, size, size])? != [1, 1, 1, 1] {
            return Err(Error::contract("discriminator must map a frame to one logit"));
        }
        Ok(DiscriminatorModel { network, size, channels })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn logits(&self, frames: &[Frame]) -> Result<Vec<f64>> {
        let (s, c) = (self.size, self.channels);
        if frames.iter().any(|f| f.shape() != (s, s, c)) {
            return Err(Error::contract("frame shape does not match the discriminator"));
        }
        let slices: Vec<&[f64]> = frames.iter().map(Frame::data).collect();
        Ok(self.network.forward(&Tensor::stack(&slices, c, s, s)?)?.into_data())
    }

    /// Probability that each frame is generated, strictly inside (0, 1).
    pub fn probability(&self, frames: &[Frame]) -> Result<Vec<f64>> {
        Ok(self
            .logits(frames)?
            .into_iter()
            .map(|l| sigmoid(l.clamp(-LOGIT_LIMIT, LOGIT_LIMIT)))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanTrainConfig {
    pub generator: GeneratorConfig,
    pub generator_lr: f64,
    /// Plain SGD step size for the discriminator.
    pub discriminator_lr: f64,
    pub real_labels: (f64, f64),
    pub fake_labels: (f64, f64),
    /// Probability of swapping the real and fake label of a pair.
    pub flip_probability: f64,
    pub batch_size: usize,
    /// Weight of the L1 reconstruction term relative to the adversarial term.
    pub reconstruction_weight: f64,
    pub curriculum: CurriculumConfig,
    /// Interleave one manifold step with every GAN step instead of keeping
    /// the manifold frozen.
    pub joint: bool,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig {
            generator: GeneratorConfig::default(),
            generator_lr: 1e-5,
            discriminator_lr: 1e-5,
            real_labels: (0.0, 0.1),
            fake_labels: (0.9, 1.0),
            flip_probability: 0.1,
            batch_size: 32,
            reconstruction_weight: 100.0,
            curriculum: CurriculumConfig::default(),
            joint: false,
            seed: 0,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi;
        if !range_ok(self.real_labels) || !range_ok(self.fake_labels) {
            return Err(Error::contract("label ranges must lie inside [0, 1]"));
        }
        let (r, f) = (self.real_labels, self.fake_labels);
        if r.1 >= f.0 && f.1 >= r.0 {
            return Err(Error::contract("real and fake label ranges overlap"));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::contract("flip probability must lie in [0, 1]"));
        }
        if self.batch_size < 2 {
            return Err(Error::contract("batch size must be at least 2"));
        }
        if !(self.generator_lr > 0.0 && self.discriminator_lr > 0.0 && self.reconstruction_weight >= 0.0) {
            return Err(Error::contract("learning rates must be positive"));
        }
        Ok(())
    }
}

/// Soft discriminator targets for `n` real/fake pairs. Each label is uniform
/// in its range; each pair is swapped with the flip probability.
pub fn discriminator_labels<R: Rng>(n: usize, config: &GanTrainConfig, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut real = Vec::with_capacity(n);
    let mut fake = Vec::with_capacity(n);
    let draw = |rng: &mut R, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
    for _ in 0..n {
        let r = draw(rng, config.real_labels);
        let f = draw(rng, config.fake_labels);
        if rng.random::<f64>() < config.flip_probability {
            real.push(f);
            fake.push(r);
        } else {
            real.push(r);
            fake.push(f);
        }
    }
    (real, fake)
}

/// Generator objective `bce(D(G(x)), real) + w · L1(G(x), frames)` and its
/// gradient with respect to the generator parameters.
pub fn generator_loss_and_gradient(
    generator: &GeneratorModel,
    discriminator: &DiscriminatorModel,
    xs: &[ConfigurationPoint],
    frames: &[Frame],
    config: &GanTrainConfig,
) -> Result<(GeneratorLoss, Gradients)> {
    let (loss, grads) = generator_objective(generator, discriminator, xs, frames, config, true)?;
    Ok((loss, grads.expect("gradient requested")))
}

pub fn generator_loss(
    generator: &GeneratorModel,
    discriminator: &DiscriminatorModel,
    xs: &[ConfigurationPoint],
    frames: &[Frame],
    config: &GanTrainConfig,
) -> Result<GeneratorLoss> {
    Ok(generator_objective(generator, discriminator, xs, frames, config, false)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLoss {
    pub adversarial: f64,
    pub reconstruction: f64,
    pub total: f64,
}

fn generator_objective(
    generator: &GeneratorModel,
    discriminator: &DiscriminatorModel,
    xs: &[ConfigurationPoint],
    frames: &[Frame],
    config: &GanTrainConfig,
    want_grad: bool,
) -> Result<(GeneratorLoss, Option<Gradients>)> {
    let (s, c) = generator.frame_shape();
    if xs.len() != frames.len() || xs.is_empty() {
        return Err(Error::contract("need one frame per configuration point"));
    }
    if frames.iter().any(|f| f.shape() != (s, s, c)) || xs.iter().any(|x| (x.width(), x.height()) != (s, s)) {
        return Err(Error::contract("batch shape does not match the generator"));
    }
    let slices: Vec<&[f64]> = xs.iter().map(ConfigurationPoint::data).collect();
    let g_tape = generator.network.forward_tape(&Tensor::stack(&slices, 2, s, s)?)?;
    let fake = g_tape.output();
    let d_tape = discriminator.network.forward_tape(fake)?;
    let target = alloc::vec![config.real_labels.0; xs.len()];
    let (adversarial, g_logit) = bce_with_logits(d_tape.output().data(), &target);
    let truth: Vec<f64> = frames.iter().flat_map(|f| f.data().iter().copied()).collect();
    let (reconstruction, g_l1) = l1_mean(fake.data(), &truth);
    let w = config.reconstruction_weight;
    let loss = GeneratorLoss {
        adversarial,
        reconstruction,
        total: adversarial + w * reconstruction,
    };
    if !want_grad {
        return Ok((loss, None));
    }
    let (g_fake, _) = discriminator.network.backward(&d_tape, Tensor::new([xs.len(), 1, 1, 1], g_logit)?);
    let mut g_out = g_fake;
    g_out.data_mut().iter_mut().zip(&g_l1).for_each(|(g, l)| *g += w * l);
    let (_, grads) = generator.network.backward(&g_tape, g_out);
    Ok((loss, Some(grads)))
}

/// Discriminator cross-entropy on a real batch and a generated batch.
fn discriminator_objective(
    discriminator: &DiscriminatorModel,
    real: &[Frame],
    fake: &[Frame],
    real_labels: &[f64],
    fake_labels: &[f64],
) -> Result<(f64, Gradients)> {
    let (s, c) = (discriminator.size, discriminator.channels);
    let mut slices: Vec<&[f64]> = real.iter().map(Frame::data).collect();
    slices.extend(fake.iter().map(Frame::data));
    let tape = discriminator.network.forward_tape(&Tensor::stack(&slices, c, s, s)?)?;
    let mut labels = real_labels.to_vec();
    labels.extend_from_slice(fake_labels);
    let (loss, g) = bce_with_logits(tape.output().data(), &labels);
    let n = labels.len();
    let (_, grads) = discriminator.network.backward(&tape, Tensor::new([n, 1, 1, 1], g)?);
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanStepRecord {
    pub stage: usize,
    pub step: usize,
    pub discriminator_loss: f64,
    pub generator_loss: f64,
    pub reconstruction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanReport {
    /// Mean L1 between generated and true frames over the clip, before training.
    pub initial_reconstruction: f64,
    pub final_reconstruction: f64,
    pub steps: Vec<GanStepRecord>,
    pub stages: usize,
}

/// Hooks into a GAN run. `labels` holds the discriminator targets used in
/// the step, real then fake.
pub trait GanObserver {
    fn on_step(&mut self, _record: &GanStepRecord, _real_labels: &[f64], _fake_labels: &[f64]) {}
    fn on_stage_end(&mut self, _stage: usize, _generator: &GeneratorModel, _discriminator: &DiscriminatorModel) {}
}

impl GanObserver for () {}

pub struct GanTrainer<'a> {
    seq: &'a FrameSequence,
    manifold: ManifoldModel,
    codes: Vec<LatentCode>,
    manifold_trainer: Option<ManifoldTrainer<'a>>,
    generator: GeneratorModel,
    discriminator: DiscriminatorModel,
    g_opt: Adam,
    d_opt: Sgd,
    config: GanTrainConfig,
    curriculum: CurriculumState,
    rng: ChaCha8Rng,
    step: usize,
    last_loss: Option<f64>,
}

impl<'a> GanTrainer<'a> {
    pub fn new(seq: &'a FrameSequence, manifold: ManifoldModel, config: GanTrainConfig) -> Result<Self> {
        config.validate()?;
        let (h, w, c) = seq.shape().ok_or_else(|| Error::contract("empty sequence"))?;
        if (w, h) != manifold.grid() || h != w {
            return Err(Error::contract("sequence does not match the manifold grid"));
        }
        if seq.len() < 2 {
            return Err(Error::contract("GAN training needs at least two frames"));
        }
        let generator = GeneratorModel::new(h, c, config.generator.clone(), config.seed)?;
        let discriminator = DiscriminatorModel::new(h, c, &config.generator, config.seed.wrapping_add(1))?;
        Self::with_models(seq, manifold, generator, discriminator, config)
    }

    /// Continues training existing networks.
    pub fn with_models(
        seq: &'a FrameSequence,
        manifold: ManifoldModel,
        generator: GeneratorModel,
        discriminator: DiscriminatorModel,
        config: GanTrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let codes = seq.frames().iter().map(|f| manifold.encode(f)).collect::<Result<Vec<_>>>()?;
        let manifold_trainer = if config.joint {
            Some(ManifoldTrainer::with_model(seq, manifold.clone())?)
        } else {
            None
        };
        Ok(GanTrainer {
            seq,
            manifold,
            codes,
            manifold_trainer,
            generator,
            discriminator,
            g_opt: Adam::new(config.generator_lr),
            d_opt: Sgd {
                lr: config.discriminator_lr,
            },
            curriculum: CurriculumState::new(config.curriculum, seq.len()),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x6761_6e73),
            config,
            step: 0,
            last_loss: None,
        })
    }

    pub fn generator(&self) -> &GeneratorModel {
        &self.generator
    }

    pub fn discriminator(&self) -> &DiscriminatorModel {
        &self.discriminator
    }

    pub fn manifold(&self) -> &ManifoldModel {
        match &self.manifold_trainer {
            Some(t) => t.model(),
            None => &self.manifold,
        }
    }

    pub fn into_models(self) -> (ManifoldModel, GeneratorModel, DiscriminatorModel) {
        let manifold = match self.manifold_trainer {
            Some(t) => t.into_model(),
            None => self.manifold,
        };
        (manifold, self.generator, self.discriminator)
    }

    /// Mean L1 between generated and true frames over the whole clip.
    pub fn reconstruction_error(&self) -> Result<f64> {
        let xs = self.manifold().decode_batch(&self.codes)?;
        let fakes = self.generator.generate_batch(&xs)?;
        let total: f64 = fakes
            .iter()
            .zip(self.seq.frames())
            .map(|(a, b)| mean_l1_unchecked(a.data(), b.data()))
            .sum();
        Ok(total / fakes.len() as f64)
    }

    fn training_error(&self, message: &str) -> Error {
        Error::Training {
            message: format!("GAN: {message}"),
            stage: self.curriculum.stage,
            step: self.step,
            last_finite_loss: self.last_loss,
        }
    }

    /// One discriminator update followed by one generator update on frames
    /// `start..start + len`.
    pub fn step(&mut self, start: usize, len: usize, observer: &mut dyn GanObserver) -> Result<GanStepRecord> {
        let frames = &self.seq.frames()[start..start + len];
        let xs = self.manifold().decode_batch(&self.codes[start..start + len])?;
        let fakes = self.generator.generate_batch(&xs)?;
        let (real_labels, fake_labels) = discriminator_labels(len, &self.config, &mut self.rng);

        let (d_loss, d_grads) = discriminator_objective(&self.discriminator, frames, &fakes, &real_labels, &fake_labels)?;
        if !d_loss.is_finite() || !d_grads.is_finite() {
            return Err(self.training_error("non-finite discriminator loss"));
        }
        let (g_loss, g_grads) = generator_loss_and_gradient(&self.generator, &self.discriminator, &xs, frames, &self.config)?;
        if !g_loss.total.is_finite() || !g_grads.is_finite() {
            return Err(self.training_error("non-finite generator loss"));
        }
        let (g_before, d_before) = (self.generator.network.clone(), self.discriminator.network.clone());
        self.d_opt.step(&mut self.discriminator.network, &d_grads);
        self.g_opt.step(&mut self.generator.network, &g_grads);
        if !self.generator.network.is_finite() || !self.discriminator.network.is_finite() {
            self.generator.network = g_before;
            self.discriminator.network = d_before;
            return Err(self.training_error("parameters became non-finite"));
        }
        if let Some(trainer) = self.manifold_trainer.as_mut() {
            trainer.step(start, len)?;
        }
        let record = GanStepRecord {
            stage: self.curriculum.stage,
            step: self.step,
            discriminator_loss: d_loss,
            generator_loss: g_loss.total,
            reconstruction: g_loss.reconstruction,
        };
        self.step += 1;
        self.last_loss = Some(g_loss.total);
        observer.on_step(&record, &real_labels, &fake_labels);
        Ok(record)
    }

    /// Runs the whole curriculum.
    pub fn train(&mut self, observer: &mut dyn GanObserver) -> Result<GanReport> {
        use rand::seq::SliceRandom;
        let initial_reconstruction = self.reconstruction_error()?;
        let mut steps = Vec::new();
        let mut stages = 0;
        loop {
            while !self.curriculum.stage_complete() {
                let mut batches = batch_starts(self.curriculum.active, self.config.batch_size);
                batches.shuffle(&mut self.rng);
                for (s, len) in batches {
                    steps.push(self.step(s, len, observer)?);
                }
                self.curriculum.epoch += 1;
            }
            stages += 1;
            observer.on_stage_end(self.curriculum.stage, &self.generator, &self.discriminator);
            if self.curriculum.is_saturated() || self.curriculum.increment == 0 {
                break;
            }
            self.curriculum = self.curriculum.advance();
        }
        Ok(GanReport {
            initial_reconstruction,
            final_reconstruction: self.reconstruction_error()?,
            steps,
            stages,
        })
    }
}

/// Trains a generator and discriminator against a trained manifold.
pub fn train_gan(
    seq: &FrameSequence,
    manifold: ManifoldModel,
    config: GanTrainConfig,
    observer: &mut dyn GanObserver,
) -> Result<(ManifoldModel, GeneratorModel, DiscriminatorModel, GanReport)> {
    let mut trainer = GanTrainer::new(seq, manifold, config)?;
    let report = trainer.train(observer)?;
    let (m, g, d) = trainer.into_models();
    Ok((m, g, d, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{DecoderConfig, ManifoldConfig};
    use crate::synthetic::BlobClip;

    fn tiny_config() -> GeneratorConfig {
        GeneratorConfig {
            base_width: 2,
            max_width: 4,
            bottleneck: 4,
            leaky_slope: 0.2,
        }
    }

    fn clip(n: usize) -> FrameSequence {
        BlobClip {
            size: 8,
            frames: n,
            channels: 1,
            blob_sigma: 1.5,
            period: 16.0,
            ..BlobClip::default()
        }
        .sequence()
        .unwrap()
    }

    fn manifold(seq: &FrameSequence) -> ManifoldModel {
        let config = ManifoldConfig {
            zdim: 3,
            decoder: DecoderConfig {
                coarse_size: 4,
                base_width: 4,
                min_width: 2,
                leaky_slope: 0.2,
            },
            ..ManifoldConfig::default()
        };
        let mut m = ManifoldModel::initialise(seq, config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in m.decoder_mut().layers_mut() {
            if l.has_params() {
                l.init_he(&mut rng, 0.3);
            }
        }
        m
    }

    #[test]
    fn forced_flip_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = GanTrainConfig {
            flip_probability: 0.0,
            ..GanTrainConfig::default()
        };
        let (r, f) = discriminator_labels(500, &cfg, &mut rng);
        assert!(r.iter().all(|v| (0.0..=0.1).contains(v)));
        assert!(f.iter().all(|v| (0.9..=1.0).contains(v)));
        cfg.flip_probability = 1.0;
        let (r, f) = discriminator_labels(500, &cfg, &mut rng);
        assert!(r.iter().all(|v| (0.9..=1.0).contains(v)));
        assert!(f.iter().all(|v| (0.0..=0.1).contains(v)));
    }

    #[test]
    fn rejects_overlapping_label_ranges() {
        let cfg = GanTrainConfig {
            real_labels: (0.0, 0.95),
            ..GanTrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(GanTrainConfig::default().validate().is_ok());
    }

    #[test]
    fn generated_frames_are_bounded_and_deterministic() {
        let g = GeneratorModel::new(8, 3, tiny_config(), 5).unwrap();
        let x = ConfigurationPoint::new(8, 8, (0..128).map(|i| (i as f64 * 7.3).sin() * 50.0).collect()).unwrap();
        let a = g.generate(&x).unwrap();
        assert_eq!(a, g.generate(&x).unwrap());
        assert!(a.is_unit_range());
        assert_eq!(a.shape(), (8, 8, 3));
        assert!(g.generate(&ConfigurationPoint::new(4, 4, alloc::vec![0.0; 32]).unwrap()).is_err());
    }

    #[test]
    fn discriminator_probability_strictly_inside_unit_interval() {
        let mut d = DiscriminatorModel::new(8, 1, &tiny_config(), 1).unwrap();
        for l in d.network_mut().layers_mut() {
            l.weight.iter_mut().for_each(|w| *w *= 1e4);
        }
        let frames = [Frame::from_fn(8, 8, 1, |_, y, x| ((x * y) % 2) as f64), Frame::zeros(8, 8, 1)];
        for p in d.probability(&frames).unwrap() {
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn micro_generator_gradient_matches_finite_differences() {
        let seq = clip(4);
        let m = manifold(&seq);
        let mut g = GeneratorModel::new(8, 1, tiny_config(), 2).unwrap();
        assert!(g.network().param_count() <= 1000);
        let d = DiscriminatorModel::new(8, 1, &tiny_config(), 3).unwrap();
        let cfg = GanTrainConfig::default();
        let xs: Vec<_> = seq.frames().iter().map(|f| m.configuration(f).unwrap()).collect();
        let (_, grads) = generator_loss_and_gradient(&g, &d, &xs, seq.frames(), &cfg).unwrap();
        let h = 1e-5;
        let mut checked = 0;
        for k in (0..g.network().param_count()).step_by(7) {
            let orig = g.network().param(k);
            *g.network_mut().param_mut(k) = orig + h;
            let up = generator_loss(&g, &d, &xs, seq.frames(), &cfg).unwrap().total;
            *g.network_mut().param_mut(k) = orig - h;
            let down = generator_loss(&g, &d, &xs, seq.frames(), &cfg).unwrap().total;
            *g.network_mut().param_mut(k) = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.get(k);
            if fd.abs() > 1e-6 {
                assert!((fd - an).abs() <= 0.02 * fd.abs().max(an.abs()), "param {k}: fd {fd} analytic {an}");
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn smoke_step_is_finite_and_seeded() {
        let seq = clip(8);
        let m = manifold(&seq);
        let cfg = GanTrainConfig {
            generator: tiny_config(),
            batch_size: 8,
            ..GanTrainConfig::default()
        };
        let trace = |cfg: &GanTrainConfig| {
            let mut t = GanTrainer::new(&seq, m.clone(), cfg.clone()).unwrap();
            (0..3).map(|_| t.step(0, 8, &mut ()).unwrap()).collect::<Vec<_>>()
        };
        let a = trace(&cfg);
        assert!(a.iter().all(|r| r.discriminator_loss.is_finite() && r.generator_loss.is_finite()));
        assert_eq!(a, trace(&cfg));
    }

    #[test]
    fn joint_training_moves_the_manifold() {
        let seq = clip(8);
        let m = manifold(&seq);
        let cfg = GanTrainConfig {
            generator: tiny_config(),
            batch_size: 8,
            joint: true,
            curriculum: CurriculumConfig {
                seed_frames: 8,
                increment: 8,
                epochs_per_stage: 2,
            },
            ..GanTrainConfig::default()
        };
        let (m2, _, _, report) = train_gan(&seq, m.clone(), cfg, &mut ()).unwrap();
        assert_eq!(report.steps.len(), 2);
        assert_ne!(m2.decoder(), m.decoder());
    }
}
