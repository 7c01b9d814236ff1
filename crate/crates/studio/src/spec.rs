//! Job specifications shared by the CLI and the HTTP service. Every field has
//! a default, so a JSON document only needs the fields it changes.

use std::path::{Path, PathBuf};

use chad_core::curriculum::CurriculumConfig;
use chad_core::denoise::BlendParams;
use chad_core::generator::{GanTrainConfig, GeneratorConfig};
use chad_core::interp::{Keyframe, KeyframeSource, RenderJob, Stage};
use chad_core::manifold::{DecoderConfig, ManifoldConfig};
use chad_core::path::PathMode;
use chad_core::preprocess::CropMode;
use serde::{Deserialize, Serialize};

use crate::dataset::{IngestOptions, IngestSource};
use crate::error::{Error, Result};
use crate::image_io::read_frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSpec {
    /// Directory of images or a video file.
    pub source: Option<PathBuf>,
    /// Generate the built-in synthetic clip with this many frames instead.
    pub synthetic_frames: Option<usize>,
    pub size: usize,
    pub crop: CropMode,
    pub fps: f64,
    pub max_frames: Option<usize>,
    pub grayscale: bool,
}

impl Default for IngestSpec {
    fn default() -> Self {
        let o = IngestOptions::default();
        IngestSpec {
            source: None,
            synthetic_frames: None,
            size: o.size,
            crop: o.crop,
            fps: o.fps,
            max_frames: o.max_frames,
            grayscale: o.grayscale,
        }
    }
}

impl IngestSpec {
    pub fn source(&self) -> Result<IngestSource> {
        match (&self.source, self.synthetic_frames) {
            (Some(p), None) if p.is_dir() => Ok(IngestSource::Images(p.clone())),
            (Some(p), None) if p.is_file() => Ok(IngestSource::Video(p.clone())),
            (Some(p), None) => Err(Error::NotFound(p.display().to_string())),
            (None, Some(frames)) => Ok(IngestSource::Synthetic { frames }),
            _ => Err(validation("give exactly one of source and synthetic_frames")),
        }
    }

    pub fn options(&self) -> IngestOptions {
        IngestOptions {
            size: self.size,
            crop: self.crop,
            fps: self.fps,
            max_frames: self.max_frames,
            grayscale: self.grayscale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainManifoldSpec {
    pub zdim: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed_frames: usize,
    pub increment: usize,
    pub stage_epochs: usize,
    pub decoder_width: usize,
    pub teacher_forced: bool,
    pub seed: u64,
}

impl Default for TrainManifoldSpec {
    fn default() -> Self {
        let c = ManifoldConfig::default();
        TrainManifoldSpec {
            zdim: c.zdim,
            lr: c.learning_rate,
            batch: c.batch_size,
            seed_frames: c.curriculum.seed_frames,
            increment: c.curriculum.increment,
            stage_epochs: c.curriculum.epochs_per_stage,
            decoder_width: c.decoder.base_width,
            teacher_forced: c.teacher_forced,
            seed: c.seed,
        }
    }
}

impl TrainManifoldSpec {
    pub fn config(&self) -> ManifoldConfig {
        ManifoldConfig {
            zdim: self.zdim,
            learning_rate: self.lr,
            batch_size: self.batch,
            curriculum: CurriculumConfig {
                seed_frames: self.seed_frames,
                increment: self.increment,
                epochs_per_stage: self.stage_epochs,
            },
            decoder: DecoderConfig {
                base_width: self.decoder_width,
                ..DecoderConfig::default()
            },
            teacher_forced: self.teacher_forced,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainGanSpec {
    pub epochs_per_stage: usize,
    pub seed_frames: usize,
    pub increment: usize,
    pub lr: f64,
    pub discriminator_lr: f64,
    pub batch: usize,
    pub base_width: usize,
    pub max_width: usize,
    pub reconstruction_weight: f64,
    pub flip_probability: f64,
    pub joint: bool,
    pub seed: u64,
}

impl Default for TrainGanSpec {
    fn default() -> Self {
        let c = GanTrainConfig::default();
        TrainGanSpec {
            epochs_per_stage: c.curriculum.epochs_per_stage,
            seed_frames: c.curriculum.seed_frames,
            increment: c.curriculum.increment,
            lr: c.generator_lr,
            discriminator_lr: c.discriminator_lr,
            batch: c.batch_size,
            base_width: c.generator.base_width,
            max_width: c.generator.max_width,
            reconstruction_weight: c.reconstruction_weight,
            flip_probability: c.flip_probability,
            joint: c.joint,
            seed: c.seed,
        }
    }
}

impl TrainGanSpec {
    pub fn config(&self) -> GanTrainConfig {
        GanTrainConfig {
            generator: GeneratorConfig {
                base_width: self.base_width,
                max_width: self.max_width,
                ..GeneratorConfig::default()
            },
            generator_lr: self.lr,
            discriminator_lr: self.discriminator_lr,
            flip_probability: self.flip_probability,
            batch_size: self.batch,
            reconstruction_weight: self.reconstruction_weight,
            curriculum: CurriculumConfig {
                seed_frames: self.seed_frames,
                increment: self.increment,
                epochs_per_stage: self.epochs_per_stage,
            },
            joint: self.joint,
            seed: self.seed,
            ..GanTrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendSpec {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub k: usize,
}

impl Default for BlendSpec {
    fn default() -> Self {
        let p = BlendParams::default();
        BlendSpec {
            alpha: p.alpha,
            beta: p.beta,
            lambda: p.lambda,
            k: p.k,
        }
    }
}

impl BlendSpec {
    pub fn params(&self) -> BlendParams {
        BlendParams {
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            k: self.k,
            ..BlendParams::default()
        }
    }
}

/// A keyframe: a dataset frame (`index`) or an image file (`image`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeEntry {
    #[serde(default)]
    pub index: Option<usize>,
    #[serde(default)]
    pub image: Option<PathBuf>,
    #[serde(default)]
    pub hold: f64,
    /// Seconds to the next keyframe; unused on the last one.
    #[serde(default)]
    pub transition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolateSpec {
    pub keyframes: Vec<KeyframeEntry>,
    #[serde(default)]
    pub mode: PathMode,
    pub fps: f64,
    #[serde(default)]
    pub blend: BlendSpec,
    #[serde(default = "default_true")]
    pub denoise: bool,
}

fn default_true() -> bool {
    true
}

fn validation(msg: impl Into<String>) -> Error {
    chad_core::Error::Validation(msg.into()).into()
}

impl InterpolateSpec {
    /// Two keyframes at dataset indices with a single transition.
    pub fn between(a: usize, b: usize, seconds: f64, fps: f64) -> Self {
        InterpolateSpec {
            keyframes: vec![
                KeyframeEntry {
                    index: Some(a),
                    image: None,
                    hold: 0.0,
                    transition: seconds,
                },
                KeyframeEntry {
                    index: Some(b),
                    image: None,
                    hold: 0.0,
                    transition: 0.0,
                },
            ],
            mode: PathMode::Linear,
            fps,
            blend: BlendSpec::default(),
            denoise: true,
        }
    }

    fn job_with(&self, mut source: impl FnMut(usize, &KeyframeEntry) -> Result<KeyframeSource>) -> Result<RenderJob> {
        let keyframes = self
            .keyframes
            .iter()
            .enumerate()
            .map(|(i, k)| {
                Ok(Keyframe {
                    source: source(i, k)?,
                    hold: k.hold,
                    transition: k.transition,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RenderJob {
            keyframes,
            mode: self.mode,
            fps: self.fps,
            blend: self.blend.params(),
            stage: if self.denoise { Stage::Denoised } else { Stage::GanOnly },
        })
    }

    fn check_entry(i: usize, k: &KeyframeEntry) -> Result<()> {
        match (&k.index, &k.image) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(validation(format!("keyframe {i}: give exactly one of index and image"))),
        }
    }

    /// Checks counts, durations and parameters without touching any files.
    pub fn validate(&self) -> Result<()> {
        let job = self.job_with(|i, k| {
            Self::check_entry(i, k)?;
            Ok(KeyframeSource::Dataset(0))
        })?;
        job.plan()?;
        Ok(())
    }

    /// Builds the render job, reading image keyframes relative to `base`.
    pub fn render_job(&self, base: &Path, channels: usize) -> Result<RenderJob> {
        self.validate()?;
        self.job_with(|i, k| {
            Self::check_entry(i, k)?;
            match (&k.index, &k.image) {
                (Some(idx), _) => Ok(KeyframeSource::Dataset(*idx)),
                (_, Some(p)) => Ok(KeyframeSource::Image(read_frame(&base.join(p), channels)?)),
                _ => unreachable!("checked above"),
            }
        })
    }
}
