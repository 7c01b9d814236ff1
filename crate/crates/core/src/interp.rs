//! Keyframe interpolation: keyframes in, an animated frame sequence out.
//!
//! Keyframes are encoded to latent codes, a curve through the codes is
//! sampled at the output frame rate, every sample is decoded to a
//! configuration point and rendered by the generator. Optionally each
//! segment is then denoised against the training frames.
//!
//! Frame counts use round-half-up, `n = ⌊d·fps + ½⌋` (products within 1e-9 of
//! a half count as a half). A segment of `n` frames samples `t = j/n` for
//! `j < n` and leaves its end key to the next segment; the final segment
//! samples `t = j/(n−1)` so it ends exactly on the last key. A hold of `h`
//! seconds repeats the keyframe's rendered frame `⌊h·fps + ½⌋` more times.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::denoise::{denoise_with_index, BlendParams, CodeIndex, DenoiseReport};
use crate::error::{Error, Result};
use crate::field::displacement_between;
use crate::frame::{mean_l1_unchecked, Frame, FrameSequence};
use crate::generator::{DiscriminatorModel, GeneratorModel};
use crate::manifold::ManifoldModel;
use crate::path::{segment_point, PathMode};
use crate::pca::LatentCode;
use crate::warp::warp;

#[derive(Debug, Clone, PartialEq)]
pub enum KeyframeSource {
    /// A frame of the training sequence.
    Dataset(usize),
    /// Any image of the training frame shape.
    Image(Frame),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub source: KeyframeSource,
    /// Seconds to stay on this keyframe before moving on.
    pub hold: f64,
    /// Seconds to reach the next keyframe; ignored on the last one.
    pub transition: f64,
}

impl Keyframe {
    pub fn dataset(index: usize, transition: f64) -> Self {
        Keyframe {
            source: KeyframeSource::Dataset(index),
            hold: 0.0,
            transition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Generator output only.
    GanOnly,
    /// Generator output followed by denoising.
    #[default]
    Denoised,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderJob {
    pub keyframes: Vec<Keyframe>,
    pub mode: PathMode,
    pub fps: f64,
    pub blend: BlendParams,
    pub stage: Stage,
}

/// `⌊x + ½⌋`, treating values within 1e-9 below a half as the half.
pub fn round_half_up(x: f64) -> usize {
    libm::floor(x + 0.5 + 1e-9).max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePlan {
    /// Frames rendered per segment.
    pub segments: Vec<usize>,
    /// Extra copies per keyframe.
    pub holds: Vec<usize>,
}

impl FramePlan {
    pub fn total(&self) -> usize {
        self.segments.iter().sum::<usize>() + self.holds.iter().sum::<usize>()
    }

    /// Segment parameters of the frames rendered for `segment`.
    pub fn parameters(&self, segment: usize) -> Vec<f64> {
        let n = self.segments[segment];
        if segment + 1 == self.segments.len() {
            (0..n).map(|j| j as f64 / (n - 1) as f64).collect()
        } else {
            (0..n).map(|j| j as f64 / n as f64).collect()
        }
    }
}

impl RenderJob {
    pub fn validate(&self) -> Result<()> {
        if self.keyframes.len() < 2 {
            return Err(Error::validation("at least two keyframes are required"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::validation("fps must be positive"));
        }
        for (i, k) in self.keyframes.iter().enumerate() {
            if !(k.hold.is_finite() && k.hold >= 0.0) {
                return Err(Error::validation(format!("keyframe {i}: hold must be non-negative")));
            }
            if i + 1 < self.keyframes.len() && !(k.transition.is_finite() && k.transition > 0.0) {
                return Err(Error::validation(format!("keyframe {i}: transition must be positive")));
            }
        }
        self.blend.validate()
    }

    pub fn plan(&self) -> Result<FramePlan> {
        self.validate()?;
        let last = self.keyframes.len() - 2;
        let segments: Vec<usize> = self.keyframes[..=last]
            .iter()
            .map(|k| round_half_up(k.transition * self.fps))
            .collect();
        for (i, &n) in segments.iter().enumerate() {
            let min = if i == last { 2 } else { 1 };
            if n < min {
                return Err(Error::validation(format!(
                    "keyframe {i}: transition of {}s at {} fps yields {n} frames; at least {min} needed",
                    self.keyframes[i].transition, self.fps
                )));
            }
        }
        let holds = self.keyframes.iter().map(|k| round_half_up(k.hold * self.fps)).collect();
        Ok(FramePlan { segments, holds })
    }
}

/// A trained manifold with an optional generator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub manifold: ManifoldModel,
    pub generator: Option<GeneratorModel>,
    pub discriminator: Option<DiscriminatorModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeDiagnostics {
    pub dataset_index: Option<usize>,
    /// RMS distance between the keyframe and its projection onto the basis.
    pub residual: f64,
    /// Residual exceeds every training frame's residual.
    pub out_of_distribution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub plan: FramePlan,
    /// No generator was available; frames were warped from keyframes.
    pub warp_fallback: bool,
    pub keyframes: Vec<KeyframeDiagnostics>,
    /// Mean L1 of the first and last rendered frames against the keyframes'
    /// own renderings (zero by construction).
    pub endpoint_error: (f64, f64),
    pub denoise: Vec<DenoiseReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    /// Generator-stage frames, holds included.
    pub gan_frames: Vec<Frame>,
    /// Final frames: denoised when requested, otherwise the generator frames.
    pub frames: FrameSequence,
    pub report: SynthesisReport,
}

/// Renders the frame for latent code `z`. Without a generator the nearest
/// keyframe is warped by the configuration difference.
fn render(model: &TrainedModel, z: &LatentCode, anchor: (&Frame, &LatentCode)) -> Result<Frame> {
    let x = model.manifold.decode(z)?;
    match &model.generator {
        Some(g) => g.generate(&x),
        None => {
            let xa = model.manifold.decode(anchor.1)?;
            warp(anchor.0, &displacement_between(&xa, &x)?)
        }
    }
}

pub fn synthesize(job: &RenderJob, model: &TrainedModel, seq: &FrameSequence) -> Result<Synthesis> {
    synthesize_with_progress(job, model, seq, &mut |_| {})
}

/// As [`synthesize`], reporting completion fractions in `[0, 1]`.
pub fn synthesize_with_progress(
    job: &RenderJob,
    model: &TrainedModel,
    seq: &FrameSequence,
    progress: &mut dyn FnMut(f64),
) -> Result<Synthesis> {
    let plan = job.plan()?;
    let shape = seq.shape().ok_or_else(|| Error::contract("empty training sequence"))?;
    let basis = model.manifold.basis();
    if basis.frame_shape() != shape {
        return Err(Error::contract("model and training sequence differ in frame shape"));
    }
    let training_residual = seq
        .frames()
        .iter()
        .map(|f| basis.projection_residual(f))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let mut key_frames = Vec::with_capacity(job.keyframes.len());
    let mut diagnostics = Vec::with_capacity(job.keyframes.len());
    for (i, k) in job.keyframes.iter().enumerate() {
        let (frame, dataset_index) = match &k.source {
            KeyframeSource::Dataset(idx) => (
                seq.get(*idx)
                    .ok_or_else(|| Error::contract(format!("keyframe {i}: frame {idx} is outside the dataset")))?
                    .clone(),
                Some(*idx),
            ),
            KeyframeSource::Image(f) => {
                if f.shape() != shape {
                    return Err(Error::contract(format!("keyframe {i}: image shape does not match the frames")));
                }
                (f.clone(), None)
            }
        };
        let residual = basis.projection_residual(&frame)?;
        diagnostics.push(KeyframeDiagnostics {
            dataset_index,
            residual,
            out_of_distribution: residual > training_residual + 1e-9,
        });
        key_frames.push(frame);
    }
    let codes = key_frames.iter().map(|f| basis.encode(f)).collect::<Result<Vec<_>>>()?;

    let total = plan.total().max(1) as f64;
    let mut done = 0usize;
    let mut segments: Vec<Vec<Frame>> = Vec::with_capacity(plan.segments.len());
    for s in 0..plan.segments.len() {
        let mut frames = Vec::with_capacity(plan.segments[s]);
        for t in plan.parameters(s) {
            let z = segment_point(&codes, s, t, job.mode)?;
            let anchor = if t < 0.5 { s } else { s + 1 };
            frames.push(render(model, &z, (&key_frames[anchor], &codes[anchor]))?);
            done += 1;
            progress(0.5 * done as f64 / total);
        }
        segments.push(frames);
    }

    let keyed = |k: usize, segs: &[Vec<Frame>]| -> Frame {
        if k < segs.len() {
            segs[k][0].clone()
        } else {
            segs[k - 1].last().expect("final segment has ≥ 2 frames").clone()
        }
    };
    let assemble = |segs: &[Vec<Frame>]| -> Vec<Frame> {
        let mut out = Vec::with_capacity(plan.total());
        for (s, frames) in segs.iter().enumerate() {
            out.push(frames[0].clone());
            out.extend(core::iter::repeat_n(keyed(s, segs), plan.holds[s]));
            out.extend(frames[1..].iter().cloned());
        }
        let last = segs.len();
        out.extend(core::iter::repeat_n(keyed(last, segs), plan.holds[last]));
        out
    };
    let gan_frames = assemble(&segments);

    let own = |k: usize| render(model, &codes[k], (&key_frames[k], &codes[k]));
    let first = gan_frames.first().expect("plan has frames");
    let last = gan_frames.last().expect("plan has frames");
    let endpoint_error = (
        mean_l1_unchecked(first.data(), own(0)?.data()),
        mean_l1_unchecked(last.data(), own(key_frames.len() - 1)?.data()),
    );

    let mut denoise_reports = Vec::new();
    let final_frames = match job.stage {
        Stage::GanOnly => gan_frames.clone(),
        Stage::Denoised => {
            let index = CodeIndex::from_sequence(seq, basis)?;
            let mut cleaned = Vec::with_capacity(segments.len());
            for (s, frames) in segments.iter().enumerate() {
                let out = denoise_with_index(frames, (&key_frames[s], &key_frames[s + 1]), seq, &index, basis, &job.blend)?;
                denoise_reports.push(out.report);
                cleaned.push(out.frames);
                progress(0.5 + 0.5 * (s + 1) as f64 / segments.len() as f64);
            }
            assemble(&cleaned)
        }
    };
    progress(1.0);
    let frames = FrameSequence::new("render", final_frames, job.fps)?;
    Ok(Synthesis {
        gan_frames,
        frames,
        report: SynthesisReport {
            plan,
            warp_fallback: model.generator.is_none(),
            keyframes: diagnostics,
            endpoint_error,
            denoise: denoise_reports,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{GeneratorConfig, GeneratorModel};
    use crate::manifold::{DecoderConfig, ManifoldConfig};
    use crate::synthetic::BlobClip;
    use rand::SeedableRng;

    fn setup(with_generator: bool) -> (FrameSequence, TrainedModel) {
        let seq = BlobClip {
            size: 8,
            frames: 10,
            channels: 1,
            blob_sigma: 1.5,
            period: 20.0,
            ..BlobClip::default()
        }
        .sequence()
        .unwrap();
        let mut manifold = ManifoldModel::initialise(
            &seq,
            ManifoldConfig {
                zdim: 3,
                decoder: DecoderConfig {
                    coarse_size: 4,
                    base_width: 4,
                    min_width: 2,
                    leaky_slope: 0.2,
                },
                ..ManifoldConfig::default()
            },
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for l in manifold.decoder_mut().layers_mut() {
            if l.has_params() {
                l.init_he(&mut rng, 0.2);
            }
        }
        let generator = with_generator.then(|| {
            GeneratorModel::new(
                8,
                1,
                GeneratorConfig {
                    base_width: 2,
                    max_width: 4,
                    bottleneck: 4,
                    leaky_slope: 0.2,
                },
                0,
            )
            .unwrap()
        });
        (
            seq,
            TrainedModel {
                manifold,
                generator,
                discriminator: None,
            },
        )
    }

    fn job(keys: Vec<Keyframe>, fps: f64, stage: Stage) -> RenderJob {
        RenderJob {
            keyframes: keys,
            mode: PathMode::Linear,
            fps,
            blend: BlendParams {
                k: 2,
                ..BlendParams::default()
            },
            stage,
        }
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.4999), 2);
        assert_eq!(round_half_up(0.35 * 10.0), 4);
        assert_eq!(round_half_up(0.0), 0);
    }

    #[test]
    fn plan_counts_frames() {
        let j = job(
            alloc::vec![Keyframe::dataset(0, 3.0), Keyframe::dataset(5, 0.0)],
            10.0,
            Stage::GanOnly,
        );
        let plan = j.plan().unwrap();
        assert_eq!(plan.total(), 30);
        let ts = plan.parameters(0);
        assert_eq!((ts[0], ts[29]), (0.0, 1.0));

        let mut keys = alloc::vec![Keyframe::dataset(0, 1.0), Keyframe::dataset(3, 0.5), Keyframe::dataset(5, 0.0)];
        keys[1].hold = 0.25;
        keys[2].hold = 0.1;
        let plan = job(keys, 12.0, Stage::GanOnly).plan().unwrap();
        assert_eq!(plan.segments, [12, 6]);
        assert_eq!(plan.holds, [0, 3, 1]);
        assert_eq!(plan.parameters(0)[11], 11.0 / 12.0);
    }

    #[test]
    fn validation_errors() {
        let one = job(alloc::vec![Keyframe::dataset(0, 1.0)], 10.0, Stage::GanOnly);
        assert!(matches!(one.plan(), Err(Error::Validation(_))));
        let short = job(
            alloc::vec![Keyframe::dataset(0, 0.01), Keyframe::dataset(1, 0.0)],
            10.0,
            Stage::GanOnly,
        );
        assert!(matches!(short.plan(), Err(Error::Validation(_))));
        let bad_fps = job(
            alloc::vec![Keyframe::dataset(0, 1.0), Keyframe::dataset(1, 0.0)],
            0.0,
            Stage::GanOnly,
        );
        assert!(bad_fps.plan().is_err());
    }

    #[test]
    fn identical_keys_render_constant_frames() {
        let (seq, model) = setup(true);
        let j = job(
            alloc::vec![Keyframe::dataset(4, 1.0), Keyframe::dataset(4, 0.0)],
            6.0,
            Stage::GanOnly,
        );
        let out = synthesize(&j, &model, &seq).unwrap();
        assert_eq!(out.frames.len(), 6);
        assert!(out.frames.frames().windows(2).all(|w| w[0].data() == w[1].data()));
    }

    #[test]
    fn endpoints_match_key_renderings_and_holds_copy() {
        let (seq, model) = setup(true);
        let mut keys = alloc::vec![Keyframe::dataset(1, 0.5), Keyframe::dataset(7, 0.0)];
        keys[0].hold = 0.2;
        let out = synthesize(&job(keys, 10.0, Stage::Denoised), &model, &seq).unwrap();
        assert_eq!(out.report.endpoint_error, (0.0, 0.0));
        assert_eq!(out.frames.len(), 7);
        assert_eq!(out.gan_frames[0].data(), out.gan_frames[2].data());
        assert_eq!(out.report.denoise.len(), 1);
        assert!(!out.report.warp_fallback);
        assert!(!out.report.keyframes[0].out_of_distribution);
    }

    #[test]
    fn missing_generator_falls_back_to_warping() {
        let (seq, model) = setup(false);
        let j = job(
            alloc::vec![Keyframe::dataset(2, 0.5), Keyframe::dataset(6, 0.0)],
            8.0,
            Stage::GanOnly,
        );
        let out = synthesize(&j, &model, &seq).unwrap();
        assert!(out.report.warp_fallback);
        assert_eq!(out.frames.frames()[0].data(), seq.frames()[2].data());
        assert_eq!(out.frames.frames()[3].data(), seq.frames()[6].data());
    }

    #[test]
    fn rejects_foreign_keyframes() {
        let (seq, model) = setup(true);
        let j = job(
            alloc::vec![
                Keyframe {
                    source: KeyframeSource::Image(Frame::zeros(4, 4, 1)),
                    hold: 0.0,
                    transition: 1.0
                },
                Keyframe::dataset(1, 0.0)
            ],
            4.0,
            Stage::GanOnly,
        );
        assert!(matches!(synthesize(&j, &model, &seq), Err(Error::Contract(_))));
        let j = job(
            alloc::vec![Keyframe::dataset(0, 1.0), Keyframe::dataset(99, 0.0)],
            4.0,
            Stage::GanOnly,
        );
        assert!(synthesize(&j, &model, &seq).is_err());
    }
}
