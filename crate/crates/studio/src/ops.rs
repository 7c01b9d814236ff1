//! Pipeline operations shared by the CLI and the service. Each takes a
//! progress callback receiving completion fractions in `[0, 1]`.

use std::fs;
use std::path::{Path, PathBuf};

use chad_core::curriculum::{CurriculumConfig, CurriculumState};
use chad_core::denoise::{denoise_sequence, DenoiseReport};
use chad_core::generator::{train_gan, DiscriminatorModel, GanObserver, GanReport, GanStepRecord, GeneratorModel};
use chad_core::interp::{synthesize_with_progress, SynthesisReport, TrainedModel};
use chad_core::manifold::{batch_starts, train_manifold, EpochRecord, ManifoldObserver, ManifoldReport};
use chad_core::{Frame, FrameSequence};
use serde::{Deserialize, Serialize};

use crate::archive::{self, GanMeta, ModelArchive};
use crate::dataset::{self, image_files, load_dataset, read_json, write_json, DatasetManifest};
use crate::error::{Error, Result};
use crate::export::{export_video, ExportManifest};
use crate::image_io::read_frame;
use crate::spec::{BlendSpec, IngestSpec, InterpolateSpec, TrainGanSpec, TrainManifoldSpec};

pub type Progress<'a> = &'a mut dyn FnMut(f64);

pub const REPORT_FILE: &str = "report.json";
pub const DENOISE_REPORT_FILE: &str = "denoise.txt";

pub fn ingest(spec: &IngestSpec, out: &Path) -> Result<DatasetManifest> {
    dataset::ingest(&spec.source()?, out, &spec.options())
}

/// Summary of a manifold training run, as written next to the archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSummary {
    pub report: ManifoldReport,
    pub one_step_error: f64,
    /// Mean L1 after `k` summed and composed steps, for `k = 1..`.
    pub accumulation_summed: Vec<f64>,
    pub accumulation_composed: Vec<f64>,
}

fn total_epochs(curriculum: CurriculumConfig, frames: usize) -> usize {
    CurriculumState::new(curriculum, frames).schedule().len() * curriculum.epochs_per_stage
}

struct EpochProgress<'a> {
    done: usize,
    total: usize,
    progress: Progress<'a>,
}

impl ManifoldObserver for EpochProgress<'_> {
    fn on_epoch(&mut self, r: &EpochRecord) {
        self.done += 1;
        tracing::debug!(stage = r.stage, epoch = r.epoch, active = r.active, loss = r.loss, "manifold epoch");
        (self.progress)(self.done as f64 / self.total.max(1) as f64);
    }
}

/// Canonical form of `path` for storing in an archive.
fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

pub fn train_manifold_op(data: &Path, spec: &TrainManifoldSpec, out: &Path, progress: Progress) -> Result<ManifoldSummary> {
    let seq = load_dataset(data)?;
    let config = spec.config();
    let mut observer = EpochProgress {
        done: 0,
        total: total_epochs(config.curriculum, seq.len()),
        progress,
    };
    let (model, report) = train_manifold(&seq, config, &mut observer)?;
    let curves = model.accumulation_curves(&seq)?;
    let summary = ManifoldSummary {
        report,
        one_step_error: model.one_step_error(&seq)?,
        accumulation_summed: curves.summed,
        accumulation_composed: curves.composed,
    };
    archive::save(
        out,
        &ModelArchive {
            model: TrainedModel {
                manifold: model,
                generator: None,
                discriminator: None,
            },
            dataset: Some(absolute(data)),
            gan: None,
        },
    )?;
    Ok(summary)
}

/// The dataset directory for `archive`: `explicit` when given, otherwise
/// the one recorded at training time.
pub fn resolve_dataset(explicit: Option<&Path>, archive: &ModelArchive) -> Result<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| archive.dataset.clone())
        .ok_or_else(|| Error::NotFound("the model records no dataset; pass one explicitly".into()))
}

struct StepProgress<'a> {
    done: usize,
    total: usize,
    progress: Progress<'a>,
}

impl GanObserver for StepProgress<'_> {
    fn on_step(&mut self, r: &GanStepRecord, _real: &[f64], _fake: &[f64]) {
        self.done += 1;
        tracing::debug!(
            stage = r.stage,
            step = r.step,
            d = r.discriminator_loss,
            g = r.generator_loss,
            l1 = r.reconstruction,
            "gan step"
        );
        (self.progress)(self.done as f64 / self.total.max(1) as f64);
    }

    fn on_stage_end(&mut self, stage: usize, _g: &GeneratorModel, _d: &DiscriminatorModel) {
        tracing::info!(stage, "gan stage complete");
    }
}

/// Trains a generator for the manifold in `model` and writes the combined
/// archive to `out`, which may equal `model`.
pub fn train_gan_op(data: Option<&Path>, model: &Path, spec: &TrainGanSpec, out: &Path, progress: Progress) -> Result<GanReport> {
    let archive = archive::load(model)?;
    let data = resolve_dataset(data, &archive)?;
    let seq = load_dataset(&data)?;
    let config = spec.config();
    let total = CurriculumState::new(config.curriculum, seq.len())
        .schedule()
        .iter()
        .map(|&active| batch_starts(active, config.batch_size).len() * config.curriculum.epochs_per_stage)
        .sum();
    let mut observer = StepProgress { done: 0, total, progress };
    let (manifold, generator, discriminator, report) = train_gan(&seq, archive.model.manifold, config.clone(), &mut observer)?;
    archive::save(
        out,
        &ModelArchive {
            model: TrainedModel {
                manifold,
                generator: Some(generator),
                discriminator: Some(discriminator),
            },
            dataset: Some(absolute(&data)),
            gan: Some(GanMeta {
                config,
                stage: report.stages.saturating_sub(1),
            }),
        },
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSummary {
    pub frames: usize,
    pub fps: f64,
    pub duration: f64,
    pub final_export: ExportManifest,
    pub gan_export: ExportManifest,
    pub report: SynthesisReport,
}

/// Renders `spec` into `out/final` and `out/gan`, with `report.json` and
/// the denoising trace `denoise.txt` beside them. Image keyframes are
/// resolved relative to `base`.
pub fn interpolate_op(
    data: Option<&Path>,
    model: &Path,
    spec: &InterpolateSpec,
    base: &Path,
    out: &Path,
    progress: Progress,
) -> Result<RenderSummary> {
    spec.validate()?;
    let archive = archive::load(model)?;
    let data = resolve_dataset(data, &archive)?;
    let seq = load_dataset(&data)?;
    let channels = seq.shape().map_or(3, |s| s.2);
    let job = spec.render_job(base, channels)?;
    let synthesis = synthesize_with_progress(&job, &archive.model, &seq, progress)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let final_export = export_video(&synthesis.frames, &out.join("final"))?;
    let gan = FrameSequence::new("gan", synthesis.gan_frames, spec.fps)?;
    let gan_export = export_video(&gan, &out.join("gan"))?;
    let summary = RenderSummary {
        frames: final_export.frames,
        fps: spec.fps,
        duration: final_export.duration,
        final_export,
        gan_export,
        report: synthesis.report,
    };
    write_json(&out.join(REPORT_FILE), &summary)?;
    write_denoise_text(&out.join(DENOISE_REPORT_FILE), &summary.report.denoise)?;
    Ok(summary)
}

fn write_denoise_text(path: &Path, reports: &[DenoiseReport]) -> Result<()> {
    let mut text = String::new();
    for (s, r) in reports.iter().enumerate() {
        text.push_str(&format!("segment {s}\n"));
        text.push_str(&r.to_text());
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Image files of a directory in file-name order. Dataset and export
/// directories qualify, since their frame names sort by index.
pub fn load_frames_dir(dir: &Path, channels: usize) -> Result<Vec<Frame>> {
    image_files(dir)?.iter().map(|p| read_frame(p, channels)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseSummary {
    pub export: ExportManifest,
    pub report: DenoiseReport,
}

/// Denoises a directory of generated frames. The first and last frames serve
/// as the keyframes the run starts and ends at.
pub fn denoise_op(
    data: Option<&Path>,
    model: &Path,
    frames: &Path,
    blend: &BlendSpec,
    out: &Path,
    progress: Progress,
) -> Result<DenoiseSummary> {
    let params = blend.params();
    params.validate()?;
    let archive = archive::load(model)?;
    let data = resolve_dataset(data, &archive)?;
    let seq = load_dataset(&data)?;
    let channels = seq.shape().map_or(3, |s| s.2);
    let gan = load_frames_dir(frames, channels)?;
    let (first, last) = match (gan.first(), gan.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::NotFound(format!("no frames in {}", frames.display()))),
    };
    progress(0.0);
    let d = denoise_sequence(&gan, (first, last), &seq, archive.model.manifold.basis(), &params)?;
    let fps = read_json::<serde_json::Value>(&frames.join(dataset::MANIFEST))
        .ok()
        .and_then(|v| v["fps"].as_f64())
        .unwrap_or(seq.fps());
    let export = export_video(&FrameSequence::new("denoised", d.frames, fps)?, out)?;
    fs::write(out.join(DENOISE_REPORT_FILE), d.report.to_text()).map_err(|e| Error::io(out, e))?;
    progress(1.0);
    Ok(DenoiseSummary { export, report: d.report })
}
