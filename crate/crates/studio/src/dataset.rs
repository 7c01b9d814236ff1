//! On-disk datasets: a directory of `frame_NNNNNN.png` files (16-bit) plus
//! `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use chad_core::preprocess::{preprocess, CropMode};
use chad_core::synthetic::BlobClip;
use chad_core::{Frame, FrameSequence};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{read_frame, read_image, write_frame};

pub const MANIFEST: &str = "manifest.json";
const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub frames: usize,
    /// Where the frames came from.
    pub source: String,
}

pub fn frame_file_name(i: usize) -> String {
    format!("frame_{i:06}.png")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IngestSource {
    /// A directory of images, taken in file-name order.
    Images(PathBuf),
    /// A video container, decoded with `ffmpeg` when it is on `PATH`.
    Video(PathBuf),
    /// The built-in orbiting-blob clip.
    Synthetic { frames: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Output side length; frames are cropped square and resized.
    pub size: usize,
    pub crop: CropMode,
    pub fps: f64,
    /// Keep only the first this-many frames.
    pub max_frames: Option<usize>,
    pub grayscale: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            size: 64,
            crop: CropMode::CenterSquare,
            fps: 30.0,
            max_frames: None,
            grayscale: false,
        }
    }
}

pub(crate) fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn ffmpeg_available() -> bool {
    Command::new("ffmpeg").arg("-version").output().is_ok_and(|o| o.status.success())
}

fn decode_video(video: &Path, fps: f64, scratch: &Path) -> Result<Vec<PathBuf>> {
    if !ffmpeg_available() {
        return Err(Error::Unavailable(format!(
            "cannot decode {}: ffmpeg is not on PATH; extract the frames to a directory instead",
            video.display()
        )));
    }
    fs::create_dir_all(scratch).map_err(|e| Error::io(scratch, e))?;
    let status = Command::new("ffmpeg")
        .args(["-loglevel", "error", "-y", "-i"])
        .arg(video)
        .args(["-vf", &format!("fps={fps}")])
        .arg(scratch.join("%06d.png"))
        .status()
        .map_err(|e| Error::io(video, e))?;
    if !status.success() {
        return Err(Error::format("video", format!("ffmpeg exited with {status}")));
    }
    image_files(scratch)
}

/// Crops, resizes and stores frames from `source` under `out`.
pub fn ingest(source: &IngestSource, out: &Path, opts: &IngestOptions) -> Result<DatasetManifest> {
    let channels = if opts.grayscale { 1 } else { 3 };
    if opts.size == 0 || !(opts.fps.is_finite() && opts.fps > 0.0) {
        return Err(chad_core::Error::Validation("size and fps must be positive".into()).into());
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let limit = opts.max_frames.unwrap_or(usize::MAX);
    let (frames, label): (Vec<Frame>, String) = match source {
        IngestSource::Synthetic { frames } => {
            let clip = BlobClip {
                size: opts.size,
                frames: (*frames).min(limit),
                channels,
                fps: opts.fps,
                ..BlobClip::default()
            };
            ((0..clip.frames).map(|i| clip.frame(i)).collect(), "synthetic:orbiting-blob".into())
        }
        IngestSource::Images(dir) => (load_images(&image_files(dir)?, limit, channels, opts)?, dir.display().to_string()),
        IngestSource::Video(path) => {
            let scratch = out.join(".decode");
            let files = decode_video(path, opts.fps, &scratch)?;
            let frames = load_images(&files, limit, channels, opts);
            let _ = fs::remove_dir_all(&scratch);
            (frames?, path.display().to_string())
        }
    };
    if frames.len() < 2 {
        return Err(chad_core::Error::Validation(format!("found {} frames; at least 2 are needed", frames.len())).into());
    }
    let name = out.file_name().and_then(|n| n.to_str()).unwrap_or("dataset").to_string();
    let seq = FrameSequence::new(name, frames, opts.fps)?;
    write_dataset(&seq, out, &label)
}

fn load_images(files: &[PathBuf], limit: usize, channels: usize, opts: &IngestOptions) -> Result<Vec<Frame>> {
    files
        .iter()
        .take(limit)
        .map(|p| {
            let f = crate::image_io::frame_from_image(&read_image(p)?, channels)?;
            Ok(preprocess(&f, opts.crop, opts.size)?)
        })
        .collect()
}

/// Writes `seq` as a dataset directory.
pub fn write_dataset(seq: &FrameSequence, dir: &Path, source: &str) -> Result<DatasetManifest> {
    let (h, w, c) = seq.shape().ok_or_else(|| Error::format("dataset", "no frames"))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in seq.frames().iter().enumerate() {
        write_frame(&dir.join(frame_file_name(i)), f)?;
    }
    let manifest = DatasetManifest {
        name: seq.name.clone(),
        fps: seq.fps(),
        width: w,
        height: h,
        channels: c,
        frames: seq.len(),
        source: source.to_string(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    read_json(&dir.join(MANIFEST))
}

/// Frame `i` of a dataset, read without loading the rest.
pub fn load_frame(dir: &Path, manifest: &DatasetManifest, i: usize) -> Result<Frame> {
    if i >= manifest.frames {
        return Err(Error::NotFound(format!("frame {i} (dataset has {})", manifest.frames)));
    }
    read_frame(&dir.join(frame_file_name(i)), manifest.channels)
}

pub fn load_dataset(dir: &Path) -> Result<FrameSequence> {
    let manifest = read_manifest(dir)?;
    let frames = (0..manifest.frames)
        .map(|i| load_frame(dir, &manifest, i))
        .collect::<Result<Vec<_>>>()?;
    if frames
        .iter()
        .any(|f| f.shape() != (manifest.height, manifest.width, manifest.channels))
    {
        return Err(Error::format("dataset", "frame sizes disagree with the manifest"));
    }
    Ok(FrameSequence::new(manifest.name, frames, manifest.fps)?)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format("json", format!("{}: {e}", path.display())))
}
