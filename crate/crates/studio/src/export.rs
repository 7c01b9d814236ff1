//! Writing rendered sequences: a lossless PNG directory with a manifest, plus
//! an H.264 file when `ffmpeg` is on `PATH`.

use std::fs;
use std::path::Path;
use std::process::Command;

use chad_core::FrameSequence;
use serde::{Deserialize, Serialize};

use crate::dataset::{ffmpeg_available, frame_file_name, write_json};
use crate::error::{Error, Result};
use crate::image_io::write_frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub frames: usize,
    pub fps: f64,
    /// Seconds: `frames / fps`.
    pub duration: f64,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// File name of the encoded video, when one was written.
    pub video: Option<String>,
}

pub const EXPORT_MANIFEST: &str = "manifest.json";

pub fn export_video(seq: &FrameSequence, dir: &Path) -> Result<ExportManifest> {
    let (h, w, c) = seq.shape().ok_or_else(|| Error::Export("the sequence is empty".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::Export(format!("{}: {e}", dir.display())))?;
    for (i, f) in seq.frames().iter().enumerate() {
        write_frame(&dir.join(frame_file_name(i)), f).map_err(|e| Error::Export(e.to_string()))?;
    }
    let video = if ffmpeg_available() { encode_video(dir, seq.fps()) } else { None };
    let manifest = ExportManifest {
        frames: seq.len(),
        fps: seq.fps(),
        duration: seq.len() as f64 / seq.fps(),
        width: w,
        height: h,
        channels: c,
        video,
    };
    write_json(&dir.join(EXPORT_MANIFEST), &manifest).map_err(|e| Error::Export(e.to_string()))?;
    Ok(manifest)
}

/// Best effort: a failed encode leaves the image directory as the output.
fn encode_video(dir: &Path, fps: f64) -> Option<String> {
    let name = "video.mp4";
    let status = Command::new("ffmpeg")
        .args(["-loglevel", "error", "-y", "-framerate", &fps.to_string(), "-i"])
        .arg(dir.join("frame_%06d.png"))
        .args(["-pix_fmt", "yuv420p", "-vf", "pad=ceil(iw/2)*2:ceil(ih/2)*2"])
        .arg(dir.join(name))
        .status();
    match status {
        Ok(s) if s.success() => Some(name.to_string()),
        _ => {
            tracing::warn!("ffmpeg failed to encode {}; keeping the image directory only", dir.display());
            None
        }
    }
}
