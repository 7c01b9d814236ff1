//! The `chad` command line.
//!
//! On success each subcommand prints one JSON summary line to stdout and
//! exits 0. Runtime failures print `{"error": kind, "message": ...}` to
//! stderr and exit 1; usage errors exit 2.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chad_core::path::PathMode;
use chad_core::preprocess::{BoundingBox, CropMode};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::read_json;
use crate::error::{Error, Result};
use crate::ops;
use crate::service::{serve, ServiceConfig};
use crate::spec::{BlendSpec, IngestSpec, InterpolateSpec, TrainGanSpec, TrainManifoldSpec};

#[derive(Parser, Debug)]
#[command(name = "chad", version, about = "Keyframe-driven image-based animation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Crop, resize and store the frames of a clip as a dataset.
    Ingest(IngestArgs),
    /// Fit the linear encoder and train the deformation decoder.
    TrainManifold(TrainManifoldArgs),
    /// Train the image generator on top of a trained manifold.
    TrainGan(TrainGanArgs),
    /// Render the animation between keyframes.
    Interpolate(InterpolateArgs),
    /// Denoise a directory of generated frames against the training clip.
    Denoise(DenoiseArgs),
    /// Run the local HTTP service.
    Serve(ServeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CropArg {
    Center,
    Bbox,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct BoxArg(BoundingBox);

impl FromStr for BoxArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        match v[..] {
            [x, y, width, height] => Ok(BoxArg(BoundingBox { x, y, width, height })),
            _ => Err("expected X,Y,W,H".into()),
        }
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Image directory or video file.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    src: Option<PathBuf>,
    /// Generate the built-in synthetic clip with this many frames.
    #[arg(long, value_name = "FRAMES")]
    synthetic: Option<usize>,
    #[arg(long, value_enum, default_value = "center")]
    crop: CropArg,
    /// Face box for `--crop bbox`.
    #[arg(long, value_name = "X,Y,W,H", required_if_eq("crop", "bbox"))]
    bbox: Option<BoxArg>,
    /// Pixels added on every side of the box.
    #[arg(long, default_value_t = 15)]
    expand: usize,
    /// Output side length.
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    max_frames: Option<usize>,
    #[arg(long)]
    grayscale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainManifoldArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    zdim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed_frames: Option<usize>,
    /// Frames added to the curriculum at each stage.
    #[arg(long)]
    increment: Option<usize>,
    #[arg(long)]
    stage_epochs: Option<usize>,
    /// Channel width of the decoder's widest layer.
    #[arg(long)]
    decoder_width: Option<usize>,
    #[arg(long)]
    teacher_forced: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON settings file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainGanArgs {
    /// Dataset directory; defaults to the one recorded in the model.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    epochs_per_stage: Option<usize>,
    #[arg(long)]
    seed_frames: Option<usize>,
    #[arg(long)]
    increment: Option<usize>,
    /// Generator learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    discriminator_lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Channel width of the first generator layer.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    max_width: Option<usize>,
    /// Interleave a manifold step with every GAN step.
    #[arg(long)]
    joint: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Copy)]
struct BlendArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

impl BlendArgs {
    fn apply(&self, b: &mut BlendSpec) {
        set(&mut b.k, self.k);
        set(&mut b.alpha, self.alpha);
        set(&mut b.beta, self.beta);
        set(&mut b.lambda, self.lambda);
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModeArg {
    Linear,
    Spline,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct KeyList(Vec<usize>);

impl FromStr for KeyList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(KeyList)
    }
}

#[derive(Args, Debug)]
struct InterpolateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset frame indices of the keyframes.
    #[arg(long, value_name = "I,J,..", required_unless_present = "spec", conflicts_with = "spec")]
    keys: Option<KeyList>,
    /// Seconds per transition.
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[arg(long, value_enum, default_value = "linear")]
    mode: ModeArg,
    /// Run the denoising stage.
    #[arg(long)]
    denoise: bool,
    /// JSON job document with keyframes, holds and blend settings.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    blend: BlendArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory of generated frames.
    #[arg(long)]
    frames: PathBuf,
    #[command(flatten)]
    blend: BlendArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, env = "CHAD_DATA_ROOT")]
    data_root: Option<PathBuf>,
    #[arg(long, env = "CHAD_PORT")]
    port: Option<u16>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_config<T: Default + for<'de> serde::Deserialize<'de>>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

struct Ticker {
    next: f64,
}

impl Ticker {
    fn report(&mut self, what: &str, f: f64) {
        if f >= self.next {
            tracing::info!("{what}: {:.0}%", 100.0 * f);
            self.next = (f * 10.0).floor() / 10.0 + 0.1;
        }
    }
}

fn ticker(what: &'static str) -> impl FnMut(f64) {
    let mut t = Ticker { next: 0.1 };
    move |f| t.report(what, f)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::format("json", e.to_string()))?;
    println!("{line}");
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut spec = IngestSpec {
        source: a.src,
        synthetic_frames: a.synthetic,
        crop: match (a.crop, a.bbox) {
            (CropArg::Bbox, Some(b)) => CropMode::FaceBox {
                bbox: b.0,
                expand: a.expand,
            },
            _ => CropMode::CenterSquare,
        },
        max_frames: a.max_frames,
        grayscale: a.grayscale,
        ..IngestSpec::default()
    };
    set(&mut spec.size, a.res);
    set(&mut spec.fps, a.fps);
    print_json(&ops::ingest(&spec, &a.out)?)
}

#[derive(Serialize)]
struct ManifoldLine {
    model: PathBuf,
    initial_loss: f64,
    final_loss: f64,
    one_step_error: f64,
    epochs: usize,
    steps: usize,
    accumulation_summed: Vec<f64>,
    accumulation_composed: Vec<f64>,
}

fn train_manifold(a: TrainManifoldArgs) -> Result<()> {
    let mut spec: TrainManifoldSpec = load_config(a.config.as_deref())?;
    set(&mut spec.zdim, a.zdim);
    set(&mut spec.lr, a.lr);
    set(&mut spec.batch, a.batch);
    set(&mut spec.seed_frames, a.seed_frames);
    set(&mut spec.increment, a.increment);
    set(&mut spec.stage_epochs, a.stage_epochs);
    set(&mut spec.decoder_width, a.decoder_width);
    set(&mut spec.seed, a.seed);
    spec.teacher_forced |= a.teacher_forced;
    let s = ops::train_manifold_op(&a.data, &spec, &a.out, &mut ticker("train-manifold"))?;
    print_json(&ManifoldLine {
        model: a.out,
        initial_loss: s.report.initial_loss,
        final_loss: s.report.final_loss,
        one_step_error: s.one_step_error,
        epochs: s.report.epochs.len(),
        steps: s.report.steps,
        accumulation_summed: s.accumulation_summed,
        accumulation_composed: s.accumulation_composed,
    })
}

#[derive(Serialize)]
struct GanLine {
    model: PathBuf,
    initial_reconstruction: f64,
    final_reconstruction: f64,
    steps: usize,
    stages: usize,
}

fn train_gan(a: TrainGanArgs) -> Result<()> {
    let mut spec: TrainGanSpec = load_config(a.config.as_deref())?;
    set(&mut spec.epochs_per_stage, a.epochs_per_stage);
    set(&mut spec.seed_frames, a.seed_frames);
    set(&mut spec.increment, a.increment);
    set(&mut spec.lr, a.lr);
    set(&mut spec.discriminator_lr, a.discriminator_lr);
    set(&mut spec.batch, a.batch);
    set(&mut spec.base_width, a.width);
    set(&mut spec.max_width, a.max_width);
    set(&mut spec.seed, a.seed);
    spec.joint |= a.joint;
    let r = ops::train_gan_op(a.data.as_deref(), &a.model, &spec, &a.out, &mut ticker("train-gan"))?;
    print_json(&GanLine {
        model: a.out,
        initial_reconstruction: r.initial_reconstruction,
        final_reconstruction: r.final_reconstruction,
        steps: r.steps.len(),
        stages: r.stages,
    })
}

#[derive(Serialize)]
struct RenderLine {
    out: PathBuf,
    frames: usize,
    fps: f64,
    duration: f64,
    endpoint_error: (f64, f64),
    warp_fallback: bool,
    video: Option<String>,
}

fn interpolate(a: InterpolateArgs) -> Result<()> {
    let (mut spec, base) = match (&a.spec, &a.keys) {
        (Some(p), _) => {
            let spec: InterpolateSpec = read_json(p)?;
            (spec, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        (None, Some(keys)) => {
            let mut spec = InterpolateSpec::between(0, 0, a.seconds, a.fps);
            let template = spec.keyframes[0].clone();
            spec.keyframes = keys
                .0
                .iter()
                .map(|&i| crate::spec::KeyframeEntry {
                    index: Some(i),
                    ..template.clone()
                })
                .collect();
            if let Some(last) = spec.keyframes.last_mut() {
                last.transition = 0.0;
            }
            spec.mode = match a.mode {
                ModeArg::Linear => PathMode::Linear,
                ModeArg::Spline => PathMode::Spline,
            };
            spec.denoise = a.denoise;
            (spec, PathBuf::from("."))
        }
        (None, None) => unreachable!("clap requires --keys or --spec"),
    };
    a.blend.apply(&mut spec.blend);
    let s = ops::interpolate_op(a.data.as_deref(), &a.model, &spec, &base, &a.out, &mut ticker("interpolate"))?;
    print_json(&RenderLine {
        out: a.out,
        frames: s.frames,
        fps: s.fps,
        duration: s.duration,
        endpoint_error: s.report.endpoint_error,
        warp_fallback: s.report.warp_fallback,
        video: s.final_export.video,
    })
}

#[derive(Serialize)]
struct DenoiseLine {
    out: PathBuf,
    frames: usize,
    path_cost: f64,
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    let mut blend = BlendSpec::default();
    a.blend.apply(&mut blend);
    let s = ops::denoise_op(a.data.as_deref(), &a.model, &a.frames, &blend, &a.out, &mut ticker("denoise"))?;
    print_json(&DenoiseLine {
        out: a.out,
        frames: s.export.frames,
        path_cost: s.report.path_cost,
    })
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let mut config = ServiceConfig::from_env()?;
    set(&mut config.data_root, a.data_root);
    set(&mut config.port, a.port);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(serve(config))
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::TrainManifold(a) => train_manifold(a),
        Command::TrainGan(a) => train_gan(a),
        Command::Interpolate(a) => interpolate(a),
        Command::Denoise(a) => denoise(a),
        Command::Serve(a) => serve_cmd(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_boxes() {
        assert_eq!("120, 845".parse::<KeyList>().unwrap().0, vec![120, 845]);
        assert!("1,x".parse::<KeyList>().is_err());
        assert_eq!("1,2,3,4".parse::<BoxArg>().unwrap().0.height, 4);
        assert!("1,2,3".parse::<BoxArg>().is_err());
    }

    #[test]
    fn ticker_reports_each_decile_once() {
        let mut t = Ticker { next: 0.1 };
        let mut hits = 0;
        for i in 0..=100 {
            let before = t.next;
            t.report("x", i as f64 / 100.0);
            hits += usize::from(t.next != before);
        }
        assert_eq!(hits, 10);
    }
}
