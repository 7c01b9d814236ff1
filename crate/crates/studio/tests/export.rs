use chad::export::{export_video, ExportManifest, EXPORT_MANIFEST};
use chad::image_io::read_frame;
use chad_core::synthetic::BlobClip;
use chad_core::{Frame, FrameSequence};

fn clip(frames: usize, fps: f64) -> FrameSequence {
    let seq = BlobClip {
        size: 12,
        frames,
        channels: 3,
        blob_sigma: 2.0,
        period: 20.0,
        ..BlobClip::default()
    }
    .sequence()
    .unwrap();
    FrameSequence::new("clip", seq.frames().to_vec(), fps).unwrap()
}

#[test]
fn manifest_records_duration_and_shape() {
    let dir = tempfile::tempdir().unwrap();
    let m = export_video(&clip(30, 30.0), dir.path()).unwrap();
    assert_eq!((m.frames, m.width, m.height, m.channels), (30, 12, 12, 3));
    assert_eq!(m.duration, 1.0);
    let saved: ExportManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join(EXPORT_MANIFEST)).unwrap()).unwrap();
    assert_eq!(saved, m);
    let m = export_video(&clip(10, 10.0), &dir.path().join("b")).unwrap();
    assert_eq!(m.duration, 1.0);
}

#[test]
fn frames_survive_within_sixteen_bit_quantisation() {
    let dir = tempfile::tempdir().unwrap();
    let seq = clip(5, 24.0);
    export_video(&seq, dir.path()).unwrap();
    for (i, f) in seq.frames().iter().enumerate() {
        let back: Frame = read_frame(&dir.path().join(format!("frame_{i:06}.png")), 3).unwrap();
        let worst = f.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 0.5 / 65535.0 + 1e-12, "frame {i}: {worst}");
    }
}

#[test]
fn re_export_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let seq = clip(4, 12.0);
    export_video(&seq, &dir.path().join("a")).unwrap();
    export_video(&seq, &dir.path().join("b")).unwrap();
    for name in ["frame_000000.png", "frame_000003.png", EXPORT_MANIFEST] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(name)).unwrap(),
            std::fs::read(dir.path().join("b").join(name)).unwrap()
        );
    }
}

#[test]
fn empty_sequence_is_an_export_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = FrameSequence::new("empty", Vec::new(), 30.0).unwrap();
    assert_eq!(export_video(&empty, dir.path()).unwrap_err().kind(), "export");
}
