//! Conversions between frames and image files.
//!
//! Frames are stored as 16-bit PNG (grey or RGB). Reading accepts any format
//! the `image` crate decodes and converts to the requested channel count.

use std::io::Cursor;
use std::path::Path;

use chad_core::Frame;
use image::imageops::FilterType;
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};

const MAX16: f64 = 65535.0;

pub fn frame_from_image(img: &DynamicImage, channels: usize) -> Result<Frame> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = w * h;
    let mut data = vec![0.0; n * channels];
    match channels {
        1 => {
            let buf = img.to_luma16();
            for (p, px) in buf.pixels().enumerate() {
                data[p] = px.0[0] as f64 / MAX16;
            }
        }
        3 => {
            let buf = img.to_rgb16();
            for (p, px) in buf.pixels().enumerate() {
                for c in 0..3 {
                    data[c * n + p] = px.0[c] as f64 / MAX16;
                }
            }
        }
        _ => return Err(Error::format("image", format!("unsupported channel count {channels}"))),
    }
    Ok(Frame::new(w, h, channels, data)?)
}

fn quantise16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * MAX16).round() as u16
}

fn quantise8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 16-bit image of `frame`.
pub fn frame_to_image(frame: &Frame) -> Result<DynamicImage> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let n = frame.plane_len();
    let d = frame.data();
    match frame.channels() {
        1 => Ok(DynamicImage::ImageLuma16(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([quantise16(d[(y * w + x) as usize])])
        }))),
        3 => Ok(DynamicImage::ImageRgb16(ImageBuffer::from_fn(w, h, |x, y| {
            let p = (y * w + x) as usize;
            Rgb([quantise16(d[p]), quantise16(d[n + p]), quantise16(d[2 * n + p])])
        }))),
        c => Err(Error::format("frame", format!("cannot encode {c} channels as an image"))),
    }
}

/// 8-bit image of `frame`, for display.
pub fn frame_to_image8(frame: &Frame) -> Result<DynamicImage> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let n = frame.plane_len();
    let d = frame.data();
    match frame.channels() {
        1 => Ok(DynamicImage::ImageLuma8(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([quantise8(d[(y * w + x) as usize])])
        }))),
        3 => Ok(DynamicImage::ImageRgb8(ImageBuffer::from_fn(w, h, |x, y| {
            let p = (y * w + x) as usize;
            Rgb([quantise8(d[p]), quantise8(d[n + p]), quantise8(d[2 * n + p])])
        }))),
        c => Err(Error::format("frame", format!("cannot encode {c} channels as an image"))),
    }
}

pub fn read_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_frame(path: &Path, channels: usize) -> Result<Frame> {
    frame_from_image(&read_image(path)?, channels)
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    frame_to_image(frame)?
        .save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// 8-bit PNG bytes, downscaled so the longer side is at most `max_side`.
pub fn png_bytes(frame: &Frame, max_side: Option<u32>) -> Result<Vec<u8>> {
    let mut img = frame_to_image8(frame)?;
    if let Some(m) = max_side {
        if img.width() > m || img.height() > m {
            img = img.resize(m, m, FilterType::Triangle);
        }
    }
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(|source| Error::Image {
        path: "<memory>".into(),
        source,
    })?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_round_trip_is_within_quantisation() {
        let f = Frame::from_fn(5, 3, 3, |c, y, x| ((c * 7 + y * 5 + x) % 11) as f64 / 10.0);
        let back = frame_from_image(&frame_to_image(&f).unwrap(), 3).unwrap();
        for (a, b) in f.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / MAX16 + 1e-12);
        }
    }

    #[test]
    fn thumbnails_are_bounded() {
        let f = Frame::zeros(300, 150, 1);
        let bytes = png_bytes(&f, Some(128)).unwrap();
        let img = image::load_from_memory(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (128, 64));
    }
}
