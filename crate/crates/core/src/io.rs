//! Frame sequence I/O: numbered PNG directories and uncompressed Y4M.
//!
//! PNG is the lossless reference path. Y4M frames go through BT.601
//! full-range YCbCr with 4:2:0 chroma, so an RGB round trip through Y4M is
//! close but not exact.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use ::image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, FrameRgb, FrameSequence};

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

pub fn is_y4m_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

/// Read a PNG directory or a `.y4m` file.
pub fn read_frames(path: &Path) -> Result<FrameSequence> {
    if is_y4m_path(path) {
        read_y4m(path)
    } else {
        read_png_dir(path)
    }
}

/// Write to a `.y4m` file or a PNG directory, by extension.
pub fn write_frames(seq: &FrameSequence, path: &Path) -> Result<()> {
    if is_y4m_path(path) {
        write_y4m(seq, path)
    } else {
        write_png_dir(seq, path)
    }
}

/// PNG files of a directory in frame order. Files named by a number sort
/// numerically; anything else sorts by name after them.
pub fn list_png_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by_key(|p| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        (stem.parse::<u64>().map_err(|_| stem.to_owned()), p.clone())
    });
    Ok(files)
}

pub fn read_png(path: &Path) -> Result<FrameRgb> {
    let img = ::image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    FrameRgb::new(w as usize, h as usize, img.into_raw())
}

pub fn write_png(frame: &FrameRgb, path: &Path) -> Result<()> {
    let img = RgbImage::from_raw(
        frame.width() as u32,
        frame.height() as u32,
        frame.data().to_vec(),
    )
    .expect("frame buffer matches its dimensions");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_png_dir(dir: &Path) -> Result<FrameSequence> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let files = list_png_frames(dir)?;
    if files.is_empty() {
        return Err(Error::InvalidData(format!(
            "{}: no PNG frames found",
            dir.display()
        )));
    }
    let frames = files
        .iter()
        .map(|p| read_png(p))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames)
}

pub fn write_png_dir(seq: &FrameSequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in seq.frames().iter().enumerate() {
        write_png(f, &dir.join(frame_file_name(i)))?;
    }
    Ok(())
}

/// Mask as a black/white 8-bit PNG.
pub fn write_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let data = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data)
        .expect("mask buffer matches its dimensions");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[inline]
fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// BT.601 full-range RGB to YCbCr.
pub fn rgb_to_ycbcr([r, g, b]: [u8; 3]) -> [f64; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b,
    ]
}

/// BT.601 full-range YCbCr to RGB.
pub fn ycbcr_to_rgb(y: f64, cb: f64, cr: f64) -> [u8; 3] {
    let (cb, cr) = (cb - 128.0, cr - 128.0);
    [
        clamp_u8(y + 1.402 * cr),
        clamp_u8(y - 0.344_136 * cb - 0.714_136 * cr),
        clamp_u8(y + 1.772 * cb),
    ]
}

fn y4m_err(path: &Path, e: y4m::Error) -> Error {
    Error::Y4m(format!("{}: {e:?}", path.display()))
}

pub fn read_y4m(path: &Path) -> Result<FrameSequence> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = y4m::decode(BufReader::new(file)).map_err(|e| y4m_err(path, e))?;
    let (w, h) = (dec.get_width(), dec.get_height());
    let rate = dec.get_framerate();
    let (sub_x, sub_y, mono) = match dec.get_colorspace() {
        y4m::Colorspace::C420
        | y4m::Colorspace::C420jpeg
        | y4m::Colorspace::C420paldv
        | y4m::Colorspace::C420mpeg2 => (2, 2, false),
        y4m::Colorspace::C422 => (2, 1, false),
        y4m::Colorspace::C444 => (1, 1, false),
        y4m::Colorspace::Cmono => (1, 1, true),
        other => {
            return Err(Error::Y4m(format!(
                "{}: unsupported colorspace {other:?}",
                path.display()
            )))
        }
    };
    let cw = w.div_ceil(sub_x);
    let mut frames = Vec::new();
    loop {
        let frame = match dec.read_frame() {
            Ok(f) => f,
            Err(y4m::Error::EOF) => break,
            Err(e) => return Err(y4m_err(path, e)),
        };
        let (yp, up, vp) = (frame.get_y_plane(), frame.get_u_plane(), frame.get_v_plane());
        let rgb = FrameRgb::from_fn(w, h, |x, y| {
            let luma = yp[y * w + x] as f64;
            if mono {
                let l = clamp_u8(luma);
                return [l, l, l];
            }
            let ci = (y / sub_y) * cw + x / sub_x;
            ycbcr_to_rgb(luma, up[ci] as f64, vp[ci] as f64)
        })?;
        frames.push(rgb);
    }
    let fps = if rate.den == 0 {
        FrameSequence::DEFAULT_FRAME_RATE
    } else {
        rate.num as f64 / rate.den as f64
    };
    FrameSequence::with_frame_rate(frames, fps)
}

/// Frame rate as an integer ratio with millisecond precision.
fn rate_ratio(fps: f64) -> y4m::Ratio {
    if fps.fract() == 0.0 && fps > 0.0 {
        y4m::Ratio::new(fps as usize, 1)
    } else {
        y4m::Ratio::new((fps * 1000.0).round().max(1.0) as usize, 1000)
    }
}

pub fn write_y4m(seq: &FrameSequence, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let (w, h) = seq.dims();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = y4m::encode(w, h, rate_ratio(seq.frame_rate()))
        .with_colorspace(y4m::Colorspace::C420jpeg)
        .write_header(BufWriter::new(file))
        .map_err(|e| y4m_err(path, e))?;
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    for f in seq.frames() {
        let ycc: Vec<[f64; 3]> = f.pixels().map(rgb_to_ycbcr).collect();
        let yp: Vec<u8> = ycc.iter().map(|p| clamp_u8(p[0])).collect();
        let mut up = vec![0u8; cw * ch];
        let mut vp = vec![0u8; cw * ch];
        for cy in 0..ch {
            for cx in 0..cw {
                let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
                for y in 2 * cy..(2 * cy + 2).min(h) {
                    for x in 2 * cx..(2 * cx + 2).min(w) {
                        su += ycc[y * w + x][1];
                        sv += ycc[y * w + x][2];
                        n += 1.0;
                    }
                }
                up[cy * cw + cx] = clamp_u8(su / n);
                vp[cy * cw + cx] = clamp_u8(sv / n);
            }
        }
        enc.write_frame(&y4m::Frame::new([&yp, &up, &vp], None))
            .map_err(|e| y4m_err(path, e))?;
    }
    Ok(())
}
