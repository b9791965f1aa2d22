#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ste_deflick::image::{BinaryMask, FrameRgb, FrameSequence};
use ste_deflick::synth::Artifact;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth gray-and-color texture spanning roughly `[lo, hi]`.
// The phase bound is frozen into the fixtures; TAU would change them.
#[allow(clippy::approx_constant)]
pub fn texture(w: usize, h: usize, seed: u64, lo: f64, hi: f64) -> FrameRgb {
    let mut r = rng(seed);
    let waves: Vec<[f64; 3]> = (0..3)
        .map(|_| {
            [
                r.random_range(0.1..0.5),
                r.random_range(0.1..0.5),
                r.random_range(0.0..6.28),
            ]
        })
        .collect();
    FrameRgb::from_fn(w, h, |x, y| {
        let s: f64 = waves
            .iter()
            .map(|k| (k[0] * x as f64 + k[1] * y as f64 + k[2]).sin())
            .sum::<f64>()
            / 3.0;
        let v = lo + (hi - lo) * (0.5 + 0.5 * s);
        [v.round() as u8, (0.9 * v).round() as u8, (0.8 * v).round() as u8]
    })
    .unwrap()
}

/// Uniform random frame.
pub fn noise_frame(w: usize, h: usize, seed: u64) -> FrameRgb {
    let mut r = rng(seed);
    FrameRgb::new(w, h, (0..w * h * 3).map(|_| r.random()).collect()).unwrap()
}

pub fn static_clip(frame: &FrameRgb, len: usize) -> FrameSequence {
    FrameSequence::new(vec![frame.clone(); len]).unwrap()
}

/// Offset the whole of frame `t` by `b`.
pub fn offset_frame(frame: &FrameRgb, b: f64) -> FrameRgb {
    Artifact {
        gain: 1.0,
        offset: b,
        region: None,
    }
    .apply(frame)
}

/// Paint a white square covering `fraction` of the frame, centred.
pub fn white_blob(frame: &FrameRgb, fraction: f64) -> (FrameRgb, BinaryMask) {
    let (w, h) = frame.dims();
    let side = ((w * h) as f64 * fraction).sqrt().round() as usize;
    let (x0, y0) = ((w - side) / 2, (h - side) / 2);
    let inside = |x: usize, y: usize| (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y);
    let out = FrameRgb::from_fn(w, h, |x, y| if inside(x, y) { [255; 3] } else { frame.pixel(x, y) }).unwrap();
    let mask = BinaryMask::new(w, h, (0..w * h).map(|i| inside(i % w, i / w)).collect()).unwrap();
    (out, mask)
}

/// Planted singular-frame trial: 30 frames with three frames, at least three
/// apart, offset by 40 to 60 levels of random sign.
pub fn planted_trial(clean: &FrameSequence, seed: u64) -> (FrameSequence, Vec<usize>) {
    let mut r = rng(seed);
    let len = clean.len();
    let mut planted: Vec<usize> = Vec::new();
    while planted.len() < 3 {
        let t = r.random_range(2..len - 2);
        if planted.iter().all(|&p| p.abs_diff(t) > 2) {
            planted.push(t);
        }
    }
    planted.sort_unstable();
    let frames = clean
        .frames()
        .iter()
        .enumerate()
        .map(|(t, f)| {
            if planted.contains(&t) {
                let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                offset_frame(f, sign * r.random_range(40.0..60.0))
            } else {
                f.clone()
            }
        })
        .collect();
    (FrameSequence::new(frames).unwrap(), planted)
}

/// `dst(x) = src(x - (dx, dy))`, with edge replication.
pub fn shifted(src: &FrameRgb, dx: i64, dy: i64) -> FrameRgb {
    let (w, h) = src.dims();
    FrameRgb::from_fn(w, h, |x, y| {
        let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as usize;
        let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as usize;
        src.pixel(sx, sy)
    })
    .unwrap()
}

pub fn one_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}
