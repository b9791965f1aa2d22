//! Synthetic flicker with known ground truth.
//!
//! Frames are split into consecutive blocks of `window` frames. Each block
//! draws one affine artifact `x -> clamp(gain * x + offset)` and applies it to
//! every frame of the block, either to the whole frame or, in local mode, to
//! one axis-aligned rectangle. Randomness is derived from `(seed, block)`
//! alone, so blocks can be generated in any order.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{quantize, FrameRgb, FrameSequence};
use crate::io::{read_png_dir, write_png_dir};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlickerSpec {
    /// Frames sharing one artifact.
    pub window: usize,
    /// Local mode: the artifact covers a rectangle of `1 / local_window` of
    /// each frame side. `None` means whole-frame flicker.
    pub local_window: Option<usize>,
    pub offset_range: (f64, f64),
    /// `None` keeps the gain at 1 (purely additive artifacts).
    pub gain_range: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for FlickerSpec {
    fn default() -> Self {
        Self {
            window: 1,
            local_window: None,
            offset_range: (-50.0, 50.0),
            gain_range: Some((0.7, 1.3)),
            seed: 0,
        }
    }
}

/// One block's artifact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Artifact {
    pub gain: f64,
    pub offset: f64,
    /// `(x0, y0, width, height)` in pixels; `None` covers the frame.
    pub region: Option<(usize, usize, usize, usize)>,
}

impl Artifact {
    pub fn apply(&self, frame: &FrameRgb) -> FrameRgb {
        let (w, h) = frame.dims();
        let (x0, y0, rw, rh) = self.region.unwrap_or((0, 0, w, h));
        let mut data = frame.data().to_vec();
        for y in y0..(y0 + rh).min(h) {
            for x in x0..(x0 + rw).min(w) {
                let i = (y * w + x) * 3;
                for c in &mut data[i..i + 3] {
                    *c = quantize(self.gain * *c as f64 + self.offset);
                }
            }
        }
        FrameRgb::new(w, h, data).expect("same dimensions")
    }
}

impl FlickerSpec {
    pub fn global(window: usize, seed: u64) -> Self {
        Self {
            window,
            seed,
            ..Self::default()
        }
    }

    pub fn local(local_window: usize, seed: u64) -> Self {
        Self {
            window: 1,
            local_window: Some(local_window),
            seed,
            ..Self::default()
        }
    }

    /// The four variants `W=1`, `W=3`, `W=10` and `L=3`.
    pub fn standard_set(seed: u64) -> Vec<Self> {
        vec![
            Self::global(1, seed),
            Self::global(3, seed),
            Self::global(10, seed),
            Self::local(3, seed),
        ]
    }

    pub fn label(&self) -> String {
        match self.local_window {
            Some(l) => format!("L{l}"),
            None => format!("W{}", self.window),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidParameter("flicker window must be >= 1".into()));
        }
        if self.local_window == Some(0) {
            return Err(Error::InvalidParameter("local window must be >= 1".into()));
        }
        let (lo, hi) = self.offset_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!("bad offset range ({lo}, {hi})")));
        }
        if let Some((lo, hi)) = self.gain_range {
            if !(lo > 0.0 && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!("bad gain range ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    /// Same spec with the seed mixed with a clip id, for corpora.
    pub fn for_clip(&self, clip: u64) -> Self {
        Self {
            seed: mix(self.seed, clip),
            ..*self
        }
    }

    /// Artifact shared by block `block` of a clip of `w` x `h` frames.
    pub fn artifact(&self, block: usize, w: usize, h: usize) -> Artifact {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, block as u64));
        let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        let gain = self.gain_range.map_or(1.0, |r| draw(&mut rng, r));
        let offset = draw(&mut rng, self.offset_range);
        let region = self.local_window.map(|l| {
            let (rw, rh) = (w.div_ceil(l).max(1), h.div_ceil(l).max(1));
            let x0 = rng.random_range(0..=w - rw);
            let y0 = rng.random_range(0..=h - rh);
            (x0, y0, rw, rh)
        });
        Artifact {
            gain,
            offset,
            region,
        }
    }
}

/// SplitMix64 finalizer over the pair, used to derive independent streams.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn synth_flicker(clean: &FrameSequence, spec: &FlickerSpec) -> Result<FrameSequence> {
    spec.validate()?;
    let (w, h) = clean.dims();
    let frames = clean
        .frames()
        .par_iter()
        .enumerate()
        .map(|(t, f)| spec.artifact(t / spec.window, w, h).apply(f))
        .collect();
    FrameSequence::with_frame_rate(frames, clean.frame_rate())
}

/// A named clean clip on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipSource {
    pub name: String,
    pub dir: PathBuf,
}

impl ClipSource {
    pub fn from_dir(dir: &Path) -> Self {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("clip")
            .to_owned();
        Self {
            name,
            dir: dir.to_path_buf(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub clip: String,
    pub label: String,
    /// The flicker spec as given, before mixing in the clip id.
    pub spec: FlickerSpec,
    /// Effective seed used for this clip.
    pub seed: u64,
    pub frames: usize,
    pub gt: PathBuf,
    pub degraded: PathBuf,
    /// SHA-256 over the degraded frames' raw RGB bytes.
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<CorpusEntry>,
}

pub const MANIFEST_NAME: &str = "corpus.json";

/// Hex SHA-256 of a sequence's pixel data.
pub fn sequence_digest(seq: &FrameSequence) -> String {
    let mut hasher = Sha256::new();
    for f in seq.frames() {
        hasher.update(f.data());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Unique labels for a spec list: repeated labels get a `_<index>` suffix.
pub fn spec_labels(specs: &[FlickerSpec]) -> Vec<String> {
    let base: Vec<String> = specs.iter().map(FlickerSpec::label).collect();
    base.iter()
        .enumerate()
        .map(|(i, l)| {
            if base.iter().filter(|b| *b == l).count() > 1 {
                format!("{l}_{i}")
            } else {
                l.clone()
            }
        })
        .collect()
}

/// Degrade every clip with every spec, writing
/// `<out>/<clip>/<label>/%06d.png` and `<out>/corpus.json`.
///
/// With no specs nothing is written and the manifest is empty.
pub fn build_corpus(
    clips: &[ClipSource],
    specs: &[FlickerSpec],
    out: &Path,
) -> Result<CorpusManifest> {
    if specs.is_empty() || clips.is_empty() {
        return Ok(CorpusManifest::default());
    }
    for s in specs {
        s.validate()?;
    }
    let labels = spec_labels(specs);
    let mut manifest = CorpusManifest::default();
    for (ci, clip) in clips.iter().enumerate() {
        let clean = read_png_dir(&clip.dir)?;
        for (spec, label) in specs.iter().zip(&labels) {
            let effective = spec.for_clip(ci as u64);
            let degraded = synth_flicker(&clean, &effective)?;
            let dir = out.join(&clip.name).join(label);
            write_png_dir(&degraded, &dir)?;
            manifest.entries.push(CorpusEntry {
                clip: clip.name.clone(),
                label: label.clone(),
                spec: *spec,
                seed: effective.seed,
                frames: degraded.len(),
                gt: clip.dir.clone(),
                degraded: dir,
                sha256: sequence_digest(&degraded),
            });
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Clean test content: a smooth colored texture drifting at a constant
/// sub-pixel velocity with a disc moving across it. Levels stay inside
/// `[16, 239]`, so clean frames never count as exposed.
pub fn moving_pattern(width: usize, height: usize, len: usize, seed: u64) -> Result<FrameSequence> {
    if len == 0 {
        return Err(Error::Empty("pattern length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5eed));
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = rng.random_range(0.08..0.35);
            [freq * angle.cos(), freq * angle.sin(), rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.5..1.0)]
        })
        .collect();
    let tint: Vec<[f64; 3]> = (0..waves.len())
        .map(|_| [rng.random_range(0.4..1.0), rng.random_range(0.4..1.0), rng.random_range(0.4..1.0)])
        .collect();
    let (vx, vy) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let radius = rng.random_range(0.12..0.2) * width.min(height) as f64;
    let disc_color = [rng.random_range(50.0..200.0), rng.random_range(50.0..200.0), rng.random_range(50.0..200.0)];
    let (cx0, cy0) = (rng.random_range(0.2..0.8) * width as f64, rng.random_range(0.2..0.8) * height as f64);
    let (dvx, dvy) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let norm: f64 = waves.iter().map(|w| w[3]).sum();

    let frames = (0..len)
        .into_par_iter()
        .map(|t| {
            let t = t as f64;
            let cx = (cx0 + dvx * t).rem_euclid(width as f64);
            let cy = (cy0 + dvy * t).rem_euclid(height as f64);
            FrameRgb::from_fn(width, height, |x, y| {
                let (px, py) = (x as f64 - vx * t, y as f64 - vy * t);
                let mut c = [0.0; 3];
                for (w, k) in waves.iter().zip(&tint) {
                    let s = w[3] * (0.5 + 0.5 * (w[0] * px + w[1] * py + w[2]).sin());
                    for ch in 0..3 {
                        c[ch] += k[ch] * s;
                    }
                }
                let mut rgb = c.map(|v| 16.0 + 223.0 * v / norm);
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                // One-pixel antialiased edge.
                let a = (radius + 0.5 - d).clamp(0.0, 1.0);
                // Rings keep the disc textured; flat regions pile whole
                // objects into a single histogram bin.
                let ring = 25.0 * (0.7 * d + 0.3 * (x as f64 - cx)).sin();
                for ch in 0..3 {
                    rgb[ch] = a * (disc_color[ch] + ring) + (1.0 - a) * rgb[ch];
                }
                rgb.map(quantize)
            })
            .expect("positive dimensions")
        })
        .collect();
    FrameSequence::new(frames)
}
