//! Deflickering priors: filtered illumination maps, singular frames and
//! exposure masks.


use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Instant;
use crate::histogram::{apply_lut, histogram, Histogram, LookupTable};
use crate::image::{illumination_map, BinaryMask, FrameSequence, IlluminationMap};
use crate::ste::{ste_luts, SteParams};

/// Per-pixel over/under-exposure flags.
pub type ExposureMask = BinaryMask;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorParams {
    /// Moving-average radius `n` for the KL threshold.
    pub ma_radius: usize,
    /// Multiplier on the moving average. 1 keeps the plain rule.
    pub kl_margin: f64,
    /// Absolute lower bound on the KL needed to flag a frame.
    pub kl_floor: f64,
    /// Additive per-bin smoothing before the KL divergence.
    pub kl_smoothing: f64,
    /// Darkness threshold: illumination below this is exposed.
    pub dark_threshold: f64,
    /// Brightness threshold: illumination above this is exposed.
    pub bright_threshold: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            ma_radius: 2,
            kl_margin: 1.0,
            kl_floor: 0.0,
            kl_smoothing: 1e-8,
            dark_threshold: 10.0,
            bright_threshold: 245.0,
        }
    }
}

impl PriorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(0.0..=255.0).contains(&self.dark_threshold)
            || !(0.0..=255.0).contains(&self.bright_threshold)
        {
            return bad("exposure thresholds must lie in [0, 255]".into());
        }
        if self.dark_threshold >= self.bright_threshold {
            return bad(format!(
                "dark threshold {} must be below bright threshold {}",
                self.dark_threshold, self.bright_threshold
            ));
        }
        if !(self.kl_margin > 0.0) {
            return bad(format!("KL margin must be positive, got {}", self.kl_margin));
        }
        if !(self.kl_floor >= 0.0) {
            return bad(format!("KL floor must be non-negative, got {}", self.kl_floor));
        }
        if !(self.kl_smoothing > 0.0) {
            return bad(format!(
                "KL smoothing must be positive, got {}",
                self.kl_smoothing
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DeflickerPriors {
    /// Original illumination maps `V_t`.
    pub illumination: Vec<IlluminationMap>,
    /// STE-filtered illumination maps.
    pub filtered_maps: Vec<IlluminationMap>,
    pub luts: Vec<LookupTable>,
    pub histograms: Vec<Histogram>,
    pub smoothed_histograms: Vec<Histogram>,
    /// `KL(smoothed || original)` per frame.
    pub kl_series: Vec<f64>,
    /// Effective flagging threshold per frame.
    pub thresholds: Vec<f64>,
    /// Flagged frames, 0-based, ascending.
    pub singular: Vec<usize>,
    pub exposure: Vec<ExposureMask>,
}

impl DeflickerPriors {
    pub fn len(&self) -> usize {
        self.kl_series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kl_series.is_empty()
    }

    pub fn is_singular(&self, t: usize) -> bool {
        self.singular.binary_search(&t).is_ok()
    }
}

/// `KL(p || q)` in nats after adding `smoothing` to every bin of both
/// histograms and renormalizing.
pub fn kl_divergence(p: &Histogram, q: &Histogram, smoothing: f64) -> f64 {
    let n = p.bins().len() as f64;
    let zp = 1.0 + smoothing * n;
    let zq = 1.0 + smoothing * n;
    let kl: f64 = p
        .bins()
        .iter()
        .zip(q.bins())
        .map(|(&a, &b)| {
            let a = (a + smoothing) / zp;
            let b = (b + smoothing) / zq;
            a * (a / b).ln()
        })
        .sum();
    kl.max(0.0)
}

/// Moving average of `series` over `[t - radius, t + radius]`, truncated at
/// the ends.
pub fn moving_average(series: &[f64], radius: usize) -> Vec<f64> {
    (0..series.len())
        .map(|t| {
            let lo = t.saturating_sub(radius);
            let hi = (t + radius).min(series.len() - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Thresholds `max(margin * avg_t, floor)` used by [`singular_frames`].
pub fn kl_thresholds(series: &[f64], params: &PriorParams) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    moving_average(series, params.ma_radius)
        .into_iter()
        .map(|m| (params.kl_margin * m).max(params.kl_floor))
        .collect()
}

/// Frames whose KL strictly exceeds their threshold.
pub fn singular_frames(series: &[f64], params: &PriorParams) -> Vec<usize> {
    kl_thresholds(series, params)
        .iter()
        .zip(series)
        .enumerate()
        .filter(|(_, (th, kl))| kl > th)
        .map(|(t, _)| t)
        .collect()
}

pub fn exposure_map(filtered: &IlluminationMap, params: &PriorParams) -> ExposureMask {
    let data = filtered
        .data()
        .iter()
        .map(|&v| v < params.dark_threshold || v > params.bright_threshold)
        .collect();
    BinaryMask::new(filtered.width(), filtered.height(), data).expect("same size as the map")
}

/// Wall-clock cost of each stage-1 step, in milliseconds.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Stage1Timings {
    pub illumination_ms: f64,
    pub histograms_ms: f64,
    pub lut_construction_ms: f64,
    pub lut_application_ms: f64,
    pub kl_ms: f64,
    pub exposure_ms: f64,
}

pub fn extract_priors(
    frames: &FrameSequence,
    ste: &SteParams,
    params: &PriorParams,
) -> Result<DeflickerPriors> {
    extract_priors_timed(frames, ste, params).map(|(p, _)| p)
}

/// [`extract_priors`] that also reports per-step timings.
pub fn extract_priors_timed(
    frames: &FrameSequence,
    ste: &SteParams,
    params: &PriorParams,
) -> Result<(DeflickerPriors, Stage1Timings)> {
    params.validate()?;
    ste.validate()?;
    let mut timings = Stage1Timings::default();
    let mut clock = Instant::now();
    let mut lap = || {
        let ms = clock.elapsed().as_secs_f64() * 1e3;
        clock = Instant::now();
        ms
    };

    let illumination: Vec<IlluminationMap> =
        frames.frames().par_iter().map(illumination_map).collect();
    timings.illumination_ms = lap();

    let histograms: Vec<Histogram> = illumination.par_iter().map(histogram).collect();
    timings.histograms_ms = lap();

    let luts = ste_luts(&histograms, ste)?;
    timings.lut_construction_ms = lap();

    let (filtered_maps, smoothed_histograms): (Vec<_>, Vec<_>) = illumination
        .par_iter()
        .zip(&luts)
        .map(|(m, lut)| {
            let f = apply_lut(m, lut);
            let h = histogram(&f);
            (f, h)
        })
        .unzip();
    timings.lut_application_ms = lap();

    let kl_series: Vec<f64> = smoothed_histograms
        .par_iter()
        .zip(&histograms)
        .map(|(s, h)| kl_divergence(s, h, params.kl_smoothing))
        .collect();
    let thresholds = kl_thresholds(&kl_series, params);
    let singular = singular_frames(&kl_series, params);
    timings.kl_ms = lap();

    let exposure = filtered_maps
        .par_iter()
        .map(|m| exposure_map(m, params))
        .collect();
    timings.exposure_ms = lap();

    Ok((
        DeflickerPriors {
            illumination,
            filtered_maps,
            luts,
            histograms,
            smoothed_histograms,
            kl_series,
            thresholds,
            singular,
            exposure,
        },
        timings,
    ))
}
