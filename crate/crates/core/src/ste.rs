//! Scale-time equalization: Gaussian-weighted temporal averaging of
//! histogram-matched intensities.
//!
//! For frame `t`, every level `l` is matched against each histogram in the
//! window `[t - r, t + r]` and the matched values are averaged with weights
//! `G_s(tau - t) = exp(-(tau - t)^2 / 4s) / sqrt(4 pi s)`, renormalized over
//! the part of the window that falls inside the clip. The result is one
//! 256-entry lookup table per frame, built from histograms only, so the cost
//! of the smoothing itself does not depend on resolution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{apply_lut, histogram, CumulativeHistogram, Histogram, LookupTable, LEVELS};
use crate::image::IlluminationMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteParams {
    /// Gaussian scale `s`.
    pub scale: f64,
    /// Temporal window radius `l`, in frames.
    pub radius: usize,
}

impl Default for SteParams {
    fn default() -> Self {
        Self {
            scale: 3.5,
            radius: 7,
        }
    }
}

impl SteParams {
    pub fn new(scale: f64, radius: usize) -> Result<Self> {
        let p = Self { scale, radius };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "STE scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Histogram matches performed per frame when the window is not
    /// truncated.
    pub fn matches_per_frame(&self) -> usize {
        LEVELS * (2 * self.radius + 1)
    }
}

/// Output of [`ste_filter`]; every list has one entry per frame.
#[derive(Clone, Debug)]
pub struct SteResult {
    pub histograms: Vec<Histogram>,
    pub luts: Vec<LookupTable>,
    pub filtered_maps: Vec<IlluminationMap>,
    /// Histograms of `filtered_maps` after rounding to 8-bit levels.
    pub smoothed_histograms: Vec<Histogram>,
}

/// Raw Gaussian kernel `G_s(d)`.
#[inline]
pub fn gaussian_kernel(scale: f64, d: f64) -> f64 {
    (-(d * d) / (4.0 * scale)).exp() / (4.0 * std::f64::consts::PI * scale).sqrt()
}

/// Window frames and normalized weights for frame `t` (0-based) of a clip of
/// length `len`.
pub fn gaussian_weights(params: &SteParams, t: usize, len: usize) -> Vec<(usize, f64)> {
    assert!(t < len, "frame {t} outside a clip of {len} frames");
    let lo = t.saturating_sub(params.radius);
    let hi = (t + params.radius).min(len - 1);
    let raw: Vec<(usize, f64)> = (lo..=hi)
        .map(|tau| (tau, gaussian_kernel(params.scale, tau as f64 - t as f64)))
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(tau, w)| (tau, w / total)).collect()
}

fn lut_from_cdfs(t: usize, cdfs: &[CumulativeHistogram], params: &SteParams) -> LookupTable {
    let weights = gaussian_weights(params, t, cdfs.len());
    let source = cdfs[t].values();
    let mut entries = [0.0; LEVELS];
    for (entry, &p) in entries.iter_mut().zip(source) {
        *entry = weights
            .iter()
            .map(|&(tau, w)| w * cdfs[tau].inverse(p))
            .sum::<f64>()
            .clamp(0.0, 255.0);
    }
    // Each term is monotone in p; enforce it against summation rounding.
    for l in 1..LEVELS {
        if entries[l] < entries[l - 1] {
            entries[l] = entries[l - 1];
        }
    }
    LookupTable::from_entries_unchecked(entries)
}

/// Correction table for frame `t` (0-based) given the whole histogram series.
pub fn ste_lut(t: usize, hists: &[Histogram], params: &SteParams) -> Result<LookupTable> {
    params.validate()?;
    if hists.is_empty() {
        return Err(Error::Empty("histogram series"));
    }
    if t >= hists.len() {
        return Err(Error::InvalidParameter(format!(
            "frame {t} outside a series of {}",
            hists.len()
        )));
    }
    let cdfs: Vec<_> = hists.iter().map(Histogram::cumulative).collect();
    Ok(lut_from_cdfs(t, &cdfs, params))
}

/// Correction tables for every frame. Frames are processed in parallel on the
/// current rayon pool; the output does not depend on scheduling.
pub fn ste_luts(hists: &[Histogram], params: &SteParams) -> Result<Vec<LookupTable>> {
    params.validate()?;
    if hists.is_empty() {
        return Err(Error::Empty("histogram series"));
    }
    let cdfs: Vec<_> = hists.iter().map(Histogram::cumulative).collect();
    Ok((0..cdfs.len())
        .into_par_iter()
        .map(|t| lut_from_cdfs(t, &cdfs, params))
        .collect())
}

pub fn ste_filter(maps: &[IlluminationMap], params: &SteParams) -> Result<SteResult> {
    let first = maps.first().ok_or(Error::Empty("illumination map sequence"))?;
    for m in &maps[1..] {
        Error::check_dims(first.dims(), m.dims())?;
    }
    let histograms: Vec<Histogram> = maps.par_iter().map(histogram).collect();
    let luts = ste_luts(&histograms, params)?;
    let (filtered_maps, smoothed_histograms) = maps
        .par_iter()
        .zip(&luts)
        .map(|(m, lut)| {
            let f = apply_lut(m, lut);
            let h = histogram(&f);
            (f, h)
        })
        .unzip();
    Ok(SteResult {
        histograms,
        luts,
        filtered_maps,
        smoothed_histograms,
    })
}
