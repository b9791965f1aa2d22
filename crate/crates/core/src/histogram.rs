//! 256-bin histograms, cumulative histograms and histogram matching.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::IlluminationMap;

pub const LEVELS: usize = 256;

/// Fraction of pixels at each 8-bit intensity.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    bins: [f64; LEVELS],
}

impl Histogram {
    /// Histogram of a list of 8-bit levels.
    pub fn from_levels(levels: impl IntoIterator<Item = u8>) -> Result<Self> {
        let mut counts = [0u64; LEVELS];
        let mut n = 0u64;
        for l in levels {
            counts[l as usize] += 1;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("histogram of an empty image"));
        }
        let mut bins = [0.0; LEVELS];
        for (b, c) in bins.iter_mut().zip(counts) {
            *b = c as f64 / n as f64;
        }
        Ok(Self { bins })
    }

    /// Build from raw bin masses. Masses must be non-negative with a positive
    /// total; they are normalized to sum to one.
    pub fn from_bins(bins: [f64; LEVELS]) -> Result<Self> {
        if bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidData("negative or non-finite histogram bin".into()));
        }
        let total: f64 = bins.iter().sum();
        if total <= 0.0 {
            return Err(Error::Empty("histogram with zero mass"));
        }
        let mut bins = bins;
        bins.iter_mut().for_each(|b| *b /= total);
        Ok(Self { bins })
    }

    /// All mass at one level.
    pub fn point(level: u8) -> Self {
        let mut bins = [0.0; LEVELS];
        bins[level as usize] = 1.0;
        Self { bins }
    }

    pub fn uniform() -> Self {
        Self {
            bins: [1.0 / LEVELS as f64; LEVELS],
        }
    }

    #[inline]
    pub fn bins(&self) -> &[f64; LEVELS] {
        &self.bins
    }

    pub fn max_bin(&self) -> f64 {
        self.bins.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.bins
            .iter()
            .enumerate()
            .map(|(l, b)| l as f64 * b)
            .sum()
    }

    pub fn cumulative(&self) -> CumulativeHistogram {
        cumulative(self)
    }

    /// `bin,value` rows, one per level, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(LEVELS * 24);
        for (l, b) in self.bins.iter().enumerate() {
            writeln!(out, "{l},{b}").unwrap();
        }
        out
    }
}

/// Running sum of a [`Histogram`]: `values[l]` is the mass at or below `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeHistogram {
    values: [f64; LEVELS],
}

impl CumulativeHistogram {
    #[inline]
    pub fn values(&self) -> &[f64; LEVELS] {
        &self.values
    }

    /// Largest absolute difference between the two distribution functions.
    pub fn kolmogorov_distance(&self, other: &CumulativeHistogram) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Real-valued inverse at probability `p`: the first level `j` whose
    /// cumulative mass reaches `p`, linearly interpolated against the
    /// preceding level (level `-1` has mass 0). Flat segments return `j`.
    pub fn inverse(&self, p: f64) -> f64 {
        let j = self
            .values
            .partition_point(|&v| v < p)
            .min(LEVELS - 1);
        let hi = self.values[j];
        let lo = if j == 0 { 0.0 } else { self.values[j - 1] };
        if hi <= lo {
            return j as f64;
        }
        let x = (j as f64 - 1.0) + ((p - lo) / (hi - lo)).clamp(0.0, 1.0);
        x.clamp(0.0, 255.0)
    }
}

/// Per-level correction table; applying it to a map is one lookup per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LookupTable {
    entries: [f64; LEVELS],
}

impl LookupTable {
    pub fn new(entries: [f64; LEVELS]) -> Result<Self> {
        if entries.iter().any(|e| !(0.0..=255.0).contains(e)) {
            return Err(Error::InvalidData("lookup entry outside [0, 255]".into()));
        }
        if entries.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidData("lookup table is not monotone".into()));
        }
        Ok(Self { entries })
    }

    pub fn identity() -> Self {
        let mut entries = [0.0; LEVELS];
        for (l, e) in entries.iter_mut().enumerate() {
            *e = l as f64;
        }
        Self { entries }
    }

    /// Construct without validation. Callers guarantee the invariants.
    pub(crate) fn from_entries_unchecked(entries: [f64; LEVELS]) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0] <= w[1]));
        Self { entries }
    }

    #[inline]
    pub fn entries(&self) -> &[f64; LEVELS] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, level: u8) -> f64 {
        self.entries[level as usize]
    }
}

/// Histogram of a map's values, rounded to 8-bit levels.
pub fn histogram(map: &IlluminationMap) -> Histogram {
    Histogram::from_levels(map.levels()).expect("maps are never empty")
}

pub fn cumulative(hist: &Histogram) -> CumulativeHistogram {
    let mut values = [0.0; LEVELS];
    let mut acc = 0.0;
    for (v, b) in values.iter_mut().zip(&hist.bins) {
        acc += b;
        *v = acc.min(1.0);
    }
    // Absorb rounding in the running sum so the last level is exactly 1.
    values[LEVELS - 1] = 1.0;
    CumulativeHistogram { values }
}

/// Matched intensity for `level`: the target inverse CDF evaluated at the
/// source CDF.
pub fn match_value(
    level: usize,
    source: &CumulativeHistogram,
    target: &CumulativeHistogram,
) -> Result<f64> {
    if level >= LEVELS {
        return Err(Error::InvalidParameter(format!(
            "intensity level {level} outside [0, 255]"
        )));
    }
    Ok(target.inverse(source.values[level]))
}

pub fn match_lut(source: &Histogram, target: &Histogram) -> LookupTable {
    let (s, t) = (source.cumulative(), target.cumulative());
    let mut entries = [0.0; LEVELS];
    for (e, &p) in entries.iter_mut().zip(&s.values) {
        *e = t.inverse(p);
    }
    LookupTable::from_entries_unchecked(entries)
}

pub fn apply_lut(map: &IlluminationMap, lut: &LookupTable) -> IlluminationMap {
    let data = map.levels().map(|l| lut.get(l)).collect();
    IlluminationMap::new(map.width(), map.height(), data).expect("lut entries are in range")
}
