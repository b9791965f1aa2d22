//! Dense optical flow, backward warping and flow validity masks.
//!
//! A [`FlowField`] lives on the grid of a target frame `t` and points into a
//! source frame `s`: pixel `(x, y)` of `t` corresponds to `(x + u, y + v)` in
//! `s`. [`warp`] pulls `s` onto `t`'s grid with that field.

mod flo;
mod lk;

pub use flo::{read_flo, write_flo, FLO_MAGIC};
pub use lk::{estimate_flow, estimate_flow_maps, estimate_flow_maps_ignoring};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{quantize, BinaryMask, FrameRgb, IlluminationMap};

/// Flow validity; `true` where the correspondence is trusted.
pub type OcclusionMask = BinaryMask;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Empty("flow field with zero width or height"));
        }
        if data.len() != width * height * 2 {
            return Err(Error::InvalidData(format!(
                "flow has {} values, expected {}x{}x2",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite flow displacement".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        let data = [u, v].iter().copied().cycle().take(width * height * 2).collect();
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Interleaved `(u, v)` pairs, row-major.
    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = (y * self.width + x) * 2;
        (self.data[i], self.data[i + 1])
    }

    /// Bilinear sample of the field at a real position, clamped to the border.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let (w, h) = (self.width, self.height);
        let (x0, y0, fx, fy) = bilinear_taps(x, y, w, h);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let at = |xx: usize, yy: usize, c: usize| self.data[(yy * w + xx) * 2 + c] as f64;
        let mix = |c| {
            let top = at(x0, y0, c) * (1.0 - fx) + at(x1, y0, c) * fx;
            let bottom = at(x0, y1, c) * (1.0 - fx) + at(x1, y1, c) * fx;
            top * (1.0 - fy) + bottom * fy
        };
        (mix(0), mix(1))
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.data
            .chunks_exact(2)
            .map(|c| (c[0] as f64).hypot(c[1] as f64))
            .sum::<f64>()
            / (self.width * self.height) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    /// Side of the square least-squares window; odd, at least 3.
    pub window: usize,
    pub iterations: usize,
    /// Forward-backward consistency tolerance in pixels.
    pub fb_threshold: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            window: 7,
            iterations: 3,
            fb_threshold: 1.0,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "flow window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if self.pyramid_levels == 0 || self.iterations == 0 {
            return Err(Error::InvalidParameter(
                "flow pyramid levels and iterations must be positive".into(),
            ));
        }
        if !(self.fb_threshold > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fb threshold must be positive, got {}",
                self.fb_threshold
            )));
        }
        Ok(())
    }
}

/// Flows between adjacent frames `k` and `k + 1`, in the usual
/// forward/backward sense.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacentFlows {
    /// On frame `k`'s grid, pointing into frame `k + 1`.
    pub forward: FlowField,
    /// On frame `k + 1`'s grid, pointing into frame `k`.
    pub backward: FlowField,
}

impl AdjacentFlows {
    pub fn estimate(a: &IlluminationMap, b: &IlluminationMap, params: &FlowParams) -> Result<Self> {
        Ok(Self {
            forward: estimate_flow_maps(b, a, params)?,
            backward: estimate_flow_maps(a, b, params)?,
        })
    }

    /// [`AdjacentFlows::estimate`] leaving the `true` pixels of each ignore
    /// mask (for instance saturated ones) out of the fit.
    pub fn estimate_ignoring(
        a: &IlluminationMap,
        b: &IlluminationMap,
        a_ignore: &BinaryMask,
        b_ignore: &BinaryMask,
        params: &FlowParams,
    ) -> Result<Self> {
        Ok(Self {
            forward: estimate_flow_maps_ignoring(b, a, Some(b_ignore), Some(a_ignore), params)?,
            backward: estimate_flow_maps_ignoring(a, b, Some(a_ignore), Some(b_ignore), params)?,
        })
    }
}

#[inline]
fn bilinear_taps(x: f64, y: f64, w: usize, h: usize) -> (usize, usize, f64, f64) {
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (xc.floor(), yc.floor());
    (x0 as usize, y0 as usize, xc - x0, yc - y0)
}

/// Bilinear sample of a single-channel plane with border clamping.
#[inline]
pub(crate) fn sample_plane<T: Copy + Into<f64>>(data: &[T], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let (x0, y0, fx, fy) = bilinear_taps(x, y, w, h);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let at = |xx: usize, yy: usize| data[yy * w + xx].into();
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear RGB sample with border clamping.
#[inline]
pub(crate) fn sample_rgb(frame: &FrameRgb, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = frame.dims();
    let (x0, y0, fx, fy) = bilinear_taps(x, y, w, h);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let d = frame.data();
    let at = |xx: usize, yy: usize, c: usize| d[(yy * w + xx) * 3 + c] as f64;
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = at(x0, y0, c) * (1.0 - fx) + at(x1, y0, c) * fx;
        let bottom = at(x0, y1, c) * (1.0 - fx) + at(x1, y1, c) * fx;
        *o = top * (1.0 - fy) + bottom * fy;
    }
    out
}

/// Images that can be pulled through a flow field.
pub trait Warp: Sized {
    fn warp_by(&self, flow: &FlowField) -> Result<Self>;
}

impl Warp for IlluminationMap {
    fn warp_by(&self, flow: &FlowField) -> Result<Self> {
        Error::check_dims(self.dims(), flow.dims())?;
        let (w, h) = self.dims();
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = flow.get(x, y);
                let s = sample_plane(self.data(), w, h, x as f64 + u as f64, y as f64 + v as f64);
                out.push(s.clamp(0.0, 255.0));
            }
        }
        IlluminationMap::new(w, h, out)
    }
}

impl Warp for FrameRgb {
    fn warp_by(&self, flow: &FlowField) -> Result<Self> {
        Error::check_dims(self.dims(), flow.dims())?;
        let (w, h) = self.dims();
        let mut out = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = flow.get(x, y);
                let px = sample_rgb(self, x as f64 + u as f64, y as f64 + v as f64);
                out.extend(px.iter().map(|&c| quantize(c)));
            }
        }
        FrameRgb::new(w, h, out)
    }
}

/// Backward warp with bilinear sampling; out-of-frame samples clamp to the
/// border.
pub fn warp<I: Warp>(image: &I, flow: &FlowField) -> Result<I> {
    image.warp_by(flow)
}

/// Whether `(x, y)` lies inside a `w` x `h` frame.
#[inline]
pub(crate) fn inside(x: f64, y: f64, w: usize, h: usize) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64
}

/// Forward-backward consistency error at pixel `(x, y)`, together with the
/// position the forward flow lands on.
#[inline]
pub(crate) fn fb_residual(fwd: &FlowField, bwd: &FlowField, x: usize, y: usize) -> (f64, f64, f64) {
    let (u, v) = fwd.get(x, y);
    let (tx, ty) = (x as f64 + u as f64, y as f64 + v as f64);
    let (bu, bv) = bwd.sample(tx, ty);
    ((u as f64 + bu).hypot(v as f64 + bv), tx, ty)
}

/// Valid where the forward flow lands inside the frame and the backward flow
/// brings it back within `fb_threshold` pixels.
pub fn occlusion_mask(fwd: &FlowField, bwd: &FlowField, fb_threshold: f64) -> Result<OcclusionMask> {
    Error::check_dims(fwd.dims(), bwd.dims())?;
    let (w, h) = fwd.dims();
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (r, tx, ty) = fb_residual(fwd, bwd, x, y);
            data.push(inside(tx, ty, w, h) && r <= fb_threshold);
        }
    }
    BinaryMask::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize, slope: f64) -> IlluminationMap {
        let data = (0..h)
            .flat_map(|_| (0..w).map(move |x| x as f64 * slope))
            .collect();
        IlluminationMap::new(w, h, data).unwrap()
    }

    #[test]
    fn zero_flow_warp_is_identity() {
        let f = FrameRgb::from_fn(5, 4, |x, y| [(x * 40) as u8, (y * 50) as u8, 7]).unwrap();
        assert_eq!(warp(&f, &FlowField::zeros(5, 4)).unwrap(), f);
        let m = ramp(5, 4, 3.0);
        assert_eq!(warp(&m, &FlowField::zeros(5, 4)).unwrap(), m);
    }

    #[test]
    fn unit_shift_on_ramp_clamps_at_border() {
        let m = ramp(8, 2, 1.0);
        let out = warp(&m, &FlowField::constant(8, 2, 1.0, 0.0)).unwrap();
        for x in 0..8 {
            assert_eq!(out.get(x, 1), ((x + 1).min(7)) as f64);
        }
    }

    #[test]
    fn half_pixel_shift_interpolates() {
        // Bilinear at x + 0.5 on I(x) = 2x: (2x + 2(x + 1)) / 2 = 2x + 1.
        let m = ramp(8, 1, 2.0);
        let out = warp(&m, &FlowField::constant(8, 1, 0.5, 0.0)).unwrap();
        for x in 0..7 {
            assert_eq!(out.get(x, 0), 2.0 * x as f64 + 1.0);
        }
        assert_eq!(out.get(7, 0), 14.0);
    }

    #[test]
    fn warp_checks_dims() {
        let m = ramp(4, 4, 1.0);
        assert!(matches!(
            warp(&m, &FlowField::zeros(3, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn occlusion_examples() {
        let (w, h) = (10, 4);
        let z = FlowField::zeros(w, h);
        assert_eq!(occlusion_mask(&z, &z, 1.0).unwrap().count(), w * h);

        let out = FlowField::constant(w, h, (w + 5) as f32, 0.0);
        assert!(occlusion_mask(&out, &z, 1.0).unwrap().is_empty());

        let fwd = FlowField::constant(w, h, 2.0, 0.0);
        let bwd = FlowField::constant(w, h, -2.0, 0.0);
        let m = occlusion_mask(&fwd, &bwd, 1.0).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(m.get(x, y), x < w - 2, "({x}, {y})");
            }
        }
    }

    #[test]
    fn params_validate() {
        assert!(FlowParams::default().validate().is_ok());
        let even = FlowParams {
            window: 6,
            ..FlowParams::default()
        };
        assert!(even.validate().is_err());
        let no_levels = FlowParams {
            pyramid_levels: 0,
            ..FlowParams::default()
        };
        assert!(no_levels.validate().is_err());
    }

    #[test]
    fn flow_rejects_non_finite() {
        assert!(FlowField::new(1, 1, vec![f32::NAN, 0.0]).is_err());
        assert!(FlowField::new(1, 1, vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn larger_threshold_never_removes_pixels(
            vals in proptest::collection::vec(-3.0f32..3.0, 4 * 3 * 4),
            t in 0.01f64..3.0,
            extra in 0.0f64..3.0,
        ) {
            let fwd = FlowField::new(4, 3, vals[..24].to_vec()).unwrap();
            let bwd = FlowField::new(4, 3, vals[24..].to_vec()).unwrap();
            let a = occlusion_mask(&fwd, &bwd, t).unwrap();
            let b = occlusion_mask(&fwd, &bwd, t + extra).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!(!x || *y);
            }
        }
    }
}
