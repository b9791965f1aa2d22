//! Frames, illumination maps and the re-projection of corrected illumination
//! onto RGB.

use crate::error::{Error, Result};

/// One 8-bit RGB frame, row-major, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameRgb {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl FrameRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Empty("frame with zero width or height"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidData(format!(
                "frame data has {} bytes, expected {}x{}x3",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
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

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// Single-channel intensity map in `[0, 255]`.
///
/// Maps extracted from a frame hold integer levels; maps produced by a
/// lookup table hold real values.
#[derive(Clone, Debug, PartialEq)]
pub struct IlluminationMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl IlluminationMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Empty("map with zero width or height"));
        }
        if data.len() != width * height {
            return Err(Error::InvalidData(format!(
                "map has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::InvalidData(format!(
                "illumination value {v} outside [0, 255]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
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

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Values rounded to the nearest 8-bit level.
    pub fn levels(&self) -> impl Iterator<Item = u8> + '_ {
        self.data.iter().map(|&v| quantize(v))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Binary per-pixel mask. Used both for exposure maps and for flow validity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidData(format!(
                "mask has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
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

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len().max(1) as f64
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

/// An ordered clip of equally sized frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Vec<FrameRgb>,
    frame_rate: f64,
}

impl FrameSequence {
    pub const DEFAULT_FRAME_RATE: f64 = 24.0;

    pub fn new(frames: Vec<FrameRgb>) -> Result<Self> {
        Self::with_frame_rate(frames, Self::DEFAULT_FRAME_RATE)
    }

    pub fn with_frame_rate(frames: Vec<FrameRgb>, frame_rate: f64) -> Result<Self> {
        let first = frames.first().ok_or(Error::Empty("frame sequence"))?;
        let dims = first.dims();
        for f in &frames[1..] {
            Error::check_dims(dims, f.dims())?;
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[FrameRgb] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<FrameRgb> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }
}

/// Round and clamp a real intensity to an 8-bit level.
#[inline]
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Per-pixel `max(R, G, B)`, the HSV value channel.
pub fn illumination_map(frame: &FrameRgb) -> IlluminationMap {
    let data = frame
        .pixels()
        .map(|[r, g, b]| r.max(g).max(b) as f64)
        .collect();
    IlluminationMap {
        width: frame.width,
        height: frame.height,
        data,
    }
}

/// Rescale every pixel so its illumination moves from `old_v` to `new_v`,
/// keeping the channel ratios. Black pixels take the gray level of `new_v`.
pub fn apply_illumination(
    frame: &FrameRgb,
    old_v: &IlluminationMap,
    new_v: &IlluminationMap,
) -> Result<FrameRgb> {
    Error::check_dims(frame.dims(), old_v.dims())?;
    Error::check_dims(frame.dims(), new_v.dims())?;
    let mut data = Vec::with_capacity(frame.data.len());
    for ((px, &old), &new) in frame
        .data
        .chunks_exact(3)
        .zip(&old_v.data)
        .zip(&new_v.data)
    {
        if old <= 0.0 {
            let g = quantize(new);
            data.extend_from_slice(&[g, g, g]);
        } else {
            let ratio = new / old;
            data.extend(px.iter().map(|&c| quantize(c as f64 * ratio)));
        }
    }
    FrameRgb::new(frame.width, frame.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn illumination_is_channel_max() {
        let f = FrameRgb::new(1, 1, vec![0, 0, 0]).unwrap();
        assert_eq!(illumination_map(&f).data(), &[0.0]);
        let f = FrameRgb::new(1, 1, vec![10, 200, 55]).unwrap();
        assert_eq!(illumination_map(&f).data(), &[200.0]);
        let f = FrameRgb::new(2, 1, vec![255, 0, 0, 3, 3, 3]).unwrap();
        assert_eq!(illumination_map(&f).data(), &[255.0, 3.0]);
    }

    #[test]
    fn frame_rejects_bad_lengths() {
        assert!(FrameRgb::new(2, 2, vec![0; 11]).is_err());
        assert!(FrameRgb::new(0, 2, vec![]).is_err());
        assert!(IlluminationMap::new(1, 1, vec![256.0]).is_err());
    }

    #[test]
    fn sequence_requires_uniform_dims() {
        let a = FrameRgb::filled(2, 2, [1, 2, 3]).unwrap();
        let b = FrameRgb::filled(3, 2, [1, 2, 3]).unwrap();
        assert!(matches!(
            FrameSequence::new(vec![a.clone(), b]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(FrameSequence::new(vec![]).is_err());
        assert_eq!(FrameSequence::new(vec![a]).unwrap().len(), 1);
    }

    #[test]
    fn apply_illumination_examples() {
        let f = FrameRgb::new(1, 1, vec![100, 50, 0]).unwrap();
        let old = IlluminationMap::filled(1, 1, 100.0).unwrap();
        let new = IlluminationMap::filled(1, 1, 50.0).unwrap();
        assert_eq!(apply_illumination(&f, &old, &new).unwrap().data(), &[50, 25, 0]);

        let black = FrameRgb::new(1, 1, vec![0, 0, 0]).unwrap();
        let zero = IlluminationMap::filled(1, 1, 0.0).unwrap();
        let v37 = IlluminationMap::filled(1, 1, 37.0).unwrap();
        assert_eq!(
            apply_illumination(&black, &zero, &v37).unwrap().data(),
            &[37, 37, 37]
        );
    }

    #[test]
    fn apply_illumination_checks_dims() {
        let f = FrameRgb::filled(2, 2, [1, 1, 1]).unwrap();
        let v = IlluminationMap::filled(2, 1, 1.0).unwrap();
        assert!(matches!(
            apply_illumination(&f, &v, &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn arb_frame() -> impl Strategy<Value = FrameRgb> {
        (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h * 3)
                .prop_map(move |d| FrameRgb::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn same_illumination_is_identity(f in arb_frame()) {
            let v = illumination_map(&f);
            let out = apply_illumination(&f, &v, &v).unwrap();
            prop_assert_eq!(&out, &f);
            prop_assert_eq!(illumination_map(&out), v);
        }

        #[test]
        fn hue_is_preserved_without_clamping(
            px in (1u8..=255, any::<u8>(), any::<u8>()),
            scale in 0.1f64..1.0,
        ) {
            let f = FrameRgb::new(1, 1, vec![px.0, px.1, px.2]).unwrap();
            let v = illumination_map(&f);
            let target = IlluminationMap::filled(1, 1, v.data()[0] * scale).unwrap();
            let out = apply_illumination(&f, &v, &target).unwrap();
            for (c_out, c_in) in out.data().iter().zip(f.data()) {
                let ideal = *c_in as f64 * scale;
                prop_assert!((*c_out as f64 - ideal).abs() <= 1.0);
            }
        }

        #[test]
        fn raising_illumination_never_darkens(
            px in (any::<u8>(), any::<u8>(), any::<u8>()),
            lo in 0.0f64..255.0,
            bump in 0.0f64..255.0,
        ) {
            let f = FrameRgb::new(1, 1, vec![px.0, px.1, px.2]).unwrap();
            let v = illumination_map(&f);
            let a = IlluminationMap::filled(1, 1, lo).unwrap();
            let b = IlluminationMap::filled(1, 1, (lo + bump).min(255.0)).unwrap();
            let oa = apply_illumination(&f, &v, &a).unwrap();
            let ob = apply_illumination(&f, &v, &b).unwrap();
            for (x, y) in oa.data().iter().zip(ob.data()) {
                prop_assert!(y >= x);
            }
        }
    }
}
