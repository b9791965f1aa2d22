//! Stage-2 and stage-3 frame repair: global illumination correction, texture
//! migration into exposed regions, and an optional flow-guided temporal blend.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{fb_residual, sample_rgb, AdjacentFlows, FlowField};
use crate::image::{apply_illumination, quantize, BinaryMask, FrameRgb, IlluminationMap};
use crate::priors::ExposureMask;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairParams {
    pub enable_local: bool,
    /// Exponent on the forward-backward validity term of each neighbour's
    /// confidence.
    pub blend_conf_power: f64,
    /// Weight of the warped previous output in the temporal blend; 0 turns
    /// the blend off.
    pub temporal_blend_alpha: f64,
}

impl Default for RepairParams {
    fn default() -> Self {
        Self {
            enable_local: true,
            blend_conf_power: 1.0,
            temporal_blend_alpha: 0.0,
        }
    }
}

impl RepairParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blend_conf_power >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence power must be non-negative, got {}",
                self.blend_conf_power
            )));
        }
        if !(0.0..=1.0).contains(&self.temporal_blend_alpha) {
            return Err(Error::InvalidParameter(format!(
                "temporal blend alpha must lie in [0, 1], got {}",
                self.temporal_blend_alpha
            )));
        }
        Ok(())
    }
}

/// Replace the frame's illumination by the filtered one.
pub fn global_correct(
    frame: &FrameRgb,
    v: &IlluminationMap,
    filtered_v: &IlluminationMap,
) -> Result<FrameRgb> {
    apply_illumination(frame, v, filtered_v)
}

/// A neighbouring frame and the flows linking it to the current frame.
#[derive(Clone, Copy, Debug)]
pub struct Neighbor<'a> {
    pub frame: &'a FrameRgb,
    /// On the current frame's grid, pointing into the neighbour.
    pub to_neighbor: &'a FlowField,
    /// On the neighbour's grid, pointing back into the current frame.
    pub from_neighbor: &'a FlowField,
}

impl<'a> Neighbor<'a> {
    /// Previous frame `k` seen from frame `k + 1`.
    pub fn previous(frame: &'a FrameRgb, flows: &'a AdjacentFlows) -> Self {
        Self {
            frame,
            to_neighbor: &flows.backward,
            from_neighbor: &flows.forward,
        }
    }

    /// Next frame `k + 1` seen from frame `k`.
    pub fn next(frame: &'a FrameRgb, flows: &'a AdjacentFlows) -> Self {
        Self {
            frame,
            to_neighbor: &flows.forward,
            from_neighbor: &flows.backward,
        }
    }

    fn check(&self, dims: (usize, usize)) -> Result<()> {
        Error::check_dims(dims, self.frame.dims())?;
        Error::check_dims(dims, self.to_neighbor.dims())?;
        Error::check_dims(dims, self.from_neighbor.dims())
    }

    /// Warped neighbour colour and its confidence at `(x, y)`.
    fn candidate(&self, x: usize, y: usize, fb_threshold: f64, power: f64) -> ([f64; 3], f64) {
        let (w, h) = self.frame.dims();
        let (r, tx, ty) = fb_residual(self.to_neighbor, self.from_neighbor, x, y);
        let fb = if r <= fb_threshold { 1.0f64 } else { 0.0 };
        let conf = fb.powf(power) * border_validity(tx, w) * border_validity(ty, h);
        (sample_rgb(self.frame, tx, ty), conf)
    }
}

/// Share of a bilinear footprint at coordinate `c` that falls inside
/// `[0, len - 1]`; 1 inside, decaying linearly to 0 one pixel outside.
#[inline]
fn border_validity(c: f64, len: usize) -> f64 {
    let outside = (-c).max(c - (len - 1) as f64).max(0.0);
    (1.0 - outside).clamp(0.0, 1.0)
}

/// Fill exposed pixels of `cur` with flow-warped texture from its neighbours.
///
/// Inside `mask` each available neighbour contributes its warped colour,
/// weighted by a confidence combining forward-backward validity (raised to
/// `blend_conf_power`) and how much of the bilinear footprint lies in the
/// frame. Pixels where no neighbour is trusted keep their value, as does
/// everything outside the mask.
pub fn local_repair(
    cur: &FrameRgb,
    mask: &ExposureMask,
    prev: Option<Neighbor<'_>>,
    next: Option<Neighbor<'_>>,
    params: &RepairParams,
    fb_threshold: f64,
) -> Result<FrameRgb> {
    params.validate()?;
    let dims = cur.dims();
    Error::check_dims(dims, mask.dims())?;
    for n in prev.iter().chain(next.iter()) {
        n.check(dims)?;
    }
    let neighbors: Vec<Neighbor<'_>> = prev.into_iter().chain(next).collect();
    let (w, h) = dims;
    let mut data = cur.data().to_vec();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut acc = [0.0; 3];
            let mut total = 0.0;
            for n in &neighbors {
                let (rgb, conf) = n.candidate(x, y, fb_threshold, params.blend_conf_power);
                if conf > 0.0 {
                    for (a, c) in acc.iter_mut().zip(rgb) {
                        *a += conf * c;
                    }
                    total += conf;
                }
            }
            if total > 0.0 {
                let i = (y * w + x) * 3;
                for (d, a) in data[i..i + 3].iter_mut().zip(acc) {
                    *d = quantize(a / total);
                }
            }
        }
    }
    FrameRgb::new(w, h, data)
}

/// Recursive blend `O_t = (1 - alpha) * X_t + alpha * warp(O_{t-1})`, falling
/// back to `X_t` where the flow between `t - 1` and `t` is not valid.
/// `flows[k]` links frames `k` and `k + 1`.
pub fn temporal_blend(
    frames: &[FrameRgb],
    flows: &[AdjacentFlows],
    alpha: f64,
    fb_threshold: f64,
) -> Result<Vec<FrameRgb>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "temporal blend alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if alpha == 0.0 || frames.len() < 2 {
        return Ok(frames.to_vec());
    }
    if flows.len() + 1 < frames.len() {
        return Err(Error::InvalidParameter(format!(
            "{} frames need {} adjacent flows, got {}",
            frames.len(),
            frames.len() - 1,
            flows.len()
        )));
    }
    let dims = frames[0].dims();
    let mut out = Vec::with_capacity(frames.len());
    out.push(frames[0].clone());
    for (t, cur) in frames.iter().enumerate().skip(1) {
        Error::check_dims(dims, cur.dims())?;
        let prev_out = &out[t - 1];
        let pair = &flows[t - 1];
        Error::check_dims(dims, pair.backward.dims())?;
        Error::check_dims(dims, pair.forward.dims())?;
        let (w, h) = dims;
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let (r, tx, ty) = fb_residual(&pair.backward, &pair.forward, x, y);
                let i = (y * w + x) * 3;
                let px = &cur.data()[i..i + 3];
                if r <= fb_threshold && crate::flow::inside(tx, ty, w, h) {
                    let warped = sample_rgb(prev_out, tx, ty);
                    data.extend(
                        px.iter()
                            .zip(warped)
                            .map(|(&c, p)| quantize((1.0 - alpha) * c as f64 + alpha * p)),
                    );
                } else {
                    data.extend_from_slice(px);
                }
            }
        }
        out.push(FrameRgb::new(w, h, data)?);
    }
    Ok(out)
}

/// Channel-wise mean absolute error restricted to `mask`.
pub fn masked_mae(a: &FrameRgb, b: &FrameRgb, mask: &BinaryMask) -> Result<f64> {
    Error::check_dims(a.dims(), b.dims())?;
    Error::check_dims(a.dims(), mask.dims())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((pa, pb), &m) in a
        .data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .zip(mask.data())
    {
        if m {
            sum += pa
                .iter()
                .zip(pb)
                .map(|(&x, &y)| (x as f64 - y as f64).abs())
                .sum::<f64>();
            n += 3;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::illumination_map;

    fn textured(w: usize, h: usize, seed: usize) -> FrameRgb {
        FrameRgb::from_fn(w, h, |x, y| {
            let v = ((x * 37 + y * 91 + seed * 13) % 200) as u8 + 20;
            [v, v / 2, 255 - v]
        })
        .unwrap()
    }

    fn still(frame: &FrameRgb) -> AdjacentFlows {
        let (w, h) = frame.dims();
        AdjacentFlows {
            forward: FlowField::zeros(w, h),
            backward: FlowField::zeros(w, h),
        }
    }

    fn blob_mask(w: usize, h: usize) -> ExposureMask {
        let data = (0..w * h).map(|i| (i % w) < w / 2 && (i / w) < h / 2).collect();
        BinaryMask::new(w, h, data).unwrap()
    }

    #[test]
    fn global_correct_identity() {
        let f = textured(6, 5, 0);
        let v = illumination_map(&f);
        assert_eq!(global_correct(&f, &v, &v).unwrap(), f);
    }

    #[test]
    fn empty_mask_leaves_frame_alone() {
        let clean = textured(8, 8, 1);
        let cur = textured(8, 8, 2);
        let flows = still(&clean);
        let mask = BinaryMask::filled(8, 8, false);
        let out = local_repair(
            &cur,
            &mask,
            Some(Neighbor::previous(&clean, &flows)),
            Some(Neighbor::next(&clean, &flows)),
            &RepairParams::default(),
            1.0,
        )
        .unwrap();
        assert_eq!(out, cur);
    }

    #[test]
    fn saturated_blob_is_filled_from_neighbors() {
        let (w, h) = (8, 8);
        let clean = textured(w, h, 3);
        let mask = blob_mask(w, h);
        let mut data = clean.data().to_vec();
        for (i, &m) in mask.data().iter().enumerate() {
            if m {
                data[3 * i..3 * i + 3].copy_from_slice(&[255, 255, 255]);
            }
        }
        let cur = FrameRgb::new(w, h, data).unwrap();
        let flows = still(&clean);
        let out = local_repair(
            &cur,
            &mask,
            Some(Neighbor::previous(&clean, &flows)),
            Some(Neighbor::next(&clean, &flows)),
            &RepairParams::default(),
            1.0,
        )
        .unwrap();
        assert_eq!(out, clean);
    }

    #[test]
    fn untrusted_neighbors_keep_the_blob() {
        let (w, h) = (8, 8);
        let clean = textured(w, h, 4);
        let cur = FrameRgb::filled(w, h, [255, 255, 255]).unwrap();
        let mask = blob_mask(w, h);
        // Forward and backward disagree by 6 px everywhere.
        let broken = AdjacentFlows {
            forward: FlowField::constant(w, h, 3.0, 0.0),
            backward: FlowField::constant(w, h, 3.0, 0.0),
        };
        let out = local_repair(
            &cur,
            &mask,
            Some(Neighbor::previous(&clean, &broken)),
            Some(Neighbor::next(&clean, &broken)),
            &RepairParams::default(),
            1.0,
        )
        .unwrap();
        assert_eq!(out, cur);
        let alone = local_repair(&cur, &mask, None, None, &RepairParams::default(), 1.0).unwrap();
        assert_eq!(alone, cur);
    }

    #[test]
    fn local_repair_checks_dims() {
        let cur = textured(8, 8, 0);
        let mask = BinaryMask::filled(7, 8, true);
        assert!(local_repair(&cur, &mask, None, None, &RepairParams::default(), 1.0).is_err());
    }

    #[test]
    fn border_validity_profile() {
        assert_eq!(border_validity(0.0, 10), 1.0);
        assert_eq!(border_validity(9.0, 10), 1.0);
        assert_eq!(border_validity(-0.25, 10), 0.75);
        assert_eq!(border_validity(9.5, 10), 0.5);
        assert_eq!(border_validity(11.0, 10), 0.0);
    }

    #[test]
    fn temporal_blend_examples() {
        let a = FrameRgb::filled(4, 4, [100, 100, 100]).unwrap();
        let b = FrameRgb::filled(4, 4, [102, 102, 102]).unwrap();
        let flows = vec![still(&a)];
        let frames = vec![a.clone(), b.clone()];
        assert_eq!(temporal_blend(&frames, &flows, 0.0, 1.0).unwrap(), frames);
        let out = temporal_blend(&frames, &flows, 0.5, 1.0).unwrap();
        assert_eq!(out[0], a);
        assert!(out[1].data().iter().all(|&v| v == 101));

        let t = textured(6, 6, 5);
        let flows = vec![still(&t), still(&t)];
        let statics = vec![t.clone(), t.clone(), t.clone()];
        for alpha in [0.1, 0.5, 1.0] {
            assert_eq!(temporal_blend(&statics, &flows, alpha, 1.0).unwrap(), statics);
        }
        assert!(temporal_blend(&statics, &flows, 1.5, 1.0).is_err());
    }

    #[test]
    fn masked_mae_counts_only_masked_pixels() {
        let a = FrameRgb::filled(2, 1, [10, 10, 10]).unwrap();
        let b = FrameRgb::new(2, 1, vec![20, 20, 20, 10, 10, 10]).unwrap();
        let m = BinaryMask::new(2, 1, vec![true, false]).unwrap();
        assert_eq!(masked_mae(&a, &b, &m).unwrap(), 10.0);
    }
}
