//! Fidelity and temporal-consistency metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{estimate_flow_maps, occlusion_mask, sample_rgb, FlowField, FlowParams, OcclusionMask};
use crate::image::{BinaryMask, FrameRgb, IlluminationMap};
use crate::priors::ExposureMask;

/// Reported PSNR for identical frames.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

pub fn mse(a: &FrameRgb, b: &FrameRgb) -> Result<f64> {
    Error::check_dims(a.dims(), b.dims())?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

pub fn psnr(a: &FrameRgb, b: &FrameRgb) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0 * 255.0 / m).log10()).min(PSNR_CAP_DB))
}

fn luma(frame: &FrameRgb) -> Vec<f64> {
    frame
        .pixels()
        .map(|[r, g, b]| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .collect()
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter keeping only windows fully inside the image.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, c)| c * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, c)| c * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM over all 11x11 Gaussian windows (sigma 1.5) of the luma
/// channel, with K1 = 0.01 and K2 = 0.03.
pub fn ssim(a: &FrameRgb, b: &FrameRgb) -> Result<f64> {
    Error::check_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let k = gaussian_window();
    let (x, y) = (luma(a), luma(b));
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let (mx, ow, oh) = filter_valid(&x, w, h, &k);
    let (my, _, _) = filter_valid(&y, w, h, &k);
    let (sxx, _, _) = filter_valid(&prod(&x, &x), w, h, &k);
    let (syy, _, _) = filter_valid(&prod(&y, &y), w, h, &k);
    let (sxy, _, _) = filter_valid(&prod(&x, &y), w, h, &k);
    let c1 = (SSIM_K1 * 255.0).powi(2);
    let c2 = (SSIM_K2 * 255.0).powi(2);
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
            / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / (ow * oh) as f64)
}

fn check_pair(
    o_t: &FrameRgb,
    o_s: &FrameRgb,
    flow: &FlowField,
    mask: &OcclusionMask,
) -> Result<()> {
    Error::check_dims(o_t.dims(), o_s.dims())?;
    Error::check_dims(o_t.dims(), flow.dims())?;
    Error::check_dims(o_t.dims(), mask.dims())
}

/// Per-pixel channel-summed residual `|o_t - warp(o_s)|` over valid pixels,
/// scaled by `weight(i)`. Returns the sum and the number of valid samples.
fn residual_sum(
    o_t: &FrameRgb,
    o_s: &FrameRgb,
    flow: &FlowField,
    mask: &OcclusionMask,
    weight: impl Fn(usize) -> f64,
) -> (f64, usize) {
    let (w, h) = o_t.dims();
    let mut sum = 0.0;
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.data()[i] {
                continue;
            }
            let (u, v) = flow.get(x, y);
            let warped = sample_rgb(o_s, x as f64 + u as f64, y as f64 + v as f64);
            let px = &o_t.data()[3 * i..3 * i + 3];
            let r: f64 = px.iter().zip(warped).map(|(&c, s)| (c as f64 - s).abs()).sum();
            sum += weight(i) * r;
            n += 3;
        }
    }
    (sum, n)
}

/// Mean absolute difference between `o_t` and `o_s` warped onto `t`, over the
/// pixels and channels valid in `mask`; 0 when nothing is valid.
/// `flow_s_to_t` lives on `t`'s grid and points into `s`.
pub fn pair_error(
    o_t: &FrameRgb,
    o_s: &FrameRgb,
    flow_s_to_t: &FlowField,
    mask: &OcclusionMask,
) -> Result<f64> {
    check_pair(o_t, o_s, flow_s_to_t, mask)?;
    let (sum, n) = residual_sum(o_t, o_s, flow_s_to_t, mask, |_| 1.0);
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// [`pair_error`] with each residual scaled by `weight * (exposure + 1)`.
/// `weights` defaults to 1 everywhere. The normalization is the same as for
/// [`pair_error`], so exposed pixels count double.
pub fn weighted_pair_error(
    o_t: &FrameRgb,
    o_s: &FrameRgb,
    flow_s_to_t: &FlowField,
    occlusion: &OcclusionMask,
    exposure: &ExposureMask,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_pair(o_t, o_s, flow_s_to_t, occlusion)?;
    Error::check_dims(o_t.dims(), exposure.dims())?;
    if let Some(wt) = weights {
        if wt.len() != o_t.width() * o_t.height() {
            return Err(Error::InvalidData(format!(
                "weight field has {} values, expected {}",
                wt.len(),
                o_t.width() * o_t.height()
            )));
        }
    }
    let ex = exposure.data();
    let (sum, n) = residual_sum(o_t, o_s, flow_s_to_t, occlusion, |i| {
        let wt = weights.map_or(1.0, |w| w[i]);
        wt * if ex[i] { 2.0 } else { 1.0 }
    });
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// A flow from frame `s` onto frame `t` with its validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFlow {
    pub flow: FlowField,
    pub mask: OcclusionMask,
}

impl PairFlow {
    pub fn identity(w: usize, h: usize) -> Self {
        Self {
            flow: FlowField::zeros(w, h),
            mask: BinaryMask::filled(w, h, true),
        }
    }

    /// Estimate the flow from `s` onto `t` and check it against the reverse
    /// flow.
    pub fn estimate(t: &IlluminationMap, s: &IlluminationMap, params: &FlowParams) -> Result<Self> {
        let flow = estimate_flow_maps(s, t, params)?;
        let back = estimate_flow_maps(t, s, params)?;
        let mask = occlusion_mask(&flow, &back, params.fb_threshold)?;
        Ok(Self { flow, mask })
    }
}

/// Flows for the warping error: entry `t - 1` links frame `t` to its previous
/// frame and to the first frame, for `t = 1..T`.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpFlows {
    pub to_previous: Vec<PairFlow>,
    pub to_first: Vec<PairFlow>,
}

impl WarpFlows {
    pub fn identity(len: usize, w: usize, h: usize) -> Self {
        let n = len.saturating_sub(1);
        Self {
            to_previous: vec![PairFlow::identity(w, h); n],
            to_first: vec![PairFlow::identity(w, h); n],
        }
    }

    /// Estimate every pair on a reference sequence's illumination maps.
    pub fn estimate(reference: &[IlluminationMap], params: &FlowParams) -> Result<Self> {
        let len = reference.len();
        let to_previous = (1..len)
            .into_par_iter()
            .map(|t| PairFlow::estimate(&reference[t], &reference[t - 1], params))
            .collect::<Result<Vec<_>>>()?;
        let to_first = (1..len)
            .into_par_iter()
            .map(|t| {
                if t == 1 {
                    Ok(to_previous[0].clone())
                } else {
                    PairFlow::estimate(&reference[t], &reference[0], params)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            to_previous,
            to_first,
        })
    }
}

/// Per-frame pair errors, `(previous, first)`, for frames `1..T`.
pub fn pair_errors(seq: &[FrameRgb], flows: &WarpFlows) -> Result<Vec<(f64, f64)>> {
    let len = seq.len();
    if len < 2 {
        return Err(Error::InvalidParameter(format!(
            "warping error needs at least 2 frames, got {len}"
        )));
    }
    if flows.to_previous.len() != len - 1 || flows.to_first.len() != len - 1 {
        return Err(Error::InvalidParameter(format!(
            "{len} frames need {} flow pairs per term",
            len - 1
        )));
    }
    (1..len)
        .into_par_iter()
        .map(|t| {
            let p = &flows.to_previous[t - 1];
            let f = &flows.to_first[t - 1];
            Ok((
                pair_error(&seq[t], &seq[t - 1], &p.flow, &p.mask)?,
                pair_error(&seq[t], &seq[0], &f.flow, &f.mask)?,
            ))
        })
        .collect()
}

/// `1/(T-1) * sum_{t>=2} (E(O_t, O_1) + E(O_t, O_{t-1}))`.
pub fn e_warp(seq: &[FrameRgb], flows: &WarpFlows) -> Result<f64> {
    let errs = pair_errors(seq, flows)?;
    Ok(errs.iter().map(|(p, f)| p + f).sum::<f64>() / errs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScores {
    pub psnr: f64,
    pub ssim: f64,
    /// `None` for the first frame.
    pub pair_err_prev: Option<f64>,
    pub pair_err_first: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub e_warp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_frame: Vec<FrameScores>,
    pub aggregate: AggregateScores,
}

/// Score `pred` against `gt`, with warping errors computed through `flows`.
pub fn evaluate(pred: &[FrameRgb], gt: &[FrameRgb], flows: &WarpFlows) -> Result<EvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidParameter(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("evaluation sequence"));
    }
    let fidelity = pred
        .par_iter()
        .zip(gt)
        .map(|(p, g)| Ok((psnr(p, g)?, ssim(p, g)?)))
        .collect::<Result<Vec<_>>>()?;
    let pairs = if pred.len() >= 2 {
        pair_errors(pred, flows)?
    } else {
        Vec::new()
    };
    let per_frame: Vec<FrameScores> = fidelity
        .iter()
        .enumerate()
        .map(|(t, &(psnr, ssim))| FrameScores {
            psnr,
            ssim,
            pair_err_prev: t.checked_sub(1).map(|i| pairs[i].0),
            pair_err_first: t.checked_sub(1).map(|i| pairs[i].1),
        })
        .collect();
    let n = per_frame.len() as f64;
    let e_warp = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|(p, f)| p + f).sum::<f64>() / pairs.len() as f64
    };
    Ok(EvalReport {
        aggregate: AggregateScores {
            psnr_mean: per_frame.iter().map(|f| f.psnr).sum::<f64>() / n,
            ssim_mean: per_frame.iter().map(|f| f.ssim).sum::<f64>() / n,
            e_warp,
        },
        per_frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, v: u8) -> FrameRgb {
        FrameRgb::filled(w, h, [v, v, v]).unwrap()
    }

    fn textured(w: usize, h: usize) -> FrameRgb {
        FrameRgb::from_fn(w, h, |x, y| {
            let v = (128.0 + 60.0 * ((x as f64 * 0.9).sin() + (y as f64 * 0.7).cos())) as u8;
            [v, v, v]
        })
        .unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = textured(4, 4);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        assert_eq!(psnr(&gray(3, 3, 0), &gray(3, 3, 255)).unwrap(), 0.0);
        let p = psnr(&gray(1, 1, 100), &gray(1, 1, 110)).unwrap();
        let expected = 10.0 * (255.0f64 * 255.0 / 100.0).log10();
        assert!((p - expected).abs() < 1e-12);
        assert!((p - 28.13).abs() < 0.01);
        assert!(psnr(&gray(2, 2, 0), &gray(2, 3, 0)).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = textured(24, 20);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);

        let inv = FrameRgb::new(24, 20, a.data().iter().map(|v| 255 - v).collect()).unwrap();
        assert!(ssim(&a, &inv).unwrap() < 0.2);

        let c1 = (0.01f64 * 255.0).powi(2);
        let closed = (2.0 * 100.0 * 110.0 + c1) / (100.0f64.powi(2) + 110.0f64.powi(2) + c1);
        let s = ssim(&gray(16, 16, 100), &gray(16, 16, 110)).unwrap();
        assert!((s - closed).abs() < 1e-9, "{s} vs {closed}");

        assert!(ssim(&gray(10, 30, 1), &gray(10, 30, 1)).is_err());
    }

    #[test]
    fn pair_error_examples() {
        let (w, h) = (6, 4);
        let zero = FlowField::zeros(w, h);
        let full = BinaryMask::filled(w, h, true);
        let a = textured(w, h);
        assert_eq!(pair_error(&a, &a, &zero, &full).unwrap(), 0.0);

        let b = gray(w, h, 50);
        let c = gray(w, h, 60);
        assert_eq!(pair_error(&c, &b, &zero, &full).unwrap(), 10.0);

        // Offset 10 on the valid left half, nothing valid on the right.
        let left = BinaryMask::new(w, h, (0..w * h).map(|i| i % w < w / 2).collect()).unwrap();
        let mixed = FrameRgb::from_fn(w, h, |x, _| if x < w / 2 { [60; 3] } else { [50; 3] }).unwrap();
        assert_eq!(pair_error(&mixed, &b, &zero, &left).unwrap(), 10.0);

        let none = BinaryMask::filled(w, h, false);
        assert_eq!(pair_error(&c, &b, &zero, &none).unwrap(), 0.0);
    }

    #[test]
    fn weighted_pair_error_examples() {
        let (w, h) = (6, 4);
        let zero = FlowField::zeros(w, h);
        let full = BinaryMask::filled(w, h, true);
        let (b, c) = (gray(w, h, 50), gray(w, h, 60));
        let base = pair_error(&c, &b, &zero, &full).unwrap();
        let none = BinaryMask::filled(w, h, false);
        assert_eq!(weighted_pair_error(&c, &b, &zero, &full, &none, None).unwrap(), base);
        assert_eq!(weighted_pair_error(&c, &b, &zero, &full, &full, None).unwrap(), 2.0 * base);
        let half = BinaryMask::new(w, h, (0..w * h).map(|i| i % w < w / 2).collect()).unwrap();
        assert_eq!(weighted_pair_error(&c, &b, &zero, &full, &half, None).unwrap(), 15.0);
        let weights = vec![0.5; w * h];
        assert_eq!(
            weighted_pair_error(&c, &b, &zero, &full, &none, Some(&weights)).unwrap(),
            5.0
        );
        assert!(weighted_pair_error(&c, &b, &zero, &full, &none, Some(&[1.0])).is_err());
    }

    #[test]
    fn e_warp_examples() {
        let (w, h) = (4, 4);
        let still = vec![textured(w, h); 5];
        assert_eq!(e_warp(&still, &WarpFlows::identity(5, w, h)).unwrap(), 0.0);

        let two = vec![gray(w, h, 0), gray(w, h, 10)];
        let single = pair_error(&two[1], &two[0], &FlowField::zeros(w, h), &BinaryMask::filled(w, h, true)).unwrap();
        assert_eq!(e_warp(&two, &WarpFlows::identity(2, w, h)).unwrap(), 2.0 * single);

        let three = vec![gray(w, h, 0), gray(w, h, 10), gray(w, h, 0)];
        // (10 + 10 + 0 + 10) / 2
        assert_eq!(e_warp(&three, &WarpFlows::identity(3, w, h)).unwrap(), 15.0);

        assert!(e_warp(&three[..1], &WarpFlows::identity(1, w, h)).is_err());
    }

    #[test]
    fn evaluate_aggregates_per_frame_errors() {
        let (w, h) = (12, 12);
        let gt = vec![textured(w, h); 3];
        let pred = vec![gray(w, h, 0), gray(w, h, 10), gray(w, h, 0)];
        let r = evaluate(&pred, &gt, &WarpFlows::identity(3, w, h)).unwrap();
        assert_eq!(r.per_frame.len(), 3);
        assert_eq!(r.per_frame[0].pair_err_prev, None);
        let sum: f64 = r
            .per_frame
            .iter()
            .filter_map(|f| Some(f.pair_err_prev? + f.pair_err_first?))
            .sum();
        assert!((r.aggregate.e_warp - sum / 2.0).abs() < 1e-9);
        assert!(evaluate(&pred[..2], &gt, &WarpFlows::identity(2, w, h)).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (FrameRgb, FrameRgb)> {
        (11usize..16, 11usize..16).prop_flat_map(|(w, h)| {
            let n = w * h * 3;
            (
                proptest::collection::vec(any::<u8>(), n),
                proptest::collection::vec(any::<u8>(), n),
            )
                .prop_map(move |(a, b)| (FrameRgb::new(w, h, a).unwrap(), FrameRgb::new(w, h, b).unwrap()))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn psnr_and_ssim_are_symmetric((a, b) in arb_pair()) {
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
            let s = ssim(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0 + 1e-12).contains(&s));
        }

        #[test]
        fn raising_a_residual_never_lowers_pair_error(
            (a, b) in arb_pair(),
            idx in any::<prop::sample::Index>(),
        ) {
            let (w, h) = a.dims();
            let zero = FlowField::zeros(w, h);
            let full = BinaryMask::filled(w, h, true);
            let before = pair_error(&a, &b, &zero, &full).unwrap();
            // Move one channel of `a` one step further away from `b`.
            let i = idx.index(a.data().len());
            let mut data = a.data().to_vec();
            if data[i] >= b.data()[i] { data[i] = data[i].saturating_add(1) } else { data[i] = data[i].saturating_sub(1) }
            let a2 = FrameRgb::new(w, h, data).unwrap();
            prop_assert!(pair_error(&a2, &b, &zero, &full).unwrap() >= before);
        }
    }
}
