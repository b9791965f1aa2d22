// Coarse-to-fine dense Lucas-Kanade on illumination maps.
//
// Every pixel solves the damped 2x2 normal equations of the
// brightness-constancy residual over a square window, with the window sums
// taken by separable box filters. The solve is skipped wherever the structure
// tensor's smaller eigenvalue is negligible, both for the combined tensor and
// for the target image's own one, which leaves the propagated coarser
// estimate in place. A median filter after every level removes isolated
// outliers.
//
// Pixels can be excluded (for instance saturated ones): they get zero weight
// in the window sums and in the pyramid reduction, so they neither create nor
// attract motion.

use super::{sample_plane, FlowField, FlowParams};
use crate::error::{Error, Result};
use crate::image::{illumination_map, BinaryMask, FrameRgb, IlluminationMap};

/// Minimum structure-tensor eigenvalue per window pixel for an update.
const MIN_EIGEN_PER_PIXEL: f64 = 1e-2;
/// Tikhonov damping per window pixel, in squared levels per pixel. Updates
/// along directions whose gradient energy is near the 8-bit quantization
/// scale (stripes, the aperture problem) stay close to the coarser estimate.
const DAMPING_PER_PIXEL: f64 = 3.0;
/// Per-iteration update cap, in pixels at the current level.
const MAX_STEP: f64 = 2.0;
/// Radius of the median filter applied to the flow after every level.
const MEDIAN_RADIUS: usize = 2;
/// Below this side length a pyramid level is not built.
const MIN_LEVEL_SIDE: usize = 8;

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
    /// Per-pixel weight in [0, 1]; 0 for excluded pixels.
    wt: Vec<f64>,
}

impl Plane {
    fn from_map(m: &IlluminationMap, ignore: Option<&BinaryMask>) -> Self {
        let wt = match ignore {
            Some(mask) => mask.data().iter().map(|&x| if x { 0.0 } else { 1.0 }).collect(),
            None => vec![1.0; m.width() * m.height()],
        };
        Self {
            w: m.width(),
            h: m.height(),
            data: m.data().to_vec(),
            wt,
        }
    }

    #[inline]
    fn wt_at(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.w as isize - 1) as usize;
        let yc = y.clamp(0, self.h as isize - 1) as usize;
        self.wt[yc * self.w + xc]
    }

    /// Weights shrunk so that a pixel counts only if its central-difference
    /// neighbours count too.
    fn gradient_weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.w * self.h];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                out[y as usize * self.w + x as usize] = self
                    .wt_at(x, y)
                    .min(self.wt_at(x - 1, y))
                    .min(self.wt_at(x + 1, y))
                    .min(self.wt_at(x, y - 1))
                    .min(self.wt_at(x, y + 1));
            }
        }
        out
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.w as isize - 1) as usize;
        let yc = y.clamp(0, self.h as isize - 1) as usize;
        self.data[yc * self.w + xc]
    }

    /// 5-tap binomial blur followed by 2x decimation. The data are averaged
    /// over weighted pixels only, so excluded pixels do not bleed into
    /// coarser levels.
    fn downsample(&self) -> Plane {
        let (nw, nh) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let wi: Vec<f64> = self.data.iter().zip(&self.wt).map(|(v, k)| v * k).collect();
        let num = reduce(&wi, self.w, self.h);
        let wt = reduce(&self.wt, self.w, self.h);
        let plain = reduce(&self.data, self.w, self.h);
        let data = (0..nw * nh)
            .map(|i| if wt[i] > 1e-6 { num[i] / wt[i] } else { plain[i] })
            .collect();
        Plane { w: nw, h: nh, data, wt }
    }
}

fn reduce(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let at = |v: &[f64], x: isize, y: isize| {
        v[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
    };
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = K
                .iter()
                .enumerate()
                .map(|(i, k)| k * at(src, x as isize + i as isize - 2, y as isize))
                .sum();
        }
    }
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = vec![0.0; nw * nh];
    for y in 0..nh {
        for x in 0..nw {
            let (sx, sy) = (2 * x as isize, 2 * y as isize);
            out[y * nw + x] = K
                .iter()
                .enumerate()
                .map(|(i, k)| k * at(&tmp, sx, sy + i as isize - 2))
                .sum();
        }
    }
    out
}

/// Separable box sum with radius `r`, border-replicated.
fn box_sum(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let r = r as isize;
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let at = |x: isize| row[x.clamp(0, w as isize - 1) as usize];
        let mut acc: f64 = (-r..=r).map(at).sum();
        for x in 0..w as isize {
            rows[y * w + x as usize] = acc;
            acc += at(x + r + 1) - at(x - r);
        }
    }
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        let at = |y: isize| rows[y.clamp(0, h as isize - 1) as usize * w + x];
        let mut acc: f64 = (-r..=r).map(at).sum();
        for y in 0..h as isize {
            out[y as usize * w + x] = acc;
            acc += at(y + r + 1) - at(y - r);
        }
    }
    out
}

fn pyramid(base: Plane, levels: usize, window: usize) -> Vec<Plane> {
    let min_side = MIN_LEVEL_SIDE.max(window);
    let mut out = vec![base];
    while out.len() < levels {
        let last = out.last().unwrap();
        if last.w.div_ceil(2) < min_side || last.h.div_ceil(2) < min_side {
            break;
        }
        let next = last.downsample();
        out.push(next);
    }
    out
}

/// Smaller eigenvalue of the symmetric matrix `[[a, b], [b, c]]`.
#[inline]
fn min_eigen(a: f64, b: f64, c: f64) -> f64 {
    0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

/// Refine `flow` (interleaved u, v on `dst`'s grid) at one pyramid level.
fn refine(src: &Plane, dst: &Plane, flow: &mut [f64], params: &FlowParams) {
    let (w, h) = (dst.w, dst.h);
    let n = w * h;
    let r = params.window / 2;
    let area = (params.window * params.window) as f64;
    let wd = dst.gradient_weights();
    let ws = src.gradient_weights();
    let mut warped = vec![0.0; n];
    let mut ixx = vec![0.0; n];
    let mut ixy = vec![0.0; n];
    let mut iyy = vec![0.0; n];
    let mut ixt = vec![0.0; n];
    let mut iyt = vec![0.0; n];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let gx = 0.5 * (dst.at(x + 1, y) - dst.at(x - 1, y));
            let gy = 0.5 * (dst.at(x, y + 1) - dst.at(x, y - 1));
            ixx[i] = wd[i] * gx * gx;
            ixy[i] = wd[i] * gx * gy;
            iyy[i] = wd[i] * gy * gy;
        }
    }
    let dst_textured: Vec<bool> = {
        let (a, b, c) = (box_sum(&ixx, w, h, r), box_sum(&ixy, w, h, r), box_sum(&iyy, w, h, r));
        (0..n).map(|i| min_eigen(a[i], b[i], c[i]) >= MIN_EIGEN_PER_PIXEL * area).collect()
    };
    let mut omega = vec![0.0; n];
    for _ in 0..params.iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let sx = x as f64 + flow[2 * i];
                let sy = y as f64 + flow[2 * i + 1];
                warped[i] = sample_plane(&src.data, w, h, sx, sy);
                omega[i] = wd[i] * sample_plane(&ws, w, h, sx, sy);
            }
        }
        let wp = Plane {
            w,
            h,
            data: std::mem::take(&mut warped),
            wt: Vec::new(),
        };
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                // Average of both images' central differences.
                let gx = 0.25
                    * (wp.at(x + 1, y) - wp.at(x - 1, y) + dst.at(x + 1, y) - dst.at(x - 1, y));
                let gy = 0.25
                    * (wp.at(x, y + 1) - wp.at(x, y - 1) + dst.at(x, y + 1) - dst.at(x, y - 1));
                let it = wp.data[i] - dst.data[i];
                let k = omega[i];
                ixx[i] = k * gx * gx;
                ixy[i] = k * gx * gy;
                iyy[i] = k * gy * gy;
                ixt[i] = k * gx * it;
                iyt[i] = k * gy * it;
            }
        }
        warped = wp.data;
        let (sxx, sxy, syy) = (box_sum(&ixx, w, h, r), box_sum(&ixy, w, h, r), box_sum(&iyy, w, h, r));
        let (sxt, syt) = (box_sum(&ixt, w, h, r), box_sum(&iyt, w, h, r));
        for i in 0..n {
            let (a, b, c) = (sxx[i], sxy[i], syy[i]);
            if !dst_textured[i] || min_eigen(a, b, c) < MIN_EIGEN_PER_PIXEL * area {
                continue;
            }
            let (a, c) = (a + DAMPING_PER_PIXEL * area, c + DAMPING_PER_PIXEL * area);
            let det = a * c - b * b;
            let du = -(c * sxt[i] - b * syt[i]) / det;
            let dv = -(a * syt[i] - b * sxt[i]) / det;
            let mag = du.hypot(dv);
            let k = if mag > MAX_STEP { MAX_STEP / mag } else { 1.0 };
            flow[2 * i] += du * k;
            flow[2 * i + 1] += dv * k;
        }
    }
}

/// Component-wise median over a `(2r + 1)^2` neighbourhood, border-clamped.
/// Removes isolated outliers from poorly conditioned windows.
fn median_filter(flow: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let r = r as isize;
    let mut out = vec![0.0; flow.len()];
    let mut buf = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for c in 0..2 {
        for y in 0..h as isize {
            for x in 0..w as isize {
                buf.clear();
                for dy in -r..=r {
                    for dx in -r..=r {
                        let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                        let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                        buf.push(flow[2 * (yy * w + xx) + c]);
                    }
                }
                let mid = buf.len() / 2;
                let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
                out[2 * (y as usize * w + x as usize) + c] = *m;
            }
        }
    }
    out
}

/// Upsample a coarse flow onto a `w` x `h` grid, doubling displacements.
fn upsample(coarse: &[f64], cw: usize, ch: usize, w: usize, h: usize) -> Vec<f64> {
    let u: Vec<f64> = coarse.iter().step_by(2).copied().collect();
    let v: Vec<f64> = coarse.iter().skip(1).step_by(2).copied().collect();
    let mut out = vec![0.0; w * h * 2];
    for y in 0..h {
        for x in 0..w {
            let (cx, cy) = ((x as f64 + 0.5) / 2.0 - 0.5, (y as f64 + 0.5) / 2.0 - 0.5);
            let i = y * w + x;
            out[2 * i] = 2.0 * sample_plane(&u, cw, ch, cx, cy);
            out[2 * i + 1] = 2.0 * sample_plane(&v, cw, ch, cx, cy);
        }
    }
    out
}

/// Flow on `dst`'s grid pointing into `src`, so that
/// `src(x + u, y + v) ~ dst(x, y)`. Deterministic for fixed inputs.
pub fn estimate_flow_maps(
    src: &IlluminationMap,
    dst: &IlluminationMap,
    params: &FlowParams,
) -> Result<FlowField> {
    params.validate()?;
    Error::check_dims(dst.dims(), src.dims())?;
    coarse_to_fine(src, dst, None, None, params)
}

/// [`estimate_flow_maps`] robust to exposure and to residual flicker: the
/// `true` pixels of `src_ignore` and `dst_ignore` are left out of the fit,
/// and `src` is first mapped onto the tones of `dst` over the remaining
/// pixels.
pub fn estimate_flow_maps_ignoring(
    src: &IlluminationMap,
    dst: &IlluminationMap,
    src_ignore: Option<&BinaryMask>,
    dst_ignore: Option<&BinaryMask>,
    params: &FlowParams,
) -> Result<FlowField> {
    params.validate()?;
    Error::check_dims(dst.dims(), src.dims())?;
    for m in [src_ignore, dst_ignore].into_iter().flatten() {
        Error::check_dims(dst.dims(), m.dims())?;
    }
    let aligned = match_tones(src, dst, src_ignore, dst_ignore)?;
    coarse_to_fine(&aligned, dst, src_ignore, dst_ignore, params)
}

fn coarse_to_fine(
    src: &IlluminationMap,
    dst: &IlluminationMap,
    src_ignore: Option<&BinaryMask>,
    dst_ignore: Option<&BinaryMask>,
    params: &FlowParams,
) -> Result<FlowField> {
    let ps = pyramid(Plane::from_map(src, src_ignore), params.pyramid_levels, params.window);
    let pd = pyramid(Plane::from_map(dst, dst_ignore), params.pyramid_levels, params.window);
    let coarsest = pd.len() - 1;
    let mut flow = vec![0.0; pd[coarsest].w * pd[coarsest].h * 2];
    for level in (0..=coarsest).rev() {
        if level != coarsest {
            let (c, f) = (&pd[level + 1], &pd[level]);
            flow = upsample(&flow, c.w, c.h, f.w, f.h);
        }
        refine(&ps[level], &pd[level], &mut flow, params);
        flow = median_filter(&flow, pd[level].w, pd[level].h, MEDIAN_RADIUS);
    }
    let data = flow.into_iter().map(|v| v as f32).collect();
    FlowField::new(src.width(), src.height(), data)
}

/// Map `src` onto the intensity distribution of `dst` by quantile matching
/// over the pixels neither mask excludes, so that global photometric
/// differences between the frames do not read as motion.
fn match_tones(
    src: &IlluminationMap,
    dst: &IlluminationMap,
    src_ignore: Option<&BinaryMask>,
    dst_ignore: Option<&BinaryMask>,
) -> Result<IlluminationMap> {
    let valid = |m: &IlluminationMap, ignore: Option<&BinaryMask>| -> Vec<f64> {
        let mut v: Vec<f64> = match ignore {
            Some(mask) => m.data().iter().zip(mask.data()).filter(|(_, &x)| !x).map(|(&v, _)| v).collect(),
            None => m.data().to_vec(),
        };
        v.sort_unstable_by(f64::total_cmp);
        v
    };
    let (a, b) = (valid(src, src_ignore), valid(dst, dst_ignore));
    if a.len() < 2 || b.len() < 2 {
        return Ok(src.clone());
    }
    let data = src
        .data()
        .iter()
        .map(|&v| {
            // Mid-rank quantile of v among the valid src values.
            let lo = a.partition_point(|&x| x < v);
            let hi = a.partition_point(|&x| x <= v);
            let q = (lo + hi) as f64 / 2.0 / a.len() as f64;
            let pos = (q * b.len() as f64 - 0.5).clamp(0.0, (b.len() - 1) as f64);
            let i = pos.floor() as usize;
            let j = (i + 1).min(b.len() - 1);
            b[i] + (b[j] - b[i]) * (pos - i as f64)
        })
        .collect();
    IlluminationMap::new(src.width(), src.height(), data)
}

/// [`estimate_flow_maps`] on the frames' illumination maps.
pub fn estimate_flow(src: &FrameRgb, dst: &FrameRgb, params: &FlowParams) -> Result<FlowField> {
    Error::check_dims(dst.dims(), src.dims())?;
    estimate_flow_maps(&illumination_map(src), &illumination_map(dst), params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_sum_matches_brute_force() {
        let (w, h) = (7, 5);
        let src: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64).collect();
        let out = box_sum(&src, w, h, 2);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for dy in -2..=2isize {
                    for dx in -2..=2isize {
                        let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                        let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                        acc += src[yy * w + xx];
                    }
                }
                assert!((out[y as usize * w + x as usize] - acc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pyramid_stops_at_small_levels() {
        let p = Plane {
            w: 20,
            h: 20,
            data: vec![0.0; 400],
            wt: vec![1.0; 400],
        };
        let levels = pyramid(p, 5, 7);
        assert_eq!(levels.len(), 2);
        assert_eq!((levels[1].w, levels[1].h), (10, 10));
    }

    fn textured(w: usize, h: usize, dx: f64, tone: impl Fn(f64) -> f64) -> IlluminationMap {
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64 - dx, (i / w) as f64);
                let v = 128.0 + 50.0 * (0.3 * x + 0.2 * y).sin() + 40.0 * (0.25 * y - 0.15 * x).cos();
                tone(v).clamp(0.0, 255.0)
            })
            .collect();
        IlluminationMap::new(w, h, data).unwrap()
    }

    fn mean_epe(f: &FlowField, u: f64, v: f64, margin: usize) -> f64 {
        let (w, h) = f.dims();
        let mut acc = 0.0;
        let mut n = 0;
        for y in margin..h - margin {
            for x in margin..w - margin {
                let (fu, fv) = f.get(x, y);
                acc += (fu as f64 - u).hypot(fv as f64 - v);
                n += 1;
            }
        }
        acc / n as f64
    }

    #[test]
    fn tone_matching_undoes_a_monotone_remap() {
        let dst = textured(32, 32, 0.0, |v| v);
        let src = textured(32, 32, 0.0, |v| 255.0 * (v / 255.0).powf(1.3));
        let out = match_tones(&src, &dst, None, None).unwrap();
        let err = out.data().iter().zip(dst.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1.0, "{err}");
    }

    #[test]
    fn robust_flow_ignores_a_gain_change() {
        let p = FlowParams::default();
        let src = textured(48, 48, 0.0, |v| 0.8 * v + 10.0);
        let dst = textured(48, 48, 2.0, |v| v);
        let plain = estimate_flow_maps(&src, &dst, &p).unwrap();
        let robust = estimate_flow_maps_ignoring(&src, &dst, None, None, &p).unwrap();
        let (e_plain, e_robust) = (mean_epe(&plain, -2.0, 0.0, 4), mean_epe(&robust, -2.0, 0.0, 4));
        assert!(e_robust < 0.3 && e_robust < e_plain, "{e_robust} vs {e_plain}");
    }

    #[test]
    fn ignored_pixels_do_not_attract_motion() {
        let p = FlowParams::default();
        let src = textured(48, 48, 0.0, |v| v);
        let inside = |i: usize| (18..30).contains(&(i % 48)) && (18..30).contains(&(i / 48));
        let data = (0..48 * 48).map(|i| if inside(i) { 255.0 } else { src.data()[i] }).collect();
        let dst = IlluminationMap::new(48, 48, data).unwrap();
        let mask = BinaryMask::new(48, 48, (0..48 * 48).map(inside).collect()).unwrap();
        let f = estimate_flow_maps_ignoring(&src, &dst, None, Some(&mask), &p).unwrap();
        assert!(f.mean_magnitude() < 0.2, "{}", f.mean_magnitude());
    }
}
