//! Browser demo: synthesize a flickering clip, deflicker it, and expose the
//! curves, KL series and frames to a static page through wasm-bindgen.
//!
//! [`Session`] holds the logic and is usable natively; [`Demo`] is the thin
//! JavaScript-facing wrapper.

use ste_deflick::histogram::Histogram;
use ste_deflick::image::illumination_map;
use ste_deflick::metrics::psnr;
use ste_deflick::pipeline::{deflicker_pipeline, FlowSource, PipelineOutput, PipelineParams};
use ste_deflick::ste::{gaussian_weights, SteParams};
use ste_deflick::synth::{moving_pattern, synth_flicker, FlickerSpec};
use ste_deflick::{FrameRgb, FrameSequence, Result};
use wasm_bindgen::prelude::*;

/// Which sequence a query refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Raw,
    Output,
    Truth,
}

impl Kind {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "raw" => Ok(Kind::Raw),
            "output" => Ok(Kind::Output),
            "gt" => Ok(Kind::Truth),
            other => Err(format!("unknown sequence {other:?}; expected raw, output or gt")),
        }
    }
}

pub struct Session {
    gt: FrameSequence,
    raw: FrameSequence,
    result: PipelineOutput,
    params: PipelineParams,
    elapsed_ms: f64,
}

impl Session {
    /// Clean moving pattern plus synthetic flicker; `local == 0` means
    /// whole-frame flicker, otherwise a `1 / local` rectangle.
    pub fn new(width: usize, height: usize, len: usize, seed: u64, window: usize, local: usize) -> Result<Self> {
        let gt = moving_pattern(width, height, len, seed)?;
        let spec = FlickerSpec {
            window,
            local_window: (local > 0).then_some(local),
            seed,
            ..FlickerSpec::default()
        };
        spec.validate()?;
        let raw = synth_flicker(&gt, &spec)?;
        let params = PipelineParams::default();
        let result = deflicker_pipeline(&raw, &params, &FlowSource::Internal)?;
        let elapsed_ms = result.report.timings.total_ms;
        Ok(Self {
            gt,
            raw,
            result,
            params,
            elapsed_ms,
        })
    }

    /// Re-run the pipeline on the same clip with new STE and detection
    /// parameters.
    pub fn deflicker(&mut self, scale: f64, radius: usize, kl_margin: f64, local: bool) -> Result<()> {
        let mut params = self.params;
        params.ste = SteParams::new(scale, radius)?;
        params.priors.kl_margin = kl_margin;
        params.repair.enable_local = local;
        params.validate()?;
        self.result = deflicker_pipeline(&self.raw, &params, &FlowSource::Internal)?;
        self.params = params;
        self.elapsed_ms = self.result.report.timings.total_ms;
        Ok(())
    }

    pub fn sequence(&self, kind: Kind) -> &FrameSequence {
        match kind {
            Kind::Raw => &self.raw,
            Kind::Output => &self.result.frames,
            Kind::Truth => &self.gt,
        }
    }

    pub fn frame(&self, kind: Kind, t: usize) -> Option<&FrameRgb> {
        self.sequence(kind).frames().get(t)
    }

    /// Mean illumination per frame.
    pub fn mean_curve(&self, kind: Kind) -> Vec<f64> {
        self.sequence(kind)
            .frames()
            .iter()
            .map(|f| {
                let v = illumination_map(f);
                v.data().iter().sum::<f64>() / v.data().len() as f64
            })
            .collect()
    }

    pub fn histogram(&self, kind: Kind, t: usize) -> Option<Histogram> {
        self.frame(kind, t).and_then(|f| Histogram::from_levels(f.pixels().map(|p| p[0].max(p[1]).max(p[2]))).ok())
    }

    /// Mean PSNR against the clean clip.
    pub fn mean_psnr(&self, kind: Kind) -> f64 {
        let seq = self.sequence(kind);
        seq.frames()
            .iter()
            .zip(self.gt.frames())
            .map(|(a, b)| psnr(a, b).unwrap_or(0.0))
            .sum::<f64>()
            / seq.len() as f64
    }

    pub fn result(&self) -> &PipelineOutput {
        &self.result
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.elapsed_ms
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(
        width: usize,
        height: usize,
        frames: usize,
        seed: u32,
        window: usize,
        local: usize,
    ) -> std::result::Result<Demo, JsError> {
        Session::new(width, height, frames, seed as u64, window, local)
            .map(|session| Demo { session })
            .map_err(js_err)
    }

    pub fn deflicker(&mut self, scale: f64, radius: usize, kl_margin: f64, local: bool) -> std::result::Result<(), JsError> {
        self.session.deflicker(scale, radius, kl_margin, local).map_err(js_err)
    }

    pub fn width(&self) -> usize {
        self.session.gt.dims().0
    }

    pub fn height(&self) -> usize {
        self.session.gt.dims().1
    }

    pub fn len(&self) -> usize {
        self.session.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.session.gt.is_empty()
    }

    /// RGBA bytes of frame `t` of `"raw"`, `"output"` or `"gt"`.
    pub fn frame_rgba(&self, which: &str, t: usize) -> std::result::Result<Vec<u8>, JsError> {
        let kind = Kind::parse(which).map_err(js_err)?;
        let f = self.session.frame(kind, t).ok_or_else(|| js_err(format!("no frame {t}")))?;
        Ok(f.pixels().flat_map(|[r, g, b]| [r, g, b, 255]).collect())
    }

    pub fn mean_curve(&self, which: &str) -> std::result::Result<Vec<f64>, JsError> {
        Ok(self.session.mean_curve(Kind::parse(which).map_err(js_err)?))
    }

    pub fn histogram(&self, which: &str, t: usize) -> std::result::Result<Vec<f64>, JsError> {
        let kind = Kind::parse(which).map_err(js_err)?;
        let h = self.session.histogram(kind, t).ok_or_else(|| js_err(format!("no frame {t}")))?;
        Ok(h.bins().to_vec())
    }

    pub fn kl_series(&self) -> Vec<f64> {
        self.session.result.report.kl_series.clone()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.session.result.report.kl_thresholds.clone()
    }

    pub fn singular(&self) -> Vec<u32> {
        self.session.result.report.singular.iter().map(|&t| t as u32).collect()
    }

    pub fn exposure_fraction(&self) -> Vec<f64> {
        self.session.result.report.exposure_fraction.clone()
    }

    pub fn mean_psnr(&self, which: &str) -> std::result::Result<f64, JsError> {
        Ok(self.session.mean_psnr(Kind::parse(which).map_err(js_err)?))
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.session.elapsed_ms
    }
}

/// STE weights over offsets `-radius..=radius` for the centre frame.
#[wasm_bindgen]
pub fn ste_weights(scale: f64, radius: usize) -> std::result::Result<Vec<f64>, JsError> {
    let params = SteParams::new(scale, radius).map_err(js_err)?;
    let len = 2 * radius + 1;
    Ok(gaussian_weights(&params, radius, len).into_iter().map(|(_, w)| w).collect())
}
