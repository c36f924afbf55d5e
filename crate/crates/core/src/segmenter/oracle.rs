//! Synthetic segmenter whose accuracy depends on how well the box covers a
//! known ground-truth mask.
//!
//! ```text
//! p(x) = clamp01( m(x) * [a1*g(x) + a0*(1 - g(x))] + g(x) * sum_j b_p * exp(-|x - p_j|^2 / (2 rho^2)) )
//! ```
//!
//! where `m(x)` is 1 for pixels whose centre lies in the box and `e_out`
//! elsewhere, `g` is the ground truth and `p_j` are positive point prompts.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::{Capabilities, Segmenter};
use crate::error::{Error, Result};
use crate::prompts::{BBox, PointLabel, PointPrompt};
use crate::raster::{BinaryMask, ProbMask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    /// Foreground probability inside the box.
    pub a1: f64,
    /// Background probability inside the box.
    pub a0: f64,
    /// Attenuation applied outside the box.
    pub e_out: f64,
    /// Peak boost contributed by a positive point.
    pub b_p: f64,
    /// Gaussian radius of a point boost as a fraction of `min(W, H)`.
    pub rho_frac: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { a1: 0.9, a0: 0.15, e_out: 0.1, b_p: 0.6, rho_frac: 0.05 }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        let unit = [("a1", self.a1), ("a0", self.a0), ("e_out", self.e_out), ("b_p", self.b_p)];
        if let Some((name, v)) = unit.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain(format!("oracle {name}={v} outside [0,1]")));
        }
        if !(self.rho_frac > 0.0 && self.rho_frac.is_finite()) {
            return Err(Error::domain(format!("oracle rho_frac={} must be > 0", self.rho_frac)));
        }
        // Box coverage must flip the 0.5 decision for foreground pixels.
        if !(self.a1 > 0.5 && self.a0 < 0.5 && self.a1 * self.e_out < 0.5) {
            return Err(Error::domain("oracle requires a1 > 0.5 > a0 and a1*e_out < 0.5"));
        }
        Ok(())
    }
}

/// Evaluates the oracle formula. Negative points do not contribute.
pub fn oracle_segment(gt: &BinaryMask, bbox: &BBox, points: &[PointPrompt], params: &OracleParams) -> ProbMask {
    let (w, h) = (gt.width(), gt.height());
    let rho = params.rho_frac * w.min(h) as f64;
    let two_rho_sq = 2.0 * rho * rho;
    let positives: Vec<&PointPrompt> = points.iter().filter(|p| p.label == PointLabel::Positive).collect();
    let values = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let m = if bbox.covers_pixel(x, y) { 1.0 } else { params.e_out };
            let fg = gt.get(x, y);
            let base = m * if fg { params.a1 } else { params.a0 };
            let boost = if fg {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                positives
                    .iter()
                    .map(|p| {
                        let d2 = (cx - p.x).powi(2) + (cy - p.y).powi(2);
                        params.b_p * (-d2 / two_rho_sq).exp()
                    })
                    .sum()
            } else {
                0.0
            };
            (base + boost).clamp(0.0, 1.0)
        })
        .collect();
    ProbMask::new(w, h, values).expect("oracle output is a valid probability raster")
}

/// [`Segmenter`] backed by [`oracle_segment`] for a fixed ground truth.
#[derive(Clone, Debug)]
pub struct OracleSegmenter {
    gt: BinaryMask,
    params: OracleParams,
}

impl OracleSegmenter {
    pub fn new(gt: BinaryMask, params: OracleParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { gt, params })
    }

    pub fn gt(&self) -> &BinaryMask {
        &self.gt
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }
}

impl Segmenter for OracleSegmenter {
    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_points: true, max_boxes_per_call: 1 }
    }

    fn segment_one(&self, image: &GrayImage, bbox: &BBox, points: &[PointPrompt]) -> Result<ProbMask> {
        let (iw, ih) = image.dimensions();
        if (iw as usize, ih as usize) != (self.gt.width(), self.gt.height()) {
            return Err(Error::domain(format!(
                "image {iw}x{ih} does not match oracle ground truth {}",
                self.gt.dims()
            )));
        }
        Ok(oracle_segment(&self.gt, bbox, points, &self.params))
    }
}
