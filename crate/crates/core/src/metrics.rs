//! Overlap metrics and the focal + Dice loss used as a diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::BBox;
use crate::raster::{BinaryMask, ProbMask};

fn check_same(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::domain(format!(
            "mask dimensions differ: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// (|P∩G|, |P|, |G|)
fn overlap_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<(usize, usize, usize)> {
    check_same((pred.width(), pred.height()), (gt.width(), gt.height()))?;
    let mut inter = 0;
    let mut p = 0;
    let mut g = 0;
    for (&a, &b) in pred.values().iter().zip(gt.values()) {
        inter += (a & b) as usize;
        p += a as usize;
        g += b as usize;
    }
    Ok((inter, p, g))
}

/// `2|P∩G| / (|P| + |G|)`, 1.0 when both masks are empty.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (inter, p, g) = overlap_counts(pred, gt)?;
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// `|P∩G| / |P∪G|`, 1.0 when both masks are empty.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (inter, p, g) = overlap_counts(pred, gt)?;
    let union = p + g - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Intersection over union of two boxes in continuous coordinates.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { alpha: 0.25, gamma: 2.0, epsilon: 1e-7 }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::domain(format!("alpha {} outside (0,1]", self.alpha)));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(Error::domain(format!("gamma {} must be >= 0", self.gamma)));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::domain(format!("epsilon {} must be > 0", self.epsilon)));
        }
        Ok(())
    }
}

/// Binary focal loss (pixel-averaged) plus soft Dice loss.
///
/// The focal term uses `q = p` on foreground and `q = 1 - p` on background,
/// with `p` clamped to `[eps, 1 - eps]`.
pub fn focal_dice_loss(prob: &ProbMask, gt: &BinaryMask, params: &LossParams) -> Result<f64> {
    params.validate()?;
    check_same((prob.width(), prob.height()), (gt.width(), gt.height()))?;
    let eps = params.epsilon;
    let mut focal = 0.0;
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_g = 0.0;
    for (&p, &g) in prob.values().iter().zip(gt.values()) {
        let pc = p.clamp(eps, 1.0 - eps);
        let q = if g == 1 { pc } else { 1.0 - pc };
        focal += (1.0 - q).powf(params.gamma) * q.ln();
        let g = g as f64;
        inter += p * g;
        sum_p += p;
        sum_g += g;
    }
    let focal = -params.alpha * focal / prob.values().len() as f64;
    let dice_term = 1.0 - 2.0 * inter / (sum_p + sum_g + eps);
    Ok(focal + dice_term)
}
