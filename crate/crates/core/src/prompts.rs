//! Box and point prompts, box jittering, and ground-truth-derived prompt
//! fabrication for benchmark runs.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::box_iou;
use crate::raster::BinaryMask;
use crate::rng::stream_rng;

/// Image extent in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Axis-aligned box in continuous pixel coordinates; pixel `i` spans `[i, i+1)`.
///
/// Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Self { x_min, y_min, x_max, y_max };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::domain(format!("box {b} has non-finite coordinates")));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::domain(format!("box {b} has no area")));
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn is_within(&self, bounds: Dims) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= bounds.width as f64
            && self.y_max <= bounds.height as f64
    }

    /// True when the pixel centre of `(x, y)` lies inside the box.
    #[inline]
    pub fn covers_pixel(&self, x: usize, y: usize) -> bool {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        cx >= self.x_min && cx < self.x_max && cy >= self.y_min && cy < self.y_max
    }

    /// Orders each coordinate pair, clamps to `bounds`, and widens any axis that
    /// collapsed to zero extent to exactly one pixel.
    pub fn clamp_repair(x0: f64, y0: f64, x1: f64, y1: f64, bounds: Dims) -> Result<Self> {
        let (w, h) = (bounds.width as f64, bounds.height as f64);
        if bounds.width == 0 || bounds.height == 0 {
            return Err(Error::domain("empty image bounds"));
        }
        let axis = |a: f64, b: f64, limit: f64| {
            let lo = a.min(b).clamp(0.0, limit);
            let hi = a.max(b).clamp(0.0, limit);
            if hi - lo > 0.0 {
                (lo, hi)
            } else if lo + 1.0 <= limit {
                (lo, lo + 1.0)
            } else {
                (limit - 1.0, limit)
            }
        };
        let (x_min, x_max) = axis(x0, x1, w);
        let (y_min, y_max) = axis(y0, y1, h);
        BBox::new(x_min, y_min, x_max, y_max)
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;
    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Parses `x_min,y_min,x_max,y_max`.
impl FromStr for BBox {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::domain(format!("box '{s}': {e}")))?;
        let coords: [f64; 4] = parts
            .try_into()
            .map_err(|_| Error::domain(format!("box '{s}' must have 4 comma-separated numbers")))?;
        BBox::try_from(coords)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLabel {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPrompt {
    pub x: f64,
    pub y: f64,
    pub label: PointLabel,
}

impl PointPrompt {
    pub fn positive(x: f64, y: f64) -> Self {
        Self { x, y, label: PointLabel::Positive }
    }

    /// A positive point at the centre of pixel `(px, py)`.
    pub fn at_pixel(px: usize, py: usize) -> Self {
        Self::positive(px as f64 + 0.5, py as f64 + 0.5)
    }

    pub fn is_within(&self, bounds: Dims) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && (0.0..=bounds.width as f64).contains(&self.x)
            && (0.0..=bounds.height as f64).contains(&self.y)
    }
}

/// Boxes and points submitted together. At least one box is required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPromptSet", into = "RawPromptSet")]
pub struct PromptSet {
    boxes: Vec<BBox>,
    points: Vec<PointPrompt>,
}

#[derive(Serialize, Deserialize)]
struct RawPromptSet {
    boxes: Vec<BBox>,
    #[serde(default)]
    points: Vec<PointPrompt>,
}

impl TryFrom<RawPromptSet> for PromptSet {
    type Error = Error;
    fn try_from(raw: RawPromptSet) -> Result<Self> {
        PromptSet::new(raw.boxes, raw.points)
    }
}

impl From<PromptSet> for RawPromptSet {
    fn from(p: PromptSet) -> Self {
        RawPromptSet { boxes: p.boxes, points: p.points }
    }
}

impl PromptSet {
    pub fn new(boxes: Vec<BBox>, points: Vec<PointPrompt>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::domain("prompt set needs at least one box"));
        }
        Ok(Self { boxes, points })
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }

    pub fn points(&self) -> &[PointPrompt] {
        &self.points
    }

    pub fn validate_within(&self, bounds: Dims) -> Result<()> {
        if let Some(b) = self.boxes.iter().find(|b| !b.is_within(bounds)) {
            return Err(Error::domain(format!("box {b} outside {bounds} image")));
        }
        if let Some(p) = self.points.iter().find(|p| !p.is_within(bounds)) {
            return Err(Error::domain(format!("point ({}, {}) outside {bounds} image", p.x, p.y)));
        }
        Ok(())
    }
}

/// Gaussian box jitter: each coordinate moves by `N(0, sigma_frac * side)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    pub sigma_frac: f64,
    pub seed: u64,
}

impl JitterSpec {
    pub fn new(sigma_frac: f64, seed: u64) -> Result<Self> {
        if !(sigma_frac >= 0.0 && sigma_frac.is_finite()) {
            return Err(Error::domain(format!("sigma_frac {sigma_frac} must be finite and >= 0")));
        }
        Ok(Self { sigma_frac, seed })
    }
}

/// Jitters `b` once. Draw `i` of a seed always yields the same box.
pub fn perturb_box(b: &BBox, spec: &JitterSpec, bounds: Dims, draw_index: u64) -> Result<BBox> {
    let b = BBox::new(b.x_min, b.y_min, b.x_max, b.y_max)?;
    if !b.is_within(bounds) {
        return Err(Error::domain(format!("box {b} outside {bounds} image")));
    }
    if spec.sigma_frac == 0.0 {
        return Ok(b);
    }
    let mut rng = stream_rng(spec.seed, draw_index);
    let sx = spec.sigma_frac * b.width();
    let sy = spec.sigma_frac * b.height();
    let mut offset = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let x0 = b.x_min + offset(sx);
    let y0 = b.y_min + offset(sy);
    let x1 = b.x_max + offset(sx);
    let y1 = b.y_max + offset(sy);
    BBox::clamp_repair(x0, y0, x1, y1, bounds)
}

/// `n` independent jitters of `b_init`, draw indices `0..n`.
pub fn gen_box_set(b_init: &BBox, n: usize, spec: &JitterSpec, bounds: Dims) -> Result<Vec<BBox>> {
    if n == 0 {
        return Err(Error::domain("box set size must be at least 1"));
    }
    (0..n as u64).map(|i| perturb_box(b_init, spec, bounds, i)).collect()
}

/// Smallest box containing every foreground pixel.
pub fn tight_bbox(mask: &BinaryMask) -> Result<BBox> {
    let mut ext: Option<(usize, usize, usize, usize)> = None;
    for (x, y) in mask.foreground() {
        ext = Some(match ext {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    let (x0, y0, x1, y1) = ext.ok_or(Error::EmptyForeground)?;
    BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64)
}

/// Tolerance on IoU accepted by [`degraded_box`].
pub const DEGRADE_TOLERANCE: f64 = 0.02;
pub const DEGRADE_MAX_PROPOSALS: usize = 10_000;

/// A box whose IoU with `gt_box` is within ±0.02 of `target_iou`.
///
/// Rejection search over random shift+scale proposals, clipped to the image.
/// With `s = 1 - target_iou` the centre moves by up to `1.2 s` of each side and
/// each side is rescaled by a log-uniform factor in `[1/(1+3s), 1+3s]`.
pub fn degraded_box(gt_box: &BBox, target_iou: f64, seed: u64, bounds: Dims) -> Result<BBox> {
    degraded_box_within(gt_box, target_iou, seed, bounds, DEGRADE_MAX_PROPOSALS)
}

fn degraded_box_within(gt_box: &BBox, target_iou: f64, seed: u64, bounds: Dims, max_proposals: usize) -> Result<BBox> {
    if !(target_iou > 0.0 && target_iou <= 1.0) {
        return Err(Error::domain(format!("target IoU {target_iou} outside (0,1]")));
    }
    if !gt_box.is_within(bounds) {
        return Err(Error::domain(format!("box {gt_box} outside {bounds} image")));
    }
    if target_iou == 1.0 {
        return Ok(*gt_box);
    }
    let mut rng = stream_rng(seed, 0);
    let (cx, cy) = gt_box.center();
    let (w, h) = (gt_box.width(), gt_box.height());
    let spread = 1.0 - target_iou;
    let max_shift = 1.2 * spread;
    let max_log_scale = (1.0 + 3.0 * spread).ln();
    let (bw, bh) = (bounds.width as f64, bounds.height as f64);
    for _ in 0..max_proposals {
        let ncx = cx + rng.random_range(-max_shift..=max_shift) * w;
        let ncy = cy + rng.random_range(-max_shift..=max_shift) * h;
        let nw = w * rng.random_range(-max_log_scale..=max_log_scale).exp();
        let nh = h * rng.random_range(-max_log_scale..=max_log_scale).exp();
        let x0 = (ncx - nw / 2.0).max(0.0);
        let y0 = (ncy - nh / 2.0).max(0.0);
        let x1 = (ncx + nw / 2.0).min(bw);
        let y1 = (ncy + nh / 2.0).min(bh);
        let Ok(candidate) = BBox::new(x0, y0, x1, y1) else {
            continue;
        };
        // Margin keeps independent recomputation inside the tolerance.
        if (box_iou(&candidate, gt_box) - target_iou).abs() <= DEGRADE_TOLERANCE - 1e-9 {
            return Ok(candidate);
        }
    }
    Err(Error::GenerationFailed(format!(
        "no box with IoU {target_iou}±{DEGRADE_TOLERANCE} to {gt_box} in {max_proposals} proposals"
    )))
}

/// `m` distinct foreground pixel centres sampled uniformly without replacement.
pub fn sample_positive_points(gt: &BinaryMask, m: usize, seed: u64) -> Result<Vec<PointPrompt>> {
    let fg: Vec<(usize, usize)> = gt.foreground().collect();
    if fg.len() < m {
        return Err(Error::InsufficientForeground { requested: m, available: fg.len() });
    }
    let mut rng = stream_rng(seed, 0);
    Ok(index::sample(&mut rng, fg.len(), m)
        .into_iter()
        .map(|i| PointPrompt::at_pixel(fg[i].0, fg[i].1))
        .collect())
}
