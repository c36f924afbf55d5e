use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::{dice, iou};
use crate::prompts::{degraded_box, sample_positive_points, tight_bbox};
use crate::raster::threshold_mask;
use crate::refine::{refine_segmentation, RefineConfig};
use crate::rng::derive_seed;
use crate::segmenter::Segmenter;

/// Initial prompt fabrication: `points` random positive points and `boxes`
/// jittered copies of a box at `ratio` IoU with the ground-truth box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptSetting {
    pub points: usize,
    pub boxes: usize,
    pub ratio: f64,
}

impl PromptSetting {
    pub fn boxes(boxes: usize, ratio: f64) -> Self {
        Self { points: 0, boxes, ratio }
    }

    /// `3B(0.5)` or `3P&3B(0.5)`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PromptSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.points > 0 {
            write!(f, "{}P&", self.points)?;
        }
        write!(f, "{}B({})", self.boxes, self.ratio)
    }
}

/// Accepts `3B:0.5`, `10P&3B:0.75` or the label form `3B(0.5)`.
impl FromStr for PromptSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain(format!("setting '{s}' must look like 3B:0.5 or 10P&3B:0.5"));
        let t = s.trim();
        let (prompts, ratio) = if let Some(stripped) = t.strip_suffix(')') {
            stripped.split_once('(').ok_or_else(bad)?
        } else {
            t.split_once(':').ok_or_else(bad)?
        };
        let ratio: f64 = ratio.trim().parse().map_err(|_| bad())?;
        let (points, boxes) = match prompts.split_once('&') {
            Some((p, b)) => (p, b),
            None => ("0P", prompts),
        };
        let count = |part: &str, suffix: char| -> Result<usize> {
            part.trim().strip_suffix(suffix).and_then(|n| n.parse().ok()).ok_or_else(bad)
        };
        let setting = PromptSetting { points: count(points, 'P')?, boxes: count(boxes, 'B')?, ratio };
        if setting.boxes == 0 || !(setting.ratio > 0.0 && setting.ratio <= 1.0) {
            return Err(bad());
        }
        Ok(setting)
    }
}

/// One (entry, setting) evaluation. Metric fields are `None` when the row failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub setting: String,
    pub dice_before: Option<f64>,
    pub iou_before: Option<f64>,
    pub dice_after: Option<f64>,
    pub iou_after: Option<f64>,
    pub accepted: bool,
    pub u_before: Option<f64>,
    pub u_after: Option<f64>,
    pub wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    fn failed(id: &str, setting: &str, err: &Error) -> Self {
        Self {
            id: id.to_string(),
            setting: setting.to_string(),
            dice_before: None,
            iou_before: None,
            dice_after: None,
            iou_after: None,
            accepted: false,
            u_before: None,
            u_after: None,
            wall_ms: 0,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions {
    /// Worker threads; `None` uses one per CPU.
    pub workers: Option<usize>,
    /// Record wall-clock time per row. Off keeps reports byte-reproducible.
    pub record_timing: bool,
}

/// Runs failing more than this share of rows is an error.
pub const MAX_FAILURE_RATE: f64 = 0.10;

fn evaluate_one<S: Segmenter>(
    sample: &Sample,
    setting: &PromptSetting,
    cfg: &RefineConfig,
    backend: &S,
    record_timing: bool,
) -> Result<EvalRecord> {
    let label = setting.label();
    let entry_seed = derive_seed(cfg.seed, &[sample.id.as_bytes(), label.as_bytes()]);
    let dims = sample.dims();
    let gt_box = tight_bbox(&sample.gt)?;
    let b_init = degraded_box(&gt_box, setting.ratio, derive_seed(entry_seed, &[b"box"]), dims)?;
    let points = if setting.points > 0 {
        sample_positive_points(&sample.gt, setting.points, derive_seed(entry_seed, &[b"points"]))?
    } else {
        Vec::new()
    };
    let run_cfg = RefineConfig { n_boxes: setting.boxes, seed: entry_seed, ..cfg.clone() };
    let start = Instant::now();
    let outcome = refine_segmentation(&sample.image, &b_init, &points, &run_cfg, backend)?;
    let elapsed = start.elapsed().as_millis() as u64;
    let before = threshold_mask(&outcome.baseline.mean_mask, cfg.binarize_threshold)?;
    let after = threshold_mask(&outcome.mask, cfg.binarize_threshold)?;
    Ok(EvalRecord {
        id: sample.id.clone(),
        setting: label,
        dice_before: Some(dice(&before, &sample.gt)?),
        iou_before: Some(iou(&before, &sample.gt)?),
        dice_after: Some(dice(&after, &sample.gt)?),
        iou_after: Some(iou(&after, &sample.gt)?),
        accepted: outcome.accepted(),
        u_before: Some(outcome.baseline.scalar_u),
        u_after: Some(outcome.trace.final_scalar_u),
        wall_ms: if record_timing { elapsed } else { 0 },
        error: None,
    })
}

/// Evaluates every sample under every setting.
///
/// Per-row seeds derive from `(cfg.seed, id, setting label)`. Failed rows are
/// kept with their error; more than 10% failures fails the run. Records come
/// back sorted by `(setting, id)`.
pub fn run_eval<S, F>(
    dataset: &Dataset,
    settings: &[PromptSetting],
    cfg: &RefineConfig,
    make_backend: F,
    options: EvalOptions,
) -> Result<Vec<EvalRecord>>
where
    S: Segmenter,
    F: Fn(&Sample) -> Result<S> + Sync,
{
    if dataset.samples.is_empty() {
        return Err(Error::domain("dataset has no entries"));
    }
    if settings.is_empty() {
        return Err(Error::domain("no prompt settings given"));
    }
    cfg.validate()?;
    let jobs: Vec<(&Sample, &PromptSetting)> =
        dataset.samples.iter().flat_map(|s| settings.iter().map(move |p| (s, p))).collect();
    let run = || {
        jobs.par_iter()
            .map(|&(sample, setting)| {
                make_backend(sample)
                    .and_then(|backend| evaluate_one(sample, setting, cfg, &backend, options.record_timing))
                    .unwrap_or_else(|e| {
                        log::warn!("{} {}: {e}", sample.id, setting.label());
                        EvalRecord::failed(&sample.id, &setting.label(), &e)
                    })
            })
            .collect::<Vec<_>>()
    };
    let mut records = match options.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::domain(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    records.sort_by(|a, b| (&a.setting, &a.id).cmp(&(&b.setting, &b.id)));
    let failed: Vec<&EvalRecord> = records.iter().filter(|r| !r.is_ok()).collect();
    if failed.len() as f64 > MAX_FAILURE_RATE * records.len() as f64 {
        return Err(Error::RunFailed {
            failed: failed.len(),
            total: records.len(),
            first: failed[0].error.clone().unwrap_or_default(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_parse_and_label() {
        let s: PromptSetting = "3B:0.5".parse().unwrap();
        assert_eq!(s, PromptSetting::boxes(3, 0.5));
        assert_eq!(s.label(), "3B(0.5)");
        let m: PromptSetting = "10P&3B:0.75".parse().unwrap();
        assert_eq!(m, PromptSetting { points: 10, boxes: 3, ratio: 0.75 });
        assert_eq!(m.label(), "10P&3B(0.75)");
        assert_eq!(m.label().parse::<PromptSetting>().unwrap(), m);
        assert_eq!("3B:1".parse::<PromptSetting>().unwrap().label(), "3B(1)");
        for bad in ["", "3B", "3X:0.5", "0B:0.5", "3B:1.5", "3B:0", "P&3B:0.5"] {
            assert!(bad.parse::<PromptSetting>().is_err(), "{bad}");
        }
    }
}
