//! Uncertainty-guided prompt refinement and the end-to-end refine loop.
//!
//! From an aggregated uncertainty map the refiner derives a new prompt set:
//! the enclosing box of the high-uncertainty region, re-jittered into `N`
//! boxes, plus the `K` most uncertain pixels as positive points. The refined
//! prediction is kept only if its mean entropy is strictly lower.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::{gen_box_set, tight_bbox, BBox, Dims, JitterSpec, PointPrompt, PromptSet};
use crate::raster::{BinaryMask, ProbMask, UncertaintyMap};
use crate::rng::derive_seed;
use crate::segmenter::Segmenter;
use crate::ugmp::{ugmp, AggregateResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Boxes per prompt set.
    pub n_boxes: usize,
    /// Jitter standard deviation as a fraction of box side length.
    pub sigma_frac: f64,
    /// Refined point prompts per round.
    pub k_points: usize,
    /// Uncertainty region threshold as a fraction of the map maximum.
    pub tau: f64,
    /// Minimum Chebyshev distance between refined points, in pixels.
    pub min_point_separation: usize,
    pub rounds: usize,
    /// Probability threshold used when binarizing for metrics.
    pub binarize_threshold: f64,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            n_boxes: 3,
            sigma_frac: 0.05,
            k_points: 10,
            tau: 0.5,
            min_point_separation: 5,
            rounds: 1,
            binarize_threshold: 0.5,
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_boxes == 0 {
            return Err(Error::domain("n_boxes must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::domain(format!("tau {} outside (0,1]", self.tau)));
        }
        if self.rounds == 0 {
            return Err(Error::domain("rounds must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.binarize_threshold) {
            return Err(Error::domain(format!("binarize threshold {} outside [0,1]", self.binarize_threshold)));
        }
        JitterSpec::new(self.sigma_frac, self.seed)?;
        Ok(())
    }

    fn jitter(&self, label: &[u8]) -> JitterSpec {
        JitterSpec { sigma_frac: self.sigma_frac, seed: derive_seed(self.seed, &[label]) }
    }
}

/// Pixels whose uncertainty reaches `tau` times the map maximum.
pub fn uncertainty_region(u: &UncertaintyMap, tau: f64) -> BinaryMask {
    let max = u.values().iter().copied().fold(0.0, f64::max);
    let values = if max <= 0.0 {
        vec![0; u.values().len()]
    } else {
        let cut = tau * max;
        u.values().iter().map(|&v| (v >= cut) as u8).collect()
    };
    BinaryMask::new(u.width(), u.height(), values).expect("region has the map's dimensions")
}

/// Enclosing box of the region. The region's boundary pixels attain the same
/// extrema as the region, so this is also the box of its edge.
pub fn edge_bbox(region: &BinaryMask) -> Result<BBox> {
    tight_bbox(region).map_err(|e| match e {
        Error::EmptyForeground => Error::EmptyUncertainty,
        other => other,
    })
}

/// Greedy selection of up to `k` most uncertain pixels.
///
/// Candidates are visited by descending value, ties by row-major index; a
/// candidate closer than `d_min` (Chebyshev) to an already selected pixel is
/// skipped. Points sit at pixel centres and are labelled positive.
pub fn top_k_points(u: &UncertaintyMap, k: usize, d_min: usize) -> Vec<PointPrompt> {
    if k == 0 {
        return Vec::new();
    }
    let w = u.width();
    let vals = u.values();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut picked: Vec<(usize, usize)> = Vec::with_capacity(k);
    for i in order {
        let (x, y) = (i % w, i / w);
        let clear = picked.iter().all(|&(px, py)| x.abs_diff(px).max(y.abs_diff(py)) >= d_min);
        if clear {
            picked.push((x, y));
            if picked.len() == k {
                break;
            }
        }
    }
    picked.into_iter().map(|(x, y)| PointPrompt::at_pixel(x, y)).collect()
}

/// Refined prompts: jittered enclosing boxes of the uncertain region plus top-K points.
pub fn refine_prompts(u: &UncertaintyMap, cfg: &RefineConfig, bounds: Dims) -> Result<PromptSet> {
    cfg.validate()?;
    let anchor = edge_bbox(&uncertainty_region(u, cfg.tau))?;
    let boxes = gen_box_set(&anchor, cfg.n_boxes, &cfg.jitter(b"refine"), bounds)?;
    let points = top_k_points(u, cfg.k_points, cfg.min_point_separation);
    PromptSet::new(boxes, points)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FinalSource {
    /// The aggregate of the initial jittered prompts.
    Baseline,
    /// The refined aggregate accepted in the given round (0-based).
    Refined { round: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundTrace {
    pub round: usize,
    /// Prompts whose aggregate this round tries to improve.
    pub prompts: PromptSet,
    pub scalar_u: f64,
    pub refined_prompts: Option<PromptSet>,
    pub refined_scalar_u: Option<f64>,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
    /// File holding the mean mask of `prompts`, when written.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mask_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub refined_mask_ref: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineTrace {
    pub initial_box: BBox,
    pub config: RefineConfig,
    pub rounds: Vec<RoundTrace>,
    pub final_source: FinalSource,
    pub final_scalar_u: f64,
    pub backend_calls: usize,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub mask: ProbMask,
    pub uncertainty: UncertaintyMap,
    /// Aggregate of the initial prompts.
    pub baseline: AggregateResult,
    pub trace: RefineTrace,
}

impl RefineOutcome {
    pub fn accepted(&self) -> bool {
        self.trace.final_source != FinalSource::Baseline
    }
}

/// Jitter, aggregate, refine, re-aggregate and keep the refinement only when
/// it strictly lowers mean entropy.
///
/// `initial_points` accompany the initial boxes; refined rounds replace them
/// with the selected uncertain points. With `rounds > 1` each accepted result
/// seeds the next round and the loop stops at the first rejection.
pub fn refine_segmentation<S: Segmenter + ?Sized>(
    image: &GrayImage,
    b_init: &BBox,
    initial_points: &[PointPrompt],
    cfg: &RefineConfig,
    backend: &S,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    let bounds = Dims::new(image.width() as usize, image.height() as usize);
    let boxes = gen_box_set(b_init, cfg.n_boxes, &cfg.jitter(b"initial"), bounds)?;
    let prompts = PromptSet::new(boxes, initial_points.to_vec())?;
    let baseline = ugmp(image, &prompts, backend)?;

    let mut trace = RefineTrace {
        initial_box: *b_init,
        config: cfg.clone(),
        rounds: Vec::new(),
        final_source: FinalSource::Baseline,
        final_scalar_u: baseline.scalar_u,
        backend_calls: prompts.boxes().len(),
    };
    let mut current = baseline.clone();
    let mut current_prompts = prompts;

    for round in 0..cfg.rounds {
        let round_cfg = RefineConfig { seed: derive_seed(cfg.seed, &[b"round", &(round as u64).to_le_bytes()]), ..cfg.clone() };
        let mut record = RoundTrace {
            round,
            prompts: current_prompts.clone(),
            scalar_u: current.scalar_u,
            refined_prompts: None,
            refined_scalar_u: None,
            accepted: false,
            note: None,
            mask_ref: None,
            refined_mask_ref: None,
        };
        let refined = match refine_prompts(&current.uncertainty, &round_cfg, bounds) {
            Ok(p) => p,
            Err(Error::EmptyUncertainty) => {
                record.note = Some("refinement skipped: empty uncertainty region".into());
                trace.rounds.push(record);
                break;
            }
            Err(e) => return Err(e),
        };
        record.refined_prompts = Some(refined.clone());
        trace.backend_calls += refined.boxes().len();
        let candidate = match ugmp(image, &refined, backend) {
            Ok(c) => c,
            Err(source) => {
                record.note = Some(format!("refined segmentation failed: {source}"));
                trace.rounds.push(record);
                return Err(Error::Aborted { source: Box::new(source), trace: Box::new(trace) });
            }
        };
        record.refined_scalar_u = Some(candidate.scalar_u);
        record.accepted = current.scalar_u > candidate.scalar_u;
        let accepted = record.accepted;
        trace.rounds.push(record);
        if !accepted {
            break;
        }
        current = candidate;
        current_prompts = refined;
        trace.final_source = FinalSource::Refined { round };
        trace.final_scalar_u = current.scalar_u;
    }

    Ok(RefineOutcome { mask: current.mean_mask, uncertainty: current.uncertainty, baseline, trace })
}
