//! Multi-prompt aggregation: segment once per box, average, and measure the
//! entropy of the average.

use image::GrayImage;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prompts::{Dims, PromptSet};
use crate::raster::{entropy_map, scalar_uncertainty, ProbMask, UncertaintyMap};
use crate::segmenter::Segmenter;

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateResult {
    pub mean_mask: ProbMask,
    pub uncertainty: UncertaintyMap,
    /// One mask per box, in prompt order.
    pub per_box_masks: Vec<ProbMask>,
    /// Mean entropy of `uncertainty`.
    pub scalar_u: f64,
}

/// Per-pixel arithmetic mean.
///
/// Each pixel's values are summed in sorted order so the result does not
/// depend on the order of `masks`, and the mean is clamped to the per-pixel
/// range so identical inputs reproduce exactly.
pub fn aggregate(masks: &[ProbMask]) -> Result<ProbMask> {
    let first = masks.first().ok_or_else(|| Error::domain("cannot aggregate an empty mask list"))?;
    let dims = first.dims();
    if let Some(m) = masks.iter().find(|m| m.dims() != dims) {
        return Err(Error::domain(format!("mask {} differs from {}", m.dims(), dims)));
    }
    if masks.len() == 1 {
        return Ok(first.clone());
    }
    let n = masks.len() as f64;
    let mut column = Vec::with_capacity(masks.len());
    let values = (0..dims.area())
        .map(|i| {
            column.clear();
            column.extend(masks.iter().map(|m| m.values()[i]));
            column.sort_by(f64::total_cmp);
            let mean = column.iter().sum::<f64>() / n;
            mean.clamp(column[0], column[column.len() - 1])
        })
        .collect();
    ProbMask::new(dims.width, dims.height, values)
}

/// Segments `image` once per box with the shared point list, then aggregates.
///
/// Backend calls run concurrently; results keep the box order.
pub fn ugmp<S: Segmenter + ?Sized>(image: &GrayImage, prompts: &PromptSet, backend: &S) -> Result<AggregateResult> {
    let dims = Dims::new(image.width() as usize, image.height() as usize);
    prompts.validate_within(dims)?;
    if !prompts.points().is_empty() && !backend.capabilities().supports_points {
        return Err(Error::domain("backend does not accept point prompts"));
    }
    let per_box_masks = prompts
        .boxes()
        .par_iter()
        .enumerate()
        .map(|(index, b)| {
            let wrap = |source: Error| Error::BoxFailed { index, source: Box::new(source) };
            let mask = backend.segment_one(image, b, prompts.points()).map_err(wrap)?;
            if mask.dims() != dims {
                return Err(wrap(Error::Protocol(format!("mask {} for image {dims}", mask.dims()))));
            }
            Ok(mask)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_mask = aggregate(&per_box_masks)?;
    let uncertainty = entropy_map(&mean_mask);
    let scalar_u = scalar_uncertainty(&uncertainty);
    Ok(AggregateResult { mean_mask, uncertainty, per_box_masks, scalar_u })
}
