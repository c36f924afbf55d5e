//! The promptable segmenter abstraction and its backends.

pub mod oracle;
pub mod remote;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::prompts::{BBox, PointPrompt};
use crate::raster::ProbMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_points: bool,
    pub max_boxes_per_call: usize,
}

/// A function from (image, one box, shared points) to a foreground-probability mask.
///
/// Implementations must be deterministic for fixed inputs, return a mask with
/// the image's dimensions, and tolerate concurrent calls.
pub trait Segmenter: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    fn segment_one(&self, image: &GrayImage, bbox: &BBox, points: &[PointPrompt]) -> Result<ProbMask>;
}

impl<S: Segmenter + ?Sized> Segmenter for &S {
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }

    fn segment_one(&self, image: &GrayImage, bbox: &BBox, points: &[PointPrompt]) -> Result<ProbMask> {
        (**self).segment_one(image, bbox, points)
    }
}

impl<S: Segmenter + ?Sized> Segmenter for Box<S> {
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }

    fn segment_one(&self, image: &GrayImage, bbox: &BBox, points: &[PointPrompt]) -> Result<ProbMask> {
        (**self).segment_one(image, bbox, points)
    }
}
