//! Uncertainty-guided test-time prompting for promptable segmenters.
//!
//! A box prompt is jittered into several variants, each variant is segmented,
//! and the per-box probability masks are averaged into a consensus mask whose
//! per-pixel binary entropy forms an uncertainty map. The uncertainty map is
//! then used to derive refined prompts (an enclosing box of the uncertain
//! region plus the most uncertain pixels as positive points). The refined
//! prediction replaces the consensus only when it lowers the mean entropy.
//!
//! The segmentation model itself sits behind the [`Segmenter`] trait. Two
//! backends ship with the crate: a deterministic synthetic [`OracleSegmenter`]
//! driven by a ground-truth mask, and a [`RemoteSegmenter`] that speaks the
//! JSON/PNG wire protocol to an inference server.

pub mod codec;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod prompts;
pub mod raster;
pub mod refine;
pub mod rng;
pub mod segmenter;
pub mod ugmp;

pub use error::{Error, Result};
pub use image::GrayImage;
pub use metrics::{box_iou, dice, focal_dice_loss, iou, LossParams};
pub use prompts::{
    degraded_box, gen_box_set, perturb_box, sample_positive_points, tight_bbox, BBox, Dims,
    JitterSpec, PointLabel, PointPrompt, PromptSet,
};
pub use raster::{
    binary_entropy, entropy_map, scalar_uncertainty, threshold_mask, BinaryMask, ProbMask,
    UncertaintyMap,
};
pub use refine::{
    edge_bbox, refine_prompts, refine_segmentation, top_k_points, uncertainty_region,
    FinalSource, RefineConfig, RefineOutcome, RefineTrace, RoundTrace,
};
pub use segmenter::oracle::{oracle_segment, OracleParams, OracleSegmenter};
pub use segmenter::remote::{RemoteConfig, RemoteSegmenter, SegmentRequest, SegmentResponse};
pub use segmenter::{Capabilities, Segmenter};
pub use ugmp::{aggregate, ugmp, AggregateResult};
