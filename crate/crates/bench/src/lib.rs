//! Fixtures shared by the benchmarks.

use uncerseg::{degraded_box, tight_bbox, BBox, BinaryMask, Dims, GrayImage, ProbMask};

/// An image, its elliptical ground truth and a degraded initial box.
pub struct Fixture {
    pub image: GrayImage,
    pub gt: BinaryMask,
    pub b_init: BBox,
}

/// Square frame of side `size` with one centred ellipse and a box at IoU 0.5 with its tight box.
pub fn fixture(size: usize) -> Fixture {
    let c = size as f64 / 2.0;
    let (rx, ry) = (size as f64 * 0.3, size as f64 * 0.2);
    let inside = |x: usize, y: usize| {
        let dx = (x as f64 + 0.5 - c) / rx;
        let dy = (y as f64 + 0.5 - c) / ry;
        dx * dx + dy * dy <= 1.0
    };
    let gt = BinaryMask::from_fn(size, size, inside).expect("valid dims");
    let pixels = (0..size * size).map(|i| if inside(i % size, i / size) { 170 } else { 70 }).collect();
    let image = GrayImage::from_raw(size as u32, size as u32, pixels).expect("buffer matches dims");
    let b_init = degraded_box(&tight_bbox(&gt).expect("foreground"), 0.5, 1, Dims::new(size, size)).expect("reachable");
    Fixture { image, gt, b_init }
}

/// Smooth probability ramp used for the entropy benchmark.
pub fn ramp(size: usize) -> ProbMask {
    ProbMask::from_fn(size, size, |x, y| ((x + y) as f64 / (2 * size) as f64).min(1.0)).expect("valid dims")
}
