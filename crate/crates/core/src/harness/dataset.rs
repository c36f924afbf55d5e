use std::collections::HashSet;
use std::path::{Path, PathBuf};

use image::GrayImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{decode_binary_png, decode_gray_png, encode_binary_png, encode_gray_png, read_file, write_file};
use crate::error::{Error, Result};
use crate::prompts::Dims;
use crate::raster::BinaryMask;
use crate::rng::stream_rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub modality: String,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    pub gt: BinaryMask,
}

impl Sample {
    pub fn dims(&self) -> Dims {
        self.gt.dims()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

fn entry_err(id: &str, message: impl std::fmt::Display) -> Error {
    Error::Dataset { id: id.to_string(), message: message.to_string() }
}

/// Reads a manifest and decodes every entry; masks are binarized (nonzero is foreground).
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut samples = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let id = entry.id.as_str();
        if !seen.insert(id) {
            return Err(entry_err(id, "duplicate id"));
        }
        let image_bytes = read_file(&root.join(&entry.image_path)).map_err(|e| entry_err(id, e))?;
        let image = decode_gray_png(&image_bytes).map_err(|e| entry_err(id, format!("image: {e}")))?;
        let mask_bytes = read_file(&root.join(&entry.mask_path)).map_err(|e| entry_err(id, e))?;
        let gt = decode_binary_png(&mask_bytes).map_err(|e| entry_err(id, format!("mask: {e}")))?;
        if (image.width() as usize, image.height() as usize) != (gt.width(), gt.height()) {
            return Err(entry_err(
                id,
                format!("image is {}x{}, mask is {}", image.width(), image.height(), gt.dims()),
            ));
        }
        samples.push(Sample { id: id.to_string(), image, gt });
    }
    Ok(Dataset { manifest, samples })
}

const MIN_FOREGROUND: f64 = 0.02;
const MAX_FOREGROUND: f64 = 0.45;

/// Union of 1-3 axis-aligned ellipses, each sized to 2-20% of the frame.
fn ellipse_mask(rng: &mut impl Rng, dims: Dims) -> BinaryMask {
    let (w, h) = (dims.width as f64, dims.height as f64);
    loop {
        let n = rng.random_range(1..=3);
        let mut ellipses = Vec::with_capacity(n);
        for _ in 0..n {
            let frac: f64 = rng.random_range(0.02..=0.20);
            let aspect = rng.random_range(0.5f64.ln()..=2.0f64.ln()).exp();
            let area = frac * w * h;
            let ax = ((area / (std::f64::consts::PI * aspect)).sqrt()).min(w / 2.0);
            let ay = (ax * aspect).min(h / 2.0);
            let cx = rng.random_range(ax..=w - ax);
            let cy = rng.random_range(ay..=h - ay);
            ellipses.push((cx, cy, ax, ay));
        }
        let mask = BinaryMask::from_fn(dims.width, dims.height, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            ellipses
                .iter()
                .any(|&(cx, cy, ax, ay)| ((px - cx) / ax).powi(2) + ((py - cy) / ay).powi(2) <= 1.0)
        })
        .expect("mask dims are non-zero");
        let fraction = mask.count_ones() as f64 / dims.area() as f64;
        if (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&fraction) {
            return mask;
        }
    }
}

fn textured_image(rng: &mut impl Rng, gt: &BinaryMask) -> GrayImage {
    let (w, h) = (gt.width() as u32, gt.height() as u32);
    GrayImage::from_fn(w, h, |x, y| {
        let base: i32 = if gt.get(x as usize, y as usize) { 170 } else { 70 };
        let noise: i32 = rng.random_range(-25..=25);
        image::Luma([(base + noise).clamp(0, 255) as u8])
    })
}

/// Writes `count` image/mask pairs plus `manifest.json` under `out_dir`.
///
/// Entry `i` draws from its own seeded stream, so the corpus is a pure
/// function of `(count, seed, dims)`.
pub fn gen_synthetic(count: usize, seed: u64, dims: Dims, out_dir: &Path) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(Error::domain("count must be at least 1"));
    }
    if dims.width < 8 || dims.height < 8 {
        return Err(Error::domain(format!("synthetic images must be at least 8x8, got {dims}")));
    }
    for sub in ["images", "masks"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = stream_rng(seed, i as u64);
        let gt = ellipse_mask(&mut rng, dims);
        let image = textured_image(&mut rng, &gt);
        let id = format!("synth_{i:04}");
        let image_path = PathBuf::from("images").join(format!("{id}.png"));
        let mask_path = PathBuf::from("masks").join(format!("{id}.png"));
        write_file(&out_dir.join(&image_path), &encode_gray_png(&image)?)?;
        write_file(&out_dir.join(&mask_path), &encode_binary_png(&gt)?)?;
        entries.push(ManifestEntry { id, image_path, mask_path });
    }
    let manifest = DatasetManifest { modality: "synthetic".into(), entries };
    let path = out_dir.join("manifest.json");
    write_file(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode_prob_png;
    use crate::raster::ProbMask;

    #[test]
    fn empty_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, r#"{"modality":"ct","entries":[]}"#).unwrap();
        let ds = load_dataset(&p).unwrap();
        assert!(ds.samples.is_empty());
        assert_eq!(ds.manifest.modality, "ct");
    }

    #[test]
    fn generated_corpus_properties() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = gen_synthetic(12, 7, Dims::new(64, 48), dir.path()).unwrap();
        assert_eq!(manifest.entries.len(), 12);
        let ds = load_dataset(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(ds.manifest, manifest);
        for s in &ds.samples {
            let frac = s.gt.count_ones() as f64 / s.dims().area() as f64;
            assert!((0.02..=0.45).contains(&frac), "{}: {frac}", s.id);
            assert_eq!(s.dims(), Dims::new(64, 48));
        }
        let other = tempfile::tempdir().unwrap();
        gen_synthetic(12, 7, Dims::new(64, 48), other.path()).unwrap();
        for e in &manifest.entries {
            assert_eq!(std::fs::read(dir.path().join(&e.mask_path)).unwrap(), std::fs::read(other.path().join(&e.mask_path)).unwrap());
            assert_eq!(std::fs::read(dir.path().join(&e.image_path)).unwrap(), std::fs::read(other.path().join(&e.image_path)).unwrap());
        }
    }

    #[test]
    fn load_errors_name_the_entry() {
        let dir = tempfile::tempdir().unwrap();
        gen_synthetic(2, 1, Dims::new(16, 16), dir.path()).unwrap();
        // 16-bit mask
        let wide = encode_prob_png(&ProbMask::filled(16, 16, 1.0).unwrap()).unwrap();
        std::fs::write(dir.path().join("masks/synth_0001.png"), wide).unwrap();
        match load_dataset(&dir.path().join("manifest.json")) {
            Err(Error::Dataset { id, .. }) => assert_eq!(id, "synth_0001"),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::remove_file(dir.path().join("masks/synth_0001.png")).unwrap();
        assert!(matches!(load_dataset(&dir.path().join("manifest.json")), Err(Error::Dataset { .. })));

        let dup = r#"{"modality":"x","entries":[
            {"id":"a","image_path":"images/synth_0000.png","mask_path":"masks/synth_0000.png"},
            {"id":"a","image_path":"images/synth_0000.png","mask_path":"masks/synth_0000.png"}]}"#;
        std::fs::write(dir.path().join("dup.json"), dup).unwrap();
        assert!(matches!(load_dataset(&dir.path().join("dup.json")), Err(Error::Dataset { .. })));

        let small = crate::codec::encode_binary_png(&BinaryMask::zeros(8, 8).unwrap()).unwrap();
        std::fs::write(dir.path().join("masks/small.png"), small).unwrap();
        let mismatch = r#"{"modality":"x","entries":[{"id":"m","image_path":"images/synth_0000.png","mask_path":"masks/small.png"}]}"#;
        std::fs::write(dir.path().join("mm.json"), mismatch).unwrap();
        assert!(matches!(load_dataset(&dir.path().join("mm.json")), Err(Error::Dataset { .. })));
    }
}
