//! PNG encodings shared by the file formats and the wire protocol.
//!
//! Binary masks are 8-bit grayscale (0 and 255). Probability and uncertainty
//! rasters are 16-bit grayscale with `p = v / 65535`, written with
//! round-half-up quantization.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbMask, UncertaintyMap};

pub const U16_MAX: f64 = 65535.0;

/// Round-half-up quantization of a unit value to 16 bits.
pub fn quantize_u16(p: f64) -> u16 {
    (p.clamp(0.0, 1.0) * U16_MAX + 0.5).floor() as u16
}

pub fn dequantize_u16(v: u16) -> f64 {
    v as f64 / U16_MAX
}

fn to_png(img: DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(buf.into_inner())
}

fn from_png(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| Error::Codec(e.to_string()))
}

fn unit_to_png(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    let data: Vec<u16> = values.iter().map(|&p| quantize_u16(p)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::Codec("raster buffer size mismatch".into()))?;
    to_png(DynamicImage::ImageLuma16(buf))
}

fn unit_from_png(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    match from_png(bytes)? {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let values = buf.into_raw().into_iter().map(dequantize_u16).collect();
            Ok((w as usize, h as usize, values))
        }
        other => Err(Error::Codec(format!(
            "expected 16-bit grayscale PNG, got {:?}",
            other.color()
        ))),
    }
}

pub fn encode_prob_png(mask: &ProbMask) -> Result<Vec<u8>> {
    unit_to_png(mask.width(), mask.height(), mask.values())
}

pub fn decode_prob_png(bytes: &[u8]) -> Result<ProbMask> {
    let (w, h, v) = unit_from_png(bytes)?;
    ProbMask::new(w, h, v)
}

pub fn encode_uncertainty_png(map: &UncertaintyMap) -> Result<Vec<u8>> {
    unit_to_png(map.width(), map.height(), map.values())
}

pub fn decode_uncertainty_png(bytes: &[u8]) -> Result<UncertaintyMap> {
    let (w, h, v) = unit_from_png(bytes)?;
    UncertaintyMap::new(w, h, v)
}

pub fn encode_binary_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    let data: Vec<u8> = mask.values().iter().map(|&v| v * 255).collect();
    let buf = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data)
        .ok_or_else(|| Error::Codec("raster buffer size mismatch".into()))?;
    to_png(DynamicImage::ImageLuma8(buf))
}

/// Decodes an 8-bit mask; any nonzero sample is foreground. 16-bit input is rejected.
pub fn decode_binary_png(bytes: &[u8]) -> Result<BinaryMask> {
    let gray = match from_png(bytes)? {
        DynamicImage::ImageLuma8(buf) => buf,
        img @ (DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_)) => {
            img.to_luma8()
        }
        other => {
            return Err(Error::Codec(format!("mask must be an 8-bit PNG, got {:?}", other.color())));
        }
    };
    let (w, h) = gray.dimensions();
    let values = gray.into_raw().into_iter().map(|v| (v != 0) as u8).collect();
    BinaryMask::new(w as usize, h as usize, values)
}

pub fn encode_gray_png(img: &GrayImage) -> Result<Vec<u8>> {
    to_png(DynamicImage::ImageLuma8(img.clone()))
}

/// Decodes any PNG into 8-bit luma.
pub fn decode_gray_png(bytes: &[u8]) -> Result<GrayImage> {
    Ok(from_png(bytes)?.to_luma8())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_gray_image(path: &Path) -> Result<GrayImage> {
    decode_gray_png(&read_file(path)?)
}

pub fn read_binary_mask(path: &Path) -> Result<BinaryMask> {
    decode_binary_png(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize_u16(0.0), 0);
        assert_eq!(quantize_u16(1.0), 65535);
        assert_eq!(quantize_u16(0.5), 32768);
        assert_eq!(quantize_u16(1.5 / U16_MAX), 2);
    }

    #[test]
    fn binary_png_levels() {
        let m = BinaryMask::new(3, 1, vec![0, 1, 0]).unwrap();
        let bytes = encode_binary_png(&m).unwrap();
        match from_png(&bytes).unwrap() {
            DynamicImage::ImageLuma8(b) => assert_eq!(b.into_raw(), vec![0, 255, 0]),
            other => panic!("unexpected {:?}", other.color()),
        }
        assert_eq!(decode_binary_png(&bytes).unwrap(), m);
    }

    #[test]
    fn sixteen_bit_mask_rejected_as_binary() {
        let p = ProbMask::new(2, 1, vec![0.0, 1.0]).unwrap();
        let bytes = encode_prob_png(&p).unwrap();
        assert!(matches!(decode_binary_png(&bytes), Err(Error::Codec(_))));
        let b = encode_binary_png(&BinaryMask::zeros(2, 1).unwrap()).unwrap();
        assert!(decode_prob_png(&b).is_err());
    }

    proptest! {
        #[test]
        fn prob_png_roundtrip_within_quantum(vals in prop::collection::vec(0.0f64..=1.0, 20)) {
            let m = ProbMask::new(5, 4, vals).unwrap();
            let back = decode_prob_png(&encode_prob_png(&m).unwrap()).unwrap();
            prop_assert_eq!(back.dims(), m.dims());
            for (a, b) in m.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 0.5 / U16_MAX + 1e-15);
            }
        }
    }
}
