//! Row-major rasters of probabilities, binary labels and entropy, plus the
//! entropy and scalarization primitives used throughout the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::Dims;

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::domain(format!("raster must be non-empty, got {width}x{height}")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::domain(format!(
            "raster of {width}x{height} needs {} values, got {len}",
            width * height
        )));
    }
    Ok(())
}

fn check_unit(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::domain(format!("{what} value {} at index {i} outside [0,1]", values[i]))),
        None => Ok(()),
    }
}

macro_rules! unit_raster {
    ($name:ident, $what:literal) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(try_from = "RawRaster<f64>", into = "RawRaster<f64>")]
        pub struct $name {
            width: usize,
            height: usize,
            values: Vec<f64>,
        }

        impl $name {
            pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
                check_dims(width, height, values.len())?;
                check_unit(&values, $what)?;
                Ok(Self { width, height, values })
            }

            pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
                Self::new(width, height, vec![value; width * height])
            }

            /// Builds a raster by evaluating `f(x, y)` at every pixel.
            pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
                let mut values = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        values.push(f(x, y));
                    }
                }
                Self::new(width, height, values)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn dims(&self) -> Dims {
                Dims::new(self.width, self.height)
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn get(&self, x: usize, y: usize) -> f64 {
                self.values[y * self.width + x]
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }
        }

        impl TryFrom<RawRaster<f64>> for $name {
            type Error = Error;
            fn try_from(raw: RawRaster<f64>) -> Result<Self> {
                Self::new(raw.width, raw.height, raw.values)
            }
        }

        impl From<$name> for RawRaster<f64> {
            fn from(r: $name) -> Self {
                RawRaster { width: r.width, height: r.height, values: r.values }
            }
        }
    };
}

#[derive(Serialize, Deserialize)]
#[doc(hidden)]
pub struct RawRaster<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

unit_raster!(ProbMask, "probability");
unit_raster!(UncertaintyMap, "uncertainty");

/// A {0,1} label raster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRaster<u8>", into = "RawRaster<u8>")]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl TryFrom<RawRaster<u8>> for BinaryMask {
    type Error = Error;
    fn try_from(raw: RawRaster<u8>) -> Result<Self> {
        Self::new(raw.width, raw.height, raw.values)
    }
}

impl From<BinaryMask> for RawRaster<u8> {
    fn from(r: BinaryMask) -> Self {
        RawRaster { width: r.width, height: r.height, values: r.values }
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(Error::domain(format!("binary value {} at index {i}", values[i])));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y) as u8);
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x] == 1
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// Iterates `(x, y)` of foreground pixels in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn to_prob(&self) -> ProbMask {
        let values = self.values.iter().map(|&v| v as f64).collect();
        ProbMask { width: self.width, height: self.height, values }
    }
}

/// Unchecked binary entropy in bits; callers guarantee `p` in [0,1].
#[inline]
pub(crate) fn entropy_bits(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    // Clamp guards rounding overshoot of the sum near p = 0.5.
    (term(p) + term(1.0 - p)).clamp(0.0, 1.0)
}

/// Shannon entropy of a Bernoulli(p) variable in bits, with 0·log 0 = 0.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0,1]")));
    }
    Ok(entropy_bits(p))
}

/// Per-pixel binary entropy of a probability mask.
pub fn entropy_map(mask: &ProbMask) -> UncertaintyMap {
    UncertaintyMap {
        width: mask.width,
        height: mask.height,
        values: mask.values.iter().map(|&p| entropy_bits(p)).collect(),
    }
}

/// Mean entropy over all pixels.
pub fn scalar_uncertainty(map: &UncertaintyMap) -> f64 {
    let first = map.values[0];
    if map.values.iter().all(|&v| v == first) {
        return first;
    }
    map.values.iter().sum::<f64>() / map.values.len() as f64
}

/// Pixel is foreground iff its probability is at least `t`.
pub fn threshold_mask(mask: &ProbMask, t: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("threshold {t} outside [0,1]")));
    }
    Ok(BinaryMask {
        width: mask.width,
        height: mask.height,
        values: mask.values.iter().map(|&p| (p >= t) as u8).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent closed form in natural log, converted to bits.
    fn entropy_nats_as_bits(p: f64) -> f64 {
        let mut h = 0.0;
        if p > 0.0 {
            h -= p * p.ln();
        }
        if p < 1.0 {
            h -= (1.0 - p) * (1.0 - p).ln();
        }
        h / std::f64::consts::LN_2
    }

    #[test]
    fn entropy_fixed_points() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.25).unwrap() - 0.811_278_124_459_132_8).abs() < 1e-12);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.0001).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn entropy_map_two_pixels() {
        let m = ProbMask::new(2, 1, vec![0.1, 0.9]).unwrap();
        let u = entropy_map(&m);
        assert_eq!(u.dims(), m.dims());
        for &v in u.values() {
            assert!((v - 0.468_995_593_589_281_2).abs() < 1e-12);
        }
        let half = entropy_map(&ProbMask::filled(3, 2, 0.5).unwrap());
        assert!(half.values().iter().all(|&v| v == 1.0));
        let certain = entropy_map(&ProbMask::filled(3, 2, 1.0).unwrap());
        assert!(certain.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_uncertainty_is_mean() {
        let m = UncertaintyMap::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(scalar_uncertainty(&m), 0.5);
        assert_eq!(scalar_uncertainty(&UncertaintyMap::filled(7, 3, 0.3).unwrap()), 0.3);
    }

    #[test]
    fn threshold_boundary() {
        let m = ProbMask::new(3, 1, vec![0.4, 0.5, 0.6]).unwrap();
        assert_eq!(threshold_mask(&m, 0.5).unwrap().values(), &[0, 1, 1]);
        assert_eq!(threshold_mask(&m, 0.0).unwrap().values(), &[1, 1, 1]);
        assert!(threshold_mask(&m, 1.5).is_err());
    }

    #[test]
    fn constructors_reject_invalid() {
        assert!(ProbMask::new(0, 1, vec![]).is_err());
        assert!(ProbMask::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ProbMask::new(1, 1, vec![1.2]).is_err());
        assert!(BinaryMask::new(1, 2, vec![0, 2]).is_err());
        let json = r#"{"width":1,"height":1,"values":[2.0]}"#;
        assert!(serde_json::from_str::<ProbMask>(json).is_err());
    }

    proptest! {
        #[test]
        fn entropy_symmetric(p in 0.0f64..=1.0) {
            let a = binary_entropy(p).unwrap();
            let b = binary_entropy(1.0 - p).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((a - entropy_nats_as_bits(p)).abs() < 1e-12);
        }

        #[test]
        fn entropy_monotone_halves(a in 0.0f64..=0.5, b in 0.0f64..=0.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(binary_entropy(lo).unwrap() <= binary_entropy(hi).unwrap());
            prop_assert!(binary_entropy(1.0 - lo).unwrap() <= binary_entropy(1.0 - hi).unwrap());
        }

        #[test]
        fn entropy_map_commutes_with_permutation(
            vals in prop::collection::vec(0.0f64..=1.0, 12),
            rot in 0usize..12,
        ) {
            let m = ProbMask::new(4, 3, vals.clone()).unwrap();
            let mut permuted = vals.clone();
            permuted.rotate_left(rot);
            let pm = ProbMask::new(4, 3, permuted).unwrap();
            let mut expected = entropy_map(&m).into_values();
            expected.rotate_left(rot);
            prop_assert_eq!(entropy_map(&pm).into_values(), expected);
        }

        #[test]
        fn threshold_idempotent(vals in prop::collection::vec(0.0f64..=1.0, 9), t in 0.0f64..=1.0) {
            let m = ProbMask::new(3, 3, vals).unwrap();
            let once = threshold_mask(&m, t).unwrap();
            let twice = threshold_mask(&once.to_prob(), t).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn constant_map_mean_exact(c in 0.0f64..=1.0, w in 1usize..20, h in 1usize..20) {
            prop_assert_eq!(scalar_uncertainty(&UncertaintyMap::filled(w, h, c).unwrap()), c);
        }
    }
}
