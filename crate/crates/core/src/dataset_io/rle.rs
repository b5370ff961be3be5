//! Row-major run-length encoding of binary masks.
//!
//! `counts` alternates runs of background and foreground pixels and always
//! starts with a background run, which may be zero when the first pixel is
//! set. Every later run is strictly positive.

use serde::{Deserialize, Serialize};

use crate::appearance_pool::InstanceMask;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pixels at or above this weight are foreground.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    /// Checks the run invariants without decoding.
    pub fn validate(&self) -> Result<()> {
        let area = self.area();
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if total != area {
            return Err(Error::Malformed(format!(
                "run lengths sum to {total}, mask area is {area}"
            )));
        }
        if let Some(i) = self.counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::Malformed(format!("zero-length run at position {}", i + 1)));
        }
        if area > 0 && self.counts.is_empty() {
            return Err(Error::Malformed("no runs for a non-empty mask".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// Mask with no foreground pixels.
    pub fn empty(width: u32, height: u32) -> Self {
        let area = width * height;
        Self {
            width,
            height,
            counts: if area == 0 { Vec::new() } else { vec![area] },
        }
    }

    /// Number of foreground pixels.
    pub fn foreground(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Foreground runs as half-open `[start, end)` pixel ranges.
    pub fn intervals(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as u64;
            (i % 2 == 1).then_some((start, pos))
        })
    }

    /// Foreground pixels shared with `other`. Both masks must have the same size.
    pub fn intersection(&self, other: &RleMask) -> Result<u64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Shape(format!(
                "masks are {}x{} and {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let a: Vec<_> = self.intervals().collect();
        let b: Vec<_> = other.intervals().collect();
        let (mut i, mut j, mut acc) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if hi > lo {
                acc += hi - lo;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(acc)
    }
}

/// Encodes a row-major bitmap.
pub fn rle_encode_bits(width: u32, height: u32, bits: &[bool]) -> RleMask {
    assert_eq!(bits.len(), width as usize * height as usize, "bitmap size");
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &b in bits {
        if b != current {
            counts.push(run);
            run = 0;
            current = b;
        }
        run += 1;
    }
    if !bits.is_empty() {
        counts.push(run);
    }
    RleMask {
        width,
        height,
        counts,
    }
}

pub fn rle_decode_bits(r: &RleMask) -> Result<Vec<bool>> {
    r.validate()?;
    let mut bits = Vec::with_capacity(r.area() as usize);
    for (i, &c) in r.counts.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
    }
    Ok(bits)
}

/// Encodes a (possibly soft) mask, thresholding at [`BINARIZE_THRESHOLD`].
pub fn rle_encode<T: Scalar>(mask: &InstanceMask<T>) -> RleMask {
    let t = T::lit(BINARIZE_THRESHOLD);
    let bits: Vec<bool> = mask.values().iter().map(|&v| v >= t).collect();
    rle_encode_bits(mask.width() as u32, mask.height() as u32, &bits)
}

/// Decodes into a 0/1 mask.
pub fn rle_decode<T: Scalar>(r: &RleMask) -> Result<InstanceMask<T>> {
    let bits = rle_decode_bits(r)?;
    InstanceMask::new(
        r.height as usize,
        r.width as usize,
        bits.into_iter()
            .map(|b| if b { T::one() } else { T::zero() })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_encoded_examples() {
        assert_eq!(rle_encode_bits(2, 2, &[false; 4]).counts, vec![4]);
        assert_eq!(rle_encode_bits(2, 2, &[true; 4]).counts, vec![0, 4]);
        assert_eq!(
            rle_encode_bits(2, 2, &[false, true, false, false]).counts,
            vec![1, 1, 2]
        );
    }

    #[test]
    fn hand_decoded_examples() {
        let r = RleMask {
            width: 2,
            height: 2,
            counts: vec![4],
        };
        assert_eq!(rle_decode_bits(&r).unwrap(), vec![false; 4]);
        let r = RleMask {
            width: 2,
            height: 2,
            counts: vec![1, 1, 2],
        };
        let m: InstanceMask<f64> = rle_decode(&r).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.values().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn malformed_runs_are_rejected() {
        let bad_sum = RleMask {
            width: 2,
            height: 2,
            counts: vec![1, 1],
        };
        assert!(matches!(rle_decode_bits(&bad_sum), Err(Error::Malformed(_))));
        let zero_run = RleMask {
            width: 2,
            height: 2,
            counts: vec![0, 0, 4],
        };
        assert!(matches!(rle_decode_bits(&zero_run), Err(Error::Malformed(_))));
    }

    #[test]
    fn soft_mask_thresholds_at_half() {
        let m = InstanceMask::new(1, 4, vec![0.49, 0.5, 0.9, 0.1]).unwrap();
        assert_eq!(rle_encode(&m).counts, vec![1, 2, 1]);
    }

    #[test]
    fn intersection_counts_shared_pixels() {
        let a = rle_encode_bits(4, 1, &[true, true, false, true]);
        let b = rle_encode_bits(4, 1, &[false, true, true, true]);
        assert_eq!(a.intersection(&b).unwrap(), 2);
        assert_eq!(a.foreground(), 3);
        assert_eq!(RleMask::empty(3, 3).foreground(), 0);
    }

    proptest! {
        #[test]
        fn roundtrip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let n = (w * h) as usize;
            let bits: Vec<bool> = (0..n).map(|i| (seed.rotate_left(i as u32 % 64) ^ (i as u64 * 0x9E37)) & 3 == 0).collect();
            let r = rle_encode_bits(w, h, &bits);
            prop_assert!(r.validate().is_ok());
            prop_assert_eq!(rle_decode_bits(&r).unwrap(), bits);
        }
    }
}
