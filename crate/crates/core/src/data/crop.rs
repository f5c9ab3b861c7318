use rand::Rng;

use crate::{Error, Result};

/// Two overlapping half-open windows `[a1, b1)` and `[a2, b2)` with
/// `a1 <= a2 < b1 <= b2`; the shared region is `[a2, b1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropPair {
    pub a1: usize,
    pub b1: usize,
    pub a2: usize,
    pub b2: usize,
}

impl CropPair {
    pub fn new(a1: usize, b1: usize, a2: usize, b2: usize) -> Result<Self> {
        if !(a1 <= a2 && a2 < b1 && b1 <= b2) {
            return Err(Error::InvalidInput(format!(
                "crop ({a1}, {b1}), ({a2}, {b2}) violates a1 <= a2 < b1 <= b2"
            )));
        }
        Ok(Self { a1, b1, a2, b2 })
    }

    /// Full-length pair, both windows covering `[0, t)`.
    pub fn identity(t: usize) -> Self {
        Self {
            a1: 0,
            b1: t,
            a2: 0,
            b2: t,
        }
    }

    pub fn overlap_len(&self) -> usize {
        self.b1 - self.a2
    }

    pub fn len1(&self) -> usize {
        self.b1 - self.a1
    }

    pub fn len2(&self) -> usize {
        self.b2 - self.a2
    }

    /// Overlap expressed in the first window's local coordinates.
    pub fn overlap_in_first(&self) -> std::ops::Range<usize> {
        (self.a2 - self.a1)..(self.b1 - self.a1)
    }

    /// Overlap expressed in the second window's local coordinates.
    pub fn overlap_in_second(&self) -> std::ops::Range<usize> {
        0..(self.b1 - self.a2)
    }

    pub fn is_valid_for(&self, t: usize) -> bool {
        self.a1 <= self.a2 && self.a2 < self.b1 && self.b1 <= self.b2 && self.b2 <= t
    }
}

/// Sample an overlapping crop pair inside `[0, t)`.
///
/// The first window's length is uniform on `[1, t]` and its start uniform among
/// feasible positions; `a2` is then uniform on `[a1, b1)` and `b2` uniform on `[b1, t]`.
pub fn sample_crop_pair<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Result<CropPair> {
    if t < 2 {
        return Err(Error::InvalidInput(format!(
            "series of length {t} is too short to crop"
        )));
    }
    let len1 = rng.random_range(1..=t);
    let a1 = rng.random_range(0..=t - len1);
    let b1 = a1 + len1;
    let a2 = rng.random_range(a1..b1);
    let b2 = rng.random_range(b1..=t);
    Ok(CropPair { a1, b1, a2, b2 })
}
