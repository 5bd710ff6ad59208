//! Points and arcs of the circle `R/Z`, handled through lift coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduces a lift coordinate to `[0, 1)`.
#[inline]
pub fn reduce(x: f64) -> f64 {
    let r = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduces `x` into the fundamental domain `[base, base + 1)`.
#[inline]
pub fn reduce_from(x: f64, base: f64) -> f64 {
    base + reduce(x - base)
}

/// The usual distance on the circle.
#[inline]
pub fn dist(x: f64, y: f64) -> f64 {
    reduce(x - y).min(reduce(y - x))
}

/// Signed displacement from `y` to `x`, in `[-1/2, 1/2)`.
#[inline]
pub fn signed_offset(x: f64, y: f64) -> f64 {
    let d = reduce(x - y + 0.5) - 0.5;
    d
}

/// An arc `[lo, hi]` of the circle with `lo <= hi <= lo + 1`.
///
/// The arc is the projection of the real segment between the two lift
/// coordinates; moving the pair by an integer gives the same arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleInterval {
    pub lo: f64,
    pub hi: f64,
}

impl CircleInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi < lo || hi - lo > 1.0 {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// The full circle, cut at `base`.
    pub fn full(base: f64) -> Self {
        Self { lo: base, hi: base + 1.0 }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn is_full(&self) -> bool {
        self.len() >= 1.0
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Offset of `x` from `lo` measured forward along the circle, in `[0, 1)`.
    #[inline]
    pub fn offset(&self, x: f64) -> f64 {
        reduce(x - self.lo)
    }

    /// Closed membership.
    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.is_full() || self.offset(x) <= self.len()
    }

    /// Open membership.
    #[inline]
    pub fn contains_interior(&self, x: f64) -> bool {
        if self.is_full() {
            return true;
        }
        let o = self.offset(x);
        o > 0.0 && o < self.len()
    }

    /// Lift of `x` lying in `[lo, lo + 1)`.
    #[inline]
    pub fn lift_of(&self, x: f64) -> f64 {
        self.lo + self.offset(x)
    }

    /// Whether `other` lies inside `self` (closed arcs, within `tol`).
    pub fn contains_interval(&self, other: &CircleInterval, tol: f64) -> bool {
        if self.is_full() {
            return true;
        }
        if other.len() > self.len() + tol {
            return false;
        }
        let start = signed_offset(other.lo, self.lo);
        let start = if start < -tol { start + 1.0 } else { start };
        start >= -tol && start + other.len() <= self.len() + tol
    }

    /// Whether the interiors of the two arcs meet.
    pub fn interiors_meet(&self, other: &CircleInterval) -> bool {
        if self.is_empty() || other.is_empty() {
            return false;
        }
        if self.is_full() || other.is_full() {
            return true;
        }
        let a = self.offset(other.lo);
        let b = other.offset(self.lo);
        a < self.len() || b < other.len()
    }

    /// Same arc translated by an integer so that `lo` lies in `[0, 1)`.
    pub fn normalized(&self) -> Self {
        let shift = self.lo.floor();
        Self { lo: self.lo - shift, hi: self.hi - shift }
    }

    /// Reflection through `x -> -x`.
    pub fn mirrored(&self) -> Self {
        Self { lo: -self.hi, hi: -self.lo }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn membership_follows_lift_convention() {
        let arc = CircleInterval::new(0.9, 1.2).unwrap();
        assert!(arc.contains(0.95));
        assert!(arc.contains(0.1));
        assert!(arc.contains(-0.05));
        assert!(!arc.contains(0.5));
        assert!(arc.contains(1.2));
        assert!(!arc.contains_interior(1.2));
        assert!((arc.lift_of(0.1) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_overlong_arcs() {
        assert!(CircleInterval::new(0.0, 1.5).is_err());
        assert!(CircleInterval::new(0.3, 0.2).is_err());
        assert!(CircleInterval::new(0.0, 1.0).unwrap().is_full());
    }

    #[test]
    fn containment_and_overlap() {
        let big = CircleInterval::new(0.8, 1.3).unwrap();
        let small = CircleInterval::new(0.05, 0.1).unwrap();
        assert!(big.contains_interval(&small, 0.0));
        assert!(!small.contains_interval(&big, 0.0));
        let far = CircleInterval::new(0.4, 0.5).unwrap();
        assert!(!big.interiors_meet(&far));
        assert!(big.interiors_meet(&small));
        let touching = CircleInterval::new(1.3, 1.4).unwrap();
        assert!(!big.interiors_meet(&touching));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn distance_is_a_metric(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
            prop_assert_eq!(dist(x, y), dist(y, x));
            prop_assert!(dist(x, y) >= 0.0 && dist(x, y) <= 0.5);
            prop_assert!(dist(x, z) <= dist(x, y) + dist(y, z) + 4.0 * f64::EPSILON);
            prop_assert!(dist(x, x + 1.0) < 1e-15);
        }
    }
}
