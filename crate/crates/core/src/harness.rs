//! Small expanding maps with known invariant densities, used as oracles for
//! the partition and transfer-operator machinery.

use serde::{Deserialize, Serialize};

use crate::lift::{Lift, MonotoneLaps};

/// `x -> 2x` on the circle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Doubling;

impl Lift for Doubling {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        2.0 * x
    }
    #[inline]
    fn deriv(&self, _x: f64) -> f64 {
        2.0
    }
    fn degree(&self) -> i64 {
        2
    }
}

impl MonotoneLaps for Doubling {
    #[inline]
    fn lap(&self, x: f64) -> i64 {
        x.floor() as i64
    }
}

/// The full tent on `[0, 1]`, seen as a degree-zero circle map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tent;

impl Lift for Tent {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let t = x - x.floor();
        if t <= 0.5 {
            2.0 * t
        } else {
            2.0 - 2.0 * t
        }
    }
    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        if x - x.floor() <= 0.5 {
            2.0
        } else {
            -2.0
        }
    }
    fn degree(&self) -> i64 {
        0
    }
}

impl MonotoneLaps for Tent {
    #[inline]
    fn lap(&self, x: f64) -> i64 {
        let m = x.floor();
        2 * m as i64 + i64::from(x - m > 0.5)
    }
}

/// Degree-two circle map made of two full affine branches, slope `1/p` on
/// `[0, p]` and `1/(1-p)` on `[p, 1]`. Lebesgue measure is invariant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBranchAffine {
    pub p: f64,
}

impl TwoBranchAffine {
    pub fn new(p: f64) -> Self {
        assert!(p > 0.0 && p < 1.0, "split point must lie in (0, 1)");
        Self { p }
    }
}

impl Lift for TwoBranchAffine {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let m = x.floor();
        let t = x - m;
        let y = if t <= self.p { t / self.p } else { 1.0 + (t - self.p) / (1.0 - self.p) };
        2.0 * m + y
    }
    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        if x - x.floor() <= self.p {
            1.0 / self.p
        } else {
            1.0 / (1.0 - self.p)
        }
    }
    fn degree(&self) -> i64 {
        2
    }
}

impl MonotoneLaps for TwoBranchAffine {
    #[inline]
    fn lap(&self, x: f64) -> i64 {
        let m = x.floor();
        2 * m as i64 + i64::from(x - m > self.p)
    }
}
