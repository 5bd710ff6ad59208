//! Lifts of circle maps: the Arnol'd family, tabulated families and a few
//! reference maps.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Working precision of a map evaluation.
///
/// Only IEEE binary64 is implemented; the value is carried so that
/// thresholds like "ten machine epsilons" are stated against it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precision {
    pub bits: u32,
}

impl Precision {
    pub const BINARY64: Precision = Precision { bits: 53 };

    pub fn new(bits: u32) -> Result<Self> {
        if bits != 53 {
            return Err(Error::UnsupportedPrecision { bits });
        }
        Ok(Self { bits })
    }

    /// Unit roundoff times two (machine epsilon).
    pub fn eps(&self) -> f64 {
        (2.0f64).powi(1 - self.bits as i32)
    }
}

impl Default for Precision {
    fn default() -> Self {
        Self::BINARY64
    }
}

/// A continuous lift `F: R -> R` with `F(x + 1) = F(x) + degree`.
pub trait Lift: Send + Sync {
    fn eval(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;

    fn degree(&self) -> i64 {
        1
    }

    fn precision(&self) -> Precision {
        Precision::BINARY64
    }

    /// The induced circle map, `pi(F(x))`.
    fn eval_circle(&self, x: f64) -> f64 {
        crate::circle::reduce(self.eval(x))
    }
}

impl<L: Lift + ?Sized> Lift for &L {
    fn eval(&self, x: f64) -> f64 {
        (**self).eval(x)
    }
    fn deriv(&self, x: f64) -> f64 {
        (**self).deriv(x)
    }
    fn degree(&self) -> i64 {
        (**self).degree()
    }
    fn precision(&self) -> Precision {
        (**self).precision()
    }
}

impl<L: Lift + ?Sized> Lift for Box<L> {
    fn eval(&self, x: f64) -> f64 {
        (**self).eval(x)
    }
    fn deriv(&self, x: f64) -> f64 {
        (**self).deriv(x)
    }
    fn degree(&self) -> i64 {
        (**self).degree()
    }
    fn precision(&self) -> Precision {
        (**self).precision()
    }
}

/// Labels the maximal monotone pieces of a lift.
///
/// Two lift points with equal labels lie in one piece on which the lift is
/// strictly monotone. Labels of `x` and `x + 1` differ.
pub trait MonotoneLaps {
    fn lap(&self, x: f64) -> i64;
}

/// `x + a sin(2 pi x) + omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArnoldLift {
    pub a: f64,
    pub omega: f64,
}

impl ArnoldLift {
    pub fn new(a: f64, omega: f64) -> Self {
        Self { a, omega }
    }

    /// Second derivative, closed form.
    pub fn deriv2(&self, x: f64) -> f64 {
        -self.a * TAU * TAU * (TAU * frac(x)).sin()
    }

    /// Third derivative, closed form.
    pub fn deriv3(&self, x: f64) -> f64 {
        -self.a * TAU * TAU * TAU * (TAU * frac(x)).cos()
    }
}

impl Lift for ArnoldLift {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        x + (self.a * (TAU * frac(x)).sin() + self.omega)
    }

    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        1.0 + self.a * TAU * (TAU * frac(x)).cos()
    }
}

// The trigonometric part only sees the fractional part, so that lifts far
// from the origin are evaluated as accurately as their first period.
#[inline]
fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Rigid rotation `x + rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidRotation {
    pub rho: f64,
}

impl Lift for RigidRotation {
    fn eval(&self, x: f64) -> f64 {
        x + self.rho
    }
    fn deriv(&self, _x: f64) -> f64 {
        1.0
    }
}

impl MonotoneLaps for RigidRotation {
    fn lap(&self, x: f64) -> i64 {
        x.floor() as i64
    }
}

/// Conjugate of a lift by the reflection `x -> -x`.
///
/// Swaps the roles of the two critical points: the upper map of the mirror
/// is the reflected lower map of the original.
#[derive(Debug, Clone, Copy)]
pub struct Mirrored<L>(pub L);

impl<L: Lift> Lift for Mirrored<L> {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        -self.0.eval(-x)
    }
    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        self.0.deriv(-x)
    }
    fn degree(&self) -> i64 {
        self.0.degree()
    }
    fn precision(&self) -> Precision {
        self.0.precision()
    }
}

/// Periodic monotone-cubic (PCHIP) interpolant through samples of a
/// degree-one lift on `[0, 1]`.
///
/// Nodal slopes use the Fritsch–Butland harmonic mean and are zeroed where
/// the data changes direction, so the interpolant is monotone wherever the
/// samples are, and every turning point of the data is a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableLift {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl TableLift {
    /// `xs` must start at 0, end at 1 and be strictly increasing, and
    /// `ys[last] = ys[0] + 1`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(Error::InvalidParameter("table needs at least 3 matching samples".into()));
        }
        if xs[0] != 0.0 || xs[n - 1] != 1.0 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "table abscissae must increase strictly from 0 to 1".into(),
            ));
        }
        if ((ys[n - 1] - ys[0]) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("table must satisfy F(1) = F(0) + 1".into()));
        }
        let m = n - 1; // number of segments
        let h: Vec<f64> = (0..m).map(|k| xs[k + 1] - xs[k]).collect();
        let delta: Vec<f64> = (0..m).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut slopes = vec![0.0; n];
        for k in 0..m {
            // node k sits between segment k-1 (wrapped) and segment k
            let (hp, dp) = if k == 0 { (h[m - 1], delta[m - 1]) } else { (h[k - 1], delta[k - 1]) };
            let (hn, dn) = (h[k], delta[k]);
            slopes[k] = if dp * dn <= 0.0 {
                0.0
            } else {
                let w1 = 2.0 * hn + hp;
                let w2 = hn + 2.0 * hp;
                (w1 + w2) / (w1 / dp + w2 / dn)
            };
        }
        slopes[m] = slopes[0];
        Ok(Self { xs, ys, slopes })
    }

    /// Samples `lift` at `n + 1` equally spaced nodes of `[0, 1]`.
    pub fn from_lift<L: Lift>(lift: &L, n: usize) -> Result<Self> {
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let mut ys: Vec<f64> = xs.iter().map(|&x| lift.eval(x)).collect();
        ys[n] = ys[0] + 1.0;
        Self::new(xs, ys)
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    #[inline]
    fn locate(&self, t: f64) -> usize {
        // index k with xs[k] <= t < xs[k+1]
        match self.xs.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(k) => k.min(self.xs.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    fn hermite(&self, t: f64) -> (f64, f64) {
        let k = self.locate(t);
        let h = self.xs[k + 1] - self.xs[k];
        let s = (t - self.xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.slopes[k], self.slopes[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let deriv = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
        (value, deriv)
    }
}

impl Lift for TableLift {
    fn eval(&self, x: f64) -> f64 {
        let n = x.floor();
        self.hermite(x - n).0 + n
    }
    fn deriv(&self, x: f64) -> f64 {
        self.hermite(x - x.floor()).1
    }
}
