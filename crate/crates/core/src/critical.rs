//! Critical structure of bimodal degree-one lifts.

use serde::{Deserialize, Serialize};

use crate::circle::{self, CircleInterval};
use crate::error::{Error, Result};
use crate::lift::{Lift, MonotoneLaps, Precision};
use crate::roots;

/// Seed grid used to count sign changes of the derivative.
const SEED_GRID: usize = 4096;

/// Critical points of a bimodal lift and the other preimages of the
/// critical values.
///
/// Coordinates are lift coordinates with `0 <= c_plus < 1` and
/// `c_plus < c_minus < d_plus < c_plus + 1`, `c_minus - 1 < d_minus < c_plus`.
/// The lift decreases on `[c_plus, c_minus]` and increases on
/// `[c_minus, c_plus + 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalData {
    pub c_plus: f64,
    pub c_minus: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    /// Criticality orders, taken as given.
    pub ell_plus: f64,
    pub ell_minus: f64,
    pub value_plus: f64,
    pub value_minus: f64,
    pub tol: f64,
}

impl CriticalData {
    /// The decreasing interval `[c+, c-]`.
    pub fn decreasing_interval(&self) -> CircleInterval {
        CircleInterval { lo: self.c_plus, hi: self.c_minus }
    }

    /// `[c+, d+]`, flattened by the upper map.
    pub fn plateau_plus(&self) -> CircleInterval {
        CircleInterval { lo: self.c_plus, hi: self.d_plus }
    }

    /// `[d-, c-]`, flattened by the lower map.
    pub fn plateau_minus(&self) -> CircleInterval {
        CircleInterval { lo: self.d_minus, hi: self.c_minus }
    }

    /// Critical data of the lift conjugated by `x -> -x`.
    ///
    /// The roles swap: the new `c+` is `-c-` and the new `d+` is `-d-`,
    /// all moved by the integer that puts the new `c+` in `[0, 1)`.
    pub fn mirrored(&self) -> CriticalData {
        let c_plus = circle::reduce(-self.c_minus);
        let s = (c_plus + self.c_minus).round();
        CriticalData {
            c_plus,
            c_minus: -self.c_plus + s,
            d_plus: -self.d_minus + s,
            d_minus: -self.d_plus + s,
            ell_plus: self.ell_minus,
            ell_minus: self.ell_plus,
            value_plus: -self.value_minus + s,
            value_minus: -self.value_plus + s,
            tol: self.tol,
        }
    }
}

/// Locates the critical points by bisection on sign changes of the
/// derivative, then solves for `d+` and `d-` on the increasing branch.
pub fn locate_critical_points<L: Lift + ?Sized>(
    lift: &L,
    tol: f64,
    ell_plus: f64,
    ell_minus: f64,
) -> Result<CriticalData> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let step = 1.0 / SEED_GRID as f64;
    let d: Vec<f64> = (0..SEED_GRID).map(|i| lift.deriv(i as f64 * step)).collect();

    for i in 0..SEED_GRID {
        let j = (i + 1) % SEED_GRID;
        if d[i] == 0.0 && d[j] == 0.0 && lift.deriv((i as f64 + 0.5) * step) == 0.0 {
            return Err(Error::DegenerateCritical { at: i as f64 * step, width: step });
        }
    }

    // sign changes, skipping exact zeros
    let nonzero: Vec<usize> = (0..SEED_GRID).filter(|&i| d[i] != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::DegenerateCritical { at: 0.0, width: 1.0 });
    }
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for w in 0..nonzero.len() {
        let i = nonzero[w];
        let j = nonzero[(w + 1) % nonzero.len()];
        let (lo, mut hi) = (i as f64 * step, j as f64 * step);
        if hi <= lo {
            hi += 1.0;
        }
        if d[i] > 0.0 && d[j] < 0.0 {
            maxima.push((lo, hi));
        } else if d[i] < 0.0 && d[j] > 0.0 {
            minima.push((lo, hi));
        }
    }
    let changes = maxima.len() + minima.len();
    if maxima.len() != 1 || minima.len() != 1 {
        return Err(Error::NotBimodal { sign_changes: changes });
    }

    let refine = |(lo, hi): (f64, f64)| -> Result<f64> {
        let r = roots::bisect(|x| lift.deriv(x), lo, hi, tol)?;
        let (l, r2) = (lift.deriv(r - 2.0 * tol), lift.deriv(r + 2.0 * tol));
        if l == 0.0 || r2 == 0.0 {
            return Err(Error::DegenerateCritical { at: r, width: 4.0 * tol });
        }
        Ok(r)
    };
    let c_plus = circle::reduce(refine(maxima[0])?);
    let c_minus = circle::reduce_from(refine(minima[0])?, c_plus);
    if c_minus <= c_plus {
        return Err(Error::NotBimodal { sign_changes: changes });
    }

    let value_plus = lift.eval(c_plus);
    let value_minus = lift.eval(c_minus);
    let g = |x: f64| lift.eval(x);
    let d_plus = roots::invert_monotone(g, value_plus, c_minus, c_plus + 1.0, tol)?;
    let d_minus = roots::invert_monotone(g, value_minus, c_minus - 1.0, c_plus, tol)?;

    Ok(CriticalData {
        c_plus,
        c_minus,
        d_plus,
        d_minus,
        ell_plus,
        ell_minus,
        value_plus,
        value_minus,
        tol,
    })
}

/// Which monotone branch of the lift a conjugate point should lie on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `(c+, c-)`.
    Decreasing,
    /// `(c-, c+ + 1)`.
    Increasing,
}

/// A point `y != x` on `branch` with `f(y) = f(x)` on the circle.
///
/// Lift values are matched exactly first; the shifted values `f(x) -+ 1`
/// are only tried when that gives back `x` itself or nothing.
pub fn conjugate_point<L: Lift + ?Sized>(
    lift: &L,
    crit: &CriticalData,
    x: f64,
    branch: Branch,
) -> Result<f64> {
    let tol = crit.tol;
    let xl = circle::reduce_from(x, crit.c_plus);
    let v = lift.eval(xl);
    let (lo, hi) = match branch {
        Branch::Decreasing => (crit.c_plus, crit.c_minus),
        Branch::Increasing => (crit.c_minus, crit.c_plus + 1.0),
    };
    let (flo, fhi) = (lift.eval(lo), lift.eval(hi));
    let (min, max) = if flo <= fhi { (flo, fhi) } else { (fhi, flo) };
    for k in [0.0, -1.0, 1.0] {
        let target = v + k;
        if target < min || target > max {
            continue;
        }
        let y = roots::invert_monotone(|t| lift.eval(t), target, lo, hi, tol * 1e-3)?;
        if circle::dist(y, x) > 2.0 * tol {
            return Ok(circle::reduce(y));
        }
    }
    Err(Error::OutOfRange { value: v, lo: min, hi: max })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchwarzianReport {
    pub min: f64,
    pub max: f64,
    pub sign: Sign,
    pub samples: usize,
}

/// Samples the Schwarzian derivative `f'''/f' - 3/2 (f''/f')^2` with
/// central differences of the first derivative (step `h`), skipping points
/// within `radius` of any point in `exclude`.
pub fn schwarzian_diagnostic<L: Lift + ?Sized>(
    lift: &L,
    grid: usize,
    h: f64,
    exclude: &[f64],
    radius: f64,
) -> SchwarzianReport {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut samples = 0;
    let zero_tol = 1e-6;
    for i in 0..grid {
        let x = (i as f64 + 0.5) / grid as f64;
        if exclude.iter().any(|&c| circle::dist(x, c) < radius) {
            continue;
        }
        let d1 = lift.deriv(x);
        let dp = lift.deriv(x + h);
        let dm = lift.deriv(x - h);
        let d2 = (dp - dm) / (2.0 * h);
        let d3 = (dp - 2.0 * d1 + dm) / (h * h);
        let s = d3 / d1 - 1.5 * (d2 / d1) * (d2 / d1);
        min = min.min(s);
        max = max.max(s);
        samples += 1;
    }
    let sign = if samples == 0 {
        Sign::Zero
    } else if max < -zero_tol {
        Sign::Negative
    } else if min > zero_tol {
        Sign::Positive
    } else if min.abs() <= zero_tol && max.abs() <= zero_tol {
        Sign::Zero
    } else {
        Sign::Mixed
    };
    SchwarzianReport { min, max, sign, samples }
}

/// A bimodal lift together with its located critical data.
#[derive(Debug, Clone)]
pub struct BimodalMap<L> {
    pub lift: L,
    pub crit: CriticalData,
}

impl<L: Lift> BimodalMap<L> {
    pub fn new(lift: L, crit: CriticalData) -> Self {
        Self { lift, crit }
    }

    pub fn locate(lift: L, tol: f64, ell_plus: f64, ell_minus: f64) -> Result<Self> {
        let crit = locate_critical_points(&lift, tol, ell_plus, ell_minus)?;
        Ok(Self { lift, crit })
    }

    /// The interval where the map decreases.
    pub fn base_interval(&self) -> CircleInterval {
        self.crit.decreasing_interval()
    }
}

impl<L: Lift> Lift for BimodalMap<L> {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        self.lift.eval(x)
    }
    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        self.lift.deriv(x)
    }
    fn degree(&self) -> i64 {
        self.lift.degree()
    }
    fn precision(&self) -> Precision {
        self.lift.precision()
    }
}

impl<L: Lift> MonotoneLaps for BimodalMap<L> {
    #[inline]
    fn lap(&self, x: f64) -> i64 {
        let m = (x - self.crit.c_plus).floor();
        let y = x - m;
        let piece = if y <= self.crit.c_minus { 0 } else { 1 };
        2 * m as i64 + piece
    }
}
