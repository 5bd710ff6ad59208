//! Bracketing root finders. Everything here is bisection: the maps are only
//! assumed continuous and monotone on the brackets we hand in.

use crate::error::{Error, Result};

/// Default absolute tolerance for root finding in binary64.
pub const DEFAULT_TOL: f64 = 1e-12;

const MAX_STEPS: usize = 2000;

/// Root of `g` in `[lo, hi]` where `g(lo)` and `g(hi)` have opposite signs.
///
/// Stops once the bracket is narrower than `tol` or cannot be split further
/// in floating point. Returns the midpoint of the final bracket.
pub fn bisect<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (a, b) = bisect_bracket(g, lo, hi, tol)?;
    Ok(0.5 * (a + b))
}

/// Like [`bisect`] but returns the final bracket `(a, b)` with
/// `sign g(a) == sign g(lo)`.
pub fn bisect_bracket<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    let (mut a, mut b) = (lo, hi);
    let ga = g(a);
    let gb = g(b);
    if ga == 0.0 {
        return Ok((a, a));
    }
    if gb == 0.0 {
        return Ok((b, b));
    }
    if (ga > 0.0) == (gb > 0.0) || ga.is_nan() || gb.is_nan() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let left_positive = ga > 0.0;
    for _ in 0..MAX_STEPS {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return Ok((m, m));
        }
        if (gm > 0.0) == left_positive {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((a, b))
}

/// Boundary of a predicate that is true at `inside` and false at `outside`.
///
/// Returns `(last_true, first_false)` once they are within `tol` or adjacent
/// floats. The predicate need not be monotone; the result is some boundary
/// point between the two seeds.
pub fn bisect_predicate<P: FnMut(f64) -> bool>(
    mut pred: P,
    inside: f64,
    outside: f64,
    tol: f64,
) -> (f64, f64) {
    let (mut a, mut b) = (inside, outside);
    for _ in 0..MAX_STEPS {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if pred(m) {
            a = m;
        } else {
            b = m;
        }
    }
    (a, b)
}

/// Solves `h(x) = target` for nondecreasing `h` on `[lo, hi]`.
///
/// Returns [`Error::OutOfRange`] if `target` lies outside `[h(lo), h(hi)]`.
pub fn invert_monotone<H: Fn(f64) -> f64>(h: H, target: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let hl = h(lo);
    let hh = h(hi);
    let increasing = hh >= hl;
    let (min, max) = if increasing { (hl, hh) } else { (hh, hl) };
    if target < min || target > max {
        return Err(Error::OutOfRange { value: target, lo: min, hi: max });
    }
    if target == hl {
        return Ok(lo);
    }
    if target == hh {
        return Ok(hi);
    }
    bisect(|x| h(x) - target, lo, hi, tol)
}
