//! Upper and lower maps and their rotation numbers.

use serde::{Deserialize, Serialize};

use crate::circle::CircleInterval;
use crate::critical::CriticalData;
use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::lift::{Lift, Precision};
use crate::roots;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

/// A closed real interval `[lo, hi]` known to contain some quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Bracket) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn neg(&self) -> Bracket {
        Bracket { lo: -self.hi, hi: -self.lo }
    }

    /// Fractions `p/q` with `q <= q_max` lying in the bracket.
    pub fn rationals_within(&self, q_max: u64) -> Vec<(i64, u64)> {
        let mut out = Vec::new();
        for q in 1..=q_max {
            let qf = q as f64;
            let first = (self.lo * qf).ceil() as i64;
            let last = (self.hi * qf).floor() as i64;
            for p in first..=last {
                if num_integer::gcd(p.unsigned_abs(), q) == 1 {
                    out.push((p, q));
                }
            }
        }
        out
    }
}

/// The upper (`Plus`) or lower (`Minus`) map: the lift with its graph
/// flattened across `[c+, d+]` at height `f(c+)`, respectively across
/// `[d-, c-]` at height `f(c-)`. Nondecreasing and of degree one.
#[derive(Debug, Clone)]
pub struct MonotoneLift<L> {
    pub base: L,
    pub side: Side,
    pub plateau: CircleInterval,
    pub plateau_value: f64,
}

pub fn build_bound_map<L: Lift>(base: L, crit: &CriticalData, side: Side) -> MonotoneLift<L> {
    let (plateau, plateau_value) = match side {
        Side::Plus => (crit.plateau_plus(), crit.value_plus),
        Side::Minus => (crit.plateau_minus(), crit.value_minus),
    };
    MonotoneLift { base, side, plateau, plateau_value }
}

impl<L: Lift> MonotoneLift<L> {
    /// Integer `m` and offset so that `x - m` lies in `[plateau.lo, plateau.lo + 1)`.
    #[inline]
    fn split(&self, x: f64) -> (f64, f64) {
        let m = (x - self.plateau.lo).floor();
        (m, x - m)
    }

    #[inline]
    pub fn on_plateau(&self, x: f64) -> bool {
        let (_, y) = self.split(x);
        y <= self.plateau.hi
    }

    /// Smallest `x` with `F(x) >= u`.
    pub fn lower_preimage(&self, u: f64) -> f64 {
        let (lo, hi) = self.preimage_bracket(u);
        roots::bisect_predicate(|x| self.eval(x) < u, lo, hi, 0.0).1
    }

    /// Largest `x` with `F(x) <= v`.
    pub fn upper_preimage(&self, v: f64) -> f64 {
        let (lo, hi) = self.preimage_bracket(v);
        roots::bisect_predicate(|x| self.eval(x) <= v, lo, hi, 0.0).0
    }

    // Points where F is below and above `u`, found by unit steps from the
    // guess `u - (F(0) - 0)`.
    fn preimage_bracket(&self, u: f64) -> (f64, f64) {
        let guess = u - self.eval(0.0);
        let mut lo = guess.floor() - 1.0;
        while self.eval(lo) >= u {
            lo -= 1.0;
        }
        let mut hi = lo + 1.0;
        while self.eval(hi) <= u {
            hi += 1.0;
        }
        (lo, hi)
    }

    /// Full preimage `F^{-1}([u, v])` of a lift interval.
    pub fn preimage_interval(&self, (u, v): (f64, f64)) -> (f64, f64) {
        (self.lower_preimage(u), self.upper_preimage(v))
    }

    /// `F^n(plateau)` for `n >= 1` is a point; for `n <= 0` the iterated
    /// preimage of the plateau, as a lift interval.
    pub fn plateau_iterate(&self, n: i64) -> (f64, f64) {
        if n >= 1 {
            let mut x = self.plateau_value;
            for _ in 1..n {
                x = self.eval(x);
            }
            return (x, x);
        }
        let mut iv = (self.plateau.lo, self.plateau.hi);
        for _ in 0..(-n) {
            iv = self.preimage_interval(iv);
        }
        iv
    }
}

impl<L: Lift> Lift for MonotoneLift<L> {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let (m, y) = self.split(x);
        if y <= self.plateau.hi {
            self.plateau_value + m
        } else {
            self.base.eval(x)
        }
    }

    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        if self.on_plateau(x) {
            0.0
        } else {
            self.base.deriv(x)
        }
    }

    fn precision(&self) -> Precision {
        self.base.precision()
    }
}

/// `F^n(x0)` for a degree-one lift, with the integer part accumulated
/// separately so that the fractional position keeps full precision.
pub fn iterate_split<L: Lift + ?Sized>(f: &L, x0: f64, n: u64) -> (f64, f64) {
    let mut whole = x0.floor();
    let mut x = x0 - whole;
    for _ in 0..n {
        let y = f.eval(x);
        let k = y.floor();
        x = y - k;
        whole += k;
    }
    (whole, x)
}

/// Rotation number of a nondecreasing degree-one lift, bracketed by
/// `|F^n(0) - n rho| < 1`.
pub fn rotation_number<L: Lift + ?Sized>(f: &L, n_iter: u64) -> Bracket {
    let n = n_iter.max(1);
    let (whole, frac) = iterate_split(f, 0.0, n);
    let nf = n as f64;
    // whole and frac are kept apart so that the division sees both; ends are
    // rounded outward
    Bracket { lo: ((whole - 1.0) / nf + frac / nf).next_down(), hi: ((whole + 1.0) / nf + frac / nf).next_up() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationInterval {
    pub rho_minus: Bracket,
    pub rho_plus: Bracket,
    pub n_iter: u64,
}

impl RotationInterval {
    pub fn width(&self) -> f64 {
        self.rho_minus.width().max(self.rho_plus.width())
    }

    /// Whether `rho- <= rho+` is consistent with the brackets.
    pub fn ordered(&self) -> bool {
        self.rho_minus.lo <= self.rho_plus.hi
    }
}

/// Both rotation numbers with `n = ceil(2 / width) + 1` iterations each, so
/// that brackets stay within `width` after outward rounding.
pub fn rotation_interval<L: Lift>(
    lift: &L,
    crit: &CriticalData,
    width: f64,
    mode: Mode,
) -> Result<RotationInterval> {
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!("bracket width must be positive, got {width}")));
    }
    let n_iter = (2.0 / width).ceil() as u64 + 1;
    let sides = [Side::Minus, Side::Plus];
    let r = exec::map_slice(mode, &sides, |&side| {
        rotation_number(&build_bound_map(lift, crit, side), n_iter)
    });
    Ok(RotationInterval { rho_minus: r[0], rho_plus: r[1], n_iter })
}

/// Checks one instance of the order relation between plateau iterates:
/// `F^i(P) < F^j(P) + k` exactly when `(i - j) rho < k`.
///
/// `rho` brackets the rotation number of `F`. Returns whether the two sides
/// agree.
pub fn order_witness<L: Lift>(
    f: &MonotoneLift<L>,
    rho: Bracket,
    i: i64,
    j: i64,
    k: i64,
    tol: f64,
) -> Result<bool> {
    let a = f.plateau_iterate(i);
    let b = f.plateau_iterate(j);
    let b = (b.0 + k as f64, b.1 + k as f64);
    let lhs = a.1 < b.0;
    let same = i == j && k == 0;
    if !same && !(a.1 + tol < b.0) && !(b.1 + tol < a.0) {
        return Err(Error::PlateauCollision { i, j });
    }
    let d = (i - j) as f64;
    let kf = k as f64;
    let (low, high) = if d >= 0.0 { (d * rho.lo, d * rho.hi) } else { (d * rho.hi, d * rho.lo) };
    let rhs = if high < kf {
        true
    } else if low >= kf {
        false
    } else {
        return Err(Error::RationalDetected { lo: rho.lo, hi: rho.hi, certified: 0 });
    };
    Ok(lhs == rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::locate_critical_points;
    use crate::lift::{ArnoldLift, RigidRotation};

    fn arnold(a: f64, omega: f64) -> (ArnoldLift, CriticalData) {
        let f = ArnoldLift::new(a, omega);
        let c = locate_critical_points(&f, 1e-12, 2.0, 2.0).unwrap();
        (f, c)
    }

    #[test]
    fn plateau_and_outside_values() {
        let (f, c) = arnold(0.25, 0.0);
        let up = build_bound_map(&f, &c, Side::Plus);
        let x = 0.5 * (c.c_plus + c.d_plus);
        assert_eq!(up.eval(x), f.eval(c.c_plus));
        assert_eq!(up.eval(x + 3.0), f.eval(c.c_plus) + 3.0);
        assert_eq!(up.eval(c.d_plus + 0.01), f.eval(c.d_plus + 0.01));
        let down = build_bound_map(&f, &c, Side::Minus);
        let y = 0.5 * (c.d_minus + c.c_minus);
        assert_eq!(down.eval(y), f.eval(c.c_minus));
        assert_eq!(down.eval(c.c_minus + 0.01), f.eval(c.c_minus + 0.01));
    }

    #[test]
    fn bound_maps_are_nondecreasing() {
        let (f, c) = arnold(1.0, 0.2);
        for side in [Side::Plus, Side::Minus] {
            let m = build_bound_map(&f, &c, side);
            let mut prev = m.eval(-1.0);
            for i in 1..=20_000 {
                let x = -1.0 + 2.0 * i as f64 / 20_000.0;
                let y = m.eval(x);
                assert!(y >= prev, "{side:?} decreases at {x}");
                prev = y;
            }
        }
    }

    #[test]
    fn rigid_rotation_bracket() {
        let r = rotation_number(&RigidRotation { rho: 0.381966 }, 1_000_000);
        assert!(r.contains(0.381966));
        assert!(r.width() <= 2e-6 + 1e-15);
    }

    #[test]
    fn odd_symmetry_gives_symmetric_interval() {
        for a in [0.2, 0.5, 0.9] {
            let (f, c) = arnold(a, 0.0);
            let r = rotation_interval(&f, &c, 1e-5, Mode::Sequential).unwrap();
            assert!(r.rho_minus.overlaps(&r.rho_plus.neg()), "{a}: {r:?}");
        }
    }

    #[test]
    fn interval_is_nondegenerate_at_large_amplitude() {
        let (f, c) = arnold(1.0, 0.2);
        let r = rotation_interval(&f, &c, 1e-6, Mode::Parallel).unwrap();
        assert!(r.rho_plus.lo > r.rho_minus.hi);
        assert!(r.width() <= 1e-6 + 1e-15);
    }

    #[test]
    fn upper_rotation_number_is_monotone_in_omega() {
        let a = 0.8;
        let mut prev: Option<Bracket> = None;
        for i in 0..10 {
            let (f, c) = arnold(a, 0.1 * i as f64);
            let r = rotation_number(&build_bound_map(&f, &c, Side::Plus), 100_000);
            if let Some(p) = prev {
                assert!(r.hi >= p.lo);
            }
            prev = Some(r);
        }
    }

    #[test]
    fn halving_width_keeps_brackets_overlapping() {
        let (f, c) = arnold(0.7, 0.31);
        let m = build_bound_map(&f, &c, Side::Plus);
        let mut prev = rotation_number(&m, 1000);
        for n in [2000, 4000, 8000, 16000] {
            let r = rotation_number(&m, n);
            assert!(r.overlaps(&prev));
            prev = r;
        }
    }

    #[test]
    fn preimages_invert_the_bound_map() {
        let (f, c) = arnold(0.6, 0.1);
        let m = build_bound_map(&f, &c, Side::Plus);
        for u in [-0.7, 0.1, 0.33, 1.9] {
            let x = m.lower_preimage(u);
            assert!((m.eval(x) - u).abs() < 1e-12);
        }
        // the plateau value pulls back to the whole plateau; the left end is
        // only resolved to sqrt(eps) since f is quadratic at c+
        let (lo, hi) = m.preimage_interval((c.value_plus, c.value_plus));
        assert!((lo - c.c_plus).abs() < 1e-7 && (hi - c.d_plus).abs() < 1e-12);
    }

    #[test]
    fn order_witness_trivial_cases() {
        let (f, c) = arnold(0.7, 0.31);
        let m = build_bound_map(&f, &c, Side::Plus);
        let rho = rotation_number(&m, 1_000_000);
        assert!(order_witness(&m, rho, 3, 3, 1, 1e-12).unwrap());
        assert!(order_witness(&m, rho, 0, 0, 0, 1e-12).unwrap());
    }

    #[test]
    fn rationals_in_bracket() {
        let b = Bracket::new(0.3332, 0.3334);
        assert_eq!(b.rationals_within(10), vec![(1, 3)]);
        assert!(Bracket::new(0.3819, 0.38197).rationals_within(12).is_empty());
    }
}
