//! The frame around the decreasing interval: periodic anchors next to the
//! critical points, the arcs built from them, the primary decomposition of
//! the left arm, and escape/covering diagnostics.

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cf::{cf_expand, ContinuedFraction};
use crate::circle::{self, CircleInterval};
use crate::conditions::MAX_ORBIT;
use crate::critical::{conjugate_point, Branch, CriticalData};
use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::inducing::{first_entry, Dynamics};
use crate::lift::{Lift, Mirrored};
use crate::roots;
use crate::rotation::{build_bound_map, Side};

/// Largest acceptable `d(f^q(b), b)` for the periodic anchor.
pub const PERIODICITY_TOL: f64 = 1e-9;

/// One side of the frame, in lift coordinates near that side's critical
/// point. For the upper side: `a_l = [a, c+]`, `a_r = [b, d+]`,
/// `core = [c+, b]`, `hat = [a, d+]`. The lower side is the mirror image:
/// `a_l = [d-, b]`, `a_r = [c-, a]`, `core = [b, c-]`, `hat = [d-, a]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideFrame {
    pub a: f64,
    pub b: f64,
    pub period: u64,
    pub periodicity_residual: f64,
    pub a_l: CircleInterval,
    pub a_r: CircleInterval,
    pub core: CircleInterval,
    pub hat: CircleInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFrame {
    pub m0: usize,
    pub plus: SideFrame,
    pub minus: SideFrame,
    /// `[a+, a-]`.
    pub a: CircleInterval,
    pub a_hat: CircleInterval,
    pub margin: f64,
}

fn invalid(m0: usize, reason: impl Into<String>) -> Error {
    Error::FrameInvalid { m0, reason: reason.into() }
}

fn iterate<L: Lift + ?Sized>(f: &L, x: f64, n: u64) -> f64 {
    let mut y = x;
    for _ in 0..n {
        y = f.eval(y);
    }
    y
}

// Upper-side frame for an arbitrary bimodal lift.
fn upper_side<L: Lift>(lift: &L, crit: &CriticalData, cf: &ContinuedFraction, m0: usize) -> Result<SideFrame> {
    if m0 == 0 {
        return Err(invalid(m0, "M0 must be at least 1"));
    }
    if 2 * m0 > cf.k_max {
        return Err(invalid(m0, format!("q_{} is not certified (k_max = {})", 2 * m0, cf.k_max)));
    }
    let q = cf.q_u64(2 * m0 as i64).filter(|&q| q <= MAX_ORBIT).ok_or_else(|| invalid(m0, "period too long"))?;
    let q_odd = cf.q_u64(2 * m0 as i64 - 1).ok_or_else(|| invalid(m0, "period too long"))?;
    let q_base = cf.q_u64(2 * m0 as i64 - 2).ok_or_else(|| invalid(m0, "period too long"))?;
    let (cp, dp) = (crit.c_plus, crit.d_plus);

    let fp = build_bound_map(lift, crit, Side::Plus);
    let left_of_c = |x: f64| x - (x - cp).ceil();
    let (w_lo, w_hi) = fp.plateau_iterate(-(q as i64));
    let shift = w_hi - left_of_c(w_hi);
    let (w_lo, w_hi) = (w_lo - shift, w_hi - shift);
    // domain of the conjugacy: [f+^{-q_{2M0-2}}(c+), c+]
    let mut edge = cp;
    for _ in 0..q_base {
        edge = fp.upper_preimage(edge);
    }
    let edge = left_of_c(edge - 1e-300).min(cp);
    if w_lo < edge {
        return Err(invalid(m0, "preimage of the plateau leaves the domain of the conjugacy"));
    }

    let psi = |x: f64| -> Result<f64> {
        let y = conjugate_point(lift, crit, x, Branch::Increasing)?;
        Ok(circle::reduce_from(y, crit.c_minus))
    };
    let (p_lo, p_hi) = (psi(w_lo)?, psi(w_hi)?);
    let (p_lo, p_hi) = (p_lo.min(p_hi), p_lo.max(p_hi));
    let m = (iterate(lift, 0.5 * (p_lo + p_hi), q) - cp).floor();
    let g = |x: f64| iterate(lift, x, q) - m - x;
    let (u, v) = roots::bisect_bracket(g, p_lo, p_hi, 0.0)
        .map_err(|_| invalid(m0, "no fixed point of f^q on the conjugated preimage"))?;
    let b = if g(u).abs() <= g(v).abs() { u } else { v };
    let residual = circle::dist(iterate(lift, b, q), b);
    if residual > PERIODICITY_TOL {
        return Err(invalid(m0, format!("periodicity residual {residual:e}")));
    }
    let a = cp - circle::reduce(cp - iterate(lift, b, q_odd));

    if !(b > cp && b < dp) {
        return Err(invalid(m0, "A_R is not inside the upper plateau"));
    }
    if a <= dp - 1.0 {
        return Err(invalid(m0, "A_L meets the upper plateau"));
    }
    if a < crit.d_minus {
        return Err(invalid(m0, "A_L is not inside the lower plateau"));
    }
    // a is itself q-periodic, so f^q(a) lands on a up to rounding
    let ab = CircleInterval { lo: a + PERIODICITY_TOL, hi: b - PERIODICITY_TOL };
    let mut y = a;
    for n in 1..=q {
        y = lift.eval(y);
        if ab.contains_interior(y) {
            return Err(invalid(m0, format!("f^{n}(a) falls inside (a, b)")));
        }
    }
    Ok(SideFrame {
        a,
        b,
        period: q,
        periodicity_residual: residual,
        a_l: CircleInterval { lo: a, hi: cp },
        a_r: CircleInterval { lo: b, hi: dp },
        core: CircleInterval { lo: cp, hi: b },
        hat: CircleInterval { lo: a, hi: dp },
    })
}

/// Builds the frame at level `m0`. `cf_plus` and `cf_minus` expand the upper
/// and lower rotation numbers; the lower side is built as the upper side of
/// the mirrored map. `margin` is the fraction of the room left inside the
/// plateaus by which `A` is widened to `Â`.
pub fn build_frame<L: Lift>(
    lift: &L,
    crit: &CriticalData,
    cf_plus: &ContinuedFraction,
    cf_minus: &ContinuedFraction,
    m0: usize,
    margin: f64,
) -> Result<DecompositionFrame> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidParameter(format!("margin must lie in [0, 1), got {margin}")));
    }
    let plus = upper_side(lift, crit, cf_plus, m0)?;
    let mcrit = crit.mirrored();
    let mcf = cf_expand(cf_minus.source_bracket.neg())?;
    let mm = upper_side(&Mirrored(lift), &mcrit, &mcf, m0)?;
    // -x in mirrored coordinates, moved by the integer that takes -c+' to c-
    let s = (crit.c_minus + mcrit.c_plus).round();
    let back = |iv: CircleInterval| {
        let r = iv.mirrored();
        CircleInterval { lo: r.lo + s, hi: r.hi + s }
    };
    let minus = SideFrame {
        a: -mm.a + s,
        b: -mm.b + s,
        period: mm.period,
        periodicity_residual: mm.periodicity_residual,
        a_l: back(mm.a_r),
        a_r: back(mm.a_l),
        core: back(mm.core),
        hat: back(mm.hat),
    };
    if minus.a - plus.a >= 1.0 {
        return Err(invalid(m0, "A = A+_L u I u A-_R is not a proper arc"));
    }
    let a = CircleInterval { lo: plus.a, hi: minus.a };
    let a_hat = CircleInterval {
        lo: plus.a - margin * (plus.a - crit.d_minus),
        hi: minus.a + margin * (crit.d_plus - minus.a),
    };
    Ok(DecompositionFrame { m0, plus, minus, a, a_hat, margin })
}

/// Smallest `M0` in `1..=m0_max` whose frame passes all checks.
pub fn select_frame<L: Lift>(
    lift: &L,
    crit: &CriticalData,
    cf_plus: &ContinuedFraction,
    cf_minus: &ContinuedFraction,
    m0_max: usize,
    margin: f64,
) -> Result<DecompositionFrame> {
    let mut last = invalid(0, "no level tried");
    for m0 in 1..=m0_max.max(1) {
        match build_frame(lift, crit, cf_plus, cf_minus, m0, margin) {
            Ok(f) => return Ok(f),
            Err(e) => last = e,
        }
    }
    Err(last)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughInterval {
    pub k: usize,
    pub l: u64,
    pub order: u64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryDecomposition {
    /// Sorted along `A+_L`.
    pub rough: Vec<RoughInterval>,
    /// Complementary components between `a+` and the last rough interval.
    pub gaps: Vec<CircleInterval>,
    /// What is left between the last rough interval and `c+`.
    pub tail: CircleInterval,
    /// `max |T| / |J|` over gaps `T` whose right neighbour is the rough `J`.
    pub eta: f64,
    pub orders_monotone: bool,
    pub inside_frame: bool,
    /// First level `k` that could not be computed, if the cap was not reached.
    pub exhausted_at: Option<usize>,
}

/// The intervals `f+^{-(q_{2k} + l q_{2k+1})}(I+)` for `M0 <= k < M0 + k_cap`
/// and `0 <= l < a_{2k+2}`, placed just left of `c+`, with the gaps between
/// them.
pub fn primary_decomposition<L: Lift>(
    lift: &L,
    crit: &CriticalData,
    cf_plus: &ContinuedFraction,
    frame: &DecompositionFrame,
    k_cap: usize,
) -> Result<PrimaryDecomposition> {
    let fp = build_bound_map(lift, crit, Side::Plus);
    let cp = crit.c_plus;
    let mut rough = Vec::new();
    let mut exhausted_at = None;
    for k in frame.m0..frame.m0 + k_cap {
        if 2 * k + 2 > cf_plus.k_max {
            exhausted_at = Some(k);
            break;
        }
        let (q0, q1) = (cf_plus.q_u64(2 * k as i64), cf_plus.q_u64(2 * k as i64 + 1));
        let a = cf_plus.quotient(2 * k + 2).to_u64();
        let (Some(q0), Some(q1), Some(a)) = (q0, q1, a) else {
            exhausted_at = Some(k);
            break;
        };
        if q0.saturating_add(a.saturating_sub(1).saturating_mul(q1)) > MAX_ORBIT {
            exhausted_at = Some(k);
            break;
        }
        // I_{k,l+1} = f+^{-q_{2k+1}}(I_{k,l})
        let mut iv = fp.plateau_iterate(-(q0 as i64));
        for l in 0..a {
            if l > 0 {
                for _ in 0..q1 {
                    iv = fp.preimage_interval(iv);
                }
            }
            let shift = (iv.1 - cp).ceil();
            rough.push(RoughInterval { k, l, order: q0 + l * q1, lo: iv.0 - shift, hi: iv.1 - shift });
        }
    }
    if rough.is_empty() {
        return Err(Error::PrecisionExhausted { level: frame.m0 });
    }
    rough.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    let orders_monotone = rough.windows(2).all(|w| w[0].order <= w[1].order && w[0].hi <= w[1].lo);
    let inside_frame = rough.iter().all(|r| r.lo >= frame.plus.a && r.hi < cp);

    let mut gaps = Vec::new();
    let mut eta: f64 = 0.0;
    let mut cursor = frame.plus.a;
    for r in &rough {
        if r.lo > cursor {
            gaps.push(CircleInterval { lo: cursor, hi: r.lo });
            eta = eta.max((r.lo - cursor) / (r.hi - r.lo));
        }
        cursor = cursor.max(r.hi);
    }
    let tail = CircleInterval { lo: cursor, hi: cp };
    Ok(PrimaryDecomposition { rough, gaps, tail, eta, orders_monotone, inside_frame, exhausted_at })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub samples: usize,
    pub seed: u64,
    pub n_cap: u32,
    /// `(n, lambda{N_A > n})` for every `n` with a nonzero count.
    pub tail: Vec<(u32, f64)>,
    pub no_entry: usize,
    /// Fit of `ln lambda{N_A > n}` against `n` over `fit_range`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub kappa: f64,
    pub fit_range: (u32, u32),
    /// Least `N` with `f^N(I)` covering the circle.
    pub cover_n: Option<u32>,
    pub cover_length: f64,
}

/// Points counted in the last bin used for the tail fit.
pub const MIN_TAIL_COUNT: usize = 20;

/// Monte Carlo escape tail of the first entry to `A` from outside it, and the
/// covering time of `interval` by image growth.
#[allow(clippy::too_many_arguments)]
pub fn tail_and_cover<S: Dynamics>(
    f: &S,
    crit: &CriticalData,
    frame: &DecompositionFrame,
    n_cap: u32,
    interval: &CircleInterval,
    samples: usize,
    seed: u64,
    mode: Mode,
) -> TailReport {
    let outside = 1.0 - frame.a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..samples).map(|_| frame.a.hi + outside * rng.random::<f64>()).collect();
    let times = exec::map_slice(mode, &xs, |&x| first_entry(f, x, &frame.a, n_cap, 0.0).map(|e| e.n).ok());
    let no_entry = times.iter().filter(|t| t.is_none()).count();
    let max_n = times.iter().flatten().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max_n as usize + 2];
    for t in times.iter().flatten() {
        counts[*t as usize] += 1;
    }
    // survivors beyond n
    let mut tail = Vec::new();
    let mut alive = samples;
    let mut fit_end = 0;
    for (n, c) in counts.iter().enumerate() {
        alive -= c;
        let surv = alive;
        if surv == 0 {
            break;
        }
        tail.push((n as u32, outside * surv as f64 / samples as f64));
        if surv >= MIN_TAIL_COUNT {
            fit_end = n as u32;
        }
    }
    let pts: Vec<(f64, f64)> =
        tail.iter().filter(|(n, _)| *n >= 1 && *n <= fit_end).map(|&(n, t)| (n as f64, t.ln())).collect();
    let (slope, intercept, r_squared) = linear_fit(&pts);
    let (cover_n, cover_length) = cover_time(f, crit, interval, n_cap);
    TailReport {
        samples,
        seed,
        n_cap,
        tail,
        no_entry,
        slope,
        intercept,
        r_squared,
        kappa: (-slope).exp(),
        fit_range: (1, fit_end),
        cover_n,
        cover_length,
    }
}

/// Least squares line through `pts`: `(slope, intercept, R^2)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Image of the lift interval `[lo, hi]`: endpoint values and the values at
/// critical points inside.
pub fn image_hull<L: Lift + ?Sized>(f: &L, crit: &CriticalData, lo: f64, hi: f64) -> (f64, f64) {
    let (mut min, mut max) = (f.eval(lo).min(f.eval(hi)), f.eval(lo).max(f.eval(hi)));
    for c in [crit.c_plus, crit.c_minus] {
        let mut x = c + (lo - c).ceil();
        while x <= hi {
            let v = f.eval(x);
            min = min.min(v);
            max = max.max(v);
            x += 1.0;
        }
    }
    (min, max)
}

/// Least `n <= n_cap` with `f^n(interval)` of lift length at least one.
pub fn cover_time<L: Lift + ?Sized>(f: &L, crit: &CriticalData, interval: &CircleInterval, n_cap: u32) -> (Option<u32>, f64) {
    let (mut lo, mut hi) = (interval.lo, interval.hi);
    for n in 0..=n_cap {
        if hi - lo >= 1.0 {
            return (Some(n), hi - lo);
        }
        let (a, b) = image_hull(f, crit, lo, hi);
        let shift = a.floor();
        lo = a - shift;
        hi = b - shift;
    }
    (None, hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::cf_expand;
    use crate::critical::{locate_critical_points, BimodalMap};
    use crate::lift::ArnoldLift;
    use crate::rotation::{rotation_number, Bracket};
    use num_bigint::{BigInt, BigUint};

    const DESK_A: f64 = 0.7743020188703957;

    fn desk() -> (BimodalMap<ArnoldLift>, ContinuedFraction, ContinuedFraction) {
        let m = BimodalMap::locate(ArnoldLift::new(DESK_A, 0.0), 1e-13, 2.0, 2.0).unwrap();
        let rp = rotation_number(&build_bound_map(&m.lift, &m.crit, Side::Plus), 10_000_000);
        let rm = rotation_number(&build_bound_map(&m.lift, &m.crit, Side::Minus), 10_000_000);
        (m, cf_expand(rp).unwrap(), cf_expand(rm).unwrap())
    }

    #[test]
    fn desk_frame_is_valid() {
        let (m, cp, cm) = desk();
        let fr = build_frame(&m.lift, &m.crit, &cp, &cm, 1, 0.1).unwrap();
        let c = &m.crit;
        assert!(fr.plus.periodicity_residual <= PERIODICITY_TOL);
        assert!(fr.minus.periodicity_residual <= PERIODICITY_TOL);
        assert!(fr.plus.a < c.c_plus && c.c_plus < fr.plus.b && fr.plus.b < c.d_plus);
        assert!(fr.minus.a > c.c_minus && c.c_minus > fr.minus.b && fr.minus.b > c.d_minus);
        assert!(fr.a.lo < c.c_plus && fr.a.hi > c.c_minus && fr.a.len() < 1.0);
        assert!(fr.a_hat.lo < fr.a.lo && fr.a_hat.lo >= c.d_minus);
        assert!(fr.a_hat.hi > fr.a.hi && fr.a_hat.hi <= c.d_plus);
        // the anchor is periodic for f itself
        let q = fr.plus.period;
        assert_eq!(q, cp.q_u64(2).unwrap());
        assert!(circle::dist(iterate(&m.lift, fr.plus.b, q), fr.plus.b) < 1e-9);
        // symmetric map: the lower side mirrors the upper one
        assert!((fr.minus.a - (1.0 - fr.plus.a)).abs() < 1e-9);
    }

    #[test]
    fn wrong_combinatorics_give_invalid_frame() {
        let (m, _, cm) = desk();
        // golden-mean quotients do not describe this map
        let one = BigUint::from(1u32);
        let bogus = ContinuedFraction::from_quotients(BigInt::from(0), vec![one; 8], Bracket::new(0.6, 0.7));
        let r = build_frame(&m.lift, &m.crit, &bogus, &cm, 1, 0.1);
        assert!(matches!(r, Err(Error::FrameInvalid { .. })), "{r:?}");
    }

    #[test]
    fn primary_decomposition_orders_and_gaps() {
        let (m, cp, cm) = desk();
        let fr = build_frame(&m.lift, &m.crit, &cp, &cm, 1, 0.1).unwrap();
        let pd = primary_decomposition(&m.lift, &m.crit, &cp, &fr, 8).unwrap();
        assert!(pd.orders_monotone && pd.inside_frame);
        assert!(!pd.rough.is_empty());
        assert!(pd.eta < 1.0, "eta {}", pd.eta);
        // rough intervals and gaps tile [a+, tail.lo]
        let total: f64 = pd.rough.iter().map(|r| r.hi - r.lo).sum::<f64>() + pd.gaps.iter().map(|g| g.len()).sum::<f64>();
        assert!((total - (pd.tail.lo - fr.plus.a)).abs() < 1e-12);
    }

    #[test]
    fn tail_decays_and_circle_is_covered() {
        let (m, cp, cm) = desk();
        let fr = build_frame(&m.lift, &m.crit, &cp, &cm, 1, 0.1).unwrap();
        let r = tail_and_cover(&m, &m.crit, &fr, 10_000, &m.base_interval(), 20_000, 7, Mode::Parallel);
        assert!(r.tail.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(r.slope < 0.0);
        assert!(r.cover_n.is_some());
        assert_eq!(r.no_entry, 0);
    }

    #[test]
    fn cover_time_of_doubling_interval() {
        use crate::harness::Doubling;
        let crit = locate_critical_points(&ArnoldLift::new(0.5, 0.0), 1e-12, 2.0, 2.0).unwrap();
        // no critical points of x -> 2x lie in [0.1, 0.1 + 2^-5]: c+- of the
        // Arnol'd data are far away, so only endpoints matter
        let iv = CircleInterval::new(0.1, 0.1 + 1.0 / 32.0).unwrap();
        let (n, len) = cover_time(&Doubling, &crit, &iv, 100);
        assert_eq!(n, Some(5));
        assert!(len >= 1.0);
    }
}
