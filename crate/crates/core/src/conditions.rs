//! Critical orbits, the summability series of the two critical points and
//! growth-rate checks on their closest returns.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::cf::{cf_expand, ContinuedFraction};
use crate::circle;
use crate::critical::CriticalData;
use crate::error::{Error, Result};
use crate::lift::{Lift, Mirrored};
use crate::rotation::{build_bound_map, Side};

/// Longest critical orbit we are willing to follow.
pub const MAX_ORBIT: u64 = 1 << 22;

/// An orbit with a first-order bound on its accumulated rounding error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedOrbit {
    /// Points reduced to `[0, 1)`; `points[n]` is the `n`-th iterate.
    pub points: Vec<f64>,
    pub errors: Vec<f64>,
}

/// Follows `x0` for `n` steps. The error bound obeys
/// `e_{n+1} = |Df(x_n)| e_n + eps (1 + |f(x_n)|)`, starting from `e0`.
pub fn tracked_orbit<L: Lift + ?Sized>(f: &L, x0: f64, e0: f64, n: u64) -> TrackedOrbit {
    let eps = f.precision().eps();
    let mut points = Vec::with_capacity(n as usize + 1);
    let mut errors = Vec::with_capacity(n as usize + 1);
    let mut x = x0;
    let mut e = e0;
    points.push(circle::reduce(x));
    errors.push(e);
    for _ in 0..n {
        let y = f.eval(x);
        e = f.deriv(x).abs() * e + eps * (1.0 + y.abs());
        x = circle::reduce(y);
        points.push(x);
        errors.push(e);
    }
    TrackedOrbit { points, errors }
}

// Error in f(c) caused by locating c only to within tol.
fn critical_value_error<L: Lift + ?Sized>(f: &L, c: f64, tol: f64) -> f64 {
    let v = f.eval(c);
    (f.eval(c + tol) - v).abs().max((f.eval(c - tol) - v).abs()) + f.precision().eps() * (1.0 + v.abs())
}

/// Orbit of a critical point under the bound map of `side`, i.e. of the
/// critical point that the bound map flattens.
pub fn critical_orbit<L: Lift>(lift: &L, crit: &CriticalData, side: Side, n: u64) -> TrackedOrbit {
    let m = build_bound_map(lift, crit, side);
    let c = match side {
        Side::Plus => crit.c_plus,
        Side::Minus => crit.c_minus,
    };
    let e1 = critical_value_error(lift, c, crit.tol);
    let mut orbit = tracked_orbit(&m, m.eval(c), e1, n.saturating_sub(1));
    orbit.points.insert(0, circle::reduce(c));
    orbit.errors.insert(0, crit.tol);
    orbit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermFlag {
    Ok,
    /// The distance is below ten machine epsilons.
    Underflow,
    /// The orbit error bound is no longer small against the distance.
    Unreliable,
    /// The return time is beyond the orbit budget.
    TooLong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTerm {
    pub k: usize,
    /// Weight `q`, exact.
    pub q: String,
    /// Return time at which the distance is taken.
    pub time: u64,
    pub distance: f64,
    pub error: f64,
    pub term: f64,
    pub partial_sum: f64,
    pub flag: TermFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSeries {
    pub terms_plus: Vec<ConditionTerm>,
    pub terms_minus: Vec<ConditionTerm>,
    /// First level whose term could not be computed reliably.
    pub plus_exhausted_at: Option<usize>,
    pub minus_exhausted_at: Option<usize>,
}

impl ConditionSeries {
    pub fn partial_sums_plus(&self) -> Vec<f64> {
        self.terms_plus.iter().map(|t| t.partial_sum).collect()
    }

    pub fn partial_sums_minus(&self) -> Vec<f64> {
        self.terms_minus.iter().map(|t| t.partial_sum).collect()
    }

    /// `Err(PrecisionExhausted)` if either side was truncated.
    pub fn require_complete(&self) -> Result<()> {
        match self.plus_exhausted_at.or(self.minus_exhausted_at) {
            Some(level) => Err(Error::PrecisionExhausted { level }),
            None => Ok(()),
        }
    }
}

/// Share of the distance that the error bound may reach before a term is
/// considered unreliable.
pub const RELIABILITY: f64 = 0.1;

/// Classifies a distance measured with error bound `error`.
pub fn classify(distance: f64, error: f64, eps: f64) -> TermFlag {
    if distance < 10.0 * eps {
        TermFlag::Underflow
    } else if error > RELIABILITY * distance {
        TermFlag::Unreliable
    } else {
        TermFlag::Ok
    }
}

/// Series `sum_k weight_k * distance_k` from precomputed data; stops at the
/// first flagged level and reports it.
pub fn series_from_distances(
    levels: &[(usize, BigUint, u64, f64, f64, TermFlag)],
) -> (Vec<ConditionTerm>, Option<usize>) {
    let mut out = Vec::new();
    let mut sum = 0.0;
    for (k, q, time, d, e, flag) in levels {
        if *flag != TermFlag::Ok {
            return (out, Some(*k));
        }
        let term = q.to_f64().unwrap_or(f64::INFINITY) * d;
        sum += term;
        out.push(ConditionTerm {
            k: *k,
            q: q.to_string(),
            time: *time,
            distance: *d,
            error: *e,
            term,
            partial_sum: sum,
            flag: *flag,
        });
    }
    (out, None)
}

// (k, weight, time) triples for one side.
fn levels(cf: &ContinuedFraction, side: Side, k_cap: usize) -> Vec<(usize, BigUint, Option<u64>)> {
    let mut out = Vec::new();
    match side {
        Side::Plus => {
            for k in 1..=k_cap {
                if 2 * k > cf.k_max {
                    break;
                }
                out.push((k, cf.q[2 * k].clone(), cf.q[2 * k - 1].to_u64()));
            }
        }
        Side::Minus => {
            for k in 0..k_cap {
                if 2 * k + 1 > cf.k_max {
                    break;
                }
                out.push((k, cf.q[2 * k + 1].clone(), cf.q[2 * k].to_u64()));
            }
        }
    }
    out
}

fn side_series<L: Lift>(
    lift: &L,
    crit: &CriticalData,
    cf: &ContinuedFraction,
    side: Side,
    k_cap: usize,
) -> (Vec<ConditionTerm>, Option<usize>) {
    let lv = levels(cf, side, k_cap);
    let longest = lv.iter().filter_map(|l| l.2).filter(|&t| t <= MAX_ORBIT).max().unwrap_or(0);
    let orbit = critical_orbit(lift, crit, side, longest);
    let c = orbit.points[0];
    let eps = lift.precision().eps();
    let data: Vec<_> = lv
        .into_iter()
        .map(|(k, q, time)| match time {
            Some(t) if t <= MAX_ORBIT => {
                let d = circle::dist(orbit.points[t as usize], c);
                let e = orbit.errors[t as usize] + crit.tol;
                (k, q, t, d, e, classify(d, e, eps))
            }
            _ => (k, q, u64::MAX, f64::NAN, f64::NAN, TermFlag::TooLong),
        })
        .collect();
    series_from_distances(&data)
}

/// Terms `q_{2k} d(f^{q_{2k-1}}(c+), c+)`, `k >= 1`, and
/// `q_{2k+1} d(f^{q_{2k}}(c-), c-)`, `k >= 0`, with partial sums.
///
/// `cf_minus` expands the lower rotation number itself (negative values are
/// fine: the integer part is split off). Levels are truncated at the first
/// one that cannot be computed reliably; the level is reported.
pub fn condition_series<L: Lift>(
    lift: &L,
    crit: &CriticalData,
    cf_plus: &ContinuedFraction,
    cf_minus: &ContinuedFraction,
    k_cap: usize,
) -> ConditionSeries {
    let (terms_plus, plus_exhausted_at) = side_series(lift, crit, cf_plus, Side::Plus, k_cap);
    let (terms_minus, minus_exhausted_at) = side_series(lift, crit, cf_minus, Side::Minus, k_cap);
    ConditionSeries { terms_plus, terms_minus, plus_exhausted_at, minus_exhausted_at }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub side: Side,
    pub ell: f64,
    pub slack: f64,
    /// Return times `q_{2n+1}` used.
    pub times: Vec<u64>,
    /// `|log d(f^{q_{2n+1}}(c), c)|`.
    pub log_d: Vec<f64>,
    pub ratios: Vec<f64>,
    pub bands: Vec<(f64, f64)>,
    pub lower_rate_ok: bool,
    pub upper_rate_ok: bool,
    pub exhausted_at: Option<usize>,
}

/// Ratio band `[(1 + a/l) s, (1 + (l+1)/(l-1) a) / s]` for one step of the
/// product bounds.
pub fn growth_band(a: f64, ell: f64, slack: f64) -> (f64, f64) {
    ((1.0 + a / ell) * slack, (1.0 + (ell + 1.0) / (ell - 1.0) * a) / slack)
}

/// Growth of `|log d|` along the one-sided closest returns of a critical
/// point, tested through successive ratios.
///
/// For `Side::Plus` the returns of `c+` at times `q_{2n+1}` of `cf` are
/// used. For `Side::Minus`, `cf` expands the lower rotation number and the
/// check runs on the mirrored map, whose upper side is the original lower
/// side.
pub fn graczyk_growth_check<L: Lift>(
    lift: &L,
    crit: &CriticalData,
    cf: &ContinuedFraction,
    side: Side,
    n_cap: usize,
    slack: f64,
) -> Result<GrowthReport> {
    match side {
        Side::Plus => Ok(plus_growth(lift, crit, cf, crit.ell_plus, n_cap, slack, Side::Plus)),
        Side::Minus => {
            let mirrored_cf = cf_expand(cf.source_bracket.neg())?;
            let m = Mirrored(lift);
            Ok(plus_growth(&m, &crit.mirrored(), &mirrored_cf, crit.ell_minus, n_cap, slack, Side::Minus))
        }
    }
}

fn plus_growth<L: Lift>(
    lift: &L,
    crit: &CriticalData,
    cf: &ContinuedFraction,
    ell: f64,
    n_cap: usize,
    slack: f64,
    side: Side,
) -> GrowthReport {
    let mut times = Vec::new();
    for n in 0..n_cap {
        match cf.q.get(2 * n + 1).and_then(|q| q.to_u64()) {
            Some(t) if t <= MAX_ORBIT => times.push(t),
            _ => break,
        }
    }
    let longest = times.last().copied().unwrap_or(0);
    let orbit = critical_orbit(lift, crit, Side::Plus, longest);
    let eps = lift.precision().eps();
    let mut log_d = Vec::new();
    let mut exhausted_at = if times.len() < n_cap { Some(times.len()) } else { None };
    for (n, &t) in times.iter().enumerate() {
        let d = circle::dist(orbit.points[t as usize], orbit.points[0]);
        let e = orbit.errors[t as usize] + crit.tol;
        if classify(d, e, eps) != TermFlag::Ok {
            exhausted_at = Some(n);
            break;
        }
        log_d.push(d.ln().abs());
    }
    times.truncate(log_d.len());
    let mut ratios = Vec::new();
    let mut bands = Vec::new();
    let (mut lower_ok, mut upper_ok) = (true, true);
    for n in 1..log_d.len() {
        let r = log_d[n] / log_d[n - 1];
        let a = cf.quotient(2 * n + 1).to_f64().unwrap_or(f64::INFINITY);
        let band = growth_band(a, ell, slack);
        lower_ok &= r >= band.0;
        upper_ok &= r <= band.1;
        ratios.push(r);
        bands.push(band);
    }
    GrowthReport {
        side,
        ell,
        slack,
        times,
        log_d,
        ratios,
        bands,
        lower_rate_ok: lower_ok,
        upper_rate_ok: upper_ok,
        exhausted_at,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::locate_critical_points;
    use crate::lift::ArnoldLift;
    use crate::rotation::{rotation_number, Bracket};
    use num_bigint::BigInt;
    use num_traits::{One, Zero};

    fn golden_cf(k: usize) -> ContinuedFraction {
        ContinuedFraction::from_quotients(BigInt::zero(), vec![BigUint::one(); k], Bracket::new(0.6, 0.7))
    }

    #[test]
    fn synthetic_decay_sends_term_ratios_to_zero() {
        let cf = golden_cf(30);
        let data: Vec<_> = (1..12)
            .map(|k| {
                let d = 0.5f64.powf(1.5f64.powi(k as i32));
                (k, cf.q[2 * k].clone(), 0, d, 0.0, TermFlag::Ok)
            })
            .collect();
        let (terms, cut) = series_from_distances(&data);
        assert!(cut.is_none());
        let ratios: Vec<f64> = terms.windows(2).map(|w| w[1].term / w[0].term).collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]));
        assert!(*ratios.last().unwrap() < 1e-3);
        assert!(terms.windows(2).all(|w| w[1].partial_sum >= w[0].partial_sum));
    }

    #[test]
    fn flagged_level_truncates() {
        let data = vec![
            (1, BigUint::from(2u32), 1, 0.1, 0.0, TermFlag::Ok),
            (2, BigUint::from(3u32), 2, 1e-17, 0.0, TermFlag::Underflow),
            (3, BigUint::from(5u32), 3, 0.01, 0.0, TermFlag::Ok),
        ];
        let (terms, cut) = series_from_distances(&data);
        assert_eq!(terms.len(), 1);
        assert_eq!(cut, Some(2));
    }

    #[test]
    fn classification_thresholds() {
        let eps = f64::EPSILON;
        assert_eq!(classify(1e-16, 0.0, eps), TermFlag::Underflow);
        assert_eq!(classify(1e-6, 1e-6, eps), TermFlag::Unreliable);
        assert_eq!(classify(1e-6, 1e-9, eps), TermFlag::Ok);
    }

    #[test]
    fn error_bound_grows_with_expansion() {
        // doubling-like growth: x + 0.5 sin(2 pi x) has |Df| up to 1 + pi
        let f = ArnoldLift::new(0.5, 0.1);
        let o = tracked_orbit(&f, 0.2, 0.0, 40);
        assert!(o.errors.windows(2).all(|w| w[1] > 0.0 && w[1].is_finite()));
        assert!(o.errors[40] > o.errors[1]);
    }

    #[test]
    fn growth_band_for_golden_quadratic() {
        let (lo, hi) = growth_band(1.0, 2.0, 0.5);
        assert!((lo - 0.75).abs() < 1e-15 && (hi - 8.0).abs() < 1e-15);
        let (lo, hi) = growth_band(1.0, 2.0, 1.0);
        assert!((lo - 1.5).abs() < 1e-15 && (hi - 4.0).abs() < 1e-15);
    }

    #[test]
    fn single_level_is_vacuous() {
        let f = ArnoldLift::new(0.8, 0.0);
        let c = locate_critical_points(&f, 1e-12, 2.0, 2.0).unwrap();
        let cf = golden_cf(10);
        let r = graczyk_growth_check(&f, &c, &cf, Side::Plus, 1, 0.5).unwrap();
        assert!(r.ratios.is_empty() && r.lower_rate_ok && r.upper_rate_ok);
    }

    #[test]
    fn terms_are_nonnegative_and_sums_monotone() {
        let f = ArnoldLift::new(0.9, 0.17);
        let c = locate_critical_points(&f, 1e-12, 2.0, 2.0).unwrap();
        let rp = rotation_number(&build_bound_map(&f, &c, Side::Plus), 2_000_000);
        let rm = rotation_number(&build_bound_map(&f, &c, Side::Minus), 2_000_000);
        if let (Ok(cp), Ok(cm)) = (cf_expand(rp), cf_expand(rm)) {
            let s = condition_series(&f, &c, &cp, &cm, 6);
            for t in s.terms_plus.iter().chain(&s.terms_minus) {
                assert!(t.term >= 0.0);
            }
            assert!(s.partial_sums_plus().windows(2).all(|w| w[1] >= w[0]));
            assert!(s.partial_sums_minus().windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
