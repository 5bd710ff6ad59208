//! Continued fractions of bracketed real numbers and closest-return
//! combinatorics of rotations.
//!
//! Expansions are exact: a binary64 number is a dyadic rational, so both
//! bracket endpoints are expanded by the Euclidean algorithm on big integers
//! and only the common prefix of the two expansions is kept.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::Bracket;

/// Hard cap on the number of partial quotients generated per endpoint.
const MAX_TERMS: usize = 400;

/// Exact value of a finite binary64 number as `num / den` with `den` a power of two.
pub fn f64_to_ratio(x: f64) -> (BigInt, BigUint) {
    assert!(x.is_finite(), "non-finite value {x}");
    if x == 0.0 {
        return (BigInt::zero(), BigUint::one());
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 0 { Sign::Plus } else { Sign::Minus };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    let mant = BigUint::from(mant);
    if exp >= 0 {
        (BigInt::from_biguint(sign, mant << exp as usize), BigUint::one())
    } else {
        let den = BigUint::one() << (-exp) as usize;
        let g = mant.gcd(&den);
        (BigInt::from_biguint(sign, mant / &g), den / g)
    }
}

/// Partial quotients of the rational `n / d` in `(0, 1)`, stopping at
/// `cap` terms. The flag is true if the expansion terminated.
fn rational_quotients(mut n: BigUint, mut d: BigUint, cap: usize) -> (Vec<BigUint>, bool) {
    let mut out = Vec::new();
    while !n.is_zero() {
        if out.len() == cap {
            return (out, false);
        }
        let (a, r) = d.div_rem(&n);
        out.push(a);
        d = n;
        n = r;
    }
    (out, true)
}

/// Partial quotients with exact convergents.
///
/// `a[i]` is the partial quotient `a_{i+1}`; `p[k]`, `q[k]` are the convergents
/// `p_k / q_k` for `0 <= k <= k_max`, with `q_{-1} = 0`, `q_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CfDocument", try_from = "CfDocument")]
pub struct ContinuedFraction {
    pub a0: BigInt,
    pub a: Vec<BigUint>,
    pub p: Vec<BigInt>,
    pub q: Vec<BigUint>,
    pub source_bracket: Bracket,
    pub k_max: usize,
}

impl ContinuedFraction {
    /// Builds the convergents of `[a0; a_1, a_2, ...]`.
    pub fn from_quotients(a0: BigInt, a: Vec<BigUint>, source_bracket: Bracket) -> Self {
        let mut p = vec![a0.clone()];
        let mut q = vec![BigUint::one()];
        let (mut p_prev, mut q_prev) = (BigInt::one(), BigUint::zero());
        for ak in &a {
            let pk = p.last().unwrap();
            let qk = q.last().unwrap();
            let p_next = BigInt::from(ak.clone()) * pk + &p_prev;
            let q_next = ak * qk + &q_prev;
            p_prev = pk.clone();
            q_prev = qk.clone();
            p.push(p_next);
            q.push(q_next);
        }
        let k_max = a.len();
        Self { a0, a, p, q, source_bracket, k_max }
    }

    /// `a_k` for `k >= 1`.
    pub fn quotient(&self, k: usize) -> &BigUint {
        &self.a[k - 1]
    }

    /// `q_k` for `k >= -1`.
    pub fn q_at(&self, k: i64) -> BigUint {
        if k < 0 {
            BigUint::zero()
        } else {
            self.q[k as usize].clone()
        }
    }

    pub fn q_u64(&self, k: i64) -> Option<u64> {
        self.q_at(k).to_u64()
    }

    /// `p_k q_{k-1} - p_{k-1} q_k`.
    pub fn determinant(&self, k: usize) -> BigInt {
        let (pk, qk) = (&self.p[k], BigInt::from(self.q[k].clone()));
        let (pm, qm) = if k == 0 {
            (BigInt::one(), BigInt::zero())
        } else {
            (self.p[k - 1].clone(), BigInt::from(self.q[k - 1].clone()))
        };
        pk * qm - pm * qk
    }

    pub fn convergent(&self, k: usize) -> f64 {
        ratio_to_f64(&self.p[k], &self.q[k])
    }

    /// Whether `p_k / q_k` lies strictly below (even `k`) or above (odd `k`)
    /// every point of the source bracket. Exact.
    pub fn alternation_holds(&self, k: usize) -> bool {
        let q = BigInt::from(self.q[k].clone());
        let p = &self.p[k];
        if k % 2 == 0 {
            let (n, d) = f64_to_ratio(self.source_bracket.lo);
            p * BigInt::from(d) < n * q
        } else {
            let (n, d) = f64_to_ratio(self.source_bracket.hi);
            p * BigInt::from(d) > n * q
        }
    }

    /// `|q_k x - p_k| < 1 / q_{k+1}` for every `x` in the source bracket,
    /// checked exactly at both endpoints. Needs `k < k_max`.
    pub fn convergent_bound_holds(&self, k: usize) -> bool {
        assert!(k < self.k_max);
        let q = BigInt::from(self.q[k].clone());
        let q_next = BigInt::from(self.q[k + 1].clone());
        [self.source_bracket.lo, self.source_bracket.hi].iter().all(|&x| {
            let (n, d) = f64_to_ratio(x);
            let d = BigInt::from(d);
            (&q * n - &self.p[k] * &d).abs() * &q_next < d
        })
    }
}

fn ratio_to_f64(p: &BigInt, q: &BigUint) -> f64 {
    match (p.to_f64(), q.to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => a / b,
        _ => {
            let shift = q.bits().saturating_sub(60) as usize;
            let pq = (p >> shift).to_f64().unwrap_or(f64::NAN);
            let qq = (q >> shift).to_f64().unwrap_or(f64::NAN);
            pq / qq
        }
    }
}

/// Natural logarithm of a big unsigned integer.
pub fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits < 1000 {
        x.to_f64().unwrap().ln()
    } else {
        let shift = bits - 64;
        (x >> shift as usize).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
    }
}

#[derive(Serialize, Deserialize)]
struct CfDocument {
    a0: String,
    a: Vec<String>,
    p: Vec<String>,
    q: Vec<String>,
    source_bracket: Bracket,
    k_max: usize,
}

impl From<ContinuedFraction> for CfDocument {
    fn from(c: ContinuedFraction) -> Self {
        CfDocument {
            a0: c.a0.to_string(),
            a: c.a.iter().map(|v| v.to_string()).collect(),
            p: c.p.iter().map(|v| v.to_string()).collect(),
            q: c.q.iter().map(|v| v.to_string()).collect(),
            source_bracket: c.source_bracket,
            k_max: c.k_max,
        }
    }
}

impl TryFrom<CfDocument> for ContinuedFraction {
    type Error = String;
    fn try_from(d: CfDocument) -> std::result::Result<Self, String> {
        let a0: BigInt = d.a0.parse().map_err(|e| format!("a0: {e}"))?;
        let a = d
            .a
            .iter()
            .map(|s| s.parse::<BigUint>().map_err(|e| format!("a: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let cf = ContinuedFraction::from_quotients(a0, a, d.source_bracket);
        let q_ok = cf.q.iter().map(|v| v.to_string()).eq(d.q.iter().cloned());
        let p_ok = cf.p.iter().map(|v| v.to_string()).eq(d.p.iter().cloned());
        if !q_ok || !p_ok || cf.k_max != d.k_max {
            return Err("convergents do not match the partial quotients".into());
        }
        Ok(cf)
    }
}

/// Expands every number in `bracket` at once: partial quotients are emitted
/// while the expansions of both endpoints agree.
pub fn cf_expand(bracket: Bracket) -> Result<ContinuedFraction> {
    let (lo, hi) = (bracket.lo, bracket.hi);
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidParameter(format!("bad bracket [{lo}, {hi}]")));
    }
    let a0 = lo.floor();
    if hi.floor() != a0 || lo == a0 {
        return Err(Error::RationalDetected { lo, hi, certified: 0 });
    }
    let expand = |x: f64| {
        let (n, d) = f64_to_ratio(x - a0);
        rational_quotients(n.to_biguint().unwrap(), d, MAX_TERMS)
    };
    let (ta, ended_a) = expand(lo);
    let (tb, ended_b) = expand(hi);
    let m = ta.iter().zip(&tb).take_while(|(x, y)| x == y).count();
    if (ended_a && m == ta.len()) || (ended_b && m == tb.len()) {
        return Err(Error::RationalDetected { lo, hi, certified: m });
    }
    let a0 = BigInt::from(a0 as i64);
    Ok(ContinuedFraction::from_quotients(a0, ta[..m].to_vec(), bracket))
}

/// Times `n <= n_max` at which `n rho mod 1` comes closer to `0` than at
/// every earlier time, by brute force in exact integer arithmetic on the
/// binary64 value of `rho`.
pub fn closest_return_oracle(rho: f64, n_max: u64) -> Vec<u64> {
    let (num, den) = f64_to_ratio(rho - rho.floor());
    let den = den.to_u128().expect("rho needs a denominator below 2^128");
    let num = num.to_u128().unwrap();
    let mut best = u128::MAX;
    let mut out = Vec::new();
    let mut r: u128 = 0;
    for n in 1..=n_max {
        r = (r + num) % den;
        let d = r.min(den - r);
        if d < best {
            best = d;
            out.push(n);
        }
    }
    out
}

/// The distinct `q_k` (`k >= 0`) up to `n_max`, in order.
pub fn predicted_returns(cf: &ContinuedFraction, n_max: u64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for q in &cf.q {
        match q.to_u64() {
            Some(v) if v <= n_max => {
                if out.last() != Some(&v) {
                    out.push(v)
                }
            }
            _ => break,
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnSide {
    Left,
    Right,
}

/// Closest-return times to one side of the plateau at level `k`:
/// `q_{2k-1} + l q_{2k}` for `0 < l <= a_{2k+1}` (left), or
/// `q_{2k} + l q_{2k+1}` for `0 <= l < a_{2k+2}` (right).
pub fn one_sided_return_times(
    cf: &ContinuedFraction,
    side: ReturnSide,
    k_range: std::ops::Range<usize>,
) -> Result<Vec<BigUint>> {
    let mut out = Vec::new();
    for k in k_range {
        let (base, step, count, offset) = match side {
            ReturnSide::Left => (2 * k as i64 - 1, 2 * k, 2 * k + 1, 1u64),
            ReturnSide::Right => (2 * k as i64, 2 * k + 1, 2 * k + 2, 0u64),
        };
        if count > cf.k_max {
            return Err(Error::InvalidParameter(format!(
                "level {k} needs a_{count} but only {} quotients are certified",
                cf.k_max
            )));
        }
        let a = cf.quotient(count).to_u64().ok_or_else(|| {
            Error::InvalidParameter(format!("a_{count} too large to enumerate"))
        })?;
        let (b, s) = (cf.q_at(base), cf.q_at(step as i64));
        let ls: Vec<u64> = if offset == 1 { (1..=a).collect() } else { (0..a).collect() };
        for l in ls {
            out.push(&b + &s * BigUint::from(l));
        }
    }
    Ok(out)
}

/// Signed position of `R^{-n}(0)` for the binary64 value of `rho`, in
/// exact arithmetic: returns `(r, den)` with the point at `r / den`,
/// `-den/2 < r <= den/2`.
fn backward_position(num: u128, den: u128, n: u64) -> i128 {
    let r = (den - (num * n as u128) % den) % den;
    if r > den / 2 {
        r as i128 - den as i128
    } else {
        r as i128
    }
}

/// Checks the one-sided closest-return property for backward iterates of a
/// rotation: for successive right-type times `t < t'`, no `R^{-n}(0)` with
/// `0 < n < t'` lies strictly between `R^{-t}(0)` and `0` on the left; and
/// symmetrically for left-type times on the right. Returns the number of
/// checked pairs, or the first violating `(t, t', n)`.
pub fn check_backward_ordering(
    cf: &ContinuedFraction,
    rho: f64,
    t_max: u64,
) -> std::result::Result<usize, (u64, u64, u64)> {
    let (num, den) = f64_to_ratio(rho - rho.floor());
    let (num, den) = (num.to_u128().unwrap(), den.to_u128().unwrap());
    let mut pairs = 0;
    for side in [ReturnSide::Right, ReturnSide::Left] {
        let mut times = Vec::new();
        let mut k = 0;
        loop {
            let needed = match side {
                ReturnSide::Left => 2 * k + 1,
                ReturnSide::Right => 2 * k + 2,
            };
            if needed > cf.k_max {
                break;
            }
            let level = one_sided_return_times(cf, side, k..k + 1).unwrap();
            let small: Vec<u64> = level.iter().filter_map(|v| v.to_u64()).filter(|&v| v <= t_max).collect();
            let done = small.len() < level.len();
            times.extend(small);
            if done {
                break;
            }
            k += 1;
        }
        // q_{-1} + l q_0 starts at 1 on the left; drop non-positive times
        times.retain(|&t| t > 0);
        times.sort_unstable();
        times.dedup();
        for w in times.windows(2) {
            let (t, t2) = (w[0], w[1]);
            let pt = backward_position(num, den, t);
            for n in 1..t2 {
                let pn = backward_position(num, den, n);
                let inside = match side {
                    ReturnSide::Right => pt < pn && pn < 0,
                    ReturnSide::Left => 0 < pn && pn < pt,
                };
                if inside {
                    return Err((t, t2, n));
                }
            }
            pairs += 1;
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiophantineReport {
    pub beta: f64,
    /// Lower bounds `q_k^{1+beta} / (q_{k+1} + q_k)` for `q_k^{1+beta} |q_k rho - p_k|`.
    pub constants: Vec<f64>,
    pub c_fit: f64,
    pub violations: Vec<usize>,
    pub margin_ok: bool,
}

/// Slack applied to the fitted constant before a level counts as a violation.
pub const DIOPHANTINE_SLACK: f64 = 0.5;

/// Fits `C` on the first half of the certified levels and flags later levels
/// whose lower bound falls below `slack * C`.
pub fn diophantine_margin(cf: &ContinuedFraction, beta: f64) -> Result<DiophantineReport> {
    if cf.k_max < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two certified quotients, have {}",
            cf.k_max
        )));
    }
    let constants: Vec<f64> = (0..cf.k_max)
        .map(|k| {
            let lq = ln_big(&cf.q[k]);
            let ln_next = ln_big(&(&cf.q[k + 1] + &cf.q[k]));
            ((1.0 + beta) * lq - ln_next).exp()
        })
        .collect();
    let half = constants.len().div_ceil(2);
    let c_fit = constants[..half].iter().cloned().fold(f64::INFINITY, f64::min);
    let violations: Vec<usize> = (half..constants.len())
        .filter(|&k| constants[k] < DIOPHANTINE_SLACK * c_fit)
        .collect();
    let margin_ok = violations.is_empty();
    Ok(DiophantineReport { beta, constants, c_fit, violations, margin_ok })
}

/// The largest Diophantine exponent covered by the hyperbolicity argument
/// for critical order `ell`: `sqrt(1 + 1/(2 ell)) - 1`.
pub fn beta_threshold(ell: f64) -> f64 {
    (1.0 + 1.0 / (2.0 * ell)).sqrt() - 1.0
}
