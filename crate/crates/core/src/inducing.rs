//! First entry and first return maps: pointwise entry times, the branch
//! partition of a target arc, Markov checks and distortion estimates.
//!
//! Orbits are followed in the window `[lo, lo + 1)` of the target. A step
//! records the lap of the current point and the integer `m` removed from its
//! image; points sharing the whole record up to the entry time form an
//! interval on which the entry map is a monotone branch. That record (hashed)
//! is the branch identity used by the sweep.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::circle::{self, CircleInterval};
use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::lift::{Lift, MonotoneLaps};
use crate::roots;

/// Anything we can induce on: a lift with labelled monotone pieces.
pub trait Dynamics: Lift + MonotoneLaps {}
impl<T: Lift + MonotoneLaps + ?Sized> Dynamics for T {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub n: u32,
    /// `f^n(x)` in the target window.
    pub image: f64,
    /// Some iterate up to the entry came within `tol` of a target endpoint.
    pub boundary: bool,
}

#[inline]
fn to_window(target: &CircleInterval, x: f64) -> f64 {
    if x >= target.lo && x < target.lo + 1.0 {
        x
    } else {
        target.lift_of(x)
    }
}

#[inline]
fn inside(target: &CircleInterval, y: f64) -> bool {
    target.is_full() || y - target.lo <= target.len()
}

// One step in window coordinates: returns (next point, integer removed).
#[inline]
fn step<S: Dynamics + ?Sized>(f: &S, target: &CircleInterval, y: f64) -> (f64, f64) {
    let fy = f.eval(y);
    let mut m = (fy - target.lo).floor();
    let mut z = fy - m;
    if z - target.lo >= 1.0 {
        z -= 1.0;
        m += 1.0;
    }
    (z, m)
}

/// Least `n >= 1` with `f^n(x)` in the closed target.
pub fn first_entry<S: Dynamics + ?Sized>(
    f: &S,
    x: f64,
    target: &CircleInterval,
    n_cap: u32,
    tol: f64,
) -> Result<Entry> {
    let mut y = to_window(target, x);
    let mut boundary = false;
    for n in 1..=n_cap {
        y = step(f, target, y).0;
        boundary |= circle::dist(y, target.lo) <= tol || circle::dist(y, target.hi) <= tol;
        if inside(target, y) {
            return Ok(Entry { n, image: y, boundary });
        }
    }
    Err(Error::NoEntry { x, n_cap })
}

/// Entry time and hashed lap/shift record, or `None` if no entry by `n_cap`.
pub type BranchId = Option<(u32, u64)>;

// Identity given to the target ends; no orbit produces order 0.
const EDGE: BranchId = Some((0, 0));

pub fn branch_id<S: Dynamics + ?Sized>(f: &S, target: &CircleInterval, x: f64, n_cap: u32) -> BranchId {
    let mut h = DefaultHasher::new();
    let mut y = to_window(target, x);
    for n in 1..=n_cap {
        f.lap(y).hash(&mut h);
        let (z, m) = step(f, target, y);
        (m as i64).hash(&mut h);
        y = z;
        if inside(target, y) {
            n.hash(&mut h);
            return Some((n, h.finish()));
        }
    }
    None
}

/// Whether `x` has identity `id`; stops after `id`'s order.
pub fn has_branch_id<S: Dynamics + ?Sized>(f: &S, target: &CircleInterval, x: f64, id: (u32, u64)) -> bool {
    let mut h = DefaultHasher::new();
    let mut y = to_window(target, x);
    for n in 1..=id.0 {
        f.lap(y).hash(&mut h);
        let (z, m) = step(f, target, y);
        (m as i64).hash(&mut h);
        y = z;
        if inside(target, y) {
            n.hash(&mut h);
            return n == id.0 && h.finish() == id.1;
        }
    }
    false
}

/// Integers removed along the first `n` steps of the orbit of `x`.
pub fn orbit_shifts<S: Dynamics + ?Sized>(f: &S, target: &CircleInterval, x: f64, n: u32) -> Vec<f64> {
    let mut y = to_window(target, x);
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let (z, m) = step(f, target, y);
        out.push(m);
        y = z;
    }
    out
}

/// The branch `x -> f^n(x) - (sum of shifts)` as a continuous map, with
/// `log |D f^n|` accumulated alongside.
pub fn follow<S: Dynamics + ?Sized>(f: &S, x: f64, shifts: &[f64]) -> (f64, f64) {
    let mut y = x;
    let mut log_d = 0.0;
    for &m in shifts {
        log_d += f.deriv(y).abs().ln();
        y = f.eval(y) - m;
    }
    (y, log_d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Increasing,
    Decreasing,
}

/// A return interval `[lo, hi]` of order `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnBranch {
    pub lo: f64,
    pub hi: f64,
    pub n: u32,
    pub orientation: Orientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hat: Option<CircleInterval>,
}

impl ReturnBranch {
    pub fn interval(&self) -> CircleInterval {
        CircleInterval { lo: self.lo, hi: self.hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPartition {
    pub target: CircleInterval,
    /// Sorted by `lo`, inside the target window.
    pub branches: Vec<ReturnBranch>,
    pub coverage: f64,
    pub summability_stat: f64,
    pub uncovered: Vec<CircleInterval>,
}

impl ReturnPartition {
    /// The branch containing `x`, if any.
    pub fn locate(&self, x: f64) -> Option<&ReturnBranch> {
        let y = to_window(&self.target, x);
        let i = self.branches.partition_point(|b| b.lo <= y);
        let b = self.branches.get(i.checked_sub(1)?)?;
        (y <= b.hi).then_some(b)
    }

    pub fn uncovered_mass(&self) -> f64 {
        exec::compensated_sum(self.uncovered.iter().map(|g| g.len()))
    }

    fn from_branches(target: CircleInterval, mut branches: Vec<ReturnBranch>) -> Self {
        branches.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let covered = exec::compensated_sum(branches.iter().map(|b| b.len()));
        let summability_stat = exec::compensated_sum(branches.iter().map(|b| b.n as f64 * b.len()));
        let floor = 8.0 * f64::EPSILON * (target.lo.abs() + target.hi.abs() + 1.0);
        let mut uncovered = Vec::new();
        let mut cursor = target.lo;
        for b in &branches {
            if b.lo - cursor > floor {
                uncovered.push(CircleInterval { lo: cursor, hi: b.lo });
            }
            cursor = cursor.max(b.hi);
        }
        if target.hi - cursor > floor {
            uncovered.push(CircleInterval { lo: cursor, hi: target.hi });
        }
        Self { target, coverage: covered / target.len(), summability_stat, branches, uncovered }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionOptions {
    /// Number of seeds on the target.
    pub resolution: usize,
    /// Acceptance tolerance for branch checks.
    pub tol: f64,
    /// Identity changes are chased down to this width.
    pub explore_tol: f64,
    pub n_cap: u32,
    pub depth_cap: usize,
    pub mode: Mode,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self {
            resolution: 10_000,
            tol: 1e-8,
            explore_tol: 4e-9,
            n_cap: 100_000,
            depth_cap: 80,
            mode: Mode::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchCheck {
    pub orientation: Orientation,
    /// Distance of endpoint images from the matching target endpoints.
    pub endpoint_error: f64,
    pub monotone: bool,
    /// Deepest intermediate visit of the open target (0 if none).
    pub penetration: f64,
}

impl BranchCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.endpoint_error <= tol && self.monotone && self.penetration <= tol
    }
}

const MONOTONE_SAMPLES: usize = 32;

/// Checks a candidate branch `[lo, hi]` of order `n` against the target.
pub fn check_branch<S: Dynamics + ?Sized>(
    f: &S,
    target: &CircleInterval,
    lo: f64,
    hi: f64,
    n: u32,
) -> BranchCheck {
    let shifts = orbit_shifts(f, target, 0.5 * (lo + hi), n);
    let gu = follow(f, lo, &shifts).0;
    let gv = follow(f, hi, &shifts).0;
    let orientation = if gv >= gu { Orientation::Increasing } else { Orientation::Decreasing };
    let (tl, th) = (target.lo, target.lo + target.len());
    let endpoint_error = match orientation {
        Orientation::Increasing => (gu - tl).abs().max((gv - th).abs()),
        Orientation::Decreasing => (gu - th).abs().max((gv - tl).abs()),
    };

    let mut monotone = true;
    let mut prev = gu;
    for j in 1..=MONOTONE_SAMPLES + 1 {
        let x = lo + (hi - lo) * j as f64 / (MONOTONE_SAMPLES + 1) as f64;
        let g = if j == MONOTONE_SAMPLES + 1 { gv } else { follow(f, x, &shifts).0 };
        let ok = match orientation {
            Orientation::Increasing => g > prev,
            Orientation::Decreasing => g < prev,
        };
        monotone &= ok;
        prev = g;
    }

    let mut penetration: f64 = 0.0;
    if !target.is_full() {
        for x in [lo, 0.5 * (lo + hi), hi] {
            let mut y = x;
            for &m in &shifts[..shifts.len().saturating_sub(1)] {
                y = f.eval(y) - m;
                let o = y - target.lo;
                if o > 0.0 && o < target.len() {
                    penetration = penetration.max(o.min(target.len() - o));
                }
            }
        }
    }
    BranchCheck { orientation, endpoint_error, monotone, penetration }
}

// Points strictly between `a` and `b` where the identity changes, chased to
// `explore_tol`, appended in increasing order.
#[allow(clippy::too_many_arguments)]
fn refine<S: Dynamics + ?Sized>(
    f: &S,
    target: &CircleInterval,
    opts: &PartitionOptions,
    a: f64,
    ia: BranchId,
    b: f64,
    ib: BranchId,
    depth: usize,
    out: &mut Vec<(f64, BranchId)>,
) -> Result<()> {
    if b - a <= opts.explore_tol {
        return Ok(());
    }
    let m = 0.5 * (a + b);
    if m <= a || m >= b {
        return Ok(());
    }
    if depth >= opts.depth_cap {
        return Err(Error::ResolutionTooCoarse { at: m, depth });
    }
    let im = branch_id(f, target, m, opts.n_cap);
    if im != ia {
        refine(f, target, opts, a, ia, m, im, depth + 1, out)?;
    }
    out.push((m, im));
    if im != ib {
        refine(f, target, opts, m, im, b, ib, depth + 1, out)?;
    }
    Ok(())
}

/// Sweeps `opts.resolution` seeds over the target, splits at every change
/// of branch identity, bisects the branch ends to adjacent floats and keeps
/// the candidates that pass [`check_branch`] at `opts.tol`.
pub fn build_return_partition<S: Dynamics + ?Sized>(
    f: &S,
    target: CircleInterval,
    opts: &PartitionOptions,
) -> Result<ReturnPartition> {
    if opts.resolution == 0 || !(opts.tol > 0.0) || !(opts.explore_tol >= 0.0) {
        return Err(Error::InvalidParameter("partition needs resolution > 0 and tol > 0".into()));
    }
    if target.is_empty() {
        return Err(Error::InvalidInterval { lo: target.lo, hi: target.hi });
    }
    let r = opts.resolution;
    let h = target.len() / r as f64;
    let seeds: Vec<f64> = (0..r).map(|i| target.lo + (i as f64 + 0.5) * h).collect();
    let ids: Vec<BranchId> = exec::map_slice(opts.mode, &seeds, |&x| branch_id(f, &target, x, opts.n_cap));

    // segment i runs from seed i-1 to seed i; segments 0 and r touch the
    // target ends, which count as a change of identity
    let bound = |i: usize| -> (f64, BranchId) {
        if i == 0 {
            (target.lo, EDGE)
        } else if i > r {
            (target.hi, EDGE)
        } else {
            (seeds[i - 1], ids[i - 1])
        }
    };
    let changes: Vec<usize> = (0..=r).filter(|&i| bound(i).1 != bound(i + 1).1).collect();
    let refined: Vec<Result<Vec<(f64, BranchId)>>> = exec::map_slice(opts.mode, &changes, |&i| {
        let ((a, ia), (b, ib)) = (bound(i), bound(i + 1));
        let mut out = Vec::new();
        refine(f, &target, opts, a, ia, b, ib, 0, &mut out)?;
        Ok(out)
    });
    let mut points: Vec<(f64, BranchId)> = Vec::with_capacity(r + 4 * changes.len());
    let mut next = refined.into_iter();
    for i in 0..=r {
        if changes.binary_search(&i).is_ok() {
            points.extend(next.next().expect("one refinement per change")?);
        }
        if i < r {
            points.push((seeds[i], ids[i]));
        }
    }

    // runs of equal identity, with the neighbouring samples that bound them
    let mut runs: Vec<(f64, f64, f64, f64, u32, u64)> = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let id = points[i].1;
        let mut j = i;
        while j + 1 < points.len() && points[j + 1].1 == id {
            j += 1;
        }
        if let Some((n, hsh)) = id {
            let left_out = if i == 0 { target.lo } else { points[i - 1].0 };
            let right_out = if j + 1 == points.len() { target.hi } else { points[j + 1].0 };
            runs.push((left_out, points[i].0, points[j].0, right_out, n, hsh));
        }
        i = j + 1;
    }

    let candidates: Vec<Option<ReturnBranch>> = exec::map_slice(opts.mode, &runs, |&(lo_out, first, last, hi_out, n, hsh)| {
        let same = |x: f64| has_branch_id(f, &target, x, (n, hsh));
        let lo = roots::bisect_predicate(same, first, lo_out, 0.0).0;
        let hi = roots::bisect_predicate(same, last, hi_out, 0.0).0;
        if hi <= lo {
            return None;
        }
        let check = check_branch(f, &target, lo, hi, n);
        check.passes(opts.tol).then_some(ReturnBranch { lo, hi, n, orientation: check.orientation, hat: None })
    });
    Ok(ReturnPartition::from_branches(target, candidates.into_iter().flatten().collect()))
}

/// Extension of a branch onto a larger arc `hat` containing the target,
/// following the same inverse branch; `None` if the branch folds first.
pub fn branch_extension<S: Dynamics + ?Sized>(
    f: &S,
    target: &CircleInterval,
    branch: &ReturnBranch,
    hat: &CircleInterval,
) -> Option<CircleInterval> {
    let shifts = orbit_shifts(f, target, branch.midpoint(), branch.n);
    let laps = |x: f64| {
        let mut y = x;
        let mut v = Vec::with_capacity(shifts.len());
        for &m in &shifts {
            v.push(f.lap(y));
            y = f.eval(y) - m;
        }
        v
    };
    let base_laps = laps(branch.midpoint());
    let g = |x: f64| follow(f, x, &shifts).0;
    let inc = branch.orientation == Orientation::Increasing;
    let hat_lo = target.lo - signed_gap(hat.lo, target.lo);
    let hat_hi = target.lo + target.len() + signed_gap(target.hi, hat.hi);
    // left end of the branch maps to the low target end when increasing
    let (left_goal, right_goal) = if inc { (hat_lo, hat_hi) } else { (hat_hi, hat_lo) };
    let reach = |from: f64, dir: f64, goal: f64| -> Option<f64> {
        let mut delta = branch.len() * 0.25;
        for _ in 0..40 {
            let x = from + dir * delta;
            if laps(x) != base_laps {
                return None;
            }
            let gx = g(x);
            let passed = if (goal - g(from)) > 0.0 { gx >= goal } else { gx <= goal };
            if passed {
                return roots::invert_monotone(g, goal, from.min(x), from.max(x), 0.0).ok();
            }
            delta *= 2.0;
        }
        None
    };
    let lo = reach(branch.lo, -1.0, left_goal)?;
    let hi = reach(branch.hi, 1.0, right_goal)?;
    CircleInterval::new(lo, hi).ok()
}

// Forward length from a to b when b sits just after a on the circle.
fn signed_gap(a: f64, b: f64) -> f64 {
    circle::signed_offset(b, a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFailure {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub n: u32,
    pub check: BranchCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub tol: f64,
    pub branches: usize,
    pub coverage: f64,
    pub worst_endpoint_error: f64,
    pub worst_penetration: f64,
    pub non_monotone: usize,
    pub failures: Vec<BranchFailure>,
    pub passed: bool,
    pub warning: Option<String>,
}

/// Re-checks every branch of `p` (endpoint images, monotonicity on 32
/// interior samples, intermediate avoidance of the target).
pub fn validate_markov<S: Dynamics + ?Sized>(f: &S, p: &ReturnPartition, tol: f64, mode: Mode) -> MarkovReport {
    let checks = exec::map_slice(mode, &p.branches, |b| check_branch(f, &p.target, b.lo, b.hi, b.n));
    let mut failures = Vec::new();
    let (mut worst_e, mut worst_p, mut non_monotone) = (0.0f64, 0.0f64, 0);
    for (index, (b, c)) in p.branches.iter().zip(&checks).enumerate() {
        worst_e = worst_e.max(c.endpoint_error);
        worst_p = worst_p.max(c.penetration);
        non_monotone += usize::from(!c.monotone);
        if !c.passes(tol) {
            failures.push(BranchFailure { index, lo: b.lo, hi: b.hi, n: b.n, check: *c });
        }
    }
    let warning = p.branches.is_empty().then(|| "empty partition: coverage 0".to_string());
    MarkovReport {
        tol,
        branches: p.branches.len(),
        coverage: p.coverage,
        worst_endpoint_error: worst_e,
        worst_penetration: worst_p,
        non_monotone,
        passed: failures.is_empty(),
        failures,
        warning,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub samples: usize,
    pub per_branch: Vec<f64>,
    pub global: f64,
    /// Same estimate for `T o T` on nested cylinders of the largest branches.
    pub two_step: f64,
}

// max over sample pairs of (|Dg(x)/Dg(y)| - 1) / |g(x) - g(y)|
fn pair_distortion(values: &[(f64, f64)]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let dy = (values[i].0 - values[j].0).abs();
            if dy > 0.0 {
                d = d.max(((values[i].1 - values[j].1).abs().exp() - 1.0) / dy);
            }
        }
    }
    d
}

fn grid(lo: f64, hi: f64, samples: usize) -> impl Iterator<Item = f64> {
    let s = samples.max(1);
    (0..=s).map(move |j| lo + (hi - lo) * j as f64 / s as f64)
}

const TWO_STEP_BRANCHES: usize = 12;

/// Distortion constants of the return branches, estimated on `samples + 1`
/// equally spaced points per branch (endpoints included, so doubling the
/// sample count refines the same grid).
pub fn distortion_statistics<S: Dynamics + ?Sized>(
    f: &S,
    p: &ReturnPartition,
    samples: usize,
    mode: Mode,
) -> DistortionReport {
    let per_branch = exec::map_slice(mode, &p.branches, |b| {
        let shifts = orbit_shifts(f, &p.target, b.midpoint(), b.n);
        let v: Vec<(f64, f64)> = grid(b.lo, b.hi, samples).map(|x| follow(f, x, &shifts)).collect();
        pair_distortion(&v)
    });
    let global = per_branch.iter().copied().fold(0.0, f64::max);

    let mut order: Vec<usize> = (0..p.branches.len()).collect();
    order.sort_by(|&a, &b| p.branches[b].len().total_cmp(&p.branches[a].len()));
    order.truncate(TWO_STEP_BRANCHES);
    let pairs: Vec<(usize, usize)> = order.iter().flat_map(|&a| order.iter().map(move |&b| (a, b))).collect();
    let two = exec::map_slice(mode, &pairs, |&(a, b)| {
        let (b1, b2) = (&p.branches[a], &p.branches[b]);
        let s1 = orbit_shifts(f, &p.target, b1.midpoint(), b1.n);
        let s2 = orbit_shifts(f, &p.target, b2.midpoint(), b2.n);
        let g1 = |x: f64| follow(f, x, &s1).0;
        let u = roots::invert_monotone(g1, b2.lo, b1.lo, b1.hi, 0.0).ok()?;
        let v = roots::invert_monotone(g1, b2.hi, b1.lo, b1.hi, 0.0).ok()?;
        let (u, v) = if u <= v { (u, v) } else { (v, u) };
        let vals: Vec<(f64, f64)> = grid(u, v, samples)
            .map(|x| {
                let (y, l1) = follow(f, x, &s1);
                let (z, l2) = follow(f, y.clamp(b2.lo, b2.hi), &s2);
                (z, l1 + l2)
            })
            .collect();
        Some(pair_distortion(&vals))
    });
    let two_step = two.into_iter().flatten().fold(0.0, f64::max);
    DistortionReport { samples, per_branch, global, two_step }
}
