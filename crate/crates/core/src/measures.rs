//! Invariant densities: Ulam discretization of the first return map, lift to
//! the circle along return orbits, and Lyapunov/Birkhoff diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circle::CircleInterval;
use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::inducing::{first_entry, Dynamics, ReturnPartition};
use crate::lift::Lift;

/// Least partition coverage accepted by [`build_ulam`].
pub const MIN_COVERAGE: f64 = 0.99;

/// Histogram density on an arc, stored as values per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseDensity {
    pub support: CircleInterval,
    pub bin_edges: Vec<f64>,
    pub weights: Vec<f64>,
    pub mass: f64,
}

impl PiecewiseDensity {
    /// Equal bins on `support` with the given per-bin masses.
    pub fn from_masses(support: CircleInterval, masses: &[f64]) -> Self {
        let n = masses.len();
        let w = support.len() / n as f64;
        let bin_edges = (0..=n).map(|i| support.lo + support.len() * i as f64 / n as f64).collect();
        let weights = masses.iter().map(|m| m / w).collect();
        let mass = exec::compensated_sum(masses.iter().copied());
        Self { support, bin_edges, weights, mass }
    }

    pub fn uniform(support: CircleInterval, n_bins: usize) -> Self {
        Self::from_masses(support, &vec![1.0 / n_bins as f64; n_bins])
    }

    pub fn n_bins(&self) -> usize {
        self.weights.len()
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        self.bin_edges[i + 1] - self.bin_edges[i]
    }

    pub fn bin_mass(&self, i: usize) -> f64 {
        self.weights[i] * self.bin_width(i)
    }

    pub fn normalized(mut self) -> Self {
        let m = exec::compensated_sum((0..self.n_bins()).map(|i| self.bin_mass(i)));
        if m > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= m);
        }
        self.mass = if m > 0.0 { 1.0 } else { 0.0 };
        self
    }

    /// Bin of the point `x` (any lift), if it lies on the support.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let y = self.support.lift_of(x);
        if y > self.support.hi {
            return None;
        }
        let i = self.bin_edges.partition_point(|&e| e <= y);
        Some(i.saturating_sub(1).min(self.n_bins() - 1))
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.bin_of(x).map_or(0.0, |i| self.weights[i])
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.weights.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &w| (lo.min(w), hi.max(w)))
    }

    /// `∫ |p - q|` over the common refinement of the two bin grids.
    pub fn l1_distance(&self, other: &PiecewiseDensity) -> f64 {
        let mut edges: Vec<f64> = self.bin_edges.iter().chain(&other.bin_edges).copied().collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        exec::compensated_sum(edges.windows(2).map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (self.value_at(mid) - other.value_at(mid)).abs() * (w[1] - w[0])
        }))
    }

    /// `(bin centre, density)` rows.
    pub fn to_csv_rows(&self) -> Vec<(f64, f64)> {
        (0..self.n_bins()).map(|i| (0.5 * (self.bin_edges[i] + self.bin_edges[i + 1]), self.weights[i])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UlamMethod {
    Sampling,
}

/// Row-stochastic transition matrix between equal bins of the target.
/// `rows[i]` lists `(j, fraction)`; `residual[i]` is the fraction of bin `i`
/// lying in uncovered slivers, so each row plus its residual sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlamOperator {
    pub support: CircleInterval,
    pub n_bins: usize,
    pub rows: Vec<Vec<(u32, f64)>>,
    pub residual: Vec<f64>,
    pub build_method: UlamMethod,
    pub samples_per_bin: usize,
}

impl UlamOperator {
    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|e| e.1).sum()
    }

    /// Bins with some mapped mass.
    pub fn covered(&self, i: usize) -> bool {
        self.residual[i] < 1.0
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![0.0; self.n_bins];
                for &(j, v) in r {
                    row[j as usize] += v;
                }
                row
            })
            .collect()
    }

    /// `v -> v P` with each row renormalized over its mapped mass.
    pub fn push(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bins];
        for (i, row) in self.rows.iter().enumerate() {
            let kept = 1.0 - self.residual[i];
            if kept <= 0.0 || v[i] == 0.0 {
                continue;
            }
            let s = v[i] / kept;
            for &(j, p) in row {
                out[j as usize] += s * p;
            }
        }
        out
    }
}

/// Ulam matrix of the return map of `p` by stratified sampling:
/// `samples_per_bin` midpoints per bin, each mapped by its branch.
pub fn build_ulam<S: Dynamics + ?Sized>(
    f: &S,
    p: &ReturnPartition,
    n_bins: usize,
    samples_per_bin: usize,
    mode: Mode,
) -> Result<UlamOperator> {
    if p.coverage < MIN_COVERAGE {
        return Err(Error::CoverageTooLow { coverage: p.coverage, required: MIN_COVERAGE });
    }
    if n_bins == 0 || samples_per_bin == 0 {
        return Err(Error::InvalidParameter("n_bins and samples_per_bin must be positive".into()));
    }
    let target = p.target;
    let w = target.len() / n_bins as f64;
    let grid = PiecewiseDensity::uniform(target, n_bins);
    let rows = exec::map_range(mode, n_bins, |i| {
        let mut counts: Vec<(u32, u32)> = Vec::new();
        let mut lost = 0usize;
        for s in 0..samples_per_bin {
            let x = target.lo + w * (i as f64 + (s as f64 + 0.5) / samples_per_bin as f64);
            let image = p
                .locate(x)
                .and_then(|b| first_entry(f, x, &target, b.n, 0.0).ok().filter(|e| e.n == b.n))
                .and_then(|e| grid.bin_of(e.image));
            match image {
                Some(j) => match counts.iter_mut().find(|c| c.0 == j as u32) {
                    Some(c) => c.1 += 1,
                    None => counts.push((j as u32, 1)),
                },
                None => lost += 1,
            }
        }
        counts.sort_unstable();
        let row: Vec<(u32, f64)> = counts.into_iter().map(|(j, c)| (j, c as f64 / samples_per_bin as f64)).collect();
        (row, lost as f64 / samples_per_bin as f64)
    });
    let (rows, residual) = rows.into_iter().unzip();
    Ok(UlamOperator { support: target, n_bins, rows, residual, build_method: UlamMethod::Sampling, samples_per_bin })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub density: PiecewiseDensity,
    pub iterations: usize,
    pub last_change: f64,
    /// Smallest density value over covered bins.
    pub min_covered: f64,
    pub max: f64,
}

/// Power iteration on `v -> v P` from the uniform vector until the L1 change
/// is at most `tol_power`.
pub fn stationary_density(u: &UlamOperator, tol_power: f64, max_iter: usize) -> Result<Stationary> {
    let n = u.n_bins;
    let mut v = vec![1.0 / n as f64; n];
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = u.push(&v);
        let total = exec::compensated_sum(next.iter().copied());
        if total <= 0.0 {
            return Err(Error::NoConvergence { iterations: it, last_change: f64::NAN });
        }
        next.iter_mut().for_each(|x| *x /= total);
        change = exec::compensated_sum(v.iter().zip(&next).map(|(a, b)| (a - b).abs()));
        v = next;
        if change <= tol_power {
            let density = PiecewiseDensity::from_masses(u.support, &v).normalized();
            let min_covered = (0..n)
                .filter(|&i| u.covered(i))
                .map(|i| density.weights[i])
                .fold(f64::INFINITY, f64::min);
            let max = density.min_max().1;
            return Ok(Stationary { density, iterations: it, last_change: change, min_covered, max });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, last_change: change })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedMeasure {
    /// Normalized `mu = mu_bar / mu_bar(T^1)` on the circle `[0, 1)`.
    pub mu: PiecewiseDensity,
    /// Mass transported from the branches.
    pub raw_mass: f64,
    /// `sum_J N(J) mu*(J)` with `mu*(J)` integrated exactly from the bins.
    pub predicted_mass: f64,
    pub relative_error: f64,
    /// Mass transported from uncovered slivers (zero unless requested).
    pub gap_mass: f64,
    /// `mu*` weight of sliver points with no entry before the cap.
    pub lost_mass: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftOptions {
    pub circle_bins: usize,
    /// Transport points per unit length.
    pub sample_density: f64,
    /// Least number of points on any branch or sliver.
    pub min_samples: usize,
    /// Also push the uncovered slivers, each point with its own entry time.
    pub include_gaps: bool,
    pub n_cap: u32,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self { circle_bins: 4096, sample_density: (1u64 << 18) as f64, min_samples: 4, include_gaps: true, n_cap: 100_000 }
    }
}

/// `mu*`-mass of `[lo, hi]` (inside the support window).
pub fn interval_mass(d: &PiecewiseDensity, lo: f64, hi: f64) -> f64 {
    let y = d.support.lift_of(lo);
    let (lo, hi) = (y, y + (hi - lo));
    let first = d.bin_edges.partition_point(|&e| e <= lo).saturating_sub(1);
    let mut m = 0.0;
    for i in first..d.n_bins() {
        let (a, b) = (d.bin_edges[i].max(lo), d.bin_edges[i + 1].min(hi));
        if a >= hi {
            break;
        }
        if b > a {
            m += d.weights[i] * (b - a);
        }
    }
    m
}

// Accumulates uniform mass on lift intervals into equal bins of [0, 1):
// each interval adds a slope change at both ends, resolved in `finish`.
struct Spreader {
    n: usize,
    mass: Vec<f64>,
    slope: Vec<f64>,
}

impl Spreader {
    fn new(n: usize) -> Self {
        Self { n, mass: vec![0.0; n], slope: vec![0.0; n + 1] }
    }

    // slope change `c` (mass per unit length) switched on at x in [0, 1]
    fn event(&mut self, x: f64, c: f64) {
        let t = x * self.n as f64;
        let j = (t as usize).min(self.n - 1);
        self.mass[j] += c * (j as f64 + 1.0 - t) / self.n as f64;
        self.slope[j + 1] += c;
    }

    fn add(&mut self, u: f64, v: f64, m: f64) {
        let (u, v) = if u <= v { (u, v) } else { (v, u) };
        let len = v - u;
        if m == 0.0 {
            return;
        }
        if len <= 0.0 {
            let j = ((crate::circle::reduce(u) * self.n as f64) as usize).min(self.n - 1);
            self.mass[j] += m;
            return;
        }
        let c = m / len;
        let a = crate::circle::reduce(u);
        let mut b = a + len;
        self.event(a, c);
        // wraps: whole turns first, then the remainder
        while b > 1.0 {
            self.event(1.0, -c);
            self.event(0.0, c);
            b -= 1.0;
        }
        self.event(b, -c);
    }

    fn finish(mut self) -> Vec<f64> {
        let w = 1.0 / self.n as f64;
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.slope[i];
            self.mass[i] += s * w;
        }
        self.mass
    }
}

/// Pushes `mu*` restricted to each branch along its first `N(J)` iterates
/// and bins the result on the circle. Each branch is cut into
/// `max(min_samples, ceil(|J| * sample_density))` cells; a cell's image is an
/// interval and its `mu*` mass is spread uniformly over it. Slivers, whose
/// points do not share an entry time, are transported as point masses.
pub fn lift_measure<S: Dynamics + ?Sized>(
    f: &S,
    p: &ReturnPartition,
    mu_star: &PiecewiseDensity,
    opts: &LiftOptions,
    mode: Mode,
) -> LiftedMeasure {
    let circle = CircleInterval::full(0.0);
    let nb = opts.circle_bins;
    // (lo, hi, order); order 0 marks a sliver
    let mut pieces: Vec<(f64, f64, u32)> = p.branches.iter().map(|b| (b.lo, b.hi, b.n)).collect();
    if opts.include_gaps {
        pieces.extend(p.uncovered.iter().map(|g| (g.lo, g.hi, 0)));
    }
    let chunk = 4096usize;
    let parts = exec::map_range(mode, pieces.len().div_ceil(chunk), |c| {
        let mut branch = Spreader::new(nb);
        let mut gap = vec![0.0; nb];
        let (mut predicted, mut lost) = (Vec::new(), 0.0);
        let mut samples = 0usize;
        let mut ends = Vec::new();
        let mut cell_mass = Vec::new();
        for &(lo, hi, n) in &pieces[c * chunk..((c + 1) * chunk).min(pieces.len())] {
            let s = (((hi - lo) * opts.sample_density).ceil() as usize).max(opts.min_samples);
            samples += s;
            let h = (hi - lo) / s as f64;
            if n > 0 {
                ends.clear();
                ends.extend((0..=s).map(|k| if k == s { hi } else { lo + h * k as f64 }));
                cell_mass.clear();
                cell_mass.extend(ends.windows(2).map(|w| interval_mass(mu_star, w[0], w[1])));
                predicted.push(n as f64 * interval_mass(mu_star, lo, hi));
                for step in 0..n {
                    for (w, &m) in ends.windows(2).zip(&cell_mass) {
                        branch.add(w[0], w[1], m);
                    }
                    if step + 1 < n {
                        ends.iter_mut().for_each(|y| *y = f.eval(*y));
                    }
                }
                continue;
            }
            for k in 0..s {
                let x = lo + h * (k as f64 + 0.5);
                let w = mu_star.value_at(x) * h;
                let Ok(e) = first_entry(f, x, &p.target, opts.n_cap, 0.0) else {
                    lost += w;
                    continue;
                };
                let mut y = x;
                for _ in 0..e.n {
                    let j = ((crate::circle::reduce(y) * nb as f64) as usize).min(nb - 1);
                    gap[j] += w;
                    y = f.eval(y);
                }
            }
        }
        (branch.finish(), gap, exec::compensated_sum(predicted), lost, samples)
    });
    let (mut hists, mut gaps, mut predicted, mut lost) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut samples = 0;
    for (h, g, pr, l, s) in parts {
        hists.push(h);
        gaps.push(g);
        predicted.push(pr);
        lost.push(l);
        samples += s;
    }
    let branch_masses = exec::merge_histograms(hists, nb);
    let gap_masses = exec::merge_histograms(gaps, nb);
    let raw_mass = exec::compensated_sum(branch_masses.iter().copied());
    let gap_mass = exec::compensated_sum(gap_masses.iter().copied());
    let predicted_mass = exec::compensated_sum(predicted);
    let masses: Vec<f64> = branch_masses.iter().zip(&gap_masses).map(|(a, b)| a + b).collect();
    let mu = PiecewiseDensity::from_masses(circle, &masses).normalized();
    let relative_error = (raw_mass - predicted_mass).abs() / raw_mass;
    LiftedMeasure { mu, raw_mass, predicted_mass, relative_error, gap_mass, lost_mass: exec::compensated_sum(lost), samples }
}

/// One-step pushforward of a circle density by stratified transport, with
/// `points_per_bin` points per bin.
pub fn push_forward<L: Lift + ?Sized>(f: &L, mu: &PiecewiseDensity, points_per_bin: usize, mode: Mode) -> PiecewiseDensity {
    let n = mu.n_bins();
    let chunk = 256usize;
    let parts = exec::map_range(mode, n.div_ceil(chunk), |c| {
        let mut hist = vec![0.0; n];
        for i in c * chunk..((c + 1) * chunk).min(n) {
            let m = mu.bin_mass(i);
            if m == 0.0 {
                continue;
            }
            let h = mu.bin_width(i) / points_per_bin as f64;
            for k in 0..points_per_bin {
                let x = mu.bin_edges[i] + h * (k as f64 + 0.5);
                if let Some(j) = mu.bin_of(f.eval(x)) {
                    hist[j] += m / points_per_bin as f64;
                }
            }
        }
        hist
    });
    let masses = exec::merge_histograms(parts, n);
    PiecewiseDensity::from_masses(mu.support, &masses)
}

/// `‖f_* mu - mu‖_1` with `n_test_points` transport points in total.
pub fn invariance_residual<L: Lift + ?Sized>(f: &L, mu: &PiecewiseDensity, n_test_points: usize, mode: Mode) -> f64 {
    let per_bin = (n_test_points / mu.n_bins()).max(1);
    push_forward(f, mu, per_bin, mode).l1_distance(mu)
}

/// Largest subdivision depth for `∫ log|Df|`.
pub const MAX_DEPTH: usize = 30;

// Two-point Gauss rule; never evaluates at the ends. Right next to a
// critical point Df cancels to 0 in binary64, so |Df| is floored at eps.
fn gauss2<L: Lift + ?Sized>(f: &L, a: f64, b: f64) -> f64 {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    let d = r / 3f64.sqrt();
    let g = |x: f64| f.deriv(x).abs().max(f64::EPSILON).ln();
    r * (g(m - d) + g(m + d))
}

fn log_deriv_integral<L: Lift + ?Sized>(f: &L, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> Option<f64> {
    let m = 0.5 * (a + b);
    let (l, r) = (gauss2(f, a, m), gauss2(f, m, b));
    if !(l + r).is_finite() {
        return None;
    }
    if (l + r - whole).abs() <= tol {
        return Some(l + r);
    }
    if depth >= MAX_DEPTH {
        // a log singularity leaves an error of order h |ln h| on the last
        // piece; anything larger is not integrable
        let h = b - a;
        return ((l + r - whole).abs() <= 8.0 * h * (1.0 - h.ln())).then_some(l + r);
    }
    Some(
        log_deriv_integral(f, a, m, l, 0.5 * tol, depth + 1)?
            + log_deriv_integral(f, m, b, r, 0.5 * tol, depth + 1)?,
    )
}

/// `∫ log|Df| dmu` by adaptive Gauss quadrature on each bin; bins around the
/// critical points are subdivided down to depth [`MAX_DEPTH`].
pub fn lyapunov_exponent<L: Lift + ?Sized>(f: &L, mu: &PiecewiseDensity, tol: f64, mode: Mode) -> Result<f64> {
    let parts = exec::map_range(mode, mu.n_bins(), |i| {
        let (a, b) = (mu.bin_edges[i], mu.bin_edges[i + 1]);
        if mu.weights[i] == 0.0 {
            return Ok(0.0);
        }
        log_deriv_integral(f, a, b, gauss2(f, a, b), tol * (b - a), 0)
            .map(|v| v * mu.weights[i])
            .ok_or(Error::IntegrandSingular { lo: a, hi: b })
    });
    let vals: Result<Vec<f64>> = parts.into_iter().collect();
    Ok(exec::compensated_sum(vals?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitAverage {
    pub mean: f64,
    /// Batch-means standard error.
    pub std_err: f64,
    pub n_iter: usize,
}

/// Average of `log|Df|` along the orbit of `x0` after `burn_in` steps.
pub fn lyapunov_orbit<L: Lift + ?Sized>(f: &L, x0: f64, n_iter: usize, burn_in: usize) -> OrbitAverage {
    let mut x = x0;
    for _ in 0..burn_in {
        x = f.eval(x);
        x -= x.floor();
    }
    let batches = 50usize;
    let per = (n_iter / batches).max(1);
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut s = 0.0;
        for _ in 0..per {
            s += f.deriv(x).abs().ln();
            x = f.eval(x);
            x -= x.floor();
        }
        means.push(s / per as f64);
    }
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    OrbitAverage { mean, std_err: (var / batches as f64).sqrt(), n_iter: per * batches }
}

/// Pooled post-burn-in orbit histogram of `n_seeds` uniform seeds drawn
/// from a ChaCha8 stream seeded with `seed`.
pub fn birkhoff_histogram<L: Lift + ?Sized>(
    f: &L,
    n_seeds: usize,
    n_iter: usize,
    burn_in: usize,
    circle_bins: usize,
    seed: u64,
    mode: Mode,
) -> PiecewiseDensity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<f64> = (0..n_seeds).map(|_| rng.random::<f64>()).collect();
    let nb = circle_bins as f64;
    let parts = exec::map_slice(mode, &seeds, |&x0| {
        let mut hist = vec![0.0; circle_bins];
        let mut x = x0;
        for _ in 0..burn_in {
            x = f.eval(x);
            x -= x.floor();
        }
        for _ in 0..n_iter {
            x = f.eval(x);
            x -= x.floor();
            hist[((x * nb) as usize).min(circle_bins - 1)] += 1.0;
        }
        hist
    });
    let masses = exec::merge_histograms(parts, circle_bins);
    PiecewiseDensity::from_masses(CircleInterval::full(0.0), &masses).normalized()
}
