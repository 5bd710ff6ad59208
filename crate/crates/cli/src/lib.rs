//! Staged batch pipeline: critical points, rotation brackets, continued
//! fractions, summability conditions, return partition, densities.
//!
//! Each stage writes its artifacts to the output directory and later stages
//! read them back, so a run can be resumed by deleting late artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use bimod::cf::{cf_expand, ContinuedFraction};
use bimod::conditions::{condition_series, ConditionSeries};
use bimod::frame::{primary_decomposition, select_frame, tail_and_cover, DecompositionFrame, PrimaryDecomposition, TailReport};
use bimod::harness::{Doubling, TwoBranchAffine};
use bimod::inducing::{
    build_return_partition, distortion_statistics, validate_markov, Dynamics, PartitionOptions, ReturnPartition,
};
use bimod::measures::{
    birkhoff_histogram, build_ulam, invariance_residual, lift_measure, lyapunov_exponent, lyapunov_orbit,
    stationary_density, LiftOptions, OrbitAverage, PiecewiseDensity, Stationary,
};
use bimod::rotation::{rotation_interval, RotationInterval};
use bimod::{ArnoldLift, BimodalMap, CircleInterval, CriticalData, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum MapSpec {
    Arnold { a: f64, omega: f64, ell_plus: f64, ell_minus: f64 },
    /// `x -> 2x`, inducing on the whole circle.
    Doubling,
    /// Two full affine branches split at `p`.
    Affine { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub root_tol: f64,
    pub bracket_width: f64,
    pub partition_tol: f64,
    pub explore_tol: f64,
    pub markov_tol: f64,
    pub tol_power: f64,
    pub lyapunov_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub resolution: usize,
    pub n_cap: u32,
    pub k_cap: usize,
    pub m0_max: usize,
    pub n_bins: usize,
    pub samples_per_bin: usize,
    pub circle_bins: usize,
    pub lift_sample_density: f64,
    pub distortion_samples: usize,
    pub tail_samples: usize,
    pub n_seeds: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub orbit_iter: usize,
    pub residual_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapSpec,
    pub tolerances: Tolerances,
    pub budgets: Budgets,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: Mode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            map: MapSpec::Arnold { a: 0.7743020188703957, omega: 0.0, ell_plus: 2.0, ell_minus: 2.0 },
            tolerances: Tolerances {
                root_tol: 1e-13,
                bracket_width: 2e-7,
                partition_tol: 1e-6,
                explore_tol: 4e-9,
                markov_tol: 1e-8,
                tol_power: 1e-12,
                lyapunov_tol: 1e-10,
            },
            budgets: Budgets {
                resolution: 100_000,
                n_cap: 100_000,
                k_cap: 8,
                m0_max: 3,
                n_bins: 4096,
                samples_per_bin: 1024,
                circle_bins: 4096,
                lift_sample_density: (1u64 << 18) as f64,
                distortion_samples: 16,
                tail_samples: 100_000,
                n_seeds: 1000,
                n_iter: 1_000_000,
                burn_in: 1000,
                orbit_iter: 100_000_000,
                residual_points: 4096 * 256,
            },
            seed: 20_240_917,
            output_dir: PathBuf::from("out"),
            mode: Mode::Parallel,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let t = &self.tolerances;
        for (name, v) in [
            ("root_tol", t.root_tol),
            ("bracket_width", t.bracket_width),
            ("partition_tol", t.partition_tol),
            ("explore_tol", t.explore_tol),
            ("markov_tol", t.markov_tol),
            ("tol_power", t.tol_power),
            ("lyapunov_tol", t.lyapunov_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("tolerance {name} = {v} must lie in (0, 1)"));
            }
        }
        let b = &self.budgets;
        let counts = [
            ("resolution", b.resolution),
            ("n_cap", b.n_cap as usize),
            ("k_cap", b.k_cap),
            ("m0_max", b.m0_max),
            ("n_bins", b.n_bins),
            ("samples_per_bin", b.samples_per_bin),
            ("circle_bins", b.circle_bins),
            ("distortion_samples", b.distortion_samples),
            ("tail_samples", b.tail_samples),
            ("n_seeds", b.n_seeds),
            ("n_iter", b.n_iter),
            ("burn_in", b.burn_in),
            ("orbit_iter", b.orbit_iter),
            ("residual_points", b.residual_points),
        ];
        if let Some((name, _)) = counts.iter().find(|c| c.1 == 0) {
            return Err(format!("budget {name} must be positive"));
        }
        if !(b.lift_sample_density > 0.0) {
            return Err("budget lift_sample_density must be positive".into());
        }
        if let MapSpec::Affine { p } = self.map {
            if !(p > 0.0 && p < 1.0) {
                return Err(format!("affine split {p} must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Rotnum,
    Cf,
    Conditions,
    Induce,
    Measure,
    All,
}

#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

type StageResult<T> = Result<T, StageError>;

fn ctx<T, E: fmt::Display>(stage: &'static str, r: Result<T, E>) -> StageResult<T> {
    r.map_err(|e| StageError { stage, message: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub critical: CriticalData,
    pub rotation: RotationInterval,
    /// Rationals `p/q`, `q <= 50`, inside either bracket.
    pub nearby_rationals_minus: Vec<(i64, u64)>,
    pub nearby_rationals_plus: Vec<(i64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfReport {
    pub plus: ContinuedFraction,
    pub minus: ContinuedFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InduceReport {
    pub target: CircleInterval,
    pub branches: usize,
    pub coverage: f64,
    pub summability_stat: f64,
    pub uncovered_mass: f64,
    pub markov_tol: f64,
    pub markov_failures: usize,
    pub worst_endpoint_error: f64,
    pub distortion: f64,
    pub distortion_doubled: f64,
    pub two_step_distortion: f64,
    pub frame: Option<DecompositionFrame>,
    pub decomposition: Option<PrimaryDecomposition>,
    pub tail: Option<TailReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub n_bins: usize,
    pub iterations: usize,
    pub min_covered: f64,
    pub max_density: f64,
    pub ulam_coarse_l1: f64,
    pub raw_mass: f64,
    pub predicted_mass: f64,
    pub mass_relative_error: f64,
    pub gap_mass: f64,
    pub invariance_residual: f64,
    pub lyapunov_quadrature: f64,
    pub lyapunov_orbit: OrbitAverage,
    pub birkhoff_l1: f64,
    pub seed: u64,
}

/// What a run produced, stage by stage.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub rotation: Option<RotationReport>,
    pub cf: Option<CfReport>,
    pub conditions: Option<ConditionSeries>,
    pub induce: Option<InduceReport>,
    pub measure: Option<MeasureReport>,
    pub files: Vec<PathBuf>,
}

struct Store<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Store<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn load<T: DeserializeOwned>(&self, name: &str) -> Option<T> {
        let bytes = fs::read(self.path(name)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn save<T: Serialize>(&mut self, stage: &'static str, name: &str, value: &T, pretty: bool) -> StageResult<()> {
        let mut bytes = if pretty { serde_json::to_vec_pretty(value) } else { serde_json::to_vec(value) }
            .map_err(|e| StageError { stage, message: e.to_string() })?;
        bytes.push(b'\n');
        self.write(stage, name, &bytes)
    }

    fn write(&mut self, stage: &'static str, name: &str, bytes: &[u8]) -> StageResult<()> {
        let path = self.path(name);
        ctx(stage, fs::write(&path, bytes))?;
        self.files.push(path);
        Ok(())
    }

    // cached value, or computed and stored
    fn get_or<T, F>(&mut self, stage: &'static str, name: &str, pretty: bool, f: F) -> StageResult<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> StageResult<T>,
    {
        if let Some(v) = self.load(name) {
            self.files.push(self.path(name));
            return Ok(v);
        }
        let v = f()?;
        self.save(stage, name, &v, pretty)?;
        Ok(v)
    }
}

fn csv_bytes<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).unwrap();
    for r in rows {
        w.serialize(r).unwrap();
    }
    w.into_inner().unwrap()
}

pub fn density_csv(d: &PiecewiseDensity) -> Vec<u8> {
    csv_bytes(&["x", "density"], d.to_csv_rows())
}

pub fn conditions_csv(s: &ConditionSeries) -> Vec<u8> {
    let rows = s
        .terms_plus
        .iter()
        .map(|t| ("plus", t))
        .chain(s.terms_minus.iter().map(|t| ("minus", t)))
        .map(|(side, t)| (side, t.k, t.q.clone(), t.distance, t.term, t.partial_sum, format!("{:?}", t.flag).to_lowercase()));
    csv_bytes(&["side", "k", "q", "distance", "term", "partial_sum", "flag"], rows)
}

/// Runs `stage` and everything it depends on, reusing artifacts found in
/// the output directory.
pub fn run_pipeline(cfg: &RunConfig, stage: Stage) -> StageResult<Bundle> {
    ctx("config", cfg.validate())?;
    ctx("config", fs::create_dir_all(&cfg.output_dir))?;
    let mut store = Store { dir: &cfg.output_dir, files: Vec::new() };
    store.write("config", "config.toml", cfg.to_toml().as_bytes())?;
    let mut bundle = match &cfg.map {
        MapSpec::Arnold { a, omega, ell_plus, ell_minus } => {
            let lift = ArnoldLift::new(*a, *omega);
            let map = ctx("critical-points", BimodalMap::locate(lift, cfg.tolerances.root_tol, *ell_plus, *ell_minus))?;
            run_bimodal(cfg, stage, &map, &mut store)?
        }
        MapSpec::Doubling => run_harness(cfg, stage, &Doubling, &mut store)?,
        MapSpec::Affine { p } => run_harness(cfg, stage, &TwoBranchAffine::new(*p), &mut store)?,
    };
    bundle.files = store.files;
    bundle.files.sort();
    bundle.files.dedup();
    Ok(bundle)
}

fn run_bimodal(cfg: &RunConfig, stage: Stage, map: &BimodalMap<ArnoldLift>, store: &mut Store) -> StageResult<Bundle> {
    let mut bundle = Bundle::default();
    let rotation = store.get_or("rotnum", "rotation.json", true, || {
        let r = ctx("rotnum", rotation_interval(&map.lift, &map.crit, cfg.tolerances.bracket_width, cfg.mode))?;
        Ok(RotationReport {
            critical: map.crit,
            nearby_rationals_minus: r.rho_minus.rationals_within(50),
            nearby_rationals_plus: r.rho_plus.rationals_within(50),
            rotation: r,
        })
    })?;
    bundle.rotation = Some(rotation.clone());
    if stage == Stage::Rotnum {
        return Ok(bundle);
    }
    let cf = store.get_or("cf", "cf.json", true, || {
        Ok(CfReport {
            plus: ctx("cf", cf_expand(rotation.rotation.rho_plus))?,
            minus: ctx("cf", cf_expand(rotation.rotation.rho_minus))?,
        })
    })?;
    bundle.cf = Some(cf.clone());
    if stage == Stage::Cf {
        return Ok(bundle);
    }
    let conditions = store.get_or("conditions", "conditions.json", true, || {
        Ok(condition_series(&map.lift, &map.crit, &cf.plus, &cf.minus, cfg.budgets.k_cap))
    })?;
    store.write("conditions", "conditions.csv", &conditions_csv(&conditions))?;
    bundle.conditions = Some(conditions);
    if stage == Stage::Conditions {
        return Ok(bundle);
    }
    let target = map.base_interval();
    let frame = select_frame(&map.lift, &map.crit, &cf.plus, &cf.minus, cfg.budgets.m0_max, 0.1);
    let frame_parts = match frame {
        Ok(fr) => {
            let pd = ctx("induce", primary_decomposition(&map.lift, &map.crit, &cf.plus, &fr, cfg.budgets.k_cap))?;
            let tail = tail_and_cover(
                map,
                &map.crit,
                &fr,
                cfg.budgets.n_cap,
                &target,
                cfg.budgets.tail_samples,
                cfg.seed,
                cfg.mode,
            );
            Some((fr, pd, tail))
        }
        Err(e) => return Err(StageError { stage: "frame", message: e.to_string() }),
    };
    run_inducing(cfg, stage, map, target, frame_parts, store, bundle)
}

fn run_harness<S: Dynamics>(cfg: &RunConfig, stage: Stage, f: &S, store: &mut Store) -> StageResult<Bundle> {
    if stage < Stage::Induce {
        return Err(StageError { stage: "critical-points", message: "harness maps have no critical points".into() });
    }
    run_inducing(cfg, stage, f, CircleInterval::full(0.0), None, store, Bundle::default())
}

fn run_inducing<S: Dynamics>(
    cfg: &RunConfig,
    stage: Stage,
    f: &S,
    target: CircleInterval,
    frame: Option<(DecompositionFrame, PrimaryDecomposition, TailReport)>,
    store: &mut Store,
    mut bundle: Bundle,
) -> StageResult<Bundle> {
    let t = &cfg.tolerances;
    let b = &cfg.budgets;
    let partition: ReturnPartition = store.get_or("induce", "partition.json", false, || {
        let opts = PartitionOptions {
            resolution: b.resolution,
            tol: t.partition_tol,
            explore_tol: t.explore_tol,
            n_cap: b.n_cap,
            mode: cfg.mode,
            ..Default::default()
        };
        ctx("induce", build_return_partition(f, target, &opts))
    })?;
    let induce = store.get_or("induce", "induce.json", true, || {
        let markov = validate_markov(f, &partition, t.markov_tol, cfg.mode);
        let d1 = distortion_statistics(f, &partition, b.distortion_samples, cfg.mode);
        let d2 = distortion_statistics(f, &partition, 2 * b.distortion_samples, cfg.mode);
        let (fr, pd, tail) = match frame {
            Some((a, b, c)) => (Some(a), Some(b), Some(c)),
            None => (None, None, None),
        };
        Ok(InduceReport {
            target,
            branches: partition.branches.len(),
            coverage: partition.coverage,
            summability_stat: partition.summability_stat,
            uncovered_mass: partition.uncovered_mass(),
            markov_tol: t.markov_tol,
            markov_failures: markov.failures.len(),
            worst_endpoint_error: markov.worst_endpoint_error,
            distortion: d1.global,
            distortion_doubled: d2.global,
            two_step_distortion: d1.two_step,
            frame: fr,
            decomposition: pd,
            tail,
        })
    })?;
    bundle.induce = Some(induce);
    if stage == Stage::Induce {
        return Ok(bundle);
    }

    let stationary: Stationary = store.get_or("measure", "stationary.json", true, || {
        let u = ctx("measure", build_ulam(f, &partition, b.n_bins, b.samples_per_bin, cfg.mode))?;
        ctx("measure", stationary_density(&u, t.tol_power, 100_000))
    })?;
    let density = &stationary.density;
    store.write("measure", "density_star.csv", &density_csv(density))?;
    let lifted = lift_measure(
        f,
        &partition,
        density,
        &LiftOptions {
            circle_bins: b.circle_bins,
            sample_density: b.lift_sample_density,
            n_cap: b.n_cap,
            ..Default::default()
        },
        cfg.mode,
    );
    store.save("measure", "density_mu.json", &lifted.mu, true)?;
    store.write("measure", "density_mu.csv", &density_csv(&lifted.mu))?;
    let hist: PiecewiseDensity = store.get_or("measure", "birkhoff.json", true, || {
        Ok(birkhoff_histogram(f, b.n_seeds, b.n_iter, b.burn_in, b.circle_bins, cfg.seed, cfg.mode))
    })?;
    store.write("measure", "birkhoff.csv", &density_csv(&hist))?;
    let measure = store.get_or("measure", "measure.json", true, || {
        let coarse = ctx("measure", build_ulam(f, &partition, (b.n_bins / 4).max(1), b.samples_per_bin, cfg.mode))?;
        let coarse = ctx("measure", stationary_density(&coarse, t.tol_power, 100_000))?;
        Ok(MeasureReport {
            n_bins: b.n_bins,
            iterations: stationary.iterations,
            min_covered: stationary.min_covered,
            max_density: stationary.max,
            ulam_coarse_l1: coarse.density.l1_distance(density),
            raw_mass: lifted.raw_mass,
            predicted_mass: lifted.predicted_mass,
            mass_relative_error: lifted.relative_error,
            gap_mass: lifted.gap_mass,
            invariance_residual: invariance_residual(f, &lifted.mu, b.residual_points, cfg.mode),
            lyapunov_quadrature: ctx("measure", lyapunov_exponent(f, &lifted.mu, t.lyapunov_tol, cfg.mode))?,
            lyapunov_orbit: lyapunov_orbit(f, 0.1234, b.orbit_iter, b.burn_in),
            birkhoff_l1: hist.l1_distance(&lifted.mu),
            seed: cfg.seed,
        })
    })?;
    bundle.measure = Some(measure);
    Ok(bundle)
}

/// Acceptance thresholds applied to a bundle by `verify`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: &'static str,
    pub pass: bool,
    pub detail: String,
}

pub fn verify_bundle(bundle: &Bundle) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |id, pass, detail: String| out.push(Check { id, pass, detail });
    if let Some(r) = &bundle.rotation {
        let ok = r.nearby_rationals_minus.is_empty() && r.nearby_rationals_plus.is_empty();
        push("brackets", ok, format!("rationals with q <= 50 inside: {:?} {:?}", r.nearby_rationals_minus, r.nearby_rationals_plus));
    }
    if let Some(i) = &bundle.induce {
        push("AC-5", i.coverage >= 0.999 && i.markov_failures == 0, format!("coverage {:.5}, {} Markov failures", i.coverage, i.markov_failures));
        if let Some(pd) = &i.decomposition {
            push("AC-11", pd.eta < 1.0 && pd.orders_monotone, format!("eta {:.4}", pd.eta));
        }
        if let Some(t) = &i.tail {
            push("AC-9", t.slope < 0.0 && t.r_squared >= 0.95, format!("slope {:.4}, R^2 {:.4}", t.slope, t.r_squared));
            push("AC-12", t.cover_n.is_some(), format!("cover_N {:?}", t.cover_n));
        }
    }
    if let Some(m) = &bundle.measure {
        push("AC-4", m.birkhoff_l1 <= 0.05, format!("Birkhoff L1 {:.4}", m.birkhoff_l1));
        push("AC-6", m.ulam_coarse_l1 <= 0.05 && m.min_covered > 0.0, format!("L1 {:.4}", m.ulam_coarse_l1));
        push("AC-7", m.invariance_residual <= 1e-2, format!("residual {:.4}", m.invariance_residual));
        let o = &m.lyapunov_orbit;
        let rel = (m.lyapunov_quadrature - o.mean).abs() / o.mean.abs();
        push(
            "AC-8",
            m.lyapunov_quadrature > 0.0 && o.mean > 3.0 * o.std_err && rel <= 0.02,
            format!("{:.5} vs {:.5}", m.lyapunov_quadrature, o.mean),
        );
        push("mass", m.mass_relative_error <= 1e-3, format!("relative error {:.1e}", m.mass_relative_error));
    }
    out
}
