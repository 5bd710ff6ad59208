use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bimod::harness::TwoBranchAffine;
use bimod::inducing::{build_return_partition, PartitionOptions};
use bimod::measures::{birkhoff_histogram, build_ulam, lift_measure, stationary_density, LiftOptions};
use bimod::rotation::rotation_interval;
use bimod::{ArnoldLift, BimodalMap, Mode};

const MODES: [(&str, Mode); 2] = [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)];

fn desk() -> BimodalMap<ArnoldLift> {
    BimodalMap::locate(ArnoldLift::new(0.7743020188703957, 0.0), 1e-13, 2.0, 2.0).unwrap()
}

fn partition_sweep(c: &mut Criterion) {
    let map = desk();
    let target = map.base_interval();
    let mut g = c.benchmark_group("partition_sweep");
    g.sample_size(10);
    for (name, mode) in MODES {
        let opts = PartitionOptions { resolution: 2000, explore_tol: 1e-6, mode, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_return_partition(&map, target, &opts).unwrap())
        });
    }
    g.finish();
}

fn ulam_and_lift(c: &mut Criterion) {
    let map = desk();
    let opts = PartitionOptions { resolution: 2000, explore_tol: 1e-7, ..Default::default() };
    let p = build_return_partition(&map, map.base_interval(), &opts).unwrap();
    let mut g = c.benchmark_group("ulam_and_lift");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                // the coarse partition misses some mass; the Ulam step may refuse it
                let Ok(u) = build_ulam(&map, &p, 512, 64, mode) else { return 0.0 };
                let s = stationary_density(&u, 1e-10, 10_000).unwrap();
                let lo = LiftOptions { circle_bins: 512, sample_density: 16384.0, ..Default::default() };
                lift_measure(&map, &p, &s.density, &lo, mode).raw_mass
            })
        });
    }
    g.finish();
}

fn birkhoff(c: &mut Criterion) {
    let f = TwoBranchAffine::new(0.3);
    let mut g = c.benchmark_group("birkhoff_histogram");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| birkhoff_histogram(&f, 64, 100_000, 100, 1024, 1, mode))
        });
    }
    g.finish();
}

fn rotation(c: &mut Criterion) {
    let map = desk();
    let mut g = c.benchmark_group("rotation_interval");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| rotation_interval(&map.lift, &map.crit, 1e-5, mode).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, partition_sweep, ulam_and_lift, birkhoff, rotation);
criterion_main!(benches);
