use proptest::prelude::*;

use bimod::critical::locate_critical_points;
use bimod::harness::TwoBranchAffine;
use bimod::inducing::{build_return_partition, first_entry, PartitionOptions, ReturnPartition};
use bimod::measures::{build_ulam, lift_measure, stationary_density, LiftOptions};
use bimod::rotation::rotation_interval;
use bimod::{ArnoldLift, CircleInterval, Lift, Mode};

// Both ends land on the fixed point 0 and never enter the interior, so
// first returns are full branches. Arbitrary arcs do not have this property.
fn partition(p: f64, left: bool) -> ReturnPartition {
    let target = if left { CircleInterval { lo: 0.0, hi: p } } else { CircleInterval { lo: p, hi: 1.0 } };
    let opts = PartitionOptions { resolution: 256, explore_tol: 1e-7, n_cap: 10_000, ..Default::default() };
    build_return_partition(&TwoBranchAffine::new(p), target, &opts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn branches_are_disjoint_and_times_match(p in 0.35f64..0.65, left: bool) {
        let f = TwoBranchAffine::new(p);
        let part = partition(p, left);
        prop_assert!(part.coverage > 0.9, "coverage {}", part.coverage);
        let total: f64 = part.branches.iter().map(|b| b.hi - b.lo).sum();
        prop_assert!(total <= part.target.len() + 1e-12);
        for w in part.branches.windows(2) {
            prop_assert!(w[0].hi <= w[1].lo, "{:?} overlaps {:?}", w[0], w[1]);
        }
        for b in &part.branches {
            let e = first_entry(&f, b.midpoint(), &part.target, 10_000, 0.0).unwrap();
            prop_assert_eq!(e.n, b.n);
        }
    }

    #[test]
    fn ulam_density_is_stationary_and_lift_keeps_mass(p in 0.35f64..0.65, left: bool) {
        let f = TwoBranchAffine::new(p);
        let part = partition(p, left);
        let u = build_ulam(&f, &part, 64, 64, Mode::Parallel).unwrap();
        let s = stationary_density(&u, 1e-12, 100_000).unwrap();
        prop_assert!(s.last_change <= 1e-12);
        prop_assert!(s.min_covered > 0.0);
        let opts = LiftOptions { circle_bins: 256, sample_density: 4096.0, ..Default::default() };
        let l = lift_measure(&f, &part, &s.density, &opts, Mode::Parallel);
        prop_assert!(l.relative_error <= 1e-3, "mass {} vs {}", l.raw_mass, l.predicted_mass);
    }

    #[test]
    fn arnold_lifts_have_degree_one(a in 0.0f64..2.0, omega in 0.0f64..1.0, k in -(1i64 << 42)..(1i64 << 42)) {
        let f = ArnoldLift::new(a, omega);
        let x = k as f64 / (1u64 << 40) as f64;
        let (y0, y1) = (f.eval(x), f.eval(x + 1.0));
        prop_assert!((y1 - y0 - 1.0).abs() <= f64::EPSILON * y1.abs().max(y0.abs()).max(1.0));
    }

    #[test]
    fn derivative_signs_around_critical_points(a in 0.2f64..1.5, omega in 0.0f64..1.0, t in 0.001f64..0.999) {
        let f = ArnoldLift::new(a, omega);
        let c = locate_critical_points(&f, 1e-13, 2.0, 2.0).unwrap();
        prop_assert!(f.deriv(c.c_plus).abs() < 1e-9 && f.deriv(c.c_minus).abs() < 1e-9);
        let d = c.decreasing_interval();
        prop_assert!(f.deriv(d.lo + t * d.len()) <= 0.0);
        prop_assert!(f.deriv(d.hi + t * (1.0 - d.len())) >= 0.0);
    }

    #[test]
    fn rotation_brackets_are_ordered(a in 0.2f64..1.5, omega in 0.0f64..1.0) {
        let f = ArnoldLift::new(a, omega);
        let c = locate_critical_points(&f, 1e-13, 2.0, 2.0).unwrap();
        let r = rotation_interval(&f, &c, 1e-4, Mode::Sequential).unwrap();
        prop_assert!(r.rho_minus.lo <= r.rho_plus.hi + 1e-4);
    }
}
