//! Invariants checked on random inputs.

use conewalk_core::geometry::{AxisBox, Cone, ConeSpec, ThickenSign};
use conewalk_core::harmonic::{renewal_v_1d, RenewalBudget, RenewalConvention};
use conewalk_core::rng::stream;
use conewalk_core::spectral::spectral_data;
use conewalk_core::stats::{histogram_compare, wilson_ci};
use conewalk_core::steps::{Atom, StepDistribution};
use proptest::prelude::*;
use rand::Rng;

fn cone_spec() -> impl Strategy<Value = ConeSpec> {
    prop_oneof![
        Just(ConeSpec::HalfLine),
        (2usize..=3).prop_map(ConeSpec::Orthant),
        (2usize..=3).prop_map(ConeSpec::HalfSpace),
        (0.2f64..6.0).prop_map(ConeSpec::Wedge),
    ]
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, d)
}

fn cone_and_point() -> impl Strategy<Value = (Cone, Vec<f64>)> {
    cone_spec().prop_flat_map(|s| {
        let c = Cone::new(s).unwrap();
        let d = c.dim();
        (Just(c), point(d))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn membership_is_scale_invariant((c, x) in cone_and_point(), t in 0.01f64..100.0) {
        let y: Vec<f64> = x.iter().map(|v| v * t).collect();
        prop_assert_eq!(c.is_inside(&x), c.is_inside(&y));
    }

    #[test]
    fn admissible_shifts_keep_points_inside((c, x) in cone_and_point(), t in 0.0f64..10.0) {
        let v = c.interior_direction().to_vec();
        prop_assume!(c.is_admissible_shift(&v));
        prop_assume!(c.is_inside(&x));
        let y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + t * b).collect();
        prop_assert!(c.is_inside(&y));
    }

    #[test]
    fn thickened_cones_are_nested((c, x) in cone_and_point(), delta in 0.05f64..2.0) {
        let inner = c.thicken(delta, ThickenSign::Inner).unwrap();
        let outer = c.thicken(delta, ThickenSign::Outer).unwrap();
        if inner.contains(&x).unwrap() {
            prop_assert!(c.is_inside(&x));
        }
        if c.is_inside(&x) {
            prop_assert!(outer.contains(&x).unwrap());
        }
        prop_assert!(inner.t_delta() >= delta / 2.0 - 1e-12);
    }

    #[test]
    fn boxes_meeting_the_cone_fit_in_the_outer_cone((c, x) in cone_and_point(), delta in 0.05f64..2.0) {
        prop_assume!(!c.is_reflex());
        let b = AxisBox::cube(&x, delta).unwrap();
        if c.box_meets(&b).unwrap() {
            let outer = c.thicken(delta, ThickenSign::Outer).unwrap();
            prop_assert!(outer.box_inside(&b).unwrap());
        }
    }

    #[test]
    fn harmonic_profile_is_positive_and_homogeneous((c, x) in cone_and_point(), t in 0.1f64..10.0) {
        let s = spectral_data(&c).unwrap();
        let u = s.u(&x);
        if c.is_inside(&x) {
            prop_assert!(u > 0.0);
            let y: Vec<f64> = x.iter().map(|v| v * t).collect();
            let expected = t.powf(s.p()) * u;
            prop_assert!((s.u(&y) - expected).abs() <= 1e-9 * expected.max(1.0));
        } else {
            prop_assert!(u <= 1e-12);
        }
    }

    #[test]
    fn streams_are_reproducible(master in any::<u64>(), domain in any::<u64>(), index in any::<u64>()) {
        let a: Vec<u64> = (0..4).map({ let mut r = stream(master, domain, index); move |_| r.random() }).collect();
        let b: Vec<u64> = (0..4).map({ let mut r = stream(master, domain, index); move |_| r.random() }).collect();
        let c: Vec<u64> = (0..4).map({ let mut r = stream(master, domain, index.wrapping_add(1)); move |_| r.random() }).collect();
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(a, c);
    }

    #[test]
    fn wilson_interval_brackets_the_proportion(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as u64;
        let ci = wilson_ci(k, n, 0.95).unwrap();
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= ci.low && ci.low <= p + 1e-12 && p <= ci.high + 1e-12 && ci.high <= 1.0);
    }

    #[test]
    fn total_variation_is_a_distance(counts in prop::collection::vec(0u64..1000, 1..20)) {
        let total: u64 = counts.iter().sum::<u64>() + 1;
        let predicted = vec![1.0 / counts.len() as f64; counts.len()];
        let h = histogram_compare(&counts, total, &predicted, 10).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&h.tv));
    }

    #[test]
    fn renewal_function_is_non_decreasing(a in 1i64..4, b in 1i64..4, x in 0.0f64..6.0, dx in 0.0f64..3.0) {
        let atoms = vec![
            Atom { point: vec![a as f64], weight: b as f64 / (a + b) as f64 },
            Atom { point: vec![-b as f64], weight: a as f64 / (a + b) as f64 },
        ];
        let budget = RenewalBudget::default();
        let lo = renewal_v_1d(&atoms, x, RenewalConvention::Closed, &budget).unwrap();
        let hi = renewal_v_1d(&atoms, x + dx, RenewalConvention::Closed, &budget).unwrap();
        prop_assert!(lo.value <= hi.value + lo.error_bound + hi.error_bound);
        prop_assert!(lo.value >= 1.0 - lo.error_bound);
    }

    #[test]
    fn interval_probabilities_add_up(z in -3.0f64..3.0, cuts in prop::collection::vec(-4.0f64..4.0, 1..6)) {
        let g = StepDistribution::gaussian(1).unwrap();
        let mut pts = cuts.clone();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut edges = vec![-60.0];
        edges.extend(pts);
        edges.push(60.0);
        let total: f64 = edges
            .windows(2)
            .filter(|w| w[0] < w[1])
            .map(|w| g.box_probability(&[z], &AxisBox::new(vec![w[0]], vec![w[1]]).unwrap()).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}
