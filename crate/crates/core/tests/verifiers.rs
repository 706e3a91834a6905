//! Small-scale end-to-end runs of the verifiers.

use conewalk_core::constants::{compute_constants, ConstantSet, Kappa0Plan};
use conewalk_core::context::Model;
use conewalk_core::geometry::{AxisBox, ConeSpec};
use conewalk_core::harmonic::VPlan;
use conewalk_core::steps::StepDistribution;
use conewalk_core::theorems::{
    duality_exact, verify_return_prob, verify_stone_llt, verify_tail, verify_weak_limit, BinSpec, DualityTuple,
    LltBox, LltOptions, ReturnOptions, TailOptions, Verdict, VerifierReport, WeakLimitOptions,
};

fn half_line(scale: f64) -> (Model, ConstantSet) {
    let m = Model::new(ConeSpec::HalfLine, StepDistribution::gaussian(1).unwrap(), false)
        .unwrap()
        .with_spectral_scale(scale);
    let k = compute_constants(m.cone(), m.spectral().unwrap(), &Kappa0Plan::default()).unwrap();
    (m, k)
}

fn v_plan() -> VPlan {
    VPlan::new(vec![64, 128, 256, 512], 20_000)
}

fn tail(scale: f64) -> VerifierReport {
    let (m, k) = half_line(scale);
    let opts = TailOptions::new(vec![64, 128, 256, 512, 1024, 2048], 50_000, v_plan());
    verify_tail(&m, &k, &[2.0], &opts, 5).unwrap()
}

fn llt(scale: f64) -> VerifierReport {
    let (m, k) = half_line(scale);
    let opts = LltOptions::new(
        vec![256, 1024],
        100_000,
        vec![LltBox { center_factor: vec![1.0], side: 1.0 }],
        vec![vec![2.0]],
        v_plan(),
    );
    verify_stone_llt(&m, &k, &opts, 6).unwrap()
}

#[test]
fn half_line_tail_exponent() {
    let r = tail(1.0);
    let slope = r.check("slope").unwrap();
    assert!((-0.6..=-0.4).contains(&slope.value), "{slope:?}");
    assert_ne!(r.verdict, Verdict::Fail, "{:?}", r.checks);
    assert_eq!(r.rows.columns, ["n", "survivors", "phat", "stderr", "lo", "hi", "predicted"]);
    assert_eq!(r.plot.columns, ["n", "phat", "lo", "hi", "predicted"]);
}

#[test]
fn predictions_do_not_depend_on_the_eigenfunction_scale() {
    for (a, b) in [(tail(1.0), tail(2.0)), (llt(1.0), llt(2.0))] {
        assert!(a.predicted.is_finite() && a.predicted > 0.0);
        assert!((a.predicted / b.predicted - 1.0).abs() < 1e-6, "{} vs {}", a.predicted, b.predicted);
    }
}

#[test]
fn half_line_local_limit() {
    let r = llt(1.0);
    assert_eq!(r.verdict, Verdict::Pass, "{:?} {:?}", r.checks, r.notes);
    let ratio = r.ratio.unwrap();
    assert!((ratio.value - 1.0).abs() < 0.2);
}

#[test]
fn far_box_is_inconclusive_not_a_ratio() {
    let (m, k) = half_line(1.0);
    let opts = LltOptions::new(
        vec![64],
        2_000,
        vec![LltBox { center_factor: vec![40.0], side: 1.0 }],
        vec![vec![2.0]],
        VPlan::new(vec![8, 16, 32, 64], 2_000),
    );
    let r = verify_stone_llt(&m, &k, &opts, 1).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert!(r.ratio.is_none());
}

#[test]
fn half_line_weak_limit_mode() {
    let (m, k) = half_line(1.0);
    let opts = WeakLimitOptions::new(vec![64, 256], 60_000, BinSpec { extent: 4.0, width: 0.25 });
    let r = verify_weak_limit(&m, &k, &[2.0], &opts, 2).unwrap();
    let mode = r.check("mode").unwrap();
    assert_eq!(mode.verdict, Verdict::Pass, "{mode:?}");
    assert_eq!(r.plot.columns, ["n", "bin_center_0", "observed", "predicted"]);
}

#[test]
fn half_line_return_probability() {
    let (m, k) = half_line(1.0);
    let b = AxisBox::new(vec![1.0], vec![2.0]).unwrap();
    let mut opts = ReturnOptions::new(vec![25, 50, 100], 100_000, v_plan());
    opts.grid_per_axis = 2;
    let r = verify_return_prob(&m, &k, &[1.0], &b, &opts, 4).unwrap();
    let ratio = r.ratio.unwrap();
    assert!((ratio.value - 1.0).abs() < 0.35, "{ratio:?} {:?}", r.notes);
}

#[test]
fn exact_one_step_duality_on_a_lattice() {
    let law = StepDistribution::atoms(vec![
        (vec![1.0, 0.0], 0.25),
        (vec![-1.0, 0.0], 0.25),
        (vec![0.0, 1.0], 0.25),
        (vec![0.0, -1.0], 0.25),
    ])
    .unwrap();
    let m = Model::new(ConeSpec::Orthant(2), law, true).unwrap();
    for x in [[1.0, 1.0], [2.0, 1.5], [0.5, 3.0]] {
        for y in [[1.0, 2.0], [2.5, 2.5], [3.0, 0.7]] {
            let e = duality_exact(&m, &DualityTuple::new(x.to_vec(), y.to_vec()), 0.3, 0.8, 1).unwrap();
            assert!(e.holds(), "{x:?} {y:?} {e:?}");
        }
    }
}
