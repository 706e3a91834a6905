//! Monte Carlo and closed-form routes checked against exact references.

use conewalk_core::constants::{compute_constants, kappa0_closed_form, Kappa0Plan};
use conewalk_core::geometry::{AxisBox, Cone};
use conewalk_core::harmonic::{estimate_v, half_line_v, renewal_v_1d, RenewalBudget, RenewalConvention, VEstimator, VPlan};
use conewalk_core::spectral::spectral_data;
use conewalk_core::steps::{Atom, StepDistribution};
use conewalk_core::walk::{brownian_exit_tail, survival_batch, BatchOptions};
use conewalk_oracles as oracle;

fn law(atoms: &[(i64, f64)]) -> StepDistribution {
    StepDistribution::atoms(atoms.iter().map(|&(a, w)| (vec![a as f64], w)).collect()).unwrap()
}

fn atom_list(atoms: &[(i64, f64)]) -> Vec<Atom> {
    atoms.iter().map(|&(a, w)| Atom { point: vec![a as f64], weight: w }).collect()
}

const SRW: [(i64, f64); 2] = [(1, 0.5), (-1, 0.5)];
const LAZY: [(i64, f64); 3] = [(1, 0.25), (0, 0.5), (-1, 0.25)];
const SKEW: [(i64, f64); 2] = [(1, 2.0 / 3.0), (-2, 1.0 / 3.0)];

fn within(est: f64, se: f64, exact: f64, k: f64) -> bool {
    (est - exact).abs() <= k * se
}

#[test]
fn direct_v_estimate_matches_exact_dp() {
    let cone = Cone::half_line();
    let s = spectral_data(&cone).unwrap();
    assert_eq!(s.u(&[2.5]), 2.5);
    let mut plan = VPlan::new(vec![250, 500, 1000], 20_000);
    plan.estimator = VEstimator::Direct;
    let v = estimate_v(&[3.0], &law(&LAZY), &cone, &s, &plan, 7).unwrap();
    let exact = oracle::halfline_harmonic(&LAZY, 3, 1000);
    assert!(within(v.value, v.stderr, exact, 3.0), "{} ± {} vs {exact}", v.value, v.stderr);
}

#[test]
fn overshooting_law_agrees_across_dp_mc_and_renewal() {
    let cone = Cone::half_line();
    let s = spectral_data(&cone).unwrap();
    let v = estimate_v(&[2.0], &law(&SKEW), &cone, &s, &VPlan::new(vec![250, 500, 1000], 20_000), 3).unwrap();
    let dp = oracle::halfline_harmonic(&SKEW, 2, 1000);
    assert!(within(v.value, v.stderr, dp, 3.0), "{} ± {} vs {dp}", v.value, v.stderr);

    // E[u; τ>n] is within (max overshoot)·P(τ>n) of its limit
    let n = 10_000;
    let dp_far = oracle::halfline_harmonic(&SKEW, 2, n);
    let tail = *oracle::halfline_survival(&SKEW, 2, n).last().unwrap();
    let r = half_line_v(&atom_list(&SKEW), 2.0, &RenewalBudget::default()).unwrap();
    assert!((r.value - dp_far).abs() <= tail + r.error_bound + 1e-9, "{} vs {dp_far}", r.value);
}

#[test]
fn simple_walk_renewal_and_fixed_point() {
    let atoms = atom_list(&SRW);
    for x in [0.0, 0.5, 1.0, 2.7, 5.0] {
        let closed = renewal_v_1d(&atoms, x, RenewalConvention::Closed, &RenewalBudget::default()).unwrap();
        assert!(closed.exact);
        assert_eq!(closed.value, x.floor() + 1.0);
    }
    // one step of the killed kernel maps V(x) = x to itself on the integers
    for x in 1..8 {
        let mut w = oracle::KilledLattice1d::new(&SRW, x);
        w.step();
        assert!((w.expect(|y| y) - x as f64).abs() < 1e-15);
        let v = half_line_v(&atoms, x as f64, &RenewalBudget::default()).unwrap();
        assert!((v.value - x as f64).abs() < 1e-12);
    }
}

#[test]
fn survival_batch_matches_exact_tail() {
    let cone = Cone::half_line();
    let horizons = [10u64, 100, 1000];
    let t = survival_batch(&[1.0], &law(&SRW), &cone, &horizons, 100_000, 9, &BatchOptions::default()).unwrap();
    let exact = oracle::halfline_survival(&SRW, 1, 1000);
    for (k, &n) in horizons.iter().enumerate() {
        let e = t.estimate(k);
        assert!(within(e.value, e.stderr, exact[n as usize], 3.5), "n={n}: {} ± {} vs {}", e.value, e.stderr, exact[n as usize]);
    }
}

#[test]
fn exact_tail_approaches_reflection_constant() {
    // √n P(τ(1) > n) → κ₀ V(1) = √(2/π) for the simple walk on the open half-line
    let n = 10_000;
    let s = oracle::halfline_survival(&SRW, 1, n);
    let lhs = (n as f64).sqrt() * s[n];
    let target = (2.0 / std::f64::consts::PI).sqrt();
    assert!((lhs / target - 1.0).abs() < 1e-3, "{lhs} vs {target}");
}

#[test]
fn brownian_tail_matches_reflection_principle() {
    let e = brownian_exit_tail(&[1.0], &Cone::half_line(), 1.0, 40_000, 1e-3, 21).unwrap();
    let exact = oracle::brownian_halfline_survival(1.0, 1.0);
    assert!(within(e.value, e.stderr, exact, 3.0), "{} ± {} vs {exact}", e.value, e.stderr);
}

#[test]
fn brownian_quadrant_tail_is_a_product() {
    let cone = Cone::orthant(2).unwrap();
    let e = brownian_exit_tail(&[1.0, 0.5], &cone, 1.0, 40_000, 1e-3, 22).unwrap();
    let exact = oracle::brownian_quadrant_survival([1.0, 0.5], 1.0);
    assert!(within(e.value, e.stderr, exact, 3.0), "{} ± {} vs {exact}", e.value, e.stderr);
}

#[test]
fn gaussian_box_probability_matches_reference() {
    let g = StepDistribution::gaussian(2).unwrap();
    let b = AxisBox::new(vec![0.3, -1.2], vec![1.7, 0.4]).unwrap();
    let p = g.box_probability(&[0.1, 0.2], &b).unwrap();
    let exact = oracle::gaussian_box(&[0.1, 0.2], b.lower(), b.upper(), 1.0);
    assert!((p - exact).abs() < 1e-9);
}

#[test]
fn half_line_constants() {
    let cone = Cone::half_line();
    let s = spectral_data(&cone).unwrap();
    let root = (2.0 / std::f64::consts::PI).sqrt();
    assert!((kappa0_closed_form(&s).unwrap() - root).abs() < 1e-14);
    let k = compute_constants(&cone, &s, &Kappa0Plan::default()).unwrap();
    assert!((k.h0 * k.u_integral.value - 1.0).abs() < 1e-10);
    assert!((k.kappa1.value - root).abs() <= 1e-10 + 3.0 * k.kappa1.stderr);
}

// The fit carries a discretization bias of a few percent on wide wedges.
#[test]
fn wedge_kappa0_fit_matches_cone_formula() {
    let alpha = 0.75 * std::f64::consts::PI;
    let cone = Cone::wedge(alpha).unwrap();
    let s = spectral_data(&cone).unwrap();
    let exact = oracle::wedge_kappa0(alpha, s.normalization());
    let plan = Kappa0Plan { paths: 60_000, seed: 17, ..Default::default() };
    let k = conewalk_core::constants::kappa0(&cone, &s, &plan).unwrap();
    assert!(k.universality_ok().unwrap());
    assert!((k.value - exact).abs() <= 3.0 * k.stderr + 0.03 * exact, "{} ± {} vs {exact}", k.value, k.stderr);

    let quadrant = spectral_data(&Cone::wedge(std::f64::consts::FRAC_PI_2).unwrap()).unwrap();
    let orthant = spectral_data(&Cone::orthant(2).unwrap()).unwrap();
    let closed = kappa0_closed_form(&orthant).unwrap() * orthant.normalization();
    assert!((oracle::wedge_kappa0(std::f64::consts::FRAC_PI_2, quadrant.normalization()) * quadrant.normalization() - closed / 2.0).abs() < 1e-12);
}
