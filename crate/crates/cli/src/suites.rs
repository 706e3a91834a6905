//! Reports for the experiments that have no verifier of their own in the core
//! crate: constants, harmonic-function checks, aperiodicity and the `C_μ` probe.

use conewalk_core::constants::{kappa0_closed_form, ConstantSet, Kappa0Method};
use conewalk_core::context::Model;
use conewalk_core::geometry::Cone;
use conewalk_core::harmonic::{estimate_v, harmonicity_residual, HarmonicityPlan, VEstimator, VPlan};
use conewalk_core::rng::combine;
use conewalk_core::stats::Estimate;
use conewalk_core::steps::{check_aperiodicity, cmu_probe, Aperiodicity, CmuVerdict, StepDistribution};
use conewalk_core::theorems::{ratio_verdict, Check, Table, Verdict, VerifierReport};
use conewalk_core::{Error, Result};
use serde_json::{json, Value};

use crate::config::{AperiodicitySection, CmuProbeSection, HarmonicSection};

const NORMALIZATION_TOL: f64 = 1e-10;

pub fn constants_report(model: &Model, c: &ConstantSet) -> Result<(VerifierReport, Value)> {
    let spectral = model.spectral()?;
    let mut report = VerifierReport::new("constants", NORMALIZATION_TOL);
    let identity = c.h0 * c.u_integral.value;
    report.push_check(
        Check::new("normalization", identity, c.h0 * c.u_integral.error, "1 ± 1e-10", if (identity - 1.0).abs()
            <= NORMALIZATION_TOL
        {
            Verdict::Pass
        } else {
            Verdict::Fail
        })
        .with_detail("H₀ ∫_C u(y) e^{−|y|²/2} dy"),
    );
    if c.kappa0.method == Kappa0Method::BrownianFit {
        let k = c.kappa0.estimate();
        report.push_check(
            Check::new("kappa0_resolved", k.value, k.stderr, "> 3σ above 0", if k.value > 3.0 * k.stderr {
                Verdict::Pass
            } else {
                Verdict::Inconclusive
            })
            .with_detail("too few Brownian survivors in the fit window; adjust [constants] t_first or kappa0_paths"),
        );
    }
    if let Some(z) = c.kappa0.universality_z {
        report.push_check(
            Check::new("kappa0_universality", z, 1.0, "≤ 3", if z <= 3.0 { Verdict::Pass } else { Verdict::Fail })
                .with_detail("κ₀ fits from different start points"),
        );
    }
    report.estimated = c.kappa0.estimate();
    report.predicted = kappa0_closed_form(spectral).unwrap_or(f64::NAN);
    report.rows = Table::new(&[
        "h0",
        "kappa0",
        "kappa0_se",
        "kappa1",
        "kappa1_se",
        "u_integral",
        "u_integral_err",
        "u2_integral",
        "u2_integral_err",
        "p",
    ]);
    report.rows.push(vec![
        c.h0,
        c.kappa0.value,
        c.kappa0.stderr,
        c.kappa1.value,
        c.kappa1.stderr,
        c.u_integral.value,
        c.u_integral.error,
        c.u2_integral.value,
        c.u2_integral.error,
        spectral.p(),
    ]);
    report.plot = Table::new(&["quantity", "value", "low", "high"]);
    for (i, e) in [c.kappa0.estimate(), c.kappa1].iter().enumerate() {
        report.plot.push(vec![i as f64, e.value, e.value - 1.96 * e.stderr, e.value + 1.96 * e.stderr]);
    }
    Ok((report, serde_json::to_value(c).unwrap_or(Value::Null)))
}

pub fn harmonic_report(model: &Model, points: &[Vec<f64>], far: Option<&[f64]>, s: &HarmonicSection, seed: u64) -> Result<(VerifierReport, Value)> {
    let spectral = model.spectral()?;
    let cone = model.cone();
    let dist = model.steps();
    let d = model.dim();
    let p = spectral.p();
    let plan = VPlan::new(s.v.horizons.clone(), s.v.paths);
    let nested = HarmonicityPlan {
        horizon: s.horizon,
        outer: s.outer,
        inner: s.inner,
        direct_paths: s.direct_paths,
        cache_resolution: s.cache_resolution,
        estimator: VEstimator::Auto,
    };

    let mut report = VerifierReport::new("harmonic", s.far_tolerance);
    report.sample_sizes.insert("v_paths".into(), s.v.paths);
    report.sample_sizes.insert("outer".into(), s.outer);
    report.sample_sizes.insert("inner".into(), s.inner);
    let mut cols: Vec<String> = vec!["point".into()];
    cols.extend((0..d).map(|i| format!("x_{i}")));
    cols.extend(["v", "v_se", "u", "residual", "residual_se"].map(String::from));
    report.rows = Table::with_columns(cols);
    report.plot = Table::new(&["n", "point", "value", "low", "high"]);

    let mut details = Vec::new();
    let mut values = Vec::new();
    for (i, x) in points.iter().enumerate() {
        let v = estimate_v(x, dist, cone, spectral, &plan, combine(seed, 2 * i as u64))?;
        let r = harmonicity_residual(x, dist, cone, spectral, &nested, combine(seed, 2 * i as u64 + 1))?;
        let mut row = vec![i as f64];
        row.extend(x.iter().copied());
        row.extend([v.value, v.stderr, spectral.u(x), r.residual, r.stderr]);
        report.rows.push(row);
        for c in &v.curve {
            report.plot.push(vec![c.n as f64, i as f64, c.value, c.value - 1.96 * c.stderr, c.value + 1.96 * c.stderr]);
        }
        report.push_check(Check::new(format!("positivity[{i}]"), v.value, v.stderr, "> 0", if v.value > 0.0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        }));
        report.push_check(
            Check::new(format!("harmonicity[{i}]"), r.residual, r.stderr, "|r| ≤ 3σ", if r.residual.abs() <= 3.0 * r.stderr {
                Verdict::Pass
            } else {
                Verdict::Fail
            })
            .with_detail(format!("{} surviving first steps", r.survivors)),
        );
        if !v.stabilized {
            report.notes.push(format!("V estimate at point {i} did not stabilize"));
        }
        details.push(json!({
            "x": x, "value": v.value, "stderr": v.stderr, "horizon": v.horizon_used,
            "stabilized": v.stabilized, "curve": v.curve, "residual": r,
        }));
        values.push(v.estimate());
    }

    // V(x) ≤ V(x+a) for shifts a with a + C ⊂ C
    for i in 0..points.len() {
        for j in 0..points.len() {
            let a: Vec<f64> = points[j].iter().zip(&points[i]).map(|(b, c)| b - c).collect();
            if i == j || !cone.is_admissible_shift(&a) {
                continue;
            }
            let (vi, vj) = (values[i], values[j]);
            let se = (vi.stderr.powi(2) + vj.stderr.powi(2)).sqrt();
            let gap = vi.value - vj.value;
            report.push_check(Check::new(format!("monotonicity[{i},{j}]"), gap, se, "≤ 3σ", if gap <= 3.0 * se {
                Verdict::Pass
            } else {
                Verdict::Fail
            }));
        }
    }

    let scaled: Vec<(f64, f64)> = points
        .iter()
        .zip(&values)
        .map(|(x, v)| {
            let g = (1.0 + x.iter().map(|t| t * t).sum::<f64>().sqrt().powf(p)) * spectral.scale();
            (v.value / g, v.stderr / g)
        })
        .collect();
    let worst = scaled.iter().copied().fold((0.0f64, 0.0f64), |a, b| if b.0 > a.0 { b } else { a });
    match s.envelope {
        Some(cv) => {
            let ok = scaled.iter().all(|&(v, se)| v - 3.0 * se <= cv);
            report.push_check(
                Check::new("envelope", worst.0, worst.1, format!("≤ {cv}"), if ok { Verdict::Pass } else { Verdict::Fail })
                    .with_detail("max over the grid of V̂(x) / (1+|x|^p), unscaled eigenfunction"),
            );
        }
        None => report.notes.push(format!("growth constant not pinned; smallest feasible C_V = {}", worst.0)),
    }

    if let Some(x) = far {
        let v = estimate_v(x, dist, cone, spectral, &plan, combine(seed, u64::MAX))?;
        let u = spectral.u(x);
        let ratio = Estimate::new(v.value / u, v.stderr / u);
        report.predicted = u;
        report.estimated = v.estimate();
        report.ratio = Some(ratio);
        report.push_check(
            Check::new("far_ratio", ratio.value, ratio.stderr, format!("1 ± {}", s.far_tolerance), ratio_verdict(ratio, s.far_tolerance))
                .with_detail(format!("V̂/u at {x:?}")),
        );
        details.push(json!({ "x": x, "value": v.value, "stderr": v.stderr, "horizon": v.horizon_used,
            "stabilized": v.stabilized, "curve": v.curve, "u": u }));
    }
    Ok((report, Value::Array(details)))
}

pub fn aperiodicity_report(dist: &StepDistribution, s: &AperiodicitySection) -> Result<(VerifierReport, Value)> {
    let atoms = dist
        .atom_list()
        .ok_or_else(|| Error::UnsupportedDistribution("aperiodicity check needs a finite-atom law".into()))?;
    let lattice = dist
        .lattice()
        .ok_or_else(|| Error::InvalidArgument("aperiodicity check needs a lattice; set model.lattice_basis".into()))?;
    let d = dist.dim();
    let res = check_aperiodicity(atoms, lattice, s.resolution, s.window)?;
    let mut report = VerifierReport::new("aperiodicity", 0.0);
    let mut cols = vec!["status".to_string(), "modulus".to_string()];
    cols.extend((0..d).map(|i| format!("theta_{i}")));
    report.rows = Table::with_columns(cols.clone());
    report.plot = Table::with_columns(cols);
    let (status, modulus, theta, verdict) = match &res {
        Aperiodicity::Aperiodic { max_modulus, .. } => (0.0, *max_modulus, vec![f64::NAN; d], Verdict::Pass),
        Aperiodicity::Periodic { theta, modulus, .. } => (1.0, *modulus, theta.clone(), Verdict::Fail),
        Aperiodicity::Inconclusive { theta, modulus } => (2.0, *modulus, theta.clone(), Verdict::Inconclusive),
    };
    let mut row = vec![status, modulus];
    row.extend(theta);
    report.rows.push(row.clone());
    report.plot.push(row);
    report.push_check(
        Check::new("aperiodic", modulus, 0.0, "|φ(θ)| < 1 off the dual lattice", verdict)
            .with_detail(format!("grid {} per axis, window {}", s.resolution, s.window)),
    );
    Ok((report, serde_json::to_value(&res).unwrap_or(Value::Null)))
}

pub fn cmu_report(dist: &StepDistribution, cone: &Cone, s: &CmuProbeSection) -> Result<(VerifierReport, Value)> {
    let atoms = dist
        .atom_list()
        .ok_or_else(|| Error::UnsupportedDistribution("the C_μ probe needs a finite-atom law".into()))?;
    let d = cone.dim();
    let mut report = VerifierReport::new("cmu_probe", 0.0);
    let mut cols: Vec<String> = (0..d).map(|i| format!("x_{i}")).collect();
    cols.extend(["status".to_string(), "steps".to_string()]);
    report.rows = Table::with_columns(cols.clone());
    report.plot = Table::with_columns(cols);
    let mut details = Vec::new();
    let (mut reach, mut unreach, mut unknown) = (0u64, 0u64, 0u64);
    for x in s.all_points() {
        let v = cmu_probe(atoms, cone, &x, s.gamma, s.radius, s.n_max, s.node_budget)?;
        let (status, steps) = match &v {
            CmuVerdict::Reachable { steps, .. } => {
                reach += 1;
                (1.0, *steps as f64)
            }
            CmuVerdict::NotReachable { .. } => {
                unreach += 1;
                (0.0, f64::NAN)
            }
            CmuVerdict::Inconclusive { .. } => {
                unknown += 1;
                (2.0, f64::NAN)
            }
        };
        let mut row = x.clone();
        row.extend([status, steps]);
        report.rows.push(row.clone());
        report.plot.push(row);
        details.push(json!({ "x": x, "result": v }));
    }
    report.sample_sizes.insert("reachable".into(), reach);
    report.sample_sizes.insert("not_reachable".into(), unreach);
    report.sample_sizes.insert("inconclusive".into(), unknown);
    report.push_check(
        Check::new("budget", unknown as f64, 0.0, "every probe decided", if unknown == 0 {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        })
        .with_detail(format!("γ = {}, R = {}, n ≤ {}", s.gamma, s.radius, s.n_max)),
    );
    Ok((report, Value::Array(details)))
}
