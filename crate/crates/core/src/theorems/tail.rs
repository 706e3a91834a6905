//! `P(τ(x) > n) ∼ κ₀ V(x) n^{−p/2}` and the envelope `K(1+|x|^p) n^{−p/2}`.

use super::{norm_pow, ratio_verdict, Check, Table, VerifierReport, Verdict};
use crate::constants::ConstantSet;
use crate::context::Model;
use crate::error::{Error, Result};
use crate::harmonic::{estimate_v, VPlan};
use crate::rng::{combine, domain_id};
use crate::stats::{loglog_fit, ratio_with_ci, wilson_ci, Estimate, MIN_FIT_POINTS};
use crate::walk::{survival_batch, BatchOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct TailOptions {
    pub horizons: Vec<u64>,
    pub paths: u64,
    pub v_plan: VPlan,
    pub slope_tol: f64,
    pub ratio_tol: f64,
    /// Pinned envelope constant; the check is skipped when absent.
    pub envelope: Option<f64>,
    pub min_survivors: u64,
}

impl TailOptions {
    pub fn new(horizons: Vec<u64>, paths: u64, v_plan: VPlan) -> Self {
        TailOptions { horizons, paths, v_plan, slope_tol: 0.1, ratio_tol: 0.15, envelope: None, min_survivors: 200 }
    }
}

pub fn verify_tail(
    model: &Model,
    constants: &ConstantSet,
    x: &[f64],
    opts: &TailOptions,
    seed: u64,
) -> Result<VerifierReport> {
    let spectral = model.spectral()?;
    let cone = model.cone();
    let h = &opts.horizons;
    if h.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidArgument(format!("tail verification needs at least {MIN_FIT_POINTS} horizons")));
    }
    let batch = BatchOptions { reservoir_capacity: 0, domain: domain_id("tail"), ..Default::default() };
    let table = survival_batch(x, model.steps(), cone, h, opts.paths, seed, &batch)?;
    let p = spectral.p();
    let v = estimate_v(x, model.steps(), cone, spectral, &opts.v_plan, combine(seed, domain_id("tail/v")))?;
    let k0 = constants.kappa0.estimate();
    let pred_const = Estimate::new(
        k0.value * v.value,
        ((k0.value * v.stderr).powi(2) + (v.value * k0.stderr).powi(2)).sqrt(),
    );

    let mut report = VerifierReport::new("tail", opts.ratio_tol);
    report.sample_sizes.insert("paths".into(), opts.paths);
    report.sample_sizes.insert("v_paths".into(), opts.v_plan.paths);
    report.rows = Table::new(&["n", "survivors", "phat", "stderr", "lo", "hi", "predicted"]);
    report.plot = Table::new(&["n", "phat", "lo", "hi", "predicted"]);
    let mut points = Vec::new();
    for (k, &n) in h.iter().enumerate() {
        let e = table.estimate(k);
        let ci = wilson_ci(table.counts[k], table.total, 0.95)?;
        let pred = pred_const.value * (n as f64).powf(-p / 2.0);
        let nf = n as f64;
        report.rows.push(vec![nf, table.counts[k] as f64, e.value, e.stderr, ci.low, ci.high, pred]);
        report.plot.push(vec![nf, e.value, ci.low, ci.high, pred]);
        points.push((nf, e.value, e.stderr));
    }

    // (a) exponent over the upper half of the schedule
    let start = (h.len() / 2).min(h.len() - MIN_FIT_POINTS);
    let slope_check = match loglog_fit(&points[start..]) {
        Ok(fit) => {
            let target = -p / 2.0;
            let verdict = if fit.slope_se > opts.slope_tol {
                Verdict::Inconclusive
            } else if (fit.slope - target).abs() <= opts.slope_tol + 3.0 * fit.slope_se {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            Check::new("slope", fit.slope, fit.slope_se, format!("{target} ± {}", opts.slope_tol), verdict)
                .with_detail(format!("fit over n ≥ {}, {} points used", h[start], fit.used))
        }
        Err(e) => Check::new("slope", f64::NAN, f64::NAN, format!("{}", -p / 2.0), Verdict::Inconclusive)
            .with_detail(e.to_string()),
    };
    report.push_check(slope_check);

    // (b) constant at the largest horizon
    let last = h.len() - 1;
    let n_top = h[last] as f64;
    let scale = n_top.powf(p / 2.0);
    let top = table.estimate(last);
    let lhs = Estimate::new(top.value * scale, top.stderr * scale);
    report.predicted = pred_const.value / scale;
    report.estimated = top;
    let ratio = ratio_with_ci(lhs, pred_const);
    report.ratio = ratio;
    let ratio_check = match ratio {
        Some(r) if table.counts[last] >= opts.min_survivors => {
            Check::new("ratio", r.value, r.stderr, format!("1 ± {}", opts.ratio_tol), ratio_verdict(r, opts.ratio_tol))
        }
        Some(r) => Check::new("ratio", r.value, r.stderr, format!("1 ± {}", opts.ratio_tol), Verdict::Inconclusive)
            .with_detail(format!("{} survivors at the top horizon, need {}", table.counts[last], opts.min_survivors)),
        None => Check::new("ratio", f64::NAN, f64::NAN, "1".to_string(), Verdict::Inconclusive)
            .with_detail("prediction indistinguishable from zero"),
    }
    .with_detail(format!("V̂(x) = {} ± {}, κ₀ = {} ± {}", v.value, v.stderr, k0.value, k0.stderr));
    report.push_check(ratio_check);
    if !v.stabilized {
        report.notes.push("V estimate did not stabilize over its horizon schedule".into());
    }

    // (c) envelope
    let growth = 1.0 + norm_pow(x, p);
    let worst = points
        .iter()
        .map(|&(n, ph, se)| (n.powf(p / 2.0) * ph / growth, n.powf(p / 2.0) * se / growth))
        .fold((0.0f64, 0.0f64), |a, b| if b.0 > a.0 { b } else { a });
    match opts.envelope {
        Some(kc) => {
            let ok = points.iter().all(|&(n, ph, se)| n.powf(p / 2.0) * (ph - 3.0 * se) / growth <= kc);
            report.push_check(
                Check::new("envelope", worst.0, worst.1, format!("≤ {kc}"), if ok { Verdict::Pass } else { Verdict::Fail })
                    .with_detail("max over n of n^{p/2} P̂(τ>n) / (1+|x|^p)"),
            );
        }
        None => report.notes.push(format!("envelope constant not pinned; smallest feasible K = {}", worst.0)),
    }
    Ok(report)
}
