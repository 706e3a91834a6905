//! Local probabilities `P(τ(x) > n, x+S(n) ∈ B)`: the Stone-type local
//! theorem for boxes at distance of order `√n`, and return probabilities for
//! a fixed box.
//!
//! When every box lies inside the cone and the step law has exact box
//! probabilities, the last step is integrated out:
//! `P(τ>n, x+S(n) ∈ B) = E[1{τ>n−1} P(z+X ∈ B)|_{z=x+S(n−1)}]`.

use super::{norm_pow, ratio_verdict, require_aperiodic, Check, Table, VerifierReport, Verdict};
use crate::constants::ConstantSet;
use crate::context::Model;
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, MAX_DIM};
use crate::harmonic::{estimate_v, estimate_v_tilde, VPlan};
use crate::quad::box_integral;
use crate::rng::{self, combine, domain_id};
use crate::stats::{mean_se, ratio_with_ci, Estimate};
use crate::walk::{fold_paths, walk_path, Direction};

/// Cube of side `side` with lower corner `center_factor·√n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LltBox {
    pub center_factor: Vec<f64>,
    pub side: f64,
}

impl LltBox {
    pub fn at(&self, n: u64) -> Result<AxisBox> {
        let s = (n as f64).sqrt();
        let corner: Vec<f64> = self.center_factor.iter().map(|c| c * s).collect();
        AxisBox::cube(&corner, self.side)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LltOptions {
    pub horizons: Vec<u64>,
    pub paths: u64,
    pub boxes: Vec<LltBox>,
    /// Starting points; the first one is the headline point.
    pub x_grid: Vec<Vec<f64>>,
    pub v_plan: VPlan,
    pub tolerance: f64,
    pub min_hits: u64,
    pub conditioning: bool,
}

impl LltOptions {
    pub fn new(horizons: Vec<u64>, paths: u64, boxes: Vec<LltBox>, x_grid: Vec<Vec<f64>>, v_plan: VPlan) -> Self {
        LltOptions { horizons, paths, boxes, x_grid, v_plan, tolerance: 0.2, min_hits: 300, conditioning: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnOptions {
    pub horizons: Vec<u64>,
    pub paths: u64,
    pub v_plan: VPlan,
    /// Midpoints per axis of the grid used for `∫_B Ṽ`.
    pub grid_per_axis: usize,
    pub tolerance: f64,
    pub min_hits: u64,
    /// Pinned envelope constant; the check is skipped when absent.
    pub envelope: Option<f64>,
    pub conditioning: bool,
}

impl ReturnOptions {
    pub fn new(horizons: Vec<u64>, paths: u64, v_plan: VPlan) -> Self {
        ReturnOptions {
            horizons,
            paths,
            v_plan,
            grid_per_axis: 4,
            tolerance: 0.25,
            min_hits: 100,
            envelope: None,
            conditioning: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Tally {
    sum: f64,
    sum_sq: f64,
}

impl Tally {
    fn add(&mut self, w: f64) {
        self.sum += w;
        self.sum_sq += w * w;
    }

    /// Raw hit count, or `(Σw)²/Σw²` for conditioned weights.
    fn effective_hits(&self) -> f64 {
        if self.sum_sq > 0.0 {
            self.sum * self.sum / self.sum_sq
        } else {
            0.0
        }
    }
}

struct Hits {
    estimates: Vec<Vec<Estimate>>,
    effective: Vec<Vec<f64>>,
    conditioned: bool,
}

/// Estimates `P(τ(x) > n_j, x+S(n_j) ∈ B_{j,b})` for every horizon and box.
fn local_probabilities(
    model: &Model,
    x: &[f64],
    horizons: &[u64],
    boxes: &[Vec<AxisBox>],
    paths: u64,
    seed: u64,
    domain: u64,
    conditioning: bool,
) -> Result<Hits> {
    let cone = model.cone();
    let steps = model.steps();
    if !cone.is_inside(x) {
        return Err(Error::Precondition("start point is outside the cone".into()));
    }
    let mut conditioned = conditioning && horizons[0] >= 2;
    if conditioned {
        for b in boxes.iter().flatten() {
            if !cone.box_inside(b)? || steps.box_probability(x, b).is_none() {
                conditioned = false;
                break;
            }
        }
    }
    let k = horizons.len();
    let walked: Vec<u64> = horizons.iter().map(|&n| if conditioned { n - 1 } else { n }).collect();
    let parts = fold_paths(
        paths,
        seed,
        domain,
        rng::DEFAULT_BLOCK,
        || boxes.iter().map(|bs| vec![Tally::default(); bs.len()]).collect::<Vec<_>>(),
        |acc, rng, _| {
            let mut pos = [0.0; MAX_DIM];
            walk_path(x, steps, cone, Direction::Forward, &walked, rng, &mut pos, |j, p| {
                for (t, b) in acc[j].iter_mut().zip(&boxes[j]) {
                    let w = if conditioned {
                        steps.box_probability(p, b).unwrap_or(0.0)
                    } else if b.contains(p) {
                        1.0
                    } else {
                        0.0
                    };
                    if w > 0.0 {
                        t.add(w);
                    }
                }
            });
        },
    );
    let mut total: Vec<Vec<Tally>> = boxes.iter().map(|bs| vec![Tally::default(); bs.len()]).collect();
    for part in parts {
        for (a, b) in total.iter_mut().zip(part) {
            for (s, t) in a.iter_mut().zip(b) {
                s.sum += t.sum;
                s.sum_sq += t.sum_sq;
            }
        }
    }
    debug_assert_eq!(total.len(), k);
    Ok(Hits {
        estimates: total.iter().map(|r| r.iter().map(|t| mean_se(paths, t.sum, t.sum_sq)).collect()).collect(),
        effective: total.iter().map(|r| r.iter().map(Tally::effective_hits).collect()).collect(),
        conditioned,
    })
}

fn check_horizons(h: &[u64]) -> Result<()> {
    if h.is_empty() || h[0] == 0 || h.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("horizons must be positive and strictly increasing".into()));
    }
    Ok(())
}

const LLT_QUAD_ORDER: usize = 8;
const LLT_QUAD_PANELS: usize = 2;

/// Predicted values below this are treated as zero: the ratio is then 0/0.
const NEGLIGIBLE: f64 = 1e-300;

pub fn verify_stone_llt(
    model: &Model,
    constants: &ConstantSet,
    opts: &LltOptions,
    seed: u64,
) -> Result<VerifierReport> {
    let spectral = model.spectral()?;
    let note = require_aperiodic(model, "the local limit theorem")?;
    check_horizons(&opts.horizons)?;
    if opts.boxes.is_empty() || opts.x_grid.is_empty() {
        return Err(Error::InvalidArgument("need at least one box and one starting point".into()));
    }
    let d = model.dim();
    for b in &opts.boxes {
        if b.center_factor.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: b.center_factor.len() });
        }
    }
    let p = spectral.p();
    let h = &opts.horizons;
    let boxes: Vec<Vec<AxisBox>> =
        h.iter().map(|&n| opts.boxes.iter().map(|b| b.at(n)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
    // ∫_B u(y/√n) e^{−|y|²/2n} dy
    let integrals: Vec<Vec<f64>> = h
        .iter()
        .zip(&boxes)
        .map(|(&n, bs)| {
            let s = 1.0 / (n as f64).sqrt();
            bs.iter()
                .map(|b| {
                    box_integral(
                        |y| {
                            let z: Vec<f64> = y.iter().map(|v| v * s).collect();
                            spectral.u(&z) * (-0.5 * z.iter().map(|v| v * v).sum::<f64>()).exp()
                        },
                        b.lower(),
                        b.upper(),
                        LLT_QUAD_ORDER,
                        LLT_QUAD_PANELS,
                    )
                })
                .collect()
        })
        .collect();
    let c = constants.llt_constant();

    let mut report = VerifierReport::new("stone_llt", opts.tolerance);
    report.notes.extend(note);
    report.sample_sizes.insert("paths".into(), opts.paths);
    report.sample_sizes.insert("v_paths".into(), opts.v_plan.paths);
    report.sample_sizes.insert("start_points".into(), opts.x_grid.len() as u64);
    report.rows = Table::new(&["n", "x_index", "box_index", "predicted", "phat", "stderr", "ratio", "ratio_se", "hits"]);
    report.plot = Table::new(&["n", "x_index", "box_index", "ratio", "ratio_se"]);
    let top = h.len() - 1;
    let mut qualified = 0usize;
    let mut worst_dev: Vec<f64> = vec![0.0; opts.boxes.len()];
    for (xi, x) in opts.x_grid.iter().enumerate() {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let xs = combine(seed, xi as u64);
        let v = estimate_v(x, model.steps(), model.cone(), spectral, &opts.v_plan, combine(xs, domain_id("llt/v")))?;
        let hits = local_probabilities(model, x, h, &boxes, opts.paths, xs, domain_id("llt"), opts.conditioning)?;
        if xi == 0 && hits.conditioned {
            report.notes.push("last step integrated exactly; hits are effective sample sizes".into());
        }
        let pref = Estimate::new(
            c.value * v.value,
            ((c.value * v.stderr).powi(2) + (v.value * c.stderr).powi(2)).sqrt(),
        );
        for (j, &n) in h.iter().enumerate() {
            let scale = (n as f64).powf(-(p + d as f64) / 2.0);
            for (bi, &integral) in integrals[j].iter().enumerate() {
                let pred = Estimate::new(pref.value * scale * integral, pref.stderr * scale * integral);
                let est = hits.estimates[j][bi];
                let eff = hits.effective[j][bi];
                let ratio = if pred.value > NEGLIGIBLE { ratio_with_ci(est, pred) } else { None };
                let (rv, rs) = ratio.map(|r| (r.value, r.stderr)).unwrap_or((f64::NAN, f64::NAN));
                let nf = n as f64;
                report.rows.push(vec![nf, xi as f64, bi as f64, pred.value, est.value, est.stderr, rv, rs, eff]);
                report.plot.push(vec![nf, xi as f64, bi as f64, rv, rs]);
                if j != top {
                    continue;
                }
                if xi == 0 && bi == 0 {
                    report.predicted = pred.value;
                    report.estimated = est;
                }
                let name = format!("ratio[x{xi},box{bi}]");
                let target = format!("1 ± {}", opts.tolerance);
                match ratio {
                    None => report.notes.push(format!("{name}: prediction negligible, ratio is 0/0 and not tested")),
                    Some(_) if eff < opts.min_hits as f64 => {
                        report.notes.push(format!("{name}: {eff:.0} hits < {}, not tested", opts.min_hits))
                    }
                    Some(r) => {
                        qualified += 1;
                        worst_dev[bi] = worst_dev[bi].max((r.value - 1.0).abs());
                        if xi == 0 && bi == 0 {
                            report.ratio = Some(r);
                        }
                        report.push_check(
                            Check::new(name, r.value, r.stderr, target, ratio_verdict(r, opts.tolerance))
                                .with_detail(format!("n = {n}, V̂(x) = {} ± {}, {eff:.0} hits", v.value, v.stderr)),
                        );
                    }
                }
            }
        }
    }
    if qualified == 0 {
        report.push_check(
            Check::new("ratio", f64::NAN, f64::NAN, format!("1 ± {}", opts.tolerance), Verdict::Inconclusive)
                .with_detail("no box reached the hit threshold at the top horizon"),
        );
    }
    if opts.x_grid.len() > 1 {
        for (bi, w) in worst_dev.iter().enumerate() {
            report.notes.push(format!("box {bi}: max |ratio − 1| over the start grid = {w}"));
        }
    }
    Ok(report)
}

/// Midpoint rule for `∫_B Ṽ`, with the standard error of the summed estimates.
fn v_tilde_integral(model: &Model, b: &AxisBox, per_axis: usize, plan: &VPlan, seed: u64) -> Result<Estimate> {
    let spectral = model.spectral()?;
    let d = b.dim();
    let cells = per_axis.pow(d as u32);
    let cell_volume = b.volume() / cells as f64;
    let mut value = 0.0;
    let mut var = 0.0;
    for c in 0..cells {
        let mut r = c;
        let y: Vec<f64> = (0..d)
            .map(|i| {
                let k = r % per_axis;
                r /= per_axis;
                let w = (b.upper()[i] - b.lower()[i]) / per_axis as f64;
                b.lower()[i] + (k as f64 + 0.5) * w
            })
            .collect();
        if !model.cone().is_inside(&y) {
            continue;
        }
        let v = estimate_v_tilde(&y, model.steps(), model.cone(), spectral, plan, combine(seed, c as u64))?;
        value += v.value * cell_volume;
        var += (v.stderr * cell_volume).powi(2);
    }
    Ok(Estimate::new(value, var.sqrt()))
}

pub fn verify_return_prob(
    model: &Model,
    constants: &ConstantSet,
    x: &[f64],
    target: &AxisBox,
    opts: &ReturnOptions,
    seed: u64,
) -> Result<VerifierReport> {
    let spectral = model.spectral()?;
    let note = require_aperiodic(model, "the return probability theorem")?;
    check_horizons(&opts.horizons)?;
    let d = model.dim();
    if x.len() != d || target.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: if x.len() != d { x.len() } else { target.dim() } });
    }
    if opts.grid_per_axis == 0 {
        return Err(Error::InvalidArgument("grid_per_axis must be positive".into()));
    }
    let p = spectral.p();
    let h = &opts.horizons;
    let v = estimate_v(x, model.steps(), model.cone(), spectral, &opts.v_plan, combine(seed, domain_id("return/v")))?;
    let vt = v_tilde_integral(model, target, opts.grid_per_axis, &opts.v_plan, combine(seed, domain_id("return/vt")))?;
    let k1 = constants.kappa1;
    // κ₁ V(x) ∫_B Ṽ, relative errors added in quadrature
    let pv = k1.value * v.value * vt.value;
    let rel = ((k1.stderr / k1.value).powi(2) + (v.stderr / v.value).powi(2) + (vt.stderr / vt.value).powi(2)).sqrt();
    let pref = Estimate::new(pv, if pv != 0.0 { pv.abs() * rel } else { f64::INFINITY });
    let boxes: Vec<Vec<AxisBox>> = h.iter().map(|_| vec![target.clone()]).collect();
    let hits = local_probabilities(model, x, h, &boxes, opts.paths, seed, domain_id("return"), opts.conditioning)?;

    let mut report = VerifierReport::new("return_prob", opts.tolerance);
    report.notes.extend(note);
    if hits.conditioned {
        report.notes.push("last step integrated exactly; hits are effective sample sizes".into());
    }
    report.notes.push(format!("V̂(x) = {} ± {}, ∫_B Ṽ̂ = {} ± {}", v.value, v.stderr, vt.value, vt.stderr));
    report.sample_sizes.insert("paths".into(), opts.paths);
    report.sample_sizes.insert("v_paths".into(), opts.v_plan.paths);
    report.rows = Table::new(&["n", "predicted", "phat", "stderr", "ratio", "ratio_se", "hits", "scaled"]);
    report.plot = Table::new(&["n", "predicted", "phat", "stderr"]);
    let exponent = p + d as f64 / 2.0;
    let mut feasible = None;
    let mut scaled = Vec::new();
    for (j, &n) in h.iter().enumerate() {
        let nf = n as f64;
        let scale = nf.powf(-exponent);
        let pred = Estimate::new(pref.value * scale, pref.stderr * scale);
        let est = hits.estimates[j][0];
        let eff = hits.effective[j][0];
        let ratio = if pred.value > NEGLIGIBLE { ratio_with_ci(est, pred) } else { None };
        let (rv, rs) = ratio.map(|r| (r.value, r.stderr)).unwrap_or((f64::NAN, f64::NAN));
        let sc = est.value * nf.powf(exponent);
        report.rows.push(vec![nf, pred.value, est.value, est.stderr, rv, rs, eff, sc]);
        report.plot.push(vec![nf, pred.value, est.value, est.stderr]);
        scaled.push((n, sc, est.stderr * nf.powf(exponent)));
        if eff >= opts.min_hits as f64 {
            if let Some(r) = ratio {
                feasible = Some((n, pred, est, r, eff));
            }
        }
    }
    let target_s = format!("1 ± {}", opts.tolerance);
    match feasible {
        Some((n, pred, est, r, eff)) => {
            report.predicted = pred.value;
            report.estimated = est;
            report.ratio = Some(r);
            let mut check = Check::new("ratio", r.value, r.stderr, target_s, ratio_verdict(r, opts.tolerance))
                .with_detail(format!("largest feasible horizon n = {n}, {eff:.0} hits"));
            if n != *h.last().unwrap() {
                check = check.with_detail(format!("top horizon {} has fewer than {} hits", h.last().unwrap(), opts.min_hits));
            }
            report.push_check(check);
        }
        None => report.push_check(
            Check::new("ratio", f64::NAN, f64::NAN, target_s, Verdict::Inconclusive)
                .with_detail(format!("no horizon reached {} hits", opts.min_hits)),
        ),
    }

    // P̂ n^{p+d/2} ≤ C (1+|x|^p) ∫_B Ṽ̂
    // Ṽ carries the eigenfunction scale; the constant refers to the unscaled one
    let bound_scale = (1.0 + norm_pow(x, p)) * vt.value / spectral.scale();
    let worst = scaled.iter().map(|s| s.1 / bound_scale).fold(0.0, f64::max);
    match opts.envelope {
        Some(cc) => {
            let ok = scaled.iter().all(|&(_, s, se)| (s - 3.0 * se) / bound_scale <= cc);
            report.push_check(
                Check::new("envelope", worst, 0.0, format!("≤ {cc}"), if ok { Verdict::Pass } else { Verdict::Fail })
                    .with_detail("max over n of n^{p+d/2} P̂ / ((1+|x|^p) ∫_B Ṽ̂)"),
            );
        }
        None => report.notes.push(format!("envelope constant not pinned; smallest feasible C = {worst}")),
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConeSpec;
    use crate::steps::StepDistribution;

    #[test]
    fn conditioned_and_raw_estimates_agree() {
        let m = Model::new(ConeSpec::HalfLine, StepDistribution::gaussian(1).unwrap(), false).unwrap();
        let b = vec![vec![AxisBox::new(vec![1.0], vec![2.0]).unwrap()]];
        let a = local_probabilities(&m, &[1.0], &[9], &b, 200_000, 5, 1, true).unwrap();
        let r = local_probabilities(&m, &[1.0], &[9], &b, 200_000, 6, 1, false).unwrap();
        assert!(a.conditioned && !r.conditioned);
        let (ea, er) = (a.estimates[0][0], r.estimates[0][0]);
        assert!((ea.value - er.value).abs() < 4.0 * (ea.stderr.powi(2) + er.stderr.powi(2)).sqrt());
        assert!(ea.stderr < er.stderr);
    }

    #[test]
    fn periodic_law_is_refused() {
        let m = Model::new(ConeSpec::HalfLine, StepDistribution::plus_minus_one(), false).unwrap();
        let k = crate::constants::compute_constants(
            m.cone(),
            m.spectral().unwrap(),
            &crate::constants::Kappa0Plan::default(),
        )
        .unwrap();
        let opts = LltOptions::new(
            vec![16],
            1000,
            vec![LltBox { center_factor: vec![1.0], side: 1.0 }],
            vec![vec![1.0]],
            VPlan::new(vec![8, 16], 1000),
        );
        assert!(matches!(verify_stone_llt(&m, &k, &opts, 1), Err(Error::Refused(_))));
    }
}
