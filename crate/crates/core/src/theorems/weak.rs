//! Conditional law of `(x+S(n))/√n` given `τ(x) > n` against the density
//! `H₀ u(y) e^{−|y|²/2}`.

use super::{ratio_verdict, Check, Table, VerifierReport, Verdict};
use crate::constants::ConstantSet;
use crate::context::Model;
use crate::error::{Error, Result};
use crate::geometry::MAX_DIM;
use crate::quad::box_integral;
use crate::rng::{self, domain_id};
use crate::stats::{histogram_compare, Estimate};
use crate::walk::{fold_paths, walk_path, Direction};

/// Cubic bins of side `width` tiling `[−extent, extent]^d` in scaled coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinSpec {
    pub extent: f64,
    pub width: f64,
}

impl BinSpec {
    fn per_axis(&self) -> usize {
        (2.0 * self.extent / self.width).round() as usize
    }

    fn index(&self, y: &[f64]) -> Option<usize> {
        let m = self.per_axis();
        let mut idx = 0usize;
        for &v in y {
            let k = ((v + self.extent) / self.width).floor();
            if k < 0.0 || k >= m as f64 {
                return None;
            }
            idx = idx * m + k as usize;
        }
        Some(idx)
    }

    fn lower(&self, idx: usize, d: usize) -> Vec<f64> {
        let m = self.per_axis();
        let mut out = vec![0.0; d];
        let mut r = idx;
        for i in (0..d).rev() {
            out[i] = -self.extent + (r % m) as f64 * self.width;
            r /= m;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakLimitOptions {
    pub horizons: Vec<u64>,
    pub paths: u64,
    pub bins: BinSpec,
    pub min_hits: u64,
    pub tolerance: f64,
    pub min_survivors: u64,
}

impl WeakLimitOptions {
    pub fn new(horizons: Vec<u64>, paths: u64, bins: BinSpec) -> Self {
        WeakLimitOptions { horizons, paths, bins, min_hits: 500, tolerance: 0.2, min_survivors: 10_000 }
    }
}

const BIN_QUAD_ORDER: usize = 8;
const BIN_QUAD_PANELS: usize = 3;

pub fn verify_weak_limit(
    model: &Model,
    constants: &ConstantSet,
    x: &[f64],
    opts: &WeakLimitOptions,
    seed: u64,
) -> Result<VerifierReport> {
    let spectral = model.spectral()?;
    let cone = model.cone();
    let d = model.dim();
    let h = &opts.horizons;
    if h.is_empty() || h[0] == 0 || h.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("horizons must be positive and strictly increasing".into()));
    }
    if !(opts.bins.width > 0.0 && opts.bins.extent > 0.0) {
        return Err(Error::InvalidArgument("bin width and extent must be positive".into()));
    }
    let m = opts.bins.per_axis();
    let nbins = m.checked_pow(d as u32).filter(|&b| b <= 1 << 20).ok_or_else(|| {
        Error::InvalidArgument("bin grid too large".into())
    })?;
    if !cone.is_inside(x) {
        return Err(Error::Precondition("start point is outside the cone".into()));
    }
    let k = h.len();
    let scales: Vec<f64> = h.iter().map(|&n| 1.0 / (n as f64).sqrt()).collect();
    let bins = opts.bins;
    let parts = fold_paths(
        opts.paths,
        seed,
        domain_id("weak"),
        rng::DEFAULT_BLOCK,
        || (vec![0u64; k * nbins], vec![0u64; k]),
        |(hist, surv), rng, _| {
            let mut pos = [0.0; MAX_DIM];
            walk_path(x, model.steps(), cone, Direction::Forward, h, rng, &mut pos, |j, p| {
                surv[j] += 1;
                let mut y = [0.0; MAX_DIM];
                for i in 0..d {
                    y[i] = p[i] * scales[j];
                }
                if let Some(b) = bins.index(&y[..d]) {
                    hist[j * nbins + b] += 1;
                }
            });
        },
    );
    let mut hist = vec![0u64; k * nbins];
    let mut surv = vec![0u64; k];
    for (hh, ss) in parts {
        for (a, b) in hist.iter_mut().zip(hh) {
            *a += b;
        }
        for (a, b) in surv.iter_mut().zip(ss) {
            *a += b;
        }
    }

    let h0 = constants.h0;
    let density = |y: &[f64]| h0 * spectral.u(y) * (-0.5 * y.iter().map(|v| v * v).sum::<f64>()).exp();
    let predicted: Vec<f64> = (0..nbins)
        .map(|b| {
            let lo = bins.lower(b, d);
            let hi: Vec<f64> = lo.iter().map(|v| v + bins.width).collect();
            box_integral(density, &lo, &hi, BIN_QUAD_ORDER, BIN_QUAD_PANELS).max(0.0)
        })
        .collect();
    let grid_mass: f64 = predicted.iter().sum();

    let mut report = VerifierReport::new("weak_limit", opts.tolerance);
    report.sample_sizes.insert("paths".into(), opts.paths);
    report.notes.push(format!("predicted mass inside the bin grid: {grid_mass}"));
    let mut cols: Vec<String> = vec!["n".into()];
    cols.extend((0..d).map(|i| format!("bin_center_{i}")));
    cols.extend(["observed".to_string(), "predicted".to_string(), "hits".to_string()]);
    report.rows = Table::with_columns(cols.clone());
    report.plot = Table::with_columns(cols[..cols.len() - 1].to_vec());
    let mut tvs = Vec::new();
    for j in 0..k {
        let counts = &hist[j * nbins..(j + 1) * nbins];
        let total = surv[j];
        for b in 0..nbins {
            if predicted[b] == 0.0 && counts[b] == 0 {
                continue;
            }
            let mut row = vec![h[j] as f64];
            row.extend(bins.lower(b, d).iter().map(|v| v + 0.5 * bins.width));
            row.push(if total > 0 { counts[b] as f64 / total as f64 } else { 0.0 });
            row.push(predicted[b]);
            report.plot.push(row.clone());
            row.push(counts[b] as f64);
            report.rows.push(row);
        }
        if total > 0 {
            let cmp = histogram_compare(counts, total, &predicted, opts.min_hits)?;
            tvs.push((h[j], cmp.tv, cmp.tv_se, total, cmp));
        }
    }
    report.sample_sizes.insert("survivors_top".into(), *surv.last().unwrap());

    let top = match tvs.last() {
        Some(t) if t.0 == *h.last().unwrap() => t,
        _ => {
            report.push_check(Check::new("max_bin_deviation", f64::NAN, f64::NAN, "", Verdict::Inconclusive)
                .with_detail("no survivors at the top horizon"));
            return Ok(report);
        }
    };
    let cmp = &top.4;
    let ratio = Estimate::new(1.0 + cmp.worst_signed_dev, cmp.worst_rel_se);
    let verdict = if top.3 < opts.min_survivors || cmp.bins_used == 0 {
        Verdict::Inconclusive
    } else {
        ratio_verdict(ratio, opts.tolerance)
    };
    report.ratio = Some(ratio);
    report.estimated = Estimate::new(cmp.max_rel_dev, cmp.worst_rel_se);
    report.predicted = 0.0;
    report.push_check(
        Check::new("max_bin_deviation", cmp.max_rel_dev, cmp.worst_rel_se, format!("≤ {}", opts.tolerance), verdict)
            .with_detail(format!("{} bins with ≥ {} hits, {} survivors", cmp.bins_used, opts.min_hits, top.3)),
    );
    report.push_check(Check::new("total_variation", cmp.tv, cmp.tv_se, "decreasing in n", Verdict::Pass));

    // the observed mode must sit within one bin of the predicted one
    let counts = &hist[(k - 1) * nbins..];
    let argmax = |v: &mut dyn Iterator<Item = f64>| {
        v.enumerate().fold((0usize, f64::NEG_INFINITY), |a, (i, x)| if x > a.1 { (i, x) } else { a }).0
    };
    let obs_mode = argmax(&mut counts.iter().map(|&c| c as f64));
    let pred_mode = argmax(&mut predicted.iter().copied());
    let (lo_o, lo_p) = (bins.lower(obs_mode, d), bins.lower(pred_mode, d));
    let gap = lo_o.iter().zip(&lo_p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    report.push_check(
        Check::new("mode", gap, 0.0, format!("≤ {}", bins.width), if gap <= bins.width * (1.0 + 1e-9) {
            Verdict::Pass
        } else {
            Verdict::Fail
        })
        .with_detail(format!("observed mode bin at {lo_o:?}, predicted at {lo_p:?}")),
    );

    if tvs.len() >= 2 {
        let mut worst_z = f64::NEG_INFINITY;
        for w in tvs.windows(2) {
            let se = (w[0].2.powi(2) + w[1].2.powi(2)).sqrt();
            let z = (w[1].1 - w[0].1) / se.max(1e-300);
            worst_z = worst_z.max(z);
        }
        let trend: Vec<String> = tvs.iter().map(|t| format!("n={}: {:.4}±{:.4}", t.0, t.1, t.2)).collect();
        report.push_check(
            Check::new("tv_trend", worst_z, 1.0, "no increase beyond 3σ", if worst_z <= 3.0 {
                Verdict::Pass
            } else {
                Verdict::Fail
            })
            .with_detail(trend.join(", ")),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_round_trip() {
        let b = BinSpec { extent: 2.0, width: 0.5 };
        let i = b.index(&[0.1, -1.9]).unwrap();
        assert_eq!(b.lower(i, 2), vec![0.0, -2.0]);
        assert!(b.index(&[2.0, 0.0]).is_none());
    }
}
