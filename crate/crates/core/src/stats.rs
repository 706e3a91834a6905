//! Interval estimates, ratio propagation, log-log fits and histogram comparison.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ci {
    pub point: f64,
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub method: &'static str,
}

/// Two-sided standard normal quantile for `level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn wilson_ci(successes: u64, trials: u64, level: f64) -> Result<Ci> {
    if trials == 0 {
        return Err(Error::InvalidArgument("Wilson interval needs at least one trial".into()));
    }
    if successes > trials {
        return Err(Error::InvalidArgument("more successes than trials".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument("confidence level must lie in (0, 1)".into()));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = normal_quantile(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok(Ci { point: p, low: low.min(p), high: high.max(p), level, method: "wilson" })
}

/// Standard error of a binomial proportion, floored at one pseudo-count so
/// that zero counts do not report zero uncertainty.
pub fn binomial_se(successes: u64, trials: u64) -> f64 {
    let n = trials as f64;
    let p = (successes as f64).max(0.5) / n;
    (p * (1.0 - p).max(0.0) / n).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Estimate { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }
}

/// `a / b` with delta-method standard error; `None` when `b` is within
/// three standard errors of zero.
pub fn ratio_with_ci(a: Estimate, b: Estimate) -> Option<Estimate> {
    if !(b.value > 3.0 * b.stderr) || b.value == 0.0 {
        return None;
    }
    let r = a.value / b.value;
    let se = ((a.stderr * a.stderr + r * r * b.stderr * b.stderr).sqrt()) / b.value;
    Some(Estimate::new(r, se))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub intercept_se: f64,
    pub used: usize,
    /// Indices of input points dropped because the estimate was zero.
    pub dropped: Vec<usize>,
}

pub const MIN_FIT_POINTS: usize = 4;

/// Weighted least squares of `log p` on `log n` with weights `(p/se)²`.
/// All-zero standard errors fall back to ordinary least squares with the
/// residual variance.
pub fn loglog_fit(points: &[(f64, f64, f64)]) -> Result<LogLogFit> {
    let mut dropped = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut vs = Vec::new();
    for (i, &(n, p, se)) in points.iter().enumerate() {
        if !(n > 0.0) {
            return Err(Error::InvalidArgument("abscissae must be positive".into()));
        }
        if !(p > 0.0) {
            dropped.push(i);
            continue;
        }
        xs.push(n.ln());
        ys.push(p.ln());
        vs.push((se / p).powi(2));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidArgument(format!(
            "log-log fit needs at least {MIN_FIT_POINTS} positive points, got {}",
            xs.len()
        )));
    }
    let known = vs.iter().all(|&v| v > 0.0);
    let w: Vec<f64> = if known { vs.iter().map(|v| 1.0 / v).collect() } else { vec![1.0; xs.len()] };
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("abscissae must not all coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).zip(&w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_var, icpt_var) = if known {
        (1.0 / sxx, 1.0 / sw + mx * mx / sxx)
    } else {
        let k = xs.len() as f64;
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let s2 = if k > 2.0 { rss / (k - 2.0) } else { 0.0 };
        (s2 / sxx, s2 * (1.0 / k + mx * mx / sxx))
    };
    Ok(LogLogFit {
        slope,
        slope_se: slope_var.sqrt(),
        intercept,
        intercept_se: icpt_var.sqrt(),
        used: xs.len(),
        dropped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramComparison {
    /// Largest `|observed/predicted − 1|` over bins with enough hits.
    pub max_rel_dev: f64,
    /// Signed deviation and relative standard error at that bin.
    pub worst_signed_dev: f64,
    pub worst_rel_se: f64,
    pub worst_bin: Option<usize>,
    pub bins_used: usize,
    /// Total variation between observed and predicted bin masses, with the
    /// mass outside the bins treated as one extra cell.
    pub tv: f64,
    pub tv_se: f64,
}

pub fn histogram_compare(counts: &[u64], total: u64, predicted: &[f64], min_hits: u64) -> Result<HistogramComparison> {
    if counts.len() != predicted.len() {
        return Err(Error::InvalidArgument("histogram and prediction lengths differ".into()));
    }
    if total == 0 {
        return Err(Error::InvalidArgument("empty histogram".into()));
    }
    let pred_sum: f64 = predicted.iter().sum();
    if pred_sum > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument(format!("predicted masses sum to {pred_sum} > 1")));
    }
    let n = total as f64;
    let mut max_rel_dev: f64 = 0.0;
    let mut worst = None;
    let mut worst_signed = 0.0;
    let mut worst_se = 0.0;
    let mut used = 0;
    let mut tv = 0.0;
    let mut tv_var = 0.0;
    let mut obs_sum = 0.0;
    for (i, (&c, &q)) in counts.iter().zip(predicted).enumerate() {
        let p = c as f64 / n;
        obs_sum += p;
        tv += (p - q).abs();
        tv_var += p * (1.0 - p) / n;
        if c >= min_hits && q > 0.0 {
            used += 1;
            let dev = p / q - 1.0;
            if dev.abs() > max_rel_dev {
                max_rel_dev = dev.abs();
                worst = Some(i);
                worst_signed = dev;
                worst_se = (p * (1.0 - p) / n).sqrt() / q;
            }
        }
    }
    let outside_obs = (1.0 - obs_sum).max(0.0);
    tv += (outside_obs - (1.0 - pred_sum).max(0.0)).abs();
    tv_var += outside_obs * (1.0 - outside_obs) / n;
    Ok(HistogramComparison {
        max_rel_dev,
        worst_signed_dev: worst_signed,
        worst_rel_se: worst_se,
        worst_bin: worst,
        bins_used: used,
        tv: 0.5 * tv,
        tv_se: 0.5 * tv_var.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeFit {
    /// Smallest constant bounding every observation.
    pub constant: f64,
    /// Slope of `log C(n)` against `log n`; positive means the bound degrades.
    pub slope: f64,
    pub slope_se: f64,
    pub diverging: bool,
}

/// Fits the smallest envelope constant over `(n, C(n), se)` and tests whether
/// `C(n)` grows with `n`. Growth is flagged when the log-slope exceeds
/// `slope_tol + 3·se`.
pub fn fit_envelope(values: &[(f64, f64, f64)], slope_tol: f64) -> Result<EnvelopeFit> {
    let constant = values.iter().map(|v| v.1).fold(0.0, f64::max);
    let positive: Vec<(f64, f64, f64)> = values.iter().copied().filter(|v| v.1 > 0.0).collect();
    if positive.len() < 2 {
        return Ok(EnvelopeFit { constant, slope: 0.0, slope_se: f64::INFINITY, diverging: false });
    }
    let (slope, slope_se) = if positive.len() >= MIN_FIT_POINTS {
        let f = loglog_fit(&positive)?;
        (f.slope, f.slope_se)
    } else {
        let (a, b) = (positive[0], positive[positive.len() - 1]);
        let s = (b.1 / a.1).ln() / (b.0 / a.0).ln();
        let se = ((a.2 / a.1).powi(2) + (b.2 / b.1).powi(2)).sqrt() / (b.0 / a.0).ln();
        (s, se)
    };
    Ok(EnvelopeFit { constant, slope, slope_se, diverging: slope > slope_tol + 3.0 * slope_se })
}

/// Mean and standard error of a sample summarised by `(count, sum, sum of squares)`.
pub fn mean_se(count: u64, sum: f64, sum_sq: f64) -> Estimate {
    if count == 0 {
        return Estimate::new(0.0, f64::INFINITY);
    }
    let n = count as f64;
    let mean = sum / n;
    let var = if count > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Estimate::new(mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wilson_examples() {
        let c = wilson_ci(0, 100, 0.95).unwrap();
        assert_eq!(c.low, 0.0);
        assert!((c.high - 0.037).abs() < 1e-3);
        let c = wilson_ci(50, 100, 0.95).unwrap();
        assert!(((c.high - 0.5) - (0.5 - c.low)).abs() < 1e-12);
        assert_eq!(wilson_ci(100, 100, 0.95).unwrap().high, 1.0);
        assert!(wilson_ci(0, 0, 0.95).is_err());
    }

    #[test]
    fn wilson_shrinks_like_root_n() {
        let w = |n: u64| {
            let c = wilson_ci(n * 3 / 10, n, 0.95).unwrap();
            c.high - c.low
        };
        let r = w(1000) / w(100_000);
        assert!((r - 10.0).abs() < 0.2);
    }

    #[test]
    fn ratio_examples() {
        let r = ratio_with_ci(Estimate::exact(2.0), Estimate::exact(1.0)).unwrap();
        assert_eq!((r.value, r.stderr), (2.0, 0.0));
        let r = ratio_with_ci(Estimate::new(1.0, 0.1), Estimate::new(1.0, 0.1)).unwrap();
        assert!((r.stderr - 0.02f64.sqrt()).abs() < 1e-12);
        assert!(ratio_with_ci(Estimate::new(1.0, 0.1), Estimate::new(0.01, 0.02)).is_none());
    }

    #[test]
    fn noiseless_power_law() {
        let pts: Vec<(f64, f64, f64)> = (0..6).map(|k| {
            let n = 2f64.powi(6 + k);
            (n, 3.0 * n.powf(-0.5), 0.0)
        }).collect();
        let f = loglog_fit(&pts).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!(f.slope_se < 1e-10);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(loglog_fit(&pts[..1]).is_err());
    }

    #[test]
    fn zero_estimates_are_dropped() {
        let mut pts: Vec<(f64, f64, f64)> = (1..=5).map(|k| (k as f64, 1.0 / k as f64, 0.01)).collect();
        pts.push((6.0, 0.0, 0.01));
        let f = loglog_fit(&pts).unwrap();
        assert_eq!(f.dropped, vec![5]);
    }

    #[test]
    fn histogram_total_variation() {
        let h = histogram_compare(&[500, 500], 1000, &[0.5, 0.5], 100).unwrap();
        assert_eq!(h.tv, 0.0);
        assert_eq!(h.bins_used, 2);
        let h = histogram_compare(&[600, 400], 1000, &[0.5, 0.5], 100).unwrap();
        assert!((h.tv - 0.1).abs() < 1e-12);
        assert!((h.max_rel_dev - 0.2).abs() < 1e-12);
        assert!(histogram_compare(&[1], 1, &[0.7, 0.7][..1], 0).is_ok());
        assert!(histogram_compare(&[1, 1], 2, &[0.7, 0.7], 0).is_err());
    }

    #[test]
    fn wilson_coverage_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for &(p, n) in &[(0.3f64, 200u64), (0.05, 400), (0.5, 150)] {
            let mut covered = 0;
            let reps = 10_000;
            for _ in 0..reps {
                let s = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
                let c = wilson_ci(s, n, 0.95).unwrap();
                if c.low <= p && p <= c.high {
                    covered += 1;
                }
            }
            let rate = covered as f64 / reps as f64;
            assert!((0.94..=0.96).contains(&rate), "p={p} n={n} coverage {rate}");
        }
    }

    #[test]
    fn fit_recovers_planted_exponent_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hits = 0;
        for _ in 0..200 {
            let pts: Vec<(f64, f64, f64)> = (0..8)
                .map(|k| {
                    let n = 10f64.powf(1.0 + 2.0 * k as f64 / 7.0);
                    let p = 2.0 * n.powf(-0.5);
                    let noise: f64 = rng.sample(rand_distr::StandardNormal);
                    (n, p * (1.0 + 0.01 * noise), 0.01 * p)
                })
                .collect();
            let f = loglog_fit(&pts).unwrap();
            if (f.slope + 0.5).abs() <= 3.0 * f.slope_se {
                hits += 1;
            }
        }
        assert!(hits >= 195);
    }

    #[test]
    fn envelope_detects_growth() {
        let flat: Vec<(f64, f64, f64)> = (0..6).map(|k| (2f64.powi(k + 6), 1.0, 0.01)).collect();
        assert!(!fit_envelope(&flat, 0.1).unwrap().diverging);
        let grow: Vec<(f64, f64, f64)> = (0..6).map(|k| {
            let n = 2f64.powi(k + 6);
            (n, n.sqrt(), 0.01 * n.sqrt())
        }).collect();
        assert!(fit_envelope(&grow, 0.1).unwrap().diverging);
    }
}
