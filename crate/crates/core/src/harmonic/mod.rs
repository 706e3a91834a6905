//! Monte Carlo estimates of the killed-walk harmonic functions `V` and `Ṽ`,
//! the one-step harmonicity residual, and the 1D ladder-height oracle.

mod renewal;

pub use renewal::{
    half_line_v, ladder_height_law, renewal_measure_1d, renewal_v_1d, LadderLaw, RenewalBudget, RenewalConvention,
    RenewalMeasure, RenewalValue,
};

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Cone, MAX_DIM};
use crate::rng::{self, domain_id, mix64};
use crate::spectral::SpectralData;
use crate::stats::{mean_se, Estimate};
use crate::steps::StepDistribution;
use crate::walk::{fold_paths, walk_path, Direction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VEstimator {
    /// Control variate when available, direct otherwise.
    Auto,
    /// Sample mean of `u(x+S(n)) 1{τ>n}`.
    Direct,
    /// `ũ(x) − ũ(x+S(τ)) 1{τ≤n}`, with `ũ` the polynomial extension of `u`.
    /// Same mean as the direct estimator when `ũ(x+S(n))` is a martingale.
    ControlVariate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VPlan {
    pub horizons: Vec<u64>,
    pub paths: u64,
    pub estimator: VEstimator,
    pub block_size: u64,
}

impl VPlan {
    pub fn new(horizons: Vec<u64>, paths: u64) -> Self {
        VPlan { horizons, paths, estimator: VEstimator::Auto, block_size: rng::DEFAULT_BLOCK }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: u64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VEstimate {
    pub value: f64,
    pub stderr: f64,
    pub horizon_used: u64,
    pub curve: Vec<CurvePoint>,
    pub stabilized: bool,
    pub estimator: VEstimator,
}

impl VEstimate {
    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.stderr)
    }
}

fn check_horizons(h: &[u64]) -> Result<()> {
    if h.is_empty() || h[0] == 0 || h.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("horizons must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Resolves `Auto` and checks that a requested control variate is valid.
pub fn resolve_estimator(
    requested: VEstimator,
    dist: &StepDistribution,
    spectral: &SpectralData,
) -> Result<VEstimator> {
    let available = spectral.polynomial_extension(&vec![0.0; spectral.dim()]).is_some()
        && dist.mixed_moments_vanish(spectral.frame());
    match requested {
        VEstimator::Direct => Ok(VEstimator::Direct),
        VEstimator::Auto if available => Ok(VEstimator::ControlVariate),
        VEstimator::Auto => Ok(VEstimator::Direct),
        VEstimator::ControlVariate if available => Ok(VEstimator::ControlVariate),
        VEstimator::ControlVariate => Err(Error::InvalidArgument(
            "control variate needs a polynomial extension of u that is a martingale for the walk".into(),
        )),
    }
}

/// Runs one path and writes the per-horizon contributions into `out`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn path_contributions(
    x: &[f64],
    u_x: f64,
    dist: &StepDistribution,
    cone: &Cone,
    spectral: &SpectralData,
    direction: Direction,
    horizons: &[u64],
    estimator: VEstimator,
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
) {
    let mut pos = [0.0; MAX_DIM];
    let mut reached = 0usize;
    let cv = estimator == VEstimator::ControlVariate;
    let exit = walk_path(x, dist, cone, direction, horizons, rng, &mut pos, |k, p| {
        out[k] = if cv { u_x } else { spectral.u(p) };
        reached = k + 1;
    });
    if exit.is_some() {
        let v = if cv { u_x - spectral.polynomial_extension(&pos[..x.len()]).unwrap_or(0.0) } else { 0.0 };
        for o in &mut out[reached..] {
            *o = v;
        }
    }
}

fn stabilization(curve: &[CurvePoint]) -> bool {
    let last = match curve.last() {
        Some(c) => c,
        None => return false,
    };
    curve
        .iter()
        .rev()
        .take(3)
        .all(|c| (c.value - last.value).abs() <= 2.0 * c.stderr.max(last.stderr))
}

fn estimate_impl(
    x: &[f64],
    dist: &StepDistribution,
    cone: &Cone,
    spectral: &SpectralData,
    plan: &VPlan,
    seed: u64,
    direction: Direction,
) -> Result<VEstimate> {
    check_dim(cone.dim(), x.len())?;
    check_dim(dist.dim(), x.len())?;
    check_horizons(&plan.horizons)?;
    if plan.paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    if !cone.is_inside(x) {
        return Err(Error::Precondition("start point is outside the cone".into()));
    }
    let law = match direction {
        Direction::Forward => dist.clone(),
        Direction::Reverse => dist.negated()?,
    };
    let estimator = resolve_estimator(plan.estimator, &law, spectral)?;
    let h = &plan.horizons;
    let k = h.len();
    let u_x = spectral.u(x);
    let label = match direction {
        Direction::Forward => "harmonic/forward",
        Direction::Reverse => "harmonic/reverse",
    };
    let parts = fold_paths(
        plan.paths,
        seed,
        domain_id(label),
        plan.block_size,
        || (vec![0.0; k], vec![0.0; k], vec![0.0; k]),
        |(sum, sq, buf), rng, _| {
            path_contributions(x, u_x, dist, cone, spectral, direction, h, estimator, rng, buf);
            for i in 0..k {
                sum[i] += buf[i];
                sq[i] += buf[i] * buf[i];
            }
        },
    );
    let mut sum = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for (s, q, _) in parts {
        for i in 0..k {
            sum[i] += s[i];
            sq[i] += q[i];
        }
    }
    let curve: Vec<CurvePoint> = (0..k)
        .map(|i| {
            let e = mean_se(plan.paths, sum[i], sq[i]);
            CurvePoint { n: h[i], value: e.value, stderr: e.stderr }
        })
        .collect();
    let last = *curve.last().unwrap();
    Ok(VEstimate {
        value: last.value,
        stderr: last.stderr,
        horizon_used: last.n,
        stabilized: stabilization(&curve),
        curve,
        estimator,
    })
}

/// `E[u(x+S(n)); τ(x)>n]` at each horizon; the value is the largest-horizon estimate.
pub fn estimate_v(
    x: &[f64],
    dist: &StepDistribution,
    cone: &Cone,
    spectral: &SpectralData,
    plan: &VPlan,
    seed: u64,
) -> Result<VEstimate> {
    estimate_impl(x, dist, cone, spectral, plan, seed, Direction::Forward)
}

/// The same for the reversed walk `y − S(n)`.
pub fn estimate_v_tilde(
    y: &[f64],
    dist: &StepDistribution,
    cone: &Cone,
    spectral: &SpectralData,
    plan: &VPlan,
    seed: u64,
) -> Result<VEstimate> {
    estimate_impl(y, dist, cone, spectral, plan, seed, Direction::Reverse)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicityPlan {
    /// Horizon `N` of the inner estimates; the direct estimate uses `N + 1`.
    pub horizon: u64,
    pub outer: u64,
    pub inner: u64,
    pub direct_paths: u64,
    /// Cell side of the spatial cache shared by nearby survivors; `None` disables it.
    pub cache_resolution: Option<f64>,
    pub estimator: VEstimator,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicityResidual {
    pub residual: f64,
    pub stderr: f64,
    pub direct: Estimate,
    pub nested: Estimate,
    pub survivors: u64,
    pub inner_points: usize,
}

fn cell_key(z: &[f64], r: f64) -> Vec<i64> {
    z.iter().map(|v| (v / r).floor() as i64).collect()
}

/// Single-stream estimate of `E[u(z+S(N)); τ(z)>N]` used for nested inner runs.
#[allow(clippy::too_many_arguments)]
fn inner_estimate(
    z: &[f64],
    dist: &StepDistribution,
    cone: &Cone,
    spectral: &SpectralData,
    horizon: u64,
    paths: u64,
    estimator: VEstimator,
    rng: &mut ChaCha8Rng,
) -> Estimate {
    let u_z = spectral.u(z);
    let hs = [horizon];
    let mut buf = [0.0];
    let (mut s, mut q) = (0.0, 0.0);
    for _ in 0..paths {
        path_contributions(z, u_z, dist, cone, spectral, Direction::Forward, &hs, estimator, rng, &mut buf);
        s += buf[0];
        q += buf[0] * buf[0];
    }
    mean_se(paths, s, q)
}

/// `V̂(x) − mean of V̂(x+X₁) 1{x+X₁ ∈ C}`: the direct estimate runs to
/// horizon `N+1`, the nested one draws one step and then estimates `V_N`.
/// Both have mean `E[u(x+S(N+1)); τ>N+1]`, so the residual has mean zero.
pub fn harmonicity_residual(
    x: &[f64],
    dist: &StepDistribution,
    cone: &Cone,
    spectral: &SpectralData,
    plan: &HarmonicityPlan,
    seed: u64,
) -> Result<HarmonicityResidual> {
    if plan.horizon == 0 || plan.outer < 2 || plan.inner < 2 {
        return Err(Error::InvalidArgument("horizon, outer and inner counts must be positive".into()));
    }
    if let Some(r) = plan.cache_resolution {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument("cache resolution must be positive".into()));
        }
    }
    let vplan = VPlan {
        horizons: vec![plan.horizon + 1],
        paths: plan.direct_paths,
        estimator: plan.estimator,
        block_size: rng::DEFAULT_BLOCK,
    };
    let direct = estimate_v(x, dist, cone, spectral, &vplan, seed)?;
    let estimator = direct.estimator;

    let firsts: Vec<Vec<(u64, Vec<f64>)>> = fold_paths(
        plan.outer,
        seed,
        domain_id("harmonic/outer"),
        rng::DEFAULT_BLOCK,
        Vec::new,
        |acc, rng, index| {
            let step = dist.sample(rng);
            let z: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            if cone.is_inside(&z) {
                acc.push((index, z));
            }
        },
    );
    let survivors: Vec<(u64, Vec<f64>)> = firsts.into_iter().flatten().collect();

    // Each survivor is assigned a representative point and a stream key.
    let mut reps: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    let mut assignment = Vec::with_capacity(survivors.len());
    for (index, z) in &survivors {
        let key = match plan.cache_resolution {
            Some(r) => {
                let key = cell_key(z, r);
                let center: Vec<f64> = key.iter().map(|&k| (k as f64 + 0.5) * r).collect();
                if cone.is_inside(&center) {
                    reps.entry(key.clone()).or_insert(center);
                    key
                } else {
                    let key = vec![i64::MIN, *index as i64];
                    reps.insert(key.clone(), z.clone());
                    key
                }
            }
            None => {
                let key = vec![i64::MIN, *index as i64];
                reps.insert(key.clone(), z.clone());
                key
            }
        };
        assignment.push(key);
    }
    let inner_domain = domain_id("harmonic/inner");
    let points: Vec<(&Vec<i64>, &Vec<f64>)> = reps.iter().collect();
    let values: Vec<Estimate> = points
        .par_iter()
        .map(|(key, z)| {
            let stream_key = key.iter().fold(0u64, |h, &k| mix64(h ^ k as u64));
            let mut rng = rng::stream(seed, inner_domain, stream_key);
            inner_estimate(z, dist, cone, spectral, plan.horizon, plan.inner, estimator, &mut rng)
        })
        .collect();
    let mut lookup: BTreeMap<&Vec<i64>, (Estimate, u64)> =
        points.iter().zip(&values).map(|((k, _), e)| (*k, (*e, 0u64))).collect();
    let (mut s, mut q) = (0.0, 0.0);
    for key in &assignment {
        let entry = lookup.get_mut(key).unwrap();
        entry.1 += 1;
        s += entry.0.value;
        q += entry.0.value * entry.0.value;
    }
    let m = plan.outer as f64;
    let base = mean_se(plan.outer, s, q);
    let shared: f64 = if plan.cache_resolution.is_some() {
        lookup.values().map(|(e, c)| (*c as f64 / m).powi(2) * e.stderr * e.stderr).sum()
    } else {
        0.0
    };
    let nested = Estimate::new(base.value, (base.stderr.powi(2) + shared).sqrt());
    let direct_e = direct.estimate();
    Ok(HarmonicityResidual {
        residual: direct_e.value - nested.value,
        stderr: (direct_e.stderr.powi(2) + nested.stderr.powi(2)).sqrt(),
        direct: direct_e,
        nested,
        survivors: survivors.len() as u64,
        inner_points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spectral_data;

    #[test]
    fn control_variate_matches_direct_on_half_line() {
        let c = Cone::half_line();
        let s = spectral_data(&c).unwrap();
        let law = StepDistribution::gaussian(1).unwrap();
        let mut plan = VPlan::new(vec![16, 64, 256], 20_000);
        plan.estimator = VEstimator::Direct;
        let d = estimate_v(&[1.5], &law, &c, &s, &plan, 3).unwrap();
        plan.estimator = VEstimator::Auto;
        let cv = estimate_v(&[1.5], &law, &c, &s, &plan, 4).unwrap();
        assert_eq!(cv.estimator, VEstimator::ControlVariate);
        let z = (d.value - cv.value).abs() / (d.stderr.powi(2) + cv.stderr.powi(2)).sqrt();
        assert!(z < 4.0, "{d:?} {cv:?}");
        assert!(cv.stderr < d.stderr);
    }

    #[test]
    fn wedge_falls_back_to_direct() {
        let c = Cone::wedge(2.0).unwrap();
        let s = spectral_data(&c).unwrap();
        let law = StepDistribution::gaussian(2).unwrap();
        assert_eq!(resolve_estimator(VEstimator::Auto, &law, &s).unwrap(), VEstimator::Direct);
        assert!(resolve_estimator(VEstimator::ControlVariate, &law, &s).is_err());
    }

    #[test]
    fn start_outside_is_rejected() {
        let c = Cone::half_line();
        let s = spectral_data(&c).unwrap();
        let law = StepDistribution::gaussian(1).unwrap();
        let plan = VPlan::new(vec![4], 100);
        assert!(estimate_v(&[-1.0], &law, &c, &s, &plan, 0).is_err());
        assert!(estimate_v_tilde(&[-1.0], &law, &c, &s, &plan, 0).is_err());
    }

    #[test]
    fn stabilization_rule() {
        let p = |n, v| CurvePoint { n, value: v, stderr: 0.1 };
        assert!(stabilization(&[p(1, 5.0), p(2, 1.0), p(3, 1.1), p(4, 1.05)]));
        assert!(!stabilization(&[p(2, 1.0), p(3, 1.5), p(4, 1.05)]));
    }

    #[test]
    fn residual_is_small_on_half_line() {
        let c = Cone::half_line();
        let s = spectral_data(&c).unwrap();
        let law = StepDistribution::gaussian(1).unwrap();
        let plan = HarmonicityPlan {
            horizon: 32,
            outer: 2000,
            inner: 200,
            direct_paths: 50_000,
            cache_resolution: None,
            estimator: VEstimator::Auto,
        };
        let r = harmonicity_residual(&[1.0], &law, &c, &s, &plan, 9).unwrap();
        assert!(r.residual.abs() <= 4.0 * r.stderr, "{r:?}");
        assert_eq!(r.inner_points as u64, r.survivors);
    }
}
