//! `H₀`, `κ₀`, `κ₁` and Gaussian-weighted integrals of `u` over the cone.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::geometry::{wedge_ray_angles, CanonicalShape, Cone};
use crate::quad::{adaptive_simpson, QuadValue};
use crate::rng::combine;
use crate::spectral::SpectralData;
use crate::stats::Estimate;
use crate::walk::brownian_survival_curve;

const ANGULAR_TOL: f64 = 1e-8;

/// `∫_0^∞ r^{k p + d − 1} e^{−r²/2} dr`.
fn radial_moment(k: u32, p: f64, d: usize) -> f64 {
    let s = k as f64 * p + d as f64;
    2f64.powf(s / 2.0 - 1.0) * gamma(s / 2.0)
}

/// `∫_C u(y)^k e^{−|y|²/2} dy` for `k ∈ {1, 2}`, as radial closed form times
/// `∫_Σ m₁^k dσ`.
pub fn gaussian_cone_integral(spectral: &SpectralData, power: u32) -> Result<QuadValue> {
    if !(1..=2).contains(&power) {
        return Err(Error::InvalidArgument("power must be 1 or 2".into()));
    }
    let c = spectral.normalization() * spectral.scale();
    let d = spectral.dim();
    let radial = radial_moment(power, spectral.p(), d);
    let angular = match spectral.shape() {
        CanonicalShape::HalfLine => QuadValue { value: c.powi(power as i32), error: 0.0 },
        CanonicalShape::HalfSpace(k) => {
            let v = if power == 1 {
                // m₁ = c·ω_k over the hemisphere integrates to c·|B^{k−1}|.
                c * PI.powf((k as f64 - 1.0) / 2.0) / gamma((k as f64 + 1.0) / 2.0)
            } else {
                c * c * crate::spectral::sphere_area(k) / (2.0 * k as f64)
            };
            QuadValue { value: v, error: 0.0 }
        }
        CanonicalShape::Orthant(k) => {
            let v = if power == 1 {
                c / (2f64.powi(k as i32 - 1) * gamma(k as f64))
            } else {
                c * c * crate::spectral::orthant_cap_square_integral(k)
            };
            QuadValue { value: v, error: 0.0 }
        }
        CanonicalShape::Wedge(alpha) => {
            let (a, _) = wedge_ray_angles(alpha);
            let f = |t: f64| (c * (PI * (t - a) / alpha).sin()).powi(power as i32);
            adaptive_simpson(f, a, a + alpha, ANGULAR_TOL)
        }
    };
    Ok(QuadValue { value: radial * angular.value, error: radial * angular.error })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kappa0Method {
    ClosedForm,
    BrownianFit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kappa0Plan {
    pub paths: u64,
    /// Starting points in cone coordinates; defaults depend on the shape.
    pub starts: Option<Vec<Vec<f64>>>,
    /// Fit times run from `t_first·|x|²` by doubling.
    pub t_first: f64,
    pub time_points: usize,
    /// Time step as a fraction of the first fit time.
    pub dt_fraction: f64,
    pub seed: u64,
}

impl Default for Kappa0Plan {
    fn default() -> Self {
        Kappa0Plan { paths: 200_000, starts: None, t_first: 10.0, time_points: 5, dt_fraction: 1e-3, seed: 0 }
    }
}

/// Extrapolation `r(t) = κ + b·t^{−γ}` of `r(t) = t^{p/2} P̂(τ^bm(x) > t) / u(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Kappa0Fit {
    pub start: Vec<f64>,
    pub times: Vec<f64>,
    pub ratios: Vec<Estimate>,
    pub gamma: f64,
    pub intercept: Estimate,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Kappa0Estimate {
    pub value: f64,
    pub stderr: f64,
    pub method: Kappa0Method,
    pub fits: Vec<Kappa0Fit>,
    /// `|κ̂(x₁) − κ̂(x₂)| / combined stderr`; `None` for closed forms.
    pub universality_z: Option<f64>,
}

impl Kappa0Estimate {
    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.stderr)
    }

    pub fn universality_ok(&self) -> Option<bool> {
        self.universality_z.map(|z| z <= 3.0)
    }
}

/// `κ₀` when it has a closed form: `√(2/π)/c` for half-lines and half-spaces,
/// `(2/π)^{d/2}/c` for orthants, with `c` the normalization of `m₁`.
pub fn kappa0_closed_form(spectral: &SpectralData) -> Option<f64> {
    let c = spectral.normalization() * spectral.scale();
    match spectral.shape() {
        CanonicalShape::HalfLine => Some((2.0 / PI).sqrt() / c),
        CanonicalShape::HalfSpace(_) => {
            // u = c·x_k and the survival probability only sees x_k.
            Some((2.0 / PI).sqrt() / c)
        }
        CanonicalShape::Orthant(k) => Some((2.0 / PI).powf(k as f64 / 2.0) / c),
        CanonicalShape::Wedge(_) => None,
    }
}

fn default_starts(spectral: &SpectralData) -> Result<Vec<Vec<f64>>> {
    let alpha = match spectral.shape() {
        CanonicalShape::Wedge(a) => a,
        _ => return Err(Error::InvalidArgument("default fit starts exist for wedges only".into())),
    };
    let (a, _) = wedge_ray_angles(alpha);
    // Bisector at radius 2√2 and a point at 4/5 of the opening at radius √10:
    // for the quadrant these are (2, 2) and approximately (1, 3).
    let canon = [(a + 0.5 * alpha, 8f64.sqrt()), (a + 0.795 * alpha, 10f64.sqrt())];
    Ok(canon
        .iter()
        .map(|&(t, r)| {
            let z = DVector::from_vec(vec![r * t.cos(), r * t.sin()]);
            match spectral.frame() {
                Some(q) => (q * z).as_slice().to_vec(),
                None => z.as_slice().to_vec(),
            }
        })
        .collect())
}

/// Weighted least squares of `r` on `(1, t^{−γ})`; the intercept variance is
/// computed from per-path survival indicators, so correlation along each path
/// is accounted for exactly.
fn fit_start(
    x: &[f64],
    cone: &Cone,
    spectral: &SpectralData,
    plan: &Kappa0Plan,
    seed: u64,
) -> Result<Kappa0Fit> {
    let u = spectral.u(x);
    if !(u > 0.0) {
        return Err(Error::Precondition("fit start must lie inside the cone".into()));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let times: Vec<f64> = (0..plan.time_points).map(|k| plan.t_first * r2 * 2f64.powi(k as i32)).collect();
    let dt = plan.dt_fraction * times[0];
    let tail = brownian_survival_curve(x, cone, &times, plan.paths, dt, seed)?;
    let p = spectral.p();
    let gamma = match spectral.shape() {
        CanonicalShape::Wedge(alpha) => (PI / (2.0 * alpha)).min(1.0),
        _ => 1.0,
    };
    let scale: Vec<f64> = times.iter().map(|t| t.powf(p / 2.0) / u).collect();
    let ratios: Vec<Estimate> = tail
        .estimates
        .iter()
        .zip(&scale)
        .map(|(e, s)| Estimate::new(e.value * s, e.stderr * s))
        .collect();
    // Weights from binomial variances, floored so that zero counts do not dominate.
    let w: Vec<f64> = ratios.iter().map(|r| 1.0 / r.stderr.max(1e-12).powi(2)).collect();
    let g: Vec<f64> = times.iter().map(|t| t.powf(-gamma)).collect();
    let (sw, sg, sgg) = w.iter().zip(&g).fold((0.0, 0.0, 0.0), |a, (w, g)| (a.0 + w, a.1 + w * g, a.2 + w * g * g));
    let det = sw * sgg - sg * sg;
    if !(det > 0.0) {
        return Err(Error::Degenerate("κ₀ fit design is singular".into()));
    }
    // intercept = Σ c_k r_k with c_k = w_k (sgg − sg g_k) / det
    let coef: Vec<f64> = w.iter().zip(&g).map(|(w, g)| w * (sgg - sg * g) / det).collect();
    let slope_coef: Vec<f64> = w.iter().zip(&g).map(|(w, g)| w * (sw * g - sg) / det).collect();
    let intercept: f64 = coef.iter().zip(&ratios).map(|(c, r)| c * r.value).sum();
    let slope: f64 = slope_coef.iter().zip(&ratios).map(|(c, r)| c * r.value).sum();
    // Per path, Y = Σ_{k : survived to t_k} c_k s_k; survival is monotone in k.
    let n = tail.total as f64;
    let weights: Vec<f64> = coef.iter().zip(&scale).map(|(c, s)| c * s).collect();
    let mut cum = 0.0;
    let (mut ey, mut ey2) = (0.0, 0.0);
    for k in 0..times.len() {
        cum += weights[k];
        let alive_here = tail.survivors[k] as f64 - tail.survivors.get(k + 1).copied().unwrap_or(0) as f64;
        ey += alive_here * cum;
        ey2 += alive_here * cum * cum;
    }
    let mean = ey / n;
    let var = (ey2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(Kappa0Fit { start: x.to_vec(), times, ratios, gamma, intercept: Estimate::new(intercept, (var / n).sqrt()), slope })
}

/// `κ₀` with `P(τ^bm(x) > t) ∼ κ₀ u(x) t^{−p/2}`.
pub fn kappa0(cone: &Cone, spectral: &SpectralData, plan: &Kappa0Plan) -> Result<Kappa0Estimate> {
    if let Some(v) = kappa0_closed_form(spectral) {
        return Ok(Kappa0Estimate {
            value: v,
            stderr: 0.0,
            method: Kappa0Method::ClosedForm,
            fits: Vec::new(),
            universality_z: None,
        });
    }
    let starts = match &plan.starts {
        Some(s) => s.clone(),
        None => default_starts(spectral)?,
    };
    if starts.len() < 2 {
        return Err(Error::InvalidArgument("the universality check needs two starting points".into()));
    }
    let fits: Vec<Kappa0Fit> = starts
        .iter()
        .enumerate()
        .map(|(i, x)| fit_start(x, cone, spectral, plan, combine(plan.seed, i as u64)))
        .collect::<Result<_>>()?;
    let (a, b) = (fits[0].intercept, fits[1].intercept);
    let z = (a.value - b.value).abs() / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt().max(1e-300);
    let (mut sw, mut swx) = (0.0, 0.0);
    for f in &fits {
        let w = 1.0 / f.intercept.stderr.max(1e-12).powi(2);
        sw += w;
        swx += w * f.intercept.value;
    }
    Ok(Kappa0Estimate {
        value: swx / sw,
        stderr: sw.powf(-0.5),
        method: Kappa0Method::BrownianFit,
        fits,
        universality_z: Some(z),
    })
}

/// `κ₁ = κ₀² H₀² ∫_C u² e^{−|y|²/2}` with the error of `κ₀` propagated.
pub fn kappa1(kappa0: Estimate, h0: f64, u2_integral: f64) -> Estimate {
    let f = h0 * h0 * u2_integral;
    Estimate::new(kappa0.value * kappa0.value * f, 2.0 * kappa0.value * kappa0.stderr * f)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantSet {
    pub h0: f64,
    pub kappa0: Kappa0Estimate,
    pub kappa1: Estimate,
    pub u_integral: QuadValue,
    pub u2_integral: QuadValue,
}

impl ConstantSet {
    /// `κ₀H₀`, the constant of the local limit theorem.
    pub fn llt_constant(&self) -> Estimate {
        Estimate::new(self.kappa0.value * self.h0, self.kappa0.stderr * self.h0)
    }
}

pub fn compute_constants(cone: &Cone, spectral: &SpectralData, plan: &Kappa0Plan) -> Result<ConstantSet> {
    let u_integral = gaussian_cone_integral(spectral, 1)?;
    let u2_integral = gaussian_cone_integral(spectral, 2)?;
    let h0 = 1.0 / u_integral.value;
    let k0 = kappa0(cone, spectral, plan)?;
    let k1 = kappa1(k0.estimate(), h0, u2_integral.value);
    Ok(ConstantSet { h0, kappa0: k0, kappa1: k1, u_integral, u2_integral })
}
