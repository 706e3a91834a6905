//! Closed-form principal eigendata of supported cones and the harmonic
//! function `u(x) = |x|^p m₁(x/|x|)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{wedge_ray_angles, CanonicalShape, Cone};

#[derive(Clone, Debug)]
pub struct SpectralData {
    shape: CanonicalShape,
    frame: Option<DMatrix<f64>>,
    dim: usize,
    lambda1: f64,
    p: f64,
    /// `m₁ = normalization · (basic shape function)`.
    normalization: f64,
    scale: f64,
}

/// Summary written into reports.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralSummary {
    pub shape: String,
    pub lambda1: f64,
    pub p: f64,
    pub normalization: f64,
    pub scale: f64,
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// `∫ over the orthant cap of Π ω_i²`.
pub fn orthant_cap_square_integral(d: usize) -> f64 {
    let d = d as f64;
    (PI / 2.0).powf(d / 2.0) / (2f64.powf(1.5 * d - 1.0) * gamma(1.5 * d))
}

pub fn spectral_data(cone: &Cone) -> Result<SpectralData> {
    let shape = cone.canonical().ok_or_else(|| {
        Error::UnsupportedSpectral(format!(
            "{} is not isometric to a half-line, half-space, orthant or wedge",
            cone.spec()
        ))
    })?;
    let d = cone.dim();
    let (lambda1, p, normalization) = match shape {
        CanonicalShape::HalfLine => (0.0, 1.0, 1.0),
        CanonicalShape::HalfSpace(k) => {
            ((k - 1) as f64, 1.0, 1.0 / (sphere_area(k) / (2.0 * k as f64)).sqrt())
        }
        CanonicalShape::Orthant(k) => {
            let k = k as f64;
            (2.0 * k * (k - 1.0), k, 1.0 / orthant_cap_square_integral(k as usize).sqrt())
        }
        CanonicalShape::Wedge(alpha) => ((PI / alpha).powi(2), PI / alpha, (2.0 / alpha).sqrt()),
    };
    Ok(SpectralData { shape, frame: cone.frame().cloned(), dim: d, lambda1, p, normalization, scale: 1.0 })
}

impl SpectralData {
    pub fn shape(&self) -> CanonicalShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Constant making `m₁` unit in `L²` of the cap (before `scale`).
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Extra factor multiplying `m₁`; 1 means orthonormal.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(&self, c: f64) -> Self {
        SpectralData { scale: c, ..self.clone() }
    }

    pub fn summary(&self) -> SpectralSummary {
        SpectralSummary {
            shape: format!("{:?}", self.shape),
            lambda1: self.lambda1,
            p: self.p,
            normalization: self.normalization,
            scale: self.scale,
        }
    }

    fn to_canonical(&self, x: &[f64], out: &mut [f64]) {
        match &self.frame {
            None => out[..self.dim].copy_from_slice(x),
            Some(q) => {
                for i in 0..self.dim {
                    out[i] = (0..self.dim).map(|j| q[(j, i)] * x[j]).sum();
                }
            }
        }
    }

    /// `m₁` at a unit direction; 0 off the cap.
    pub fn m1(&self, direction: &[f64]) -> f64 {
        let mut z = [0.0; crate::geometry::MAX_DIM];
        self.to_canonical(direction, &mut z);
        let r = z[..self.dim].iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return 0.0;
        }
        for v in z[..self.dim].iter_mut() {
            *v /= r;
        }
        self.shape_value(&z[..self.dim], 1.0)
    }

    /// `u(x)`; zero outside the cone.
    #[inline]
    pub fn u(&self, x: &[f64]) -> f64 {
        let mut z = [0.0; crate::geometry::MAX_DIM];
        self.to_canonical(x, &mut z);
        let z = &z[..self.dim];
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.shape_value(z, r)
    }

    /// Homogeneous extension evaluated on canonical coordinates `z` with `|z| = r`.
    fn shape_value(&self, z: &[f64], r: f64) -> f64 {
        let c = self.normalization * self.scale;
        match self.shape {
            CanonicalShape::HalfLine => {
                if z[0] > 0.0 {
                    c * z[0]
                } else {
                    0.0
                }
            }
            CanonicalShape::HalfSpace(k) => {
                if z[k - 1] > 0.0 {
                    c * z[k - 1]
                } else {
                    0.0
                }
            }
            CanonicalShape::Orthant(_) => {
                if z.iter().all(|&v| v > 0.0) {
                    c * z.iter().product::<f64>()
                } else {
                    0.0
                }
            }
            CanonicalShape::Wedge(alpha) => {
                if r == 0.0 {
                    return 0.0;
                }
                let theta = (z[1].atan2(z[0]) - wedge_ray_angles(alpha).0).rem_euclid(2.0 * PI);
                if theta > 0.0 && theta < alpha {
                    c * r.powf(self.p) * (PI * theta / alpha).sin()
                } else {
                    0.0
                }
            }
        }
    }

    /// Polynomial extension of `u` to the whole space when one exists
    /// (half-lines, half-spaces and orthants). Agrees with `u` on the cone.
    pub fn polynomial_extension(&self, x: &[f64]) -> Option<f64> {
        let mut z = [0.0; crate::geometry::MAX_DIM];
        self.to_canonical(x, &mut z);
        let c = self.normalization * self.scale;
        match self.shape {
            CanonicalShape::HalfLine => Some(c * z[0]),
            CanonicalShape::HalfSpace(k) => Some(c * z[k - 1]),
            CanonicalShape::Orthant(k) => Some(c * z[..k].iter().product::<f64>()),
            CanonicalShape::Wedge(_) => None,
        }
    }

    /// Coordinates relative to the canonical shape.
    pub fn canonical_coords(&self, x: &[f64]) -> Vec<f64> {
        let mut z = [0.0; crate::geometry::MAX_DIM];
        self.to_canonical(x, &mut z);
        z[..self.dim].to_vec()
    }

    pub fn frame(&self) -> Option<&DMatrix<f64>> {
        self.frame.as_ref()
    }
}

/// Fourth-order central-difference Laplacian of `u` at `x`.
pub fn laplacian_residual(cone: &Cone, spectral: &SpectralData, x: &[f64], h: f64) -> Result<f64> {
    check_dim(cone.dim(), x.len())?;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let d = x.len();
    let reach = (h * (d as f64).sqrt()).max(2.0 * h);
    if cone.boundary_distance(x)? <= reach {
        return Err(Error::Precondition(format!(
            "point is within {reach} of the boundary; the stencil would leave the cone"
        )));
    }
    let centre = spectral.u(x);
    let mut y = x.to_vec();
    let mut total = 0.0;
    for i in 0..d {
        let mut at = |s: f64| {
            y[i] = x[i] + s * h;
            let v = spectral.u(&y);
            y[i] = x[i];
            v
        };
        let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        total += (-p2 + 16.0 * p1 - 30.0 * centre + 16.0 * m1 - m2) / (12.0 * h * h);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;

    #[test]
    fn closed_forms() {
        let q = spectral_data(&Cone::wedge(PI / 2.0).unwrap()).unwrap();
        assert!((q.lambda1() - 4.0).abs() < 1e-12);
        assert!((q.p() - 2.0).abs() < 1e-12);
        assert_eq!(spectral_data(&Cone::orthant(3).unwrap()).unwrap().p(), 3.0);
        assert_eq!(spectral_data(&Cone::half_space(5).unwrap()).unwrap().p(), 1.0);
        let h = spectral_data(&Cone::half_line()).unwrap();
        assert_eq!(h.u(&[3.0]), 3.0);
    }

    #[test]
    fn p_matches_eigenvalue_formula() {
        let cones = [
            Cone::half_space(4).unwrap(),
            Cone::orthant(2).unwrap(),
            Cone::orthant(3).unwrap(),
            Cone::wedge(2.0).unwrap(),
            Cone::wedge(5.0).unwrap(),
            Cone::half_line(),
        ];
        for c in &cones {
            let s = spectral_data(c).unwrap();
            let m = c.dim() as f64 / 2.0 - 1.0;
            let p = (s.lambda1() + m * m).sqrt() - m;
            assert!((p - s.p()).abs() < 1e-12, "{:?}", c.spec());
        }
    }

    #[test]
    fn quadrant_value_at_diagonal() {
        let s = spectral_data(&Cone::wedge(PI / 2.0).unwrap()).unwrap();
        assert!((s.u(&[1.0, 1.0]) - 2.0 * (4.0 / PI).sqrt()).abs() < 1e-12);
        let o = spectral_data(&Cone::orthant(2).unwrap()).unwrap();
        assert!((o.u(&[1.0, 1.0]) - 2.0 * (4.0 / PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wedge_m1_has_unit_norm() {
        for alpha in [0.7, PI / 2.0, 2.5, 4.0, 6.0] {
            let s = spectral_data(&Cone::wedge(alpha).unwrap()).unwrap();
            let (a, _) = wedge_ray_angles(alpha);
            let q = adaptive_simpson(|t| s.m1(&[t.cos(), t.sin()]).powi(2), a, a + alpha, 1e-12);
            assert!((q.value - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn laplacian_examples() {
        let o = Cone::orthant(2).unwrap();
        let so = spectral_data(&o).unwrap();
        let r = laplacian_residual(&o, &so, &[2.0, 3.0], 1e-3).unwrap();
        assert!(r.abs() <= 1e-5 * so.u(&[2.0, 3.0]));

        let w = Cone::wedge(2.0 * PI / 3.0).unwrap();
        let sw = spectral_data(&w).unwrap();
        let x = [0.5, 1.0];
        let r = laplacian_residual(&w, &sw, &x, 1e-3).unwrap();
        assert!(r.abs() <= 1e-4 * sw.u(&x).max(1.0));

        let h = Cone::half_space(3).unwrap();
        let sh = spectral_data(&h).unwrap();
        assert!(laplacian_residual(&h, &sh, &[0.0, 0.0, 1.0], 1e-2).unwrap().abs() <= 1e-8);
        assert!(matches!(
            laplacian_residual(&h, &sh, &[0.0, 0.0, 0.01], 1e-2),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn non_orthogonal_three_dim_image_is_unsupported() {
        let c = Cone::new(crate::geometry::ConeSpec::Linear {
            rows: vec![vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            base: Box::new(crate::geometry::ConeSpec::Orthant(3)),
        })
        .unwrap();
        assert!(matches!(spectral_data(&c), Err(Error::UnsupportedSpectral(_))));
    }
}
