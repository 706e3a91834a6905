//! A cone and a step law expressed in shared normalized coordinates.
//!
//! The law is whitened (`T = Σ^{-1/2}`), the same map is applied to the cone,
//! and a final rotation puts `1` in the set of admissible shifts. User points
//! go through the same composite map.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Cone, ConeSpec};
use crate::spectral::{spectral_data, SpectralData};
use crate::steps::{whitening_transform, LatticeStructure, StepDistribution};

#[derive(Clone, Debug)]
pub struct Model {
    cone: Cone,
    steps: StepDistribution,
    transform: DMatrix<f64>,
    spectral: std::result::Result<SpectralData, Error>,
    source_cone: ConeSpec,
}

const NORMALIZED_TOL: f64 = 1e-10;

/// Atom laws supported on ℤ^d without a declared lattice get the integer one.
fn declare_integer_lattice(steps: StepDistribution) -> Result<StepDistribution> {
    let integer = match (steps.atom_list(), steps.lattice()) {
        (Some(atoms), None) => atoms.iter().all(|a| a.point.iter().all(|v| v.fract() == 0.0)),
        _ => false,
    };
    if integer {
        let d = steps.dim();
        steps.with_lattice(LatticeStructure::integer(d))
    } else {
        Ok(steps)
    }
}

impl Model {
    /// Builds the model. With `whiten = false` the law must already be
    /// centered with identity covariance.
    pub fn new(cone: ConeSpec, steps: StepDistribution, whiten: bool) -> Result<Model> {
        let base = Cone::new(cone.clone())?;
        check_dim(base.dim(), steps.dim())?;
        let d = base.dim();
        let steps = declare_integer_lattice(steps)?;
        let (t, white) = if whiten {
            whitening_transform(&steps)?
        } else {
            let m = steps.moments();
            let off = (&m.covariance - DMatrix::<f64>::identity(d, d)).abs().max();
            if m.mean.iter().any(|v| v.abs() > NORMALIZED_TOL) || off > NORMALIZED_TOL {
                return Err(Error::InvalidArgument(
                    "step law is not centered with identity covariance; enable whitening".into(),
                ));
            }
            (DMatrix::identity(d, d), steps)
        };
        let identity = DMatrix::<f64>::identity(d, d);
        let whitened_cone = if t == identity { base } else { base.linear_image(&t)? };
        let (cone_n, q) = whitened_cone.normalized()?;
        let steps_n = if q == identity { white } else { white.linear_image(&q)? };
        let transform = &q * &t;
        let spectral = spectral_data(&cone_n);
        Ok(Model { cone: cone_n, steps: steps_n, transform, spectral, source_cone: cone })
    }

    pub fn cone(&self) -> &Cone {
        &self.cone
    }

    pub fn steps(&self) -> &StepDistribution {
        &self.steps
    }

    pub fn source_cone(&self) -> &ConeSpec {
        &self.source_cone
    }

    /// Map from user coordinates to model coordinates.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    pub fn spectral(&self) -> Result<&SpectralData> {
        self.spectral.as_ref().map_err(|e| e.clone())
    }

    /// Same model with `m₁` multiplied by `c`.
    pub fn with_spectral_scale(&self, c: f64) -> Model {
        let mut m = self.clone();
        if let Ok(s) = &self.spectral {
            m.spectral = Ok(s.with_scale(c));
        }
        m
    }

    pub fn map_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok((&self.transform * DVector::from_column_slice(x)).as_slice().to_vec())
    }

    /// True when the step law has an atom list with a declared lattice whose
    /// characteristic function is periodic on the grid.
    pub fn periodic_lattice(&self, resolution: usize) -> Result<Option<Vec<f64>>> {
        match (self.steps.atom_list(), self.steps.lattice()) {
            (Some(atoms), Some(lattice)) => {
                match crate::steps::check_aperiodicity(atoms, lattice, resolution, std::f64::consts::PI * 2.0)? {
                    crate::steps::Aperiodicity::Periodic { theta, .. } => Ok(Some(theta)),
                    _ => Ok(None),
                }
            }
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CanonicalShape;
    use crate::steps::StepKind;

    #[test]
    fn whitening_is_applied_to_both_sides() {
        let law = StepDistribution::new(StepKind::Linear {
            matrix: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            base: Box::new(StepKind::Gaussian(2)),
        })
        .unwrap();
        let m = Model::new(ConeSpec::Orthant(2), law, true).unwrap();
        match m.spectral().unwrap().shape() {
            CanonicalShape::Wedge(a) => assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-12),
            other => panic!("unexpected shape {other:?}"),
        }
        let x = m.map_point(&[2.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        let mo = m.steps().moments();
        assert!((mo.covariance - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn correlated_law_turns_orthant_into_wedge() {
        let law = StepDistribution::atoms(vec![
            (vec![2.0, -1.0], 0.25),
            (vec![0.0, -1.0], 0.25),
            (vec![-1.0, 1.0], 0.5),
        ])
        .unwrap();
        let m = Model::new(ConeSpec::Orthant(2), law, true).unwrap();
        assert!(matches!(m.spectral().unwrap().shape(), CanonicalShape::Wedge(_)));
        assert!(m.cone().is_admissible_shift(&[1.0, 1.0]));
        let x = m.map_point(&[1.0, 1.0]).unwrap();
        assert!(m.cone().is_inside(&x));
    }

    #[test]
    fn unnormalized_law_without_whitening_is_rejected() {
        let law = StepDistribution::new(StepKind::UniformCube { dim: 1, side: 1.0 }).unwrap();
        assert!(Model::new(ConeSpec::HalfLine, law, false).is_err());
    }

    #[test]
    fn integer_atoms_get_a_lattice() {
        let law = StepDistribution::atoms(vec![(vec![1.0], 0.5), (vec![-1.0], 0.5)]).unwrap();
        let m = Model::new(ConeSpec::HalfLine, law, true).unwrap();
        assert!(m.periodic_lattice(64).unwrap().is_some());
        let lazy = StepDistribution::atoms(vec![(vec![1.0], 0.25), (vec![0.0], 0.5), (vec![-1.0], 0.25)]).unwrap();
        let m = Model::new(ConeSpec::HalfLine, lazy, true).unwrap();
        assert!(m.periodic_lattice(64).unwrap().is_none());
    }
}
