//! Declared lattice structure `G = G₁ ⊕ G₂` and the grid scan for
//! periodicity of the characteristic function.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::Atom;
use crate::error::{check_dim, Error, Result};

/// `G₁` spanned by `vector_basis`, `G₂ = ℤu₁ ⊕ … ⊕ ℤu_t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeStructure {
    pub vector_basis: Vec<Vec<f64>>,
    pub lattice_basis: Vec<Vec<f64>>,
}

const MEMBERSHIP_TOL: f64 = 1e-9;

impl LatticeStructure {
    /// `ℤ^d`.
    pub fn integer(d: usize) -> Self {
        LatticeStructure {
            vector_basis: vec![],
            lattice_basis: (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        }
    }

    /// Lattice vectors given; `G₁` is their orthogonal complement.
    pub fn from_lattice_basis(lattice_basis: Vec<Vec<f64>>, d: usize) -> Result<Self> {
        for u in &lattice_basis {
            check_dim(d, u.len())?;
        }
        let t = lattice_basis.len();
        if t > d {
            return Err(Error::InvalidArgument("more lattice vectors than dimensions".into()));
        }
        let mut vector_basis = Vec::new();
        if t < d {
            let u = DMatrix::from_fn(d, t.max(1), |i, j| if t == 0 { 0.0 } else { lattice_basis[j][i] });
            let svd = u.svd(true, false);
            let full = svd.u.expect("left singular vectors");
            // complete to an orthonormal basis via QR of [U | I]
            let mut stacked = DMatrix::<f64>::zeros(d, full.ncols() + d);
            stacked.view_mut((0, 0), (d, full.ncols())).copy_from(&full);
            stacked.view_mut((0, full.ncols()), (d, d)).copy_from(&DMatrix::<f64>::identity(d, d));
            let q = stacked.qr().q();
            let q = if q.ncols() >= d { q } else { DMatrix::identity(d, d) };
            for j in t..d {
                vector_basis.push(q.column(j).iter().copied().collect());
            }
        }
        let s = LatticeStructure { vector_basis, lattice_basis };
        s.basis_matrix()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.vector_basis.len() + self.lattice_basis.len()
    }

    /// Columns: vector part first, then lattice vectors.
    pub fn basis_matrix(&self) -> Result<DMatrix<f64>> {
        let cols: Vec<&Vec<f64>> = self.vector_basis.iter().chain(&self.lattice_basis).collect();
        let d = cols.first().map_or(0, |c| c.len());
        if d == 0 || cols.len() != d || cols.iter().any(|c| c.len() != d) {
            return Err(Error::InvalidArgument(
                "lattice declaration must give exactly d basis vectors of length d".into(),
            ));
        }
        let b = DMatrix::from_fn(d, d, |i, j| cols[j][i]);
        let sv = b.clone().svd(false, false).singular_values;
        if sv.min() <= 1e-12 * sv.max() {
            return Err(Error::InvalidArgument("lattice basis vectors are linearly dependent".into()));
        }
        Ok(b)
    }

    pub fn linear_image(&self, m: &DMatrix<f64>) -> Self {
        let map = |v: &Vec<f64>| (m * DVector::from_column_slice(v)).as_slice().to_vec();
        LatticeStructure {
            vector_basis: self.vector_basis.iter().map(map).collect(),
            lattice_basis: self.lattice_basis.iter().map(map).collect(),
        }
    }

    /// Coordinates of `x` in the basis; lattice coordinates are integers for
    /// points of `G`.
    pub fn coordinates(&self, x: &[f64]) -> Result<Vec<f64>> {
        let b = self.basis_matrix()?;
        check_dim(b.nrows(), x.len())?;
        let c = b
            .lu()
            .solve(&DVector::from_column_slice(x))
            .ok_or_else(|| Error::InvalidArgument("singular lattice basis".into()))?;
        Ok(c.as_slice().to_vec())
    }

    pub(crate) fn validate_for(&self, d: usize, atoms: Option<&[Atom]>) -> Result<()> {
        let b = self.basis_matrix()?;
        check_dim(d, b.nrows())?;
        if let Some(atoms) = atoms {
            let s = self.vector_basis.len();
            for a in atoms {
                let c = self.coordinates(&a.point)?;
                for (j, v) in c.iter().enumerate().skip(s) {
                    if (v - v.round()).abs() > MEMBERSHIP_TOL {
                        return Err(Error::InvalidArgument(format!(
                            "atom {:?} is not on the declared lattice (coordinate {j} = {v})",
                            a.point
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Aperiodicity {
    /// No grid point off the origin cell reaches modulus 1; certified on the grid only.
    Aperiodic { max_modulus: f64, grid_points: usize },
    /// `|μ̂(θ)| ≥ 1 − 10⁻¹²` at `theta`; `basis_coords` are the angles along the dual basis.
    Periodic { theta: Vec<f64>, basis_coords: Vec<f64>, modulus: f64 },
    /// Some grid point away from the origin comes within 10⁻⁶ of modulus 1.
    Inconclusive { theta: Vec<f64>, modulus: f64 },
}

const WITNESS_TOL: f64 = 1e-12;
const NEAR_TOL: f64 = 1e-6;
const MAX_GRID_POINTS: usize = 100_000_000;

/// Scans `θ = Σ φ_j w_j` (dual basis `w`) with `φ_j ∈ [−π, π]` on lattice
/// directions and `φ_j ∈ [−window, window]` on vector directions.
pub fn check_aperiodicity(
    atoms: &[Atom],
    lattice: &LatticeStructure,
    resolution: usize,
    window: f64,
) -> Result<Aperiodicity> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
    }
    let d = lattice.dim();
    lattice.validate_for(d, Some(atoms))?;
    let s = lattice.vector_basis.len();
    let per_axis = resolution + 1;
    let total = per_axis
        .checked_pow(d as u32)
        .filter(|&n| n <= MAX_GRID_POINTS)
        .ok_or_else(|| Error::InvalidArgument("aperiodicity grid too large".into()))?;
    let coords: Vec<Vec<f64>> = atoms.iter().map(|a| lattice.coordinates(&a.point)).collect::<Result<_>>()?;
    let half: Vec<f64> = (0..d).map(|j| if j < s { window } else { PI }).collect();
    let cell: Vec<f64> = half.iter().map(|h| 2.0 * h / resolution as f64).collect();

    let mut idx = vec![0usize; d];
    let mut phi = vec![0.0; d];
    let mut max_modulus: f64 = 0.0;
    let mut witnesses: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut near: Option<(Vec<f64>, f64)> = None;
    loop {
        let mut r2 = 0.0;
        for j in 0..d {
            phi[j] = -half[j] + idx[j] as f64 * cell[j];
            r2 += (phi[j] / cell[j]).powi(2);
        }
        if r2 >= 1.0 - 1e-9 {
            let (mut re, mut im) = (0.0, 0.0);
            for (a, c) in atoms.iter().zip(&coords) {
                let phase: f64 = c.iter().zip(&phi).map(|(x, t)| x * t).sum();
                re += a.weight * phase.cos();
                im += a.weight * phase.sin();
            }
            let m = (re * re + im * im).sqrt();
            max_modulus = max_modulus.max(m);
            if m >= 1.0 - WITNESS_TOL {
                witnesses.push((phi.clone(), m));
            } else if r2 > 4.0 + 1e-9 && m > 1.0 - NEAR_TOL && near.as_ref().is_none_or(|(_, b)| m > *b) {
                near = Some((phi.clone(), m));
            }
        }
        let mut k = 0;
        loop {
            if k == d {
                break;
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }

    let dual = lattice.basis_matrix()?.try_inverse().expect("validated basis").transpose();
    let to_theta = |phi: &[f64]| (&dual * DVector::from_column_slice(phi)).as_slice().to_vec();
    if !witnesses.is_empty() {
        let canon = |phi: &[f64]| -> Vec<f64> {
            phi.iter()
                .enumerate()
                .map(|(j, &v)| {
                    if j >= s && v <= -PI + 1e-12 {
                        v + 2.0 * PI
                    } else {
                        v
                    }
                })
                .collect()
        };
        let (best, m) = witnesses
            .into_iter()
            .map(|(p, m)| (canon(&p), m))
            .min_by(|(a, _), (b, _)| {
                let na: f64 = a.iter().map(|v| v * v).sum();
                let nb: f64 = b.iter().map(|v| v * v).sum();
                na.partial_cmp(&nb).unwrap().then_with(|| b.partial_cmp(a).unwrap())
            })
            .unwrap();
        return Ok(Aperiodicity::Periodic { theta: to_theta(&best), basis_coords: best, modulus: m });
    }
    if let Some((phi, m)) = near {
        return Ok(Aperiodicity::Inconclusive { theta: to_theta(&phi), modulus: m });
    }
    Ok(Aperiodicity::Aperiodic { max_modulus, grid_points: total })
}
