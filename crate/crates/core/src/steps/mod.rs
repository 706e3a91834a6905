//! Increment laws.

mod lattice;
mod reach;

pub use lattice::{check_aperiodicity, Aperiodicity, LatticeStructure};
pub use reach::{cmu_probe, CmuVerdict};

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{AxisBox, MAX_DIM};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepKind {
    Atoms(Vec<Atom>),
    Gaussian(usize),
    UniformCube { dim: usize, side: f64 },
    /// Independent one-dimensional coordinates.
    Product(Vec<StepKind>),
    Linear { matrix: DMatrix<f64>, base: Box<StepKind> },
}

impl StepKind {
    pub fn dim(&self) -> usize {
        match self {
            StepKind::Atoms(a) => a.first().map_or(0, |a| a.point.len()),
            StepKind::Gaussian(d) => *d,
            StepKind::UniformCube { dim, .. } => *dim,
            StepKind::Product(parts) => parts.iter().map(|p| p.dim()).sum(),
            StepKind::Linear { matrix, .. } => matrix.nrows(),
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepKind::Atoms(atoms) => {
                let cells: Vec<String> = atoms
                    .iter()
                    .map(|a| {
                        if a.point.len() == 1 {
                            format!("({:?},{:?})", a.point[0], a.weight)
                        } else {
                            let c: Vec<String> = a.point.iter().map(|v| format!("{v:?}")).collect();
                            format!("(({}),{:?})", c.join(","), a.weight)
                        }
                    })
                    .collect();
                write!(f, "atoms[{}]", cells.join(";"))
            }
            StepKind::Gaussian(d) => write!(f, "gaussian({d})"),
            StepKind::UniformCube { dim, side } => write!(f, "uniform_cube({dim}, {side:?})"),
            StepKind::Product(parts) => {
                let c: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "product[{}]", c.join(", "))
            }
            StepKind::Linear { matrix, base } => {
                let rows: Vec<String> = crate::geometry::matrix_rows(matrix)
                    .iter()
                    .map(|r| {
                        let c: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
                        format!("[{}]", c.join(", "))
                    })
                    .collect();
                write!(f, "linear([{}]; {base})", rows.join(", "))
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Sampler {
    Atoms { dim: usize, points: Vec<f64>, cumulative: Vec<f64> },
    Gaussian(usize),
    Cube { dim: usize, side: f64 },
    Product(Vec<Sampler>),
    Linear { dim: usize, matrix: Vec<f64>, base: Box<Sampler> },
}

impl Sampler {
    fn build(kind: &StepKind) -> Sampler {
        match kind {
            StepKind::Atoms(atoms) => {
                let dim = atoms[0].point.len();
                let mut acc = 0.0;
                let cumulative = atoms
                    .iter()
                    .map(|a| {
                        acc += a.weight;
                        acc
                    })
                    .collect();
                let points = atoms.iter().flat_map(|a| a.point.iter().copied()).collect();
                Sampler::Atoms { dim, points, cumulative }
            }
            StepKind::Gaussian(d) => Sampler::Gaussian(*d),
            StepKind::UniformCube { dim, side } => Sampler::Cube { dim: *dim, side: *side },
            StepKind::Product(parts) => Sampler::Product(parts.iter().map(Sampler::build).collect()),
            StepKind::Linear { matrix, base } => Sampler::Linear {
                dim: matrix.nrows(),
                matrix: matrix.transpose().as_slice().to_vec(),
                base: Box::new(Sampler::build(base)),
            },
        }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Sampler::Atoms { dim, points, cumulative } => {
                let total = *cumulative.last().unwrap();
                let u: f64 = rng.random::<f64>() * total;
                let mut k = 0;
                if cumulative.len() <= 16 {
                    while k + 1 < cumulative.len() && u >= cumulative[k] {
                        k += 1;
                    }
                } else {
                    k = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
                }
                out[..*dim].copy_from_slice(&points[k * dim..(k + 1) * dim]);
            }
            Sampler::Gaussian(d) => {
                for v in out[..*d].iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            Sampler::Cube { dim, side } => {
                for v in out[..*dim].iter_mut() {
                    *v = (rng.random::<f64>() - 0.5) * side;
                }
            }
            Sampler::Product(parts) => {
                let mut offset = 0;
                for p in parts {
                    let k = p.dim();
                    p.sample(rng, &mut out[offset..offset + k]);
                    offset += k;
                }
            }
            Sampler::Linear { dim, matrix, base } => {
                let mut tmp = [0.0; MAX_DIM];
                base.sample(rng, &mut tmp[..*dim]);
                for i in 0..*dim {
                    let row = &matrix[i * dim..(i + 1) * dim];
                    out[i] = row.iter().zip(&tmp[..*dim]).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            Sampler::Atoms { dim, .. } | Sampler::Cube { dim, .. } | Sampler::Linear { dim, .. } => *dim,
            Sampler::Gaussian(d) => *d,
            Sampler::Product(parts) => parts.iter().map(|p| p.dim()).sum(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepDistribution {
    kind: StepKind,
    dim: usize,
    lattice: Option<LatticeStructure>,
    sampler: Sampler,
}

/// Exact first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

fn validate(kind: &StepKind) -> Result<()> {
    match kind {
        StepKind::Atoms(atoms) => {
            if atoms.is_empty() {
                return Err(Error::InvalidArgument("atom list is empty".into()));
            }
            let d = atoms[0].point.len();
            if d == 0 || d > MAX_DIM {
                return Err(Error::InvalidArgument(format!("atom dimension {d} unsupported")));
            }
            let mut total = 0.0;
            for a in atoms {
                check_dim(d, a.point.len())?;
                if !(a.weight > 0.0 && a.weight.is_finite()) {
                    return Err(Error::InvalidArgument("atom weights must be positive".into()));
                }
                if a.point.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("atom coordinates must be finite".into()));
                }
                total += a.weight;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("atom weights sum to {total}, not 1")));
            }
            Ok(())
        }
        StepKind::Gaussian(d) => {
            if *d == 0 || *d > MAX_DIM {
                return Err(Error::InvalidArgument(format!("dimension {d} unsupported")));
            }
            Ok(())
        }
        StepKind::UniformCube { dim, side } => {
            if *dim == 0 || *dim > MAX_DIM || !(*side > 0.0 && side.is_finite()) {
                return Err(Error::InvalidArgument("uniform cube needs 1 ≤ d ≤ 8 and side > 0".into()));
            }
            Ok(())
        }
        StepKind::Product(parts) => {
            if parts.is_empty() {
                return Err(Error::InvalidArgument("empty product".into()));
            }
            for p in parts {
                validate(p)?;
                if p.dim() != 1 {
                    return Err(Error::InvalidArgument("product factors must be one-dimensional".into()));
                }
            }
            if parts.len() > MAX_DIM {
                return Err(Error::InvalidArgument("too many product factors".into()));
            }
            Ok(())
        }
        StepKind::Linear { matrix, base } => {
            validate(base)?;
            if !matrix.is_square() || matrix.nrows() != base.dim() {
                return Err(Error::InvalidArgument("linear map must be square and match the base".into()));
            }
            if matrix.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("linear map has non-finite entries".into()));
            }
            Ok(())
        }
    }
}

/// `P(lo ≤ z + c·X ≤ hi)` for one coordinate of a one-dimensional law.
fn interval_probability(kind: &StepKind, z: f64, c: f64, lo: f64, hi: f64) -> Option<f64> {
    let (a, b) = if c > 0.0 { ((lo - z) / c, (hi - z) / c) } else { ((hi - z) / c, (lo - z) / c) };
    match kind {
        StepKind::Gaussian(1) => Some((crate::stats::normal_cdf(b) - crate::stats::normal_cdf(a)).max(0.0)),
        StepKind::UniformCube { dim: 1, side } => {
            let h = side / 2.0;
            Some(((b.min(h) - a.max(-h)) / side).max(0.0))
        }
        StepKind::Atoms(atoms) => {
            Some(atoms.iter().filter(|t| t.point[0] >= a && t.point[0] <= b).map(|t| t.weight).sum())
        }
        _ => None,
    }
}

fn is_orthogonal(m: &DMatrix<f64>) -> bool {
    (m * m.transpose() - DMatrix::<f64>::identity(m.nrows(), m.nrows())).abs().max() < 1e-10
}

/// Pushes linear maps into atom lists and composes nested maps.
fn simplify(kind: StepKind) -> StepKind {
    match kind {
        StepKind::Linear { matrix, base } => match simplify(*base) {
            StepKind::Atoms(atoms) => StepKind::Atoms(
                atoms
                    .into_iter()
                    .map(|a| {
                        let v = &matrix * DVector::from_vec(a.point);
                        Atom { point: v.as_slice().to_vec(), weight: a.weight }
                    })
                    .collect(),
            ),
            StepKind::Linear { matrix: inner, base } => {
                StepKind::Linear { matrix: &matrix * inner, base }
            }
            other => StepKind::Linear { matrix, base: Box::new(other) },
        },
        StepKind::Product(parts) => StepKind::Product(parts.into_iter().map(simplify).collect()),
        other => other,
    }
}

impl StepDistribution {
    pub fn new(kind: StepKind) -> Result<Self> {
        validate(&kind)?;
        let kind = simplify(kind);
        let sampler = Sampler::build(&kind);
        Ok(StepDistribution { dim: kind.dim(), kind, lattice: None, sampler })
    }

    /// Exact `P(z + X ∈ b)` when the law has a product structure after at
    /// most a diagonal map (or is an orthogonal image of a standard Gaussian).
    pub fn box_probability(&self, z: &[f64], b: &AxisBox) -> Option<f64> {
        if z.len() != self.dim || b.dim() != self.dim {
            return None;
        }
        let (lo, hi) = (b.lower(), b.upper());
        let coords = |kinds: &dyn Fn(usize) -> (StepKind, f64)| -> Option<f64> {
            let mut p = 1.0;
            for i in 0..self.dim {
                let (k, c) = kinds(i);
                p *= interval_probability(&k, z[i], c, lo[i], hi[i])?;
            }
            Some(p)
        };
        match &self.kind {
            StepKind::Atoms(atoms) => Some(
                atoms
                    .iter()
                    .filter(|a| b.contains(&a.point.iter().zip(z).map(|(p, q)| p + q).collect::<Vec<_>>()))
                    .map(|a| a.weight)
                    .sum(),
            ),
            StepKind::Gaussian(_) => coords(&|_| (StepKind::Gaussian(1), 1.0)),
            StepKind::UniformCube { side, .. } => coords(&|_| (StepKind::UniformCube { dim: 1, side: *side }, 1.0)),
            StepKind::Product(parts) => coords(&|i| (parts[i].clone(), 1.0)),
            StepKind::Linear { matrix, base } => {
                let diagonal = (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || matrix[(i, j)] == 0.0))
                    && (0..self.dim).all(|i| matrix[(i, i)] != 0.0);
                match base.as_ref() {
                    StepKind::Gaussian(_) if is_orthogonal(matrix) => coords(&|_| (StepKind::Gaussian(1), 1.0)),
                    StepKind::Gaussian(_) if diagonal => coords(&|i| (StepKind::Gaussian(1), matrix[(i, i)])),
                    StepKind::UniformCube { side, .. } if diagonal => {
                        coords(&|i| (StepKind::UniformCube { dim: 1, side: *side }, matrix[(i, i)]))
                    }
                    StepKind::Product(parts) if diagonal => coords(&|i| (parts[i].clone(), matrix[(i, i)])),
                    _ => None,
                }
            }
        }
    }

    pub fn atoms(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        Self::new(StepKind::Atoms(
            atoms.into_iter().map(|(point, weight)| Atom { point, weight }).collect(),
        ))
    }

    pub fn gaussian(d: usize) -> Result<Self> {
        Self::new(StepKind::Gaussian(d))
    }

    /// The symmetric simple walk on ℤ with the integer lattice declared.
    pub fn plus_minus_one() -> Self {
        Self::atoms(vec![(vec![1.0], 0.5), (vec![-1.0], 0.5)])
            .expect("valid law")
            .with_lattice(LatticeStructure::integer(1))
            .expect("valid lattice")
    }

    pub fn with_lattice(mut self, lattice: LatticeStructure) -> Result<Self> {
        lattice.validate_for(self.dim, self.atom_list())?;
        self.lattice = Some(lattice);
        Ok(self)
    }

    pub fn kind(&self) -> &StepKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lattice(&self) -> Option<&LatticeStructure> {
        self.lattice.as_ref()
    }

    pub fn atom_list(&self) -> Option<&[Atom]> {
        match &self.kind {
            StepKind::Atoms(a) => Some(a),
            _ => None,
        }
    }

    /// One draw written into `out[..dim]`.
    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.sampler.sample(rng, out);
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut out);
        out
    }

    pub fn moments(&self) -> Moments {
        kind_moments(&self.kind)
    }

    /// Image of the law (and of any declared lattice) under `m`.
    pub fn linear_image(&self, m: &DMatrix<f64>) -> Result<Self> {
        let mut out = Self::new(StepKind::Linear { matrix: m.clone(), base: Box::new(self.kind.clone()) })?;
        if let Some(l) = &self.lattice {
            out = out.with_lattice(l.linear_image(m))?;
        }
        Ok(out)
    }

    /// The law of `−X`.
    pub fn negated(&self) -> Result<Self> {
        let d = self.dim;
        self.linear_image(&(-DMatrix::<f64>::identity(d, d)))
    }

    /// True when `E[Π_{i∈S} (QᵀX)_i] = 0` for every non-empty index set `S`,
    /// which makes a product of coordinates in the frame `Q` a martingale
    /// along the walk. Conservative: returns false when undecided.
    pub fn mixed_moments_vanish(&self, frame: Option<&DMatrix<f64>>) -> bool {
        let d = self.dim;
        let q = frame.cloned().unwrap_or_else(|| DMatrix::identity(d, d));
        let qt = q.transpose();
        match &self.kind {
            StepKind::Atoms(atoms) => {
                let ys: Vec<(Vec<f64>, f64)> = atoms
                    .iter()
                    .map(|a| ((&qt * DVector::from_column_slice(&a.point)).as_slice().to_vec(), a.weight))
                    .collect();
                (1..1usize << d).all(|mask| {
                    let m: f64 = ys
                        .iter()
                        .map(|(y, w)| w * (0..d).filter(|i| mask >> i & 1 == 1).map(|i| y[i]).product::<f64>())
                        .sum();
                    m.abs() < 1e-12
                })
            }
            StepKind::Gaussian(_) => {
                let cov = &qt * &q;
                off_diagonal_small(&cov)
            }
            StepKind::Linear { matrix, base } if matches!(**base, StepKind::Gaussian(_)) => {
                let a = &qt * matrix;
                off_diagonal_small(&(&a * a.transpose()))
            }
            StepKind::UniformCube { .. } | StepKind::Product(_) => {
                let id = DMatrix::<f64>::identity(d, d);
                self.moments().mean.iter().all(|m| m.abs() < 1e-12) && (&q - id).abs().max() < 1e-14
            }
            _ => false,
        }
    }
}

fn off_diagonal_small(m: &DMatrix<f64>) -> bool {
    let d = m.nrows();
    (0..d).all(|i| (0..d).all(|j| i == j || m[(i, j)].abs() < 1e-12))
}

fn kind_moments(kind: &StepKind) -> Moments {
    match kind {
        StepKind::Atoms(atoms) => {
            let d = atoms[0].point.len();
            let mut mean = vec![0.0; d];
            for a in atoms {
                for i in 0..d {
                    mean[i] += a.weight * a.point[i];
                }
            }
            let covariance = DMatrix::from_fn(d, d, |i, j| {
                atoms
                    .iter()
                    .map(|a| a.weight * (a.point[i] - mean[i]) * (a.point[j] - mean[j]))
                    .sum()
            });
            Moments { mean, covariance }
        }
        StepKind::Gaussian(d) => Moments { mean: vec![0.0; *d], covariance: DMatrix::identity(*d, *d) },
        StepKind::UniformCube { dim, side } => Moments {
            mean: vec![0.0; *dim],
            covariance: DMatrix::identity(*dim, *dim) * (side * side / 12.0),
        },
        StepKind::Product(parts) => {
            let d = parts.len();
            let ms: Vec<Moments> = parts.iter().map(kind_moments).collect();
            Moments {
                mean: ms.iter().map(|m| m.mean[0]).collect(),
                covariance: DMatrix::from_fn(d, d, |i, j| if i == j { ms[i].covariance[(0, 0)] } else { 0.0 }),
            }
        }
        StepKind::Linear { matrix, base } => {
            let m = kind_moments(base);
            let mean = matrix * DVector::from_vec(m.mean);
            Moments { mean: mean.as_slice().to_vec(), covariance: matrix * m.covariance * matrix.transpose() }
        }
    }
}

/// `T = Σ^{-1/2}` and the law of `T·X`.
pub fn whitening_transform(dist: &StepDistribution) -> Result<(DMatrix<f64>, StepDistribution)> {
    let m = dist.moments();
    let d = dist.dim();
    let scale = m.covariance.abs().max().max(1.0);
    if m.mean.iter().any(|v| v.abs() > 1e-12 * scale.sqrt()) {
        return Err(Error::InvalidArgument(format!(
            "law is not centered (mean {:?}); only centered walks are supported",
            m.mean
        )));
    }
    let id = DMatrix::<f64>::identity(d, d);
    if (&m.covariance - &id).abs().max() < 1e-14 {
        return Ok((id, dist.clone()));
    }
    let eig = SymmetricEigen::new(m.covariance.clone());
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(min_ev > 1e-12 * max_ev) {
        return Err(Error::Degenerate(format!(
            "covariance has eigenvalues in [{min_ev:.3e}, {max_ev:.3e}]; the law lives on a proper subspace"
        )));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let t = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let white = dist.linear_image(&t)?;
    Ok((t, white))
}

/// `Σ w_k e^{i⟨θ, x_k⟩}`.
pub fn char_fn(dist: &StepDistribution, theta: &[f64]) -> Result<Complex64> {
    let atoms = dist.atom_list().ok_or_else(|| {
        Error::UnsupportedDistribution("characteristic function needs a finite support".into())
    })?;
    check_dim(dist.dim(), theta.len())?;
    Ok(atoms
        .iter()
        .map(|a| {
            let phase: f64 = a.point.iter().zip(theta).map(|(x, t)| x * t).sum();
            Complex64::from_polar(a.weight, phase)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn example_one() -> StepDistribution {
        StepDistribution::atoms(vec![
            (vec![2.0, -1.0], 0.25),
            (vec![0.0, -1.0], 0.25),
            (vec![-1.0, 1.0], 0.5),
        ])
        .unwrap()
    }

    #[test]
    fn moments_of_catalog_laws() {
        let m = StepDistribution::plus_minus_one().moments();
        assert_eq!(m.mean, vec![0.0]);
        assert_eq!(m.covariance[(0, 0)], 1.0);
        let e = example_one().moments();
        assert!(e.mean.iter().all(|v| v.abs() < 1e-15));
        let expect = [[1.5, -1.0], [-1.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((e.covariance[(i, j)] - expect[i][j]).abs() < 1e-15);
            }
        }
        let cube = StepDistribution::new(StepKind::UniformCube { dim: 1, side: 2.0 * 3f64.sqrt() }).unwrap();
        assert!((cube.moments().covariance[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn whitening_examples() {
        let g = StepDistribution::new(StepKind::Linear {
            matrix: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            base: Box::new(StepKind::Gaussian(2)),
        })
        .unwrap();
        let (t, _) = whitening_transform(&g).unwrap();
        assert!((t[(0, 0)] - 0.5).abs() < 1e-14 && (t[(1, 1)] - 1.0).abs() < 1e-14);
        assert!(t[(0, 1)].abs() < 1e-14);

        let (t, w) = whitening_transform(&StepDistribution::gaussian(3).unwrap()).unwrap();
        assert_eq!(t, DMatrix::identity(3, 3));
        assert_eq!(w.dim(), 3);

        let (_, w) = whitening_transform(&example_one()).unwrap();
        let m = w.moments();
        assert!((m.covariance - DMatrix::identity(2, 2)).abs().max() < 1e-10);
        assert!(m.mean.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn degenerate_covariance_is_rejected() {
        let d = StepDistribution::atoms(vec![(vec![1.0, 0.0], 0.5), (vec![-1.0, 0.0], 0.5)]).unwrap();
        assert!(matches!(whitening_transform(&d), Err(Error::Degenerate(_))));
    }

    #[test]
    fn characteristic_function_values() {
        let pm = StepDistribution::plus_minus_one();
        assert!((char_fn(&pm, &[PI]).unwrap().re + 1.0).abs() < 1e-15);
        let lazy = StepDistribution::atoms(vec![(vec![0.0], 0.5), (vec![1.0], 0.25), (vec![-1.0], 0.25)]).unwrap();
        assert!(char_fn(&lazy, &[PI]).unwrap().norm() < 1e-15);
        assert_eq!(char_fn(&example_one(), &[0.0, 0.0]).unwrap(), Complex64::new(1.0, 0.0));
        assert!(char_fn(&StepDistribution::gaussian(1).unwrap(), &[1.0]).is_err());
    }

    #[test]
    fn empirical_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = StepDistribution::gaussian(2).unwrap();
        let n = 1_000_000;
        let mut s = [[0.0; 2]; 2];
        let mut buf = [0.0; 2];
        for _ in 0..n {
            g.sample_into(&mut rng, &mut buf);
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += buf[i] * buf[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((s[i][j] / n as f64 - target).abs() < 5e-3);
            }
        }
        let e = example_one();
        let mut mean = [0.0; 2];
        for _ in 0..n {
            e.sample_into(&mut rng, &mut buf);
            mean[0] += buf[0];
            mean[1] += buf[1];
        }
        // per-coordinate sd ≤ 1.23, so 3σ at 10⁶ draws is below 4e-3
        assert!(mean.iter().all(|m| (m / n as f64).abs() < 4e-3));
    }

    #[test]
    fn linear_images_of_atoms_stay_atoms() {
        let e = example_one();
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let img = e.linear_image(&m).unwrap();
        let atoms = img.atom_list().unwrap();
        assert_eq!(atoms[0].point, vec![1.0, -2.0]);
    }

    #[test]
    fn mixed_moment_detection() {
        assert!(StepDistribution::gaussian(3).unwrap().mixed_moments_vanish(None));
        let rot = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        assert!(StepDistribution::gaussian(2).unwrap().mixed_moments_vanish(Some(&rot)));
        let skewed = StepDistribution::atoms(vec![
            (vec![1.0, 1.0], 0.25),
            (vec![-1.0, 1.0], 0.25),
            (vec![1.0, -1.0], 0.25),
            (vec![-1.0, -1.0], 0.25),
        ])
        .unwrap();
        assert!(skewed.mixed_moments_vanish(None));
        let tetra = StepDistribution::atoms(vec![
            (vec![1.0, 1.0, 1.0], 0.25),
            (vec![1.0, -1.0, -1.0], 0.25),
            (vec![-1.0, 1.0, -1.0], 0.25),
            (vec![-1.0, -1.0, 1.0], 0.25),
        ])
        .unwrap();
        assert!(!tetra.mixed_moments_vanish(None));
    }

    #[test]
    fn box_probability_matches_closed_forms() {
        let b = AxisBox::new(vec![0.0, -1.0], vec![1.0, 2.0]).unwrap();
        let g = StepDistribution::gaussian(2).unwrap();
        let phi = crate::stats::normal_cdf;
        let want = (phi(1.5) - phi(0.5)) * (phi(2.0) - phi(-1.0));
        assert!((g.box_probability(&[-0.5, 0.0], &b).unwrap() - want).abs() < 1e-15);
        let theta = 0.3f64;
        let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let r = g.linear_image(&rot).unwrap();
        assert!((r.box_probability(&[-0.5, 0.0], &b).unwrap() - want).abs() < 1e-15);
        let a = StepDistribution::atoms(vec![(vec![1.0, 0.0], 0.5), (vec![-1.0, 0.0], 0.5)]).unwrap();
        assert_eq!(a.box_probability(&[0.0, 0.0], &b), Some(0.5));
        let u = StepDistribution::new(StepKind::Product(vec![
            StepKind::UniformCube { dim: 1, side: 2.0 },
            StepKind::Gaussian(1),
        ]))
        .unwrap()
        .linear_image(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]))
        .unwrap();
        // 2·U[-1,1] lands in [0,1] with probability 1/4
        let want = 0.25 * (phi(2.0) - phi(-1.0));
        assert!((u.box_probability(&[0.0, 0.0], &b).unwrap() - want).abs() < 1e-15);
        let skew = g.linear_image(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).unwrap();
        assert!(skew.box_probability(&[0.0, 0.0], &b).is_none());
    }
}
