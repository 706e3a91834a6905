//! Cones, axis-aligned boxes and thickened (shifted) cones.
//!
//! Every cone is open and stored through a list of unit inward facet normals.
//! Convex cones are the intersection of the open half-spaces `n·x > 0`; a
//! planar wedge with opening above π is their union.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 8;

const ORTHO_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("point must have at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("point coordinates must be finite".into()));
        }
        Ok(Point(coords))
    }

    pub fn ones(d: usize) -> Self {
        Point(vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, t: f64) -> Point {
        Point(self.0.iter().map(|c| c * t).collect())
    }
}

impl std::ops::Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

/// Axis-aligned box `[lower, upper]`. `half_open` selects `[lower, upper)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    half_open: bool,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidArgument("box must have positive dimension".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidArgument(format!("box side [{l}, {u}] is empty")));
            }
        }
        Ok(AxisBox { lower, upper, half_open: false })
    }

    /// The cube `[corner, corner + side·1]`.
    pub fn cube(corner: &[f64], side: f64) -> Result<Self> {
        Self::new(corner.to_vec(), corner.iter().map(|c| c + side).collect())
    }

    pub fn half_open(mut self) -> Self {
        self.half_open = true;
        self
    }

    pub fn is_half_open(&self) -> bool {
        self.half_open
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| {
                if self.half_open {
                    *v >= *l && *v < *u
                } else {
                    *v >= *l && *v <= *u
                }
            })
    }

    pub fn translated(&self, shift: &[f64]) -> AxisBox {
        AxisBox {
            lower: self.lower.iter().zip(shift).map(|(a, s)| a + s).collect(),
            upper: self.upper.iter().zip(shift).map(|(a, s)| a + s).collect(),
            half_open: self.half_open,
        }
    }

    /// All `2^d` corners.
    pub fn corners(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let d = self.dim();
        (0..1usize << d).map(move |mask| {
            (0..d)
                .map(|i| if mask >> i & 1 == 1 { self.upper[i] } else { self.lower[i] })
                .collect()
        })
    }
}

/// Cone description as written in configuration files.
#[derive(Clone, Debug, PartialEq)]
pub enum ConeSpec {
    HalfLine,
    HalfSpace(usize),
    Orthant(usize),
    /// Planar wedge with the given opening angle, symmetric about the diagonal.
    Wedge(f64),
    /// Image of `base` under an invertible matrix, given by rows.
    Linear { rows: Vec<Vec<f64>>, base: Box<ConeSpec> },
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::HalfLine => 1,
            ConeSpec::HalfSpace(d) | ConeSpec::Orthant(d) => *d,
            ConeSpec::Wedge(_) => 2,
            ConeSpec::Linear { base, .. } => base.dim(),
        }
    }
}

impl fmt::Display for ConeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConeSpec::HalfLine => write!(f, "halfline"),
            ConeSpec::HalfSpace(d) => write!(f, "halfspace({d})"),
            ConeSpec::Orthant(d) => write!(f, "orthant({d})"),
            ConeSpec::Wedge(a) => write!(f, "wedge({a:?})"),
            ConeSpec::Linear { rows, base } => {
                write!(f, "linear([")?;
                for (i, r) in rows.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
                    write!(f, "[{}]", cells.join(", "))?;
                }
                write!(f, "]; {base})")
            }
        }
    }
}

/// Closed-form shape a cone is isometric to, if any.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CanonicalShape {
    HalfLine,
    /// `{x : x_d > 0}`.
    HalfSpace(usize),
    Orthant(usize),
    /// Wedge between polar angles `π/4 − α/2` and `π/4 + α/2`.
    Wedge(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Fast {
    Positive,
    LastCoord,
    General,
}

#[derive(Clone, Debug)]
pub struct Cone {
    spec: ConeSpec,
    dim: usize,
    normals: Vec<Vec<f64>>,
    union: bool,
    rays: Option<[[f64; 2]; 2]>,
    fast: Fast,
    canonical: Option<CanonicalShape>,
    frame: Option<DMatrix<f64>>,
    interior: Vec<f64>,
}

/// Polar angles of the two boundary rays of the canonical wedge.
pub fn wedge_ray_angles(alpha: f64) -> (f64, f64) {
    (PI / 4.0 - alpha / 2.0, PI / 4.0 + alpha / 2.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|c| c / n).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument("linear map must be a square matrix".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("linear map has non-finite entries".into()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Orthogonal reflection sending unit vector `from` to unit vector `to`.
pub(crate) fn householder(from: &[f64], to: &[f64]) -> DMatrix<f64> {
    let d = from.len();
    let v: Vec<f64> = from.iter().zip(to).map(|(a, b)| a - b).collect();
    let vv = dot(&v, &v);
    if vv < 1e-28 {
        return DMatrix::identity(d, d);
    }
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 } - 2.0 * v[i] * v[j] / vv)
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

/// `m = s·Q` with `Q` orthogonal and `s > 0`; returns `Q`.
fn orthogonal_part(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = m.nrows();
    let g = m.transpose() * m;
    let s2 = g.trace() / d as f64;
    if s2 <= 0.0 {
        return None;
    }
    let dev = (&g - DMatrix::identity(d, d) * s2).abs().max();
    if dev <= ORTHO_TOL * s2 {
        Some(m / s2.sqrt())
    } else {
        None
    }
}

fn ccw(from: f64, to: f64) -> f64 {
    (to - from).rem_euclid(2.0 * PI)
}

impl Cone {
    pub fn new(spec: ConeSpec) -> Result<Self> {
        let (matrix, base) = flatten(&spec)?;
        let mut cone = base_cone(&base)?;
        if let Some(m) = matrix {
            cone = cone.transform(&m)?;
        }
        cone.spec = spec;
        Ok(cone)
    }

    pub fn half_line() -> Self {
        Self::new(ConeSpec::HalfLine).expect("valid cone")
    }

    pub fn half_space(d: usize) -> Result<Self> {
        Self::new(ConeSpec::HalfSpace(d))
    }

    pub fn orthant(d: usize) -> Result<Self> {
        Self::new(ConeSpec::Orthant(d))
    }

    pub fn wedge(alpha: f64) -> Result<Self> {
        Self::new(ConeSpec::Wedge(alpha))
    }

    /// The image `m·C`.
    pub fn linear_image(&self, m: &DMatrix<f64>) -> Result<Self> {
        Self::new(ConeSpec::Linear { rows: matrix_rows(m), base: Box::new(self.spec.clone()) })
    }

    pub fn spec(&self) -> &ConeSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interior_direction(&self) -> &[f64] {
        &self.interior
    }

    /// Unit inward normals of the facets.
    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    /// True for a planar wedge with opening above π.
    pub fn is_reflex(&self) -> bool {
        self.union
    }

    pub fn canonical(&self) -> Option<CanonicalShape> {
        self.canonical
    }

    /// Orthogonal `Q` with `C = Q·(canonical shape)`; `None` means identity.
    pub fn frame(&self) -> Option<&DMatrix<f64>> {
        self.frame.as_ref()
    }

    /// Open-cone membership. The caller guarantees `x.len() == dim`.
    #[inline]
    pub fn is_inside(&self, x: &[f64]) -> bool {
        match self.fast {
            Fast::Positive => x.iter().all(|&v| v > 0.0),
            Fast::LastCoord => x[self.dim - 1] > 0.0,
            Fast::General => {
                if self.union {
                    self.normals.iter().any(|n| dot(n, x) > 0.0)
                } else {
                    self.normals.iter().all(|n| dot(n, x) > 0.0)
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim, x.len())?;
        Ok(self.is_inside(x))
    }

    pub fn boundary_distance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.distance_unchecked(x))
    }

    pub(crate) fn distance_unchecked(&self, x: &[f64]) -> f64 {
        if !self.is_inside(x) {
            return 0.0;
        }
        match self.rays {
            Some(rays) => rays
                .iter()
                .map(|r| {
                    let s = r[0] * x[0] + r[1] * x[1];
                    if s > 0.0 {
                        ((x[0] - s * r[0]).powi(2) + (x[1] - s * r[1]).powi(2)).sqrt()
                    } else {
                        norm(x)
                    }
                })
                .fold(f64::INFINITY, f64::min),
            None => self.normals.iter().map(|n| dot(n, x)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Membership in the set of shifts `a` with `a + C ⊆ C` and positive margin.
    pub fn is_admissible_shift(&self, a: &[f64]) -> bool {
        a.len() == self.dim && self.normals.iter().all(|n| dot(n, a) > 0.0)
    }

    /// Largest `s` with the box `[v − s·1, v + s·1]` inside the admissible
    /// shift set, where `v` is the interior direction.
    pub fn box_slack(&self) -> f64 {
        self.normals
            .iter()
            .map(|n| dot(n, &self.interior) / n.iter().map(|c| c.abs()).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    /// Closed-form shift: worst box corner per facet.
    pub fn shift_param(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument("delta must be positive".into()));
        }
        Ok(self
            .normals
            .iter()
            .map(|n| delta * n.iter().map(|c| c.abs()).sum::<f64>() / dot(n, &self.interior))
            .fold(0.0, f64::max))
    }

    /// Shift computed by bisection against sampled boxes touching the cone
    /// boundary. Independent of the facet formula; used to cross-check it.
    pub fn shift_param_numeric(&self, delta: f64, boxes: usize, seed: u64) -> Result<f64> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument("delta must be positive".into()));
        }
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = &self.interior;
        let mut anchors: Vec<Vec<f64>> = Vec::with_capacity(boxes);
        let mut guard = 0usize;
        while anchors.len() < boxes && guard < boxes * 100 {
            guard += 1;
            let scale = delta * 10f64.powf(rng.random_range(-3.0..3.0));
            let inside: Vec<f64> = (0..d)
                .map(|i| scale * (v[i] + 0.9 * rng.random_range(-1.0..1.0) * norm(v)))
                .collect();
            if !self.is_inside(&inside) {
                continue;
            }
            let outside: Vec<f64> =
                (0..d).map(|_| scale * 3.0 * rng.random_range(-1.0..1.0)).collect();
            if self.is_inside(&outside) {
                continue;
            }
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let p: Vec<f64> =
                    (0..d).map(|i| inside[i] + mid * (outside[i] - inside[i])).collect();
                if self.is_inside(&p) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            anchors.push((0..d).map(|i| inside[i] + lo * (outside[i] - inside[i])).collect());
        }
        if anchors.is_empty() {
            return Err(Error::UnsupportedCone("could not sample the cone boundary".into()));
        }
        let feasible = |t: f64| {
            anchors.iter().all(|y| {
                (0..1usize << d).all(|mask| {
                    let low: Vec<f64> = (0..d)
                        .map(|i| y[i] - if mask >> i & 1 == 1 { delta } else { 0.0 })
                        .collect();
                    (0..1usize << d).all(|corner| {
                        let c: Vec<f64> = (0..d)
                            .map(|i| {
                                low[i] + if corner >> i & 1 == 1 { delta } else { 0.0 } + t * v[i]
                            })
                            .collect();
                        self.is_inside(&c)
                    })
                })
            })
        };
        let mut lo = 0.0;
        let mut hi = 2.0 * delta / self.box_slack().max(1e-12);
        let mut grow = 0;
        while !feasible(hi) {
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return Err(Error::UnsupportedCone("no feasible shift found".into()));
            }
        }
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    pub fn thicken(&self, delta: f64, sign: ThickenSign) -> Result<ThickenedCone> {
        let t = self.shift_param(delta)?;
        let s = match sign {
            ThickenSign::Inner => 1.0,
            ThickenSign::Outer => -1.0,
        };
        Ok(ThickenedCone {
            base: self.clone(),
            delta,
            sign,
            t_delta: t,
            offset: self.interior.iter().map(|v| s * t * v).collect(),
        })
    }

    /// Returns the cone rotated so that `1 = e_1 + … + e_d` is an admissible
    /// shift, together with the rotation used.
    pub fn normalized(&self) -> Result<(Cone, DMatrix<f64>)> {
        let d = self.dim;
        let ones = vec![1.0; d];
        if self.is_admissible_shift(&ones) {
            let mut cone = self.clone();
            cone.interior = ones;
            return Ok((cone, DMatrix::identity(d, d)));
        }
        let from = unit(self.interior.clone());
        let to = unit(ones);
        let q = householder(&from, &to);
        let mut cone = self.linear_image(&q)?;
        cone.interior = vec![1.0; d];
        Ok((cone, q))
    }

    fn transform(mut self, m: &DMatrix<f64>) -> Result<Self> {
        let d = self.dim;
        check_dim(d, m.nrows())?;
        let inv = m
            .clone()
            .try_inverse()
            .filter(|inv| inv.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::InvalidArgument("linear map is not invertible".into()))?;
        let cond = m.norm() * inv.norm();
        if !(cond < 1e12) {
            return Err(Error::InvalidArgument("linear map is numerically singular".into()));
        }
        let inv_t = inv.transpose();
        let base_canon = self.canonical;
        let base_rays = self.wedge_rays();
        self.normals = self.normals.iter().map(|n| unit(mat_vec(&inv_t, n))).collect();
        self.interior = mat_vec(m, &self.interior);
        if let Some(r) = self.rays {
            self.rays = Some(r.map(|ray| {
                let v = unit(mat_vec(m, &ray));
                [v[0], v[1]]
            }));
        }
        self.fast = Fast::General;
        self.frame = None;
        self.canonical = None;
        match base_canon {
            Some(CanonicalShape::HalfLine) => {
                self.canonical = Some(CanonicalShape::HalfLine);
                if m[(0, 0)] < 0.0 {
                    self.frame = Some(DMatrix::from_element(1, 1, -1.0));
                }
            }
            Some(CanonicalShape::HalfSpace(k)) => {
                let mut e_last = vec![0.0; k];
                e_last[k - 1] = 1.0;
                self.canonical = Some(CanonicalShape::HalfSpace(k));
                self.frame = Some(householder(&e_last, &self.normals[0]));
            }
            Some(CanonicalShape::Orthant(k)) if orthogonal_part(m).is_some() => {
                self.canonical = Some(CanonicalShape::Orthant(k));
                self.frame = orthogonal_part(m);
            }
            _ => {
                if d == 2 {
                    if let Some([r1, r2]) = base_rays {
                        let a = mat_vec(m, &r1);
                        let b = mat_vec(m, &r2);
                        let (alpha, start) = self.wedge_from_rays(&a, &b);
                        let psi = start - wedge_ray_angles(alpha).0;
                        let (s, c) = psi.sin_cos();
                        self.canonical = Some(CanonicalShape::Wedge(alpha));
                        self.frame = Some(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]));
                    }
                }
            }
        }
        Ok(self)
    }

    /// Boundary rays of a planar cone, in its current coordinates.
    fn wedge_rays(&self) -> Option<[Vec<f64>; 2]> {
        if self.dim != 2 {
            return None;
        }
        if let Some(r) = self.rays {
            return Some([r[0].to_vec(), r[1].to_vec()]);
        }
        if self.normals.len() == 2 {
            // For a convex wedge the ray of facet j is orthogonal to n_j and
            // on the positive side of the other facet.
            let ray = |n: &[f64], other: &[f64]| {
                let r = vec![-n[1], n[0]];
                if dot(&r, other) >= 0.0 {
                    r
                } else {
                    vec![n[1], -n[0]]
                }
            };
            let (n1, n2) = (&self.normals[0], &self.normals[1]);
            if (n1[0] - n2[0]).abs() + (n1[1] - n2[1]).abs() < 1e-14 {
                return Some([vec![-n1[1], n1[0]], vec![n1[1], -n1[0]]]);
            }
            return Some([ray(n1, n2), ray(n2, n1)]);
        }
        None
    }

    fn wedge_from_rays(&self, a: &[f64], b: &[f64]) -> (f64, f64) {
        let fa = a[1].atan2(a[0]);
        let fb = b[1].atan2(b[0]);
        let fq = self.interior[1].atan2(self.interior[0]);
        if ccw(fa, fq) < ccw(fa, fb) {
            (ccw(fa, fb), fa)
        } else {
            (ccw(fb, fa), fb)
        }
    }

    /// `max over the box of min_j n_j·x`: positive iff the box meets a convex cone.
    fn best_margin(&self, b: &AxisBox) -> Result<f64> {
        margin_over_box(&self.normals, b.lower(), b.upper())
    }

    pub fn box_meets(&self, b: &AxisBox) -> Result<bool> {
        check_dim(self.dim, b.dim())?;
        if self.union {
            return Ok(self
                .normals
                .iter()
                .any(|n| b.corners().any(|c| dot(n, &c) > 0.0)));
        }
        match self.fast {
            Fast::Positive => Ok(b.upper().iter().all(|&u| u > 0.0)),
            Fast::LastCoord => Ok(b.upper()[self.dim - 1] > 0.0),
            Fast::General => Ok(self.best_margin(b)? > 0.0),
        }
    }

    pub fn box_inside(&self, b: &AxisBox) -> Result<bool> {
        check_dim(self.dim, b.dim())?;
        if self.union {
            // The box avoids the closed complement {n_j·x ≤ 0 for all j}.
            let flipped: Vec<Vec<f64>> =
                self.normals.iter().map(|n| n.iter().map(|c| -c).collect()).collect();
            return Ok(margin_over_box(&flipped, b.lower(), b.upper())? < 0.0);
        }
        Ok(b.corners().all(|c| self.is_inside(&c)))
    }

    fn with_canonical(mut self, c: CanonicalShape) -> Self {
        self.canonical = Some(c);
        self
    }
}

fn flatten(spec: &ConeSpec) -> Result<(Option<DMatrix<f64>>, ConeSpec)> {
    match spec {
        ConeSpec::Linear { rows, base } => {
            let m = matrix_from_rows(rows)?;
            check_dim(base.dim(), m.nrows())?;
            let (inner, leaf) = flatten(base)?;
            let total = match inner {
                Some(i) => m * i,
                None => m,
            };
            Ok((Some(total), leaf))
        }
        other => Ok((None, other.clone())),
    }
}

fn base_cone(spec: &ConeSpec) -> Result<Cone> {
    let blank = |dim: usize, normals: Vec<Vec<f64>>, fast: Fast| Cone {
        spec: spec.clone(),
        dim,
        normals,
        union: false,
        rays: None,
        fast,
        canonical: None,
        frame: None,
        interior: vec![1.0; dim],
    };
    let check_d = |d: usize| {
        if d == 0 || d > MAX_DIM {
            Err(Error::InvalidArgument(format!("dimension must be in 1..={MAX_DIM}, got {d}")))
        } else {
            Ok(())
        }
    };
    match spec {
        ConeSpec::HalfLine => {
            Ok(blank(1, vec![vec![1.0]], Fast::Positive).with_canonical(CanonicalShape::HalfLine))
        }
        ConeSpec::HalfSpace(d) => {
            check_d(*d)?;
            let mut n = vec![0.0; *d];
            n[d - 1] = 1.0;
            Ok(blank(*d, vec![n], Fast::LastCoord).with_canonical(CanonicalShape::HalfSpace(*d)))
        }
        ConeSpec::Orthant(d) => {
            check_d(*d)?;
            let normals = (0..*d)
                .map(|i| (0..*d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            Ok(blank(*d, normals, Fast::Positive).with_canonical(CanonicalShape::Orthant(*d)))
        }
        ConeSpec::Wedge(alpha) => {
            if !(*alpha > 0.0 && *alpha < 2.0 * PI) {
                return Err(Error::InvalidArgument(format!(
                    "wedge opening must lie in (0, 2π), got {alpha}"
                )));
            }
            let (p0, p1) = wedge_ray_angles(*alpha);
            let (s0, c0) = p0.sin_cos();
            let (s1, c1) = p1.sin_cos();
            let normals = vec![vec![-s0, c0], vec![s1, -c1]];
            let mut cone = blank(2, normals, Fast::General).with_canonical(CanonicalShape::Wedge(*alpha));
            if *alpha > PI {
                cone.union = true;
                cone.rays = Some([[c0, s0], [c1, s1]]);
            }
            Ok(cone)
        }
        ConeSpec::Linear { .. } => unreachable!("flattened before construction"),
    }
}

/// `max_{x in [lower, upper]} min_j n_j·x`, by enumerating vertices of the
/// epigraph LP in `(x, s)`.
fn margin_over_box(normals: &[Vec<f64>], lower: &[f64], upper: &[f64]) -> Result<f64> {
    let d = lower.len();
    if normals.len() == 1 {
        let n = &normals[0];
        return Ok((0..d).map(|i| (n[i] * lower[i]).max(n[i] * upper[i])).sum());
    }
    if d > 5 {
        return Err(Error::UnsupportedCone(
            "box intersection for dimension above 5 is not supported".into(),
        ));
    }
    let dd = d + 1;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..d {
        let mut a = vec![0.0; dd];
        a[i] = 1.0;
        rows.push((a.clone(), lower[i]));
        a[i] = -1.0;
        rows.push((a, -upper[i]));
    }
    for n in normals {
        let mut a = n.clone();
        a.push(-1.0);
        rows.push((a, 0.0));
    }
    let k = rows.len();
    let scale = lower.iter().chain(upper).fold(1.0f64, |m, v| m.max(v.abs()));
    let mut best = f64::NEG_INFINITY;
    let mut idx: Vec<usize> = (0..dd).collect();
    loop {
        let a = DMatrix::from_fn(dd, dd, |r, c| rows[idx[r]].0[c]);
        let b = nalgebra::DVector::from_fn(dd, |r, _| rows[idx[r]].1);
        if let Some(z) = a.lu().solve(&b) {
            let feasible = rows.iter().all(|(row, rhs)| {
                let lhs: f64 = row.iter().zip(z.iter()).map(|(p, q)| p * q).sum();
                lhs >= rhs - 1e-10 * scale
            });
            if feasible && z[d] > best {
                best = z[d];
            }
        }
        // next combination
        let mut i = dd;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            if idx[i] < k - dd + i {
                idx[i] += 1;
                for j in i + 1..dd {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThickenSign {
    /// `C_δ = t_δ·1 + C`, a subset of `C`.
    Inner,
    /// `C_{−δ} = −t_δ·1 + C`, a superset of `C`.
    Outer,
}

#[derive(Clone, Debug)]
pub struct ThickenedCone {
    base: Cone,
    delta: f64,
    sign: ThickenSign,
    t_delta: f64,
    offset: Vec<f64>,
}

impl ThickenedCone {
    pub fn base(&self) -> &Cone {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sign(&self) -> ThickenSign {
        self.sign
    }

    pub fn t_delta(&self) -> f64 {
        self.t_delta
    }

    /// The translation `±t_δ·1` applied to the base cone.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.base.dim, x.len())?;
        Ok(self.is_inside(x))
    }

    pub fn box_meets(&self, b: &AxisBox) -> Result<bool> {
        let neg: Vec<f64> = self.offset.iter().map(|o| -o).collect();
        self.base.box_meets(&b.translated(&neg))
    }

    pub fn box_inside(&self, b: &AxisBox) -> Result<bool> {
        let neg: Vec<f64> = self.offset.iter().map(|o| -o).collect();
        self.base.box_inside(&b.translated(&neg))
    }
}

/// Anything the walk can be killed on.
pub trait Region: Send + Sync {
    fn dim(&self) -> usize;
    /// Membership; the caller guarantees the dimension.
    fn is_inside(&self, x: &[f64]) -> bool;
    fn box_meets(&self, b: &AxisBox) -> Result<bool>;
    fn box_inside(&self, b: &AxisBox) -> Result<bool>;
}

impl Region for Cone {
    fn dim(&self) -> usize {
        self.dim
    }
    #[inline]
    fn is_inside(&self, x: &[f64]) -> bool {
        Cone::is_inside(self, x)
    }
    fn box_meets(&self, b: &AxisBox) -> Result<bool> {
        Cone::box_meets(self, b)
    }
    fn box_inside(&self, b: &AxisBox) -> Result<bool> {
        Cone::box_inside(self, b)
    }
}

impl Region for ThickenedCone {
    fn dim(&self) -> usize {
        self.base.dim
    }
    #[inline]
    fn is_inside(&self, x: &[f64]) -> bool {
        let mut buf = [0.0; MAX_DIM];
        let d = self.base.dim;
        for i in 0..d {
            buf[i] = x[i] - self.offset[i];
        }
        self.base.is_inside(&buf[..d])
    }
    fn box_meets(&self, b: &AxisBox) -> Result<bool> {
        ThickenedCone::box_meets(self, b)
    }
    fn box_inside(&self, b: &AxisBox) -> Result<bool> {
        ThickenedCone::box_inside(self, b)
    }
}

pub fn box_meets_cone(cone: &Cone, b: &AxisBox) -> Result<bool> {
    cone.box_meets(b)
}

pub fn box_in_region<R: Region + ?Sized>(region: &R, b: &AxisBox) -> Result<bool> {
    region.box_inside(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthant_membership_and_distance() {
        let c = Cone::orthant(2).unwrap();
        assert!(c.contains(&[1.0, 1.0]).unwrap());
        assert!(!c.contains(&[1.0, 0.0]).unwrap());
        assert!(!c.contains(&[0.0, 0.0]).unwrap());
        assert_eq!(c.boundary_distance(&[3.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(c.contains(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn halfspace_distance_is_last_coordinate() {
        let c = Cone::half_space(3).unwrap();
        assert!((c.boundary_distance(&[5.0, -2.0, 0.7]).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn quarter_wedge_is_quadrant() {
        let w = Cone::wedge(PI / 2.0).unwrap();
        assert!(!w.contains(&[-0.5, 1.5]).unwrap());
        assert!(w.contains(&[0.5, 1.5]).unwrap());
        assert!((w.boundary_distance(&[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflex_wedge_distance_uses_rays() {
        let w = Cone::wedge(3.0 * PI / 2.0).unwrap();
        // opening from −π/2 to π; the closed third quadrant is excluded
        assert!(w.contains(&[1.0, -1.0]).unwrap());
        assert!(!w.contains(&[-1.0, -1.0]).unwrap());
        assert!((w.boundary_distance(&[-2.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((w.boundary_distance(&[2.0, 2.0]).unwrap() - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn shift_param_examples() {
        for d in 1..=3 {
            let c = Cone::orthant(d).unwrap();
            assert_eq!(c.shift_param(0.3).unwrap(), 0.3);
        }
        let h = Cone::half_space(2).unwrap();
        assert_eq!(h.shift_param(1.0).unwrap(), 1.0);
    }

    #[test]
    fn thickened_orthant() {
        let c = Cone::orthant(2).unwrap();
        let outer = c.thicken(0.3, ThickenSign::Outer).unwrap();
        assert!(outer.contains(&[-0.29, -0.29]).unwrap());
        assert!(!outer.contains(&[-0.31, 1.0]).unwrap());
        let inner = c.thicken(0.3, ThickenSign::Inner).unwrap();
        assert!(inner.contains(&[0.4, 0.4]).unwrap());
        assert!(!inner.contains(&[0.2, 0.4]).unwrap());
    }

    #[test]
    fn box_queries() {
        let c = Cone::orthant(2).unwrap();
        let b = AxisBox::new(vec![-0.1, -0.1], vec![0.2, 0.2]).unwrap();
        assert!(c.box_meets(&b).unwrap());
        assert!(!c.box_inside(&b).unwrap());
        let h = Cone::half_line();
        assert!(h.box_inside(&AxisBox::new(vec![1.0], vec![2.0]).unwrap()).unwrap());
    }

    #[test]
    fn general_margin_matches_fast_path() {
        let c = Cone::orthant(3).unwrap();
        let rot = Cone::new(ConeSpec::Linear {
            rows: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            base: Box::new(ConeSpec::Orthant(3)),
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let lo: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..1.0)).collect();
            let b = AxisBox::cube(&lo, rng.random_range(0.05..1.5)).unwrap();
            assert_eq!(c.box_meets(&b).unwrap(), rot.box_meets(&b).unwrap());
        }
    }

    #[test]
    fn linear_image_of_orthant_in_plane_is_wedge() {
        let c = Cone::new(ConeSpec::Linear {
            rows: vec![vec![1.0, 1.0], vec![0.0, 1.0]],
            base: Box::new(ConeSpec::Orthant(2)),
        })
        .unwrap();
        match c.canonical() {
            Some(CanonicalShape::Wedge(a)) => assert!((a - PI / 4.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn normalization_puts_ones_in_shift_set() {
        let c = Cone::new(ConeSpec::Linear {
            rows: vec![vec![0.0, -1.0], vec![1.0, 0.0]],
            base: Box::new(ConeSpec::Orthant(2)),
        })
        .unwrap();
        assert!(!c.is_admissible_shift(&[1.0, 1.0]));
        let (n, q) = c.normalized().unwrap();
        assert!(n.is_admissible_shift(&[1.0, 1.0]));
        assert_eq!(q.nrows(), 2);
        assert_eq!(n.canonical(), Some(CanonicalShape::Orthant(2)));
    }

    #[test]
    fn display_round_trip_shape() {
        let s = ConeSpec::Linear {
            rows: vec![vec![2.0, 0.0], vec![0.0, 1.0]],
            base: Box::new(ConeSpec::Wedge(1.5)),
        };
        assert_eq!(s.to_string(), "linear([[2.0, 0.0], [0.0, 1.0]]; wedge(1.5))");
    }
}
