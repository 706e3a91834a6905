//! Time-reversal inclusions between the forward walk killed on `C` and the
//! reversed walk killed on the shifted cones `C_{±δ̃}`.
//!
//! key1, for `z ∈ [x, x+δ1] ∩ C`:
//! `P(τ(z)>n, z+S(n) ∈ [y, y+δ̃1]) ≤ P(τ̃_{−δ̃}(y)>n, y−S(n) ∈ [x−δ̃1, x+δ1])`.
//!
//! key2, for `δ̃ > δ` and `y ∈ C_{δ̃}`:
//! `P(τ̃_{δ̃}(y)>n, y−S(n) ∈ [x−(δ̃−δ)1, x]) ≤ P(τ(x)>n, x+S(n) ∈ [y, y+δ̃1])`.
//!
//! Both are pathwise once the reversed walk uses the increments in reverse
//! order, so the Monte Carlo check runs both sides on the same increments
//! and counts paths where the left event holds without the right one.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{Check, Table, VerifierReport, Verdict};
use crate::context::Model;
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Region, ThickenSign, ThickenedCone};
use crate::rng::{self, combine, domain_id};
use crate::stats::{binomial_se, Estimate};
use crate::walk::fold_paths;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityTuple {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Start of the forward walk in key1; defaults to the centre of `[x, x+δ1]`
    /// when that lies in the cone, else `x`.
    pub z: Option<Vec<f64>>,
}

impl DualityTuple {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        DualityTuple { x, y, z: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityOptions {
    pub tuples: Vec<DualityTuple>,
    pub delta: f64,
    pub delta_tilde: f64,
    pub horizon: u64,
    pub paths: u64,
}

/// Both sides of each inclusion; `None` when the preconditions fail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactDuality {
    pub key1: Option<(f64, f64)>,
    pub key2: Option<(f64, f64)>,
    pub skipped: Vec<String>,
}

impl ExactDuality {
    pub fn holds(&self) -> bool {
        [self.key1, self.key2].iter().flatten().all(|(l, r)| l <= &(r + EXACT_SLACK))
    }
}

const EXACT_SLACK: f64 = 1e-12;
const MAX_EXACT_STATES: usize = 2_000_000;

/// Everything one tuple needs, resolved against the cone.
struct Setup {
    z: Vec<f64>,
    /// `[y, y+δ̃1]`.
    forward_target: AxisBox,
    /// `[x−δ̃1, x+δ1]`.
    key1_target: AxisBox,
    outer: ThickenedCone,
    key2: Option<(ThickenedCone, AxisBox)>,
    skipped: Vec<String>,
}

fn setup(model: &Model, t: &DualityTuple, delta: f64, delta_tilde: f64) -> Result<Setup> {
    let cone = model.cone();
    let d = model.dim();
    for v in [&t.x, &t.y] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
        if !cone.is_inside(v) {
            return Err(Error::Precondition(format!("{v:?} is outside the cone")));
        }
    }
    if !(delta > 0.0 && delta_tilde > 0.0) {
        return Err(Error::InvalidArgument("δ and δ̃ must be positive".into()));
    }
    let x_box = AxisBox::cube(&t.x, delta)?;
    let z = match &t.z {
        Some(z) => {
            if !(x_box.contains(z) && cone.is_inside(z)) {
                return Err(Error::Precondition("z must lie in [x, x+δ1] ∩ C".into()));
            }
            z.clone()
        }
        None => {
            let mid = x_box.center();
            if cone.is_inside(&mid) {
                mid
            } else {
                t.x.clone()
            }
        }
    };
    let forward_target = AxisBox::cube(&t.y, delta_tilde)?;
    let key1_target =
        AxisBox::new(t.x.iter().map(|v| v - delta_tilde).collect(), t.x.iter().map(|v| v + delta).collect())?;
    let outer = cone.thicken(delta_tilde, ThickenSign::Outer)?;
    let mut skipped = Vec::new();
    let key2 = if delta_tilde <= delta {
        skipped.push(format!("key2 needs δ̃ > δ (δ̃ = {delta_tilde}, δ = {delta})"));
        None
    } else {
        let inner = cone.thicken(delta_tilde, ThickenSign::Inner)?;
        if !inner.is_inside(&t.y) {
            skipped.push(format!("key2 needs y ∈ C_δ̃; y = {:?} is not", t.y));
            None
        } else {
            let b = AxisBox::new(t.x.iter().map(|v| v - (delta_tilde - delta)).collect(), t.x.clone())?;
            Some((inner, b))
        }
    };
    Ok(Setup { z, forward_target, key1_target, outer, key2, skipped })
}

#[derive(Clone, Copy, Debug, Default)]
struct PairCounts {
    key1: [u64; 2],
    key1_violations: u64,
    key2: [u64; 2],
    key2_violations: u64,
}

/// Path survives in `region` with the given partial sums and ends in `target`.
fn forward_event<R: Region + ?Sized>(
    start: &[f64],
    incs: &[f64],
    d: usize,
    region: &R,
    target: &AxisBox,
    pos: &mut [f64],
) -> bool {
    pos[..d].copy_from_slice(start);
    for step in incs.chunks_exact(d) {
        for i in 0..d {
            pos[i] += step[i];
        }
        if !region.is_inside(&pos[..d]) {
            return false;
        }
    }
    target.contains(&pos[..d])
}

/// `y − X_n, y − X_n − X_{n−1}, …, y − S(n)` stays in `region`, ends in `target`.
fn reversed_event<R: Region + ?Sized>(
    start: &[f64],
    incs: &[f64],
    d: usize,
    region: &R,
    target: &AxisBox,
    pos: &mut [f64],
) -> bool {
    pos[..d].copy_from_slice(start);
    for step in incs.rchunks_exact(d) {
        for i in 0..d {
            pos[i] -= step[i];
        }
        if !region.is_inside(&pos[..d]) {
            return false;
        }
    }
    target.contains(&pos[..d])
}

pub fn verify_duality(model: &Model, opts: &DualityOptions, seed: u64) -> Result<VerifierReport> {
    if opts.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if opts.tuples.is_empty() {
        return Err(Error::InvalidArgument("no (x, y) tuples given".into()));
    }
    let d = model.dim();
    let cone = model.cone();
    let steps = model.steps();
    let n = opts.horizon as usize;
    let mut report = VerifierReport::new("duality", 0.0);
    report.sample_sizes.insert("paths".into(), opts.paths);
    report.rows = Table::new(&[
        "tuple", "key", "left", "left_se", "right", "right_se", "violations",
    ]);
    report.plot = Table::new(&["tuple", "key", "left", "right"]);
    let mut tested = 0usize;
    for (ti, t) in opts.tuples.iter().enumerate() {
        let s = match setup(model, t, opts.delta, opts.delta_tilde) {
            Ok(s) => s,
            Err(Error::Precondition(msg)) => {
                report.notes.push(format!("tuple {ti} skipped: {msg}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        for msg in &s.skipped {
            report.notes.push(format!("tuple {ti}: {msg}"));
        }
        let parts = fold_paths(
            opts.paths,
            combine(seed, ti as u64),
            domain_id("duality"),
            rng::DEFAULT_BLOCK,
            || (PairCounts::default(), vec![0.0; n * d]),
            |(c, incs), rng, _| {
                for step in incs.chunks_exact_mut(d) {
                    steps.sample_into(rng, step);
                }
                let mut pos = [0.0; crate::geometry::MAX_DIM];
                let l1 = forward_event(&s.z, incs, d, cone, &s.forward_target, &mut pos);
                let r1 = reversed_event(&t.y, incs, d, &s.outer, &s.key1_target, &mut pos);
                c.key1[0] += l1 as u64;
                c.key1[1] += r1 as u64;
                c.key1_violations += (l1 && !r1) as u64;
                if let Some((inner, b)) = &s.key2 {
                    let l2 = reversed_event(&t.y, incs, d, inner, b, &mut pos);
                    let r2 = forward_event(&t.x, incs, d, cone, &s.forward_target, &mut pos);
                    c.key2[0] += l2 as u64;
                    c.key2[1] += r2 as u64;
                    c.key2_violations += (l2 && !r2) as u64;
                }
            },
        );
        let mut c = PairCounts::default();
        for (p, _) in parts {
            for k in 0..2 {
                c.key1[k] += p.key1[k];
                c.key2[k] += p.key2[k];
            }
            c.key1_violations += p.key1_violations;
            c.key2_violations += p.key2_violations;
        }
        let mut keys = vec![(1u8, c.key1, c.key1_violations)];
        if s.key2.is_some() {
            keys.push((2, c.key2, c.key2_violations));
        }
        for (key, counts, violations) in keys {
            tested += 1;
            let est = |k: u64| Estimate::new(k as f64 / opts.paths as f64, binomial_se(k, opts.paths));
            let (l, r) = (est(counts[0]), est(counts[1]));
            let ok = l.value <= r.value + 3.0 * (l.stderr + r.stderr) && violations == 0;
            report.rows.push(vec![
                ti as f64,
                key as f64,
                l.value,
                l.stderr,
                r.value,
                r.stderr,
                violations as f64,
            ]);
            report.plot.push(vec![ti as f64, key as f64, l.value, r.value]);
            report.push_check(
                Check::new(
                    format!("key{key}[{ti}]"),
                    l.value - r.value,
                    l.stderr + r.stderr,
                    "left ≤ right + 3σ, no pathwise violation",
                    if ok { Verdict::Pass } else { Verdict::Fail },
                )
                .with_detail(format!("x = {:?}, y = {:?}, {violations} violating paths", t.x, t.y)),
            );
        }
    }
    if tested == 0 {
        report.push_check(
            Check::new("duality", f64::NAN, f64::NAN, "", Verdict::Inconclusive).with_detail("every tuple was skipped"),
        );
    }
    Ok(report)
}

/// Distribution of a killed walk over atom positions, merged on a fine grid.
fn propagate<R: Region + ?Sized>(
    start: &[f64],
    atoms: &[(Vec<f64>, f64)],
    sign: f64,
    region: &R,
    n: u64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v * 1e9).round() as i64).collect() };
    let mut states: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    states.insert(key(start), (start.to_vec(), 1.0));
    for _ in 0..n {
        let mut next: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
        for (pos, w) in states.values() {
            for (a, q) in atoms {
                let p: Vec<f64> = pos.iter().zip(a).map(|(u, v)| u + sign * v).collect();
                if !region.is_inside(&p) {
                    continue;
                }
                next.entry(key(&p)).or_insert_with(|| (p, 0.0)).1 += w * q;
            }
        }
        if next.len() > MAX_EXACT_STATES {
            return Err(Error::InvalidArgument(format!("exact enumeration exceeds {MAX_EXACT_STATES} states")));
        }
        states = next;
    }
    Ok(states.into_values().collect())
}

fn mass_in(states: &[(Vec<f64>, f64)], b: &AxisBox) -> f64 {
    states.iter().filter(|(p, _)| b.contains(p)).map(|(_, w)| w).sum()
}

/// Both inclusions by exhaustive enumeration over a finite-atom law.
pub fn duality_exact(
    model: &Model,
    tuple: &DualityTuple,
    delta: f64,
    delta_tilde: f64,
    n: u64,
) -> Result<ExactDuality> {
    let atoms: Vec<(Vec<f64>, f64)> = model
        .steps()
        .atom_list()
        .ok_or_else(|| Error::UnsupportedDistribution("exact duality needs a finite-atom law".into()))?
        .iter()
        .map(|a| (a.point.clone(), a.weight))
        .collect();
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let s = setup(model, tuple, delta, delta_tilde)?;
    let cone = model.cone();
    let fwd_z = propagate(&s.z, &atoms, 1.0, cone, n)?;
    let rev_outer = propagate(&tuple.y, &atoms, -1.0, &s.outer, n)?;
    let key1 = Some((mass_in(&fwd_z, &s.forward_target), mass_in(&rev_outer, &s.key1_target)));
    let key2 = match &s.key2 {
        Some((inner, b)) => {
            let rev_inner = propagate(&tuple.y, &atoms, -1.0, inner, n)?;
            let fwd_x = propagate(&tuple.x, &atoms, 1.0, cone, n)?;
            Some((mass_in(&rev_inner, b), mass_in(&fwd_x, &s.forward_target)))
        }
        None => None,
    };
    Ok(ExactDuality { key1, key2, skipped: s.skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConeSpec;
    use crate::steps::StepDistribution;

    fn lazy_2d() -> Model {
        let law = StepDistribution::atoms(vec![
            (vec![1.0, 0.0], 0.25),
            (vec![-1.0, 0.0], 0.25),
            (vec![0.0, 1.0], 0.25),
            (vec![0.0, -1.0], 0.25),
        ])
        .unwrap();
        Model::new(ConeSpec::Orthant(2), law, true).unwrap()
    }

    #[test]
    fn one_step_enumeration_satisfies_both_inclusions() {
        let m = lazy_2d();
        let t = DualityTuple::new(vec![1.3, 1.3], vec![2.6, 2.6]);
        let e = duality_exact(&m, &t, 0.25, 1.0, 1).unwrap();
        assert!(e.key1.is_some());
        assert!(e.holds(), "{e:?}");
    }

    #[test]
    fn key2_is_skipped_when_delta_tilde_is_not_larger() {
        let m = lazy_2d();
        let t = DualityTuple::new(vec![1.3, 1.3], vec![2.6, 2.6]);
        let e = duality_exact(&m, &t, 0.5, 0.25, 1).unwrap();
        assert!(e.key2.is_none());
        assert!(!e.skipped.is_empty());
    }

    #[test]
    fn paired_paths_never_violate_the_inclusions() {
        let m = Model::new(ConeSpec::Orthant(2), StepDistribution::gaussian(2).unwrap(), false).unwrap();
        let opts = DualityOptions {
            tuples: vec![DualityTuple::new(vec![2.0, 2.0], vec![3.0, 3.0])],
            delta: 0.25,
            delta_tilde: 0.5,
            horizon: 8,
            paths: 20_000,
        };
        let r = verify_duality(&m, &opts, 3).unwrap();
        assert_eq!(r.checks.len(), 2);
        assert_eq!(r.verdict, Verdict::Pass, "{:?}", r.checks);
    }
}
