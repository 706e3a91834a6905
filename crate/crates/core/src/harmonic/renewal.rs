//! Strict ascending ladder heights of a 1D finite-atom law and the renewal
//! series `Σ_{n≥0} μ₊^{⋆n}([0, x])`.
//!
//! Skip-free laws (every atom a multiple of the largest one) have ladder
//! height equal to the largest atom, exactly. Other laws are enumerated over
//! killed paths up to a depth budget; the unresolved mass is reported.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::steps::Atom;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RenewalConvention {
    /// Mass of `[0, x]`.
    Closed,
    /// Mass of `[0, x)`.
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenewalBudget {
    pub max_depth: usize,
    pub max_states: usize,
    /// Atoms lighter than this are dropped; the dropped mass is tracked.
    pub prune: f64,
}

impl Default for RenewalBudget {
    fn default() -> Self {
        RenewalBudget { max_depth: 4000, max_states: 200_000, prune: 1e-16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderLaw {
    /// `(height, probability)` sorted by height.
    pub heights: Vec<(f64, f64)>,
    /// Probability not resolved within the budget.
    pub defect: f64,
    pub exact: bool,
    pub depth: usize,
}

impl LadderLaw {
    pub fn resolved_mass(&self) -> f64 {
        self.heights.iter().map(|h| h.1).sum()
    }

    /// Mean of the resolved heights conditioned on being resolved.
    pub fn conditional_mean(&self) -> f64 {
        self.heights.iter().map(|h| h.0 * h.1).sum::<f64>() / self.resolved_mass()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenewalMeasure {
    /// `(position, mass)` of the renewal measure on `[0, x_max]`, sorted.
    pub jumps: Vec<(f64, f64)>,
    pub x_max: f64,
    pub ladder: LadderLaw,
    /// Mass dropped by pruning while convolving.
    pub pruned: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RenewalValue {
    pub value: f64,
    /// Zero when the ladder law is exact; otherwise a first-order estimate
    /// `defect · N(N+1)/2` with `N` the number of renewals fitting in `[0, x]`.
    pub error_bound: f64,
    pub exact: bool,
}

const KEY_SCALE: f64 = 1e9;

fn key(v: f64) -> i64 {
    (v * KEY_SCALE).round() as i64
}

fn one_dimensional(atoms: &[Atom]) -> Result<Vec<(f64, f64)>> {
    if atoms.iter().any(|a| a.point.len() != 1) {
        return Err(Error::InvalidArgument("ladder heights need a one-dimensional law".into()));
    }
    let pts: Vec<(f64, f64)> = atoms.iter().map(|a| (a.point[0], a.weight)).collect();
    let scale = pts.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let mean: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    if mean.abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidArgument(format!("law is not centered (mean {mean:e})")));
    }
    if scale == 0.0 {
        return Err(Error::Degenerate("law is a point mass at zero".into()));
    }
    Ok(pts)
}

/// Law of `S(T₊)` with `T₊ = inf{n ≥ 1 : S(n) > 0}`.
pub fn ladder_height_law(atoms: &[Atom], budget: &RenewalBudget) -> Result<LadderLaw> {
    let pts = one_dimensional(atoms)?;
    let top = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let skip_free = pts.iter().all(|p| {
        let r = p.0 / top;
        (r - r.round()).abs() < 1e-9
    });
    if skip_free {
        return Ok(LadderLaw { heights: vec![(top, 1.0)], defect: 0.0, exact: true, depth: 0 });
    }
    let mut heights: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    let mut layer: BTreeMap<i64, (f64, f64)> = BTreeMap::from([(0, (0.0, 1.0))]);
    let mut pruned = 0.0;
    let mut depth = 0;
    while depth < budget.max_depth && !layer.is_empty() {
        depth += 1;
        let mut next: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
        for &(pos, mass) in layer.values() {
            for &(a, w) in &pts {
                let y = pos + a;
                let m = mass * w;
                let slot = if y > 0.0 { heights.entry(key(y)) } else { next.entry(key(y)) };
                let e = slot.or_insert((y, 0.0));
                e.1 += m;
            }
        }
        next.retain(|_, v| {
            if v.1 < budget.prune {
                pruned += v.1;
                false
            } else {
                true
            }
        });
        if next.len() > budget.max_states {
            layer = next;
            break;
        }
        layer = next;
    }
    let remaining: f64 = layer.values().map(|v| v.1).sum();
    let mut h: Vec<(f64, f64)> = heights.into_values().collect();
    h.sort_by(|a, b| a.0.total_cmp(&b.0));
    let defect = remaining + pruned;
    Ok(LadderLaw { heights: h, defect, exact: defect == 0.0, depth })
}

/// Renewal measure `Σ_n μ₊^{⋆n}` restricted to `[0, x_max]`.
pub fn renewal_measure_1d(atoms: &[Atom], x_max: f64, budget: &RenewalBudget) -> Result<RenewalMeasure> {
    if !(x_max >= 0.0) || !x_max.is_finite() {
        return Err(Error::InvalidArgument("x must be a finite nonnegative number".into()));
    }
    let ladder = ladder_height_law(atoms, budget)?;
    let (jumps, pruned) = renewal_sum(&ladder.heights, x_max, budget)?;
    Ok(RenewalMeasure { jumps, x_max, ladder, pruned })
}

fn renewal_sum(heights: &[(f64, f64)], x_max: f64, budget: &RenewalBudget) -> Result<(Vec<(f64, f64)>, f64)> {
    let mut total: BTreeMap<i64, (f64, f64)> = BTreeMap::from([(0, (0.0, 1.0))]);
    let mut layer: BTreeMap<i64, (f64, f64)> = BTreeMap::from([(0, (0.0, 1.0))]);
    let mut pruned = 0.0;
    while !layer.is_empty() {
        let mut next: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
        for &(pos, mass) in layer.values() {
            for &(h, w) in heights {
                let y = pos + h;
                if y > x_max + 1e-12 {
                    continue;
                }
                next.entry(key(y)).or_insert((y, 0.0)).1 += mass * w;
            }
        }
        next.retain(|_, v| {
            if v.1 < budget.prune {
                pruned += v.1;
                false
            } else {
                true
            }
        });
        for (k, v) in &next {
            total.entry(*k).or_insert((v.0, 0.0)).1 += v.1;
        }
        if total.len() > budget.max_states {
            return Err(Error::Refused(format!(
                "renewal measure on [0, {x_max}] exceeds {} atoms",
                budget.max_states
            )));
        }
        layer = next;
    }
    let mut jumps: Vec<(f64, f64)> = total.into_values().collect();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((jumps, pruned))
}

impl RenewalMeasure {
    pub fn value(&self, x: f64, convention: RenewalConvention) -> f64 {
        let cut = key(x);
        self.jumps
            .iter()
            .take_while(|j| match convention {
                RenewalConvention::Closed => key(j.0) <= cut,
                RenewalConvention::Open => key(j.0) < cut,
            })
            .map(|j| j.1)
            .sum()
    }

    fn error_bound(&self, x: f64) -> f64 {
        if self.ladder.exact && self.pruned == 0.0 {
            return 0.0;
        }
        let h_min = self.ladder.heights.first().map(|h| h.0).unwrap_or(f64::INFINITY);
        let n = (x / h_min).floor() + 1.0;
        self.ladder.defect * n * (n + 1.0) / 2.0 + self.pruned
    }
}

/// `Σ_{n≥0} μ₊^{⋆n}` of `[0, x]` or `[0, x)`, with `μ₊` the strict ascending
/// ladder-height law of `atoms`. This function is harmonic for the reversed
/// walk `−S(n)` on the corresponding half-line.
pub fn renewal_v_1d(
    atoms: &[Atom],
    x: f64,
    convention: RenewalConvention,
    budget: &RenewalBudget,
) -> Result<RenewalValue> {
    let m = renewal_measure_1d(atoms, x, budget)?;
    let exact = m.ladder.exact && m.pruned == 0.0;
    Ok(RenewalValue { value: m.value(x, convention), error_bound: m.error_bound(x), exact })
}

/// Harmonic function of the forward walk killed on leaving `(0, ∞)`,
/// normalized so that `V(x) ∼ x`: `E[H]·Σ_n ν₊^{⋆n}([0, x))` with `ν₊` the
/// strict ascending ladder-height law of the negated steps. An inexact
/// ladder law is renormalized to unit mass before summing.
pub fn half_line_v(atoms: &[Atom], x: f64, budget: &RenewalBudget) -> Result<RenewalValue> {
    let negated: Vec<Atom> = atoms.iter().map(|a| Atom { point: vec![-a.point[0]], weight: a.weight }).collect();
    if negated.iter().any(|a| a.point.len() != 1) {
        return Err(Error::InvalidArgument("half-line harmonic function needs a one-dimensional law".into()));
    }
    let mut ladder = ladder_height_law(&negated, budget)?;
    let mass = ladder.resolved_mass();
    for h in &mut ladder.heights {
        h.1 /= mass;
    }
    let mean = ladder.conditional_mean();
    let (jumps, pruned) = renewal_sum(&ladder.heights, x, budget)?;
    let m = RenewalMeasure { jumps, x_max: x, ladder, pruned };
    let value = mean * m.value(x, RenewalConvention::Open);
    let exact = m.ladder.exact && pruned == 0.0;
    Ok(RenewalValue { value, error_bound: mean * m.error_bound(x), exact })
}
