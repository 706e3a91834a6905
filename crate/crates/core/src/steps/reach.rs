//! Breadth-first reachability of the deep-interior sets
//! `D = {z : dist(z, ∂C) ≥ γ|z|, |z| ≥ R}` by the killed walk.

use std::collections::HashSet;

use serde::Serialize;

use super::Atom;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{norm, Cone};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum CmuVerdict {
    Reachable { steps: usize, state: Vec<f64> },
    NotReachable { explored: usize, horizon: usize },
    Inconclusive { explored: usize, budget: usize },
}

const MAX_HORIZON: usize = 64;

fn key(z: &[f64]) -> Vec<i64> {
    z.iter().map(|v| (v * 1e9).round() as i64).collect()
}

pub fn cmu_probe(
    atoms: &[Atom],
    cone: &Cone,
    x: &[f64],
    gamma: f64,
    radius: f64,
    n_max: usize,
    node_budget: usize,
) -> Result<CmuVerdict> {
    check_dim(cone.dim(), x.len())?;
    if n_max == 0 || n_max > MAX_HORIZON {
        return Err(Error::InvalidArgument(format!("horizon must lie in 1..={MAX_HORIZON}")));
    }
    if !cone.is_inside(x) {
        return Err(Error::Precondition("start point is outside the cone".into()));
    }
    let in_target = |z: &[f64]| {
        let r = norm(z);
        r >= radius && cone.distance_unchecked(z) >= gamma * r
    };
    let mut layer: Vec<Vec<f64>> = vec![x.to_vec()];
    let mut explored = 0usize;
    for step in 1..=n_max {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for z in &layer {
            for a in atoms {
                let y: Vec<f64> = z.iter().zip(&a.point).map(|(p, q)| p + q).collect();
                if !cone.is_inside(&y) || !seen.insert(key(&y)) {
                    continue;
                }
                explored += 1;
                if in_target(&y) {
                    return Ok(CmuVerdict::Reachable { steps: step, state: y });
                }
                if explored > node_budget {
                    return Ok(CmuVerdict::Inconclusive { explored, budget: node_budget });
                }
                next.push(y);
            }
        }
        if next.is_empty() {
            return Ok(CmuVerdict::NotReachable { explored, horizon: step });
        }
        layer = next;
    }
    Ok(CmuVerdict::NotReachable { explored, horizon: n_max })
}
