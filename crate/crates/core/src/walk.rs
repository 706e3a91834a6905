//! Killed random walks and the Brownian exit-time oracle.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Cone, Region, MAX_DIM};
use crate::rng::{self, combine, mix64};
use crate::stats::Estimate;
use crate::steps::StepDistribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// `x + S(n)`.
    Forward,
    /// `y − S(n)`.
    Reverse,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }
}

/// One path up to its exit time or the last horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitRecord {
    /// First `n ≥ 1` with the walk outside the region; `None` when censored.
    pub exit_time: Option<u64>,
    pub horizons: Vec<u64>,
    pub survived: Vec<bool>,
    /// Position at each horizon the path survived to.
    pub endpoints: Vec<Option<Vec<f64>>>,
    /// Position at exit, or at the last horizon when censored.
    pub last_position: Vec<f64>,
}

fn check_horizons(horizons: &[u64]) -> Result<()> {
    if horizons.is_empty() || horizons[0] == 0 || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("horizons must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Walks from `start` until exit or the last horizon, calling
/// `visit(k, position)` at each horizon `k` reached inside the region.
/// Returns the exit time, if any; `pos` then holds the exit position.
#[inline]
pub fn walk_path<G, R, F>(
    start: &[f64],
    dist: &StepDistribution,
    region: &G,
    direction: Direction,
    horizons: &[u64],
    rng: &mut R,
    pos: &mut [f64],
    mut visit: F,
) -> Option<u64>
where
    G: Region + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize, &[f64]),
{
    let d = start.len();
    let sign = direction.sign();
    pos[..d].copy_from_slice(start);
    let mut step = [0.0; MAX_DIM];
    let mut next = 0usize;
    let last = *horizons.last().unwrap();
    for n in 1..=last {
        dist.sample_into(rng, &mut step[..d]);
        for i in 0..d {
            pos[i] += sign * step[i];
        }
        if !region.is_inside(&pos[..d]) {
            return Some(n);
        }
        if n == horizons[next] {
            visit(next, &pos[..d]);
            next += 1;
        }
    }
    None
}

fn simulate<G: Region + ?Sized>(
    x: &[f64],
    dist: &StepDistribution,
    region: &G,
    direction: Direction,
    horizons: &[u64],
    rng: &mut ChaCha8Rng,
) -> Result<ExitRecord> {
    check_dim(region.dim(), x.len())?;
    check_dim(dist.dim(), x.len())?;
    check_horizons(horizons)?;
    if !region.is_inside(x) {
        return Err(Error::Precondition("start point is outside the region".into()));
    }
    let mut endpoints = vec![None; horizons.len()];
    let mut pos = vec![0.0; x.len()];
    let exit = walk_path(x, dist, region, direction, horizons, rng, &mut pos, |k, p| {
        endpoints[k] = Some(p.to_vec());
    });
    Ok(ExitRecord {
        exit_time: exit,
        horizons: horizons.to_vec(),
        survived: endpoints.iter().map(|e| e.is_some()).collect(),
        endpoints,
        last_position: pos,
    })
}

pub fn simulate_exit<G: Region + ?Sized>(
    x: &[f64],
    dist: &StepDistribution,
    region: &G,
    horizons: &[u64],
    rng: &mut ChaCha8Rng,
) -> Result<ExitRecord> {
    simulate(x, dist, region, Direction::Forward, horizons, rng)
}

pub fn simulate_reverse_exit<G: Region + ?Sized>(
    y: &[f64],
    dist: &StepDistribution,
    region: &G,
    horizons: &[u64],
    rng: &mut ChaCha8Rng,
) -> Result<ExitRecord> {
    simulate(y, dist, region, Direction::Reverse, horizons, rng)
}

/// Uniform sample of fixed capacity: keeps the points with the smallest
/// keys, so merging is associative and commutative.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reservoir {
    capacity: usize,
    items: Vec<(u64, Vec<f64>)>,
}

impl Reservoir {
    pub fn new(capacity: usize) -> Self {
        Reservoir { capacity, items: Vec::new() }
    }

    pub fn offer(&mut self, key: u64, point: &[f64]) {
        if self.capacity == 0 {
            return;
        }
        self.items.push((key, point.to_vec()));
        if self.items.len() >= 2 * self.capacity.max(16) {
            self.compact();
        }
    }

    fn compact(&mut self) {
        self.items.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.partial_cmp(&b.1).unwrap()));
        self.items.truncate(self.capacity);
    }

    pub fn merge(&mut self, other: Reservoir) {
        self.items.extend(other.items);
        self.compact();
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.items.iter().map(|(_, p)| p.as_slice())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalTable {
    pub horizons: Vec<u64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub reservoirs: Vec<Reservoir>,
}

impl SurvivalTable {
    fn empty(horizons: &[u64], capacity: usize) -> Self {
        SurvivalTable {
            horizons: horizons.to_vec(),
            counts: vec![0; horizons.len()],
            total: 0,
            reservoirs: (0..horizons.len()).map(|_| Reservoir::new(capacity)).collect(),
        }
    }

    pub fn merge(&mut self, other: SurvivalTable) {
        self.total += other.total;
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        for (r, o) in self.reservoirs.iter_mut().zip(other.reservoirs) {
            r.merge(o);
        }
    }

    pub fn estimate(&self, k: usize) -> Estimate {
        let p = self.counts[k] as f64 / self.total as f64;
        Estimate::new(p, crate::stats::binomial_se(self.counts[k], self.total))
    }
}

#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub block_size: u64,
    pub reservoir_capacity: usize,
    pub direction: Direction,
    pub domain: u64,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            block_size: rng::DEFAULT_BLOCK,
            reservoir_capacity: 100_000,
            direction: Direction::Forward,
            domain: rng::domain_id("survival"),
        }
    }
}

pub const MIN_BATCH_PATHS: u64 = 1000;

/// Runs `path(acc, rng, global_index)` for every path, one independent
/// stream per block, and returns the per-block accumulators in block order.
pub fn fold_paths<A, I, P>(paths: u64, seed: u64, domain: u64, block_size: u64, init: I, path: P) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    P: Fn(&mut A, &mut ChaCha8Rng, u64) + Sync,
{
    rng::run_blocks(paths, block_size, |b, first, n| {
        let mut rng = rng::stream(seed, domain, b);
        let mut acc = init();
        for i in 0..n {
            path(&mut acc, &mut rng, first + i);
        }
        acc
    })
}

#[allow(clippy::too_many_arguments)]
pub fn survival_batch<G: Region + ?Sized>(
    x: &[f64],
    dist: &StepDistribution,
    region: &G,
    horizons: &[u64],
    total_paths: u64,
    seed: u64,
    options: &BatchOptions,
) -> Result<SurvivalTable> {
    check_dim(region.dim(), x.len())?;
    check_dim(dist.dim(), x.len())?;
    check_horizons(horizons)?;
    if total_paths < MIN_BATCH_PATHS {
        return Err(Error::InvalidArgument(format!("a batch needs at least {MIN_BATCH_PATHS} paths")));
    }
    if !region.is_inside(x) {
        return Err(Error::Precondition("start point is outside the region".into()));
    }
    let cap = options.reservoir_capacity;
    let parts = fold_paths(
        total_paths,
        seed,
        options.domain,
        options.block_size,
        || SurvivalTable::empty(horizons, cap),
        |table, rng, index| {
            let mut pos = [0.0; MAX_DIM];
            let path_key = combine(seed, index);
            table.total += 1;
            walk_path(x, dist, region, options.direction, horizons, rng, &mut pos, |k, p| {
                table.counts[k] += 1;
                table.reservoirs[k].offer(mix64(path_key ^ horizons[k]), p);
            });
        },
    );
    let mut out = SurvivalTable::empty(horizons, cap);
    for p in parts {
        out.merge(p);
    }
    Ok(out)
}

/// Monte Carlo survival curve of Brownian motion started at `x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BrownianTail {
    pub times: Vec<f64>,
    pub estimates: Vec<Estimate>,
    pub survivors: Vec<u64>,
    pub total: u64,
    pub dt: f64,
    pub correction: BridgeCorrection,
    /// Bias of uncorrected Euler monitoring, an upper bound for the distance
    /// correction; zero for the facet correction.
    pub bias_bound: Vec<f64>,
}

/// Crossing probability applied between grid times.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeCorrection {
    /// Product over facets of the half-space bridge formula (convex cones).
    Facets,
    /// Half-space formula with distances to the boundary (reflex cones).
    Distance,
}

/// Constant of the leading discrete-monitoring boundary shift, `−ζ(1/2)/√(2π)`.
pub const MONITORING_SHIFT: f64 = 0.582_597_157_939_010_7;

pub fn brownian_survival_curve(
    x: &[f64],
    cone: &Cone,
    times: &[f64],
    paths: u64,
    dt: f64,
    seed: u64,
) -> Result<BrownianTail> {
    check_dim(cone.dim(), x.len())?;
    if !cone.is_inside(x) {
        return Err(Error::Precondition("start point is outside the cone".into()));
    }
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("times must be positive and increasing".into()));
    }
    if !(dt > 0.0) || dt > 1e-3 * times[0] * (1.0 + 1e-9) {
        return Err(Error::InvalidArgument("time step must satisfy dt ≤ 10⁻³·t".into()));
    }
    if paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let steps: Vec<u64> = times.iter().map(|t| (t / dt).round().max(1.0) as u64).collect();
    let facets = !cone.is_reflex();
    let start_dist = cone.distance_unchecked(x);
    let normals = cone.normals().to_vec();
    let sd = dt.sqrt();
    let d = x.len();
    let parts = fold_paths(
        paths,
        seed,
        rng::domain_id("brownian"),
        rng::DEFAULT_BLOCK,
        || vec![0u64; steps.len()],
        |counts, rng, _| {
            let mut pos = [0.0; MAX_DIM];
            pos[..d].copy_from_slice(x);
            let mut before = [0.0; MAX_DIM];
            let mut dist_before = start_dist;
            let mut next = 0;
            let last = *steps.last().unwrap();
            for n in 1..=last {
                before[..d].copy_from_slice(&pos[..d]);
                for v in pos[..d].iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += sd * z;
                }
                if !cone.is_inside(&pos[..d]) {
                    return;
                }
                let stay = if facets {
                    let mut stay = 1.0;
                    for nrm in &normals {
                        let a: f64 = nrm.iter().zip(&before[..d]).map(|(p, q)| p * q).sum();
                        let b: f64 = nrm.iter().zip(&pos[..d]).map(|(p, q)| p * q).sum();
                        stay *= 1.0 - (-2.0 * a * b / dt).exp();
                    }
                    stay
                } else {
                    let b = cone.distance_unchecked(&pos[..d]);
                    let s = 1.0 - (-2.0 * dist_before * b / dt).exp();
                    dist_before = b;
                    s
                };
                if stay < 1.0 && rng.random::<f64>() >= stay {
                    return;
                }
                while next < steps.len() && n == steps[next] {
                    counts[next] += 1;
                    next += 1;
                }
            }
        },
    );
    let mut survivors = vec![0u64; steps.len()];
    for p in parts {
        for (s, c) in survivors.iter_mut().zip(p) {
            *s += c;
        }
    }
    let estimates: Vec<Estimate> = survivors
        .iter()
        .map(|&s| Estimate::new(s as f64 / paths as f64, crate::stats::binomial_se(s, paths)))
        .collect();
    let bias_bound = if facets {
        vec![0.0; times.len()]
    } else {
        let rel = MONITORING_SHIFT * sd / start_dist;
        estimates.iter().map(|e| e.value * rel).collect()
    };
    let correction = if facets { BridgeCorrection::Facets } else { BridgeCorrection::Distance };
    Ok(BrownianTail { times: times.to_vec(), estimates, survivors, total: paths, dt, correction, bias_bound })
}

/// `P(τ^bm(x) > t)` by simulation.
pub fn brownian_exit_tail(x: &[f64], cone: &Cone, t: f64, paths: u64, dt: f64, seed: u64) -> Result<Estimate> {
    Ok(brownian_survival_curve(x, cone, &[t], paths, dt, seed)?.estimates[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ThickenSign;

    #[test]
    fn one_step_half_line() {
        let c = Cone::half_line();
        let pm = StepDistribution::plus_minus_one();
        let t = survival_batch(&[1.0], &pm, &c, &[1, 2, 3], 100_000, 9, &BatchOptions::default()).unwrap();
        let p1 = t.counts[0] as f64 / t.total as f64;
        assert!((p1 - 0.5).abs() < 3.0 * (0.25f64 / 1e5).sqrt() + 1e-3);
        assert!(t.counts[1] <= t.counts[0] && t.counts[2] <= t.counts[1]);
        // survivors at n = 2 equal those at n = 3 for the ±1 walk from 1 (parity)
        assert!(t.counts[2] <= t.counts[1]);
    }

    #[test]
    fn batch_is_deterministic() {
        let c = Cone::orthant(2).unwrap();
        let g = StepDistribution::gaussian(2).unwrap();
        let opts = BatchOptions { reservoir_capacity: 50, ..Default::default() };
        let a = survival_batch(&[2.0, 2.0], &g, &c, &[4, 16], 5000, 1, &opts).unwrap();
        let b = survival_batch(&[2.0, 2.0], &g, &c, &[4, 16], 5000, 1, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reservoirs[1].len(), 50.min(a.counts[1] as usize));
    }

    #[test]
    fn exit_record_fields() {
        let c = Cone::orthant(2).unwrap();
        let g = StepDistribution::gaussian(2).unwrap();
        let mut r = rng::stream(1, 2, 3);
        let rec = simulate_exit(&[5.0, 5.0], &g, &c, &[1, 10], &mut r).unwrap();
        assert_eq!(rec.survived[0], rec.endpoints[0].is_some());
        if let Some(t) = rec.exit_time {
            assert!(t >= 1);
            assert!(!c.is_inside(&rec.last_position));
        }
        assert!(simulate_exit(&[-1.0, 5.0], &g, &c, &[1], &mut r).is_err());
        let outer = c.thicken(0.5, ThickenSign::Outer).unwrap();
        assert!(simulate_reverse_exit(&[-0.2, 1.0], &g, &outer, &[1], &mut r).is_ok());
    }

    #[test]
    fn reservoir_merge_is_order_free() {
        let mut a = Reservoir::new(3);
        let mut b = Reservoir::new(3);
        for k in [5u64, 1, 9, 7] {
            a.offer(k, &[k as f64]);
        }
        for k in [2u64, 8, 3] {
            b.offer(k, &[k as f64]);
        }
        let mut ab = a.clone();
        ab.merge(b.clone());
        let mut ba = b;
        ba.merge(a);
        assert_eq!(ab, ba);
        let keys: Vec<f64> = ab.points().map(|p| p[0]).collect();
        assert_eq!(keys, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn brownian_deep_interior() {
        let c = Cone::half_line();
        let e = brownian_exit_tail(&[4.0], &c, 1.0, 20_000, 1e-3, 3).unwrap();
        assert!(e.value > 0.999);
    }

    #[test]
    fn reflex_distance_correction_is_stable_in_dt() {
        let c = Cone::wedge(1.5 * std::f64::consts::PI).unwrap();
        let x = [-1.0, 1.0];
        let coarse = brownian_survival_curve(&x, &c, &[1.0], 100_000, 1e-3, 5).unwrap();
        let fine = brownian_survival_curve(&x, &c, &[1.0], 20_000, 1e-3 / 16.0, 6).unwrap();
        assert_eq!(coarse.correction, BridgeCorrection::Distance);
        let (a, b) = (coarse.estimates[0], fine.estimates[0]);
        assert!((a.value - b.value).abs() < 3.5 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt(), "{a:?} {b:?}");
    }
}
