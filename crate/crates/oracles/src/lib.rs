//! Reference values computed without Monte Carlo: dynamic programming over
//! integer walks on the half-line, the reflection principle, and Gaussian
//! integrals. Kept separate from the library so tests compare two
//! independent routes.

use libm::erf;

/// Standard normal distribution function.
pub fn phi(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Sub-probability distribution of an integer walk killed on leaving `(0, ∞)`.
#[derive(Clone, Debug)]
pub struct KilledLattice1d {
    atoms: Vec<(i64, f64)>,
    /// `mass[k]` is the weight at position `k`; position 0 is never occupied.
    mass: Vec<f64>,
    steps: usize,
}

impl KilledLattice1d {
    pub fn new(atoms: &[(i64, f64)], x: i64) -> Self {
        assert!(x >= 1, "start must be a positive integer");
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        assert!((total - 1.0).abs() < 1e-12, "weights must sum to one");
        let mut mass = vec![0.0; x as usize + 1];
        mass[x as usize] = 1.0;
        KilledLattice1d { atoms: atoms.to_vec(), mass, steps: 0 }
    }

    pub fn step(&mut self) {
        let up = self.atoms.iter().map(|a| a.0).max().unwrap_or(0).max(0) as usize;
        let mut next = vec![0.0; self.mass.len() + up];
        for (k, &w) in self.mass.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for &(a, q) in &self.atoms {
                let j = k as i64 + a;
                if j >= 1 {
                    next[j as usize] += w * q;
                }
            }
        }
        while next.len() > 1 && *next.last().unwrap() == 0.0 {
            next.pop();
        }
        self.mass = next;
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `P(τ > n)`.
    pub fn survival(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `E[f(x+S(n)); τ > n]`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.mass.iter().enumerate().map(|(k, w)| w * f(k as f64)).sum()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
}

/// `P(τ > k)` for `k = 0..=n` on the open half-line.
pub fn halfline_survival(atoms: &[(i64, f64)], x: i64, n: usize) -> Vec<f64> {
    let mut w = KilledLattice1d::new(atoms, x);
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    for _ in 0..n {
        w.step();
        out.push(w.survival());
    }
    out
}

/// `E[x+S(n); τ > n]` on the open half-line.
pub fn halfline_harmonic(atoms: &[(i64, f64)], x: i64, n: usize) -> f64 {
    let mut w = KilledLattice1d::new(atoms, x);
    for _ in 0..n {
        w.step();
    }
    w.expect(|y| y)
}

/// Brownian motion from `x > 0`: `P(τ > t) = 2Φ(x/√t) − 1`.
pub fn brownian_halfline_survival(x: f64, t: f64) -> f64 {
    2.0 * phi(x / t.sqrt()) - 1.0
}

/// Brownian motion in the quadrant: the product of two half-line survivals.
pub fn brownian_quadrant_survival(x: [f64; 2], t: f64) -> f64 {
    brownian_halfline_survival(x[0], t) * brownian_halfline_survival(x[1], t)
}

/// `P(x + Z√n ∈ [lo, hi])` for a standard Gaussian vector `Z`.
pub fn gaussian_box(x: &[f64], lo: &[f64], hi: &[f64], n: f64) -> f64 {
    let s = n.sqrt();
    (0..x.len()).map(|i| phi((hi[i] - x[i]) / s) - phi((lo[i] - x[i]) / s)).product()
}

/// Rayleigh mass of `[a, b]`: `∫_a^b y e^{−y²/2} dy` for `0 ≤ a ≤ b`.
pub fn rayleigh_mass(a: f64, b: f64) -> f64 {
    (-0.5 * a * a).exp() - (-0.5 * b * b).exp()
}

/// `∫_a^b (y/√n) e^{−y²/2n} dy`, the half-line local integrand over a box.
pub fn halfline_local_integral(a: f64, b: f64, n: f64) -> f64 {
    n.sqrt() * rayleigh_mass(a / n.sqrt(), b / n.sqrt())
}

/// `κ₀` of Brownian motion in a planar wedge of opening `alpha`, for
/// `m₁ = c·sin(ν(φ−φ₀))` with `ν = π/alpha`, from
/// `κ₀ = Γ((p+d)/2) / (2^{p/2} Γ(p+d/2)) · ∫m₁ / ∫m₁²`.
pub fn wedge_kappa0(alpha: f64, c: f64) -> f64 {
    let nu = std::f64::consts::PI / alpha;
    let int_m1 = 2.0 * c / nu;
    let int_m1_sq = c * c * alpha / 2.0;
    libm::tgamma(nu / 2.0 + 1.0) / (2f64.powf(nu / 2.0) * libm::tgamma(nu + 1.0)) * int_m1 / int_m1_sq
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRW: [(i64, f64); 2] = [(1, 0.5), (-1, 0.5)];

    #[test]
    fn wedge_constant_reduces_to_the_reflection_principle() {
        let pi = std::f64::consts::PI;
        // half-plane, u = y
        assert!((wedge_kappa0(pi, 1.0) - (2.0 / pi).sqrt()).abs() < 1e-14);
        // quadrant, u = r² sin 2φ = 2xy, P(τ > t) ~ (2/π) xy / t
        assert!((wedge_kappa0(pi / 2.0, 1.0) - 1.0 / pi).abs() < 1e-14);
    }

    #[test]
    fn simple_walk_is_a_martingale_until_killing() {
        for x in 1..6 {
            assert!((halfline_harmonic(&SRW, x, 200) - x as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn simple_walk_survival_matches_ballot_numbers() {
        // from 1: P(τ > 2) = 1/2, P(τ > 4) = 3/8, P(τ > 6) = 5/16
        let s = halfline_survival(&SRW, 1, 6);
        assert!((s[2] - 0.5).abs() < 1e-15);
        assert!((s[4] - 0.375).abs() < 1e-15);
        assert!((s[6] - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn reflection_principle_value() {
        assert!((brownian_halfline_survival(1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-14);
    }
}
