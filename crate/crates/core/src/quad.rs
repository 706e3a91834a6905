//! Small deterministic quadrature routines.

use std::f64::consts::PI;

use serde::Serialize;

/// Result of a quadrature with an error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadValue {
    pub value: f64,
    pub error: f64,
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> QuadValue {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut error = 0.0;
    let value = simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50, &mut error);
    QuadValue { value, error }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    error: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        *error += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, error)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, error)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Tensor-product Gauss–Legendre over the box `[lower, upper]`, with each
/// axis split into `panels` equal pieces of `order` nodes.
pub fn box_integral<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    lower: &[f64],
    upper: &[f64],
    order: usize,
    panels: usize,
) -> f64 {
    let d = lower.len();
    let (gx, gw) = gauss_legendre(order);
    let per_axis = order * panels;
    let mut axis_nodes = vec![Vec::with_capacity(per_axis); d];
    let mut axis_weights = vec![Vec::with_capacity(per_axis); d];
    for i in 0..d {
        let h = (upper[i] - lower[i]) / panels as f64;
        for p in 0..panels {
            let a = lower[i] + p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                axis_nodes[i].push(a + 0.5 * h * (x + 1.0));
                axis_weights[i].push(0.5 * h * w);
            }
        }
    }
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for i in 0..d {
            point[i] = axis_nodes[i][idx[i]];
            w *= axis_weights[i][idx[i]];
        }
        total += w * f(&point);
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_sine() {
        let q = adaptive_simpson(f64::sin, 0.0, PI, 1e-10);
        assert!((q.value - 2.0).abs() < 1e-9);
        assert!(q.error < 1e-8);
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn box_integral_of_product() {
        let v = box_integral(|p| p[0] * p[1] * p[1], &[0.0, 1.0], &[2.0, 3.0], 4, 1);
        assert!((v - 2.0 * 26.0 / 3.0).abs() < 1e-12);
    }
}
