//! Gauss-Legendre rules.

use crate::Real;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre polynomial `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule on `[a, b]` with `panels` equal panels of `points` nodes.
pub fn composite<T: Real>(a: T, b: T, panels: usize, points: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre(points);
    let width = (b - a) / T::from_count(panels);
    let half = width / T::lit(2.0);
    let mut nodes = Vec::with_capacity(panels * points);
    let mut weights = Vec::with_capacity(panels * points);
    for k in 0..panels {
        let mid = a + width * T::from_count(k) + half;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(mid + half * T::lit(*xi));
            weights.push(half * T::lit(*wi));
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 2..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn composite_exponential() {
        let (x, w) = composite(0.0f64, 10.0, 10, 8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * (-3.0 * x).exp()).sum();
        let exact = (1.0 - (-30.0f64).exp()) / 3.0;
        assert!((s - exact).abs() < 1e-14);
    }
}
