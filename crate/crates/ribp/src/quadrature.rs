//! Gauss-Legendre quadrature on [0, 1], used for the quadrature oracles
//! and the latent-restriction exchangeability checks.

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
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
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Rule mapped to [0, 1].
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

/// Integrates `f` over the unit cube [0,1]^dim with a tensor rule,
/// doubling the per-axis order until two successive refinements agree
/// within `tol`. Returns `(value, achieved_difference)`.
pub fn integrate_unit_cube<F>(dim: usize, f: F, tol: f64, max_order: usize) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut order = 8;
    let mut prev = tensor_integral(dim, &f, order);
    loop {
        order *= 2;
        let cur = tensor_integral(dim, &f, order);
        let diff = (cur - prev).abs();
        if diff < tol || order >= max_order {
            return (cur, diff);
        }
        prev = cur;
    }
}

fn tensor_integral<F>(dim: usize, f: &F, order: usize) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let (x, w) = gauss_legendre_01(order);
    let mut point = vec![0.0; dim];
    let mut total = 0.0;
    let count = order.pow(dim as u32);
    for idx in 0..count {
        let mut rem = idx;
        let mut weight = 1.0;
        for p in point.iter_mut().take(dim) {
            let j = rem % order;
            rem /= order;
            *p = x[j];
            weight *= w[j];
        }
        total += weight * f(&point);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        // 5-point rule integrates x^9 on [0,1] exactly.
        let (x, w) = gauss_legendre_01(5);
        let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(9)).sum();
        assert!((got - 0.1).abs() < 1e-14);
    }

    #[test]
    fn cube_integral_of_product() {
        let (v, _) = integrate_unit_cube(3, |p| p[0] * p[1] * p[2], 1e-12, 64);
        assert!((v - 0.125).abs() < 1e-12);
    }

    #[test]
    fn smooth_nonpolynomial() {
        let (v, _) = integrate_unit_cube(1, |p| (p[0]).exp(), 1e-12, 64);
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-12);
    }
}
