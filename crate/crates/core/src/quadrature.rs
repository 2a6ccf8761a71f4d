//! Gauss–Legendre nodes and weights.

use crate::scalar::Scalar;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`, nodes ascending.
///
/// Roots of `P_n` are found by Newton iteration from the Chebyshev-like initial guess
/// `cos(pi (k - 1/4) / (n + 1/2))`; the weights follow from `P_n'` at the roots.
pub fn gauss_legendre<T: Scalar>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::lit(n as f64);
    let one = T::one();
    let two = T::lit(2.0);
    for k in 0..n.div_ceil(2) {
        let mut x = (T::PI() * (T::lit(k as f64) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
        let mut dp = one;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= T::epsilon() * x.abs().max(one) {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = two / ((one - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

/// Nodes and weights mapped onto `[a, b]`.
pub fn gauss_legendre_on<T: Scalar>(n: usize, a: T, b: T) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre::<T>(n);
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    (x.iter().map(|&xi| mid + half * xi).collect(), w.iter().map(|&wi| wi * half).collect())
}

fn legendre_with_derivative<T: Scalar>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::lit(k as f64);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = T::lit(n as f64);
    let dp = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, dp)
}
