//! Legendre polynomial machinery: Gauss and Gauss-Lobatto rules on [-1, 1],
//! coefficient transforms, derivatives and the multiply-by-x operator.
//!
//! Everything downstream (panel quadrature, spectral-element eigensolves,
//! exact polynomial-weighted Gram matrices) is built from these pieces.

/// Evaluate `P_0(x) ... P_{pmax}(x)` by the three-term recurrence.
pub fn eval_all(x: f64, pmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(pmax + 1);
    let mut pm1 = 1.0;
    out.push(pm1);
    if pmax == 0 {
        return out;
    }
    let mut p = x;
    out.push(p);
    for k in 1..pmax {
        let kf = k as f64;
        let pn = ((2.0 * kf + 1.0) * x * p - kf * pm1) / (kf + 1.0);
        pm1 = p;
        p = pn;
        out.push(p);
    }
    out
}

/// `P_n(x)` and `P_n'(x)`.
fn value_and_deriv(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut pm1 = 1.0;
    let mut p = x;
    for k in 1..n {
        let kf = k as f64;
        let pn = ((2.0 * kf + 1.0) * x * p - kf * pm1) / (kf + 1.0);
        pm1 = p;
        p = pn;
    }
    let nf = n as f64;
    let dp = nf * (pm1 - x * p) / (1.0 - x * x);
    (p, dp)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = value_and_deriv(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (p2, d2) = value_and_deriv(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = value_and_deriv(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// Gauss-Lobatto-Legendre nodes and weights for polynomial degree `n`
/// (`n + 1` points including both endpoints). Exact through degree `2n - 1`.
///
/// Interior nodes are the roots of P_n', each bracketed between consecutive
/// Gauss nodes of order n, so the search cannot skip or duplicate a root.
pub fn gauss_lobatto(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let np = n + 1;
    let nf = n as f64;
    let mut nodes = vec![0.0; np];
    let mut weights = vec![0.0; np];
    nodes[0] = -1.0;
    nodes[n] = 1.0;
    let wend = 2.0 / (nf * (nf + 1.0));
    weights[0] = wend;
    weights[n] = wend;
    if n >= 2 {
        let (gauss_nodes, _) = gauss(n);
        let dpn = |x: f64| value_and_deriv(n, x).1;
        for i in 1..n {
            let mut lo = gauss_nodes[i - 1];
            let mut hi = gauss_nodes[i];
            let mut flo = dpn(lo);
            let mut x = 0.5 * (lo + hi);
            for _ in 0..200 {
                let (p, d) = value_and_deriv(n, x);
                // P_n'' from the Legendre ODE
                let qp = (2.0 * x * d - nf * (nf + 1.0) * p) / (1.0 - x * x);
                let mut xn = x - d / qp;
                if !(xn > lo && xn < hi) {
                    xn = 0.5 * (lo + hi);
                }
                if d * flo > 0.0 {
                    lo = x;
                    flo = d;
                } else {
                    hi = x;
                }
                if (xn - x).abs() < 1e-16 * (1.0 + x.abs()) || hi - lo < 1e-16 {
                    x = xn;
                    break;
                }
                x = xn;
            }
            let (p, _) = value_and_deriv(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / (nf * (nf + 1.0) * p * p);
        }
    }
    (nodes, weights)
}

/// Coefficients of the derivative of a Legendre series.
///
/// If `f = Σ c_p P_p` then `f' = Σ d_p P_p` with
/// `d_p = (2p + 1)(c_{p+1} + c_{p+3} + c_{p+5} + ...)`.
pub fn deriv_coeffs(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n - 1];
    // running parity sums s_p = c_{p+1} + s_{p+2}
    let mut s = [0.0f64; 2];
    for p in (0..n - 1).rev() {
        let sp = c[p + 1] + s[p % 2];
        d[p] = (2.0 * p as f64 + 1.0) * sp;
        s[p % 2] = sp;
    }
    d
}

/// Coefficients of `x * f(x)` from the Jacobi three-term relation
/// `x P_p = ((p+1) P_{p+1} + p P_{p-1}) / (2p + 1)`.
pub fn mul_x_coeffs(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut out = vec![0.0; n + 1];
    for (p, &cp) in c.iter().enumerate() {
        let pf = p as f64;
        out[p + 1] += cp * (pf + 1.0) / (2.0 * pf + 1.0);
        if p > 0 {
            out[p - 1] += cp * pf / (2.0 * pf + 1.0);
        }
    }
    out
}

/// Evaluate a Legendre series at `x` (Clenshaw recurrence).
pub fn eval_series(c: &[f64], x: f64) -> f64 {
    let n = c.len();
    if n == 0 {
        return 0.0;
    }
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for p in (1..n).rev() {
        let pf = p as f64;
        let alpha = (2.0 * pf + 1.0) / (pf + 1.0) * x;
        let beta_next = -(pf + 1.0) / (pf + 2.0);
        let b = c[p] + alpha * b1 + beta_next * b2;
        b2 = b1;
        b1 = b;
    }
    // P_0 = 1, P_1 = x, beta_1 = -1/2
    c[0] + x * b1 - 0.5 * b2
}

/// Discrete Legendre analysis: samples at the rule's nodes -> coefficients.
///
/// Uses the discrete norms `Σ w_i P_p(x_i)^2` so it stays exact for the top
/// Lobatto coefficient as well.
#[derive(Debug)]
pub struct Analysis {
    /// basis[p][i] = P_p(x_i)
    basis: Vec<Vec<f64>>,
    weights: Vec<f64>,
    inv_norms: Vec<f64>,
}

impl Analysis {
    pub fn new(nodes: &[f64], weights: &[f64], pmax: usize) -> Self {
        let npts = nodes.len();
        let mut basis = vec![vec![0.0; npts]; pmax + 1];
        for (i, &x) in nodes.iter().enumerate() {
            let vals = eval_all(x, pmax);
            for (p, &v) in vals.iter().enumerate() {
                basis[p][i] = v;
            }
        }
        let inv_norms = basis
            .iter()
            .map(|row| {
                let s: f64 = row.iter().zip(weights).map(|(&b, &w)| w * b * b).sum();
                1.0 / s
            })
            .collect();
        Analysis {
            basis,
            weights: weights.to_vec(),
            inv_norms,
        }
    }

    pub fn coeffs(&self, samples: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .zip(&self.inv_norms)
            .map(|(row, &inv)| {
                let s: f64 = row
                    .iter()
                    .zip(&self.weights)
                    .zip(samples)
                    .map(|((&b, &w), &f)| w * b * f)
                    .sum();
                s * inv
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        let (x, w) = gauss(8);
        // degree 15 monomial
        let val: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(14)).sum();
        assert_relative_eq!(val, 2.0 / 15.0, epsilon = 1e-14);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_large_rule_weight_sum() {
        let (x, w) = gauss(513);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        let val: f64 = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * (5.0 * xi).cos())
            .sum();
        assert_relative_eq!(val, 2.0 * (5.0f64).sin() / 5.0, epsilon = 1e-13);
    }

    #[test]
    fn lobatto_rule_has_endpoints_and_integrates() {
        let (x, w) = gauss_lobatto(12);
        assert_eq!(x.len(), 13);
        assert_relative_eq!(x[0], -1.0);
        assert_relative_eq!(x[12], 1.0);
        let val: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(10)).sum();
        assert_relative_eq!(val, 2.0 / 11.0, epsilon = 1e-13);
    }

    #[test]
    fn derivative_and_mul_x_roundtrip() {
        // f(x) = 3 P_0 - 2 P_1 + 0.5 P_4
        let c = vec![3.0, -2.0, 0.0, 0.0, 0.5];
        let d = deriv_coeffs(&c);
        for &x in &[-0.9, -0.3, 0.2, 0.77] {
            let fd = (eval_series(&c, x + 1e-6) - eval_series(&c, x - 1e-6)) / 2e-6;
            assert_relative_eq!(eval_series(&d, x), fd, epsilon = 1e-7);
            assert_relative_eq!(
                eval_series(&mul_x_coeffs(&c), x),
                x * eval_series(&c, x),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn analysis_recovers_coefficients() {
        let (x, w) = gauss(24);
        let c_true = vec![0.3, -1.2, 0.0, 2.5, 0.0, -0.7];
        let samples: Vec<f64> = x.iter().map(|&xi| eval_series(&c_true, xi)).collect();
        let an = Analysis::new(&x, &w, 10);
        let c = an.coeffs(&samples);
        for p in 0..=10 {
            let want = if p < c_true.len() { c_true[p] } else { 0.0 };
            assert_relative_eq!(c[p], want, epsilon = 1e-12);
        }
    }
}
