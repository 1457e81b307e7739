//! Probabilists' Hermite polynomials and Gauss-Hermite rules for the standard normal weight.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Result};

/// He_k(x) by the three-term recurrence He_{k+1} = x He_k - k He_{k-1}.
pub fn hermite_he(k: usize, x: f64) -> f64 {
    let mut p0 = 1.0;
    if k == 0 {
        return p0;
    }
    let mut p1 = x;
    for j in 1..k {
        let p2 = x * p1 - j as f64 * p0;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// All of He_0(x), ..., He_k(x).
pub fn hermite_he_all(k: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(1.0);
    if k >= 1 {
        out.push(x);
    }
    for j in 1..k {
        let next = x * out[j] - j as f64 * out[j - 1];
        out.push(next);
    }
    out
}

/// Orthonormal Hermite value p_n(x) = He_n(x)/sqrt(n!) together with p_{n-1}(x),
/// returned as mantissas sharing a common log scale to avoid overflow.
fn orthonormal_pair(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p0 = 0.0;
    let mut p1 = 1.0;
    let mut log_scale = 0.0;
    for k in 0..n {
        let kf = k as f64;
        let p2 = (x * p1 - kf.sqrt() * p0) / (kf + 1.0).sqrt();
        p0 = p1;
        p1 = p2;
        let m = p1.abs().max(p0.abs());
        if m > 1e100 {
            p0 /= m;
            p1 /= m;
            log_scale += m.ln();
        }
    }
    (p1, p0, log_scale)
}

/// Nodes and weights of the n-point Gauss rule for the weight e^{-x^2/2}/sqrt(2 pi).
///
/// Golub-Welsch eigenvalues are polished by Newton steps on the orthonormal
/// recurrence; weights use w_i = 1/(n p_{n-1}(x_i)^2).
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=512).contains(&n) {
        return Err(invalid("n", n as f64, "Gauss-Hermite order must lie in 1..=512"));
    }
    if n == 1 {
        return Ok((vec![0.0], vec![1.0]));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let sqrt_n = (n as f64).sqrt();
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..4 {
            let (pn, pn1, _) = orthonormal_pair(n, *x);
            if pn1 == 0.0 {
                break;
            }
            let dx = pn / (sqrt_n * pn1);
            *x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, pn1, log_scale) = orthonormal_pair(n, *x);
        let log_w = -(n as f64).ln() - 2.0 * (pn1.abs().ln() + log_scale);
        weights.push(log_w.exp());
    }
    // Symmetrize: the rule is exactly symmetric about 0.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// E[g(G)] for a standard normal G using an n-point Gauss-Hermite rule.
pub fn gaussian_expectation<F: FnMut(f64) -> f64>(n: usize, mut g: F) -> Result<f64> {
    let (x, w) = gauss_hermite(n)?;
    Ok(x.iter().zip(&w).map(|(x, w)| w * g(*x)).sum())
}
