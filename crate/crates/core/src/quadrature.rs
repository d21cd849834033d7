//! Tensor Gauss–Legendre quadrature over the prior box, used as an
//! independent reference for level posteriors in low dimension.

use crate::error::Result;
use crate::problem::{Charge, ForwardModel, LevelEval};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Posterior summaries of one level target computed by tensor quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSummary {
    /// `Z_l = ∫ γ_l dπ` under the uniform prior probability measure.
    pub z: f64,
    /// `E_{η_l}[f]` for each requested functional.
    pub means: Vec<f64>,
}

/// Expectations under `η_l` of functionals `f(u, eval)` by an `n^K` tensor
/// Gauss–Legendre rule. Solves are charged as diagnostics.
pub fn level_posterior<F>(model: &ForwardModel, level: usize, n: usize, functionals: &[F]) -> Result<QuadratureSummary>
where
    F: Fn(&[f64], &LevelEval) -> f64,
{
    let (x, w) = gauss_legendre(n);
    let k = model.dim();
    let total = n.pow(k as u32);
    let mut z = 0.0;
    let mut acc = vec![0.0; functionals.len()];
    let mut u = vec![0.0; k];
    let mut idx = vec![0usize; k];
    for flat in 0..total {
        let mut rem = flat;
        let mut weight = 1.0;
        for d in 0..k {
            idx[d] = rem % n;
            rem /= n;
            u[d] = x[idx[d]];
            weight *= 0.5 * w[idx[d]];
        }
        let eval = model.evaluate(&u, level, Charge::Diagnostic)?;
        let dens = weight * (-eval.phi).exp();
        z += dens;
        for (a, f) in acc.iter_mut().zip(functionals) {
            *a += dens * f(&u, &eval);
        }
    }
    Ok(QuadratureSummary { z, means: acc.into_iter().map(|a| a / z).collect() })
}

/// `E_{η_l}[g]` with `g = p_l(x_g; u)`.
pub fn posterior_mean_g(model: &ForwardModel, level: usize, n: usize) -> Result<f64> {
    let f = |_: &[f64], e: &LevelEval| e.g;
    Ok(level_posterior(model, level, n, &[f])?.means[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                assert!((q - exact).abs() < 1e-12, "n={n} deg={deg}");
            }
        }
    }
}
