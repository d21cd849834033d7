//! Coefficient and source fields of the elliptic problem.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analytic basis function `φ_k` with `‖φ_k‖_∞ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Basis {
    /// `sin(k π x)`
    Sine(u32),
    /// `cos(k π x)`
    Cosine(u32),
}

impl Basis {
    /// Default expansion: odd indices are sines, even indices cosines, so
    /// `K = 2` gives `sin(πx), cos(2πx)`.
    pub fn standard(index: u32) -> Basis {
        if index % 2 == 1 {
            Basis::Sine(index)
        } else {
            Basis::Cosine(index)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Basis::Sine(k) => (k as f64 * PI * x).sin(),
            Basis::Cosine(k) => (k as f64 * PI * x).cos(),
        }
    }

    pub fn antiderivative(&self, x: f64) -> f64 {
        match *self {
            Basis::Sine(k) => {
                let w = k as f64 * PI;
                -(w * x).cos() / w
            }
            Basis::Cosine(k) => {
                let w = k as f64 * PI;
                (w * x).sin() / w
            }
        }
    }

    /// Exact `∫_a^b φ(x) dx`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.antiderivative(b) - self.antiderivative(a)
    }
}

/// `û(x) = ū + Σ_k u_k σ_k φ_k(x)` with `u ∈ [-1, 1]^K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermeabilityField {
    mean: f64,
    sigmas: Vec<f64>,
    basis: Vec<Basis>,
}

impl PermeabilityField {
    pub fn new(mean: f64, sigmas: Vec<f64>, basis: Vec<Basis>) -> Result<Self> {
        if sigmas.len() != basis.len() {
            return Err(Error::Dimension { expected: sigmas.len(), got: basis.len() });
        }
        let field = PermeabilityField { mean, sigmas, basis };
        let lower_bound = field.lower_bound();
        if !(lower_bound > 0.0) {
            return Err(Error::NotElliptic { lower_bound });
        }
        Ok(field)
    }

    pub fn with_standard_basis(mean: f64, sigmas: Vec<f64>) -> Result<Self> {
        let basis = (1..=sigmas.len() as u32).map(Basis::standard).collect();
        Self::new(mean, sigmas, basis)
    }

    /// `ū = 0.15`, `σ = (0.1, 0.025)`, `φ = (sin πx, cos 2πx)`.
    pub fn standard() -> Self {
        Self::with_standard_basis(0.15, vec![0.1, 0.025]).expect("elliptic")
    }

    pub fn dim(&self) -> usize {
        self.sigmas.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn basis(&self) -> &[Basis] {
        &self.basis
    }

    /// Analytic ellipticity constant `u_* = ū − Σ|σ_k|`.
    pub fn lower_bound(&self) -> f64 {
        self.mean - self.sigmas.iter().map(|s| s.abs()).sum::<f64>()
    }

    /// `‖û'‖_∞` bound over the prior support.
    pub fn gradient_bound(&self) -> f64 {
        self.sigmas
            .iter()
            .zip(&self.basis)
            .map(|(s, b)| {
                let k = match b {
                    Basis::Sine(k) | Basis::Cosine(k) => *k,
                };
                s.abs() * k as f64 * PI
            })
            .sum()
    }

    pub fn value(&self, u: &[f64], x: f64) -> f64 {
        self.mean + u.iter().zip(&self.sigmas).zip(&self.basis).map(|((uk, s), b)| uk * s * b.value(x)).sum::<f64>()
    }

    /// Exact `∫_a^b û(x) dx`.
    pub fn integral(&self, u: &[f64], a: f64, b: f64) -> f64 {
        self.mean * (b - a)
            + u.iter()
                .zip(&self.sigmas)
                .zip(&self.basis)
                .map(|((uk, s), basis)| uk * s * basis.integral(a, b))
                .sum::<f64>()
    }
}

/// Right-hand side `f` of the PDE.
#[derive(Clone)]
pub enum SourceField {
    /// `f(x) = slope · x`; load vectors are integrated exactly.
    Linear { slope: f64 },
    /// Arbitrary `f`; load vectors use 3-point Gauss quadrature per element.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for SourceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceField::Linear { slope } => f.debug_struct("Linear").field("slope", slope).finish(),
            SourceField::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl SourceField {
    pub fn standard() -> Self {
        SourceField::Linear { slope: 100.0 }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            SourceField::Linear { slope } => slope * x,
            SourceField::Custom(f) => f(x),
        }
    }

    /// `⟨f, ψ_i⟩` for the hat function centred at `x_i` with half-width `h`.
    pub fn hat_moment(&self, x_i: f64, h: f64) -> f64 {
        match self {
            // ∫ s·x ψ_i dx = s·x_i·h, exact for linear f.
            SourceField::Linear { slope } => slope * x_i * h,
            SourceField::Custom(f) => {
                const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
                const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
                let mut acc = 0.0;
                for (a, rising) in [(x_i - h, true), (x_i, false)] {
                    for (t, w) in NODES.iter().zip(WEIGHTS) {
                        let s = 0.5 * (t + 1.0);
                        let x = a + s * h;
                        let psi = if rising { s } else { 1.0 - s };
                        acc += 0.5 * h * w * f(x) * psi;
                    }
                }
                acc
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_field_is_elliptic() {
        let f = PermeabilityField::standard();
        assert!((f.lower_bound() - 0.025).abs() < 1e-15);
        assert_eq!(f.basis(), &[Basis::Sine(1), Basis::Cosine(2)]);
    }

    #[test]
    fn non_elliptic_field_is_rejected() {
        let err = PermeabilityField::with_standard_basis(0.1, vec![0.1]).unwrap_err();
        assert!(matches!(err, Error::NotElliptic { .. }));
        assert!(err.to_string().contains("u_*"));
    }

    #[test]
    fn basis_integrals_match_midpoint_sums() {
        for b in [Basis::Sine(1), Basis::Cosine(2), Basis::Sine(3)] {
            let (a, c) = (0.1, 0.37);
            let n = 200_000;
            let h = (c - a) / n as f64;
            let approx: f64 = (0..n).map(|i| b.value(a + (i as f64 + 0.5) * h) * h).sum();
            assert!((approx - b.integral(a, c)).abs() < 1e-10);
        }
    }

    #[test]
    fn custom_source_quadrature_is_exact_for_linear() {
        let lin = SourceField::Linear { slope: 100.0 };
        let custom = SourceField::Custom(Arc::new(|x| 100.0 * x));
        for (x, h) in [(0.125, 0.125), (0.5, 1.0 / 64.0)] {
            assert!((lin.hat_moment(x, h) - custom.hat_moment(x, h)).abs() < 1e-12);
        }
    }
}
