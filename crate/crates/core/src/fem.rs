//! Piecewise-linear finite elements for `-(û p')' = f` on `[0, 1]` with
//! `p(0) = p(1) = 0`, on the uniform nested meshes `h = 2^-(level + offset)`.
//!
//! The linear system is posed on interior nodes only (boundary rows are
//! eliminated) and is tridiagonal, so a solve costs `O(h^-1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{PermeabilityField, SourceField};

/// Largest supported `level + offset`; beyond this the node vectors no
/// longer fit comfortably in memory.
pub const MAX_MESH_EXPONENT: u32 = 24;

/// Uniform mesh of `[0, 1]` with width `2^-(level + offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mesh {
    level: u32,
    offset: u32,
}

impl Mesh {
    pub fn new(level: u32, offset: u32) -> Result<Self> {
        if offset < 1 {
            return Err(Error::InvalidMesh(format!("offset must be >= 1, got {offset}")));
        }
        let exponent =
            level.checked_add(offset).ok_or(Error::MeshTooLarge { exponent: u32::MAX, max: MAX_MESH_EXPONENT })?;
        if exponent > MAX_MESH_EXPONENT {
            return Err(Error::MeshTooLarge { exponent, max: MAX_MESH_EXPONENT });
        }
        Ok(Mesh { level, offset })
    }

    /// Mesh with width `2^-exponent`, expressed at level `exponent - 1`
    /// over offset 1.
    pub fn with_exponent(exponent: u32) -> Result<Self> {
        if exponent < 1 {
            return Err(Error::InvalidMesh("exponent must be >= 1".into()));
        }
        Mesh::new(exponent - 1, 1)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn offset(&self) -> u32 {
        self.offset
    }

    pub fn exponent(&self) -> u32 {
        self.level + self.offset
    }

    pub fn width(&self) -> f64 {
        (-(self.exponent() as f64)).exp2()
    }

    /// Number of elements, `h^-1`; also the cost of one solve in dof units.
    pub fn n_elements(&self) -> usize {
        1usize << self.exponent()
    }

    pub fn n_interior(&self) -> usize {
        self.n_elements() - 1
    }

    /// `x_i = i·h` for `i = 0..=n_elements`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.width()
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.n_interior()).map(move |i| self.node(i))
    }

    /// Every node of `self` is a node of `fine`.
    pub fn is_nested_in(&self, fine: &Mesh) -> bool {
        self.exponent() <= fine.exponent()
    }
}

/// Symmetric tridiagonal stiffness system over the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub load: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.sub == self.sup
    }

    pub fn is_diagonally_dominant(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            let off = if i > 0 { self.sub[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.sup[i].abs() } else { 0.0 };
            self.diag[i] > 0.0 && self.diag[i] >= off
        })
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.sup[i] * x[i + 1];
                }
                y
            })
            .collect()
    }
}

/// How the element integrals `∫_e û` of the stiffness matrix are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StiffnessRule {
    /// Closed-form antiderivatives of the expansion terms.
    #[default]
    Exact,
    /// `h·û(x_left)`; first-order accurate.
    LeftEndpoint,
}

fn check_ellipticity(field: &PermeabilityField, u: &[f64]) -> Result<()> {
    if u.len() != field.dim() {
        return Err(Error::Dimension { expected: field.dim(), got: u.len() });
    }
    let lower_bound = field.mean() - u.iter().zip(field.sigmas()).map(|(uk, s)| (uk * s).abs()).sum::<f64>();
    if !(lower_bound > 0.0) {
        return Err(Error::NotElliptic { lower_bound });
    }
    Ok(())
}

/// Galerkin system `A(u) p = f` on `mesh`.
pub fn assemble_system(
    field: &PermeabilityField,
    u: &[f64],
    mesh: &Mesh,
    source: &SourceField,
) -> Result<TridiagonalSystem> {
    assemble_system_with(field, u, mesh, source, StiffnessRule::Exact)
}

pub fn assemble_system_with(
    field: &PermeabilityField,
    u: &[f64],
    mesh: &Mesh,
    source: &SourceField,
    rule: StiffnessRule,
) -> Result<TridiagonalSystem> {
    check_ellipticity(field, u)?;
    let h = mesh.width();
    let n = mesh.n_interior();
    let coeff: Vec<f64> = (0..mesh.n_elements())
        .map(|e| {
            let (a, b) = (mesh.node(e), mesh.node(e + 1));
            let integral = match rule {
                StiffnessRule::Exact => field.integral(u, a, b),
                StiffnessRule::LeftEndpoint => h * field.value(u, a),
            };
            integral / (h * h)
        })
        .collect();
    let diag = (0..n).map(|j| coeff[j] + coeff[j + 1]).collect();
    let off: Vec<f64> = (0..n.saturating_sub(1)).map(|j| -coeff[j + 1]).collect();
    let load = (1..=n).map(|i| source.hat_moment(mesh.node(i), h)).collect();
    Ok(TridiagonalSystem { sub: off.clone(), diag, sup: off, load })
}

/// Thomas elimination; linear time, no fill-in.
pub fn solve_tridiagonal(system: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = system.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    thomas(&system.sub, &system.diag, &system.sup, &system.load, &mut c, &mut x)?;
    Ok(x)
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64], c: &mut [f64], x: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    let mut pivot = diag[0];
    if pivot == 0.0 {
        return Err(Error::ZeroPivot { row: 0 });
    }
    c[0] = if n > 1 { sup[0] / pivot } else { 0.0 };
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i - 1] * c[i - 1];
        if pivot == 0.0 {
            return Err(Error::ZeroPivot { row: i });
        }
        c[i] = if i + 1 < n { sup[i] / pivot } else { 0.0 };
        x[i] = (rhs[i] - sub[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(())
}

/// Nodal coefficients of the discrete solution on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub mesh: Mesh,
    /// Interior nodal values `p_1..p_n`; `p_0 = p_{n+1} = 0`.
    pub coeffs: Vec<f64>,
}

impl ForwardSolution {
    pub fn new(mesh: Mesh, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != mesh.n_interior() {
            return Err(Error::Dimension { expected: mesh.n_interior(), got: coeffs.len() });
        }
        Ok(ForwardSolution { mesh, coeffs })
    }

    /// Nodal value at node `i = 0..=n_elements`, including the boundary.
    #[inline]
    pub fn nodal(&self, i: usize) -> f64 {
        if i == 0 || i > self.coeffs.len() {
            0.0
        } else {
            self.coeffs[i - 1]
        }
    }

    /// Piecewise-linear interpolant at `x ∈ [0, 1]`.
    pub fn evaluate_point(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutsideDomain(x));
        }
        Ok(interpolate(x, self.mesh.n_elements(), |i| self.nodal(i)))
    }
}

#[inline]
fn interpolate(x: f64, n_elements: usize, nodal: impl Fn(usize) -> f64) -> f64 {
    let s = x * n_elements as f64;
    let i = (s.floor() as usize).min(n_elements - 1);
    let t = s - i as f64;
    if t == 0.0 {
        nodal(i)
    } else {
        (1.0 - t) * nodal(i) + t * nodal(i + 1)
    }
}

/// Parts of the `H¹` norm of a piecewise-linear function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VNorm {
    pub l2: f64,
    pub h1_semi: f64,
}

impl VNorm {
    /// `(‖v‖² + ‖v'‖²)^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.l2.hypot(self.h1_semi)
    }

    pub fn squared(&self) -> f64 {
        self.l2 * self.l2 + self.h1_semi * self.h1_semi
    }
}

/// `‖fine − coarse‖_V`, integrated exactly on the fine mesh.
pub fn v_norm_difference(coarse: &ForwardSolution, fine: &ForwardSolution) -> Result<VNorm> {
    if !coarse.mesh.is_nested_in(&fine.mesh) {
        return Err(Error::NotNested { coarse: coarse.mesh.exponent(), fine: fine.mesh.exponent() });
    }
    let ratio = 1usize << (fine.mesh.exponent() - coarse.mesh.exponent());
    let n = fine.mesh.n_elements();
    let h = fine.mesh.width();
    let diff = |j: usize| {
        let (q, r) = (j / ratio, j % ratio);
        let c = if r == 0 {
            coarse.nodal(q)
        } else {
            let t = r as f64 / ratio as f64;
            (1.0 - t) * coarse.nodal(q) + t * coarse.nodal(q + 1)
        };
        fine.nodal(j) - c
    };
    let mut l2 = crate::stats::KahanSum::new();
    let mut semi = crate::stats::KahanSum::new();
    let mut left = diff(0);
    for j in 0..n {
        let right = diff(j + 1);
        l2.add(h / 3.0 * (left * left + left * right + right * right));
        semi.add((right - left) * (right - left) / h);
        left = right;
    }
    Ok(VNorm { l2: l2.value().max(0.0).sqrt(), h1_semi: semi.value().sqrt() })
}

/// Per-mesh precomputation: element integrals of every basis term and the
/// load vector, so that a solve for a new `u` is a single linear sweep.
#[derive(Debug, Clone)]
pub struct LevelOperator {
    mesh: Mesh,
    mean_integral: f64,
    sigmas: Vec<f64>,
    lower_mean: f64,
    /// `basis_integrals[k * n_elements + e] = ∫_e φ_k` (or its rule surrogate).
    basis_integrals: Vec<f64>,
    load: Vec<f64>,
}

impl LevelOperator {
    pub fn new(field: &PermeabilityField, source: &SourceField, mesh: Mesh, rule: StiffnessRule) -> Self {
        let n_el = mesh.n_elements();
        let h = mesh.width();
        let mut basis_integrals = Vec::with_capacity(field.dim() * n_el);
        for b in field.basis() {
            for e in 0..n_el {
                let (a, c) = (mesh.node(e), mesh.node(e + 1));
                basis_integrals.push(match rule {
                    StiffnessRule::Exact => b.integral(a, c),
                    StiffnessRule::LeftEndpoint => h * b.value(a),
                });
            }
        }
        let load = (1..=mesh.n_interior()).map(|i| source.hat_moment(mesh.node(i), h)).collect();
        LevelOperator {
            mesh,
            mean_integral: field.mean() * h,
            sigmas: field.sigmas().to_vec(),
            lower_mean: field.mean(),
            basis_integrals,
            load,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Solve `A(u) p = f`; returns the interior nodal values.
    pub fn solve(&self, u: &[f64]) -> Result<ForwardSolution> {
        if u.len() != self.sigmas.len() {
            return Err(Error::Dimension { expected: self.sigmas.len(), got: u.len() });
        }
        let lower = self.lower_mean - u.iter().zip(&self.sigmas).map(|(a, s)| (a * s).abs()).sum::<f64>();
        if !(lower > 0.0) {
            return Err(Error::NotElliptic { lower_bound: lower });
        }
        // Flux form of the same system. With a_e = I_e/h² on element e and
        // q_e = a_e (p_e − p_{e−1}), row j reads q_j − q_{j+1} = F_j, so
        // q_e = q_1 − S_{e−1} (S = prefix sums of the load) and p_0 = p_{n+1}
        // = 0 fixes q_1 = Σ S_{e−1}/a_e / Σ 1/a_e. Unlike the Thomas sweep
        // the per-element divisions are independent.
        let n_el = self.mesh.n_elements();
        let h2 = self.mesh.width() * self.mesh.width();
        let mut x = vec![self.mean_integral; n_el];
        for (k, (uk, s)) in u.iter().zip(&self.sigmas).enumerate() {
            let w = uk * s;
            if w != 0.0 {
                let row = &self.basis_integrals[k * n_el..(k + 1) * n_el];
                for (c, b) in x.iter_mut().zip(row) {
                    *c += w * b;
                }
            }
        }
        let mut sum_r = 0.0;
        let mut sum_sr = 0.0;
        let mut s_total = 0.0;
        for (e, c) in x.iter_mut().enumerate() {
            let r = h2 / *c;
            *c = r;
            sum_r += r;
            sum_sr += s_total * r;
            if e < self.load.len() {
                s_total += self.load[e];
            }
        }
        let q1 = sum_sr / sum_r;
        // p_k = Σ_{e<k} q_e r_e = −Σ_{e≥k} q_e r_e; accumulate each half from
        // its own boundary so small values near x = 1 keep relative accuracy.
        let n = n_el - 1;
        let mid = n / 2;
        let mut p = 0.0;
        let mut s = 0.0;
        for e in 0..mid {
            p += (q1 - s) * x[e];
            s += self.load[e];
            x[e] = p;
        }
        let mut acc = 0.0;
        let mut s = s_total;
        let mut r_cur = x[n_el - 1];
        for e in (mid + 1..n_el).rev() {
            acc += (q1 - s) * r_cur;
            r_cur = x[e - 1];
            x[e - 1] = -acc;
            s -= self.load[e - 1];
        }
        x.truncate(n_el - 1);
        Ok(ForwardSolution { mesh: self.mesh, coeffs: x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(x: f64) -> f64 {
        1000.0 / 9.0 * (x - x * x * x)
    }

    fn constant_field() -> PermeabilityField {
        PermeabilityField::standard()
    }

    #[test]
    fn mesh_sizes() {
        let m = Mesh::new(0, 3).unwrap();
        assert_eq!(m.width(), 0.125);
        assert_eq!(m.n_interior(), 7);
        let m = Mesh::new(0, 1).unwrap();
        assert_eq!(m.width(), 0.5);
        assert_eq!(m.n_interior(), 1);
        let fine = Mesh::new(2, 3).unwrap();
        assert_eq!(fine.width(), 1.0 / 32.0);
        assert_eq!(fine.n_interior(), 31);
        let fine_nodes: Vec<f64> = fine.interior_nodes().collect();
        assert!(Mesh::new(0, 3).unwrap().interior_nodes().all(|x| fine_nodes.contains(&x)));
        for l in 0..10 {
            let m = Mesh::new(l, 3).unwrap();
            assert_eq!(m.width() * (m.n_interior() + 1) as f64, 1.0);
        }
    }

    #[test]
    fn oversized_mesh_is_an_error() {
        assert!(matches!(Mesh::new(40, 3), Err(Error::MeshTooLarge { .. })));
        assert!(matches!(Mesh::new(u32::MAX, 3), Err(Error::MeshTooLarge { .. })));
        assert!(Mesh::new(0, 0).is_err());
    }

    #[test]
    fn constant_coefficient_entries() {
        let mesh = Mesh::new(0, 3).unwrap();
        let sys = assemble_system(&constant_field(), &[0.0, 0.0], &mesh, &SourceField::standard()).unwrap();
        assert!(sys.is_symmetric());
        for v in &sys.sub {
            assert!((v + 1.2).abs() < 1e-12);
        }
        for v in &sys.diag {
            assert!((v - 2.4).abs() < 1e-12);
        }
        for (i, f) in sys.load.iter().enumerate() {
            let x = (i + 1) as f64 * 0.125;
            assert!((f - 100.0 * x * 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_term_off_diagonal_matches_closed_form() {
        let mesh = Mesh::new(1, 3).unwrap();
        let h = mesh.width();
        let sys = assemble_system(&constant_field(), &[1.0, 0.0], &mesh, &SourceField::standard()).unwrap();
        let pi = std::f64::consts::PI;
        for (j, off) in sys.sup.iter().enumerate() {
            let (a, b) = (mesh.node(j + 1), mesh.node(j + 2));
            let expected = -(0.15 * h + 0.1 * ((pi * a).cos() - (pi * b).cos()) / pi) / (h * h);
            assert!((off - expected).abs() < 1e-10 * expected.abs());
        }
        assert!(sys.is_diagonally_dominant());
    }

    #[test]
    fn ellipticity_violation_is_reported() {
        let field = PermeabilityField::new(0.15, vec![0.1], vec![crate::Basis::Sine(1)]).unwrap();
        let mesh = Mesh::new(0, 3).unwrap();
        let err = assemble_system(&field, &[2.0], &mesh, &SourceField::standard()).unwrap_err();
        assert!(matches!(err, Error::NotElliptic { .. }));
    }

    #[test]
    fn identity_system() {
        let sys =
            TridiagonalSystem { sub: vec![0.0; 2], diag: vec![1.0; 3], sup: vec![0.0; 2], load: vec![2.0, 3.0, 4.0] };
        assert_eq!(solve_tridiagonal(&sys).unwrap(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_pivot_is_guarded() {
        let sys = TridiagonalSystem { sub: vec![], diag: vec![0.0], sup: vec![], load: vec![1.0] };
        assert!(matches!(solve_tridiagonal(&sys), Err(Error::ZeroPivot { row: 0 })));
    }

    #[test]
    fn nodal_exactness_for_constant_coefficient() {
        let field = constant_field();
        let source = SourceField::standard();
        for level in 0..10 {
            let mesh = Mesh::new(level, 3).unwrap();
            let sys = assemble_system(&field, &[0.0, 0.0], &mesh, &source).unwrap();
            let p = solve_tridiagonal(&sys).unwrap();
            let r = sys.apply(&p);
            // backward-stable residual: relative to |A|·|p|, not to |f|
            let scale =
                sys.diag.iter().fold(0.0f64, |m, v| m.max(v.abs())) * p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let res = r.iter().zip(&sys.load).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(res <= 1e-13 * scale, "level {level}: residual {res:e} vs scale {scale:e}");
            for (i, v) in p.iter().enumerate() {
                let exact = cubic(mesh.node(i + 1));
                assert!((v - exact).abs() <= 1e-10 * exact.abs());
            }
        }
    }

    #[test]
    fn fast_operator_matches_assembled_solve() {
        let field = constant_field();
        let source = SourceField::standard();
        for rule in [StiffnessRule::Exact, StiffnessRule::LeftEndpoint] {
            let mesh = Mesh::new(3, 3).unwrap();
            let op = LevelOperator::new(&field, &source, mesh, rule);
            let u = [0.37, -0.81];
            let fast = op.solve(&u).unwrap();
            let sys = assemble_system_with(&field, &u, &mesh, &source, rule).unwrap();
            let slow = solve_tridiagonal(&sys).unwrap();
            for (a, b) in fast.coeffs.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn point_evaluation() {
        let mesh = Mesh::new(2, 3).unwrap();
        let op = LevelOperator::new(&constant_field(), &SourceField::standard(), mesh, StiffnessRule::Exact);
        let sol = op.solve(&[0.0, 0.0]).unwrap();
        assert_eq!(sol.evaluate_point(0.0).unwrap(), 0.0);
        assert_eq!(sol.evaluate_point(1.0).unwrap(), 0.0);
        assert!((sol.evaluate_point(0.5).unwrap() - 1000.0 / 9.0 * 0.375).abs() < 1e-9);
        let h = mesh.width();
        let mid = sol.evaluate_point(4.5 * h).unwrap();
        assert!((mid - 0.5 * (sol.nodal(4) + sol.nodal(5))).abs() < 1e-12);
        assert!(matches!(sol.evaluate_point(1.5), Err(Error::OutsideDomain(_))));
        assert!(sol.evaluate_point(-0.1).is_err());
    }

    #[test]
    fn v_norm_of_single_hat() {
        let coarse_mesh = Mesh::new(0, 1).unwrap();
        let fine_mesh = Mesh::new(2, 1).unwrap();
        let h = fine_mesh.width();
        let coarse = ForwardSolution::new(coarse_mesh, vec![0.0]).unwrap();
        let mut c = vec![0.0; fine_mesh.n_interior()];
        c[0] = 1.0;
        let fine = ForwardSolution::new(fine_mesh, c).unwrap();
        let v = v_norm_difference(&coarse, &fine).unwrap();
        assert!((v.h1_semi - (2.0 / h).sqrt()).abs() < 1e-12);
        assert!((v.l2 - (2.0 * h / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(v_norm_difference(&fine, &fine).unwrap().norm(), 0.0);
        assert!(matches!(v_norm_difference(&fine, &coarse), Err(Error::NotNested { .. })));
    }
}
