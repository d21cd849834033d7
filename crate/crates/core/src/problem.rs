//! The Bayesian inverse problem: uniform prior on `[-1, 1]^K`, Gaussian
//! observation noise on point values of the FEM solution, and the level
//! targets `γ_l(u) = exp(-Φ(𝒢^l(u)))`.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{LevelOperator, Mesh, StiffnessRule, MAX_MESH_EXPONENT};
use crate::field::{PermeabilityField, SourceField};
use crate::rng::{tag, Seed};

/// Problem definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub bar_u: f64,
    pub sigmas: Vec<f64>,
    pub observation_points: Vec<f64>,
    pub functional_point: f64,
    pub gamma_noise_std: f64,
    pub data_h_exponent: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_u: Option<Vec<f64>>,
    pub seed: u64,
    /// `h_l = 2^-(l + offset_k)`.
    #[serde(default = "default_offset")]
    pub offset_k: u32,
    #[serde(default = "default_slope")]
    pub source_slope: f64,
    #[serde(default)]
    pub stiffness_rule: StiffnessRule,
}

fn default_offset() -> u32 {
    3
}

fn default_slope() -> f64 {
    100.0
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            k: 2,
            bar_u: 0.15,
            sigmas: vec![0.1, 0.025],
            observation_points: vec![0.25, 0.75],
            functional_point: 0.5,
            gamma_noise_std: 0.25,
            data_h_exponent: 20,
            true_u: None,
            seed: 1,
            offset_k: 3,
            source_slope: 100.0,
            stiffness_rule: StiffnessRule::Exact,
        }
    }
}

impl ProblemConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ProblemConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.len() != self.k {
            return Err(Error::Config(format!("K = {} but {} sigmas given", self.k, self.sigmas.len())));
        }
        if let Some(u) = &self.true_u {
            if u.len() != self.k {
                return Err(Error::Config(format!("true_u has length {}, expected {}", u.len(), self.k)));
            }
            if u.iter().any(|x| x.abs() > 1.0) {
                return Err(Error::OutsideSupport);
            }
        }
        if self.observation_points.is_empty() {
            return Err(Error::Config("no observation points".into()));
        }
        let pts = self.observation_points.iter().chain(std::iter::once(&self.functional_point));
        for &x in pts {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::OutsideDomain(x));
            }
        }
        if !(self.gamma_noise_std > 0.0) {
            return Err(Error::Config("gamma_noise_std must be positive".into()));
        }
        if self.data_h_exponent > MAX_MESH_EXPONENT {
            return Err(Error::MeshTooLarge { exponent: self.data_h_exponent, max: MAX_MESH_EXPONENT });
        }
        Ok(())
    }

    pub fn field(&self) -> Result<PermeabilityField> {
        PermeabilityField::with_standard_basis(self.bar_u, self.sigmas.clone())
    }

    pub fn source(&self) -> SourceField {
        SourceField::Linear { slope: self.source_slope }
    }

    /// The true parameter: `true_u` if given, otherwise a prior draw from the
    /// data-generation substream of `seed`.
    pub fn true_parameter(&self) -> Vec<f64> {
        match &self.true_u {
            Some(u) => u.clone(),
            None => {
                let mut rng = Seed::new(self.seed).derive(tag::TRUE_PARAMETER).rng();
                (0..self.k).map(|_| rng.random_range(-1.0..=1.0)).collect()
            }
        }
    }

    /// Builds the forward model with synthetic data generated at
    /// `h = 2^-data_h_exponent`. Data generation is not charged to the ledger.
    pub fn build(&self) -> Result<ForwardModel> {
        self.validate()?;
        let field = self.field()?;
        let source = self.source();
        let true_u = self.true_parameter();
        let noise_cov = diagonal_covariance(self.observation_points.len(), self.gamma_noise_std);
        let setup = generate_synthetic_data(
            &field,
            &source,
            self.stiffness_rule,
            &true_u,
            self.data_h_exponent,
            self.offset_k,
            self.observation_points.clone(),
            noise_cov,
            self.functional_point,
            Seed::new(self.seed).derive(tag::DATA_NOISE),
        )?;
        ForwardModel::new(field, source, self.offset_k, self.stiffness_rule, setup)
    }
}

pub fn diagonal_covariance(m: usize, std: f64) -> Vec<f64> {
    let mut cov = vec![0.0; m * m];
    for i in 0..m {
        cov[i * m + i] = std * std;
    }
    cov
}

/// Where the data came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProvenance {
    pub true_u: Vec<f64>,
    pub seed: u64,
    pub data_h_exponent: u32,
    pub noiseless: Vec<f64>,
}

/// Observation points, data and the Gaussian noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSetup {
    pub observation_points: Vec<f64>,
    pub data: Vec<f64>,
    /// Row-major `M × M`.
    pub noise_cov: Vec<f64>,
    pub functional_point: f64,
    /// Lower Cholesky factor of `noise_cov`.
    chol: Vec<f64>,
    pub provenance: Option<DataProvenance>,
}

impl ObservationSetup {
    pub fn new(
        observation_points: Vec<f64>,
        data: Vec<f64>,
        noise_cov: Vec<f64>,
        functional_point: f64,
    ) -> Result<Self> {
        let m = observation_points.len();
        if data.len() != m {
            return Err(Error::Dimension { expected: m, got: data.len() });
        }
        if noise_cov.len() != m * m {
            return Err(Error::Dimension { expected: m * m, got: noise_cov.len() });
        }
        let chol = cholesky(&noise_cov, m)?;
        Ok(ObservationSetup { observation_points, data, noise_cov, functional_point, chol, provenance: None })
    }

    pub fn dim(&self) -> usize {
        self.observation_points.len()
    }

    /// `|v|²_Γ = vᵀ Γ⁻¹ v` via forward substitution with the Cholesky factor.
    pub fn weighted_norm_sq(&self, v: &[f64]) -> f64 {
        let m = self.dim();
        let mut z = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if m <= 8 {
            &mut z[..m]
        } else {
            heap = vec![0.0; m];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..m {
            let mut s = v[i];
            for j in 0..i {
                s -= self.chol[i * m + j] * z[j];
            }
            z[i] = s / self.chol[i * m + i];
            acc += z[i] * z[i];
        }
        acc
    }

    /// Largest eigenvalue bound of `Γ⁻¹` (Gershgorin-free: `‖L⁻¹‖_F²`).
    fn precision_bound(&self) -> f64 {
        let m = self.dim();
        (0..m)
            .map(|i| {
                let mut e = vec![0.0; m];
                e[i] = 1.0;
                self.weighted_norm_sq(&e)
            })
            .sum()
    }
}

fn cholesky(a: &[f64], m: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            if (a[i * m + j] - a[j * m + i]).abs() > 1e-12 * a[i * m + j].abs().max(1.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    Ok(l)
}

/// `Φ(𝒢) = ½ |𝒢 − y|²_Γ`.
pub fn misfit_phi(observed: &[f64], setup: &ObservationSetup) -> Result<f64> {
    if observed.len() != setup.dim() {
        return Err(Error::Dimension { expected: setup.dim(), got: observed.len() });
    }
    let r: Vec<f64> = observed.iter().zip(&setup.data).map(|(g, y)| g - y).collect();
    Ok(0.5 * setup.weighted_norm_sq(&r))
}

/// Synthetic data `y = 𝒢(p_h(·; true_u)) + ξ`, `ξ ~ N(0, Γ)`, solved on the
/// mesh `h = 2^-data_h_exponent`, which must be finer than every sampling
/// level the caller intends to use (checked against `finest_sampling_exponent`
/// by [`ForwardModel::check_data_resolution`]).
#[allow(clippy::too_many_arguments)]
pub fn generate_synthetic_data(
    field: &PermeabilityField,
    source: &SourceField,
    rule: StiffnessRule,
    true_u: &[f64],
    data_h_exponent: u32,
    offset_k: u32,
    observation_points: Vec<f64>,
    noise_cov: Vec<f64>,
    functional_point: f64,
    noise_seed: Seed,
) -> Result<ObservationSetup> {
    if true_u.iter().any(|x| x.abs() > 1.0) {
        return Err(Error::OutsideSupport);
    }
    if data_h_exponent <= offset_k {
        return Err(Error::Config(format!(
            "data mesh 2^-{data_h_exponent} is not finer than the coarsest sampling mesh 2^-{offset_k}"
        )));
    }
    let mesh = Mesh::with_exponent(data_h_exponent)?;
    let op = LevelOperator::new(field, source, mesh, rule);
    let sol = op.solve(true_u)?;
    let noiseless = observation_points.iter().map(|&x| sol.evaluate_point(x)).collect::<Result<Vec<_>>>()?;
    let m = observation_points.len();
    let mut setup = ObservationSetup::new(observation_points, noiseless.clone(), noise_cov, functional_point)?;
    let mut rng = noise_seed.rng();
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..m {
        let xi: f64 = (0..=i).map(|j| setup.chol[i * m + j] * z[j]).sum();
        setup.data[i] += xi;
    }
    setup.provenance = Some(DataProvenance { true_u: true_u.to_vec(), seed: noise_seed.0, data_h_exponent, noiseless });
    Ok(setup)
}

/// What a forward solve is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Charge {
    Initialization = 0,
    Weighting = 1,
    Mutation = 2,
    Diagnostic = 3,
}

/// Forward-solve cost in degrees of freedom (`h^-1` per solve).
#[derive(Debug, Default)]
pub struct CostLedger {
    units: [AtomicU64; 4],
    solves: [AtomicU64; 4],
}

impl CostLedger {
    pub fn charge(&self, charge: Charge, units: u64) {
        self.units[charge as usize].fetch_add(units, Ordering::Relaxed);
        self.solves[charge as usize].fetch_add(1, Ordering::Relaxed);
    }

    pub fn units(&self, charge: Charge) -> u64 {
        self.units[charge as usize].load(Ordering::Relaxed)
    }

    pub fn solves(&self, charge: Charge) -> u64 {
        self.solves[charge as usize].load(Ordering::Relaxed)
    }

    /// Sampler cost: everything except diagnostics.
    pub fn sampling_units(&self) -> u64 {
        self.units(Charge::Initialization) + self.units(Charge::Weighting) + self.units(Charge::Mutation)
    }

    pub fn total_units(&self) -> u64 {
        self.sampling_units() + self.units(Charge::Diagnostic)
    }
}

/// Result of one forward solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Quantity of interest `g(u) = p(x_g; u)`.
    pub g: f64,
    /// `𝒢(u) = [p(x_1; u), ..., p(x_M; u)]`.
    pub obs: Vec<f64>,
    pub cost_units: u64,
}

/// Misfit and quantity of interest of one parameter at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelEval {
    pub phi: f64,
    pub g: f64,
}

#[derive(Debug)]
struct Discretization {
    field: PermeabilityField,
    source: SourceField,
    offset: u32,
    rule: StiffnessRule,
    setup: ObservationSetup,
    operators: Vec<OnceLock<LevelOperator>>,
}

/// Forward model over the level hierarchy, with a cost ledger. Cloning is
/// cheap and shares the ledger; [`ForwardModel::fresh`] shares the cached
/// operators but starts a new ledger.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    inner: Arc<Discretization>,
    ledger: Arc<CostLedger>,
}

impl ForwardModel {
    pub fn new(
        field: PermeabilityField,
        source: SourceField,
        offset: u32,
        rule: StiffnessRule,
        setup: ObservationSetup,
    ) -> Result<Self> {
        Mesh::new(0, offset)?;
        let max_level = (MAX_MESH_EXPONENT - offset) as usize;
        let operators = (0..=max_level).map(|_| OnceLock::new()).collect();
        Ok(ForwardModel {
            inner: Arc::new(Discretization { field, source, offset, rule, setup, operators }),
            ledger: Arc::new(CostLedger::default()),
        })
    }

    /// Same discretization and data, new ledger.
    pub fn fresh(&self) -> Self {
        ForwardModel { inner: Arc::clone(&self.inner), ledger: Arc::new(CostLedger::default()) }
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn field(&self) -> &PermeabilityField {
        &self.inner.field
    }

    pub fn source(&self) -> &SourceField {
        &self.inner.source
    }

    pub fn setup(&self) -> &ObservationSetup {
        &self.inner.setup
    }

    pub fn offset(&self) -> u32 {
        self.inner.offset
    }

    pub fn rule(&self) -> StiffnessRule {
        self.inner.rule
    }

    pub fn dim(&self) -> usize {
        self.inner.field.dim()
    }

    pub fn mesh(&self, level: usize) -> Result<Mesh> {
        Mesh::new(level as u32, self.inner.offset)
    }

    /// `h_l^-1`, the cost of one solve at `level`.
    pub fn level_cost(&self, level: usize) -> u64 {
        1u64 << (level as u32 + self.inner.offset)
    }

    pub fn width(&self, level: usize) -> f64 {
        (-((level as u32 + self.inner.offset) as f64)).exp2()
    }

    pub fn operator(&self, level: usize) -> Result<&LevelOperator> {
        let slot = self
            .inner
            .operators
            .get(level)
            .ok_or(Error::MeshTooLarge { exponent: level as u32 + self.inner.offset, max: MAX_MESH_EXPONENT })?;
        Ok(slot.get_or_init(|| {
            let mesh = Mesh::new(level as u32, self.inner.offset).expect("checked by slot bound");
            LevelOperator::new(&self.inner.field, &self.inner.source, mesh, self.inner.rule)
        }))
    }

    /// Data must come from a mesh strictly finer than every sampling level.
    pub fn check_data_resolution(&self, finest_level: usize) -> Result<()> {
        if let Some(p) = &self.inner.setup.provenance {
            let finest = finest_level as u32 + self.inner.offset;
            if p.data_h_exponent <= finest {
                return Err(Error::Config(format!(
                    "data mesh 2^-{} is not finer than sampling mesh 2^-{finest}",
                    p.data_h_exponent
                )));
            }
        }
        Ok(())
    }

    /// One solve at `level`, charged to `charge`.
    pub fn forward_observe_as(&self, u: &[f64], level: usize, charge: Charge) -> Result<Observation> {
        let op = self.operator(level)?;
        let sol = op.solve(u)?;
        let cost_units = self.level_cost(level);
        self.ledger.charge(charge, cost_units);
        let setup = &self.inner.setup;
        let obs = setup.observation_points.iter().map(|&x| sol.evaluate_point(x)).collect::<Result<Vec<_>>>()?;
        let g = sol.evaluate_point(setup.functional_point)?;
        Ok(Observation { g, obs, cost_units })
    }

    pub fn forward_observe(&self, u: &[f64], level: usize) -> Result<Observation> {
        self.forward_observe_as(u, level, Charge::Diagnostic)
    }

    /// Misfit and `g` at `level`.
    pub fn evaluate(&self, u: &[f64], level: usize, charge: Charge) -> Result<LevelEval> {
        let mut o = self.forward_observe_as(u, level, charge)?;
        // residual in place: this sits on the rejection sampler's hot path
        for (r, y) in o.obs.iter_mut().zip(&self.inner.setup.data) {
            *r -= y;
        }
        Ok(LevelEval { phi: 0.5 * self.inner.setup.weighted_norm_sq(&o.obs), g: o.g })
    }

    /// `log G_{l-1}(u) = Φ(𝒢^{l-1}(u)) − Φ(𝒢^l(u))`, both levels solved for
    /// the same `u`.
    pub fn log_incremental_weight(&self, u: &[f64], level: usize) -> Result<f64> {
        if level == 0 {
            return Err(Error::Config("incremental weights start at level 1".into()));
        }
        let coarse = self.evaluate(u, level - 1, Charge::Diagnostic)?;
        let fine = self.evaluate(u, level, Charge::Diagnostic)?;
        Ok(coarse.phi - fine.phi)
    }

    pub fn target(&self, level: usize) -> LevelTarget<'_> {
        LevelTarget { level, model: self }
    }

    /// Uniform bound on `|𝒢_m(u)|`: `|p(x)| ≤ ‖p'‖₂ ≤ ‖f‖₂ / (π u_*)` from
    /// coercivity and the Poincaré inequality on `[0, 1]`; holds for the
    /// Galerkin solution at every level.
    pub fn observation_bound(&self) -> f64 {
        let f_norm = match &self.inner.source {
            SourceField::Linear { slope } => slope.abs() / 3f64.sqrt(),
            SourceField::Custom(f) => {
                let n = 4096;
                let s: f64 = (0..n).map(|i| f((i as f64 + 0.5) / n as f64).powi(2)).sum();
                (s / n as f64).sqrt() * 1.01
            }
        };
        f_norm / (std::f64::consts::PI * self.inner.field.lower_bound())
    }

    /// `Φ* ≥ sup_{u,l} Φ(𝒢^l(u))`.
    pub fn misfit_bound(&self) -> f64 {
        let setup = &self.inner.setup;
        let b = self.observation_bound();
        let r: f64 = setup.data.iter().map(|y| (b + y.abs()).powi(2)).sum();
        0.5 * setup.precision_bound() * r
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }
}

pub fn in_support(u: &[f64]) -> bool {
    u.iter().all(|x| (-1.0..=1.0).contains(x))
}

/// `η_l ∝ γ_l · prior`.
#[derive(Debug, Clone, Copy)]
pub struct LevelTarget<'a> {
    pub level: usize,
    pub model: &'a ForwardModel,
}

impl LevelTarget<'_> {
    /// `log γ_l(u) = −Φ(𝒢^l(u))`, `-inf` outside the prior support.
    pub fn log_gamma(&self, u: &[f64], charge: Charge) -> Result<f64> {
        if !in_support(u) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(-self.model.evaluate(u, self.level, charge)?.phi)
    }
}
