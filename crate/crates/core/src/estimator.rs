//! Multilevel SMC estimator, the single-level comparator and the
//! increment-variance probe.
//!
//! With clouds `η_0^{N_0}, ..., η_{L-1}^{N_{L-1}}` from one sweep,
//!
//! ```text
//! Ŷ = η_0^N(g_0) + Σ_{l=1}^{L} [ η_{l-1}^N(g_l G_{l-1}) / η_{l-1}^N(G_{l-1}) − η_{l-1}^N(g_{l-1}) ]
//! ```
//!
//! The weighted term evaluates the functional at level `l`, which the
//! weighting step computes anyway; the population version then telescopes
//! exactly to `η_L(g_L)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ForwardModel, LevelEval};
use crate::rng::{tag, Seed};
use crate::smc::{smc_sweep, LevelRecord, MutationConfig, Particle, SweepOutput, SweepPlan};
use crate::stats::{self, KahanSum};

/// Quantity whose posterior mean is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Functional {
    /// `g(u) = p_l(x_g; u)` at the level of the cloud.
    #[default]
    PointValue,
    Constant(f64),
    /// `u_k`.
    Coordinate(usize),
}

impl Functional {
    fn at(&self, p: &Particle) -> f64 {
        match *self {
            Functional::PointValue => p.g,
            Functional::Constant(c) => c,
            Functional::Coordinate(k) => p.u[k],
        }
    }

    fn at_next(&self, p: &Particle, next: &LevelEval) -> f64 {
        match *self {
            Functional::PointValue => next.g,
            _ => self.at(p),
        }
    }
}

/// One multilevel estimate; serialized as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilevelEstimate {
    pub seed: u64,
    #[serde(rename = "L")]
    pub level: usize,
    /// Sizes of the clouds the estimate was computed from.
    pub sizes: Vec<usize>,
    pub y_hat: f64,
    /// `L + 1` terms: `η_0^N(g)` followed by the level increments.
    pub increments: Vec<f64>,
    /// `Ẑ_l / Ẑ_{l-1} = η_{l-1}^N(G_{l-1})` for `l = 1..L`.
    pub z_ratios: Vec<f64>,
    pub cost_units: u64,
    pub wall_ms: f64,
}

impl MultilevelEstimate {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("estimate serializes")
    }
}

/// `η^N(f)` of a cloud with carried log-weights.
fn cloud_mean(record: &LevelRecord, f: impl Fn(usize) -> f64) -> Option<f64> {
    if record.carried_log_weights.iter().all(|&w| w == 0.0) {
        let s: KahanSum = (0..record.particles.len()).map(f).collect();
        Some(s.value() / record.particles.len() as f64)
    } else {
        let vals: Vec<f64> = (0..record.particles.len()).map(f).collect();
        stats::weighted_mean(&record.carried_log_weights, &vals)
    }
}

/// Returns `(η(f' G)/η(G) − η(f), η(G))` for one weighted record.
fn increment(record: &LevelRecord, g: &Functional) -> Result<(f64, f64)> {
    let level = record.level;
    let (lw, next) = match (&record.log_weights, &record.next) {
        (Some(lw), Some(next)) => (lw, next),
        _ => return Err(Error::Config(format!("level {level} was not weighted"))),
    };
    let total: Vec<f64> = record.carried_log_weights.iter().zip(lw).map(|(c, w)| c + w).collect();
    if let Some(index) = total.iter().position(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::InvalidWeight { index });
    }
    let fine: Vec<f64> = record.particles.iter().zip(next).map(|(p, e)| g.at_next(p, e)).collect();
    let weighted = stats::weighted_mean(&total, &fine).ok_or(Error::DegenerateWeights { level })?;
    let plain = cloud_mean(record, |i| g.at(&record.particles[i])).ok_or(Error::DegenerateWeights { level })?;
    let log_z = stats::log_sum_exp(&total) - stats::log_sum_exp(&record.carried_log_weights);
    Ok((weighted - plain, log_z.exp()))
}

/// Multilevel estimate of `η_L(g)` from a sweep whose first `L` clouds are
/// weighted (`L = 0` uses the unweighted level-0 cloud only).
pub fn mlsmc_estimate(sweep: &SweepOutput, g: &Functional, level: usize) -> Result<MultilevelEstimate> {
    let needed = level.max(1);
    if sweep.records.len() < needed {
        return Err(Error::Config(format!("sweep has {} clouds, L = {level} needs {needed}", sweep.records.len())));
    }
    let first = &sweep.records[0];
    let mut increments = Vec::with_capacity(level + 1);
    increments.push(cloud_mean(first, |i| g.at(&first.particles[i])).ok_or(Error::DegenerateWeights { level: 0 })?);
    let mut z_ratios = Vec::with_capacity(level);
    for record in &sweep.records[..level] {
        let (d, z) = increment(record, g)?;
        increments.push(d);
        z_ratios.push(z);
    }
    Ok(MultilevelEstimate {
        seed: sweep.seed.0,
        level,
        sizes: sweep.records[..needed].iter().map(|r| r.particles.len()).collect(),
        y_hat: stats::sum(increments.iter().copied()),
        increments,
        z_ratios,
        cost_units: sweep.cost_units,
        wall_ms: 0.0,
    })
}

/// Milliseconds since `start`; zero where no clock is available.
#[cfg(not(target_arch = "wasm32"))]
fn elapsed_ms(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[cfg(not(target_arch = "wasm32"))]
fn clock() -> std::time::Instant {
    std::time::Instant::now()
}

#[cfg(target_arch = "wasm32")]
fn clock() {}

#[cfg(target_arch = "wasm32")]
fn elapsed_ms(_: ()) -> f64 {
    0.0
}

/// The sweep an MLSMC estimate at level `L` needs: clouds `0..max(L, 1)`,
/// weighted throughout when `L ≥ 1`.
pub fn mlsmc_plan(level: usize, sizes: &[usize], mutation: MutationConfig) -> Result<SweepPlan> {
    let n = level.max(1);
    if sizes.len() < n {
        return Err(Error::Config(format!("L = {level} needs {n} sizes, got {}", sizes.len())));
    }
    Ok(SweepPlan { mutation, ..SweepPlan::new(sizes[..n].to_vec(), level >= 1) })
}

/// Runs the sweep and the estimator. `sizes` may list `N_0..N_L`; entries
/// past `N_{L-1}` are ignored (`N_0` is used when `L = 0`).
pub fn run_mlsmc(
    model: &ForwardModel,
    level: usize,
    sizes: &[usize],
    mutation: MutationConfig,
    g: &Functional,
    seed: Seed,
) -> Result<MultilevelEstimate> {
    let start = clock();
    let plan = mlsmc_plan(level, sizes, mutation)?;
    let sweep = smc_sweep(model, &plan, seed)?;
    let mut est = mlsmc_estimate(&sweep, g, level)?;
    est.wall_ms = elapsed_ms(start);
    Ok(est)
}

/// Output of the single-level comparator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleLevelEstimate {
    pub seed: u64,
    #[serde(rename = "L")]
    pub level: usize,
    pub n: usize,
    pub y_hat: f64,
    pub cost_units: u64,
    pub wall_ms: f64,
}

/// Standard SMC estimate `η_L^N(g)`: constant size `N` through level `L`,
/// only the final cloud is used.
pub fn single_level_estimate(
    model: &ForwardModel,
    level: usize,
    n: usize,
    mutation: MutationConfig,
    g: &Functional,
    seed: Seed,
) -> Result<SingleLevelEstimate> {
    let start = clock();
    let plan = SweepPlan { mutation, ..SweepPlan::new(vec![n; level + 1], false) };
    let sweep = smc_sweep(model, &plan, seed)?;
    let last = sweep.records.last().expect("nonempty sweep");
    let y_hat = cloud_mean(last, |i| g.at(&last.particles[i])).ok_or(Error::DegenerateWeights { level })?;
    Ok(SingleLevelEstimate { seed: seed.0, level, n, y_hat, cost_units: sweep.cost_units, wall_ms: elapsed_ms(start) })
}

/// Empirical variance of one level's increment across repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementVariance {
    pub level: usize,
    pub h: f64,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of `variance` from the sample fourth moment.
    pub std_error: f64,
}

/// Sample variance and its standard error.
pub fn variance_with_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let v = stats::variance(xs);
    if xs.len() < 4 {
        return (v, f64::NAN);
    }
    let m = stats::mean(xs);
    let m4 = stats::sum(xs.iter().map(|x| (x - m).powi(4))) / n;
    let se2 = (m4 - v * v * (n - 3.0) / (n - 1.0)) / n;
    (v, se2.max(0.0).sqrt())
}

/// Runs `n_repeats` independent MLSMC sweeps at level `L = sizes.len()` and
/// returns the variance of each level increment `l = 1..L`.
pub fn increment_variance_probe(
    model: &ForwardModel,
    sizes: &[usize],
    n_repeats: usize,
    mutation: MutationConfig,
    g: &Functional,
    seed: Seed,
) -> Result<Vec<IncrementVariance>> {
    if n_repeats < 2 {
        return Err(Error::Config("variance probe needs at least 2 repeats".into()));
    }
    let level = sizes.len();
    let key = seed.derive(tag::PROBE);
    let mut per_level = vec![Vec::with_capacity(n_repeats); level];
    for r in 0..n_repeats {
        let est = run_mlsmc(&model.fresh(), level, sizes, mutation, g, key.derive(r as u64))?;
        for (slot, d) in per_level.iter_mut().zip(&est.increments[1..]) {
            slot.push(*d);
        }
    }
    Ok(per_level
        .iter()
        .enumerate()
        .map(|(i, xs)| {
            let (variance, std_error) = variance_with_error(xs);
            IncrementVariance { level: i + 1, h: model.width(i + 1), mean: stats::mean(xs), variance, std_error }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemConfig;

    fn model() -> ForwardModel {
        ProblemConfig { data_h_exponent: 14, ..Default::default() }.build().unwrap()
    }

    #[test]
    fn level_zero_is_plain_mean() {
        let m = model();
        let plan = mlsmc_plan(0, &[50, 25], MutationConfig::default()).unwrap();
        assert!(!plan.weigh_last);
        let sweep = smc_sweep(&m, &plan, Seed::new(3)).unwrap();
        let est = mlsmc_estimate(&sweep, &Functional::PointValue, 0).unwrap();
        let g: Vec<f64> = sweep.records[0].particles.iter().map(|p| p.g).collect();
        assert_eq!(est.increments.len(), 1);
        assert!((est.y_hat - stats::mean(&g)).abs() < 1e-12);
        assert!(est.z_ratios.is_empty());
    }

    #[test]
    fn constant_functional_has_zero_increments() {
        let m = model();
        let est =
            run_mlsmc(&m, 3, &[60, 30, 15, 8], MutationConfig::default(), &Functional::Constant(1.0), Seed::new(4))
                .unwrap();
        assert_eq!(est.increments.len(), 4);
        assert_eq!(est.increments[0], 1.0);
        assert!(est.increments[1..].iter().all(|d| d.abs() < 1e-15));
        assert!((est.y_hat - 1.0).abs() < 1e-15);
        assert!(est.z_ratios.iter().all(|z| *z > 0.0));
        assert_eq!(est.sizes, vec![60, 30, 15]);
    }

    #[test]
    fn y_hat_is_sum_of_increments() {
        let m = model();
        let est =
            run_mlsmc(&m, 2, &[80, 40], MutationConfig::default(), &Functional::PointValue, Seed::new(5)).unwrap();
        assert_eq!(est.y_hat, stats::sum(est.increments.iter().copied()));
        let line = est.to_json_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["L", "cost_units", "increments", "seed", "sizes", "wall_ms", "y_hat", "z_ratios"]);
    }

    #[test]
    fn single_level_zero_matches_mlsmc_zero() {
        let m = model();
        let a =
            single_level_estimate(&m.fresh(), 0, 40, MutationConfig::default(), &Functional::PointValue, Seed::new(6))
                .unwrap();
        let b =
            run_mlsmc(&m.fresh(), 0, &[40], MutationConfig::default(), &Functional::PointValue, Seed::new(6)).unwrap();
        assert_eq!(a.y_hat, b.y_hat);
        assert_eq!(a.cost_units, b.cost_units);
    }

    #[test]
    fn too_few_sizes_is_an_error() {
        assert!(mlsmc_plan(3, &[10, 5], MutationConfig::default()).is_err());
    }

    #[test]
    fn variance_error_of_known_sample() {
        let (v, se) = variance_with_error(&[1.0, -1.0, 1.0, -1.0]);
        assert!((v - 4.0 / 3.0).abs() < 1e-12);
        assert!(se.is_finite());
        let (v, _) = variance_with_error(&[2.0; 10]);
        assert_eq!(v, 0.0);
    }
}
