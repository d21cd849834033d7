//! Sequential Monte Carlo over the level hierarchy.
//!
//! A sweep starts from an exact sample of `η_0` (rejection from the prior),
//! then for each level weights the cloud by `G_l = γ_{l+1}/γ_l`, resamples
//! multinomially and moves the particles with a random-walk Metropolis kernel
//! that leaves `η_{l+1}` invariant. Every pre-resampling cloud is kept,
//! because the multilevel estimator uses all of them.
//!
//! Per-particle work draws from its own counter-based stream, so results do
//! not depend on thread scheduling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{in_support, Charge, ForwardModel, LevelEval, LevelTarget};
use crate::rng::{tag, Seed};
use crate::stats;

/// Abort threshold for the level-0 rejection sampler.
pub const MIN_REJECTION_ACCEPTANCE: f64 = 1e-4;
/// Proposals that must be seen before the acceptance threshold is enforced.
pub const REJECTION_PROBE: u64 = 20_000;
const REJECTION_CHUNK: usize = 64;

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub u: Vec<f64>,
    /// Misfit at the cloud's level.
    pub phi: f64,
    /// Quantity of interest at the cloud's level.
    pub g: f64,
}

/// `N` particles in `[-1, 1]^K` targeting `η_level`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub level: usize,
    pub generation: usize,
    /// Key of the per-particle streams used for this cloud's lineage.
    pub seed: Seed,
    pub particles: Vec<Particle>,
    /// Log-weights carried over when resampling was skipped; all zero
    /// after a resampling step.
    pub log_weights: Vec<f64>,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn is_equally_weighted(&self) -> bool {
        self.log_weights.iter().all(|&w| w == 0.0)
    }

    pub fn mean_g(&self) -> f64 {
        let g: Vec<f64> = self.particles.iter().map(|p| p.g).collect();
        if self.is_equally_weighted() {
            stats::mean(&g)
        } else {
            stats::weighted_mean(&self.log_weights, &g).unwrap_or(f64::NAN)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl RejectionStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposals.max(1) as f64
    }
}

/// Exact i.i.d. draws from `η_0 ∝ exp(−Φ(𝒢⁰(u)))` under the uniform prior:
/// propose from the prior, accept with probability `exp(−Φ)`.
pub fn sample_eta0_rejection(model: &ForwardModel, n: usize, seed: Seed) -> Result<(ParticleCloud, RejectionStats)> {
    sample_rejection(model, 0, n, seed)
}

/// Exact draws from `η_level` by the same rejection scheme. Only level 0 is
/// part of the sampler; finer levels serve as test oracles.
pub fn sample_rejection(
    model: &ForwardModel,
    level: usize,
    n: usize,
    seed: Seed,
) -> Result<(ParticleCloud, RejectionStats)> {
    if n == 0 {
        return Err(Error::Config("cloud size must be at least 1".into()));
    }
    let key = seed.derive(tag::REJECTION).derive(level as u64);
    let per_particle_cap = (10.0 / MIN_REJECTION_ACCEPTANCE) as u64;
    let mut particles = Vec::with_capacity(n);
    let mut stats = RejectionStats { proposals: 0, accepted: 0 };
    let mut start = 0;
    while start < n {
        let end = (start + REJECTION_CHUNK).min(n);
        let chunk = map_indexed(end - start, |j| -> Result<(Particle, u64)> {
            let mut rng = key.stream((start + j) as u64);
            let mut tries = 0u64;
            loop {
                tries += 1;
                let u = model.sample_prior(&mut rng);
                let eval = model.evaluate(&u, level, Charge::Initialization)?;
                let log_u: f64 = rng.random::<f64>().ln();
                if log_u < -eval.phi {
                    return Ok((Particle { u, phi: eval.phi, g: eval.g }, tries));
                }
                if tries >= per_particle_cap {
                    return Err(Error::RejectionTooInefficient {
                        rate: 0.0,
                        threshold: MIN_REJECTION_ACCEPTANCE,
                        proposals: tries,
                    });
                }
            }
        });
        for item in chunk {
            let (p, tries) = item?;
            stats.proposals += tries;
            stats.accepted += 1;
            particles.push(p);
        }
        if stats.proposals >= REJECTION_PROBE && stats.acceptance_rate() < MIN_REJECTION_ACCEPTANCE {
            return Err(Error::RejectionTooInefficient {
                rate: stats.acceptance_rate(),
                threshold: MIN_REJECTION_ACCEPTANCE,
                proposals: stats.proposals,
            });
        }
        start = end;
    }
    let cloud = ParticleCloud { level, generation: 0, seed: key, particles, log_weights: vec![0.0; n] };
    Ok((cloud, stats))
}

/// Ancestor indices drawn multinomially with probabilities `∝ exp(log_weights)`.
/// Log-weights are shifted by their maximum before exponentiation, so adding
/// a constant to all of them does not change the result.
pub fn multinomial_ancestors<R: Rng + ?Sized>(log_weights: &[f64], n_out: usize, rng: &mut R) -> Result<Vec<usize>> {
    if let Some(index) = log_weights.iter().position(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::InvalidWeight { index });
    }
    let m = stats::max_finite(log_weights);
    if m == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights { level: 0 });
    }
    let mut cdf = Vec::with_capacity(log_weights.len());
    let mut acc = stats::KahanSum::new();
    for lw in log_weights {
        acc.add((lw - m).exp());
        cdf.push(acc.value());
    }
    let total = acc.value();
    Ok((0..n_out)
        .map(|_| {
            let x = rng.random::<f64>() * total;
            // first index whose cumulative weight exceeds x; zero-weight
            // entries are never selected
            cdf.partition_point(|&c| c <= x).min(cdf.len() - 1)
        })
        .collect())
}

/// Multinomial resampling of `cloud` to `n_out` equally weighted particles.
pub fn resample_multinomial(
    cloud: &ParticleCloud,
    log_weights: &[f64],
    n_out: usize,
    seed: Seed,
) -> Result<ParticleCloud> {
    if log_weights.len() != cloud.len() {
        return Err(Error::Dimension { expected: cloud.len(), got: log_weights.len() });
    }
    let key = seed.derive(tag::RESAMPLE).derive(cloud.generation as u64);
    let mut rng = key.rng();
    let ancestors = multinomial_ancestors(log_weights, n_out, &mut rng).map_err(|e| match e {
        Error::DegenerateWeights { .. } => Error::DegenerateWeights { level: cloud.level },
        other => other,
    })?;
    Ok(ParticleCloud {
        level: cloud.level,
        generation: cloud.generation + 1,
        seed: key,
        particles: ancestors.iter().map(|&a| cloud.particles[a].clone()).collect(),
        log_weights: vec![0.0; n_out],
    })
}

/// Random-walk Metropolis settings. The proposal standard deviation for
/// target `η_l` is `base_scale / l` (`l ≥ 1`), i.e. successive scales shrink
/// by the ratio `l/(l+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    pub n_iterations: usize,
    pub base_scale: f64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig { n_iterations: 10, base_scale: 0.1 }
    }
}

impl MutationConfig {
    pub fn scale(&self, level: usize) -> f64 {
        self.base_scale / level.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationStats {
    pub level: usize,
    pub proposals: u64,
    pub accepted: u64,
}

impl MutationStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposals.max(1) as f64
    }
}

/// `n_iterations` Metropolis steps per particle with Gaussian proposals of
/// standard deviation `scale`. Proposals leaving `[-1, 1]^K` have zero prior
/// density and are rejected without a solve.
pub fn mutate_rwm_with_scale(
    cloud: &mut ParticleCloud,
    target: &LevelTarget<'_>,
    n_iterations: usize,
    scale: f64,
    seed: Seed,
) -> Result<MutationStats> {
    if cloud.level != target.level {
        return Err(Error::Config(format!("cloud at level {} but target at level {}", cloud.level, target.level)));
    }
    let key = seed.derive(tag::MUTATION).derive(cloud.generation as u64);
    let model = target.model;
    let level = target.level;
    let moved = map_indexed(cloud.len(), |i| -> Result<(Particle, u64)> {
        let mut rng = key.stream(i as u64);
        let mut p = cloud.particles[i].clone();
        let mut accepted = 0;
        let mut proposal = vec![0.0; p.u.len()];
        for _ in 0..n_iterations {
            for (q, x) in proposal.iter_mut().zip(&p.u) {
                let z: f64 = rng.sample(StandardNormal);
                *q = x + scale * z;
            }
            let log_u: f64 = rng.random::<f64>().ln();
            if !in_support(&proposal) {
                continue;
            }
            let eval = model.evaluate(&proposal, level, Charge::Mutation)?;
            if log_u < p.phi - eval.phi {
                p.u.copy_from_slice(&proposal);
                p.phi = eval.phi;
                p.g = eval.g;
                accepted += 1;
            }
        }
        Ok((p, accepted))
    });
    let mut total = 0;
    for (slot, item) in cloud.particles.iter_mut().zip(moved) {
        let (p, a) = item?;
        *slot = p;
        total += a;
    }
    cloud.seed = key;
    Ok(MutationStats { level, proposals: (cloud.len() * n_iterations) as u64, accepted: total })
}

pub fn mutate_rwm(
    cloud: &mut ParticleCloud,
    target: &LevelTarget<'_>,
    config: &MutationConfig,
    seed: Seed,
) -> Result<MutationStats> {
    mutate_rwm_with_scale(cloud, target, config.n_iterations, config.scale(target.level), seed)
}

/// When to resample between levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum ResamplingPolicy {
    /// Resample at every level.
    #[default]
    Always,
    /// Skip resampling while `ESS ≥ fraction · N` and the next level keeps
    /// the same size; weights are then carried forward.
    Adaptive { ess_fraction: f64 },
}

/// Sizes and kernels of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    /// `N_0 ≥ N_1 ≥ ...`, one entry per cloud (levels `0..sizes.len()`).
    pub sizes: Vec<usize>,
    /// Also compute `G_l` on the last cloud (needed by the multilevel
    /// estimator, not by the single-level comparator).
    pub weigh_last: bool,
    pub mutation: MutationConfig,
    pub resampling: ResamplingPolicy,
}

impl SweepPlan {
    pub fn new(sizes: Vec<usize>, weigh_last: bool) -> Self {
        SweepPlan { sizes, weigh_last, mutation: MutationConfig::default(), resampling: ResamplingPolicy::Always }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::Config("sweep sizes must be nonempty and positive".into()));
        }
        if self.sizes.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config(format!("sweep sizes must be nonincreasing: {:?}", self.sizes)));
        }
        Ok(())
    }
}

/// Snapshot of the cloud at one level, before resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub particles: Vec<Particle>,
    /// Weights carried into this cloud (zero unless resampling was skipped).
    pub carried_log_weights: Vec<f64>,
    /// `log G_l(u^i)`; `None` when the cloud was not weighted.
    pub log_weights: Option<Vec<f64>>,
    /// Misfit and `g` of each particle at level `l + 1`.
    pub next: Option<Vec<LevelEval>>,
    /// Mean Metropolis acceptance of the mutation that produced this cloud.
    pub acceptance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<LevelRecord>,
    pub rejection: RejectionStats,
    /// Sampling cost charged to the model's ledger during the sweep.
    pub cost_units: u64,
    pub seed: Seed,
    /// The last cloud after its own mutation (equals the last record's
    /// particles).
    pub final_cloud: ParticleCloud,
}

impl SweepOutput {
    pub fn acceptance_rates(&self) -> Vec<(usize, f64)> {
        self.records.iter().filter_map(|r| r.acceptance.map(|a| (r.level, a))).collect()
    }
}

fn weigh(model: &ForwardModel, cloud: &ParticleCloud) -> Result<(Vec<f64>, Vec<LevelEval>)> {
    let next_level = cloud.level + 1;
    let evals = map_indexed(cloud.len(), |i| model.evaluate(&cloud.particles[i].u, next_level, Charge::Weighting));
    let next = evals.into_iter().collect::<Result<Vec<_>>>()?;
    let lw = cloud.particles.iter().zip(&next).map(|(p, e)| p.phi - e.phi).collect();
    Ok((lw, next))
}

/// Runs the level sweep. The model's ledger should not be shared with
/// concurrent work, since the reported cost is the ledger delta.
pub fn smc_sweep(model: &ForwardModel, plan: &SweepPlan, seed: Seed) -> Result<SweepOutput> {
    plan.validate()?;
    let n_clouds = plan.sizes.len();
    let last_level = if plan.weigh_last { n_clouds } else { n_clouds - 1 };
    model.check_data_resolution(last_level)?;
    let start_units = model.ledger().sampling_units();
    let (mut cloud, rejection) = sample_eta0_rejection(model, plan.sizes[0], seed)?;
    let mut records = Vec::with_capacity(n_clouds);
    let mut acceptance = None;
    for l in 0..n_clouds {
        let weighted = l + 1 < n_clouds || plan.weigh_last;
        let (log_weights, next) = if weighted {
            let (lw, next) = weigh(model, &cloud)?;
            (Some(lw), Some(next))
        } else {
            (None, None)
        };
        let record = LevelRecord {
            level: l,
            particles: cloud.particles.clone(),
            carried_log_weights: cloud.log_weights.clone(),
            log_weights,
            next,
            acceptance,
        };
        if l + 1 < n_clouds {
            let lw = record.log_weights.as_ref().expect("weighted");
            let next = record.next.as_ref().expect("weighted");
            let total: Vec<f64> = cloud.log_weights.iter().zip(lw).map(|(c, w)| c + w).collect();
            let n_next = plan.sizes[l + 1];
            let skip = match plan.resampling {
                ResamplingPolicy::Always => false,
                ResamplingPolicy::Adaptive { ess_fraction } => {
                    n_next == cloud.len() && stats::effective_sample_size(&total) >= ess_fraction * cloud.len() as f64
                }
            };
            // particles move to level l+1 carrying their already computed evals
            for (p, e) in cloud.particles.iter_mut().zip(next) {
                p.phi = e.phi;
                p.g = e.g;
            }
            cloud.level = l + 1;
            let mut moved = if skip {
                ParticleCloud { generation: cloud.generation + 1, log_weights: total, ..cloud.clone() }
            } else {
                resample_multinomial(&cloud, &total, n_next, seed).map_err(|e| match e {
                    Error::DegenerateWeights { .. } => Error::DegenerateWeights { level: l },
                    other => other,
                })?
            };
            let stats = mutate_rwm(&mut moved, &model.target(l + 1), &plan.mutation, seed)?;
            acceptance = Some(stats.acceptance_rate());
            cloud = moved;
        }
        records.push(record);
    }
    Ok(SweepOutput {
        records,
        rejection,
        cost_units: model.ledger().sampling_units() - start_units,
        seed,
        final_cloud: cloud,
    })
}
