//! Experiment orchestration behind the `mlsmc` command-line tool: rate
//! probes, ground truth, MSE-vs-cost sweeps and acceptance traces, with
//! CSV/JSON reporting.
//!
//! All randomness derives from one root seed through named substreams, and
//! repeats are written sorted by seed, so a config plus a seed reproduces
//! every CSV byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    increment_variance_probe, run_mlsmc, single_level_estimate, Functional, IncrementVariance, MultilevelEstimate,
    SingleLevelEstimate,
};
use crate::fem::v_norm_difference;
use crate::planner::{
    extension_ladder, fit_rate_loglog, implied_epsilon, k_l, LevelSchedule, LogLogFit, PlannerReport, RateEstimates,
    VarianceModel,
};
use crate::problem::{ForwardModel, ProblemConfig};
use crate::quadrature::posterior_mean_g;
use crate::rng::{tag, Seed};
use crate::smc::{map_indexed, smc_sweep, MutationConfig, SweepPlan};
use crate::stats;

/// Experiment budgets. The desk defaults run in minutes on one core; the
/// published scale restores the full-size study budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub ground_truth_level: usize,
    pub ground_truth_repeats: usize,
    pub ground_truth_n: usize,
    /// Largest `L` of the MSE-vs-cost ladder.
    pub ladder_max: usize,
    /// `N_0` of the `L = 0` schedule the ladder is extended from.
    pub ladder_base_n: usize,
    pub mse_repeats: usize,
    /// Levels `1..=rate_levels` for the FEM and weight probes.
    pub rate_levels: usize,
    /// Reference level for the point-value bias probe.
    pub bias_reference_level: usize,
    pub weight_draws: usize,
    /// The variance probe runs `L = probe_levels` with `N_l = 2 N_{l+1}`.
    pub probe_levels: usize,
    pub probe_final_n: usize,
    pub probe_repeats: usize,
    pub pilot_n: usize,
    pub pilot_repeats: usize,
    pub trace_level: usize,
    pub trace_n: usize,
    pub trace_repeats: usize,
}

impl Scale {
    pub fn desk() -> Self {
        Scale {
            ground_truth_level: 9,
            ground_truth_repeats: 50,
            ground_truth_n: 1000,
            ladder_max: 5,
            ladder_base_n: 100,
            mse_repeats: 50,
            rate_levels: 8,
            bias_reference_level: 14,
            weight_draws: 1000,
            probe_levels: 5,
            probe_final_n: 500,
            probe_repeats: 50,
            pilot_n: 400,
            pilot_repeats: 30,
            trace_level: 5,
            trace_n: 500,
            trace_repeats: 5,
        }
    }

    pub fn published() -> Self {
        Scale {
            ground_truth_level: 13,
            ground_truth_repeats: 100,
            ground_truth_n: 1000,
            ladder_base_n: 1000,
            mse_repeats: 100,
            probe_final_n: 1000,
            probe_repeats: 100,
            trace_n: 1000,
            ..Scale::desk()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSource {
    /// `β = 2`, the piecewise-linear strong rate.
    #[default]
    Theory,
    /// Slope of the empirical increment variances.
    Fitted,
}

/// One row of a `(level, h, value)` probe table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub level: usize,
    pub h: f64,
    pub value: f64,
}

fn fit_rows(rows: &[ProbeRow]) -> Result<LogLogFit> {
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let v: Vec<f64> = rows.iter().map(|r| r.value).collect();
    fit_rate_loglog(&h, &v)
}

/// `‖p_l − p_{l-1}‖²_V` at `u` for `l = 1..=max_level`, against `h_l`.
pub fn v_norm_table(model: &ForwardModel, u: &[f64], max_level: usize) -> Result<Vec<ProbeRow>> {
    let mut prev = model.operator(0)?.solve(u)?;
    let mut rows = Vec::with_capacity(max_level);
    for l in 1..=max_level {
        let sol = model.operator(l)?.solve(u)?;
        let d = v_norm_difference(&prev, &sol)?;
        rows.push(ProbeRow { level: l, h: model.width(l), value: d.squared() });
        prev = sol;
    }
    Ok(rows)
}

/// `|g_l(u) − g_ref(u)|` for `l = 1..=max_level`.
pub fn bias_table(model: &ForwardModel, u: &[f64], max_level: usize, reference_level: usize) -> Result<Vec<ProbeRow>> {
    if reference_level <= max_level {
        return Err(Error::Config("bias reference level must exceed the probed levels".into()));
    }
    let g_ref = model.forward_observe(u, reference_level)?.g;
    (1..=max_level)
        .map(|l| Ok(ProbeRow { level: l, h: model.width(l), value: (model.forward_observe(u, l)?.g - g_ref).abs() }))
        .collect()
}

/// `max_i |log G_{l-1}(u^i)|` over prior draws, for `l = 1..=max_level`.
pub fn weight_bound_table(model: &ForwardModel, n_draws: usize, max_level: usize, seed: Seed) -> Result<Vec<ProbeRow>> {
    let mut rng = seed.derive(tag::PRIOR_DRAWS).rng();
    let draws: Vec<Vec<f64>> = (0..n_draws).map(|_| model.sample_prior(&mut rng)).collect();
    let mut rows = Vec::with_capacity(max_level);
    for l in 1..=max_level {
        let per = map_indexed(n_draws, |i| model.log_incremental_weight(&draws[i], l));
        let vals = per.into_iter().collect::<Result<Vec<_>>>()?;
        let m = vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        rows.push(ProbeRow { level: l, h: model.width(l), value: m });
    }
    Ok(rows)
}

/// `N_l = 2 N_{l+1}` with `N_L = final_n`; returns `N_0..N_{L-1}`, the
/// clouds an estimate at level `L` uses.
pub fn doubling_sizes(levels: usize, final_n: usize) -> Vec<usize> {
    (0..levels).map(|l| final_n << (levels - l)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProbeReport {
    pub true_u: Vec<f64>,
    pub rates: RateEstimates,
    pub v_norm: Vec<ProbeRow>,
    pub bias: Vec<ProbeRow>,
    pub weight_bound: Vec<ProbeRow>,
    pub weight_bound_fit: LogLogFit,
    pub variance_probe: Vec<IncrementVariance>,
}

/// FEM rate `β` (squared V-norm differences), weak rate `α` (point-value
/// bias), the incremental-weight decay and the increment-variance probe.
pub fn run_rate_probe(model: &ForwardModel, true_u: &[f64], scale: &Scale, seed: Seed) -> Result<RateProbeReport> {
    let v_norm = v_norm_table(model, true_u, scale.rate_levels)?;
    let beta_fit = fit_rows(&v_norm)?;
    let bias = bias_table(model, true_u, scale.rate_levels, scale.bias_reference_level)?;
    let alpha_fit = fit_rows(&bias)?;
    let weight_bound = weight_bound_table(model, scale.weight_draws, scale.rate_levels, seed)?;
    let weight_bound_fit = fit_rows(&weight_bound)?;
    let sizes = doubling_sizes(scale.probe_levels, scale.probe_final_n);
    let variance_probe = increment_variance_probe(
        model,
        &sizes,
        scale.probe_repeats,
        MutationConfig::default(),
        &Functional::PointValue,
        seed,
    )?;
    let variance_fit = fit_rate_loglog(
        &variance_probe.iter().map(|v| v.h).collect::<Vec<_>>(),
        &variance_probe.iter().map(|v| v.variance).collect::<Vec<_>>(),
    )
    .ok();
    let rates = RateEstimates {
        alpha: alpha_fit.slope,
        beta: beta_fit.slope,
        zeta: 1.0,
        bias_constant: alpha_fit.intercept.exp2(),
        alpha_fit: Some(alpha_fit),
        beta_fit: Some(beta_fit),
        variance_fit,
    };
    Ok(RateProbeReport { true_u: true_u.to_vec(), rates, v_norm, bias, weight_bound, weight_bound_fit, variance_probe })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCheck {
    pub level: usize,
    pub bias: f64,
    /// `std_error / bias`; must be below 1/4.
    pub ratio: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthSource {
    /// Mean of repeated single-level SMC runs at the reference level.
    Smc,
    /// Tensor Gauss–Legendre quadrature at the reference level.
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub level: usize,
    /// The reference value used for MSE computations.
    pub value: f64,
    /// Error estimate of `value` as an approximation of `η_∞(g)`.
    pub value_error: f64,
    pub source: TruthSource,
    pub n: usize,
    pub repeats: usize,
    pub smc_mean: f64,
    pub smc_std_error: f64,
    pub seeds: Vec<u64>,
    pub estimates: Vec<f64>,
    pub cost_units: u64,
    /// `η_level(g)` by tensor Gauss–Legendre (`K ≤ 2` only).
    pub quadrature: Option<f64>,
    /// `|Q_128 − Q_64|` plus the Richardson estimate of the level bias.
    pub quadrature_error: Option<f64>,
    /// Whether the SMC mean is within 3 standard errors of the quadrature.
    pub smc_agrees_with_quadrature: Option<bool>,
    pub bias_check: BiasCheck,
    pub forced: bool,
}

pub const GROUND_TRUTH_QUADRATURE_POINTS: usize = 128;

/// Quadrature value of `η_level(g)` and an error estimate against `η_∞(g)`:
/// rule error `|Q_n − Q_{n/2}|` plus `|Q_level − Q_{level-1}| / (2^α − 1)`.
pub fn quadrature_truth(model: &ForwardModel, level: usize, n: usize, alpha: f64) -> Result<(f64, f64)> {
    let m = model.fresh();
    let q = posterior_mean_g(&m, level, n)?;
    let q_half = posterior_mean_g(&m, level, n / 2)?;
    let q_coarse = posterior_mean_g(&m, level - 1, n)?;
    let level_error = (q - q_coarse).abs() / (alpha.exp2() - 1.0);
    Ok((q, (q - q_half).abs() + level_error))
}

/// Reference value for the MSE study. Runs the single-level SMC recipe at
/// the reference level; for `K ≤ 2` the quadrature value at the same level
/// is used instead because it is far more accurate, and the SMC mean is kept
/// as a cross-check. Fails unless the reference error is below a quarter of
/// the level-5 point-value bias (or `force` is set).
pub fn run_ground_truth(
    model: &ForwardModel,
    true_u: &[f64],
    scale: &Scale,
    repeats: usize,
    seed: Seed,
    force: bool,
) -> Result<GroundTruth> {
    let level = scale.ground_truth_level;
    if level <= scale.ladder_max {
        return Err(Error::Config(format!("ground-truth level {level} must exceed every benchmark L")));
    }
    let key = seed.derive(tag::GROUND_TRUTH);
    let runs = map_indexed(repeats, |r| {
        single_level_estimate(
            &model.fresh(),
            level,
            scale.ground_truth_n,
            MutationConfig::default(),
            &Functional::PointValue,
            key.derive(r as u64),
        )
    });
    let mut runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|e| e.seed);
    let estimates: Vec<f64> = runs.iter().map(|e| e.y_hat).collect();
    let smc_mean = stats::mean(&estimates);
    let smc_std_error = stats::std_error(&estimates);
    let check_level = 5.min(scale.rate_levels);
    let bias_rows = bias_table(model, true_u, scale.rate_levels, scale.bias_reference_level)?;
    let alpha = fit_rows(&bias_rows).map(|f| f.slope).unwrap_or(1.0).max(0.5);
    let (quadrature, quadrature_error) = if model.dim() <= 2 {
        let (q, e) = quadrature_truth(model, level, GROUND_TRUTH_QUADRATURE_POINTS, alpha)?;
        (Some(q), Some(e))
    } else {
        (None, None)
    };
    let (value, value_error, source) = match (quadrature, quadrature_error) {
        (Some(q), Some(e)) => (q, e, TruthSource::Quadrature),
        _ => (smc_mean, smc_std_error, TruthSource::Smc),
    };
    let bias = bias_rows[check_level - 1].value;
    let ratio = value_error / bias;
    let bias_check = BiasCheck { level: check_level, bias, ratio, ok: ratio < 0.25 };
    if !bias_check.ok && !force {
        return Err(Error::GroundTruth(format!(
            "reference error {value_error:.3e} is not below a quarter of the level-{check_level} bias {bias:.3e}; \
             rerun with --force to accept"
        )));
    }
    let forced = force && !bias_check.ok;
    Ok(GroundTruth {
        level,
        value,
        value_error,
        source,
        n: scale.ground_truth_n,
        repeats,
        smc_mean,
        smc_std_error,
        seeds: runs.iter().map(|e| e.seed).collect(),
        estimates,
        cost_units: runs.iter().map(|e| e.cost_units).sum(),
        quadrature,
        quadrature_error,
        smc_agrees_with_quadrature: quadrature.map(|q| (smc_mean - q).abs() <= 3.0 * smc_std_error),
        bias_check,
        forced,
    })
}

/// Per-particle variance constants from a cheap pilot at levels `0..=2`:
/// `V̂_0 = N·Var(term 0)`, `V̂_l = N·Var(term l)`, `v_const = mean V̂_l/h_l^β`.
pub fn pilot_variance_model(
    model: &ForwardModel,
    n: usize,
    repeats: usize,
    beta: f64,
    seed: Seed,
) -> Result<VarianceModel> {
    let key = seed.derive(tag::PILOT);
    let runs = map_indexed(repeats, |r| {
        run_mlsmc(&model.fresh(), 2, &[n, n], MutationConfig::default(), &Functional::PointValue, key.derive(r as u64))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let var = |l: usize| stats::variance(&runs.iter().map(|e| e.increments[l]).collect::<Vec<_>>()) * n as f64;
    let v0 = var(0);
    let v_const = 0.5 * (1..=2).map(|l| var(l) / model.width(l).powf(beta)).sum::<f64>();
    Ok(VarianceModel { v0, v_const })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub algorithm: String,
    #[serde(rename = "L")]
    pub level: usize,
    pub cost_units: f64,
    pub mse: f64,
    pub stderr: f64,
    pub n_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub ground_truth: f64,
    pub rows: Vec<MseRow>,
    pub mlsmc_fit: LogLogFit,
    pub smc_fit: LogLogFit,
    pub schedules: Vec<PlannerReport>,
    pub single_level_sizes: Vec<usize>,
    pub variance_model: VarianceModel,
    #[serde(skip)]
    pub estimates: Vec<MultilevelEstimate>,
    #[serde(skip)]
    pub single_level: Vec<SingleLevelEstimate>,
}

fn mse_row(algorithm: &str, level: usize, truth: f64, est: &[(f64, u64)]) -> MseRow {
    let sq: Vec<f64> = est.iter().map(|(y, _)| (y - truth).powi(2)).collect();
    let cost: Vec<f64> = est.iter().map(|(_, c)| *c as f64).collect();
    MseRow {
        algorithm: algorithm.into(),
        level,
        cost_units: stats::mean(&cost),
        mse: stats::mean(&sq),
        stderr: stats::std_error(&sq),
        n_repeats: est.len(),
    }
}

/// Per-particle cost of a single-level sweep to `level`, from a small pilot.
pub fn single_level_unit_cost(model: &ForwardModel, level: usize, seed: Seed) -> Result<f64> {
    const PILOT_N: usize = 200;
    let m = model.fresh();
    let out = smc_sweep(&m, &SweepPlan::new(vec![PILOT_N; level + 1], false), seed.derive(tag::PILOT))?;
    Ok(out.cost_units as f64 / PILOT_N as f64)
}

/// MLSMC with extension-rule schedules against cost-matched single-level
/// SMC, for `L = 0..=ladder_max`.
pub fn run_mse_vs_cost(
    model: &ForwardModel,
    truth: f64,
    rates: &RateEstimates,
    scale: &Scale,
    repeats: usize,
    seed: Seed,
) -> Result<MseReport> {
    let ladder = extension_ladder(scale.ladder_base_n, scale.ladder_max, rates);
    let variance_model = pilot_variance_model(model, scale.pilot_n, scale.pilot_repeats, rates.beta, seed)?;
    let h0 = model.width(0);
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    let mut single_level = Vec::new();
    let mut schedules = Vec::new();
    let mut single_level_sizes = Vec::new();
    for (level, sizes) in ladder.iter().enumerate() {
        let schedule = LevelSchedule {
            level,
            sizes: sizes.clone(),
            epsilon: implied_epsilon(sizes, h0, rates.beta, &variance_model),
            k_l: k_l(level, h0, rates.beta, rates.zeta),
        };
        schedules.push(PlannerReport::new(&schedule, h0, rates, &variance_model));
        let key = seed.derive(tag::MULTILEVEL).derive(level as u64);
        let ml = map_indexed(repeats, |r| {
            run_mlsmc(
                &model.fresh(),
                level,
                sizes,
                MutationConfig::default(),
                &Functional::PointValue,
                key.derive(r as u64),
            )
        });
        let mut ml = ml.into_iter().collect::<Result<Vec<_>>>()?;
        ml.sort_by_key(|e| e.seed);
        let ml_cost = stats::mean(&ml.iter().map(|e| e.cost_units as f64).collect::<Vec<_>>());
        let unit = single_level_unit_cost(model, level, seed.derive(tag::SINGLE_LEVEL).derive(level as u64))?;
        let n_single = ((ml_cost / unit).floor() as usize).max(1);
        single_level_sizes.push(n_single);
        let key = seed.derive(tag::SINGLE_LEVEL).derive(level as u64);
        let sl = map_indexed(repeats, |r| {
            single_level_estimate(
                &model.fresh(),
                level,
                n_single,
                MutationConfig::default(),
                &Functional::PointValue,
                key.derive(r as u64),
            )
        });
        let mut sl = sl.into_iter().collect::<Result<Vec<_>>>()?;
        sl.sort_by_key(|e| e.seed);
        rows.push(mse_row("mlsmc", level, truth, &ml.iter().map(|e| (e.y_hat, e.cost_units)).collect::<Vec<_>>()));
        rows.push(mse_row("smc", level, truth, &sl.iter().map(|e| (e.y_hat, e.cost_units)).collect::<Vec<_>>()));
        estimates.extend(ml);
        single_level.extend(sl);
    }
    let fit_for = |alg: &str| {
        let pts: Vec<&MseRow> = rows.iter().filter(|r| r.algorithm == alg).collect();
        fit_rate_loglog(
            &pts.iter().map(|r| r.cost_units).collect::<Vec<_>>(),
            &pts.iter().map(|r| r.mse).collect::<Vec<_>>(),
        )
    };
    let mlsmc_fit = fit_for("mlsmc")?;
    let smc_fit = fit_for("smc")?;
    Ok(MseReport {
        ground_truth: truth,
        rows,
        mlsmc_fit,
        smc_fit,
        schedules,
        single_level_sizes,
        variance_model,
        estimates,
        single_level,
    })
}

/// Mean Metropolis acceptance per level of a constant-size sweep to
/// `scale.trace_level`, averaged over repeats.
pub fn run_acceptance_trace(
    model: &ForwardModel,
    scale: &Scale,
    repeats: usize,
    seed: Seed,
) -> Result<Vec<(usize, f64)>> {
    if scale.trace_level < 1 {
        return Err(Error::Config("acceptance trace needs L ≥ 1".into()));
    }
    let key = seed.derive(tag::SINGLE_LEVEL).derive(u64::MAX);
    let plan = SweepPlan::new(vec![scale.trace_n; scale.trace_level + 1], false);
    let mut acc = vec![Vec::with_capacity(repeats); scale.trace_level];
    for r in 0..repeats {
        let out = smc_sweep(&model.fresh(), &plan, key.derive(r as u64))?;
        for (level, a) in out.acceptance_rates() {
            acc[level - 1].push(a);
        }
    }
    Ok(acc.iter().enumerate().map(|(i, a)| (i + 1, stats::mean(a))).collect())
}

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    RateProbe,
    GroundTruth,
    MseVsCost,
    AcceptanceTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub mode: Mode,
    pub seed: u64,
    /// Overrides the mode's repeat count from [`Scale`].
    pub repeats: Option<usize>,
    pub out: PathBuf,
    pub scale: Scale,
    pub beta_source: BetaSource,
    pub force: bool,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemConfig, mode: Mode, seed: u64, out: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            problem,
            mode,
            seed,
            repeats: None,
            out: out.into(),
            scale: Scale::desk(),
            beta_source: BetaSource::Theory,
            force: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == Some(0) {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        self.problem.validate()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn mse_csv(rows: &[MseRow]) -> String {
    let mut s = String::from("algorithm,L,cost_units,mse,stderr,n_repeats\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{},{}", r.algorithm, r.level, r.cost_units, r.mse, r.stderr, r.n_repeats).unwrap();
    }
    s
}

pub fn acceptance_csv(rows: &[(usize, f64)]) -> String {
    let mut s = String::from("level,mean_acceptance\n");
    for (l, a) in rows {
        writeln!(s, "{l},{a}").unwrap();
    }
    s
}

pub fn estimates_jsonl(estimates: &[MultilevelEstimate]) -> String {
    estimates.iter().map(|e| e.to_json_line() + "\n").collect()
}

/// Summary of a finished run, for the command-line tool to print.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

fn load_or_compute_ground_truth(cfg: &ExperimentConfig, model: &ForwardModel, true_u: &[f64]) -> Result<GroundTruth> {
    let path = cfg.out.join("ground_truth.json");
    if path.exists() {
        let gt: GroundTruth = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if gt.level > cfg.scale.ladder_max {
            return Ok(gt);
        }
    }
    let repeats = cfg.scale.ground_truth_repeats;
    let gt = run_ground_truth(model, true_u, &cfg.scale, repeats, Seed::new(cfg.seed), cfg.force)?;
    write_json(&path, &gt)?;
    Ok(gt)
}

fn rates_for(cfg: &ExperimentConfig, model: &ForwardModel, true_u: &[f64]) -> Result<RateEstimates> {
    match cfg.beta_source {
        BetaSource::Theory => Ok(RateEstimates::theory()),
        BetaSource::Fitted => {
            let path = cfg.out.join("rates.json");
            let report: RateProbeReport = if path.exists() {
                serde_json::from_str(&fs::read_to_string(&path)?)?
            } else {
                let r = run_rate_probe(model, true_u, &cfg.scale, Seed::new(cfg.seed))?;
                write_json(&path, &r)?;
                r
            };
            let beta = report
                .rates
                .variance_fit
                .map(|f| f.slope)
                .ok_or_else(|| Error::Fit("rates.json has no variance fit".into()))?;
            RateEstimates::new(1.0, beta, 1.0)
        }
    }
}

/// Runs one experiment and writes its outputs into `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let model = cfg.problem.build()?;
    let true_u = cfg.problem.true_parameter();
    let seed = Seed::new(cfg.seed);
    let mut files = Vec::new();
    let mut lines = Vec::new();
    match cfg.mode {
        Mode::RateProbe => {
            let scale = Scale { probe_repeats: cfg.repeats.unwrap_or(cfg.scale.probe_repeats), ..cfg.scale.clone() };
            let report = run_rate_probe(&model, &true_u, &scale, seed)?;
            let path = cfg.out.join("rates.json");
            write_json(&path, &report)?;
            files.push(path);
            lines.push(format!("beta (squared V-norm) = {:.4}", report.rates.beta));
            lines.push(format!("alpha (point value)   = {:.4}", report.rates.alpha));
            lines.push(format!("max|log G| slope      = {:.4}", report.weight_bound_fit.slope));
            if let Some(f) = report.rates.variance_fit {
                lines.push(format!("increment variance slope = {:.4}", f.slope));
            }
        }
        Mode::GroundTruth => {
            let repeats = cfg.repeats.unwrap_or(cfg.scale.ground_truth_repeats);
            let gt = run_ground_truth(&model, &true_u, &cfg.scale, repeats, seed, cfg.force)?;
            let path = cfg.out.join("ground_truth.json");
            write_json(&path, &gt)?;
            files.push(path);
            lines.push(format!("SMC eta_{}(g) = {} ± {}", gt.level, gt.smc_mean, gt.smc_std_error));
            if let Some(q) = gt.quadrature {
                lines.push(format!("quadrature     = {q}"));
            }
            lines.push(format!("reference ({:?}) = {} ± {:.2e}", gt.source, gt.value, gt.value_error));
        }
        Mode::MseVsCost => {
            let gt = load_or_compute_ground_truth(cfg, &model, &true_u)?;
            let rates = rates_for(cfg, &model, &true_u)?;
            let repeats = cfg.repeats.unwrap_or(cfg.scale.mse_repeats);
            let report = run_mse_vs_cost(&model, gt.value, &rates, &cfg.scale, repeats, seed)?;
            let csv = cfg.out.join("mse_vs_cost.csv");
            fs::write(&csv, mse_csv(&report.rows))?;
            let jsonl = cfg.out.join("estimates.jsonl");
            fs::write(&jsonl, estimates_jsonl(&report.estimates))?;
            let plan = cfg.out.join("planner.json");
            write_json(&plan, &report.schedules)?;
            files.extend([csv, jsonl, plan]);
            lines.push(format!("MLSMC slope = {:.4}", report.mlsmc_fit.slope));
            lines.push(format!("SMC slope   = {:.4}", report.smc_fit.slope));
        }
        Mode::AcceptanceTrace => {
            let repeats = cfg.repeats.unwrap_or(cfg.scale.trace_repeats);
            let trace = run_acceptance_trace(&model, &cfg.scale, repeats, seed)?;
            let path = cfg.out.join("acceptance.csv");
            fs::write(&path, acceptance_csv(&trace))?;
            files.push(path);
            for (l, a) in trace {
                lines.push(format!("level {l}: {a:.3}"));
            }
        }
    }
    Ok(RunSummary { files, lines })
}
