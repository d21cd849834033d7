//! Rate fitting, level selection and particle allocation.
//!
//! With weak rate `α`, variance rate `β` and cost rate `ζ`, the allocation
//! `N_l ∝ ε^{-2} h_l^{(β+ζ)/2} K_L`, `K_L = Σ_l h_l^{(β-ζ)/2}`, balances
//! variance against cost across levels; the level count comes from the bias
//! model `C h_L^α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `log₂ q` against `log₂ h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope (`NaN` for an exact two-parameter fit).
    pub slope_std_error: f64,
    pub n_points: usize,
}

impl LogLogFit {
    /// Fitted `q(h) = 2^intercept · h^slope`.
    pub fn predict(&self, h: f64) -> f64 {
        self.intercept.exp2() * h.powf(self.slope)
    }
}

pub const MIN_FIT_POINTS: usize = 4;

pub fn fit_rate_loglog(h_values: &[f64], quantities: &[f64]) -> Result<LogLogFit> {
    if h_values.len() != quantities.len() {
        return Err(Error::Dimension { expected: h_values.len(), got: quantities.len() });
    }
    if h_values.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!("need at least {MIN_FIT_POINTS} points, got {}", h_values.len())));
    }
    if let Some(q) = h_values.iter().chain(quantities).find(|q| !(**q > 0.0) || !q.is_finite()) {
        return Err(Error::Fit(format!("log-log fit needs positive finite values, got {q}")));
    }
    let x: Vec<f64> = h_values.iter().map(|h| h.log2()).collect();
    let y: Vec<f64> = quantities.iter().map(|q| q.log2()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all h values are equal".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_std_error = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(LogLogFit { slope, intercept, r2, slope_std_error, n_points: x.len() })
}

/// Convergence and cost rates used for planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimates {
    pub alpha: f64,
    pub beta: f64,
    pub zeta: f64,
    /// Bias model `|E[g_l − g]| ≈ bias_constant · h_l^α`.
    pub bias_constant: f64,
    pub alpha_fit: Option<LogLogFit>,
    pub beta_fit: Option<LogLogFit>,
    /// Fit of the empirical increment variances, when probed.
    pub variance_fit: Option<LogLogFit>,
}

impl RateEstimates {
    pub fn new(alpha: f64, beta: f64, zeta: f64) -> Result<Self> {
        let r = RateEstimates {
            alpha,
            beta,
            zeta,
            bias_constant: 1.0,
            alpha_fit: None,
            beta_fit: None,
            variance_fit: None,
        };
        r.validate()?;
        Ok(r)
    }

    /// `α = 1`, `β = 2`, `ζ = 1`: piecewise-linear elements in one dimension.
    pub fn theory() -> Self {
        RateEstimates::new(1.0, 2.0, 1.0).expect("positive")
    }

    pub fn validate(&self) -> Result<()> {
        if [self.alpha, self.beta, self.zeta].iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Fit(format!(
                "rates must be positive: alpha={}, beta={}, zeta={}",
                self.alpha, self.beta, self.zeta
            )));
        }
        Ok(())
    }
}

/// Smallest `L` whose modelled bias `C·M^{-αL}` is at most
/// `bias_fraction · ε`; equals `⌈log(C/ε) / (α log M)⌉` (floored at 0).
/// `C` is the bias constant expressed per coarse-level step.
pub fn choose_level_count(
    epsilon: f64,
    alpha: f64,
    m: u32,
    bias_constant: f64,
    bias_fraction: f64,
    cap: usize,
) -> Result<usize> {
    if !(epsilon > 0.0) || !(alpha > 0.0) || m < 2 || !(bias_constant > 0.0) || !(bias_fraction > 0.0) {
        return Err(Error::Config("choose_level_count needs ε, α, C, fraction > 0 and M ≥ 2".into()));
    }
    let target = bias_fraction * epsilon;
    let raw = (bias_constant / target).ln() / (alpha * (m as f64).ln());
    // guard against ⌈5 + 1e-15⌉ = 6 from rounding in the logarithms
    let mut level = (raw - 1e-9).ceil().max(0.0) as usize;
    let bias = |l: usize| bias_constant * (m as f64).powf(-alpha * l as f64);
    while bias(level) > target * (1.0 + 1e-9) {
        level += 1;
    }
    if level > cap {
        return Err(Error::LevelCap { needed: level, cap });
    }
    Ok(level)
}

/// Per-particle variance model `V̂_0 = v0`, `V̂_l = v_const · h_l^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceModel {
    pub v0: f64,
    pub v_const: f64,
}

impl VarianceModel {
    pub fn at(&self, level: usize, h: f64, beta: f64) -> f64 {
        if level == 0 {
            self.v0
        } else {
            self.v_const * h.powf(beta)
        }
    }
}

/// Particle numbers `N_0..N_L` for one tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule {
    #[serde(rename = "L")]
    pub level: usize,
    pub sizes: Vec<usize>,
    pub epsilon: f64,
    #[serde(rename = "K_L")]
    pub k_l: f64,
}

impl LevelSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() != self.level + 1 {
            return Err(Error::Config(format!("L = {} but {} sizes", self.level, self.sizes.len())));
        }
        if self.sizes.contains(&0) || self.sizes.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config(format!("sizes must be positive and nonincreasing: {:?}", self.sizes)));
        }
        Ok(())
    }

    /// `Σ_l N_l h_l^{-ζ}` with `h_l = h0 · 2^{-l}`.
    pub fn nominal_cost(&self, h0: f64, zeta: f64) -> f64 {
        self.sizes.iter().enumerate().map(|(l, &n)| n as f64 * level_width(h0, l).powf(-zeta)).sum()
    }

    /// `Σ_l V̂_l / N_l`.
    pub fn predicted_variance(&self, h0: f64, beta: f64, model: &VarianceModel) -> f64 {
        self.sizes.iter().enumerate().map(|(l, &n)| model.at(l, level_width(h0, l), beta) / n as f64).sum()
    }
}

/// `h_l = h0 · 2^{-l}`.
pub fn level_width(h0: f64, level: usize) -> f64 {
    h0 * (-(level as f64)).exp2()
}

/// `K_L = Σ_{l=0}^{L} h_l^{(β-ζ)/2}`.
pub fn k_l(level: usize, h0: f64, beta: f64, zeta: f64) -> f64 {
    (0..=level).map(|l| level_width(h0, l).powf(0.5 * (beta - zeta))).sum()
}

/// Proportionality constant making `Σ V̂_l/N_l = ε²/2` before rounding.
pub fn calibration_constant(level: usize, h0: f64, rates: &RateEstimates, model: &VarianceModel) -> f64 {
    let e = 0.5 * (rates.beta + rates.zeta);
    let s: f64 = (0..=level).map(|l| model.at(l, level_width(h0, l), rates.beta) * level_width(h0, l).powf(-e)).sum();
    2.0 * s / k_l(level, h0, rates.beta, rates.zeta)
}

/// `N_l = max(n_min, ⌈c ε^{-2} h_l^{(β+ζ)/2} K_L⌉)`.
pub fn allocate_sizes(
    level: usize,
    epsilon: f64,
    h0: f64,
    rates: &RateEstimates,
    model: &VarianceModel,
    n_min: usize,
) -> Result<LevelSchedule> {
    rates.validate()?;
    if n_min < 100 {
        return Err(Error::Config(format!("n_min must be at least 100, got {n_min}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let kl = k_l(level, h0, rates.beta, rates.zeta);
    let c = calibration_constant(level, h0, rates, model);
    let e = 0.5 * (rates.beta + rates.zeta);
    let sizes = (0..=level)
        .map(|l| {
            let raw = c * epsilon.powi(-2) * level_width(h0, l).powf(e) * kl;
            (raw.ceil() as usize).max(n_min)
        })
        .collect();
    Ok(LevelSchedule { level, sizes, epsilon, k_l: kl })
}

/// Refines `L → L+1`: `N_l' = ⌈2^{2α} N_l⌉`, `N_{L+1}' = ⌈2^{-(β+ζ)/2} N_L'⌉`.
pub fn extend_schedule(sizes: &[usize], rates: &RateEstimates) -> Vec<usize> {
    let grow = (2.0 * rates.alpha).exp2();
    let mut out: Vec<usize> = sizes.iter().map(|&n| (n as f64 * grow).ceil() as usize).collect();
    let last = *out.last().expect("nonempty schedule") as f64;
    out.push(((-0.5 * (rates.beta + rates.zeta)).exp2() * last).ceil().max(1.0) as usize);
    out
}

/// Schedules for `L = 0..=l_max` obtained by repeated extension of `[n0]`.
pub fn extension_ladder(n0: usize, l_max: usize, rates: &RateEstimates) -> Vec<Vec<usize>> {
    let mut ladder = vec![vec![n0]];
    for _ in 0..l_max {
        let next = extend_schedule(ladder.last().expect("nonempty"), rates);
        ladder.push(next);
    }
    ladder
}

/// Ratio of the cross-level term of the variance bound,
/// `Σ_l (h_l^β/N_l)^{1/2} Σ_{q>l} h_q^{β/2}/N_q`, to `Σ_l h_l^β/N_l`.
pub fn cross_term_ratio(sizes: &[usize], h0: f64, beta: f64) -> f64 {
    let n = sizes.len();
    let term = |l: usize| level_width(h0, l).powf(beta) / sizes[l] as f64;
    let tail: Vec<f64> = {
        // tail[l] = Σ_{q>l} h_q^{β/2}/N_q, accumulated from the finest level
        let mut t = vec![0.0; n];
        for l in (0..n.saturating_sub(1)).rev() {
            t[l] = t[l + 1] + level_width(h0, l + 1).powf(0.5 * beta) / sizes[l + 1] as f64;
        }
        t
    };
    let cross: f64 = (0..n).map(|l| term(l).sqrt() * tail[l]).sum();
    let diag: f64 = (0..n).map(term).sum();
    cross / diag
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossTermCheck {
    pub ratio: f64,
    pub ok: bool,
}

pub fn cross_term_check(schedule: &LevelSchedule, h0: f64, rates: &RateEstimates) -> Result<CrossTermCheck> {
    schedule.validate()?;
    let ratio = cross_term_ratio(&schedule.sizes, h0, rates.beta);
    Ok(CrossTermCheck { ratio, ok: ratio <= 1.0 })
}

/// Planner output in its JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerReport {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub zeta: f64,
    #[serde(rename = "L")]
    pub level: usize,
    pub sizes: Vec<usize>,
    #[serde(rename = "K_L")]
    pub k_l: f64,
    pub predicted_variance: f64,
    pub cross_term_ratio: f64,
}

impl PlannerReport {
    pub fn new(schedule: &LevelSchedule, h0: f64, rates: &RateEstimates, model: &VarianceModel) -> Self {
        PlannerReport {
            epsilon: schedule.epsilon,
            alpha: rates.alpha,
            beta: rates.beta,
            zeta: rates.zeta,
            level: schedule.level,
            sizes: schedule.sizes.clone(),
            k_l: schedule.k_l,
            predicted_variance: schedule.predicted_variance(h0, rates.beta, model),
            cross_term_ratio: cross_term_ratio(&schedule.sizes, h0, rates.beta),
        }
    }
}

/// Tolerance met by a given schedule: `ε = (2 Σ V̂_l/N_l)^{1/2}`.
pub fn implied_epsilon(sizes: &[usize], h0: f64, beta: f64, model: &VarianceModel) -> f64 {
    let v: f64 = sizes.iter().enumerate().map(|(l, &n)| model.at(l, level_width(h0, l), beta) / n as f64).sum();
    (2.0 * v).sqrt()
}
