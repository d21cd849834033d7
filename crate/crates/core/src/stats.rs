//! Small numerical helpers shared by the samplers and the harness.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<KahanSum>().value()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn max_finite(xs: &[f64]) -> f64 {
    xs.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max)
}

/// `log(sum(exp(xs)))`, `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = max_finite(xs);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + sum(xs.iter().map(|x| (x - m).exp())).ln()
}

/// Self-normalized weighted mean of `values` under log-weights.
pub fn weighted_mean(log_weights: &[f64], values: &[f64]) -> Option<f64> {
    let m = max_finite(log_weights);
    if m == f64::NEG_INFINITY {
        return None;
    }
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for (lw, v) in log_weights.iter().zip(values) {
        let w = (lw - m).exp();
        num.add(w * v);
        den.add(w);
    }
    Some(num.value() / den.value())
}

/// Effective sample size of a log-weight vector.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let m = max_finite(log_weights);
    if m == f64::NEG_INFINITY {
        return 0.0;
    }
    let w: Vec<f64> = log_weights.iter().map(|lw| (lw - m).exp()).collect();
    let s = sum(w.iter().copied());
    let s2 = sum(w.iter().map(|x| x * x));
    s * s / s2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut xs = vec![1e16];
        xs.extend(std::iter::repeat_n(1.0, 1000));
        xs.push(-1e16);
        assert_eq!(sum(xs), 1000.0);
    }

    #[test]
    fn log_sum_exp_is_shift_stable() {
        let a = log_sum_exp(&[1000.0, 1000.0]);
        assert!((a - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }

    #[test]
    fn weighted_mean_of_constant() {
        let lw = [0.1, -3.0, 2.0];
        assert!((weighted_mean(&lw, &[4.0; 3]).unwrap() - 4.0).abs() < 1e-15);
        assert!(weighted_mean(&[f64::NEG_INFINITY], &[1.0]).is_none());
        assert!((effective_sample_size(&[0.0; 8]) - 8.0).abs() < 1e-12);
    }
}
