//! Statistical estimators tying simulation to theory.
//!
//! * [`SummaryStats`] — single-pass moments that merge associatively, so
//!   replica shards can be reduced in any order.
//! * [`perpetuity_test`] — the sign test behind the random-series
//!   convergence criterion: a product-of-factors series converges iff the
//!   expected log factor is negative.
//! * [`ks_two_sample`] / [`ks_one_sample`] — Kolmogorov-Smirnov tests with
//!   the asymptotic p-value.
//! * [`tail_fit`] — least-squares fit of the log empirical survival
//!   function, for exponential extinction tails.

use crate::error::{Error, Result};

/// Mergeable running statistics (count, mean, variance accumulator,
/// extremes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for SummaryStats {
    fn default() -> Self {
        Self::new()
    }
}

impl SummaryStats {
    pub fn new() -> Self {
        SummaryStats {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut stats = Self::new();
        for &x in values {
            stats.push(x);
        }
        stats
    }

    /// Parallel combination; associative and commutative up to floating
    /// rounding, with the empty statistics as identity.
    pub fn merge(self, other: SummaryStats) -> SummaryStats {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 =
            self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        SummaryStats {
            count,
            mean,
            m2,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    /// Unbiased sample variance; 0 for fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.count < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Outcome of the perpetuity sign test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Converges => write!(f, "converges"),
            Verdict::Diverges => write!(f, "diverges"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerpetuityReport {
    /// Sample mean of the log multiplicative factor.
    pub mean_ln_factor: f64,
    /// Standard error of that mean.
    pub se: f64,
    pub verdict: Verdict,
    /// Number of pairs actually used.
    pub n_used: usize,
}

/// Sign test for the random series sum_n (prod_{j<n} A_j) B_n built from
/// iid positive pairs (A, B): the series converges a.s. iff E ln A < 0.
///
/// Uses at most `n_terms` leading pairs. The verdict is `Converges` when
/// mean + 3 SE < 0, `Diverges` when mean - 3 SE > 0, and `Inconclusive`
/// otherwise (expected at the critical dimension, where E ln A = 0).
pub fn perpetuity_test(pairs: &[(f64, f64)], n_terms: usize) -> Result<PerpetuityReport> {
    if pairs.is_empty() {
        return Err(Error::domain("perpetuity_test requires pairs".to_string()));
    }
    if n_terms == 0 {
        return Err(Error::domain(
            "perpetuity_test requires n_terms >= 1".to_string(),
        ));
    }
    let used = &pairs[..n_terms.min(pairs.len())];
    let mut stats = SummaryStats::new();
    for &(a, b) in used {
        if !(a.is_finite() && a > 0.0) || !(b.is_finite() && b > 0.0) {
            return Err(Error::domain(format!(
                "perpetuity_test requires positive pairs, got ({a}, {b})"
            )));
        }
        stats.push(a.ln());
    }
    let se = if used.len() >= 2 {
        stats.standard_error()
    } else {
        f64::INFINITY
    };
    let verdict = if stats.mean + 3.0 * se < 0.0 {
        Verdict::Converges
    } else if stats.mean - 3.0 * se > 0.0 {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    };
    Ok(PerpetuityReport {
        mean_ln_factor: stats.mean,
        se,
        verdict,
        n_used: used.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, Q(lambda) = P(K >
/// lambda).
///
/// The alternating series 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2), truncated
/// at 100 terms, for lambda >= 1.18; the theta-transformed series for
/// smaller lambda, where the alternating form converges too slowly.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let factor = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let q = (-std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda)).exp();
        // K(lambda) = factor * (q + q^9 + q^25 + ...)
        let cdf = factor * (q + q.powi(9) + q.powi(25) + q.powi(49));
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let root = effective_n.sqrt();
    kolmogorov_sf((root + 0.12 + 0.11 / root) * d)
}

/// Two-sample Kolmogorov-Smirnov test with asymptotic p-value.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain(
            "ks_two_sample requires nonempty samples".to_string(),
        ));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let effective = (n as f64 * m as f64) / (n + m) as f64;
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, effective),
    })
}

/// One-sample Kolmogorov-Smirnov test of a sample against a reference CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::domain(
            "ks_one_sample requires a nonempty sample".to_string(),
        ));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

/// Least-squares fit of the log empirical survival function over a quantile
/// window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    /// Estimated exponential decay rate (negative fitted slope).
    pub rate: f64,
    /// Fitted intercept of ln S(t) at t = 0.
    pub log_intercept: f64,
    pub r_squared: f64,
    /// Time range (first, last) covered by the fitted points.
    pub t_range: (f64, f64),
    /// Number of points entering the fit.
    pub n_points: usize,
}

/// Fits ln S(t) = intercept - rate * t over the sample quantile window
/// (`quantile_lo`, `quantile_hi`).
///
/// The default study window (0.5, 0.99) skips the non-exponential head and
/// the noisy extreme tail. Requires at least 100 observations and a
/// non-degenerate sample.
pub fn tail_fit(times: &[f64], quantile_lo: f64, quantile_hi: f64) -> Result<TailFit> {
    if times.len() < 100 {
        return Err(Error::precondition(format!(
            "tail_fit requires at least 100 observations, got {}",
            times.len()
        )));
    }
    if !(0.0 < quantile_lo && quantile_lo < quantile_hi && quantile_hi < 1.0) {
        return Err(Error::domain(format!(
            "tail_fit requires 0 < lo < hi < 1, got ({quantile_lo}, {quantile_hi})"
        )));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        return Err(Error::domain(
            "tail_fit requires a non-degenerate sample".to_string(),
        ));
    }
    let mut ts = Vec::new();
    let mut lns = Vec::new();
    for (i, &t) in sorted.iter().enumerate() {
        let rank_fraction = (i + 1) as f64 / n as f64;
        if rank_fraction < quantile_lo || rank_fraction > quantile_hi {
            continue;
        }
        let survival = (n - 1 - i) as f64 / n as f64;
        if survival <= 0.0 {
            break;
        }
        ts.push(t);
        lns.push(survival.ln());
    }
    if ts.len() < 10 {
        return Err(Error::precondition(format!(
            "tail_fit window holds {} points, needs at least 10",
            ts.len()
        )));
    }
    let k = ts.len() as f64;
    let mean_t = ts.iter().sum::<f64>() / k;
    let mean_y = lns.iter().sum::<f64>() / k;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&t, &y) in ts.iter().zip(&lns) {
        sxx += (t - mean_t) * (t - mean_t);
        sxy += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::domain(
            "tail_fit window is degenerate in time".to_string(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(TailFit {
        rate: -slope,
        log_intercept: intercept,
        r_squared,
        t_range: (ts[0], *ts.last().unwrap()),
        n_points: ts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_gamma, Noise, RngStream};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn merge_identity_and_counts() {
        let mut s = SummaryStats::new();
        for x in [1.0, 2.0, 3.0] {
            s.push(x);
        }
        let merged = SummaryStats::new().merge(s);
        assert_eq!(merged, s);
        let merged = s.merge(SummaryStats::new());
        assert_eq!(merged, s);

        let mut t = SummaryStats::new();
        t.push(5.0);
        assert_eq!(s.merge(t).count, 4);
    }

    #[test]
    fn merge_of_halves_matches_single_pass() {
        let mut stream = RngStream::new(3, 0);
        let values: Vec<f64> = (0..10_001).map(|_| stream.uniform() * 10.0 - 3.0).collect();
        let whole = SummaryStats::from_slice(&values);
        let (a, b) = values.split_at(4_000);
        let merged = SummaryStats::from_slice(a).merge(SummaryStats::from_slice(b));
        assert_relative_eq!(merged.mean, whole.mean, max_relative = 1e-12);
        assert_relative_eq!(merged.m2, whole.m2, max_relative = 1e-12);
        assert_eq!(merged.count, whole.count);
        assert_eq!(merged.min, whole.min);
        assert_eq!(merged.max, whole.max);
    }

    #[test]
    fn merge_is_permutation_invariant_across_shards() {
        let mut stream = RngStream::new(4, 0);
        let shards: Vec<SummaryStats> = (0..16)
            .map(|_| {
                let values: Vec<f64> = (0..500).map(|_| stream.standard_normal()).collect();
                SummaryStats::from_slice(&values)
            })
            .collect();
        let reference = shards
            .iter()
            .copied()
            .fold(SummaryStats::new(), SummaryStats::merge);
        // A few deterministic permutations, including reversal and stride
        // shuffles.
        let mut order: Vec<usize> = (0..16).collect();
        for round in 0..8 {
            order.rotate_left(3);
            if round % 2 == 0 {
                order.reverse();
            }
            let permuted = order
                .iter()
                .map(|&i| shards[i])
                .fold(SummaryStats::new(), SummaryStats::merge);
            assert_relative_eq!(permuted.mean, reference.mean, max_relative = 1e-12);
            assert_relative_eq!(permuted.m2, reference.m2, max_relative = 1e-12);
            assert_eq!(permuted.count, reference.count);
        }
    }

    proptest! {
        #[test]
        fn merge_associative(xs in proptest::collection::vec(-1e3f64..1e3, 1..40),
                             ys in proptest::collection::vec(-1e3f64..1e3, 1..40),
                             zs in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let a = SummaryStats::from_slice(&xs);
            let b = SummaryStats::from_slice(&ys);
            let c = SummaryStats::from_slice(&zs);
            let left = a.merge(b).merge(c);
            let right = a.merge(b.merge(c));
            prop_assert!((left.mean - right.mean).abs() <= 1e-9 * (1.0 + left.mean.abs()));
            prop_assert!((left.m2 - right.m2).abs() <= 1e-9 * (1.0 + left.m2.abs()));
            prop_assert_eq!(left.count, right.count);
        }
    }

    #[test]
    fn perpetuity_constant_sequences() {
        let halves: Vec<(f64, f64)> = (0..50).map(|_| (0.5, 1.0)).collect();
        let report = perpetuity_test(&halves, 50).unwrap();
        assert_abs_diff_eq!(report.mean_ln_factor, -(2.0f64.ln()), epsilon = 1e-12);
        assert_eq!(report.verdict, Verdict::Converges);

        let twos: Vec<(f64, f64)> = (0..50).map(|_| (2.0, 1.0)).collect();
        assert_eq!(perpetuity_test(&twos, 50).unwrap().verdict, Verdict::Diverges);

        let ones: Vec<(f64, f64)> = (0..50).map(|_| (1.0, 1.0)).collect();
        assert_eq!(
            perpetuity_test(&ones, 50).unwrap().verdict,
            Verdict::Inconclusive
        );
    }

    #[test]
    fn perpetuity_rejects_bad_input() {
        assert!(perpetuity_test(&[], 10).is_err());
        assert!(perpetuity_test(&[(1.0, 1.0)], 0).is_err());
        assert!(perpetuity_test(&[(0.0, 1.0)], 1).is_err());
        assert!(perpetuity_test(&[(1.0, -2.0)], 1).is_err());
    }

    #[test]
    fn ks_identical_and_separated() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&x, &x).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-9);

        let mut stream = RngStream::new(8, 0);
        let a: Vec<f64> = (0..10_000).map(|_| stream.standard_normal()).collect();
        let b: Vec<f64> = (0..10_000).map(|_| stream.standard_normal() + 3.0).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!(r.p_value.is_finite() && r.p_value < 1e-6);
        assert!(r.statistic.is_finite() && r.statistic > 0.5);

        assert!(ks_two_sample(&[], &x).is_err());
    }

    proptest! {
        #[test]
        fn ks_statistic_is_a_cdf_gap(
            xs in proptest::collection::vec(-50f64..50.0, 1..60),
            ys in proptest::collection::vec(-50f64..50.0, 1..60),
        ) {
            let r = ks_two_sample(&xs, &ys).unwrap();
            prop_assert!(r.statistic >= 0.0 && r.statistic <= 1.0);
            prop_assert!(r.p_value >= 0.0 && r.p_value <= 1.0);
        }
    }

    #[test]
    fn tail_fit_recovers_exponential_rate() {
        let mut stream = RngStream::new(17, 0);
        let times: Vec<f64> = (0..100_000)
            .map(|_| sample_gamma(1.0, &mut stream).unwrap() / 2.0)
            .collect();
        let fit = tail_fit(&times, 0.5, 0.99).unwrap();
        assert_relative_eq!(fit.rate, 2.0, max_relative = 0.05);
        assert!(fit.r_squared.is_finite() && fit.r_squared > 0.99);

        // Shifting the sample changes the intercept, not the rate.
        let shifted: Vec<f64> = times.iter().map(|t| t + 1.0).collect();
        let fit2 = tail_fit(&shifted, 0.5, 0.99).unwrap();
        assert_relative_eq!(fit2.rate, fit.rate, max_relative = 0.01);
        assert!(fit2.log_intercept.is_finite() && fit2.log_intercept > fit.log_intercept);
    }

    #[test]
    fn tail_fit_preconditions() {
        let small: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            tail_fit(&small, 0.5, 0.99),
            Err(Error::Precondition(_))
        ));
        let degenerate = vec![1.0; 200];
        assert!(tail_fit(&degenerate, 0.5, 0.99).is_err());
        let ok: Vec<f64> = (0..200).map(|i| i as f64).collect();
        assert!(tail_fit(&ok, 0.9, 0.5).is_err());
    }
}
