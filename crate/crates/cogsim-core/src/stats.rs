//! Small statistics toolkit shared by the engine, the verifier and the test
//! suite: integer histograms, Kolmogorov–Smirnov distances with 1% critical
//! values, the DKW envelope, a chi-square threshold table, and a
//! least-squares slope.

use std::collections::BTreeMap;

use serde::Serialize;

/// Histogram over nonnegative integer values (e.g. service times in slots).
///
/// Stores counts sparsely, so horizons of 1e7 slots with service times in the
/// hundreds stay tiny.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Histogram {
    counts: BTreeMap<u32, u64>,
    total: u64,
}

impl Histogram {
    /// Empty histogram.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one observation.
    pub fn push(&mut self, value: u32) {
        self.push_n(value, 1);
    }

    /// Adds `n` observations of `value`.
    pub fn push_n(&mut self, value: u32, n: u64) {
        if n > 0 {
            *self.counts.entry(value).or_insert(0) += n;
            self.total += n;
        }
    }

    /// Number of observations.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Whether no observation has been recorded.
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Sample mean; 0 when empty.
    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts
            .iter()
            .map(|(&v, &n)| v as f64 * n as f64)
            .sum::<f64>()
            / self.total as f64
    }

    /// Largest observed value.
    pub fn max(&self) -> Option<u32> {
        self.counts.keys().next_back().copied()
    }

    /// Nearest-rank percentile: smallest value whose cumulative count reaches
    /// `p` (in `[0, 1]`) of the total.
    pub fn percentile(&self, p: f64) -> Option<u32> {
        if self.total == 0 {
            return None;
        }
        let rank = (p.clamp(0.0, 1.0) * self.total as f64).ceil().max(1.0) as u64;
        let mut cum = 0;
        for (&v, &n) in &self.counts {
            cum += n;
            if cum >= rank {
                return Some(v);
            }
        }
        self.max()
    }

    /// Iterates `(value, count)` in increasing value order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts.iter().map(|(&v, &n)| (v, n))
    }

    /// Raw count map.
    pub fn counts(&self) -> &BTreeMap<u32, u64> {
        &self.counts
    }
}

/// Two-sided KS distance between the histogram's empirical cdf and a
/// reference cdf `F(k) = Pr(X <= k)` evaluated on integers.
///
/// Both cdfs are step functions jumping only at integers, so the supremum is
/// attained at an integer in `0..=max`; values beyond the observed maximum
/// contribute `1 - F(max)` which the final iteration covers.
pub fn ks_one_sample<F: Fn(u32) -> f64>(h: &Histogram, cdf: F) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    let n = h.total() as f64;
    let max = h.max().expect("nonempty");
    let mut cum = 0u64;
    let mut iter = h.iter().peekable();
    let mut d: f64 = 0.0;
    for k in 0..=max {
        if let Some(&(v, c)) = iter.peek() {
            if v == k {
                cum += c;
                iter.next();
            }
        }
        let emp = cum as f64 / n;
        d = d.max((emp - cdf(k)).abs());
    }
    d
}

/// Two-sided KS distance between two empirical cdfs.
pub fn ks_two_sample(a: &Histogram, b: &Histogram) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (na, nb) = (a.total() as f64, b.total() as f64);
    let mut ia = a.iter().peekable();
    let mut ib = b.iter().peekable();
    let (mut ca, mut cb) = (0u64, 0u64);
    let mut d: f64 = 0.0;
    loop {
        let next = match (ia.peek(), ib.peek()) {
            (Some(&(va, _)), Some(&(vb, _))) => va.min(vb),
            (Some(&(va, _)), None) => va,
            (None, Some(&(vb, _))) => vb,
            (None, None) => break,
        };
        if let Some(&(va, n)) = ia.peek() {
            if va == next {
                ca += n;
                ia.next();
            }
        }
        if let Some(&(vb, n)) = ib.peek() {
            if vb == next {
                cb += n;
                ib.next();
            }
        }
        d = d.max((ca as f64 / na - cb as f64 / nb).abs());
    }
    d
}

/// Two-sided KS coefficient `c(alpha)` for `alpha = 0.01`:
/// `sqrt(-ln(alpha / 2) / 2)`.
pub const KS_COEFF_1PCT: f64 = 1.6276236307187293;

/// 1% critical KS distance for a one-sample test with `n` observations.
pub fn ks_one_sample_critical_1pct(n: u64) -> f64 {
    KS_COEFF_1PCT / (n as f64).sqrt()
}

/// 1% critical KS distance for a two-sample test with sizes `n` and `m`.
pub fn ks_two_sample_critical_1pct(n: u64, m: u64) -> f64 {
    KS_COEFF_1PCT * ((n as f64 + m as f64) / (n as f64 * m as f64)).sqrt()
}

/// Dvoretzky–Kiefer–Wolfowitz envelope half-width at confidence `1 - alpha`:
/// `sqrt(ln(2 / alpha) / (2 n))`.
pub fn dkw_epsilon(n: u64, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Upper 1% critical values of the chi-square distribution, indexed by
/// `dof - 1` for 1..=7 degrees of freedom.
pub const CHI2_CRIT_1PCT: [f64; 7] = [6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475];

/// Pearson chi-square statistic; `observed` and `expected` must have equal
/// length and positive expectations.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len(), "cell count mismatch");
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            debug_assert!(e > 0.0, "expected counts must be positive");
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum()
}

/// Least-squares slope of `y` against `x`; 0 for fewer than two points or a
/// degenerate abscissa.
pub fn linear_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    sxy / sxx
}

/// Pearson correlation of two 0/1 sequences given their sufficient sums.
/// Returns 0 when either sequence is constant.
pub fn binary_correlation(n: u64, sum_x: u64, sum_y: u64, sum_xy: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let (sx, sy, sxy) = (sum_x as f64, sum_y as f64, sum_xy as f64);
    let cov = sxy / n - (sx / n) * (sy / n);
    let vx = sx / n * (1.0 - sx / n);
    let vy = sy / n * (1.0 - sy / n);
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_basics() {
        let mut h = Histogram::new();
        for v in [1u32, 1, 2, 3, 3, 3, 10] {
            h.push(v);
        }
        assert_eq!(h.total(), 7);
        assert_eq!(h.max(), Some(10));
        assert!((h.mean() - 23.0 / 7.0).abs() < 1e-12);
        assert_eq!(h.percentile(0.0), Some(1));
        assert_eq!(h.percentile(0.5), Some(3));
        assert_eq!(h.percentile(1.0), Some(10));
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let mut h = Histogram::new();
        for v in 1..=100u32 {
            h.push(v);
        }
        assert_eq!(h.percentile(0.95), Some(95));
        assert_eq!(h.percentile(0.99), Some(99));
        assert_eq!(h.percentile(0.501), Some(51));
    }

    #[test]
    fn ks_one_sample_detects_match_and_mismatch() {
        // Geometric(p) on {1, 2, ...}: F(k) = 1 - (1-p)^k.
        let p = 0.4f64;
        let cdf = |k: u32| 1.0 - (1.0 - p).powi(k as i32);
        let mut h = Histogram::new();
        // Exact expected counts for a large "sample": pmf * n.
        let n = 1_000_000u64;
        for k in 1..60u32 {
            let mass = p * (1.0 - p).powi(k as i32 - 1);
            h.push_n(k, (mass * n as f64).round() as u64);
        }
        assert!(ks_one_sample(&h, cdf) < 1e-3);
        let wrong = |k: u32| 1.0 - 0.5f64.powi(k as i32);
        assert!(ks_one_sample(&h, wrong) > 0.05);
    }

    #[test]
    fn ks_two_sample_zero_for_identical() {
        let mut a = Histogram::new();
        let mut b = Histogram::new();
        for v in [1u32, 2, 2, 5, 9] {
            a.push(v);
            b.push(v);
        }
        assert_eq!(ks_two_sample(&a, &b), 0.0);
        b.push(50);
        assert!(ks_two_sample(&a, &b) > 0.0);
    }

    #[test]
    fn ks_two_sample_known_distance() {
        // a: all mass at 1; b: all mass at 2 -> D = 1.
        let mut a = Histogram::new();
        a.push_n(1, 10);
        let mut b = Histogram::new();
        b.push_n(2, 10);
        assert!((ks_two_sample(&a, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn critical_values_match_reference() {
        // c(0.01) = sqrt(-ln(0.005)/2).
        assert!((KS_COEFF_1PCT - (-(0.005f64).ln() / 2.0).sqrt()).abs() < 1e-12);
        assert!((ks_one_sample_critical_1pct(10_000) - KS_COEFF_1PCT / 100.0).abs() < 1e-15);
        let d = ks_two_sample_critical_1pct(100, 100);
        assert!((d - KS_COEFF_1PCT * (200.0f64 / 10_000.0).sqrt()).abs() < 1e-15);
        // DKW at alpha = 0.05, n = 1000: sqrt(ln(40)/2000) ~ 0.0429.
        assert!((dkw_epsilon(1000, 0.05) - 0.042947) .abs() < 1e-5);
    }

    #[test]
    fn chi_square_statistic() {
        let obs = [52u64, 48];
        let exp = [50.0, 50.0];
        assert!((chi_square(&obs, &exp) - (4.0 / 50.0 + 4.0 / 50.0)).abs() < 1e-12);
    }

    #[test]
    fn slope_of_line_is_recovered() {
        let pts: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, 3.0 + 0.25 * i as f64)).collect();
        assert!((linear_slope(&pts) - 0.25).abs() < 1e-12);
        assert_eq!(linear_slope(&[(1.0, 2.0)]), 0.0);
        assert_eq!(linear_slope(&[(1.0, 2.0), (1.0, 5.0)]), 0.0);
    }

    #[test]
    fn binary_correlation_of_independent_and_identical() {
        // x = y: perfect correlation.
        assert!((binary_correlation(100, 50, 50, 50) - 1.0).abs() < 1e-12);
        // Independent-looking sums: corr near 0.
        let r = binary_correlation(1000, 500, 500, 250);
        assert!(r.abs() < 1e-12);
        // Constant sequence: defined as 0.
        assert_eq!(binary_correlation(100, 0, 50, 0), 0.0);
    }
}
