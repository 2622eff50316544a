//! Shared estimators: moments, quantiles, least-squares fits, two-sample
//! Kolmogorov-Smirnov, pooled lag-1 autocorrelation, binomial confidence
//! bounds. Everything an experiment reports flows through here so the
//! conventions (sample variance with n-1, quantile interpolation, fit
//! diagnostics) are fixed in exactly one place.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    assert!(!xs.is_empty());
    xs.iter().copied().sum::<T>() / T::from_real(xs.len() as f64)
}

/// Unbiased sample variance (divisor n-1); zero for n = 1.
pub fn variance<T: Scalar>(xs: &[T]) -> T {
    let n = xs.len();
    if n < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    ss / T::from_real((n - 1) as f64)
}

/// Standard error of the sample mean.
pub fn standard_error<T: Scalar>(xs: &[T]) -> T {
    (variance(xs) / T::from_real(xs.len() as f64)).sqrt()
}

/// Linearly interpolated quantile (the convention most tools default to):
/// rank h = q (n-1) on the sorted sample, interpolate between floor and
/// ceil. `q` in [0, 1].
pub fn quantile<T: Scalar>(xs: &[T], q: f64) -> T {
    assert!(!xs.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("quantile input must not contain NaN"));
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = T::from_real(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median<T: Scalar>(xs: &[T]) -> T {
    quantile(xs, 0.5)
}

/// Ordinary least squares y = slope x + intercept, with R^2 and the
/// standard error of the slope (for confidence intervals on fitted decay
/// rates). `None` when fewer than two distinct x values exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    /// Standard error of the slope; zero when n <= 2.
    pub slope_se: T,
    pub n: usize,
}

pub fn linear_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Option<LinearFit<T>> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = T::from_real(n as f64);
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = (syy - slope * sxy).max(T::zero());
    let r_squared = if syy == T::zero() { T::one() } else { T::one() - ss_res / syy };
    let slope_se = if n > 2 {
        (ss_res / (nf - T::from_real(2.0)) / sxx).sqrt()
    } else {
        T::zero()
    };
    Some(LinearFit { slope, intercept, r_squared, slope_se, n })
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
pub fn ks_two_sample<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert!(!a.is_empty() && !b.is_empty());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("KS input must not contain NaN"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("KS input must not contain NaN"));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = T::zero();
    while i < sa.len() && j < sb.len() {
        let v = if sa[i] <= sb[j] { sa[i] } else { sb[j] };
        while i < sa.len() && sa[i] <= v {
            i += 1;
        }
        while j < sb.len() && sb[j] <= v {
            j += 1;
        }
        let gap = (T::from_real(i as f64 / na) - T::from_real(j as f64 / nb)).abs();
        d = d.max(gap);
    }
    d
}

/// Lag-1 autocorrelation of values pooled from several records, where only
/// pairs adjacent *within the same record* count (concatenation must not
/// fabricate adjacency across records). `None` without at least one pair
/// and positive pooled variance.
pub fn pooled_lag1_autocorrelation<'a, T, I>(chunks: I) -> Option<T>
where
    T: Scalar,
    I: IntoIterator<Item = &'a [T]> + Clone,
{
    let mut count = 0usize;
    let mut total = T::zero();
    for c in chunks.clone() {
        for &x in c {
            total += x;
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    let m = total / T::from_real(count as f64);
    let mut num = T::zero();
    let mut den = T::zero();
    let mut pairs = 0usize;
    for c in chunks {
        for &x in c {
            den += (x - m) * (x - m);
        }
        for w in c.windows(2) {
            num += (w[0] - m) * (w[1] - m);
            pairs += 1;
        }
    }
    if pairs == 0 || den == T::zero() {
        return None;
    }
    // mean cross-product over pairs / mean square over observations, so the
    // estimator stays consistent when records contribute unequal pair counts
    Some((num / T::from_real(pairs as f64)) / (den / T::from_real(count as f64)))
}

/// Exact (Clopper-Pearson) binomial confidence bounds for k successes out
/// of n, at the given two-sided confidence level.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    assert!(k <= n && n > 0);
    assert!((0.0..1.0).contains(&level) && level > 0.0);
    let alpha = 1.0 - level;
    let lower = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64).unwrap().inverse_cdf(alpha / 2.0)
    };
    let upper = if k == n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64).unwrap().inverse_cdf(1.0 - alpha / 2.0)
    };
    (lower, upper)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Two-sided z value for a confidence level (e.g. 0.95 -> 1.95996...).
pub fn z_for_confidence(level: f64) -> f64 {
    normal_quantile(0.5 + level / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_by_hand() {
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        // sample variance: ((1.5^2 + 0.5^2) * 2) / 3 = 5/3
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert!((standard_error(&xs) - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert!((quantile(&[0.0f64, 1.0, 2.0, 3.0, 4.0], 0.9) - 3.6).abs() < 1e-12);
    }

    #[test]
    fn exact_line_is_fit_exactly() {
        let xs: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -2.0 * x + 7.0).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 7.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.slope_se < 1e-7);
    }

    #[test]
    fn degenerate_fits_are_none() {
        assert!(linear_fit(&[1.0], &[2.0]).is_none());
        assert!(linear_fit(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn noisy_slope_recovered_within_error_bars() {
        // y = 2x + noise; the fitted slope must cover 2 within 4 slope SEs.
        let mut stream = crate::rng::Stream::new(2024);
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.0 * x + (stream.next_unit_f64() - 0.5))
            .collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 4.0 * fit.slope_se, "slope {}", fit.slope);
        assert!(fit.r_squared > 0.99);
    }

    #[test]
    fn ks_statistic_extremes_and_ties() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b = [10.0, 11.0];
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        // shifted halves: D = 0.5 for {1,2} vs {2,3}
        let d: f64 = ks_two_sample(&[1.0, 2.0], &[2.0, 3.0]);
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pooled_autocorrelation_respects_record_edges() {
        // two records; the cross-record pair (4, 100) must not contribute.
        // By hand with m = 211/6: numerator pairs sum 268948/36 over 4
        // pairs, denominator 461190/36 over 6 points, ratio 1613688/1844760.
        let r1 = [1.0, 2.0, 3.0, 4.0];
        let r2 = [100.0, 101.0];
        let rho =
            pooled_lag1_autocorrelation::<f64, _>([&r1[..], &r2[..]]).unwrap();
        assert!((rho - 1_613_688.0 / 1_844_760.0).abs() < 1e-12, "rho = {rho}");
        assert!(pooled_lag1_autocorrelation::<f64, _>([&[1.0][..]]).is_none());
    }

    #[test]
    fn clopper_pearson_matches_reference_values() {
        // reference: high-precision incomplete-beta inversion
        let (lo, hi) = clopper_pearson(5, 10, 0.95);
        assert!((lo - 0.187086028447).abs() < 1e-9, "lo = {lo}");
        assert!((hi - 0.812913971553).abs() < 1e-9, "hi = {hi}");
        let (lo, hi) = clopper_pearson(2, 50, 0.99);
        assert!((lo - 0.00208872484698).abs() < 1e-9);
        assert!((hi - 0.172501759692).abs() < 1e-9);
        assert_eq!(clopper_pearson(0, 7, 0.95).0, 0.0);
        assert_eq!(clopper_pearson(7, 7, 0.95).1, 1.0);
    }

    #[test]
    fn normal_quantiles_match_reference() {
        assert!((z_for_confidence(0.95) - 1.95996398454).abs() < 1e-8);
        assert!((z_for_confidence(0.99) - 2.57582930355).abs() < 1e-8);
    }

    #[test]
    fn stats_work_at_f32() {
        let xs = [1.0f32, 2.0, 3.0];
        assert_eq!(mean(&xs), 2.0f32);
        assert!(linear_fit(&xs, &xs).unwrap().r_squared > 0.999);
    }
}
