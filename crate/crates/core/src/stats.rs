//! Statistical machinery shared by the verification campaigns: the
//! two-sample Kolmogorov-Smirnov distance, least-squares slope fits,
//! Wilson confidence intervals and summary statistics.

use serde::Serialize;

/// Two-sample Kolmogorov-Smirnov distance `sup_x |F_m(x) - G_n(x)|`.
///
/// Both inputs are consumed as-is (sorted internally). Ties across the two
/// samples are handled by advancing both empirical CDFs through the tied
/// value before the difference is recorded; the fluctuation samples carry a
/// genuine atom at zero (extinct lines), so this matters.
pub fn ks_distance(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty(), "ks_distance: empty sample");
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    ys.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    ks_distance_sorted(&xs, &ys)
}

/// Same as [`ks_distance`], on already-sorted inputs.
pub fn ks_distance_sorted(xs: &[f64], ys: &[f64]) -> f64 {
    let (m, n) = (xs.len(), ys.len());
    let x_inc = 1.0 / m as f64;
    let y_inc = 1.0 / n as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let mut max = 0.0f64;
    while i < m || j < n {
        // Next distinct data value in the merged order.
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        // Consume every copy of v from both samples before comparing; the
        // CDF difference is recomputed from the integer counts so that no
        // rounding accumulates along the walk.
        while i < m && xs[i] == v {
            i += 1;
        }
        while j < n && ys[j] == v {
            j += 1;
        }
        let diff = (i as f64) * x_inc - (j as f64) * y_inc;
        max = max.max(diff.abs());
    }
    max
}

/// Asymptotic two-sample rejection threshold `c(alpha) * sqrt((m+n)/(m*n))`.
///
/// `c(0.01) = 1.6276`, `c(0.05) = 1.3581`. Sample sizes in the campaigns are
/// >= 10^4, comfortably inside the asymptotic regime.
pub fn ks_threshold(m: usize, n: usize, c_alpha: f64) -> f64 {
    c_alpha * (((m + n) as f64) / ((m as f64) * (n as f64))).sqrt()
}

/// Critical coefficient for the asymptotic two-sample KS test at 1%.
pub const KS_C_01: f64 = 1.6276;

/// Ordinary least-squares line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope estimate.
    pub slope_se: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Fits a straight line by least squares. Needs at least two distinct x.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    // Residuals summed explicitly: syy - slope*sxy cancels catastrophically
    // for near-exact fits.
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let slope_se = if n > 2 {
        (ss_res / ((nf - 2.0) * sxx)).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(LineFit {
        slope,
        intercept,
        slope_se,
        r_squared,
        n_points: n,
    })
}

/// Weighted least-squares line fit with known per-point variances
/// (`weights = 1 / sigma^2`). Returns the fit and the weighted residual sum
/// of squares, which is chi-square distributed with `n - 2` degrees of
/// freedom when the model holds — the basis of the lack-of-fit test.
pub fn fit_line_weighted(xs: &[f64], ys: &[f64], weights: &[f64]) -> Option<(LineFit, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() || n != weights.len() {
        return None;
    }
    let w_total: f64 = weights.iter().sum();
    if w_total.is_nan() || w_total <= 0.0 {
        return None;
    }
    let mean_x = xs.iter().zip(weights).map(|(&x, &w)| w * x).sum::<f64>() / w_total;
    let mean_y = ys.iter().zip(weights).map(|(&y, &w)| w * y).sum::<f64>() / w_total;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(weights) {
        sxx += w * (x - mean_x) * (x - mean_x);
        sxy += w * (x - mean_x) * (y - mean_y);
        syy += w * (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .zip(weights)
        .map(|((&x, &y), &w)| {
            let r = y - (intercept + slope * x);
            w * r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some((
        LineFit {
            slope,
            intercept,
            slope_se: (1.0 / sxx).sqrt(),
            r_squared,
            n_points: n,
        },
        ss_res,
    ))
}

/// Wilson score interval for a binomial proportion.
///
/// Returns `(low, high)` at confidence given by the normal quantile `z`
/// (1.96 for 95%). Behaves sensibly at zero counts, which is what the tail
/// campaigns need for censored cells.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson_interval: no trials");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    crate::numerics::compensated_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    ss / (n as f64 - 1.0)
}

/// Median of a sample (averaging the middle pair for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median: empty sample");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in median"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// 99th-percentile chi-square critical values for df = 1..=30, used by the
/// lack-of-fit rejection of a pure-geometric tail decay.
const CHI2_99: [f64; 30] = [
    6.6349, 9.2103, 11.3449, 13.2767, 15.0863, 16.8119, 18.4753, 20.0902,
    21.6660, 23.2093, 24.7250, 26.2170, 27.6882, 29.1412, 30.5779, 31.9999,
    33.4087, 34.8053, 36.1909, 37.5662, 38.9322, 40.2894, 41.6384, 42.9798,
    44.3141, 45.6417, 46.9629, 48.2782, 49.5879, 50.8922,
];

/// Chi-square 0.99 quantile. Falls back to the Wilson-Hilferty cube
/// approximation beyond the table (df > 30), which is accurate to three
/// digits there.
pub fn chi2_crit_99(df: usize) -> f64 {
    if df == 0 {
        return 0.0;
    }
    if df <= 30 {
        CHI2_99[df - 1]
    } else {
        chi2_crit_wh(df, 2.326_347_874_040_841)
    }
}

/// Wilson-Hilferty chi-square quantile for the normal quantile `z` of the
/// desired level. Used for the extreme rejection level of the
/// geometric-decay lack-of-fit flag, where table lookups stop.
pub fn chi2_crit_wh(df: usize, z: f64) -> f64 {
    let d = df as f64;
    d * (1.0 - 2.0 / (9.0 * d) + z * (2.0 / (9.0 * d)).sqrt()).powi(3)
}

/// Normal quantile of the ~1e-6 level used by the supergeometric flag's
/// lack-of-fit conjunct: stringent enough that 100 randomized geometric
/// instances essentially never false-flag, while genuinely supergeometric
/// data exceeds the critical value by orders of magnitude.
pub const Z_1E6: f64 = 4.753_424_3;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_samples_is_zero() {
        let xs = vec![1.0, 2.0, 3.0, 3.0, 7.0];
        assert_eq!(ks_distance(&xs, &xs), 0.0);
    }

    #[test]
    fn ks_disjoint_samples_is_one() {
        let xs = vec![0.0, 1.0, 2.0];
        let ys = vec![10.0, 11.0];
        assert_eq!(ks_distance(&xs, &ys), 1.0);
    }

    #[test]
    fn ks_handles_heavy_ties() {
        // Both samples have an atom of mass 0.5 at zero plus distinct tails;
        // the distance must come from the tails (0.25), not from walking the
        // tied zeros one sample at a time (which would report 0.5).
        let xs = vec![0.0, 0.0, 1.0, 2.0];
        let ys = vec![0.0, 0.0, 1.5, 2.5];
        let d = ks_distance(&xs, &ys);
        assert!((d - 0.25).abs() < 1e-12, "d = {d}");
    }

    #[test]
    fn ks_atom_mass_difference() {
        // Atom of 0.5 vs 0.25 at zero: distance 0.25 at the atom.
        let xs = vec![0.0, 0.0, 1.0, 2.0];
        let ys = vec![0.0, 1.0, 2.0, 3.0];
        let d = ks_distance(&xs, &ys);
        assert!((d - 0.25).abs() < 1e-12, "d = {d}");
    }

    #[test]
    fn ks_hand_computed_case() {
        // F jumps at 1,2; G jumps at 1.5: D = 0.5 (at [1,1.5)).
        let xs = vec![1.0, 2.0];
        let ys = vec![1.5];
        assert!((ks_distance(&xs, &ys) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_threshold_matches_handbook_value() {
        // 2e4 vs 2e4 at 1%: 1.6276 * sqrt(2/2e4) = 0.0163 (criterion sizes).
        let t = ks_threshold(20_000, 20_000, KS_C_01);
        assert!((t - 0.016_276).abs() < 1e-6, "t = {t}");
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 3.0).abs() < 1e-14);
        assert!(fit.slope_se < 1e-13);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_covers_proportion() {
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!((lo - 0.404).abs() < 2e-3, "lo = {lo}");
        let (lo0, hi0) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.05);
    }

    #[test]
    fn chi2_table_spot_checks() {
        assert!((chi2_crit_99(1) - 6.6349).abs() < 1e-3);
        assert!((chi2_crit_99(10) - 23.2093).abs() < 1e-3);
        // Wilson-Hilferty continuation stays close to the table edge.
        assert!((chi2_crit_99(31) - 52.1914).abs() < 0.1);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
