use super::*;
use crate::rng::replicate_rng;
use crate::stats::{ks_distance, ks_threshold, KS_C_01};

// ---------------------------------------------------------------------------
// Independent oracles: the defining series, summed by brute force. These
// deliberately avoid the closed forms used in the implementation.
// ---------------------------------------------------------------------------

fn poisson_moment_oracle(lambda: f64, p: f64) -> f64 {
    let mut pmf = (-lambda).exp();
    let mut sum = 0.0;
    for k in 1..10_000u64 {
        pmf *= lambda / k as f64;
        sum += (k as f64).powf(p) * pmf;
        if pmf < 1e-18 && (k as f64) > lambda {
            break;
        }
    }
    sum
}

fn geometric_moment_oracle(s: f64, p: f64) -> f64 {
    let mut pmf = 1.0 - s;
    let mut sum = 0.0;
    for k in 1..100_000u64 {
        sum += (k as f64).powf(p) * pmf;
        pmf *= s;
        if pmf < 1e-18 {
            break;
        }
    }
    sum
}

fn poisson_pgf_oracle(lambda: f64, s: f64) -> f64 {
    let mut pmf = (-lambda).exp();
    let mut sum = pmf;
    for k in 1..10_000u64 {
        pmf *= lambda / k as f64;
        sum += pmf * s.powi(k as i32);
        if pmf < 1e-18 && (k as f64) > lambda {
            break;
        }
    }
    sum
}

// ---------------------------------------------------------------------------
// Construction and validation
// ---------------------------------------------------------------------------

#[test]
fn construction_validates_parameters() {
    assert!(OffspringLaw::poisson(0.0).is_err());
    assert!(OffspringLaw::poisson(-1.0).is_err());
    assert!(OffspringLaw::geometric_shifted(0.0).is_err());
    assert!(OffspringLaw::geometric_shifted(1.0).is_err());
    assert!(OffspringLaw::finite_support(&[]).is_err());
    assert!(OffspringLaw::finite_support(&[(1, 0.5), (1, 0.5)]).is_err());
    assert!(OffspringLaw::finite_support(&[(0, 1.0)]).is_err()); // mean 0
    assert!(OffspringLaw::finite_support(&[(1, 0.6), (2, 0.6)]).is_err()); // sum 1.2
}

#[test]
fn near_normalized_pmf_is_rescaled() {
    // Deviation below 1e-9 is renormalized rather than rejected.
    let law = OffspringLaw::finite_support(&[(1, 0.5 + 2e-10), (3, 0.5)]).unwrap();
    assert!((law.pgf(1.0).unwrap() - 1.0).abs() < 1e-15);
    // Deviation of 1e-8 is rejected.
    assert!(OffspringLaw::finite_support(&[(1, 0.5 + 1e-8), (3, 0.5)]).is_err());
}

#[test]
fn flags_computed_on_construction() {
    let geo = OffspringLaw::geometric_shifted(0.5).unwrap();
    assert!(geo.is_p0_zero());
    assert!(!geo.is_degenerate());
    let pois = OffspringLaw::poisson(2.0).unwrap();
    assert!(!pois.is_p0_zero());
    let point = OffspringLaw::finite_support(&[(5, 1.0)]).unwrap();
    assert!(point.is_degenerate());
    let gw = OffspringLaw::finite_support(&[(0, 0.25), (2, 0.75)]).unwrap();
    assert!(!gw.is_p0_zero());
    assert_eq!(gw.p_zero(), 0.25);
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

#[test]
fn finite_support_second_moment_exact() {
    // {1: 0.5, 3: 0.5}: m(2) = (1 + 9)/2 = 5.
    let law = OffspringLaw::finite_support(&[(1, 0.5), (3, 0.5)]).unwrap();
    assert_eq!(law.moment(2.0).unwrap(), 5.0);
    assert_eq!(law.mean(), 2.0);
}

#[test]
fn poisson_second_moment_matches_series_oracle() {
    let law = OffspringLaw::poisson(2.0).unwrap();
    let oracle = poisson_moment_oracle(2.0, 2.0);
    assert!((oracle - 6.0).abs() < 1e-12, "oracle sanity: {oracle}");
    assert!((law.moment(2.0).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn geometric_mean_matches_series_oracle() {
    let law = OffspringLaw::geometric_shifted(0.5).unwrap();
    let oracle = geometric_moment_oracle(0.5, 1.0);
    assert!((oracle - 2.0).abs() < 1e-12, "oracle sanity: {oracle}");
    assert!((law.moment(1.0).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn fractional_moments_match_series_oracles() {
    let law = OffspringLaw::poisson(2.0).unwrap();
    let p = 1.5;
    assert!(
        (law.moment(p).unwrap() - poisson_moment_oracle(2.0, p)).abs() < 1e-10
    );
    let law = OffspringLaw::geometric_shifted(0.6).unwrap();
    assert!(
        (law.moment(p).unwrap() - geometric_moment_oracle(0.6, p)).abs() < 1e-10
    );
    assert!(law.moment(0.5).is_err());
}

// ---------------------------------------------------------------------------
// PGF
// ---------------------------------------------------------------------------

#[test]
fn pgf_normalization_and_constant_term() {
    for law in [
        OffspringLaw::poisson(2.0).unwrap(),
        OffspringLaw::geometric_shifted(0.5).unwrap(),
        OffspringLaw::finite_support(&[(0, 0.25), (2, 0.75)]).unwrap(),
    ] {
        assert!((law.pgf(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((law.pgf(0.0).unwrap() - law.p_zero()).abs() < 1e-12);
    }
}

#[test]
fn poisson_pgf_matches_series_oracle() {
    let law = OffspringLaw::poisson(2.0).unwrap();
    let got = law.pgf(0.5).unwrap();
    let oracle = poisson_pgf_oracle(2.0, 0.5);
    assert!((oracle - (-1.0f64).exp()).abs() < 1e-12, "oracle sanity");
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
}

#[test]
fn geometric_pgf_diverges_beyond_radius() {
    let law = OffspringLaw::geometric_shifted(0.5).unwrap();
    assert!(law.pgf(1.9).is_ok());
    assert!(matches!(law.pgf(2.0), Err(Error::PgfDiverges { .. })));
    assert!(matches!(law.pgf(2.5), Err(Error::PgfDiverges { .. })));
}

#[test]
fn pgf_monotone_and_convex_on_grid() {
    for law in [
        OffspringLaw::poisson(1.7).unwrap(),
        OffspringLaw::geometric_shifted(0.3).unwrap(),
        OffspringLaw::finite_support(&[(0, 0.2), (1, 0.3), (4, 0.5)]).unwrap(),
    ] {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&s| law.pgf(s).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "pgf not nondecreasing");
        }
        for w in vals.windows(3) {
            assert!(
                w[2] - 2.0 * w[1] + w[0] >= -1e-9,
                "pgf not convex: {w:?}"
            );
        }
    }
}

#[test]
fn pgf_excess_consistent_with_pgf() {
    for law in [
        OffspringLaw::poisson(2.0).unwrap(),
        OffspringLaw::geometric_shifted(0.5).unwrap(),
        OffspringLaw::finite_support(&[(0, 0.2), (1, 0.3), (4, 0.5)]).unwrap(),
    ] {
        for e in [-1.0, -0.5, -1e-8, 0.0, 1e-9, 0.3] {
            let via_pgf = law.pgf(1.0 + e).unwrap() - 1.0;
            let excess = law.pgf_excess(e).unwrap();
            assert!(
                (via_pgf - excess).abs() <= 1e-12 * (1.0 + excess.abs()),
                "e = {e}: {via_pgf} vs {excess}"
            );
        }
        // Below cancellation range the excess form stays proportional to e
        // with slope mean(law).
        let tiny = 1e-300;
        let exc = law.pgf_excess(tiny).unwrap();
        assert!(
            (exc / tiny - law.mean()).abs() < 1e-6 * law.mean(),
            "tiny excess slope {} vs mean {}",
            exc / tiny,
            law.mean()
        );
        assert_eq!(law.pgf_excess(0.0).unwrap(), 0.0);
    }
}

#[test]
fn mean_equals_pgf_derivative_at_one() {
    // One-sided finite difference at 1, relative tolerance 1e-6.
    for law in [
        OffspringLaw::poisson(2.0).unwrap(),
        OffspringLaw::geometric_shifted(0.4).unwrap(),
        OffspringLaw::finite_support(&[(1, 0.5), (3, 0.5)]).unwrap(),
    ] {
        let h = 1e-7;
        let deriv = (law.pgf(1.0).unwrap() - law.pgf(1.0 - h).unwrap()) / h;
        let rel = (deriv - law.mean()).abs() / law.mean();
        assert!(rel < 1e-6, "derivative {deriv} vs mean {}", law.mean());
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

#[test]
fn point_mass_samples_are_constant() {
    let law = OffspringLaw::finite_support(&[(5, 1.0)]).unwrap();
    let mut rng = replicate_rng(21, 0);
    for _ in 0..200 {
        assert_eq!(law.sample_one(&mut rng), 5);
    }
    assert_eq!(law.sample_total(1000, 1 << 62, &mut rng).unwrap(), 5000);
}

#[test]
fn geometric_support_starts_at_one() {
    let law = OffspringLaw::geometric_shifted(0.8).unwrap();
    let mut rng = replicate_rng(22, 0);
    for _ in 0..500 {
        assert!(law.sample_one(&mut rng) >= 1);
    }
    for _ in 0..100 {
        assert!(law.sample_total(7, 1 << 62, &mut rng).unwrap() >= 7);
    }
}

#[test]
fn poisson_sample_mean_within_lln_band() {
    // Mean of 1e5 draws within 3 * sqrt(2/1e5) of 2.
    let law = OffspringLaw::poisson(2.0).unwrap();
    let mut rng = replicate_rng(23, 0);
    let reps = 100_000;
    let sum: u64 = (0..reps).map(|_| law.sample_one(&mut rng)).sum();
    let mean = sum as f64 / reps as f64;
    let band = 3.0 * (2.0f64 / reps as f64).sqrt();
    assert!((mean - 2.0).abs() < band, "{mean} not within {band} of 2");
}

#[test]
fn total_of_zero_parents_is_zero() {
    let mut rng = replicate_rng(24, 0);
    for law in [
        OffspringLaw::poisson(2.0).unwrap(),
        OffspringLaw::geometric_shifted(0.5).unwrap(),
        OffspringLaw::finite_support(&[(1, 0.5), (3, 0.5)]).unwrap(),
    ] {
        assert_eq!(law.sample_total(0, 1 << 62, &mut rng).unwrap(), 0);
    }
}

#[test]
fn poisson_total_mean_within_lln_band() {
    // z = 3, lambda = 2: mean of 1e5 totals within 3 * sqrt(6/1e5) of 6.
    let law = OffspringLaw::poisson(2.0).unwrap();
    let mut rng = replicate_rng(25, 0);
    let reps = 100_000;
    let sum: u64 = (0..reps)
        .map(|_| law.sample_total(3, 1 << 62, &mut rng).unwrap())
        .sum();
    let mean = sum as f64 / reps as f64;
    let band = 3.0 * (6.0f64 / reps as f64).sqrt();
    assert!((mean - 6.0).abs() < band, "{mean} not within {band} of 6");
}

#[test]
fn cap_overflow_reports_attempted_total() {
    let law = OffspringLaw::finite_support(&[(10, 1.0)]).unwrap();
    let mut rng = replicate_rng(26, 0);
    match law.sample_total(100, 500, &mut rng) {
        Err(Error::PopulationCap { attempted, cap, .. }) => {
            assert_eq!(attempted, 1000);
            assert_eq!(cap, 500);
        }
        other => panic!("expected cap error, got {other:?}"),
    }
}

/// Fast convolution path against the naive per-parent sum: same law.
fn ks_fast_vs_naive(law: &OffspringLaw, z: u64, seed: u64) -> (f64, f64) {
    let reps = 10_000;
    let mut r_fast = replicate_rng(seed, 0);
    let mut r_naive = replicate_rng(seed, 1);
    let fast: Vec<f64> = (0..reps)
        .map(|_| law.sample_total(z, 1 << 62, &mut r_fast).unwrap() as f64)
        .collect();
    let naive: Vec<f64> = (0..reps)
        .map(|_| (0..z).map(|_| law.sample_one(&mut r_naive)).sum::<u64>() as f64)
        .collect();
    (
        ks_distance(&fast, &naive),
        ks_threshold(reps, reps, KS_C_01),
    )
}

#[test]
fn sample_total_matches_naive_distribution() {
    // Distributional equality of the convolution-closed path and the naive
    // path, each family at z values straddling the internal thresholds.
    let laws = [
        OffspringLaw::poisson(2.0).unwrap(),
        OffspringLaw::geometric_shifted(0.5).unwrap(),
        OffspringLaw::finite_support(&[(0, 0.2), (1, 0.3), (2, 0.3), (7, 0.2)]).unwrap(),
    ];
    let mut rejections = 0;
    let mut trials = 0;
    for (li, law) in laws.iter().enumerate() {
        for (zi, &z) in [1u64, 3, 13, 21, 50].iter().enumerate() {
            let (d, thr) = ks_fast_vs_naive(law, z, 1000 + (li * 10 + zi) as u64);
            trials += 1;
            if d >= thr {
                rejections += 1;
            }
        }
    }
    // 15 trials at the 1% level: more than one rejection is implausible.
    assert!(rejections <= 1, "{rejections}/{trials} KS rejections");
}

#[test]
fn multinomial_split_path_matches_naive_on_wide_support() {
    // Support wide enough to engage the head/tail split machinery.
    let law = OffspringLaw::power_tail(2.5, 4000).unwrap();
    let (d, thr) = ks_fast_vs_naive(&law, 50, 77);
    assert!(d < thr, "KS {d} >= {thr}");
    // And with z large enough that the tail-parent branch fires.
    let mut rng = replicate_rng(78, 0);
    let reps = 4000;
    let mut r_naive = replicate_rng(78, 1);
    let fast: Vec<f64> = (0..reps)
        .map(|_| law.sample_total(20_000, 1 << 62, &mut rng).unwrap() as f64)
        .collect();
    let naive: Vec<f64> = (0..reps)
        .map(|_| {
            (0..20_000u64)
                .map(|_| law.sample_one(&mut r_naive))
                .sum::<u64>() as f64
        })
        .collect();
    let d = ks_distance(&fast, &naive);
    let thr = ks_threshold(reps, reps, KS_C_01);
    assert!(d < thr, "KS {d} >= {thr}");
}

#[test]
fn power_tail_moments() {
    // Normalization is exact and the mean matches the zeta-function ratio
    // at this truncation: sum k^{-1.5} / sum k^{-2.5} over k <= 1e4.
    let kmax = 10_000u64;
    let law = OffspringLaw::power_tail(2.5, kmax).unwrap();
    let s15: f64 = (1..=kmax).map(|k| (k as f64).powf(-1.5)).sum();
    let s25: f64 = (1..=kmax).map(|k| (k as f64).powf(-2.5)).sum();
    assert!((law.pgf(1.0).unwrap() - 1.0).abs() < 1e-12);
    assert!((law.mean() - s15 / s25).abs() < 1e-10);
    assert!(law.is_p0_zero());
}

// ---------------------------------------------------------------------------
// Property tests
// ---------------------------------------------------------------------------

mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_finite_law() -> impl Strategy<Value = OffspringLaw> {
        proptest::collection::vec((0u64..50, 1u32..1000), 1..8).prop_filter_map(
            "valid law",
            |pairs| {
                let mut seen = std::collections::HashSet::new();
                let pairs: Vec<(u64, f64)> = pairs
                    .into_iter()
                    .filter(|&(v, _)| seen.insert(v))
                    .map(|(v, w)| (v, w as f64))
                    .collect();
                let total: f64 = pairs.iter().map(|&(_, w)| w).sum();
                let pmf: Vec<(u64, f64)> =
                    pairs.iter().map(|&(v, w)| (v, w / total)).collect();
                OffspringLaw::finite_support(&pmf).ok()
            },
        )
    }

    proptest! {
        #[test]
        fn pgf_is_one_at_one(law in arb_finite_law()) {
            prop_assert!((law.pgf(1.0).unwrap() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn pgf_nondecreasing(law in arb_finite_law(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(law.pgf(hi).unwrap() >= law.pgf(lo).unwrap() - 1e-12);
        }

        #[test]
        fn total_is_sum_of_point_masses(v in 1u64..100, z in 0u64..10_000) {
            let law = OffspringLaw::finite_support(&[(v, 1.0)]).unwrap();
            let mut rng = replicate_rng(v.wrapping_mul(31).wrapping_add(z), 0);
            prop_assert_eq!(
                law.sample_total(z, u64::MAX >> 1, &mut rng).unwrap(),
                v * z
            );
        }
    }
}
