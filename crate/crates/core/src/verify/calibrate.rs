//! Mechanism calibration: exercises the verification machinery itself on
//! synthetic inputs with known answers, decoupled from any simulation, plus
//! the fast-path/naive-path sampler equivalence suite.

use super::{analyze_tail_curve, fit_log_slope, SeedEcho, VerificationReport};
use crate::offspring::{binomial, OffspringLaw};
use crate::rng::{mix, replicate_rng, stream};
use crate::stats;
use crate::Result;
use rand::Rng;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct CalibrateOptions {
    pub seed: u64,
    /// Sample size per side of each sampler-equivalence KS trial.
    pub ks_reps: usize,
    /// Randomized synthetic geometric-decay instances.
    pub geometric_instances: usize,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            ks_reps: 10_000,
            geometric_instances: 100,
        }
    }
}

/// Runs the calibration suite.
pub fn calibrate(opts: &CalibrateOptions) -> Result<VerificationReport> {
    let started = Instant::now();
    let mut report = VerificationReport::new("calibrate", SeedEcho {
        env_seed: opts.seed,
        traj_seed: opts.seed,
    });

    // 1. Exact exponential slope recovery: |W - W_n| = 2^{-n/2} must fit
    //    slope -(log 2)/2 to machine precision.
    let ns: Vec<f64> = (0..=20).map(|n| n as f64).collect();
    let vals: Vec<f64> = ns.iter().map(|&n| 2.0f64.powf(-n / 2.0)).collect();
    let fit = fit_log_slope(&ns, &vals).expect("synthetic fit");
    let target = -0.5 * 2.0f64.ln();
    report.check(
        "synthetic-exponential-slope-exact",
        (fit.slope - target).abs() < 1e-12,
        fit.slope,
        target,
        "within-1e-12",
        "regression correctness decoupled from simulation",
    );

    // 2. Constructed supergeometric curve p(n) = exp(-2^{n/3}): y-increments
    //    are exactly (log 2)/3 and the flag must fire.
    let n_list: Vec<usize> = (2..=10).collect();
    let p_super: Vec<f64> = n_list
        .iter()
        .map(|&n| (-(2.0f64.powf(n as f64 / 3.0))).exp())
        .collect();
    let min_inc = (2.0f64.ln() / 3.0) * 0.75;
    let analysis = analyze_tail_curve(&n_list, &p_super, None, min_inc);
    report.check(
        "synthetic-supergeometric-flagged",
        analysis.supergeometric,
        analysis.mean_increment,
        2.0f64.ln() / 3.0,
        "==",
        "y-increments of exp(-2^{n/3}) are exactly (log 2)/3",
    );

    // 3. Constructed geometric curve p(n) = 2^{-n}: increments flatten and
    //    the flag must not fire.
    let p_geo: Vec<f64> = n_list.iter().map(|&n| 2.0f64.powi(-(n as i32))).collect();
    let analysis = analyze_tail_curve(&n_list, &p_geo, None, min_inc);
    report.check(
        "synthetic-geometric-not-flagged",
        !analysis.supergeometric,
        if analysis.supergeometric { 1.0 } else { 0.0 },
        0.0,
        "==",
        "pure geometric decay must never be called supergeometric",
    );

    // 4. Randomized noisy geometric instances: binomial counts around
    //    p0 * ratio^n must never be flagged.
    let mut false_flags = 0usize;
    for inst in 0..opts.geometric_instances {
        let mut rng = replicate_rng(mix(opts.seed, stream::SYNTH), inst as u64);
        let p0: f64 = rng.random_range(0.05..0.5);
        let ratio: f64 = rng.random_range(0.3..0.9);
        let reps: u64 = *[10_000u64, 100_000, 1_000_000]
            .get(rng.random_range(0..3usize))
            .expect("index in range");
        let p_hats: Vec<f64> = n_list
            .iter()
            .map(|&n| {
                let p = p0 * ratio.powi(n as i32);
                binomial::sample(reps, p, &mut rng) as f64 / reps as f64
            })
            .collect();
        let analysis = analyze_tail_curve(&n_list, &p_hats, Some(reps), min_inc);
        if analysis.supergeometric {
            false_flags += 1;
        }
    }
    report.check(
        "randomized-geometric-never-flagged",
        false_flags == 0,
        false_flags as f64,
        0.0,
        "==",
        &format!(
            "false supergeometric flags over {} randomized noisy instances",
            opts.geometric_instances
        ),
    );

    // 5. Sampler equivalence: convolution-closed totals against naive
    //    per-parent sums, two-sample KS at the 1% level across families and
    //    z values straddling every internal threshold.
    let laws: Vec<(&str, OffspringLaw)> = vec![
        ("poisson", OffspringLaw::poisson(2.0)?),
        ("geometric", OffspringLaw::geometric_shifted(0.5)?),
        (
            "finite",
            OffspringLaw::finite_support(&[(0, 0.2), (1, 0.3), (2, 0.3), (7, 0.2)])?,
        ),
        ("power_tail", OffspringLaw::power_tail(2.5, 10_000)?),
    ];
    let z_grid = [1u64, 2, 3, 5, 8, 13, 21, 34, 50];
    let mut trials = 0usize;
    let mut rejections = 0usize;
    for (li, (_, law)) in laws.iter().enumerate() {
        for (zi, &z) in z_grid.iter().enumerate() {
            let trial_seed = mix(opts.seed, (li * 100 + zi) as u64);
            let mut r_fast = replicate_rng(trial_seed, 0);
            let mut r_naive = replicate_rng(trial_seed, 1);
            let fast: Vec<f64> = (0..opts.ks_reps)
                .map(|_| law.sample_total(z, 1 << 62, &mut r_fast).map(|v| v as f64))
                .collect::<Result<_>>()?;
            let naive: Vec<f64> = (0..opts.ks_reps)
                .map(|_| (0..z).map(|_| law.sample_one(&mut r_naive)).sum::<u64>() as f64)
                .collect();
            let d = stats::ks_distance(&fast, &naive);
            let thr = stats::ks_threshold(opts.ks_reps, opts.ks_reps, stats::KS_C_01);
            trials += 1;
            if d >= thr {
                rejections += 1;
            }
        }
    }
    // 36 trials at a nominal 1% level (conservative on discrete data):
    // more than two rejections indicates a distributional bug.
    report.check(
        "sampler-equivalence-ks-suite",
        rejections <= 2,
        rejections as f64,
        2.0,
        "<=",
        &format!("KS rejections over {trials} family/z combinations"),
    );

    report.finish(started);
    Ok(report)
}
