//! Statistical verification campaigns: each asymptotic statement about
//! `W - W_n` becomes a falsifiable desk-scale test with explicit numeric
//! thresholds.
//!
//! Almost-sure rate statements are tested through moment and median decay
//! regressions (pathwise suprema are not falsifiable from finitely many
//! paths; the reports state the surrogate). Limit laws are tested with
//! two-sample Kolmogorov-Smirnov distances against Monte Carlo samples of
//! the limit, avoiding quadrature of a scale mixture with an atom. Every
//! campaign is a pure function of (config, seeds): reruns are byte-identical
//! apart from the wall-clock field.

mod calibrate;
mod mgf;
mod tail;

pub use calibrate::{calibrate, CalibrateOptions};
pub use mgf::{check_exp_moment, MgfOptions, StabilityClass};
pub use tail::{analyze_tail_curve, check_tail, TailCurveAnalysis, TailOptions};

use crate::engine;
use crate::env::{EnvironmentModel, EnvironmentSequence};
use crate::error::{Error, Result};
use crate::limits;
use crate::report::CheckResult;
use crate::rng::{mix, stream};
use crate::stats::{self, LineFit};
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Decay-rate target for a convergence-rate campaign.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateTarget {
    pub kind: RateKind,
    /// `a = E log m_0` (supercritical: a > 0).
    pub a: f64,
    /// Moment order of the hypothesis, when exponential.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Conjugate exponent `q = p/(p-1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Polynomial exponent `alpha`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Exponential,
    Polynomial,
}

impl RateTarget {
    /// Exponential target: `|W - W_n|` decays at least like `m^{-n/q}`
    /// with `m = e^a`.
    pub fn exponential(p: f64, a: f64) -> Result<Self> {
        if p.is_nan() || p <= 1.0 || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "exponential rate target needs p > 1, got {p}"
            )));
        }
        if a.is_nan() || a <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "supercritical growth rate a = E log m_0 must be positive, got {a}"
            )));
        }
        Ok(Self {
            kind: RateKind::Exponential,
            a,
            p: Some(p),
            q: Some(p / (p - 1.0)),
            alpha: None,
        })
    }

    /// Polynomial target: `|W - W_n| = o(n^{-alpha})`.
    pub fn polynomial(alpha: f64, a: f64) -> Result<Self> {
        if alpha.is_nan() || alpha <= 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "polynomial rate target needs alpha > 0, got {alpha}"
            )));
        }
        Ok(Self {
            kind: RateKind::Polynomial,
            a,
            p: None,
            q: None,
            alpha: Some(alpha),
        })
    }

    /// Target slope of `log E|W_hat - W_n|` against `n`: `-a/q`.
    pub fn slope_mean_abs(&self) -> Option<f64> {
        self.q.map(|q| -self.a / q)
    }

    /// Target slope of `log E(W_hat - W_n)^2` against `n`: `-2a/q`.
    pub fn slope_mean_sq(&self) -> Option<f64> {
        self.q.map(|q| -2.0 * self.a / q)
    }
}

/// Per-generation statistics of one campaign.
#[derive(Debug, Clone, Serialize)]
pub struct PerNStats {
    pub n: usize,
    pub count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_dw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_mean_dw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_abs_dw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_abs_dw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_sq_dw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_dw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tails: Vec<tail::TailCell>,
}

impl PerNStats {
    fn empty(n: usize, count: u64) -> Self {
        Self {
            n,
            count,
            mean_dw: None,
            se_mean_dw: None,
            mean_abs_dw: None,
            median_abs_dw: None,
            mean_sq_dw: None,
            var_dw: None,
            ks: None,
            ks_threshold: None,
            tails: Vec::new(),
        }
    }
}

/// Named slope fit with its target.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeSummary {
    pub statistic: String,
    pub fit: LineFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

/// Seeds echoed into every report.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeedEcho {
    pub env_seed: u64,
    pub traj_seed: u64,
}

/// Outcome of one theorem-check campaign.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub campaign: String,
    /// Conjunction of all gating (non-informational) checks.
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub per_n: Vec<PerNStats>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub slopes: Vec<SlopeSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    pub seeds: SeedEcho,
    pub wall_clock_secs: f64,
    /// Campaign-specific payload (per-repeat KS tables, MGF grids, ...).
    #[serde(skip_serializing_if = "serde_json::Value::is_null", default)]
    pub extra: serde_json::Value,
    /// Resolved configuration; filled by the runner.
    #[serde(skip_serializing_if = "serde_json::Value::is_null", default)]
    pub config_echo: serde_json::Value,
}

impl VerificationReport {
    pub(crate) fn new(campaign: &str, seeds: SeedEcho) -> Self {
        Self {
            schema_version: 1,
            campaign: campaign.to_string(),
            passed: false,
            checks: Vec::new(),
            per_n: Vec::new(),
            slopes: Vec::new(),
            flags: Vec::new(),
            notes: Vec::new(),
            seeds,
            wall_clock_secs: 0.0,
            extra: serde_json::Value::Null,
            config_echo: serde_json::Value::Null,
        }
    }

    pub(crate) fn finish(&mut self, started: Instant) {
        self.passed = self
            .checks
            .iter()
            .filter(|c| !c.informational)
            .all(|c| c.passed);
        self.wall_clock_secs = started.elapsed().as_secs_f64();
    }

    pub(crate) fn check(
        &mut self,
        name: &str,
        passed: bool,
        observed: f64,
        threshold: f64,
        comparison: &str,
        note: &str,
    ) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            observed,
            threshold,
            comparison: comparison.to_string(),
            note: note.to_string(),
            informational: false,
        });
    }

    pub(crate) fn info_check(
        &mut self,
        name: &str,
        passed: bool,
        observed: f64,
        threshold: f64,
        comparison: &str,
        note: &str,
    ) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            observed,
            threshold,
            comparison: comparison.to_string(),
            note: note.to_string(),
            informational: true,
        });
    }
}

/// Least-squares slope of `log(value)` against the x column, skipping
/// non-positive values. Used both on simulated statistics and on synthetic
/// injected curves (regression correctness is testable independently of any
/// simulation).
pub fn fit_log_slope(xs: &[f64], values: &[f64]) -> Option<LineFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(values)
        .filter(|&(_, &v)| v > 0.0)
        .map(|(&x, &v)| (x, v.ln()))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    stats::fit_line(&x, &y)
}

// ---------------------------------------------------------------------------
// Rate campaigns
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RateOptions {
    /// Generations to measure at, ascending.
    pub n_list: Vec<usize>,
    pub reps: usize,
    /// Estimator depth K: `W_hat = W_{n+K}`.
    pub extra_depth: usize,
    pub cap: u64,
    pub env_seed: u64,
    pub traj_seed: u64,
    pub target: RateTarget,
    /// Relative tolerance on slope checks.
    pub slope_rel_tol: f64,
    /// Also check `mean(dW) = 0` within 3 SE and the sample variance
    /// against the variance-series tail.
    pub martingale_check: bool,
    /// Relative tolerance of the variance check.
    pub var_rel_tol: f64,
    /// Informational partial-sum convergence heuristic (polynomial targets).
    pub series_check: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            n_list: vec![4, 6, 8, 10, 12, 14],
            reps: 10_000,
            extra_depth: 25,
            cap: engine::DEFAULT_CAP,
            env_seed: 0,
            traj_seed: 0,
            target: RateTarget {
                kind: RateKind::Exponential,
                a: 2.0f64.ln(),
                p: Some(2.0),
                q: Some(2.0),
                alpha: None,
            },
            slope_rel_tol: 0.10,
            martingale_check: false,
            var_rel_tol: 0.05,
            series_check: false,
        }
    }
}

/// Samples `(W_n, W_hat - W_n)` for every requested `n` from one batch of
/// replicated paths and regresses the decay of the fluctuation scale.
pub fn check_rate(env: &EnvironmentSequence, opts: &RateOptions) -> Result<VerificationReport> {
    let started = Instant::now();
    if opts.n_list.is_empty() || opts.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "rate campaign needs an ascending, nonempty n list".into(),
        ));
    }
    if opts.reps < 1000 {
        return Err(Error::InvalidArgument(
            "rate campaign needs reps >= 1000".into(),
        ));
    }
    let max_n = *opts.n_list.last().expect("nonempty");
    let horizon_needed = max_n + opts.extra_depth;
    if horizon_needed > env.len() {
        return Err(Error::EnvTooShort {
            needed: horizon_needed,
            have: env.len(),
        });
    }

    // One path serves every n: record W at n and n + K for all requested n.
    let mut points: Vec<usize> = opts
        .n_list
        .iter()
        .flat_map(|&n| [n, n + opts.extra_depth])
        .collect();
    points.sort_unstable();
    points.dedup();
    let idx_of = |g: usize| points.binary_search(&g).expect("recorded point");

    let rows: Vec<Vec<f64>> = (0..opts.reps as u64)
        .into_par_iter()
        .map(|r| engine::path_w_values(env, &points, mix(opts.traj_seed, r), opts.cap))
        .collect::<Result<_>>()?;

    let mut report = VerificationReport::new("rate", SeedEcho {
        env_seed: env.env_seed(),
        traj_seed: opts.traj_seed,
    });

    // Per-n fluctuation samples.
    let mut all_zero = true;
    let mut per_n_dw: Vec<Vec<f64>> = Vec::with_capacity(opts.n_list.len());
    for &n in &opts.n_list {
        let (i, j) = (idx_of(n), idx_of(n + opts.extra_depth));
        let dws: Vec<f64> = rows.iter().map(|row| row[j] - row[i]).collect();
        if dws.iter().any(|&d| d != 0.0) {
            all_zero = false;
        }
        per_n_dw.push(dws);
    }

    if all_zero {
        report.flags.push("degenerate-fluctuations".into());
        report
            .notes
            .push("all fluctuations are exactly zero; rate conclusions are vacuous".into());
        for (&n, dws) in opts.n_list.iter().zip(&per_n_dw) {
            let mut row = PerNStats::empty(n, dws.len() as u64);
            row.mean_abs_dw = Some(0.0);
            report.per_n.push(row);
        }
        report.finish(started);
        return Ok(report);
    }

    let mut mean_abs = Vec::new();
    let mut mean_sq = Vec::new();
    let mut medians = Vec::new();
    for (&n, dws) in opts.n_list.iter().zip(&per_n_dw) {
        let abs: Vec<f64> = dws.iter().map(|d| d.abs()).collect();
        let m_abs = stats::mean(&abs);
        let m_sq = stats::mean(&dws.iter().map(|d| d * d).collect::<Vec<_>>());
        let med = stats::median(&abs);
        let mean_dw = stats::mean(dws);
        let var = stats::variance(dws);
        let se = (var / dws.len() as f64).sqrt();
        mean_abs.push(m_abs);
        mean_sq.push(m_sq);
        medians.push(med);
        let mut row = PerNStats::empty(n, dws.len() as u64);
        row.mean_dw = Some(mean_dw);
        row.se_mean_dw = Some(se);
        row.mean_abs_dw = Some(m_abs);
        row.median_abs_dw = Some(med);
        row.mean_sq_dw = Some(m_sq);
        row.var_dw = Some(var);
        report.per_n.push(row);
    }

    // Estimator-noise gate: the residual variance bound of W_hat must be
    // negligible against the smallest measured fluctuation scale.
    let series = limits::delta2_partial(env, env.len())?;
    let residual_bound = series.tail_from(max_n + opts.extra_depth);
    let min_scale = mean_abs
        .iter()
        .copied()
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);
    if residual_bound > 0.01 * min_scale {
        return Err(Error::EstimatorNoise {
            bound: residual_bound,
            scale: min_scale,
        });
    }
    report.notes.push(format!(
        "estimator residual variance bound {residual_bound:.3e} vs smallest scale {min_scale:.3e}"
    ));

    let ns: Vec<f64> = opts.n_list.iter().map(|&n| n as f64).collect();
    match opts.target.kind {
        RateKind::Exponential => {
            let target_abs = opts.target.slope_mean_abs().expect("exponential target");
            let target_sq = opts.target.slope_mean_sq().expect("exponential target");
            let tol_abs = opts.slope_rel_tol * target_abs.abs();
            if let Some(fit) = fit_log_slope(&ns, &mean_abs) {
                // One-sided: the theorem asserts o(.), i.e. at least this fast.
                report.check(
                    "mean-abs-slope-at-most-target",
                    fit.slope <= target_abs + tol_abs,
                    fit.slope,
                    target_abs + tol_abs,
                    "<=",
                    "log mean|W_hat - W_n| per generation; one-sided, upper rates only",
                );
                report.slopes.push(SlopeSummary {
                    statistic: "mean_abs_dw".into(),
                    fit,
                    target: Some(target_abs),
                });
            }
            if let Some(fit) = fit_log_slope(&ns, &mean_sq) {
                let tol_sq = opts.slope_rel_tol * target_sq.abs();
                report.info_check(
                    "mean-sq-slope-matches-target",
                    (fit.slope - target_sq).abs() <= tol_sq,
                    fit.slope,
                    target_sq,
                    "within-rel-tol",
                    "log E(W_hat - W_n)^2 per generation, two-sided",
                );
                report.slopes.push(SlopeSummary {
                    statistic: "mean_sq_dw".into(),
                    fit,
                    target: Some(target_sq),
                });
            }
            if let Some(fit) = fit_log_slope(&ns, &medians) {
                report.slopes.push(SlopeSummary {
                    statistic: "median_abs_dw".into(),
                    fit,
                    target: None,
                });
            }
        }
        RateKind::Polynomial => {
            let alpha = opts.target.alpha.expect("polynomial target");
            // n^alpha * median |W_hat - W_n| decreasing over the top half.
            let scaled: Vec<f64> = opts
                .n_list
                .iter()
                .zip(&medians)
                .map(|(&n, &m)| (n as f64).powf(alpha) * m)
                .collect();
            let half = opts.n_list.len() / 2;
            let top = &scaled[half..];
            let decreasing = top.windows(2).all(|w| w[1] < w[0]);
            let max_ratio = top
                .windows(2)
                .map(|w| w[1] / w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            report.check(
                "scaled-median-decreasing-top-half",
                decreasing,
                max_ratio,
                1.0,
                "<",
                "heuristic: n^alpha * median|W_hat - W_n| strictly decreasing over the top half of the n range",
            );
            report
                .notes
                .push("polynomial-rate check is a heuristic surrogate for an a.s. statement".into());
            if let Some(fit) = fit_log_slope(
                &opts.n_list.iter().map(|&n| (n as f64).ln()).collect::<Vec<_>>(),
                &medians,
            ) {
                report.slopes.push(SlopeSummary {
                    statistic: "median_abs_dw_vs_log_n".into(),
                    fit,
                    target: Some(-alpha),
                });
            }
            if opts.series_check {
                series_convergence_heuristic(env, opts, &mut report)?;
            }
        }
    }

    if opts.martingale_check {
        for ((&n, dws), row) in opts.n_list.iter().zip(&per_n_dw).zip(&report.per_n.clone()) {
            let mean_dw = row.mean_dw.expect("filled above");
            let se = row.se_mean_dw.expect("filled above");
            report.check(
                &format!("martingale-mean-zero-n{n}"),
                mean_dw.abs() <= 3.0 * se,
                mean_dw.abs(),
                3.0 * se,
                "<=",
                "E(W_hat - W_n) = 0 within 3 standard errors",
            );
            let expected = series.tail_from(n) - series.tail_from(n + opts.extra_depth);
            let var = stats::variance(dws);
            report.check(
                &format!("variance-matches-delta-tail-n{n}"),
                (var - expected).abs() <= opts.var_rel_tol * expected,
                var,
                expected,
                "within-rel-tol",
                "sample Var(W_hat - W_n) against the variance-series tail",
            );
        }
    }

    report.finish(started);
    Ok(report)
}

/// Partial sums of `(W_hat - W_n)` over `n <= 30` on 100 paths: bounded and
/// with shrinking increments. A heuristic surrogate for the almost-sure
/// convergence of the series `sum_n (W - W_n)`; informational only.
fn series_convergence_heuristic(
    env: &EnvironmentSequence,
    opts: &RateOptions,
    report: &mut VerificationReport,
) -> Result<()> {
    let n_top = 30usize.min(env.len().saturating_sub(opts.extra_depth));
    let paths = 100u64;
    let points: Vec<usize> = (0..=n_top + opts.extra_depth).collect();
    let mut shrink_count = 0usize;
    let mut max_partial: f64 = 0.0;
    for p in 0..paths {
        let ws = engine::path_w_values(
            env,
            &points,
            mix(mix(opts.traj_seed, stream::SYNTH), p),
            opts.cap,
        )?;
        let w_hat = ws[n_top + opts.extra_depth];
        let partial = |upto: usize| -> f64 {
            (0..=upto).map(|n| w_hat - ws[n]).sum()
        };
        let a10 = partial(n_top / 3);
        let a20 = partial(2 * n_top / 3);
        let a30 = partial(n_top);
        max_partial = max_partial.max(a30.abs()).max(a20.abs()).max(a10.abs());
        if (a30 - a20).abs() <= (a20 - a10).abs() {
            shrink_count += 1;
        }
    }
    let frac = shrink_count as f64 / paths as f64;
    report.info_check(
        "series-partial-sums-cauchy-heuristic",
        frac >= 0.6 && max_partial.is_finite(),
        frac,
        0.6,
        ">=",
        "heuristic: fraction of paths with shrinking partial-sum increments of sum_n (W_hat - W_n)",
    );
    report.notes.push(format!(
        "series heuristic: max |partial sum| = {max_partial:.3e} over {paths} paths"
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// Fluctuation-law (CLT-type) campaigns
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CltMode {
    /// One fixed realized environment per campaign (repeated over
    /// `env_reps` environments, averaging the KS distance).
    Quenched,
    /// Environment redrawn per replicate.
    Annealed,
}

#[derive(Debug, Clone)]
pub struct CltOptions {
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub extra_depth: usize,
    pub cap: u64,
    pub env_seed: u64,
    pub traj_seed: u64,
    pub mode: CltMode,
    /// Independent environments averaged in quenched mode.
    pub env_reps: usize,
    /// KS coefficient of the two-sample rejection threshold.
    pub ks_c: f64,
    /// Acceptance threshold on the final (largest-n) KS distance.
    pub ks_final: f64,
    /// Repeat the whole campaign this many times with derived seeds.
    pub campaign_repeats: usize,
    /// Minimum fraction of passing repeats when `campaign_repeats > 1`.
    pub min_pass_fraction: f64,
    /// Realized horizon for every environment draw.
    pub horizon: usize,
}

impl Default for CltOptions {
    fn default() -> Self {
        Self {
            n_list: vec![4, 8, 12],
            reps: 20_000,
            extra_depth: 25,
            cap: engine::DEFAULT_CAP,
            env_seed: 0,
            traj_seed: 0,
            mode: CltMode::Annealed,
            env_reps: 20,
            ks_c: stats::KS_C_01,
            ks_final: 0.03,
            campaign_repeats: 1,
            min_pass_fraction: 0.95,
            horizon: 0,
        }
    }
}

/// Builds the normalized-fluctuation sample `U_n` and a matched limit-law
/// sample of `G sqrt(W)`, reports the two-sample KS distance per `n`, and
/// checks the distance decreases with `n` and ends below threshold.
pub fn check_clt(model: &EnvironmentModel, opts: &CltOptions) -> Result<VerificationReport> {
    let started = Instant::now();
    if !model.nondegenerate() {
        return Err(Error::HypothesisViolation(
            "fluctuation-law campaign requires p_i(xi_0) < 1 a.s. for all i \
             (no environment state may be a point mass)"
                .into(),
        ));
    }
    if opts.n_list.is_empty() || opts.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "clt campaign needs an ascending, nonempty n list".into(),
        ));
    }
    if opts.reps < 100 {
        return Err(Error::InvalidArgument("clt campaign needs reps >= 100".into()));
    }
    let max_n = *opts.n_list.last().expect("nonempty");
    let depth = max_n + opts.extra_depth;
    let horizon = opts.horizon.max(depth + 60);

    let mut report = VerificationReport::new("clt", SeedEcho {
        env_seed: opts.env_seed,
        traj_seed: opts.traj_seed,
    });
    let threshold = stats::ks_threshold(opts.reps, opts.reps, opts.ks_c);

    let mut repeat_rows: Vec<serde_json::Value> = Vec::new();
    let mut pass_count = 0usize;
    let mut last_ks: Vec<f64> = Vec::new();
    for rep in 0..opts.campaign_repeats {
        let env_seed_c = mix(opts.env_seed, mix(rep as u64, stream::CAMPAIGN));
        let traj_seed_c = mix(opts.traj_seed, mix(rep as u64, stream::CAMPAIGN));
        let ks_per_n: Vec<f64> = match opts.mode {
            CltMode::Annealed => opts
                .n_list
                .iter()
                .map(|&n| annealed_ks(model, n, depth, horizon, env_seed_c, traj_seed_c, opts))
                .collect::<Result<_>>()?,
            CltMode::Quenched => {
                let mut sums = vec![0.0f64; opts.n_list.len()];
                for e in 0..opts.env_reps {
                    let env = model.realize(horizon, mix(env_seed_c, e as u64))?;
                    let seed_e = mix(traj_seed_c, mix(e as u64, stream::ENV_REP));
                    for (i, &n) in opts.n_list.iter().enumerate() {
                        sums[i] += quenched_ks(&env, n, depth, seed_e + i as u64, opts)?;
                    }
                }
                sums.iter().map(|s| s / opts.env_reps as f64).collect()
            }
        };
        let decreasing = ks_per_n.windows(2).all(|w| w[1] < w[0]);
        let final_ks = *ks_per_n.last().expect("nonempty");
        let repeat_passed = decreasing && final_ks < opts.ks_final;
        if repeat_passed {
            pass_count += 1;
        }
        repeat_rows.push(serde_json::json!({
            "repeat": rep,
            "ks": ks_per_n,
            "decreasing": decreasing,
            "final_ks": final_ks,
            "passed": repeat_passed,
        }));
        last_ks = ks_per_n;
    }

    for (&n, &ks) in opts.n_list.iter().zip(&last_ks) {
        let mut row = PerNStats::empty(n, opts.reps as u64);
        row.ks = Some(ks);
        row.ks_threshold = Some(threshold);
        report.per_n.push(row);
    }
    report.extra = serde_json::json!({
        "repeats": repeat_rows,
        "two_sample_threshold": threshold,
        "mode": opts.mode,
    });

    if opts.campaign_repeats == 1 {
        if opts.n_list.len() > 1 {
            let decreasing = last_ks.windows(2).all(|w| w[1] < w[0]);
            let worst = last_ks
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            report.check(
                "ks-decreasing-in-n",
                decreasing,
                worst,
                0.0,
                "<",
                "largest consecutive KS increase across the n list",
            );
        }
        report.check(
            "final-ks-below-threshold",
            *last_ks.last().expect("nonempty") < opts.ks_final,
            *last_ks.last().expect("nonempty"),
            opts.ks_final,
            "<",
            "KS distance at the largest n",
        );
    } else {
        let frac = pass_count as f64 / opts.campaign_repeats as f64;
        report.check(
            "repeat-pass-fraction",
            frac >= opts.min_pass_fraction,
            frac,
            opts.min_pass_fraction,
            ">=",
            "fraction of repeated campaigns with final KS below threshold",
        );
    }

    report.finish(started);
    Ok(report)
}

fn annealed_ks(
    model: &EnvironmentModel,
    n: usize,
    depth: usize,
    horizon: usize,
    env_seed: u64,
    traj_seed: u64,
    opts: &CltOptions,
) -> Result<f64> {
    let seed_n = mix(traj_seed, n as u64);
    let mut u_sample: Vec<f64> = (0..opts.reps as u64)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let env = model.realize(horizon, mix(mix(env_seed, n as u64), r))?;
            let ws = engine::path_w_values(
                &env,
                &[n, n + opts.extra_depth],
                mix(seed_n, r),
                opts.cap,
            )?;
            limits::u_statistic(&env, n, ws[0], ws[1])
        })
        .collect::<Result<_>>()?;
    u_sample.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in U sample"));
    let limit = limits::limit_law_sample(
        limits::LimitLawSource::Annealed(model),
        opts.reps,
        depth,
        mix(seed_n, stream::LIMIT),
        opts.cap,
    )?;
    Ok(stats::ks_distance_sorted(&u_sample, &limit))
}

fn quenched_ks(
    env: &EnvironmentSequence,
    n: usize,
    depth: usize,
    seed: u64,
    opts: &CltOptions,
) -> Result<f64> {
    let pairs = engine::sample_fluctuation(env, n, opts.extra_depth, opts.reps, seed, opts.cap)?;
    // The environment is fixed here, so the norming is one constant.
    let delta = limits::delta_inf_shifted(env, n)?;
    let sqrt_pn = (0.5 * limits::log_pn(env, n)).exp();
    let mut u_sample: Vec<f64> = pairs.iter().map(|&(_, dw)| sqrt_pn * dw / delta).collect();
    u_sample.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in U sample"));
    let limit = limits::limit_law_sample(
        limits::LimitLawSource::Quenched(env),
        opts.reps,
        depth,
        mix(seed, stream::LIMIT),
        opts.cap,
    )?;
    Ok(stats::ks_distance_sorted(&u_sample, &limit))
}
