//! Deterministic and Monte Carlo computation of the limit objects attached
//! to `W = lim Z_n / P_n`.
//!
//! The quenched variance of `W` is the series
//! `delta2(xi) = sum_n P_n^{-1} (m_n(2)/m_n^2 - 1)`; its tails give both the
//! residual variance of deep-horizon estimators and the norming
//! `delta_inf(T^n xi)` of the fluctuation statistic
//! `U_n = sqrt(P_n) (W - W_n) / delta_inf(T^n xi)`, whose limit law is that
//! of `G sqrt(W)` with `G` standard normal independent of `W`. The quenched
//! MGF `psi_n(t, xi) = E_xi exp(t W_n)` satisfies the backward recursion
//! `psi_{n+1}(t, xi) = phi_{xi_0}(psi_n(t/m_0, T xi))`, and extinction
//! probabilities come from backward PGF composition.

use crate::engine;
use crate::env::{EnvironmentModel, EnvironmentSequence};
use crate::error::{Error, Result};
use crate::numerics::{rel_diff, CompensatedSum};
use crate::rng::{mix, replicate_rng, stream};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

/// Hard ceiling on the number of variance-series terms.
const MAX_TERMS: usize = 10_000;
/// Convergence rule: this many consecutive relative increments below 1e-12.
const CONVERGED_STREAK: usize = 5;
const CONVERGED_REL: f64 = 1e-12;
/// Divergence heuristic: this many consecutive non-decaying increments.
const DIVERGING_STREAK: usize = 50;
/// Depth cap of the quenched MGF recursion; deeper tails are the base case.
const MGF_MAX_DEPTH: usize = 1000;

/// `log P_n = sum_{i<n} log m_i`, compensated. Panics if `n` exceeds the
/// realized length (caller contract).
pub fn log_pn(env: &EnvironmentSequence, n: usize) -> f64 {
    assert!(
        n <= env.len(),
        "log_pn: n = {n} beyond realized horizon {}",
        env.len()
    );
    let mut acc = CompensatedSum::new();
    for k in 0..n {
        acc.add(env.law(k).mean().ln());
    }
    acc.value()
}

/// Partial sums and tails of the variance series.
#[derive(Debug, Clone)]
pub struct VarianceSeries {
    terms: Vec<f64>,
    partials: Vec<f64>,
    converged: bool,
    diverging: bool,
    truncation_index: usize,
}

impl VarianceSeries {
    /// The computed limit (last partial sum).
    pub fn limit(&self) -> f64 {
        *self.partials.last().expect("at least one term")
    }

    /// Tail `sum_{k >= n} P_k^{-1} (m_k(2)/m_k^2 - 1)` over the computed
    /// terms, summed from the small end.
    pub fn tail_from(&self, n: usize) -> f64 {
        let mut acc = CompensatedSum::new();
        for &t in self.terms[n.min(self.terms.len())..].iter().rev() {
            acc.add(t);
        }
        acc.value()
    }

    pub fn partials(&self) -> &[f64] {
        &self.partials
    }

    pub fn terms(&self) -> &[f64] {
        &self.terms
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    pub fn is_diverging(&self) -> bool {
        self.diverging
    }

    /// Index where the convergence rule first fired (number of terms when
    /// it never did).
    pub fn truncation_index(&self) -> usize {
        self.truncation_index
    }

    /// All terms vanish: every law in range is a point mass.
    pub fn is_degenerate(&self) -> bool {
        self.limit() == 0.0
    }
}

/// Computes the variance series through `n_terms` terms (clamped to the
/// realized horizon and to 10^4).
pub fn delta2_partial(env: &EnvironmentSequence, n_terms: usize) -> Result<VarianceSeries> {
    let n = n_terms.min(env.len()).min(MAX_TERMS);
    if n == 0 {
        return Err(Error::InvalidArgument(
            "variance series needs at least one term".into(),
        ));
    }
    let mut terms = Vec::with_capacity(n);
    let mut partials = Vec::with_capacity(n);
    let mut log_p = CompensatedSum::new();
    let mut sum = CompensatedSum::new();
    let mut converged = false;
    let mut truncation_index = n;
    let mut conv_streak = 0usize;
    let mut grow_streak = 0usize;
    let mut diverging = false;
    for k in 0..n {
        let law = env.law(k);
        let m = law.mean();
        let m2 = law.moment(2.0)?;
        // m(2) >= m^2 by Jensen; clamp f64 jitter on degenerate laws.
        let term = ((m2 / (m * m) - 1.0).max(0.0)) * (-log_p.value()).exp();
        sum.add(term);
        terms.push(term);
        partials.push(sum.value());
        log_p.add(m.ln());

        if sum.value() > 0.0 && term < CONVERGED_REL * sum.value() {
            conv_streak += 1;
            if conv_streak >= CONVERGED_STREAK && !converged {
                converged = true;
                truncation_index = k + 1;
            }
        } else {
            conv_streak = 0;
        }
        if k > 0 && term > 0.0 && term >= terms[k - 1] {
            grow_streak += 1;
            if grow_streak >= DIVERGING_STREAK {
                diverging = true;
            }
        } else {
            grow_streak = 0;
        }
    }
    // A series of all-zero terms is trivially converged (degenerate laws).
    if terms.iter().all(|&t| t == 0.0) {
        converged = true;
        truncation_index = 0;
    }
    Ok(VarianceSeries {
        terms,
        partials,
        converged,
        diverging,
        truncation_index,
    })
}

/// `delta_inf(T^n xi)`: the standard deviation of `W` under the shifted
/// environment. Computed two ways — a fresh series on `shift(env, n)` and
/// `sqrt(P_n * tail_from(n))` of the unshifted series — which must agree to
/// 1e-10 relative; a zero value signals the degenerate case excluded by the
/// fluctuation theorem's hypothesis.
pub fn delta_inf_shifted(env: &EnvironmentSequence, n: usize) -> Result<f64> {
    let series = delta2_partial(env, env.len())?;
    if series.is_diverging() {
        return Err(Error::SeriesDivergence {
            terms: series.terms.len(),
        });
    }
    let shifted = env.shift(n)?;
    let shifted_series = delta2_partial(&shifted, shifted.len())?;
    let route_a = shifted_series.limit();
    let route_b = log_pn(env, n).exp() * series.tail_from(n);
    if rel_diff(route_a, route_b) > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "variance-series routes disagree at n = {n}: {route_a} vs {route_b}"
        )));
    }
    if route_a <= 0.0 {
        return Err(Error::DegenerateDelta);
    }
    Ok(route_a.sqrt())
}

/// The normalized fluctuation `U_n = sqrt(P_n) (w_hat - w_n) / delta_inf(T^n xi)`.
pub fn u_statistic(env: &EnvironmentSequence, n: usize, w_n: f64, w_hat: f64) -> Result<f64> {
    let delta = delta_inf_shifted(env, n)?;
    Ok((0.5 * log_pn(env, n)).exp() * (w_hat - w_n) / delta)
}

/// What the limit-law sampler conditions on.
#[derive(Debug, Clone, Copy)]
pub enum LimitLawSource<'a> {
    /// Fixed realized environment (quenched law).
    Quenched(&'a EnvironmentSequence),
    /// Environment redrawn per replicate (annealed law).
    Annealed(&'a EnvironmentModel),
}

/// Draws `reps` samples of `G sqrt(W_hat)` where `W_hat = W_depth` from
/// `Z_0 = 1` and `G` is standard normal, independent per replicate. The
/// returned sample is sorted ascending.
pub fn limit_law_sample(
    source: LimitLawSource<'_>,
    reps: usize,
    depth: usize,
    seed: u64,
    cap: u64,
) -> Result<Vec<f64>> {
    if reps == 0 || depth == 0 {
        return Err(Error::InvalidArgument(
            "limit_law_sample: reps and depth must be >= 1".into(),
        ));
    }
    let points = [depth];
    let mut sample: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let w = match source {
                LimitLawSource::Quenched(env) => {
                    engine::path_w_values(env, &points, mix(mix(seed, stream::LIMIT), r), cap)?[0]
                }
                LimitLawSource::Annealed(model) => {
                    let env = model.realize(depth, mix(mix(seed, stream::ENV_REP), r))?;
                    engine::path_w_values(&env, &points, mix(mix(seed, stream::LIMIT), r), cap)?[0]
                }
            };
            let mut grng = replicate_rng(mix(seed, stream::NORMAL), r);
            let g: f64 = StandardNormal.sample(&mut grng);
            Ok(g * w.sqrt())
        })
        .collect::<Result<_>>()?;
    sample.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in limit sample"));
    Ok(sample)
}

/// Quenched MGF `psi_n(t, xi) = E_xi exp(t W_n)` by the backward recursion
/// over the PGF composition, base `psi_0(t) = exp(t)`.
///
/// The whole recursion runs in excess form `e_k = psi - 1` so the levels
/// where the argument sits within 1e-300 of the fixed point at 1 keep their
/// `t`-dependence (in plain form `exp(t/P_n)` rounds to exactly 1 and the
/// iteration loses the signal). The depth is capped at 10^3 and further
/// truncated where the base excess `t/P_d` would leave the representable
/// range; for `t` inside the convergence radius the omitted tail is below
/// one ulp of the result, and outside the radius the divergence surfaces in
/// the outermost compositions, which are unaffected by the truncation.
pub fn quenched_mgf(env: &EnvironmentSequence, t: f64, n: usize) -> Result<f64> {
    if t.is_nan() || t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "quenched_mgf: t must be finite and >= 0, got {t}"
        )));
    }
    let depth = n.min(MGF_MAX_DEPTH);
    if depth > env.len() {
        return Err(Error::EnvTooShort {
            needed: depth,
            have: env.len(),
        });
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let mut log_ps = Vec::with_capacity(depth + 1);
    let mut acc = CompensatedSum::new();
    log_ps.push(0.0);
    for k in 0..depth {
        acc.add(env.law(k).mean().ln());
        log_ps.push(acc.value());
    }
    let mut d = depth;
    while d > 0 && t * (-log_ps[d]).exp() < 1e-280 {
        d -= 1;
    }
    let mut e = (t * (-log_ps[d]).exp()).exp_m1();
    for k in (0..d).rev() {
        e = match env.law(k).pgf_excess(e) {
            Ok(x) => x,
            Err(Error::PgfDiverges { .. }) => return Err(Error::MgfDiverges { t }),
            Err(err) => return Err(err),
        };
        if !e.is_finite() || e > 1e300 {
            return Err(Error::MgfDiverges { t });
        }
    }
    Ok(1.0 + e)
}

/// Extinction estimate from backward PGF composition to the given depth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExtinctionEstimate {
    /// `q_depth = phi_{xi_0}(phi_{xi_1}(... phi_{xi_{depth-1}}(0) ...))`.
    pub value: f64,
    /// `q_depth - q_{depth-1}`, the last increment (error estimate; the
    /// iterates are nondecreasing in depth).
    pub last_increment: f64,
    pub depth: usize,
}

/// Probability of extinction by the given depth (and, at large depth, the
/// extinction probability itself; the increments report the truncation).
pub fn extinction_prob(env: &EnvironmentSequence, depth: usize) -> Result<ExtinctionEstimate> {
    if depth == 0 {
        return Err(Error::InvalidArgument("extinction depth must be >= 1".into()));
    }
    if depth > env.len() {
        return Err(Error::EnvTooShort {
            needed: depth,
            have: env.len(),
        });
    }
    // Strongly supercritical prefix: zero exactly, at every depth.
    if (0..depth).all(|k| env.law(k).is_p0_zero()) {
        return Ok(ExtinctionEstimate {
            value: 0.0,
            last_increment: 0.0,
            depth,
        });
    }
    let compose = |d: usize| -> Result<f64> {
        let mut v = 0.0;
        for k in (0..d).rev() {
            v = env.law(k).pgf(v)?;
        }
        Ok(v)
    };
    let value = compose(depth)?;
    let prev = compose(depth - 1)?;
    Ok(ExtinctionEstimate {
        value,
        last_increment: value - prev,
        depth,
    })
}
