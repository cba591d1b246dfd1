//! Exponential-moment campaign.
//!
//! `E exp(theta W) = sup_n E exp(theta W_n)`, so finiteness of the limit's
//! exponential moment shows up as stabilization of the quenched MGF
//! `psi_n(t)` in `n`, and the boundary of the convergence radius as blow-up.
//! The campaign classifies each grid point as stable or divergent per
//! environment-state prefix, brackets the radius, enforces a monotone
//! stable/divergent frontier, and cross-checks one interior point against a
//! Monte Carlo mean of `exp(t W_hat)` (which is unbiased for `psi_depth(t)`).

use super::{SeedEcho, VerificationReport};
use crate::engine;
use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::limits;
use crate::rng::{mix, stream};
use crate::stats;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    /// `psi_n(t)` stabilized: the last increment is below tolerance.
    Stable,
    /// Recursion left the PGF domain, overflowed, or exceeded the growth
    /// ceiling.
    Divergent,
    /// Bounded at `n_cap` but not yet stabilized (near the radius).
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct MgfOptions {
    /// Ascending grid of `t >= 0`.
    pub t_grid: Vec<f64>,
    /// Depth to which `psi_n` is evaluated.
    pub n_cap: usize,
    /// Interior point for the Monte Carlo cross-check (default: largest
    /// stable grid point).
    pub mc_t: Option<f64>,
    pub mc_reps: usize,
    pub mc_depth: usize,
    pub env_seed: u64,
    pub traj_seed: u64,
    pub cap: u64,
    pub horizon: usize,
    /// Relative increment below which `psi_n` counts as stabilized.
    pub stab_rel_tol: f64,
    /// Value ceiling above which growth counts as divergence.
    pub growth_ceiling: f64,
}

impl Default for MgfOptions {
    fn default() -> Self {
        Self {
            t_grid: (0..=15).map(|i| i as f64 * 0.1).collect(),
            n_cap: 40,
            mc_t: None,
            mc_reps: 100_000,
            mc_depth: 30,
            env_seed: 0,
            traj_seed: 0,
            cap: engine::DEFAULT_CAP,
            horizon: 0,
            stab_rel_tol: 1e-9,
            growth_ceiling: 1e12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct GridCell {
    state: usize,
    t: f64,
    class: StabilityClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
}

/// Probes `psi_n(t)` over the grid for each environment state taken as the
/// `xi_0` prefix.
pub fn check_exp_moment(model: &EnvironmentModel, opts: &MgfOptions) -> Result<VerificationReport> {
    let started = Instant::now();
    if opts.t_grid.is_empty()
        || opts.t_grid.windows(2).any(|w| w[0] >= w[1])
        || opts.t_grid.iter().any(|&t| t.is_nan() || t < 0.0)
    {
        return Err(Error::InvalidArgument(
            "mgf campaign needs an ascending grid of t >= 0".into(),
        ));
    }
    if opts.n_cap < 2 {
        return Err(Error::InvalidArgument("mgf campaign needs n_cap >= 2".into()));
    }
    let horizon = opts.horizon.max(opts.n_cap.max(opts.mc_depth) + 8);
    let n_states = if model.finite_state() {
        model.state_count()
    } else {
        1 // a deterministic sequence is its own single prefix
    };

    let mut report = VerificationReport::new("mgf", SeedEcho {
        env_seed: opts.env_seed,
        traj_seed: opts.traj_seed,
    });

    let mut cells: Vec<GridCell> = Vec::new();
    let mut frontier_ok = true;
    let mut t_ok = f64::NAN;
    let mut t_div = f64::NAN;
    let mut probe_env = None;
    for s in 0..n_states {
        let env = if model.finite_state() {
            model.realize_with_first_state(s, horizon, mix(opts.env_seed, s as u64))?
        } else {
            model.realize(horizon, opts.env_seed)?
        };
        let mut seen_divergent_at = f64::INFINITY;
        for &t in &opts.t_grid {
            let class = classify(&env, t, opts)?;
            match class.0 {
                StabilityClass::Stable => {
                    if t > seen_divergent_at {
                        frontier_ok = false;
                    }
                    if t_ok.is_nan() || t > t_ok {
                        t_ok = t;
                    }
                }
                StabilityClass::Divergent => {
                    seen_divergent_at = seen_divergent_at.min(t);
                    if t_div.is_nan() || t < t_div {
                        t_div = t;
                    }
                }
                StabilityClass::Indeterminate => {}
            }
            cells.push(GridCell {
                state: s,
                t,
                class: class.0,
                value: class.1,
            });
        }
        if s == 0 {
            probe_env = Some(env);
        }
    }

    report.check(
        "stable-divergent-frontier-monotone",
        frontier_ok,
        if frontier_ok { 1.0 } else { 0.0 },
        1.0,
        "==",
        "no stable grid point above a divergent one, per state prefix",
    );

    // Monte Carlo cross-check at an interior stable t on the first prefix:
    // E exp(t W_depth) equals psi_depth(t) exactly.
    let env = probe_env.expect("at least one state");
    let t_star = opts.mc_t.or(if t_ok.is_nan() { None } else { Some(t_ok) });
    if let Some(t_star) = t_star {
        let psi = limits::quenched_mgf(&env, t_star, opts.mc_depth)?;
        let vals: Vec<f64> = (0..opts.mc_reps as u64)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let w = engine::path_w_values(
                    &env,
                    &[opts.mc_depth],
                    mix(mix(opts.traj_seed, stream::MC_CHECK), r),
                    opts.cap,
                )?[0];
                Ok((t_star * w).exp())
            })
            .collect::<Result<_>>()?;
        let mc = stats::mean(&vals);
        let se = (stats::variance(&vals) / vals.len() as f64).sqrt();
        report.check(
            "mc-cross-check",
            (mc - psi).abs() <= 3.0 * se,
            (mc - psi).abs(),
            3.0 * se,
            "<=",
            &format!(
                "Monte Carlo E exp({t_star} W_hat) = {mc:.9} vs psi_{}({t_star}) = {psi:.9}",
                opts.mc_depth
            ),
        );
    } else {
        report
            .notes
            .push("no stable grid point; Monte Carlo cross-check skipped".into());
    }

    report.extra = serde_json::json!({
        "grid": cells,
        "radius_interval": { "t_ok": nan_to_null(t_ok), "t_div": nan_to_null(t_div) },
        "n_cap": opts.n_cap,
    });
    report.notes.push(format!(
        "estimated exponential-moment radius interval: [{t_ok}, {t_div}]"
    ));

    report.finish(started);
    Ok(report)
}

fn nan_to_null(x: f64) -> serde_json::Value {
    if x.is_nan() {
        serde_json::Value::Null
    } else {
        serde_json::json!(x)
    }
}

/// Classifies one `t`: evaluates `psi_n(t)` for `n = 1..n_cap`, watching for
/// divergence and stabilization. Returns the class and the value at `n_cap`
/// when finite.
fn classify(
    env: &crate::env::EnvironmentSequence,
    t: f64,
    opts: &MgfOptions,
) -> Result<(StabilityClass, Option<f64>)> {
    let mut prev = None;
    for n in 1..=opts.n_cap {
        let v = match limits::quenched_mgf(env, t, n) {
            Ok(v) => v,
            Err(Error::MgfDiverges { .. }) => return Ok((StabilityClass::Divergent, None)),
            Err(e) => return Err(e),
        };
        if !v.is_finite() || v > opts.growth_ceiling {
            return Ok((StabilityClass::Divergent, None));
        }
        if n == opts.n_cap {
            let p: f64 = prev.expect("n_cap >= 2");
            let rel = (v - p).abs() / v.abs().max(1.0);
            return if rel < opts.stab_rel_tol {
                Ok((StabilityClass::Stable, Some(v)))
            } else {
                Ok((StabilityClass::Indeterminate, Some(v)))
            };
        }
        prev = Some(v);
    }
    unreachable!("loop returns at n_cap")
}
