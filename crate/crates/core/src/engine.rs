//! Trajectory simulation under a fixed realized environment.
//!
//! A trajectory carries the population sizes `Z_k`, the log-normalizers
//! `log P_k` (compensated summation) and the martingale values
//! `W_k = exp(log Z_k - log P_k)`. Estimates of the limit `W` come from deep
//! continuation of the same line of descent: `W_hat = W_{n+K}`, which has
//! the law of the true decomposition over the generation-`n` particles at a
//! cost of O(K) convolution-closed draws instead of O(Z_n) subtrees.

use crate::error::{Error, Result};
use crate::env::EnvironmentSequence;
use crate::limits;
use crate::numerics::CompensatedSum;
use crate::rng::{mix, replicate_rng, stream, SimRng};
use num_bigint::BigUint;
use rayon::prelude::*;

/// Hard ceiling on the population cap: totals stay inside the range where
/// the integer-valued draws are exact in 64-bit arithmetic.
pub const MAX_CAP: u64 = 1 << 62;

/// Default population cap.
pub const DEFAULT_CAP: u64 = MAX_CAP;

/// One simulated path `(Z_k, log P_k, W_k)` for `k <= n`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    z: Vec<BigUint>,
    log_p: Vec<f64>,
    w: Vec<f64>,
    traj_seed: u64,
    capped: bool,
    /// Generator state after the last completed generation; continuation
    /// picks up exactly here.
    rng: SimRng,
    log_p_acc: CompensatedSum,
}

impl Trajectory {
    /// Number of simulated generations (`Z_0..Z_n` has `n` generations).
    pub fn generations(&self) -> usize {
        self.z.len() - 1
    }

    pub fn z(&self) -> &[BigUint] {
        &self.z
    }

    pub fn log_p(&self) -> &[f64] {
        &self.log_p
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn traj_seed(&self) -> u64 {
        self.traj_seed
    }

    /// True when a generation exceeded the population cap and the path was
    /// truncated at the last complete generation.
    pub fn capped(&self) -> bool {
        self.capped
    }

    fn z_u64(&self, k: usize) -> u64 {
        use num_traits::ToPrimitive;
        self.z[k].to_u64().expect("populations stay below the cap")
    }
}

/// Deep-horizon estimate of the martingale limit `W`.
#[derive(Debug, Clone, Copy)]
pub struct WEstimate {
    /// `W_hat = W_{n+K}`.
    pub value: f64,
    /// The generation `n` the estimate refines.
    pub base_generation: usize,
    /// The continuation depth `K`.
    pub extra_depth: usize,
    /// Quenched bound on `Var(W_hat - W)`: the variance-series tail from
    /// `n+K`.
    pub residual_variance_bound: f64,
}

fn check_cap(cap: u64) -> Result<()> {
    if cap == 0 {
        return Err(Error::InvalidArgument("population cap must be >= 1".into()));
    }
    if cap > MAX_CAP {
        return Err(Error::InvalidArgument(format!(
            "population cap {cap} exceeds 2^62; integer-exact sampling is only \
             guaranteed up to 2^62"
        )));
    }
    Ok(())
}

/// Simulates `Z_0 = 1, Z_{k+1} = sum of Z_k offspring draws` for `n_max`
/// generations under the realized environment. Deterministic in
/// `(env, traj_seed)`. A generation exceeding `cap` truncates the
/// trajectory at the last complete generation and sets the `capped` flag.
pub fn simulate(
    env: &EnvironmentSequence,
    n_max: usize,
    traj_seed: u64,
    cap: u64,
) -> Result<Trajectory> {
    check_cap(cap)?;
    if n_max > env.len() {
        return Err(Error::EnvTooShort {
            needed: n_max,
            have: env.len(),
        });
    }
    let mut rng = replicate_rng(traj_seed, stream::TRAJ);
    let mut traj = Trajectory {
        z: vec![BigUint::from(1u8)],
        log_p: vec![0.0],
        w: vec![1.0],
        traj_seed,
        capped: false,
        rng: rng.clone(),
        log_p_acc: CompensatedSum::new(),
    };
    for k in 0..n_max {
        let zk = traj.z_u64(k);
        let next = match env.law(k).sample_total(zk, cap, &mut rng) {
            Ok(t) => t,
            Err(Error::PopulationCap { .. }) => {
                traj.capped = true;
                break;
            }
            Err(e) => return Err(e),
        };
        traj.log_p_acc.add(env.law(k).mean().ln());
        let log_p = traj.log_p_acc.value();
        traj.z.push(BigUint::from(next));
        traj.log_p.push(log_p);
        traj.w.push(w_value(next, log_p));
    }
    traj.rng = rng;
    Ok(traj)
}

#[inline]
fn w_value(z: u64, log_p: f64) -> f64 {
    if z == 0 {
        0.0
    } else {
        ((z as f64).ln() - log_p).exp()
    }
}

/// Continues a trajectory `extra_depth` more generations (without mutating
/// it) and returns `W_{n+K}` together with the quenched residual variance
/// bound from the variance-series tail.
pub fn estimate_w(
    env: &EnvironmentSequence,
    traj: &Trajectory,
    extra_depth: usize,
) -> Result<WEstimate> {
    if traj.capped {
        return Err(Error::CappedTrajectory);
    }
    if extra_depth == 0 {
        return Err(Error::InvalidArgument("extra_depth must be >= 1".into()));
    }
    let n = traj.generations();
    let target = n + extra_depth;
    if target > env.len() {
        return Err(Error::EnvTooShort {
            needed: target,
            have: env.len(),
        });
    }
    let mut rng = traj.rng.clone();
    let mut z = traj.z_u64(n);
    let mut acc = traj.log_p_acc;
    // The continuation itself cannot be capped: the estimator must return a
    // value, so it runs with the hard ceiling and reports an error only if
    // even that is exceeded.
    for k in n..target {
        z = match env.law(k).sample_total(z, MAX_CAP, &mut rng) {
            Ok(t) => t,
            Err(Error::PopulationCap {
                attempted, cap, ..
            }) => {
                return Err(Error::PopulationCap {
                    generation: k,
                    attempted,
                    cap,
                })
            }
            Err(e) => return Err(e),
        };
        acc.add(env.law(k).mean().ln());
    }
    let value = w_value(z, acc.value());
    let series = limits::delta2_partial(env, env.len())?;
    let residual_variance_bound = series.tail_from(target);
    Ok(WEstimate {
        value,
        base_generation: n,
        extra_depth,
        residual_variance_bound,
    })
}

/// Streamlined path simulation recording `W` at the requested generations
/// (ascending). The workhorse behind every replicated campaign: no
/// arbitrary-precision bookkeeping, absorption shortcut at extinction.
pub fn path_w_values(
    env: &EnvironmentSequence,
    points: &[usize],
    traj_seed: u64,
    cap: u64,
) -> Result<Vec<f64>> {
    check_cap(cap)?;
    let &last = points.last().expect("at least one recording point");
    debug_assert!(points.windows(2).all(|w| w[0] < w[1]));
    if last > env.len() {
        return Err(Error::EnvTooShort {
            needed: last,
            have: env.len(),
        });
    }
    let mut rng = replicate_rng(traj_seed, stream::TRAJ);
    let mut out = Vec::with_capacity(points.len());
    let mut next_point = 0usize;
    let mut z: u64 = 1;
    let mut acc = CompensatedSum::new();
    for k in 0..=last {
        if next_point < points.len() && points[next_point] == k {
            out.push(w_value(z, acc.value()));
            next_point += 1;
        }
        if k == last {
            break;
        }
        if z > 0 {
            z = match env.law(k).sample_total(z, cap, &mut rng) {
                Ok(t) => t,
                Err(Error::PopulationCap {
                    attempted, cap, ..
                }) => {
                    return Err(Error::PopulationCap {
                        generation: k,
                        attempted,
                        cap,
                    })
                }
                Err(e) => return Err(e),
            };
        }
        acc.add(env.law(k).mean().ln());
    }
    Ok(out)
}

/// `reps` independent trajectories under the same realized environment
/// (quenched sampling), each recording `(W_n, W_hat - W_n)` with
/// `W_hat = W_{n + extra_depth}`. Replicate `r` uses the derived seed
/// `mix(seed, r)`; the output is ordered by replicate index, so any
/// parallel execution order yields identical results.
pub fn sample_fluctuation(
    env: &EnvironmentSequence,
    n: usize,
    extra_depth: usize,
    reps: usize,
    seed: u64,
    cap: u64,
) -> Result<Vec<(f64, f64)>> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    if extra_depth == 0 {
        return Err(Error::InvalidArgument("extra_depth must be >= 1".into()));
    }
    let points = [n, n + extra_depth];
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let ws = path_w_values(env, &points, mix(seed, r), cap)?;
            Ok((ws[0], ws[1] - ws[0]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentModel, ExtendRule};
    use crate::offspring::OffspringLaw;

    fn constant_env(law: OffspringLaw, horizon: usize) -> EnvironmentSequence {
        EnvironmentModel::deterministic(vec![law], ExtendRule::RepeatLast)
            .unwrap()
            .realize(horizon, 0)
            .unwrap()
    }

    fn unit_env(horizon: usize) -> EnvironmentSequence {
        constant_env(OffspringLaw::finite_support(&[(1, 1.0)]).unwrap(), horizon)
    }

    fn doubling_env(horizon: usize) -> EnvironmentSequence {
        constant_env(OffspringLaw::finite_support(&[(2, 1.0)]).unwrap(), horizon)
    }

    #[test]
    fn unit_reproduction_is_constant_one() {
        let env = unit_env(10);
        let traj = simulate(&env, 10, 1, DEFAULT_CAP).unwrap();
        assert_eq!(traj.generations(), 10);
        for k in 0..=10 {
            assert_eq!(traj.z()[k], BigUint::from(1u8));
            assert_eq!(traj.w()[k], 1.0);
        }
        assert!(!traj.capped());
    }

    #[test]
    fn deterministic_doubling_keeps_w_exactly_one() {
        let env = doubling_env(30);
        let traj = simulate(&env, 30, 5, DEFAULT_CAP).unwrap();
        for k in 0..=30 {
            assert_eq!(traj.z()[k], BigUint::from(1u64 << k));
            assert!((traj.w()[k] - 1.0).abs() < 1e-12, "W_{k} = {}", traj.w()[k]);
        }
    }

    #[test]
    fn representation_consistency() {
        use num_traits::ToPrimitive;
        let env = constant_env(OffspringLaw::poisson(2.0).unwrap(), 25);
        let traj = simulate(&env, 25, 9, DEFAULT_CAP).unwrap();
        for k in 0..=traj.generations() {
            let z = traj.z()[k].to_f64().unwrap();
            if z > 0.0 {
                let expect = (z.ln() - traj.log_p()[k]).exp();
                assert!(
                    (traj.w()[k] - expect).abs() <= 1e-9 * traj.w()[k].abs(),
                    "k = {k}"
                );
            } else {
                assert_eq!(traj.w()[k], 0.0);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let env = constant_env(OffspringLaw::poisson(2.0).unwrap(), 20);
        let a = simulate(&env, 20, 77, DEFAULT_CAP).unwrap();
        let b = simulate(&env, 20, 77, DEFAULT_CAP).unwrap();
        assert_eq!(a.z(), b.z());
        assert_eq!(a.w(), b.w());
        let c = simulate(&env, 20, 78, DEFAULT_CAP).unwrap();
        assert_ne!(a.z(), c.z());
    }

    #[test]
    fn martingale_mean_of_w10() {
        // E_xi W_n = 1: sample mean of W_10 over 1e4 trajectories within
        // 3 standard errors.
        let env = constant_env(OffspringLaw::poisson(2.0).unwrap(), 10);
        let reps = 10_000;
        let ws: Vec<f64> = (0..reps)
            .map(|r| {
                simulate(&env, 10, mix(31, r as u64), DEFAULT_CAP)
                    .unwrap()
                    .w()[10]
            })
            .collect();
        let mean = crate::stats::mean(&ws);
        let se = (crate::stats::variance(&ws) / reps as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn one_step_martingale_property_across_models() {
        // Paired one-step check E[W_{k+1} - W_k] = 0 within 3 SE, k <= 10.
        let models = [
            EnvironmentModel::deterministic(
                vec![OffspringLaw::poisson(2.0).unwrap()],
                ExtendRule::RepeatLast,
            )
            .unwrap(),
            EnvironmentModel::iid(vec![
                (OffspringLaw::poisson(1.5).unwrap(), 0.5),
                (OffspringLaw::poisson(2.5).unwrap(), 0.5),
            ])
            .unwrap(),
            EnvironmentModel::markov(
                vec![
                    OffspringLaw::geometric_shifted(0.4).unwrap(),
                    OffspringLaw::geometric_shifted(0.5).unwrap(),
                ],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                vec![0.5, 0.5],
            )
            .unwrap(),
        ];
        let reps = 100_000usize;
        for (mi, model) in models.iter().enumerate() {
            let env = model.realize(11, 1000 + mi as u64).unwrap();
            let mut diffs: Vec<Vec<f64>> =
                std::iter::repeat_with(|| Vec::with_capacity(reps)).take(10).collect();
            for r in 0..reps {
                let ws = path_w_values(
                    &env,
                    &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
                    mix(500 + mi as u64, r as u64),
                    DEFAULT_CAP,
                )
                .unwrap();
                for k in 0..10 {
                    diffs[k].push(ws[k + 1] - ws[k]);
                }
            }
            for (k, d) in diffs.iter().enumerate() {
                let mean = crate::stats::mean(d);
                let se = (crate::stats::variance(d) / reps as f64).sqrt();
                assert!(
                    mean.abs() < 3.0 * se.max(1e-15),
                    "model {mi}, step {k}: mean {mean}, se {se}"
                );
            }
        }
    }

    #[test]
    fn estimate_w_trivial_environments() {
        let env = unit_env(40);
        let traj = simulate(&env, 10, 3, DEFAULT_CAP).unwrap();
        let est = estimate_w(&env, &traj, 25).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.base_generation, 10);
        assert_eq!(est.residual_variance_bound, 0.0);

        let env = doubling_env(40);
        let traj = simulate(&env, 10, 3, DEFAULT_CAP).unwrap();
        let est = estimate_w(&env, &traj, 25).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_w_residual_bound_poisson() {
        // Constant Poisson(2), n = 5, K = 25: the variance-series tail from
        // 30 is sum_{k>=30} 2^{-k} * (1/2) = 2^{-30} <= 1e-8.
        let env = constant_env(OffspringLaw::poisson(2.0).unwrap(), 90);
        let traj = simulate(&env, 5, 4, DEFAULT_CAP).unwrap();
        let est = estimate_w(&env, &traj, 25).unwrap();
        let expect = 2.0f64.powi(-30);
        assert!(est.residual_variance_bound <= 1e-8);
        assert!(
            (est.residual_variance_bound - expect).abs() < 1e-12,
            "bound {} vs {}",
            est.residual_variance_bound,
            expect
        );
    }

    #[test]
    fn extinction_absorbs() {
        let law = OffspringLaw::finite_support(&[(0, 0.6), (2, 0.4)]).unwrap();
        let env = constant_env(law, 60);
        // Find a seed whose path dies, then check absorption.
        let mut found = false;
        for seed in 0..50u64 {
            let traj = simulate(&env, 30, seed, DEFAULT_CAP).unwrap();
            if let Some(first_zero) = traj.w().iter().position(|&w| w == 0.0) {
                for k in first_zero..=traj.generations() {
                    assert_eq!(traj.w()[k], 0.0);
                    assert_eq!(traj.z()[k], BigUint::from(0u8));
                }
                let est = estimate_w(&env, &traj, 10).unwrap();
                assert_eq!(est.value, 0.0);
                found = true;
                break;
            }
        }
        assert!(found, "no extinct path among the probed seeds");
    }

    #[test]
    fn cap_truncates_at_last_complete_generation() {
        let env = doubling_env(40);
        let traj = simulate(&env, 40, 0, 1024).unwrap();
        assert!(traj.capped());
        assert_eq!(traj.generations(), 10); // 2^10 = 1024 fits, 2^11 does not
        assert_eq!(traj.z()[10], BigUint::from(1024u32));
        assert!(matches!(
            estimate_w(&env, &traj, 5),
            Err(Error::CappedTrajectory)
        ));
    }

    #[test]
    fn fluctuation_sampling_contracts() {
        let env = unit_env(40);
        let pairs = sample_fluctuation(&env, 5, 25, 100, 9, DEFAULT_CAP).unwrap();
        assert!(pairs.iter().all(|&(w, dw)| w == 1.0 && dw == 0.0));

        // reps = 1 is bit-reproducible.
        let env = constant_env(OffspringLaw::poisson(2.0).unwrap(), 40);
        let a = sample_fluctuation(&env, 5, 25, 1, 11, DEFAULT_CAP).unwrap();
        let b = sample_fluctuation(&env, 5, 25, 1, 11, DEFAULT_CAP).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fluctuation_variance_matches_delta_tail() {
        // Var(W_hat - W_5) for constant Poisson(2) is 2^{-5} - 2^{-30};
        // the sample variance over 1e5 replicates lands within 5%.
        let env = constant_env(OffspringLaw::poisson(2.0).unwrap(), 40);
        let pairs = sample_fluctuation(&env, 5, 25, 100_000, 2024, DEFAULT_CAP).unwrap();
        let dws: Vec<f64> = pairs.iter().map(|&(_, dw)| dw).collect();
        let var = crate::stats::variance(&dws);
        let expect = 2.0f64.powi(-5);
        assert!(
            (var - expect).abs() < 0.05 * expect,
            "var {var} vs {expect}"
        );
    }

    #[test]
    fn trivial_csv_points_line_up() {
        // path_w_values returns exactly the requested generations.
        let env = doubling_env(12);
        let ws = path_w_values(&env, &[0, 3, 12], 1, DEFAULT_CAP).unwrap();
        assert_eq!(ws, vec![1.0, 1.0, 1.0]);
    }
}
