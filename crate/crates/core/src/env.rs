//! Environment processes and realized environment sequences.
//!
//! An environment model generates the sequence of offspring laws, one per
//! generation. Three kinds are supported: an explicit deterministic list
//! (the varying-environment case, extended beyond the list by repeating the
//! last law or cycling), an i.i.d. mixture over finitely many laws, and a
//! finite-state Markov chain. A realized sequence is immutable and supports
//! the shift `T^n xi = (xi_n, xi_{n+1}, ...)`.

use crate::error::{Error, Result};
use crate::offspring::OffspringLaw;
use crate::rng::{mix, stream, SimRng};
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use std::sync::Arc;

const PROB_SUM_TOL: f64 = 1e-12;

/// How a deterministic law list extends beyond its explicit entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtendRule {
    RepeatLast,
    Cyclic,
}

/// A process generating environment sequences.
#[derive(Debug, Clone)]
pub enum EnvironmentModel {
    /// Fixed list of laws (varying environment; quenched statements only).
    Deterministic {
        laws: Vec<Arc<OffspringLaw>>,
        extend: ExtendRule,
    },
    /// Independent draws from a finite mixture each generation.
    Iid {
        laws: Vec<Arc<OffspringLaw>>,
        weights: Vec<f64>,
    },
    /// Finite-state Markov chain over laws.
    MarkovFinite {
        states: Vec<Arc<OffspringLaw>>,
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
}

fn check_distribution(name: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|&p| p.is_nan() || p < 0.0 || !p.is_finite()) {
        return Err(Error::InvalidModel(format!(
            "{name} has a negative or non-finite probability"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidModel(format!(
            "{name} sums to {sum}, must be 1 within {PROB_SUM_TOL}"
        )));
    }
    Ok(())
}

impl EnvironmentModel {
    pub fn deterministic(laws: Vec<OffspringLaw>, extend: ExtendRule) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidModel("deterministic law list is empty".into()));
        }
        Ok(Self::Deterministic {
            laws: laws.into_iter().map(Arc::new).collect(),
            extend,
        })
    }

    pub fn iid(components: Vec<(OffspringLaw, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidModel("iid mixture is empty".into()));
        }
        let weights: Vec<f64> = components.iter().map(|&(_, w)| w).collect();
        check_distribution("iid mixture", &weights)?;
        Ok(Self::Iid {
            laws: components.into_iter().map(|(l, _)| Arc::new(l)).collect(),
            weights,
        })
    }

    pub fn markov(
        states: Vec<OffspringLaw>,
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let k = states.len();
        if k == 0 {
            return Err(Error::InvalidModel("markov state list is empty".into()));
        }
        if transition.len() != k || transition.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidModel(format!(
                "transition matrix must be {k}x{k}"
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            check_distribution(&format!("transition row {i}"), row)?;
        }
        if initial.len() != k {
            return Err(Error::InvalidModel(format!(
                "initial distribution must have {k} entries"
            )));
        }
        check_distribution("initial distribution", &initial)?;
        Ok(Self::MarkovFinite {
            states: states.into_iter().map(Arc::new).collect(),
            transition,
            initial,
        })
    }

    fn all_laws(&self) -> &[Arc<OffspringLaw>] {
        match self {
            Self::Deterministic { laws, .. } => laws,
            Self::Iid { laws, .. } => laws,
            Self::MarkovFinite { states, .. } => states,
        }
    }

    /// Every possible law has `P(0) = 0` (strong supercriticality).
    pub fn strongly_supercritical(&self) -> bool {
        self.all_laws().iter().all(|l| l.is_p0_zero())
    }

    /// No possible law is a point mass.
    pub fn nondegenerate(&self) -> bool {
        self.all_laws().iter().all(|l| !l.is_degenerate())
    }

    /// The setting of the finite-state theorems: the environment takes
    /// values in a finite set.
    pub fn finite_state(&self) -> bool {
        matches!(self, Self::Iid { .. } | Self::MarkovFinite { .. })
    }

    /// Number of distinct environment states.
    pub fn state_count(&self) -> usize {
        self.all_laws().len()
    }

    /// Essential infimum of the offspring mean over the state space.
    pub fn min_mean(&self) -> f64 {
        self.all_laws()
            .iter()
            .map(|l| l.mean())
            .fold(f64::INFINITY, f64::min)
    }

    /// `a = E log m_0` under the stationary law of the environment. For a
    /// deterministic model this is the growth rate `lim log P_n / n`
    /// implied by the extension rule.
    pub fn log_mean_growth(&self) -> f64 {
        match self {
            Self::Deterministic { laws, extend } => match extend {
                ExtendRule::RepeatLast => laws.last().expect("nonempty").mean().ln(),
                ExtendRule::Cyclic => {
                    laws.iter().map(|l| l.mean().ln()).sum::<f64>() / laws.len() as f64
                }
            },
            Self::Iid { laws, weights } => laws
                .iter()
                .zip(weights)
                .map(|(l, &w)| w * l.mean().ln())
                .sum(),
            Self::MarkovFinite { states, .. } => {
                let pi = self.stationary_distribution().expect("markov model");
                states
                    .iter()
                    .zip(&pi)
                    .map(|(l, &w)| w * l.mean().ln())
                    .sum()
            }
        }
    }

    /// Stationary distribution of the Markov transition matrix (power
    /// iteration to 1e-12), the mixture weights for an i.i.d. model, and
    /// `None` for deterministic models.
    pub fn stationary_distribution(&self) -> Option<Vec<f64>> {
        match self {
            Self::Deterministic { .. } => None,
            Self::Iid { weights, .. } => Some(weights.clone()),
            Self::MarkovFinite { transition, .. } => {
                let k = transition.len();
                let mut pi = vec![1.0 / k as f64; k];
                for _ in 0..100_000 {
                    let mut next = vec![0.0; k];
                    for (i, row) in transition.iter().enumerate() {
                        for (j, &p) in row.iter().enumerate() {
                            next[j] += pi[i] * p;
                        }
                    }
                    let diff: f64 = next
                        .iter()
                        .zip(&pi)
                        .map(|(a, b)| (a - b).abs())
                        .sum();
                    pi = next;
                    if diff < 1e-12 {
                        break;
                    }
                }
                Some(pi)
            }
        }
    }

    /// Draws one realized sequence of `horizon` laws. Deterministic models
    /// ignore the seed; random models consume one stream derived from
    /// `env_seed`, so a longer horizon with the same seed extends the
    /// shorter realization prefix-consistently.
    pub fn realize(&self, horizon: usize, env_seed: u64) -> Result<EnvironmentSequence> {
        self.realize_from(horizon, env_seed, None)
    }

    /// Same as [`realize`](Self::realize) but forcing the first state,
    /// used when probing each environment state as the `xi_0` prefix.
    pub fn realize_with_first_state(
        &self,
        first_state: usize,
        horizon: usize,
        env_seed: u64,
    ) -> Result<EnvironmentSequence> {
        if first_state >= self.state_count() {
            return Err(Error::InvalidArgument(format!(
                "state {first_state} out of range ({} states)",
                self.state_count()
            )));
        }
        self.realize_from(horizon, env_seed, Some(first_state))
    }

    fn realize_from(
        &self,
        horizon: usize,
        env_seed: u64,
        first_state: Option<usize>,
    ) -> Result<EnvironmentSequence> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        let mut laws = Vec::with_capacity(horizon);
        let mut state_ids = Vec::with_capacity(horizon);
        match self {
            Self::Deterministic { laws: list, extend } => {
                for k in 0..horizon {
                    let idx = if k < list.len() {
                        k
                    } else {
                        match extend {
                            ExtendRule::RepeatLast => list.len() - 1,
                            ExtendRule::Cyclic => k % list.len(),
                        }
                    };
                    laws.push(Arc::clone(&list[idx]));
                    state_ids.push(idx);
                }
            }
            Self::Iid { laws: list, weights } => {
                let mut rng: SimRng = crate::rng::replicate_rng(env_seed, stream::ENV);
                let index = WeightedIndex::new(weights)
                    .map_err(|e| Error::InvalidModel(format!("iid weights: {e}")))?;
                for k in 0..horizon {
                    let idx = if k == 0 {
                        if let Some(s) = first_state {
                            // Keep the stream aligned with the unforced draw.
                            let _ = index.sample(&mut rng);
                            s
                        } else {
                            index.sample(&mut rng)
                        }
                    } else {
                        index.sample(&mut rng)
                    };
                    laws.push(Arc::clone(&list[idx]));
                    state_ids.push(idx);
                }
            }
            Self::MarkovFinite {
                states,
                transition,
                initial,
            } => {
                let mut rng: SimRng = crate::rng::replicate_rng(env_seed, stream::ENV);
                let mut state = match first_state {
                    Some(s) => s,
                    None => sample_index(initial, &mut rng),
                };
                for k in 0..horizon {
                    if k > 0 {
                        state = sample_index(&transition[state], &mut rng);
                    }
                    laws.push(Arc::clone(&states[state]));
                    state_ids.push(state);
                }
            }
        }
        Ok(EnvironmentSequence {
            laws,
            state_ids,
            origin: Some(self.clone()),
            env_seed,
            offset: 0,
        })
    }
}

fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One realized environment `xi = (xi_0, ..., xi_{horizon-1})`.
#[derive(Debug, Clone)]
pub struct EnvironmentSequence {
    laws: Vec<Arc<OffspringLaw>>,
    state_ids: Vec<usize>,
    /// The model that generated this realization (None for ad-hoc
    /// sequences). Laws are shared, so the clone is pointer-sized per law.
    origin: Option<EnvironmentModel>,
    env_seed: u64,
    offset: usize,
}

impl EnvironmentSequence {
    /// Builds a sequence directly from laws (mostly for tests and the
    /// Python bindings).
    pub fn from_laws(laws: Vec<OffspringLaw>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidArgument("sequence must have length >= 1".into()));
        }
        let n = laws.len();
        Ok(Self {
            laws: laws.into_iter().map(Arc::new).collect(),
            state_ids: (0..n).collect(),
            origin: None,
            env_seed: 0,
            offset: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }

    pub fn law(&self, k: usize) -> &OffspringLaw {
        &self.laws[k]
    }

    pub fn laws(&self) -> impl Iterator<Item = &OffspringLaw> {
        self.laws.iter().map(|l| l.as_ref())
    }

    /// Index of the model state realized at generation `k`.
    pub fn state_id(&self, k: usize) -> usize {
        self.state_ids[k]
    }

    pub fn env_seed(&self) -> u64 {
        self.env_seed
    }

    /// How many shifts produced this sequence.
    pub fn offset(&self) -> usize {
        self.offset
    }

    /// The shifted environment `T^n xi`: the suffix starting at `n`, with
    /// the accumulated offset updated. Requires `n < len`.
    pub fn shift(&self, n: usize) -> Result<Self> {
        if n >= self.laws.len() {
            return Err(Error::ShiftOutOfRange {
                offset: n,
                len: self.laws.len(),
            });
        }
        Ok(Self {
            laws: self.laws[n..].to_vec(),
            state_ids: self.state_ids[n..].to_vec(),
            origin: self.origin.clone(),
            env_seed: self.env_seed,
            offset: self.offset + n,
        })
    }

    /// The model this sequence was realized from, when known.
    pub fn origin_model(&self) -> Option<&EnvironmentModel> {
        self.origin.as_ref()
    }

    /// Seed for the trajectory replicate stream attached to this
    /// environment realization.
    pub fn derived_seed(&self, base: u64, tag: u64) -> u64 {
        mix(mix(base, tag), self.env_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson(lambda: f64) -> OffspringLaw {
        OffspringLaw::poisson(lambda).unwrap()
    }

    #[test]
    fn deterministic_repeat_last() {
        let model =
            EnvironmentModel::deterministic(vec![poisson(2.0)], ExtendRule::RepeatLast).unwrap();
        let env = model.realize(5, 123).unwrap();
        assert_eq!(env.len(), 5);
        for k in 0..5 {
            assert_eq!(env.law(k).mean(), 2.0);
        }
        // Deterministic models ignore the seed.
        let env2 = model.realize(5, 456).unwrap();
        for k in 0..5 {
            assert_eq!(env2.state_id(k), env.state_id(k));
        }
    }

    #[test]
    fn deterministic_cyclic_extension() {
        let model = EnvironmentModel::deterministic(
            vec![poisson(1.5), poisson(2.5)],
            ExtendRule::Cyclic,
        )
        .unwrap();
        let env = model.realize(6, 0).unwrap();
        let means: Vec<f64> = env.laws().map(|l| l.mean()).collect();
        assert_eq!(means, vec![1.5, 2.5, 1.5, 2.5, 1.5, 2.5]);
    }

    #[test]
    fn degenerate_iid_mixture_is_constant() {
        let model = EnvironmentModel::iid(vec![(poisson(2.0), 1.0)]).unwrap();
        for seed in [0u64, 1, 99] {
            let env = model.realize(4, seed).unwrap();
            assert!(env.laws().all(|l| l.mean() == 2.0));
        }
    }

    #[test]
    fn permutation_chain_alternates() {
        let model = EnvironmentModel::markov(
            vec![poisson(1.5), poisson(2.5)],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let env = model.realize(6, 7).unwrap();
        let ids: Vec<usize> = (0..6).map(|k| env.state_id(k)).collect();
        assert_eq!(ids, vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(EnvironmentModel::iid(vec![(poisson(2.0), 0.5)]).is_err());
        assert!(EnvironmentModel::markov(
            vec![poisson(2.0)],
            vec![vec![0.9]],
            vec![1.0]
        )
        .is_err());
        assert!(EnvironmentModel::markov(
            vec![poisson(2.0)],
            vec![vec![1.0]],
            vec![0.8]
        )
        .is_err());
        let model =
            EnvironmentModel::deterministic(vec![poisson(2.0)], ExtendRule::RepeatLast).unwrap();
        assert!(model.realize(0, 0).is_err());
    }

    #[test]
    fn realize_is_reproducible_and_prefix_consistent() {
        let model = EnvironmentModel::iid(vec![
            (poisson(1.5), 0.5),
            (poisson(2.5), 0.5),
        ])
        .unwrap();
        let a = model.realize(50, 42).unwrap();
        let b = model.realize(50, 42).unwrap();
        let longer = model.realize(80, 42).unwrap();
        for k in 0..50 {
            assert_eq!(a.state_id(k), b.state_id(k));
            assert_eq!(a.state_id(k), longer.state_id(k));
        }
        let c = model.realize(50, 43).unwrap();
        assert!((0..50).any(|k| a.state_id(k) != c.state_id(k)));
    }

    #[test]
    fn shift_is_suffix_with_offset() {
        let model = EnvironmentModel::deterministic(
            vec![poisson(1.0), poisson(2.0), poisson(3.0), poisson(4.0)],
            ExtendRule::RepeatLast,
        )
        .unwrap();
        let env = model.realize(4, 0).unwrap();
        let s0 = env.shift(0).unwrap();
        assert_eq!(s0.len(), 4);
        assert_eq!(s0.offset(), 0);
        let s1 = env.shift(1).unwrap();
        assert_eq!(s1.len(), 3);
        assert_eq!(s1.offset(), 1);
        assert_eq!(s1.law(0).mean(), 2.0);
        // shift(shift(xi, a), b) = shift(xi, a + b)
        let s12 = s1.shift(2).unwrap();
        let s3 = env.shift(3).unwrap();
        assert_eq!(s12.offset(), s3.offset());
        assert_eq!(s12.law(0).mean(), s3.law(0).mean());
        assert!(s12.origin_model().is_some());
        // mean of first law of shift(xi, n) is m_n of xi
        for n in 0..4 {
            assert_eq!(env.shift(n).unwrap().law(0).mean(), env.law(n).mean());
        }
        assert!(env.shift(4).is_err());
    }

    #[test]
    fn markov_stationary_distribution_power_iteration() {
        let model = EnvironmentModel::markov(
            vec![poisson(1.5), poisson(2.5)],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let pi = model.stationary_distribution().unwrap();
        // pi P = pi for P = [[.9,.1],[.2,.8]] gives pi = (2/3, 1/3).
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-10);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn empirical_state_frequencies_match_stationary() {
        // 1e5 realized steps within 3 binomial standard errors, with the
        // Markov chain started from its stationary distribution.
        let steps = 100_000usize;

        let iid = EnvironmentModel::iid(vec![
            (poisson(1.5), 0.3),
            (poisson(2.5), 0.7),
        ])
        .unwrap();
        let env = iid.realize(steps, 11).unwrap();
        let freq1 = (0..steps).filter(|&k| env.state_id(k) == 1).count() as f64
            / steps as f64;
        let se = (0.7f64 * 0.3 / steps as f64).sqrt();
        assert!((freq1 - 0.7).abs() < 3.0 * se, "iid freq {freq1}");

        let markov = EnvironmentModel::markov(
            vec![poisson(1.5), poisson(2.5)],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![2.0 / 3.0, 1.0 / 3.0],
        )
        .unwrap();
        let pi = markov.stationary_distribution().unwrap();
        let env = markov.realize(steps, 13).unwrap();
        let freq0 = (0..steps).filter(|&k| env.state_id(k) == 0).count() as f64
            / steps as f64;
        // Correlated chain: inflate the binomial SE by the mixing factor
        // (1+rho)/(1-rho) with rho = 0.7 the second eigenvalue.
        let se0 = (pi[0] * (1.0 - pi[0]) / steps as f64).sqrt()
            * ((1.0 + 0.7f64) / (1.0 - 0.7)).sqrt();
        assert!((freq0 - pi[0]).abs() < 3.0 * se0, "markov freq {freq0}");
    }

    #[test]
    fn derived_flags() {
        let geo = EnvironmentModel::iid(vec![
            (OffspringLaw::geometric_shifted(0.4).unwrap(), 0.5),
            (OffspringLaw::geometric_shifted(0.5).unwrap(), 0.5),
        ])
        .unwrap();
        assert!(geo.strongly_supercritical());
        assert!(geo.nondegenerate());
        assert!(geo.finite_state());
        assert!((geo.min_mean() - 5.0 / 3.0).abs() < 1e-12);

        let unit = EnvironmentModel::deterministic(
            vec![OffspringLaw::finite_support(&[(1, 1.0)]).unwrap()],
            ExtendRule::RepeatLast,
        )
        .unwrap();
        assert!(unit.strongly_supercritical());
        assert!(!unit.nondegenerate());
        assert!(!unit.finite_state());
    }

    #[test]
    fn forced_first_state_realization() {
        let model = EnvironmentModel::markov(
            vec![poisson(1.5), poisson(2.5)],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let env = model.realize_with_first_state(1, 10, 3).unwrap();
        assert_eq!(env.state_id(0), 1);
        assert!(model.realize_with_first_state(2, 10, 3).is_err());
    }
}
