//! Offspring-law families with exact moments, probability generating
//! functions, single-parent sampling and convolution-closed total-offspring
//! sampling.
//!
//! Three families cover every regime the verification campaigns need:
//!
//! * `Poisson(lambda)` — second moments, extinction atoms;
//! * `GeometricShifted(s)` on `{1, 2, ...}` — strongly supercritical with
//!   exponential moments, and the total of `z` parents is `z` plus a
//!   negative binomial, sampled exactly through a gamma-Poisson mixture;
//! * `FiniteSupport` — arbitrary finite pmfs, including the truncated
//!   power-tail construction used for the polynomial-rate experiments.
//!
//! `sample_total` draws the exact distribution of the sum of `z` i.i.d.
//! offspring without looping over parents: Poisson totals collapse to one
//! Poisson draw, shifted-geometric totals to one gamma and one Poisson
//! draw, and finite-support totals to a multinomial realized as a chain of
//! O(1) binomial draws plus a conditioned tail.

mod alias;
pub(crate) mod binomial;

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;
use crate::rng::SimRng;
use alias::AliasTable;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

/// Probability deviation below which an almost-normalized pmf is rescaled;
/// anything worse is rejected as user error.
const RENORM_TOL: f64 = 1e-9;

/// Per-parent loop threshold for finite-support totals.
const SMALL_Z_LOOP: u64 = 16;

#[derive(Debug, Clone)]
enum Family {
    GeometricShifted {
        s: f64,
    },
    Poisson {
        lambda: f64,
        dist: Poisson<f64>,
    },
    Finite(FiniteSupport),
}

#[derive(Debug, Clone)]
struct FiniteSupport {
    /// Support values, strictly ascending.
    values: Vec<u64>,
    /// Normalized probabilities, same order.
    probs: Vec<f64>,
    /// Inclusive cumulative sums; last entry pinned to exactly 1.
    cdf: Vec<f64>,
    alias: AliasTable,
}

/// One reproduction distribution with exact moment, PGF and sampling access.
#[derive(Debug, Clone)]
pub struct OffspringLaw {
    family: Family,
    mean: f64,
    second_moment: f64,
    p_zero: f64,
    degenerate: bool,
}

impl OffspringLaw {
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidLaw(format!(
                "poisson mean must be in (0, inf), got {lambda}"
            )));
        }
        let dist = Poisson::new(lambda)
            .map_err(|e| Error::InvalidLaw(format!("poisson({lambda}): {e}")))?;
        Ok(Self {
            family: Family::Poisson { lambda, dist },
            mean: lambda,
            second_moment: lambda + lambda * lambda,
            p_zero: (-lambda).exp(),
            degenerate: false,
        })
    }

    /// Shifted geometric on `{1, 2, ...}`: `P(k) = (1-s) s^{k-1}`.
    pub fn geometric_shifted(s: f64) -> Result<Self> {
        if !s.is_finite() || s <= 0.0 || s >= 1.0 {
            return Err(Error::InvalidLaw(format!(
                "geometric_shifted parameter must be in (0,1), got {s}"
            )));
        }
        let mean = 1.0 / (1.0 - s);
        let second = (1.0 + s) / ((1.0 - s) * (1.0 - s));
        Ok(Self {
            family: Family::GeometricShifted { s },
            mean,
            second_moment: second,
            p_zero: 0.0,
            degenerate: false,
        })
    }

    /// Law from explicit `(value, probability)` atoms.
    pub fn finite_support(pmf: &[(u64, f64)]) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidLaw("finite support pmf is empty".into()));
        }
        let mut pairs: Vec<(u64, f64)> = pmf.to_vec();
        pairs.sort_by_key(|&(v, _)| v);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidLaw(format!(
                    "duplicate support value {}",
                    w[0].0
                )));
            }
        }
        if let Some(&(v, p)) = pairs.iter().find(|&&(_, p)| p.is_nan() || p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidLaw(format!(
                "probability of value {v} is invalid: {p}"
            )));
        }
        let mut sum = CompensatedSum::new();
        for &(_, p) in &pairs {
            sum.add(p);
        }
        let total = sum.value();
        if (total - 1.0).abs() >= RENORM_TOL {
            return Err(Error::InvalidLaw(format!(
                "probabilities sum to {total}, off by more than {RENORM_TOL}"
            )));
        }
        let values: Vec<u64> = pairs.iter().map(|&(v, _)| v).collect();
        let probs: Vec<f64> = pairs.iter().map(|&(_, p)| p / total).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = CompensatedSum::new();
        for &p in &probs {
            acc.add(p);
            cdf.push(acc.value().min(1.0));
        }
        *cdf.last_mut().expect("nonempty") = 1.0;

        let mut mean = CompensatedSum::new();
        let mut second = CompensatedSum::new();
        for (&v, &p) in values.iter().zip(&probs) {
            mean.add(v as f64 * p);
            second.add((v as f64) * (v as f64) * p);
        }
        let mean = mean.value();
        if mean <= 0.0 {
            return Err(Error::InvalidLaw(
                "offspring mean must be positive (law is a point mass at 0)".into(),
            ));
        }
        let p_zero = if values[0] == 0 { probs[0] } else { 0.0 };
        let degenerate = probs.iter().any(|&p| p >= 1.0 - 1e-12);
        let alias = AliasTable::new(&probs);
        Ok(Self {
            family: Family::Finite(FiniteSupport {
                values,
                probs,
                cdf,
                alias,
            }),
            mean,
            second_moment: second.value(),
            p_zero,
            degenerate,
        })
    }

    /// Truncated power tail `P(k) ~ k^{-exponent}` on `{1, ..., kmax}`,
    /// normalized exactly. Finite mean with an effectively infinite variance
    /// at desk scale; the workhorse for the polynomial-rate experiments.
    pub fn power_tail(exponent: f64, kmax: u64) -> Result<Self> {
        if exponent.is_nan() || exponent <= 1.0 || !exponent.is_finite() {
            return Err(Error::InvalidLaw(format!(
                "power tail exponent must exceed 1, got {exponent}"
            )));
        }
        if kmax == 0 || kmax > 100_000_000 {
            return Err(Error::InvalidLaw(format!(
                "power tail kmax must be in [1, 1e8], got {kmax}"
            )));
        }
        let mut weights = Vec::with_capacity(kmax as usize);
        let mut sum = CompensatedSum::new();
        for k in 1..=kmax {
            let w = (k as f64).powf(-exponent);
            weights.push(w);
            sum.add(w);
        }
        let total = sum.value();
        let pmf: Vec<(u64, f64)> = (1..=kmax)
            .zip(weights.iter().map(|w| w / total))
            .collect();
        Self::finite_support(&pmf)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `P(X = 0)`.
    pub fn p_zero(&self) -> f64 {
        self.p_zero
    }

    /// True when the law never produces zero offspring.
    pub fn is_p0_zero(&self) -> bool {
        self.p_zero == 0.0
    }

    /// True when some single value carries all the mass.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// `m(p) = sum_k k^p P(k)`, the p-th moment. Closed forms for the first
    /// two moments; otherwise the defining series summed until the tail
    /// bound drops below 1e-14 of the partial sum (exact finite sum for
    /// finite-support laws).
    pub fn moment(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "moment order must be >= 1, got {p}"
            )));
        }
        if p == 1.0 {
            return Ok(self.mean);
        }
        if p == 2.0 {
            return Ok(self.second_moment);
        }
        match &self.family {
            Family::Finite(fs) => {
                let mut acc = CompensatedSum::new();
                for (&v, &pr) in fs.values.iter().zip(&fs.probs) {
                    if v > 0 {
                        acc.add((v as f64).powf(p) * pr);
                    }
                }
                Ok(acc.value())
            }
            Family::Poisson { lambda, .. } => {
                // pmf recurrence with a geometric tail bound once past the mode.
                let mut term_pmf = (-lambda).exp(); // P(0)
                let mut acc = CompensatedSum::new();
                let mut k = 0u64;
                loop {
                    k += 1;
                    term_pmf *= lambda / k as f64;
                    let term = (k as f64).powf(p) * term_pmf;
                    acc.add(term);
                    if (k as f64) > 2.0 * lambda + 10.0 {
                        let ratio = lambda / (k as f64 + 1.0)
                            * ((k as f64 + 1.0) / k as f64).powf(p);
                        if ratio < 1.0 {
                            let tail = term * ratio / (1.0 - ratio);
                            if tail < 1e-14 * acc.value() {
                                return Ok(acc.value());
                            }
                        }
                    }
                    if k > 100_000_000 {
                        return Err(Error::InvalidArgument(
                            "poisson moment series did not converge".into(),
                        ));
                    }
                }
            }
            Family::GeometricShifted { s } => {
                let mut term_pmf = 1.0 - s; // P(1)
                let mut acc = CompensatedSum::new();
                let mut k = 1u64;
                loop {
                    let term = (k as f64).powf(p) * term_pmf;
                    acc.add(term);
                    let ratio = s * ((k as f64 + 1.0) / k as f64).powf(p);
                    if ratio < 1.0 {
                        let tail = term * ratio / (1.0 - ratio);
                        if tail < 1e-14 * acc.value() {
                            return Ok(acc.value());
                        }
                    }
                    k += 1;
                    term_pmf *= s;
                    if k > 100_000_000 {
                        return Err(Error::InvalidArgument(
                            "geometric moment series did not converge".into(),
                        ));
                    }
                }
            }
        }
    }

    /// Probability generating function `phi(s) = sum_k P(k) s^k`, in closed
    /// form per family. Arguments above 1 are allowed where the series
    /// converges (MGF recursion); the shifted geometric diverges at
    /// `s >= 1/s_par`.
    pub fn pgf(&self, s: f64) -> Result<f64> {
        if s.is_nan() || s < 0.0 || !s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pgf argument must be finite and >= 0, got {s}"
            )));
        }
        match &self.family {
            Family::Poisson { lambda, .. } => Ok((lambda * (s - 1.0)).exp()),
            Family::GeometricShifted { s: par } => {
                if par * s >= 1.0 {
                    return Err(Error::PgfDiverges { arg: s });
                }
                Ok((1.0 - par) * s / (1.0 - par * s))
            }
            Family::Finite(fs) => {
                let mut acc = CompensatedSum::new();
                for (&v, &pr) in fs.values.iter().zip(&fs.probs) {
                    acc.add(pr * s.powf(v as f64));
                }
                Ok(acc.value())
            }
        }
    }

    /// `phi(1 + e) - 1`, the PGF in excess form, exact for excesses down to
    /// the subnormal range. The MGF recursion iterates arguments that sit
    /// within 1e-300 of the fixed point at 1, where evaluating `phi` and
    /// subtracting would cancel to zero.
    pub fn pgf_excess(&self, e: f64) -> Result<f64> {
        if e.is_nan() || e < -1.0 || !e.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pgf excess must be finite and >= -1, got {e}"
            )));
        }
        match &self.family {
            Family::Poisson { lambda, .. } => Ok((lambda * e).exp_m1()),
            Family::GeometricShifted { s: par } => {
                let denom = (1.0 - par) - par * e;
                if denom <= 0.0 {
                    return Err(Error::PgfDiverges { arg: 1.0 + e });
                }
                Ok(e / denom)
            }
            Family::Finite(fs) => {
                let log1p_e = e.ln_1p();
                let mut acc = CompensatedSum::new();
                for (&v, &pr) in fs.values.iter().zip(&fs.probs) {
                    if v > 0 {
                        acc.add(pr * (v as f64 * log1p_e).exp_m1());
                    }
                }
                Ok(acc.value())
            }
        }
    }

    /// One draw from the law.
    pub fn sample_one(&self, rng: &mut SimRng) -> u64 {
        match &self.family {
            Family::Poisson { dist, .. } => dist.sample(rng) as u64,
            Family::GeometricShifted { s } => {
                // Inverse CDF: X - 1 = floor(ln U / ln s), U uniform (0,1).
                let mut u: f64 = rng.random();
                while u <= 0.0 {
                    u = rng.random();
                }
                1 + (u.ln() / s.ln()).floor() as u64
            }
            Family::Finite(fs) => fs.values[fs.alias.sample(rng)],
        }
    }

    /// One draw of the sum of `z` i.i.d. offspring (the next generation of a
    /// population of size `z`), in the exact distribution of the z-fold
    /// convolution. Errors with the attempted total when the draw exceeds
    /// `cap`.
    pub fn sample_total(&self, z: u64, cap: u64, rng: &mut SimRng) -> Result<u64> {
        if z == 0 {
            return Ok(0);
        }
        let total: u128 = match &self.family {
            Family::Poisson { lambda, .. } => {
                let dist = Poisson::new(lambda * z as f64).expect("valid poisson total");
                let draw: f64 = dist.sample(rng);
                draw as u128
            }
            Family::GeometricShifted { s } => {
                // Sum of z shifted geometrics = z + NegBinomial(z, 1-s),
                // drawn exactly as Poisson(Gamma(z, s/(1-s))).
                let scale = s / (1.0 - s);
                let gamma = Gamma::new(z as f64, scale).expect("valid gamma");
                let rate: f64 = gamma.sample(rng);
                let nb = if rate > 0.0 {
                    Poisson::new(rate).expect("valid poisson mixture").sample(rng) as u128
                } else {
                    0
                };
                z as u128 + nb
            }
            Family::Finite(fs) => fs.sample_total(z, cap, rng)?,
        };
        if total > cap as u128 {
            return Err(Error::PopulationCap {
                generation: 0,
                attempted: total,
                cap,
            });
        }
        Ok(total as u64)
    }
}

impl FiniteSupport {
    fn sample_total(&self, z: u64, cap: u64, rng: &mut SimRng) -> Result<u128> {
        let m = self.values.len();
        // Point mass: total is exact arithmetic.
        if m == 1 {
            return Ok(self.values[0] as u128 * z as u128);
        }
        if z < SMALL_Z_LOOP {
            let mut total: u128 = 0;
            for _ in 0..z {
                total += self.values[self.alias.sample(rng)] as u128;
            }
            return Ok(total);
        }

        // Multinomial occupation counts drawn as a chain of binomials over a
        // head segment plus individually drawn tail parents. The split index
        // balances the two costs: the head costs one binomial per support
        // value, the tail costs one inverse-CDF draw per parent landing
        // there (expected z * tailmass).
        let zf = z as f64;
        let split = if m <= 64 {
            m
        } else {
            let mut lo = 0usize;
            let mut hi = m;
            while lo < hi {
                let mid = (lo + hi) / 2;
                let tail_mass = 1.0 - if mid == 0 { 0.0 } else { self.cdf[mid - 1] };
                if 2.0 * zf * tail_mass <= mid as f64 + 8.0 {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            lo
        };

        let mut total: u128 = 0;
        let cap_err = |attempted: u128| Error::PopulationCap {
            generation: 0,
            attempted,
            cap,
        };

        // Tail parents, conditioned on landing beyond the split.
        let mut n_tail = 0u64;
        if split < m {
            let head_mass = if split == 0 { 0.0 } else { self.cdf[split - 1] };
            let tail_mass = 1.0 - head_mass;
            n_tail = binomial::sample(z, tail_mass.clamp(0.0, 1.0), rng);
            for _ in 0..n_tail {
                let u = head_mass + rng.random::<f64>() * tail_mass;
                let idx = self
                    .cdf
                    .partition_point(|&c| c <= u)
                    .min(m - 1)
                    .max(split);
                total += self.values[idx] as u128;
                if total > cap as u128 {
                    return Err(cap_err(total));
                }
            }
        }

        // Head occupation counts by sequential binomial splitting.
        let mut remaining = z - n_tail;
        for i in 0..split {
            if remaining == 0 {
                break;
            }
            let count = if i + 1 == split {
                remaining
            } else {
                let mass_from_i = self.segment_mass(i, split);
                let p = if mass_from_i <= 0.0 {
                    1.0
                } else {
                    (self.probs[i] / mass_from_i).clamp(0.0, 1.0)
                };
                binomial::sample(remaining, p, rng)
            };
            total += self.values[i] as u128 * count as u128;
            if total > cap as u128 {
                return Err(cap_err(total));
            }
            remaining -= count;
        }
        Ok(total)
    }

    /// Mass of support indices `[i, split)`, read off the cdf to avoid
    /// drift from repeated subtraction.
    #[inline]
    fn segment_mass(&self, i: usize, split: usize) -> f64 {
        let hi = self.cdf[split - 1];
        let lo = if i == 0 { 0.0 } else { self.cdf[i - 1] };
        hi - lo
    }
}

#[cfg(test)]
mod tests;
