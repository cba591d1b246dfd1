//! Python extension module exposing the main types and operations:
//! offspring laws, environment models and sequences, trajectory simulation,
//! the limit objects, and whole campaign runs via config JSON.
//!
//! Build with `cargo build --release -p bpre-py`; the produced `libbpre.so`
//! imports as the module `bpre` (see `python/smoke_test.py`).

use bpre_core::engine;
use bpre_core::env::{EnvironmentModel, EnvironmentSequence, ExtendRule};
use bpre_core::limits;
use bpre_core::offspring::OffspringLaw;
use bpre_core::{config, presets, rng, runner, stats};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: bpre_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One reproduction distribution with exact moments, PGF and sampling.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Law {
    inner: OffspringLaw,
}

#[pymethods]
impl Law {
    #[staticmethod]
    fn poisson(lambda: f64) -> PyResult<Self> {
        Ok(Self { inner: OffspringLaw::poisson(lambda).map_err(err)? })
    }

    #[staticmethod]
    fn geometric_shifted(s: f64) -> PyResult<Self> {
        Ok(Self { inner: OffspringLaw::geometric_shifted(s).map_err(err)? })
    }

    /// Law from `[(value, probability), ...]` atoms.
    #[staticmethod]
    fn finite(pmf: Vec<(u64, f64)>) -> PyResult<Self> {
        Ok(Self { inner: OffspringLaw::finite_support(&pmf).map_err(err)? })
    }

    /// Truncated power tail `P(k) ~ k^{-exponent}` on `1..=kmax`.
    #[staticmethod]
    fn power_tail(exponent: f64, kmax: u64) -> PyResult<Self> {
        Ok(Self { inner: OffspringLaw::power_tail(exponent, kmax).map_err(err)? })
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    /// `m(p) = sum k^p P(k)`.
    fn moment(&self, p: f64) -> PyResult<f64> {
        self.inner.moment(p).map_err(err)
    }

    /// Probability generating function `phi(s)`.
    fn pgf(&self, s: f64) -> PyResult<f64> {
        self.inner.pgf(s).map_err(err)
    }

    fn p_zero(&self) -> f64 {
        self.inner.p_zero()
    }

    fn is_degenerate(&self) -> bool {
        self.inner.is_degenerate()
    }

    /// `n` seeded draws.
    fn sample(&self, n: usize, seed: u64) -> Vec<u64> {
        let mut rng = rng::replicate_rng(seed, 0);
        (0..n).map(|_| self.inner.sample_one(&mut rng)).collect()
    }

    /// One exact draw of the sum of `z` i.i.d. offspring.
    #[pyo3(signature = (z, seed, cap=None))]
    fn sample_total(&self, z: u64, seed: u64, cap: Option<u64>) -> PyResult<u64> {
        let mut rng = rng::replicate_rng(seed, 0);
        self.inner
            .sample_total(z, cap.unwrap_or(engine::DEFAULT_CAP), &mut rng)
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Law(mean={})", self.inner.mean())
    }
}

/// Environment process: deterministic list, i.i.d. mixture, or
/// finite-state Markov chain.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Model {
    inner: EnvironmentModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (laws, cyclic=false))]
    fn deterministic(laws: Vec<Law>, cyclic: bool) -> PyResult<Self> {
        let extend = if cyclic { ExtendRule::Cyclic } else { ExtendRule::RepeatLast };
        let laws = laws.into_iter().map(|l| l.inner).collect();
        Ok(Self { inner: EnvironmentModel::deterministic(laws, extend).map_err(err)? })
    }

    #[staticmethod]
    fn iid(laws: Vec<Law>, probs: Vec<f64>) -> PyResult<Self> {
        if laws.len() != probs.len() {
            return Err(PyValueError::new_err("laws and probs must have equal length"));
        }
        let comps = laws.into_iter().map(|l| l.inner).zip(probs).collect();
        Ok(Self { inner: EnvironmentModel::iid(comps).map_err(err)? })
    }

    /// Markov model; `initial = None` starts at the stationary distribution
    /// of the transition matrix.
    #[staticmethod]
    #[pyo3(signature = (laws, transition, initial=None))]
    fn markov(laws: Vec<Law>, transition: Vec<Vec<f64>>, initial: Option<Vec<f64>>) -> PyResult<Self> {
        let states: Vec<OffspringLaw> = laws.into_iter().map(|l| l.inner).collect();
        let initial = match initial {
            Some(init) => init,
            None => {
                let probe = EnvironmentModel::markov(
                    states.clone(),
                    transition.clone(),
                    vec![1.0 / states.len() as f64; states.len().max(1)],
                )
                .map_err(err)?;
                probe.stationary_distribution().expect("markov model")
            }
        };
        Ok(Self { inner: EnvironmentModel::markov(states, transition, initial).map_err(err)? })
    }

    fn strongly_supercritical(&self) -> bool {
        self.inner.strongly_supercritical()
    }

    fn nondegenerate(&self) -> bool {
        self.inner.nondegenerate()
    }

    fn finite_state(&self) -> bool {
        self.inner.finite_state()
    }

    /// `E log m_0` under the stationary law.
    fn log_mean_growth(&self) -> f64 {
        self.inner.log_mean_growth()
    }

    fn stationary_distribution(&self) -> Option<Vec<f64>> {
        self.inner.stationary_distribution()
    }

    /// Draws one realized sequence of `horizon` laws.
    fn realize(&self, horizon: usize, env_seed: u64) -> PyResult<Env> {
        Ok(Env { inner: self.inner.realize(horizon, env_seed).map_err(err)? })
    }
}

/// One realized environment sequence `xi = (xi_0, xi_1, ...)`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Env {
    inner: EnvironmentSequence,
}

#[pymethods]
impl Env {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// The shifted environment `T^n xi`.
    fn shift(&self, n: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.shift(n).map_err(err)? })
    }

    fn offset(&self) -> usize {
        self.inner.offset()
    }

    /// Realized model-state index at generation `k`.
    fn state_id(&self, k: usize) -> usize {
        self.inner.state_id(k)
    }

    fn means(&self) -> Vec<f64> {
        self.inner.laws().map(|l| l.mean()).collect()
    }

    /// `log P_n = sum_{i<n} log m_i`.
    fn log_pn(&self, n: usize) -> f64 {
        limits::log_pn(&self.inner, n)
    }

    /// Variance-series value, convergence flag, and tail from `n`:
    /// returns `(limit, converged, tail_fn)` as `(float, bool, list)`.
    fn delta2(&self, n_terms: usize) -> PyResult<(f64, bool, Vec<f64>)> {
        let series = limits::delta2_partial(&self.inner, n_terms).map_err(err)?;
        Ok((series.limit(), series.is_converged(), series.partials().to_vec()))
    }

    /// `delta_inf(T^n xi)`, the norming of the fluctuation statistic.
    fn delta_shifted(&self, n: usize) -> PyResult<f64> {
        limits::delta_inf_shifted(&self.inner, n).map_err(err)
    }

    /// `U_n = sqrt(P_n) (w_hat - w_n) / delta_inf(T^n xi)`.
    fn u_statistic(&self, n: usize, w_n: f64, w_hat: f64) -> PyResult<f64> {
        limits::u_statistic(&self.inner, n, w_n, w_hat).map_err(err)
    }

    /// Quenched MGF `psi_n(t) = E exp(t W_n)`.
    fn quenched_mgf(&self, t: f64, n: usize) -> PyResult<f64> {
        limits::quenched_mgf(&self.inner, t, n).map_err(err)
    }

    /// Extinction probability by backward PGF composition: returns
    /// `(value, last_increment)`.
    fn extinction(&self, depth: usize) -> PyResult<(f64, f64)> {
        let est = limits::extinction_prob(&self.inner, depth).map_err(err)?;
        Ok((est.value, est.last_increment))
    }
}

/// Simulates one trajectory; returns a dict with keys `z` (exact integers),
/// `log_p`, `w`, `capped`.
#[pyfunction]
#[pyo3(signature = (env, n_max, traj_seed, cap=None))]
fn simulate<'py>(
    py: Python<'py>,
    env: &Env,
    n_max: usize,
    traj_seed: u64,
    cap: Option<u64>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let traj = engine::simulate(
        &env.inner,
        n_max,
        traj_seed,
        cap.unwrap_or(engine::DEFAULT_CAP),
    )
    .map_err(err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("z", traj.z().to_vec())?;
    dict.set_item("log_p", traj.log_p().to_vec())?;
    dict.set_item("w", traj.w().to_vec())?;
    dict.set_item("capped", traj.capped())?;
    Ok(dict)
}

/// `reps` quenched replicates of `(W_n, W_hat - W_n)` with
/// `W_hat = W_{n+extra_depth}`; replicate `r` uses seed `mix(seed, r)`.
#[pyfunction]
#[pyo3(signature = (env, n, extra_depth, reps, seed, cap=None))]
fn sample_fluctuation(
    env: &Env,
    n: usize,
    extra_depth: usize,
    reps: usize,
    seed: u64,
    cap: Option<u64>,
) -> PyResult<Vec<(f64, f64)>> {
    engine::sample_fluctuation(
        &env.inner,
        n,
        extra_depth,
        reps,
        seed,
        cap.unwrap_or(engine::DEFAULT_CAP),
    )
    .map_err(err)
}

/// Sorted sample of `G sqrt(W_depth)` under a fixed environment.
#[pyfunction]
#[pyo3(signature = (env, reps, depth, seed, cap=None))]
fn limit_sample_quenched(
    env: &Env,
    reps: usize,
    depth: usize,
    seed: u64,
    cap: Option<u64>,
) -> PyResult<Vec<f64>> {
    limits::limit_law_sample(
        limits::LimitLawSource::Quenched(&env.inner),
        reps,
        depth,
        seed,
        cap.unwrap_or(engine::DEFAULT_CAP),
    )
    .map_err(err)
}

/// Sorted sample of `G sqrt(W_depth)` with the environment redrawn per
/// replicate.
#[pyfunction]
#[pyo3(signature = (model, reps, depth, seed, cap=None))]
fn limit_sample_annealed(
    model: &Model,
    reps: usize,
    depth: usize,
    seed: u64,
    cap: Option<u64>,
) -> PyResult<Vec<f64>> {
    limits::limit_law_sample(
        limits::LimitLawSource::Annealed(&model.inner),
        reps,
        depth,
        seed,
        cap.unwrap_or(engine::DEFAULT_CAP),
    )
    .map_err(err)
}

/// Two-sample Kolmogorov-Smirnov distance.
#[pyfunction]
fn ks_distance(xs: Vec<f64>, ys: Vec<f64>) -> f64 {
    stats::ks_distance(&xs, &ys)
}

/// Asymptotic two-sample KS rejection threshold `c * sqrt((m+n)/(m n))`.
#[pyfunction]
#[pyo3(signature = (m, n, c=stats::KS_C_01))]
fn ks_threshold(m: usize, n: usize, c: f64) -> f64 {
    stats::ks_threshold(m, n, c)
}

/// The documented SplitMix-style seed derivation.
#[pyfunction]
fn mix(seed: u64, stream: u64) -> u64 {
    rng::mix(seed, stream)
}

/// Runs a campaign from config JSON; returns the report as a JSON string.
#[pyfunction]
fn run_config(json: &str) -> PyResult<String> {
    let config = config::ExperimentConfig::from_json(json).map_err(err)?;
    let output = runner::execute(&config).map_err(err)?;
    serde_json::to_string_pretty(&output.report)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs a bundled preset by name; returns the report as a JSON string.
#[pyfunction]
fn run_preset(name: &str) -> PyResult<String> {
    let preset = presets::get(name)
        .ok_or_else(|| PyValueError::new_err(format!("no preset named '{name}'")))?;
    run_config(preset.json)
}

/// Names and summaries of the bundled presets.
#[pyfunction]
fn list_presets() -> Vec<(String, String)> {
    presets::PRESETS
        .iter()
        .map(|p| (p.name.to_string(), p.summary.to_string()))
        .collect()
}

#[pymodule]
fn bpre(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Law>()?;
    m.add_class::<Model>()?;
    m.add_class::<Env>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_fluctuation, m)?)?;
    m.add_function(wrap_pyfunction!(limit_sample_quenched, m)?)?;
    m.add_function(wrap_pyfunction!(limit_sample_annealed, m)?)?;
    m.add_function(wrap_pyfunction!(ks_distance, m)?)?;
    m.add_function(wrap_pyfunction!(ks_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(mix, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(list_presets, m)?)?;
    Ok(())
}
