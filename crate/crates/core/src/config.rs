//! Experiment configuration: a strict JSON schema with dot-path overrides.
//!
//! Law objects follow the fixed wire format
//! `{"family": "poisson", "lambda": 2.0}`,
//! `{"family": "geometric_shifted", "s": 0.5}`,
//! `{"family": "finite", "pmf": [[1, 0.5], [3, 0.5]]}`,
//! `{"family": "power_tail", "exponent": 2.5, "kmax": 1000000}` (sugar for a
//! truncated power-law finite support). Unknown keys are rejected
//! everywhere, naming the offending key.

use crate::engine;
use crate::env::{EnvironmentModel, ExtendRule};
use crate::error::{Error, Result};
use crate::offspring::OffspringLaw;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub campaign: CampaignKind,
    /// Required by every campaign except `calibrate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    /// Worker threads (0 = logical CPUs). Determinism does not depend on it.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignKind {
    Simulate,
    Rate,
    Clt,
    Tail,
    Mgf,
    Delta,
    Extinction,
    Calibrate,
}

impl CampaignKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Rate => "rate",
            Self::Clt => "clt",
            Self::Tail => "tail",
            Self::Mgf => "mgf",
            Self::Delta => "delta",
            Self::Extinction => "extinction",
            Self::Calibrate => "calibrate",
        }
    }
}

// --- laws -------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LawSpec {
    Poisson(PoissonSpec),
    GeometricShifted(GeometricShiftedSpec),
    Finite(FinitePmfSpec),
    PowerTail(PowerTailSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonSpec {
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricShiftedSpec {
    pub s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinitePmfSpec {
    pub pmf: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTailSpec {
    pub exponent: f64,
    pub kmax: u64,
}

impl LawSpec {
    pub fn build(&self) -> Result<OffspringLaw> {
        match self {
            Self::Poisson(s) => OffspringLaw::poisson(s.lambda),
            Self::GeometricShifted(s) => OffspringLaw::geometric_shifted(s.s),
            Self::Finite(s) => OffspringLaw::finite_support(&s.pmf),
            Self::PowerTail(s) => OffspringLaw::power_tail(s.exponent, s.kmax),
        }
    }
}

// --- environment models -------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Deterministic(DeterministicSpec),
    Iid(IidSpec),
    Markov(MarkovSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterministicSpec {
    pub laws: Vec<LawSpec>,
    #[serde(default)]
    pub extend: ExtendSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtendSpec {
    #[default]
    RepeatLast,
    Cyclic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidSpec {
    pub components: Vec<IidComponent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidComponent {
    pub law: LawSpec,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    pub states: Vec<LawSpec>,
    pub transition: Vec<Vec<f64>>,
    /// Omitted: the stationary distribution of `transition` is computed and
    /// used (annealed statements assume stationarity). Overriding it is
    /// allowed but warned about.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl ModelSpec {
    /// Builds the model, returning warnings for legal-but-dubious choices.
    pub fn build(&self) -> Result<(EnvironmentModel, Vec<String>)> {
        let mut warnings = Vec::new();
        let model = match self {
            Self::Deterministic(spec) => {
                let laws = spec
                    .laws
                    .iter()
                    .map(LawSpec::build)
                    .collect::<Result<Vec<_>>>()?;
                let extend = match spec.extend {
                    ExtendSpec::RepeatLast => ExtendRule::RepeatLast,
                    ExtendSpec::Cyclic => ExtendRule::Cyclic,
                };
                EnvironmentModel::deterministic(laws, extend)?
            }
            Self::Iid(spec) => {
                let comps = spec
                    .components
                    .iter()
                    .map(|c| Ok((c.law.build()?, c.prob)))
                    .collect::<Result<Vec<_>>>()?;
                EnvironmentModel::iid(comps)?
            }
            Self::Markov(spec) => {
                let states = spec
                    .states
                    .iter()
                    .map(LawSpec::build)
                    .collect::<Result<Vec<_>>>()?;
                let initial = match &spec.initial {
                    Some(init) => {
                        warnings.push(
                            "markov initial distribution overridden: annealed statements \
                             assume the chain starts from its stationary distribution"
                                .to_string(),
                        );
                        init.clone()
                    }
                    None => {
                        // Solve pi P = pi by power iteration (to 1e-12).
                        let probe = EnvironmentModel::markov(
                            states.clone(),
                            spec.transition.clone(),
                            vec![1.0 / states.len() as f64; states.len()],
                        )?;
                        probe.stationary_distribution().expect("markov model")
                    }
                };
                EnvironmentModel::markov(states, spec.transition.clone(), initial)?
            }
        };
        Ok((model, warnings))
    }
}

// --- campaign parameters ------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// simulate: generations to run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// rate | clt | tail: generations to measure at (ascending).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    /// Estimator depth K (`W_hat = W_{n+K}`); also the Monte Carlo depth of
    /// the mgf cross-check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeSpec>,
    /// clt quenched: number of independent environments averaged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign_repeats: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_reps: Option<usize>,
    /// delta: series terms to compute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_terms: Option<usize>,
    /// extinction: composition depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ext_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_target: Option<RateTargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub martingale_check: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_check: Option<bool>,
    /// calibrate: per-side KS sample size and synthetic instance count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    Quenched,
    Annealed,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateTargetSpec {
    /// "exponential" or "polynomial".
    pub kind: RateKindSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl Default for RateTargetSpec {
    fn default() -> Self {
        Self {
            kind: RateKindSpec::Exponential,
            p: Some(2.0),
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKindSpec {
    Exponential,
    Polynomial,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub env_seed: u64,
    pub traj_seed: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            env_seed: 715_517,
            traj_seed: 20_260_811,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative tolerance of slope checks.
    pub slope_rel: f64,
    /// Two-sample KS coefficient (1.6276 = 1% asymptotic).
    pub ks_c: f64,
    /// Acceptance threshold on the final KS distance.
    pub ks_final: f64,
    /// Minimum passing fraction over repeated campaigns.
    pub min_pass_fraction: f64,
    /// Relative slack on the required tail y-increment.
    pub tail_increment_rel: f64,
    /// Relative tolerance of the variance-vs-series check.
    pub var_rel: f64,
    /// Normal quantile of Wilson intervals.
    pub wilson_z: f64,
    /// Relative increment under which the quenched MGF counts as stable.
    pub mgf_stab_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            slope_rel: 0.10,
            ks_c: crate::stats::KS_C_01,
            ks_final: 0.03,
            min_pass_fraction: 0.95,
            tail_increment_rel: 0.25,
            var_rel: 0.05,
            wilson_z: 1.96,
            mgf_stab_rel: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Output directory for report.json and the CSV artifacts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Also write the raw fluctuation sample at the largest measured n.
    pub write_samples: bool,
}

impl ExperimentConfig {
    /// Parses strict JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    /// Parses JSON after applying `--set dot.path=value` overrides.
    pub fn from_json_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (path, raw) in overrides {
            apply_override(&mut value, path, raw)?;
        }
        let config: Self =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    /// Per-campaign validation of required parameters. Errors name the
    /// offending key. Returns model-building warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let require = |cond: bool, key: &str| -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "campaign '{}' requires {key}",
                    self.campaign.as_str()
                )))
            }
        };
        if self.campaign != CampaignKind::Calibrate {
            require(self.model.is_some(), "model")?;
            let (_, w) = self.model.as_ref().expect("checked").build()?;
            warnings.extend(w);
        }
        match self.campaign {
            CampaignKind::Simulate => require(self.params.n_max.is_some(), "params.n_max")?,
            CampaignKind::Rate => {
                require(self.params.n_list.is_some(), "params.n_list")?;
                require(self.params.reps.is_some(), "params.reps")?;
            }
            CampaignKind::Clt => {
                require(self.params.n_list.is_some(), "params.n_list")?;
                require(self.params.reps.is_some(), "params.reps")?;
                require(self.params.mode.is_some(), "params.mode")?;
            }
            CampaignKind::Tail => {
                require(self.params.n_list.is_some(), "params.n_list")?;
                require(self.params.reps.is_some(), "params.reps")?;
                require(self.params.eps_list.is_some(), "params.eps_list")?;
            }
            CampaignKind::Mgf => require(self.params.t_grid.is_some(), "params.t_grid")?,
            CampaignKind::Delta => require(self.params.n_terms.is_some(), "params.n_terms")?,
            CampaignKind::Extinction => {
                require(self.params.ext_depth.is_some(), "params.ext_depth")?
            }
            CampaignKind::Calibrate => {}
        }
        if let Some(cap) = self.params.cap {
            if cap == 0 || cap > engine::MAX_CAP {
                return Err(Error::Config(format!(
                    "params.cap must be in [1, 2^62], got {cap}"
                )));
            }
        }
        Ok(warnings)
    }
}

/// Sets `path` (dot-separated) in a JSON tree to `raw`, parsed as JSON when
/// possible and as a bare string otherwise. Intermediate objects are
/// created; the final schema check still rejects unknown keys.
pub fn apply_override(value: &mut serde_json::Value, path: &str, raw: &str) -> Result<()> {
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override path '{path}'")));
    }
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let obj = cursor.as_object_mut().ok_or_else(|| {
            Error::Config(format!(
                "override path '{path}' descends into a non-object at '{part}'"
            ))
        })?;
        if last {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "campaign": "delta",
        "model": {"kind": "deterministic", "laws": [{"family": "poisson", "lambda": 2.0}]},
        "params": {"n_terms": 100}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let config = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(config.campaign, CampaignKind::Delta);
        assert!(config.validate().unwrap().is_empty());
        let (model, _) = config.model.unwrap().build().unwrap();
        assert_eq!(model.state_count(), 1);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let bad = MINIMAL.replace("lambda", "lamda");
        let err = ExperimentConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("lamda"), "message: {err}");

        let bad_top = r#"{"campaign": "calibrate", "wrokers": 2}"#;
        let err = ExperimentConfig::from_json(bad_top).unwrap_err();
        assert!(err.to_string().contains("wrokers"), "message: {err}");
    }

    #[test]
    fn law_wire_format_round_trips() {
        for text in [
            r#"{"family":"poisson","lambda":2.0}"#,
            r#"{"family":"geometric_shifted","s":0.5}"#,
            r#"{"family":"finite","pmf":[[1,0.5],[3,0.5]]}"#,
            r#"{"family":"power_tail","exponent":2.5,"kmax":1000000}"#,
        ] {
            let spec: LawSpec = serde_json::from_str(text).unwrap();
            spec.build().unwrap();
            let back = serde_json::to_string(&spec).unwrap();
            let a: serde_json::Value = serde_json::from_str(text).unwrap();
            let b: serde_json::Value = serde_json::from_str(&back).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn missing_required_params_named() {
        let text = r#"{
            "campaign": "rate",
            "model": {"kind": "deterministic", "laws": [{"family": "poisson", "lambda": 2.0}]}
        }"#;
        let config = ExperimentConfig::from_json(text).unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("params.n_list"), "{err}");
    }

    #[test]
    fn markov_initial_defaults_to_stationary_with_warning_on_override() {
        let text = r#"{
            "campaign": "delta",
            "model": {"kind": "markov",
                      "states": [{"family": "poisson", "lambda": 1.5},
                                 {"family": "poisson", "lambda": 2.5}],
                      "transition": [[0.9, 0.1], [0.2, 0.8]]},
            "params": {"n_terms": 50}
        }"#;
        let config = ExperimentConfig::from_json(text).unwrap();
        assert!(config.validate().unwrap().is_empty());
        let (model, warnings) = config.model.as_ref().unwrap().build().unwrap();
        assert!(warnings.is_empty());
        if let EnvironmentModel::MarkovFinite { initial, .. } = &model {
            assert!((initial[0] - 2.0 / 3.0).abs() < 1e-9);
        } else {
            panic!("expected markov model");
        }

        let overridden = text.replace(
            r#""transition": [[0.9, 0.1], [0.2, 0.8]]"#,
            r#""transition": [[0.9, 0.1], [0.2, 0.8]], "initial": [1.0, 0.0]"#,
        );
        let config = ExperimentConfig::from_json(&overridden).unwrap();
        let warnings = config.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("stationary"));
    }

    #[test]
    fn overrides_apply_dot_paths() {
        let config = ExperimentConfig::from_json_with_overrides(
            MINIMAL,
            &[
                ("params.n_terms".to_string(), "33".to_string()),
                ("seeds.env_seed".to_string(), "99".to_string()),
            ],
        )
        .unwrap();
        assert_eq!(config.params.n_terms, Some(33));
        assert_eq!(config.seeds.env_seed, 99);
        // Unknown override key is still rejected by the schema.
        let err = ExperimentConfig::from_json_with_overrides(
            MINIMAL,
            &[("params.bogus".to_string(), "1".to_string())],
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn calibrate_needs_no_model() {
        let config = ExperimentConfig::from_json(r#"{"campaign": "calibrate"}"#).unwrap();
        assert!(config.validate().is_ok());
        let rate = ExperimentConfig::from_json(r#"{"campaign": "rate"}"#).unwrap();
        let err = rate.validate().unwrap_err();
        assert!(err.to_string().contains("model"));
    }
}
