//! Bundled experiment presets, one per acceptance experiment.

/// A named, ready-to-run configuration.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub json: &'static str,
}

macro_rules! preset {
    ($name:literal, $summary:literal) => {
        Preset {
            name: $name,
            summary: $summary,
            json: include_str!(concat!("../presets/", $name, ".json")),
        }
    };
}

/// All bundled presets, in display order.
pub const PRESETS: &[Preset] = &[
    preset!(
        "delta-poisson",
        "variance series of constant Poisson(2): closed-form limit 1.0"
    ),
    preset!(
        "delta-geometric",
        "variance series of constant shifted-geometric(0.5): closed-form limit 1.0"
    ),
    preset!(
        "martingale-variance",
        "martingale mean and fluctuation variance at n=5 under Poisson(2)"
    ),
    preset!(
        "heyde-gw-clt",
        "constant-environment fluctuation law vs G*sqrt(W), 20 repeated campaigns"
    ),
    preset!(
        "re-clt-annealed",
        "annealed fluctuation-law trend for an i.i.d. Poisson{1.5,2.5} environment"
    ),
    preset!(
        "re-clt-quenched",
        "quenched fluctuation-law trend averaged over 20 environments"
    ),
    preset!(
        "exp-rate-poisson",
        "L2 decay-rate regression for constant Poisson(2): slope -log 2"
    ),
    preset!(
        "exp-rate-alternating",
        "L2 decay-rate regression for an alternating-mean varying environment"
    ),
    preset!(
        "poly-rate-powertail",
        "polynomial-rate heuristic for a truncated power-tail offspring law"
    ),
    preset!(
        "finite-state-tail",
        "supergeometric tail decay for a two-state Markov geometric environment"
    ),
    preset!(
        "exp-moment-geometric",
        "quenched MGF stability/divergence frontier for shifted-geometric(0.5)"
    ),
    preset!(
        "extinction-gw",
        "extinction probability of the {0:1/4, 2:3/4} law: fixed point 1/3"
    ),
    preset!(
        "simulate-unit",
        "unit-reproduction trajectory dump (Z = W = 1 at every generation)"
    ),
    preset!(
        "calibration",
        "synthetic-input calibration of the verification machinery and samplers"
    ),
];

/// Looks a preset up by name.
pub fn get(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    #[test]
    fn every_preset_parses_and_validates() {
        for preset in PRESETS {
            let config = ExperimentConfig::from_json(preset.json)
                .unwrap_or_else(|e| panic!("{}: {e}", preset.name));
            config
                .validate()
                .unwrap_or_else(|e| panic!("{}: {e}", preset.name));
        }
    }

    #[test]
    fn required_presets_exist() {
        assert!(get("heyde-gw-clt").is_some());
        assert!(get("finite-state-tail").is_some());
        assert!(get("nonexistent").is_none());
    }
}
