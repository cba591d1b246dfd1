//! Campaign execution: resolves an [`ExperimentConfig`] into a report and
//! plot-ready CSV artifacts.

use crate::config::{
    CampaignKind, ExperimentConfig, ModeSpec, RateKindSpec,
};
use crate::engine;
use crate::env::EnvironmentSequence;
use crate::error::{Error, Result};
use crate::limits;
use crate::rng::mix;
use crate::verify::{
    self, CltMode, CltOptions, MgfOptions, RateOptions, RateTarget, SeedEcho, TailOptions,
    VerificationReport,
};

/// Everything one `run` produces; the CLI decides what lands on disk.
#[derive(Debug)]
pub struct RunOutput {
    pub report: VerificationReport,
    /// Flat per-n statistics (or the campaign's natural table).
    pub stats_csv: String,
    /// Raw fluctuation sample at the largest measured n, when requested.
    pub samples_csv: Option<String>,
    /// Simulated trajectory, for `simulate` campaigns.
    pub trajectory_csv: Option<String>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.report.passed
    }
}

/// CSV float format: 17 significant digits, bit-stable round trips.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Executes the campaign selected by the config. Pure function of
/// `(config, seeds)` up to wall-clock fields.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutput> {
    let warnings = config.validate()?;
    let echo = serde_json::to_value(config)?;

    let mut out = match config.campaign {
        CampaignKind::Simulate => run_simulate(config)?,
        CampaignKind::Rate => run_rate(config)?,
        CampaignKind::Clt => run_clt(config)?,
        CampaignKind::Tail => run_tail(config)?,
        CampaignKind::Mgf => run_mgf(config)?,
        CampaignKind::Delta => run_delta(config)?,
        CampaignKind::Extinction => run_extinction(config)?,
        CampaignKind::Calibrate => run_calibrate(config)?,
    };
    out.report.config_echo = echo;
    out.report.notes.extend(warnings.iter().cloned());
    out.warnings = warnings;
    Ok(out)
}

fn build_env(config: &ExperimentConfig, horizon: usize) -> Result<EnvironmentSequence> {
    let (model, _) = config
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("campaign requires model".into()))?
        .build()?;
    model.realize(horizon, config.seeds.env_seed)
}

fn cap_of(config: &ExperimentConfig) -> u64 {
    config.params.cap.unwrap_or(engine::DEFAULT_CAP)
}

fn depth_of(config: &ExperimentConfig) -> usize {
    config.params.depth.unwrap_or(25)
}

/// Per-n statistics table shared by rate/clt/tail campaigns.
fn stats_csv(report: &VerificationReport) -> String {
    let mut csv = String::from(
        "n,count,mean_dw,se_mean_dw,mean_abs_dw,median_abs_dw,mean_sq_dw,var_dw,\
         ks,ks_threshold,eps,tail_count,p_hat,wilson_low,wilson_high,censored,y\n",
    );
    for row in &report.per_n {
        let base = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            row.n,
            row.count,
            opt(row.mean_dw),
            opt(row.se_mean_dw),
            opt(row.mean_abs_dw),
            opt(row.median_abs_dw),
            opt(row.mean_sq_dw),
            opt(row.var_dw),
            opt(row.ks),
            opt(row.ks_threshold),
        );
        if row.tails.is_empty() {
            csv.push_str(&base);
            csv.push_str(",,,,,,,\n");
        } else {
            for cell in &row.tails {
                csv.push_str(&base);
                csv.push_str(&format!(
                    ",{},{},{},{},{},{},{}\n",
                    fmt(cell.eps),
                    cell.count,
                    fmt(cell.p_hat),
                    fmt(cell.wilson_low),
                    fmt(cell.wilson_high),
                    cell.censored,
                    opt(cell.y),
                ));
            }
        }
    }
    csv
}

fn run_simulate(config: &ExperimentConfig) -> Result<RunOutput> {
    let started = std::time::Instant::now();
    let n_max = config.params.n_max.expect("validated");
    let horizon = config.params.horizon.unwrap_or(n_max).max(n_max);
    let env = build_env(config, horizon)?;
    let traj = engine::simulate(&env, n_max, config.seeds.traj_seed, cap_of(config))?;

    let mut csv = String::from("k,Z,logP,W\n");
    for k in 0..=traj.generations() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            k,
            traj.z()[k],
            fmt(traj.log_p()[k]),
            fmt(traj.w()[k]),
        ));
    }

    let mut report = VerificationReport::new(
        "simulate",
        SeedEcho {
            env_seed: config.seeds.env_seed,
            traj_seed: config.seeds.traj_seed,
        },
    );
    report.extra = serde_json::json!({
        "generations": traj.generations(),
        "capped": traj.capped(),
        "final_w": traj.w().last(),
    });
    if traj.capped() {
        report.notes.push(format!(
            "trajectory truncated at generation {} by the population cap",
            traj.generations()
        ));
    }
    report.finish(started);
    Ok(RunOutput {
        stats_csv: csv.clone(),
        trajectory_csv: Some(csv),
        samples_csv: None,
        report,
        warnings: Vec::new(),
    })
}

fn rate_target(config: &ExperimentConfig, a: f64) -> Result<RateTarget> {
    let spec = config.params.rate_target.unwrap_or_default();
    match spec.kind {
        RateKindSpec::Exponential => RateTarget::exponential(spec.p.unwrap_or(2.0), a),
        RateKindSpec::Polynomial => RateTarget::polynomial(
            spec.alpha.ok_or_else(|| {
                Error::Config("polynomial rate target requires params.rate_target.alpha".into())
            })?,
            a,
        ),
    }
}

fn run_rate(config: &ExperimentConfig) -> Result<RunOutput> {
    let n_list = config.params.n_list.clone().expect("validated");
    let reps = config.params.reps.expect("validated");
    let depth = depth_of(config);
    let max_n = *n_list.last().ok_or_else(|| Error::Config("empty n_list".into()))?;
    let horizon = config
        .params
        .horizon
        .unwrap_or(max_n + depth + 80)
        .max(max_n + depth);
    let (model, _) = config.model.as_ref().expect("validated").build()?;
    let env = model.realize(horizon, config.seeds.env_seed)?;
    let opts = RateOptions {
        n_list: n_list.clone(),
        reps,
        extra_depth: depth,
        cap: cap_of(config),
        env_seed: config.seeds.env_seed,
        traj_seed: config.seeds.traj_seed,
        target: rate_target(config, model.log_mean_growth())?,
        slope_rel_tol: config.tolerances.slope_rel,
        martingale_check: config.params.martingale_check.unwrap_or(false),
        var_rel_tol: config.tolerances.var_rel,
        series_check: config.params.series_check.unwrap_or(false),
    };
    let report = verify::check_rate(&env, &opts)?;

    let samples_csv = if config.output.write_samples {
        let pairs =
            engine::sample_fluctuation(&env, max_n, depth, reps, config.seeds.traj_seed, opts.cap)?;
        let mut csv = String::from("rep,Wn,dW\n");
        for (r, (w_n, dw)) in pairs.iter().enumerate() {
            csv.push_str(&format!("{r},{},{}\n", fmt(*w_n), fmt(*dw)));
        }
        Some(csv)
    } else {
        None
    };

    Ok(RunOutput {
        stats_csv: stats_csv(&report),
        samples_csv,
        trajectory_csv: None,
        report,
        warnings: Vec::new(),
    })
}

fn run_clt(config: &ExperimentConfig) -> Result<RunOutput> {
    let n_list = config.params.n_list.clone().expect("validated");
    let reps = config.params.reps.expect("validated");
    let depth = depth_of(config);
    let max_n = *n_list.last().ok_or_else(|| Error::Config("empty n_list".into()))?;
    let (model, _) = config.model.as_ref().expect("validated").build()?;
    let opts = CltOptions {
        n_list,
        reps,
        extra_depth: depth,
        cap: cap_of(config),
        env_seed: config.seeds.env_seed,
        traj_seed: config.seeds.traj_seed,
        mode: match config.params.mode.expect("validated") {
            ModeSpec::Quenched => CltMode::Quenched,
            ModeSpec::Annealed => CltMode::Annealed,
        },
        env_reps: config.params.env_reps.unwrap_or(20),
        ks_c: config.tolerances.ks_c,
        ks_final: config.tolerances.ks_final,
        campaign_repeats: config.params.campaign_repeats.unwrap_or(1),
        min_pass_fraction: config.tolerances.min_pass_fraction,
        horizon: config.params.horizon.unwrap_or(max_n + depth + 60),
    };
    let report = verify::check_clt(&model, &opts)?;
    Ok(RunOutput {
        stats_csv: stats_csv(&report),
        samples_csv: None,
        trajectory_csv: None,
        report,
        warnings: Vec::new(),
    })
}

fn run_tail(config: &ExperimentConfig) -> Result<RunOutput> {
    let n_list = config.params.n_list.clone().expect("validated");
    let reps = config.params.reps.expect("validated");
    let depth = depth_of(config);
    let max_n = *n_list.last().ok_or_else(|| Error::Config("empty n_list".into()))?;
    let (model, _) = config.model.as_ref().expect("validated").build()?;
    let opts = TailOptions {
        n_list,
        eps_list: config.params.eps_list.clone().expect("validated"),
        reps,
        extra_depth: depth,
        cap: cap_of(config),
        env_seed: config.seeds.env_seed,
        traj_seed: config.seeds.traj_seed,
        horizon: config.params.horizon.unwrap_or(max_n + depth),
        increment_rel_tol: config.tolerances.tail_increment_rel,
        wilson_z: config.tolerances.wilson_z,
    };
    let report = verify::check_tail(&model, &opts)?;
    Ok(RunOutput {
        stats_csv: stats_csv(&report),
        samples_csv: None,
        trajectory_csv: None,
        report,
        warnings: Vec::new(),
    })
}

fn run_mgf(config: &ExperimentConfig) -> Result<RunOutput> {
    let (model, _) = config.model.as_ref().expect("validated").build()?;
    let n_cap = config.params.n_cap.unwrap_or(40);
    let mc_depth = depth_of(config).min(n_cap).max(2);
    let opts = MgfOptions {
        t_grid: config.params.t_grid.clone().expect("validated"),
        n_cap,
        mc_t: config.params.mc_t,
        mc_reps: config.params.mc_reps.unwrap_or(100_000),
        mc_depth,
        env_seed: config.seeds.env_seed,
        traj_seed: config.seeds.traj_seed,
        cap: cap_of(config),
        horizon: config.params.horizon.unwrap_or(0),
        stab_rel_tol: config.tolerances.mgf_stab_rel,
        growth_ceiling: 1e12,
    };
    let report = verify::check_exp_moment(&model, &opts)?;

    let mut csv = String::from("state,t,class,value\n");
    if let Some(grid) = report.extra.get("grid").and_then(|g| g.as_array()) {
        for cell in grid {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                cell.get("state").and_then(|v| v.as_u64()).unwrap_or(0),
                fmt(cell.get("t").and_then(|v| v.as_f64()).unwrap_or(f64::NAN)),
                cell.get("class").and_then(|v| v.as_str()).unwrap_or(""),
                cell.get("value")
                    .and_then(|v| v.as_f64())
                    .map(fmt)
                    .unwrap_or_default(),
            ));
        }
    }
    Ok(RunOutput {
        stats_csv: csv,
        samples_csv: None,
        trajectory_csv: None,
        report,
        warnings: Vec::new(),
    })
}

fn run_delta(config: &ExperimentConfig) -> Result<RunOutput> {
    let started = std::time::Instant::now();
    let n_terms = config.params.n_terms.expect("validated");
    let horizon = config.params.horizon.unwrap_or(n_terms).max(n_terms);
    let env = build_env(config, horizon)?;
    let series = limits::delta2_partial(&env, n_terms)?;

    let mut report = VerificationReport::new(
        "delta",
        SeedEcho {
            env_seed: config.seeds.env_seed,
            traj_seed: config.seeds.traj_seed,
        },
    );
    report.check(
        "series-converged",
        series.is_converged() && !series.is_diverging(),
        if series.is_converged() { 1.0 } else { 0.0 },
        1.0,
        "==",
        "five consecutive relative increments below 1e-12",
    );
    report.extra = serde_json::json!({
        "kind": "delta2",
        "value": series.limit(),
        "converged": series.is_converged(),
        "diverging": series.is_diverging(),
        "truncation_index": series.truncation_index(),
        "n_terms": series.terms().len(),
        "degenerate": series.is_degenerate(),
        "meta": {
            "env_seed": config.seeds.env_seed,
            "horizon": horizon,
        },
    });
    if series.is_degenerate() {
        report.flags.push("degenerate".into());
    }
    report.finish(started);

    let mut csv = String::from("n,term,partial\n");
    for (n, (&t, &p)) in series.terms().iter().zip(series.partials()).enumerate() {
        csv.push_str(&format!("{n},{},{}\n", fmt(t), fmt(p)));
    }
    Ok(RunOutput {
        stats_csv: csv,
        samples_csv: None,
        trajectory_csv: None,
        report,
        warnings: Vec::new(),
    })
}

fn run_extinction(config: &ExperimentConfig) -> Result<RunOutput> {
    let started = std::time::Instant::now();
    let depth = config.params.ext_depth.expect("validated");
    let horizon = config.params.horizon.unwrap_or(depth).max(depth);
    let env = build_env(config, horizon)?;
    let est = limits::extinction_prob(&env, depth)?;

    let mut report = VerificationReport::new(
        "extinction",
        SeedEcho {
            env_seed: config.seeds.env_seed,
            traj_seed: config.seeds.traj_seed,
        },
    );
    report.check(
        "iteration-settled",
        est.last_increment.abs() <= 1e-9,
        est.last_increment,
        1e-9,
        "<=",
        "last increment of the backward PGF composition (error estimate)",
    );
    report.extra = serde_json::json!({
        "kind": "extinction_prob",
        "value": est.value,
        "std_error": est.last_increment,
        "meta": { "depth": est.depth, "env_seed": config.seeds.env_seed },
    });
    report.finish(started);

    let csv = format!(
        "depth,q,last_increment\n{},{},{}\n",
        est.depth,
        fmt(est.value),
        fmt(est.last_increment)
    );
    Ok(RunOutput {
        stats_csv: csv,
        samples_csv: None,
        trajectory_csv: None,
        report,
        warnings: Vec::new(),
    })
}

fn run_calibrate(config: &ExperimentConfig) -> Result<RunOutput> {
    let opts = verify::CalibrateOptions {
        seed: mix(config.seeds.env_seed, config.seeds.traj_seed),
        ks_reps: config.params.ks_reps.unwrap_or(10_000),
        geometric_instances: config.params.instances.unwrap_or(100),
    };
    let report = verify::calibrate(&opts)?;
    Ok(RunOutput {
        stats_csv: String::from("n,count\n"),
        samples_csv: None,
        trajectory_csv: None,
        report,
        warnings: Vec::new(),
    })
}
