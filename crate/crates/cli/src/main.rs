//! `bpre` — batch front end for the branching-process verification lab.
//!
//! Subcommands: `run` (execute a campaign from a config file or bundled
//! preset), `presets` (list bundled experiments), `validate` (schema-check a
//! config). Exit codes: 0 = all checks passed, 2 = some check failed,
//! 1 = configuration or execution error.

use bpre_core::config::ExperimentConfig;
use bpre_core::rng::mix;
use bpre_core::{presets, runner};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bpre",
    version,
    about = "Simulation and statistical verification of branching processes \
             in varying and random environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign from a config file or a bundled preset name
    Run {
        /// Path to a JSON config, or the name of a bundled preset
        config: String,
        /// Override a config leaf: --set dot.path=value (repeatable)
        #[arg(long = "set", value_name = "dot.path=value")]
        set: Vec<String>,
        /// Output directory (default: config output.dir, else "out")
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: config, else logical CPUs)
        #[arg(long)]
        workers: Option<usize>,
        /// Base seed; expands to env/traj seeds via the documented mix().
        /// Wins over BPRE_SEED, which wins over the config seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the raw fluctuation sample CSV
        #[arg(long)]
        write_samples: bool,
    },
    /// List bundled presets (one per acceptance experiment)
    Presets {
        /// Print the JSON of one preset instead of the list
        #[arg(long)]
        show: Option<String>,
    },
    /// Parse and validate a config without running it
    Validate {
        config: String,
        #[arg(long = "set", value_name = "dot.path=value")]
        set: Vec<String>,
    },
}

fn main() -> ExitCode {
    match run_cli() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Config leaves are addressable directly as flags: `--params.reps=500` is
/// shorthand for `--set params.reps=500`. Anything of the form
/// `--word.path=value` is rewritten before clap sees it; built-in flags
/// contain no dots.
fn rewrite_dot_flags() -> Vec<std::ffi::OsString> {
    std::env::args_os()
        .flat_map(|arg| {
            if let Some(text) = arg.to_str() {
                if let Some(rest) = text.strip_prefix("--") {
                    if rest.contains('.') && rest.contains('=') {
                        return vec!["--set".into(), rest.into()];
                    }
                }
            }
            vec![arg]
        })
        .collect()
}

fn run_cli() -> Result<bool, Box<dyn std::error::Error>> {
    match Cli::parse_from(rewrite_dot_flags()).command {
        Command::Run {
            config,
            set,
            out,
            workers,
            seed,
            write_samples,
        } => {
            let mut cfg = load_config(&config, &set)?;
            apply_seed_precedence(&mut cfg, seed)?;
            if write_samples {
                cfg.output.write_samples = true;
            }
            let threads = workers.unwrap_or(cfg.workers);
            if threads > 0 {
                // Ignore the error if a global pool already exists.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
            let output = runner::execute(&cfg)?;
            let dir = out
                .or_else(|| cfg.output.dir.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));
            write_artifacts(&dir, &output)?;
            print_summary(&output, &dir);
            Ok(output.passed())
        }
        Command::Presets { show } => {
            match show {
                Some(name) => {
                    let preset = presets::get(&name)
                        .ok_or_else(|| format!("no preset named '{name}'"))?;
                    print!("{}", preset.json);
                }
                None => {
                    for preset in presets::PRESETS {
                        println!("{:24} {}", preset.name, preset.summary);
                    }
                }
            }
            Ok(true)
        }
        Command::Validate { config, set } => {
            let cfg = load_config(&config, &set)?;
            let warnings = cfg.validate()?;
            println!("config ok: campaign '{}'", cfg.campaign.as_str());
            for w in warnings {
                println!("warning: {w}");
            }
            Ok(true)
        }
    }
}

/// Reads a config from a file path, or falls back to a bundled preset name.
fn load_config(source: &str, set: &[String]) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let text = if Path::new(source).exists() {
        std::fs::read_to_string(source)?
    } else if let Some(preset) = presets::get(source) {
        preset.json.to_string()
    } else {
        return Err(format!(
            "'{source}' is neither a config file nor a bundled preset \
             (see `bpre presets`)"
        )
        .into());
    };
    let overrides = set
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("--set expects dot.path=value, got '{kv}'"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentConfig::from_json_with_overrides(&text, &overrides)?)
}

/// Base-seed resolution: --seed flag, else BPRE_SEED, else config seeds.
/// A base seed expands to `env_seed = mix(base, 1)`, `traj_seed = mix(base, 2)`.
fn apply_seed_precedence(
    cfg: &mut ExperimentConfig,
    flag: Option<u64>,
) -> Result<(), Box<dyn std::error::Error>> {
    let base = match flag {
        Some(s) => Some(s),
        None => match std::env::var("BPRE_SEED") {
            Ok(v) => Some(v.parse::<u64>().map_err(|_| {
                format!("BPRE_SEED must be a 64-bit unsigned integer, got '{v}'")
            })?),
            Err(_) => None,
        },
    };
    if let Some(base) = base {
        cfg.seeds.env_seed = mix(base, 1);
        cfg.seeds.traj_seed = mix(base, 2);
    }
    Ok(())
}

fn write_artifacts(dir: &Path, output: &runner::RunOutput) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let report =
        serde_json::to_string_pretty(&output.report).expect("report serializes") + "\n";
    std::fs::write(dir.join("report.json"), report)?;
    std::fs::write(dir.join("stats.csv"), &output.stats_csv)?;
    if let Some(csv) = &output.samples_csv {
        std::fs::write(dir.join("samples.csv"), csv)?;
    }
    if let Some(csv) = &output.trajectory_csv {
        std::fs::write(dir.join("trajectory.csv"), csv)?;
    }
    Ok(())
}

fn print_summary(output: &runner::RunOutput, dir: &Path) {
    let report = &output.report;
    println!(
        "campaign {}  seeds env={} traj={}  wall {:.2}s",
        report.campaign, report.seeds.env_seed, report.seeds.traj_seed, report.wall_clock_secs
    );
    for w in &output.warnings {
        println!("  warning: {w}");
    }
    for flag in &report.flags {
        println!("  flag: {flag}");
    }
    for check in &report.checks {
        let tag = if check.passed { "PASS" } else { "FAIL" };
        let info = if check.informational { " (informational)" } else { "" };
        println!(
            "[{tag}]{info} {}: {:.6e} {} {:.6e}",
            check.name, check.observed, check.comparison, check.threshold
        );
        if !check.note.is_empty() {
            println!("       {}", check.note);
        }
    }
    if let Some(value) = report.extra.get("value").and_then(|v| v.as_f64()) {
        println!("value: {value:.12}");
    }
    println!(
        "result: {}  artifacts: {}",
        if report.passed { "PASS" } else { "FAIL" },
        dir.display()
    );
}
