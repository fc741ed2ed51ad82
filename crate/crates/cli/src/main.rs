//! `impulsive`: batch front-end for certification, simulation, and
//! impulse-sequence classification.
//!
//! Exit codes: 0 success / conclusive verdict, 1 runtime failure,
//! 2 inconclusive verdict, 3 candidate validation violation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};

use impulsive_cli::commands;
use impulsive_cli::config::{CertifySpec, RunConfig, SystemSpec, ToleranceProfile};
use impulsive_cli::report;
use impulsive_cli::reproduce;

#[derive(Parser)]
#[command(
    name = "impulsive",
    version,
    about = "Simulation and Lyapunov-based stability certification of impulsive systems"
)]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// master seed; overrides the config's seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker thread count, recorded in the manifest (work is deterministic
    /// and independent of it)
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// output directory; overrides the IMPULSIVE_OUT environment variable
    /// and the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// integration tolerance profile
    #[arg(long, global = true, default_value = "default")]
    tolerance_profile: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the integral stability conditions and emit a verdict
    Certify {
        /// preset name (alternative to a [certify] config table)
        preset: Option<String>,
        /// window length(s) theta; repeatable
        #[arg(long)]
        theta: Vec<f64>,
    },
    /// Integrate a trajectory ensemble and write CSV artifacts
    Simulate {
        /// preset name (alternative to a [system] config table)
        preset: Option<String>,
    },
    /// Classify impulse-time sequences: frequency reports, ADT checks, T(eps)
    Classify,
    /// Run a named report bundle end to end
    Reproduce {
        /// example-5.1 | example-5.2 | lemma1-suite | example-sequences
        name: String,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::parse(&text)
        }
        None => Ok(RunConfig::empty()),
    }
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    let mut cfg = load_config(&cli)?;
    let profile = ToleranceProfile::parse(&cli.tolerance_profile)?;
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }

    // fold positional arguments into the config
    match &cli.command {
        Command::Certify { preset, theta } => {
            if cfg.certify.is_none() {
                let name = preset.clone().or_else(|| {
                    cfg.system.as_ref().and_then(|s| s.preset.clone())
                });
                match name {
                    Some(name) => {
                        let default_theta = impulsive_core::presets::by_name(&name)
                            .map(|p| p.theta);
                        cfg.certify = Some(CertifySpec {
                            preset: Some(name),
                            theta: if theta.is_empty() {
                                vec![default_theta.context("unknown preset has no default theta")?]
                            } else {
                                theta.clone()
                            },
                            candidate: None,
                            skip_validation: None,
                        });
                    }
                    None => bail!("certify needs a preset argument or a [certify] config table"),
                }
            } else if !theta.is_empty() {
                cfg.certify.as_mut().unwrap().theta = theta.clone();
            }
        }
        Command::Simulate { preset } => {
            if let Some(name) = preset {
                if cfg.system.is_some() {
                    bail!("simulate got both a preset argument and a [system] config table");
                }
                cfg.system = Some(SystemSpec::preset_only(name));
            }
        }
        Command::Classify | Command::Reproduce { .. } => {}
    }

    let out_dir = report::resolve_out_dir(cli.out.as_deref(), cfg.output_dir.as_deref());
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let ctx = commands::Context {
        config: &cfg,
        out_dir: &out_dir,
        seed,
        threads: cli.threads,
        profile,
    };

    // stamp the resolved configuration into the report directory so every
    // artifact set is self-describing
    if !matches!(cli.command, Command::Reproduce { .. }) {
        report::write_text(&out_dir, "config-resolved.toml", &cfg.to_toml()?)?;
    }

    match &cli.command {
        Command::Certify { .. } => commands::cmd_certify(&ctx),
        Command::Simulate { .. } => commands::cmd_simulate(&ctx),
        Command::Classify => commands::cmd_classify(&ctx),
        Command::Reproduce { name } => reproduce::cmd_reproduce(&ctx, name),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
