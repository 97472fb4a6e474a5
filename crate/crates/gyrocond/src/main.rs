use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use gyrocond::config::{ScenarioConfig, ScenarioKind};
use gyrocond::scenarios;
use gyrocond_core::{RegisterFile, SimConfig, Simulation};

#[derive(Parser)]
#[command(name = "gyrocond", version, about = "Gyro conditioning-chain simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario; exits 0 iff every declared bound passes.
    Run {
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Start the command service and the console.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Optional local stream socket for NDJSON clients.
        #[arg(long)]
        socket: Option<PathBuf>,
    },
    /// Register-map read-back self-check.
    Selfcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the register manifest as JSON.
    Manifest,
}

fn load_config(scenario: &str, path: Option<&PathBuf>, seed: Option<u64>) -> anyhow::Result<ScenarioConfig> {
    let kind = ScenarioKind::from_name(scenario)
        .with_context(|| format!("unknown scenario '{scenario}'"))?;
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_json(&text)?
        }
        None => match seed {
            Some(s) => ScenarioConfig::new(kind, s),
            None => bail!("a seed is required (--seed or in the config file)"),
        },
    };
    if cfg.scenario != kind {
        bail!(
            "config file declares scenario '{}' but '{}' was requested",
            cfg.scenario.name(),
            kind.name()
        );
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn real_main(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            config,
            seed,
            out,
        } => {
            let cfg = load_config(&scenario, config.as_ref(), seed)?;
            let output = scenarios::run(&cfg)?;
            output
                .write(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            print!("{}", output.report.to_json());
            Ok(output.report.pass)
        }
        Command::Serve { port, host, socket } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(gyrocond::service::serve(
                gyrocond::service::ServeOptions {
                    host,
                    port,
                    socket,
                    sim: SimConfig::default(),
                },
                |addr| println!("listening on http://{addr}"),
            ))?;
            Ok(true)
        }
        Command::Selfcheck { seed } => {
            let mut sim = Simulation::new(SimConfig::default())?;
            let report = sim.selfcheck(seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.pass)
        }
        Command::Manifest => {
            let manifest = RegisterFile::default().manifest();
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    match real_main(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
