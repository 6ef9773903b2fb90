//! `vbarrier` subcommands.

use std::ffi::OsString;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use vbarrier_core::scenario::{load_scenario, LoadedScenario};
use vbarrier_core::sim::{run_headless, Outcome};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_DONE: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

/// Environment variable holding the default `serve` port.
pub const PORT_ENV: &str = "VBARRIER_PORT";

#[derive(Debug, Parser)]
#[command(name = "vbarrier", version, about = "Virtual-barrier motion replanning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run a scenario headless and write its metrics log.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Planner seed; defaults to the scenario's `seeds.planner`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output path for the metrics JSON.
        #[arg(long)]
        metrics: PathBuf,
        /// Sim-time cap in seconds.
        #[arg(long)]
        max_time: Option<f64>,
        /// Monitor tick rate in Hz.
        #[arg(long)]
        tick_hz: Option<f64>,
    },
    /// Serve the interactive WebSocket gateway.
    Serve {
        #[arg(long, env = PORT_ENV, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        scenario: PathBuf,
        /// Directory holding the client bundle served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn load(path: &Path) -> Result<LoadedScenario, u8> {
    match load_scenario(path) {
        Ok(l) => {
            for w in &l.warnings {
                eprintln!("warning: {w}");
            }
            Ok(l)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Err(EXIT_ERROR)
        }
    }
}

fn positive(v: f64, flag: &str) -> Result<f64, u8> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        eprintln!("error: --{flag} must be a positive number, got {v}");
        Err(EXIT_USAGE)
    }
}

fn cmd_run(
    scenario: &Path,
    seed: Option<u64>,
    metrics: &Path,
    max_time: Option<f64>,
    tick_hz: Option<f64>,
) -> Result<u8, u8> {
    let mut loaded = load(scenario)?;
    if let Some(t) = max_time {
        loaded.spec.sim.max_time = positive(t, "max-time")?;
    }
    if let Some(h) = tick_hz {
        loaded.spec.monitor.tick_hz = positive(h, "tick-hz")?;
    }
    let seed = seed.unwrap_or(loaded.spec.seeds.planner);
    let log = run_headless(&loaded, seed).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })?;
    std::fs::write(metrics, log.to_json()).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", metrics.display());
        EXIT_ERROR
    })?;
    eprintln!(
        "{}: {:?} at {:.2} s, stops {}, collisions {}",
        log.scenario, log.outcome, log.sim_time_end, log.stop_count, log.ground_truth_collision_count
    );
    Ok(match log.outcome {
        Outcome::Done => EXIT_OK,
        _ => EXIT_NOT_DONE,
    })
}

fn cmd_validate(scenario: &Path) -> u8 {
    match load(scenario) {
        Ok(_) => {
            println!("{}: ok", scenario.display());
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn cmd_serve(host: IpAddr, port: u16, scenario: &Path, static_dir: Option<PathBuf>) -> u8 {
    let Ok(loaded) = load(scenario) else {
        return EXIT_ERROR;
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    rt.block_on(async move {
        let server = match crate::Server::bind(loaded, SocketAddr::new(host, port), static_dir).await {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_ERROR;
            }
        };
        if let Ok(addr) = server.local_addr() {
            eprintln!("listening on http://{addr} (ws://{addr}/ws)");
        }
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        match server.run_until(shutdown).await {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        }
    })
}

/// Parses `args` and runs the chosen subcommand; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Cmd::Run {
            scenario,
            seed,
            metrics,
            max_time,
            tick_hz,
        } => cmd_run(&scenario, seed, &metrics, max_time, tick_hz).unwrap_or_else(|c| c),
        Cmd::Serve {
            port,
            host,
            scenario,
            static_dir,
        } => cmd_serve(host, port, &scenario, static_dir),
        Cmd::Validate { scenario } => cmd_validate(&scenario),
    }
}
