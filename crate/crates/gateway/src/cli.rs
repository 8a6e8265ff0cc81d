//! `nbitms` subcommands. Exit status: 0 success, 1 runtime error, 2
//! configuration or usage error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use nbitms_core::eval::{compare_tools, ProfileDocument, ReportHeader, Window, DEFAULT_PROFILES};
use nbitms_core::sim::{fleet_from_config, FleetDocument, FleetTransport};
use nbitms_core::{Clock, SystemClock};

use crate::events::{EventHub, DEFAULT_RING};
use crate::service::{build_engine, Service};
use crate::settings::{load_config, parse_error, read_file, LoadError};

#[derive(Debug, Parser)]
#[command(name = "nbitms", version, about = "Network monitoring and configuration gateway")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the engine and serve the HTTP API.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured listen address.
        #[arg(long, env = "NBITMS_LISTEN")]
        listen: Option<String>,
        /// Overrides the configured state directory.
        #[arg(long, env = "NBITMS_STATE_DIR")]
        state_dir: Option<PathBuf>,
        /// Stop after this many seconds instead of waiting for Ctrl-C.
        #[arg(long)]
        for_s: Option<u64>,
    },
    /// Run one object's check once and print the result.
    Check {
        object_id: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve a simulated SNMP fleet over UDP.
    Sim {
        #[arg(long)]
        fleet: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        for_s: Option<u64>,
    },
    /// Compare tool profiles and print the ranking.
    Eval {
        /// Profile document; the builtin synthetic set when omitted.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Observation window in seconds, `start:end`.
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Load and check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

enum Failure {
    Runtime(String),
    Config(String),
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Failure::Config(e.to_string())
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Run {
            config,
            listen,
            state_dir,
            for_s,
        } => run(config, listen, state_dir, for_s),
        Command::Check { object_id, config } => check(&object_id, config),
        Command::Sim { fleet, bind, for_s } => sim(fleet, &bind, for_s),
        Command::Eval { profiles, window, json } => eval(profiles, window, json),
        Command::Validate { config } => validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

async fn stop_signal(for_s: Option<u64>) {
    match for_s {
        Some(s) => tokio::time::sleep(Duration::from_secs(s)).await,
        None => {
            let _ = tokio::signal::ctrl_c().await;
        }
    }
}

fn run(config: PathBuf, listen: Option<String>, state_dir: Option<PathBuf>, for_s: Option<u64>) -> Result<(), Failure> {
    let mut cfg = load_config(&config)?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    if let Some(d) = state_dir {
        cfg.state_dir = d;
    }
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let service =
        Service::start(&cfg, clock, EventHub::new(DEFAULT_RING)).map_err(|e| Failure::Runtime(e.to_string()))?;
    let service = Arc::new(service);
    let rt = runtime()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .map_err(|e| Failure::Runtime(format!("bind {}: {e}", cfg.listen)))?;
        let addr = listener.local_addr().map_err(|e| Failure::Runtime(e.to_string()))?;
        println!("listening on http://{addr}");
        tracing::info!(%addr, objects = cfg.setup.objects.len(), "gateway up");
        axum::serve(listener, crate::api::router(service.clone()))
            .with_graceful_shutdown(stop_signal(for_s))
            .await
            .map_err(|e| Failure::Runtime(e.to_string()))
    })?;
    // Open event streams never finish on their own.
    rt.shutdown_timeout(Duration::from_secs(1));
    match Arc::try_unwrap(service) {
        Ok(mut s) => s.shutdown(),
        Err(s) => {
            tracing::warn!("service still referenced at exit");
            drop(s);
        }
    }
    Ok(())
}

fn check(object_id: &str, config: PathBuf) -> Result<(), Failure> {
    let cfg = load_config(&config)?;
    let obj = cfg
        .setup
        .objects
        .iter()
        .find(|o| o.id == object_id)
        .cloned()
        .ok_or_else(|| Failure::Config(format!("no object '{object_id}' in {}", config.display())))?;
    let (engine, _fleet) = build_engine(&cfg, Arc::new(SystemClock)).map_err(|e| Failure::Runtime(e.to_string()))?;
    let result = engine.runner().run(&obj);
    println!("{object_id}: {} - {}", result.status, result.output);
    Ok(())
}

fn sim(fleet: PathBuf, bind: &str, for_s: Option<u64>) -> Result<(), Failure> {
    let text = read_file(&fleet)?;
    let doc = FleetDocument::parse(&text).map_err(|e| match serde_json::from_str::<serde_json::Value>(&text) {
        Err(pe) => Failure::from(parse_error(&fleet, &pe)),
        Ok(_) => Failure::Config(format!("{}: {e}", fleet.display())),
    })?;
    doc.validate().map_err(|e| Failure::Config(format!("{}: {e}", fleet.display())))?;
    let running = fleet_from_config(&doc, FleetTransport::Udp, bind, Arc::new(SystemClock))
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    for h in &running.handles {
        println!("{}\t{}", h.device_id, h.address);
    }
    runtime()?.block_on(stop_signal(for_s));
    Ok(())
}

fn eval(profiles: Option<PathBuf>, window: Option<String>, json: bool) -> Result<(), Failure> {
    let doc = match &profiles {
        Some(p) => ProfileDocument::parse(&read_file(p)?).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => ProfileDocument::parse(DEFAULT_PROFILES).expect("builtin profiles parse"),
    };
    let window = window
        .map(|w| w.parse::<Window>())
        .transpose()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let header = ReportHeader::new(doc.capacities.unwrap_or_default(), window, doc.note.clone());
    let report = compare_tools(&doc.tools, header).map_err(|e| Failure::Config(e.to_string()))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", report.render_text());
    }
    Ok(())
}

fn validate(config: PathBuf) -> Result<(), Failure> {
    let cfg = load_config(&config)?;
    println!(
        "{}: ok, {} objects, {} plugins, {} icon rules{}",
        config.display(),
        cfg.setup.objects.len(),
        cfg.setup.plugins.iter().count(),
        cfg.setup.icon_rules.len(),
        cfg.fleet
            .as_ref()
            .map_or(String::new(), |f| format!(", fleet of {}", f.devices.len()))
    );
    Ok(())
}
