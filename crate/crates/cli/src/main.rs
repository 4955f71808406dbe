mod serve;
mod setup;

use std::fmt::Write as _;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use xrguide_core::harness::{eval_report, run_scenario, FixtureMode, Labels, RunOptions, Scenario, ScenarioReport};
use xrguide_core::session::{read_event_log, ClientMessage, Envelope, EventBody, EventLog, SessionEngine, SessionHub};

use setup::{GatewayArgs, MediaArgs};

#[derive(Parser)]
#[command(name = "xrguide", version, about = "AR task guidance engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session server (WebSocket at /ws, blobs at /blobs).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Write one event log per session here.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[command(flatten)]
        media: MediaArgs,
    },
    /// Run scenarios headlessly and check their expectations.
    Simulate {
        /// Scenario files, scenario directories, or directories of them.
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Serve the scripted responses and rewrite each fixture file.
        #[arg(long)]
        record: bool,
        /// Run scenarios concurrently.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Print reports as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Fold event logs and labels into the evaluation tables.
    Eval {
        /// An event log or a directory of `.jsonl` logs.
        logs: PathBuf,
        labels: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Plan a task without a headset: prompt, retrieval, relevance, plan.
    Plan {
        prompt: String,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[command(flatten)]
        media: MediaArgs,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("XRG_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Writes to stdout, stopping quietly when the reader has gone away.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve { addr, log_dir, gateway, media } => {
            let cache = media.cache()?;
            let services = media.services(Arc::clone(&cache))?;
            let mut hub = SessionHub::new(services, gateway.factory(cache)?);
            if let Some(d) = log_dir {
                std::fs::create_dir_all(&d)?;
                hub = hub.with_log_dir(d);
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve::serve(Arc::new(hub), addr))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { scenarios, record, parallel, log_dir, json } => {
            simulate(&scenarios, record, parallel, log_dir, json)
        }
        Command::Eval { logs, labels, json } => {
            let logs = read_logs(&logs)?;
            let labels = Labels::load(&labels)?;
            let report = eval_report(&logs, &labels)?;
            if json {
                emit(&format!("{}\n", serde_json::to_string_pretty(&report)?))?;
            } else {
                emit(&report.to_text())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan { prompt, gateway, media } => plan(&prompt, &gateway, &media),
    }
}

fn scenario_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_file() {
            out.push(p.clone());
        } else if p.join("scenario.json").is_file() {
            out.push(p.join("scenario.json"));
        } else if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path().join("scenario.json")))
                .filter(|f| f.is_file())
                .collect();
            if found.is_empty() {
                bail!("no scenarios under {}", p.display());
            }
            found.sort();
            out.extend(found);
        } else {
            bail!("{} does not exist", p.display());
        }
    }
    Ok(out)
}

fn run_one(path: &Path, opts: &RunOptions) -> Result<ScenarioReport> {
    let (s, base) = Scenario::load(path)?;
    Ok(run_scenario(&s, &base, opts)?)
}

fn simulate(paths: &[PathBuf], record: bool, parallel: bool, log_dir: Option<PathBuf>, json: bool) -> Result<ExitCode> {
    let files = scenario_files(paths)?;
    if let Some(d) = &log_dir {
        std::fs::create_dir_all(d)?;
    }
    let opts = RunOptions { mode: if record { FixtureMode::Record } else { FixtureMode::Replay }, log_dir };
    let results: Vec<Result<ScenarioReport>> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = files.iter().map(|f| scope.spawn(|| run_one(f, &opts))).collect();
            handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
        })
    } else {
        files.iter().map(|f| run_one(f, &opts)).collect()
    };
    let mut reports = Vec::new();
    for (file, r) in files.iter().zip(results) {
        reports.push(r.with_context(|| format!("running {}", file.display()))?);
    }
    let mut out = String::new();
    if json {
        out = format!("{}\n", serde_json::to_string_pretty(&reports)?);
    } else {
        for r in &reports {
            let m = &r.metrics;
            writeln!(
                out,
                "{} {}: {} model calls, {} verifications, {} steps completed",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                m.model_calls,
                m.verifications,
                m.completed_steps
            )?;
            for f in &r.failures {
                writeln!(out, "  - {f}")?;
            }
        }
    }
    emit(&out)?;
    Ok(if reports.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn read_logs(path: &Path) -> Result<Vec<Vec<xrguide_core::session::SessionEvent>>> {
    let files = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    files.iter().map(|f| read_event_log(f).with_context(|| format!("reading {}", f.display()))).collect()
}

fn plan(prompt: &str, gateway: &GatewayArgs, media: &MediaArgs) -> Result<ExitCode> {
    let cache = media.cache()?;
    let services = media.services(Arc::clone(&cache))?;
    let gw = gateway.factory(cache)?.create("plan")?;
    let mut engine = SessionEngine::new("plan", gw, services, EventLog::in_memory());
    engine.handle(Envelope::new("plan", 1, ClientMessage::StartTask { prompt: prompt.into() }));
    for e in engine.events() {
        match &e.body {
            EventBody::PlanReady { .. } => {
                emit(&format!("{}\n", serde_json::to_string_pretty(&e.body)?))?;
                return Ok(ExitCode::SUCCESS);
            }
            EventBody::Error { code, detail } => bail!("{code:?}: {detail}"),
            _ => {}
        }
    }
    bail!("planning produced no plan")
}
