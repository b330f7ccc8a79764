use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use holodeck_core::meshline::{run_pipeline, PipelineConfig};
use holodeck_core::mocapsim::{read_recording, simulate, write_recording, TrajectorySpec};
use holodeck_core::neurocube::{save_dataset, synth_network, SynthSpec};
use holodeck_core::posecast::{
    replay_recording, run_loopback, spawn_time_server, Broadcaster, LoopbackConfig, ReplayConfig, DEFAULT_PORT,
};
use holodeck_core::tracking::{design_constellations, load_constellations, ConstellationFile, TrackerConfig};
use holoserve::{AppState, ServiceConfig, CONFIG_ENV};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "holodeck", version, about = "Tracking, pose streaming, network viewer service and mesh pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a marker capture session and write a recording.
    Sim {
        /// Trajectory spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Constellation file (JSON).
        #[arg(long)]
        bodies: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track every frame of a recording and broadcast the poses over UDP.
    Replay {
        recording: PathBuf,
        /// Destination port on --host.
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Extra destinations (host:port); may repeat.
        #[arg(long)]
        peer: Vec<SocketAddr>,
        /// Also answer clock-sync requests on this UDP port.
        #[arg(long)]
        time_port: Option<u16>,
        /// Send frames back to back instead of at the recorded rate.
        #[arg(long)]
        fast: bool,
    },
    /// Run the viewer service.
    Serve {
        /// Service config (JSON); falls back to $HOLODECK_CONFIG.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the listen address.
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
    /// Run the mesh pipeline on an OBJ file.
    Mesh {
        input: PathBuf,
        #[arg(long)]
        target_tris: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the JSON report; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Pipeline config (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stages to skip; may repeat.
        #[arg(long, value_enum)]
        skip: Vec<Stage>,
    },
    /// Replay a recording over UDP loopback and check end-to-end latency.
    Latency {
        #[arg(long)]
        recording: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        budget_ms: f64,
        #[arg(long)]
        fast: bool,
        /// Where to write the JSON report; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Delay added before each consume stamp (fault injection).
        #[arg(long, hide = true)]
        inject_delay_ms: Option<f64>,
    },
    /// Generate a synthetic network dataset.
    Synth {
        /// Synthesis parameters (JSON); defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        neurons: Option<usize>,
        #[arg(long)]
        connections: Option<usize>,
        /// Output directory for the manifest and CSV files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Design a set of marker constellations with distinct signatures.
    Constellations {
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 6)]
        markers: usize,
        /// Radius of the marker sphere in meters.
        #[arg(long, default_value_t = 0.08)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    Triangulate,
    Repair,
    Decimate,
    Materials,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    let separation = TrackerConfig::default().signature_separation;
    match command {
        Command::Sim { spec, bodies, out } => {
            let spec: TrajectorySpec = read_json(&spec)?;
            let constellations = load_constellations(&bodies, separation).with_context(|| format!("loading {}", bodies.display()))?;
            let recording = simulate(&spec, &constellations)?;
            write_recording(&recording, &out)?;
            eprintln!("wrote {} frames to {}", recording.frames.len(), out.display());
        }
        Command::Replay {
            recording,
            port,
            host,
            mut peer,
            time_port,
            fast,
        } => {
            let rec = read_recording(&recording)?;
            let target = std::net::ToSocketAddrs::to_socket_addrs(&(host.as_str(), port))?
                .next()
                .with_context(|| format!("cannot resolve {host}"))?;
            peer.insert(0, target);
            let _time = match time_port {
                Some(p) => Some(spawn_time_server(UdpSocket::bind(("0.0.0.0", p))?)?),
                None => None,
            };
            let mut broadcaster = Broadcaster::bind("0.0.0.0:0", peer)?;
            let cfg = ReplayConfig {
                realtime: !fast,
                ..ReplayConfig::default()
            };
            let sent = replay_recording(&rec, &mut broadcaster, &cfg, &AtomicBool::new(false), |_| {})?;
            let stats = broadcaster.stats();
            eprintln!("sent {sent} frames ({} datagrams, {} dropped)", stats.datagrams_sent, stats.dropped);
        }
        Command::Serve { config, listen } => {
            let path = config.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
            let mut config = match &path {
                Some(p) => ServiceConfig::load(p)?,
                None => {
                    log::warn!("no config given; serving defaults with no datasets");
                    ServiceConfig::default()
                }
            };
            if let Some(addr) = listen {
                config.listen = addr;
            }
            config.validate()?;
            serve(config)?;
        }
        Command::Mesh {
            input,
            target_tris,
            out,
            report,
            config,
            skip,
        } => {
            let mut cfg: PipelineConfig = match &config {
                Some(p) => read_json(p)?,
                None => PipelineConfig::default(),
            };
            if target_tris.is_some() {
                cfg.target_triangles = target_tris;
            }
            for s in skip {
                match s {
                    Stage::Triangulate => cfg.triangulate = false,
                    Stage::Repair => cfg.repair = false,
                    Stage::Decimate => cfg.decimate = false,
                    Stage::Materials => cfg.materials = false,
                }
            }
            let rep = run_pipeline(&input, &out, &cfg)?;
            for w in &rep.warnings {
                log::warn!("{w}");
            }
            write_json(report.as_deref(), &rep)?;
        }
        Command::Latency {
            recording,
            budget_ms,
            fast,
            report,
            inject_delay_ms,
        } => {
            if !(budget_ms > 0.0 && budget_ms.is_finite()) {
                bail!("--budget-ms must be positive");
            }
            let rec = read_recording(&recording)?;
            let cfg = LoopbackConfig {
                replay: ReplayConfig {
                    realtime: !fast,
                    ..ReplayConfig::default()
                },
                budget_ns: Some((budget_ms * 1e6) as u64),
                consume_delay: inject_delay_ms.filter(|d| *d > 0.0).map(|d| Duration::from_secs_f64(d / 1e3)),
            };
            let outcome = run_loopback(&rec, &cfg)?;
            let r = &outcome.report;
            write_json(report.as_deref(), r)?;
            eprintln!(
                "{}: p99 {:.3} ms vs budget {:.3} ms; {} of {} frames observed",
                if r.pass { "PASS" } else { "FAIL" },
                r.end_to_end.p99 as f64 / 1e6,
                r.budget_ns as f64 / 1e6,
                outcome.frames_observed,
                outcome.frames_sent,
            );
            if !r.pass {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Synth {
            spec,
            neurons,
            connections,
            out,
        } => {
            let mut s: SynthSpec = match &spec {
                Some(p) => read_json(p)?,
                None => SynthSpec::default(),
            };
            s.n_neurons = neurons.unwrap_or(s.n_neurons);
            s.n_connections = connections.unwrap_or(s.n_connections);
            let dataset = synth_network(&s)?;
            let manifest = save_dataset(&dataset, &out)?;
            eprintln!("wrote {}", manifest.display());
        }
        Command::Constellations {
            count,
            markers,
            radius,
            seed,
            out,
        } => {
            let set = design_constellations(count, markers, radius, separation, seed)?;
            write_json(Some(&out), &ConstellationFile::from_constellations(&set))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(config: ServiceConfig) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.listen)
            .await
            .with_context(|| format!("binding {}", config.listen))?;
        let state = Arc::new(tokio::task::block_in_place(|| AppState::from_config(config))?);
        log::info!(
            "listening on {}; {} datasets, {} scenes",
            listener.local_addr()?,
            state.datasets.len(),
            state.scenes.len()
        );
        if let Some(relay) = &state.relay {
            log::info!("pose frames on udp {}", relay.local_addr);
        }
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        holoserve::serve(state, listener, shutdown).await?;
        Ok(())
    })
}
