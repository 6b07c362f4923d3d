//! `rrcstorm` command-line entrypoint.

use std::fs;
use std::io::{self, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use rrcstorm::e2lite::{GnbEndpoint, LinkConfig, XappClient, XappEvent};
use rrcstorm::harness::presets::{run_preset, seeds, Preset};
use rrcstorm::harness::sweep::{sweep, write_rows_csv, ParamGrid};
use rrcstorm::harness::{classify_run, scenarios, RunOutcome};
use rrcstorm::ransim::{run_scenario_full, run_with, EventTrace, ScenarioConfig, SimOutput, TraceEventKind, WallClock};
use rrcstorm::VerdictKind;

#[derive(Parser)]
#[command(name = "rrcstorm", version, about = "RRC signaling-storm detection and mitigation testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace and outcome.
    Run(RunArgs),
    /// Run an evaluation suite or a custom parameter grid.
    Sweep(SweepArgs),
    /// Simulate the gNB in wall-clock time and wait for an xApp on TCP.
    ServeGnb(ServeGnbArgs),
    /// Connect to a gNB and run detection for one cell.
    ServeXapp(ServeXappArgs),
    /// Summarize a trace.jsonl file.
    Inspect(InspectArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Named scenario preset.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Print a JSON summary instead of one line of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Evaluation suite: fig7, fig9, table4, table5 or table6.
    #[arg(long, conflicts_with_all = ["scenario", "config"])]
    preset: Option<String>,
    /// Base scenario preset for a custom grid.
    #[arg(long)]
    scenario: Option<String>,
    /// Base scenario file for a custom grid.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Grid axis `path=v1,v2,...`, e.g. `params.t1=1,3,10`; repeatable.
    #[arg(long = "set", value_name = "PATH=VALUES")]
    axes: Vec<String>,
    /// Seeded runs per cell and base scenario.
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// First seed; runs use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeGnbArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// TCP port; 0 picks a free one.
    #[arg(long)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Simulated milliseconds per wall-clock millisecond.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// Seconds to wait for the xApp to subscribe.
    #[arg(long, default_value_t = 30)]
    subscribe_timeout: u64,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeXappArgs {
    /// Detection parameters are taken from this scenario.
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Cell to subscribe to; defaults to the scenario's cell.
    #[arg(long)]
    cell: Option<u32>,
    /// Seconds to keep retrying the initial connection.
    #[arg(long, default_value_t = 10)]
    connect_timeout: u64,
}

#[derive(Args)]
struct InspectArgs {
    trace: PathBuf,
    #[arg(long)]
    json: bool,
}

/// Exit status: 1 runtime failure, 2 bad configuration, 3 a suite missed
/// its thresholds, 130 interrupted.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Thresholds,
    Interrupted,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Thresholds => 3,
            Failure::Interrupted => 130,
        }
    }
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(io::stderr)
        .init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ServeGnb(a) => cmd_serve_gnb(a),
        Command::ServeXapp(a) => cmd_serve_xapp(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Thresholds => eprintln!("suite thresholds not met"),
                Failure::Interrupted => eprintln!("interrupted; partial outputs written"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), None) => scenarios::by_name(name, 0).ok_or_else(|| {
            config_err(anyhow!("unknown preset '{name}' (known: {})", scenarios::PRESET_NAMES.join(", ")))
        })?,
        (None, Some(path)) => ScenarioConfig::from_file(path).map_err(config_err)?,
        _ => return Err(config_err(anyhow!("one of --preset or --config is required"))),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display())).map_err(runtime)
}

/// Writes trace.jsonl, windows.csv, blocklist.json, config.toml and, for a
/// complete trace, outcome.json. Returns the outcome when there is one.
fn write_run_outputs(dir: &Path, cfg: &ScenarioConfig, out: &SimOutput) -> Result<Option<RunOutcome>, Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(runtime)?;
    write_file(&dir.join("trace.jsonl"), out.trace.to_jsonl_string().as_bytes())?;
    let mut windows = Vec::new();
    out.trace.write_windows_csv(&mut windows).map_err(runtime)?;
    write_file(&dir.join("windows.csv"), &windows)?;
    let blocklist = serde_json::to_vec_pretty(&out.final_blocklist).map_err(runtime)?;
    write_file(&dir.join("blocklist.json"), &blocklist)?;
    write_file(&dir.join("config.toml"), cfg.to_toml_string().as_bytes())?;
    if !out.trace.is_complete() {
        return Ok(None);
    }
    let outcome = classify_run(&out.trace, cfg).map_err(runtime)?;
    write_file(&dir.join("outcome.json"), &serde_json::to_vec_pretty(&outcome).map_err(runtime)?)?;
    Ok(Some(outcome))
}

fn ms(v: Option<u64>) -> String {
    v.map_or("-".into(), |v| format!("{v} ms"))
}

fn print_outcome(cfg: &ScenarioConfig, o: &RunOutcome, json_out: bool) {
    if json_out {
        println!("{}", serde_json::to_string(o).expect("outcome serializes"));
    } else {
        println!(
            "{} seed={}: {:?} detection={} mitigation={} depletion={} benign_rejections={}",
            cfg.name,
            cfg.seed,
            o.classification,
            ms(o.detection_time_ms),
            ms(o.mitigation_time_ms),
            ms(o.depletion_time_ms),
            o.benign_rejections
        );
    }
}

fn cmd_run(a: RunArgs) -> CliResult {
    let cfg = load_scenario(&a.scenario)?;
    let out = run_scenario_full(&cfg).map_err(config_err)?;
    let outcome = write_run_outputs(&a.output_dir, &cfg, &out)?.ok_or_else(|| runtime(anyhow!("trace incomplete")))?;
    print_outcome(&cfg, &outcome, a.json);
    Ok(())
}

fn parse_axis(spec: &str) -> Result<(String, Vec<Value>), Failure> {
    let (path, values) =
        spec.split_once('=').ok_or_else(|| config_err(anyhow!("--set expects PATH=V1,V2,..., got '{spec}'")))?;
    let values = values
        .split(',')
        .map(|v| serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string())))
        .collect::<Vec<_>>();
    if path.is_empty() || values.is_empty() {
        return Err(config_err(anyhow!("empty axis in '{spec}'")));
    }
    Ok((path.to_string(), values))
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let seed_list = seeds(a.seed, a.runs);
    fs::create_dir_all(&a.output_dir).map_err(runtime)?;
    if let Some(name) = &a.preset {
        let preset: Preset = name.parse().map_err(|e: String| config_err(anyhow!(e)))?;
        let report = run_preset(preset, &seed_list).map_err(runtime)?;
        let files = report.write_outputs(&a.output_dir).map_err(runtime)?;
        let checks = report.checks();
        if a.json {
            println!("{}", report.summary_json());
        } else {
            for row in &report.rows {
                let s = &row.summary;
                println!(
                    "{:<32} runs={:<4} TP={:<3} FN={:<3} FP={:<3} TN={:<3} acc={:.3} cbr={} dm={}",
                    row.label,
                    s.runs,
                    s.tp,
                    s.fn_,
                    s.fp,
                    s.tn,
                    s.accuracy,
                    s.cbr.map_or("-".into(), |v| format!("{v:.2}")),
                    s.mean_detect_mitigate_ms.or(s.mean_depletion_ms).map_or("-".into(), |v| format!("{v:.1}")),
                );
            }
            for c in &report.aging {
                println!("Δ={} ms τ_final={} saturated_at={:?} removed_at={:?}", c.delta_ms, c.final_tau_ms, c.saturated_at_ms, c.removed_at_ms);
            }
            for r in &report.calibration {
                println!(
                    "{:<7} TA {:.2} (target {}) RSSI {:.2} (target {}) σ {:.2} (target {})",
                    r.label, r.mean_ta, r.target_ta, r.mean_rssi, r.target_rssi, r.sigma_rssi, r.target_sigma
                );
            }
            for c in &checks {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        return if checks.iter().all(|c| c.passed) { Ok(()) } else { Err(Failure::Thresholds) };
    }

    let base = load_scenario(&ScenarioArgs { preset: a.scenario.clone(), config: a.config.clone(), seed: None })?;
    let axes = a.axes.iter().map(|s| parse_axis(s)).collect::<Result<Vec<_>, _>>()?;
    let borrowed: Vec<(&str, Vec<Value>)> = axes.iter().map(|(p, v)| (p.as_str(), v.clone())).collect();
    let grid = if borrowed.is_empty() { ParamGrid::labelled(vec![("base".into(), json!({}))]) } else { ParamGrid::product(&borrowed) };
    let rows = sweep(std::slice::from_ref(&base), &grid, &seed_list).map_err(|e| match e {
        rrcstorm::harness::HarnessError::Override(_) | rrcstorm::harness::HarnessError::Config(_) => config_err(e),
        other => runtime(other),
    })?;
    let path = a.output_dir.join("sweep_summary.csv");
    write_rows_csv(&rows, fs::File::create(&path).map_err(runtime)?).map_err(runtime)?;
    let json_path = a.output_dir.join("sweep.json");
    write_file(&json_path, &serde_json::to_vec_pretty(&rows).map_err(runtime)?)?;
    if a.json {
        let summary: Vec<Value> = rows.iter().map(|r| json!({"label": r.label, "summary": r.summary})).collect();
        println!("{}", Value::Array(summary));
    } else {
        for r in &rows {
            let s = &r.summary;
            println!("{:<40} TP={} FN={} FP={} TN={} acc={:.3}", r.label, s.tp, s.fn_, s.fp, s.tn, s.accuracy);
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn stop_flag() -> Result<Arc<AtomicBool>, Failure> {
    let stop = Arc::new(AtomicBool::new(false));
    let s = stop.clone();
    ctrlc::set_handler(move || s.store(true, Ordering::SeqCst)).map_err(runtime)?;
    Ok(stop)
}

fn accept_until(listener: &TcpListener, deadline: Instant, stop: &AtomicBool) -> Result<TcpStream, Failure> {
    listener.set_nonblocking(true).map_err(runtime)?;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false).map_err(runtime)?;
                return Ok(stream);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if stop.load(Ordering::SeqCst) {
                    return Err(Failure::Interrupted);
                }
                if Instant::now() >= deadline {
                    return Err(runtime(anyhow!("no xApp connected before the subscribe timeout")));
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(runtime(e)),
        }
    }
}

fn cmd_serve_gnb(a: ServeGnbArgs) -> CliResult {
    let cfg = load_scenario(&a.scenario)?;
    if !(a.time_scale.is_finite() && a.time_scale > 0.0) {
        return Err(config_err(anyhow!("--time-scale must be positive")));
    }
    let stop = stop_flag()?;
    let listener = TcpListener::bind((a.bind.as_str(), a.port))
        .with_context(|| format!("binding {}:{}", a.bind, a.port))
        .map_err(runtime)?;
    println!("listening on {}", listener.local_addr().map_err(runtime)?);
    io::stdout().flush().map_err(runtime)?;

    let deadline = Instant::now() + Duration::from_secs(a.subscribe_timeout);
    let stream = accept_until(&listener, deadline, &stop)?;
    let endpoint =
        GnbEndpoint::new(stream, &[(cfg.cell_id, cfg.params.window_ms)], LinkConfig::default()).map_err(runtime)?;
    if !endpoint.wait_for_subscription(cfg.cell_id, deadline.saturating_duration_since(Instant::now())) {
        endpoint.shutdown();
        return Err(runtime(anyhow!("no subscription for cell {} within {} s", cfg.cell_id, a.subscribe_timeout)));
    }
    eprintln!("xApp subscribed to cell {}", cfg.cell_id);
    let mut remote = endpoint.control_loop(cfg.cell_id).expect("cell registered at accept");
    let mut pacer = WallClock::new(a.time_scale, stop.clone());
    let out = if cfg.mitigation.enabled {
        run_with(&cfg, Some(&mut remote), Some(&mut pacer))
    } else {
        run_with(&cfg, None, Some(&mut pacer))
    }
    .map_err(config_err)?;
    endpoint.shutdown();

    for (t, kind) in out.trace.iter_kind() {
        match kind {
            TraceEventKind::Rejected { ue, entry_id, .. } => eprintln!("t={} ms Rejected ue={ue} entry={entry_id}", t.as_ms()),
            TraceEventKind::LoopDegraded { reason } => eprintln!("t={} ms LoopDegraded: {reason}", t.as_ms()),
            _ => {}
        }
    }
    let outcome = write_run_outputs(&a.output_dir, &cfg, &out)?;
    match outcome {
        Some(o) => {
            print_outcome(&cfg, &o, a.json);
            Ok(())
        }
        None => Err(Failure::Interrupted),
    }
}

fn connect_with_retry(addr: &str, timeout: Duration) -> Result<XappClient, Failure> {
    let deadline = Instant::now() + timeout;
    loop {
        match XappClient::connect(addr, LinkConfig::default()) {
            Ok(c) => return Ok(c),
            Err(e) if Instant::now() >= deadline => {
                return Err(runtime(anyhow::Error::new(e).context(format!("connecting to {addr}"))))
            }
            Err(_) => std::thread::sleep(Duration::from_millis(100)),
        }
    }
}

fn cmd_serve_xapp(a: ServeXappArgs) -> CliResult {
    let cfg = load_scenario(&a.scenario)?;
    let cell = a.cell.unwrap_or(cfg.cell_id);
    let stop = stop_flag()?;
    let addr = format!("{}:{}", a.host, a.port);
    let mut client = connect_with_retry(&addr, Duration::from_secs(a.connect_timeout))?;
    let window = client.subscribe(cell, cfg.params, Duration::from_secs(10)).map_err(runtime)?;
    println!("subscribed cell={cell} window_ms={window}");
    let mut out = io::stdout().lock();
    let stats = client
        .serve(&stop, |e| {
            let line = match e {
                XappEvent::Verdict { window_id, kind: VerdictKind::AttackDetected, centroids, .. } => {
                    Some(format!("window={window_id} AttackDetected clusters={}", centroids.len()))
                }
                XappEvent::ControlSent { window_id, centroids, .. } if *centroids > 0 => {
                    Some(format!("window={window_id} Control centroids={centroids}"))
                }
                XappEvent::PeerError { code, message, .. } => Some(format!("peer error {code:?}: {message}")),
                _ => None,
            };
            if let Some(line) = line {
                let _ = writeln!(out, "{line}");
                let _ = out.flush();
            }
        })
        .map_err(runtime)?;
    drop(out);
    let degraded = client.is_degraded();
    client.close();
    println!(
        "done indications={} detections={} controls={}{}",
        stats.indications,
        stats.detections,
        stats.controls,
        if degraded { " (link degraded)" } else { "" }
    );
    if stop.load(Ordering::SeqCst) {
        return Err(Failure::Interrupted);
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> CliResult {
    let file = fs::File::open(&a.trace).with_context(|| format!("opening {}", a.trace.display())).map_err(config_err)?;
    let trace = EventTrace::read_jsonl(BufReader::new(file)).map_err(config_err)?;
    let summary = inspect_summary(&trace);
    if a.json {
        println!("{summary}");
    } else {
        println!(
            "{} seed={} duration={} ms complete={}",
            trace.meta.scenario, trace.meta.seed, trace.meta.duration_ms, trace.meta.complete
        );
        if let Value::Object(m) = &summary["counts"] {
            for (k, v) in m {
                println!("  {k:<18} {v}");
            }
        }
        for key in ["first_attack_detected_ms", "first_rejection_ms", "first_allocation_failure_ms"] {
            println!("  {key:<28} {}", summary[key]);
        }
    }
    Ok(())
}

fn inspect_summary(trace: &EventTrace) -> Value {
    let mut counts = serde_json::Map::new();
    let mut first_detect = None;
    let mut first_reject = None;
    let mut first_fail = None;
    for (t, kind) in trace.iter_kind() {
        let name = match kind {
            TraceEventKind::Verdict { kind, .. } => {
                if *kind == VerdictKind::AttackDetected {
                    first_detect.get_or_insert(t.as_ms());
                }
                format!("{kind:?}")
            }
            other => {
                match other {
                    TraceEventKind::Rejected { .. } => {
                        first_reject.get_or_insert(t.as_ms());
                    }
                    TraceEventKind::AllocationFailed { .. } => {
                        first_fail.get_or_insert(t.as_ms());
                    }
                    _ => {}
                }
                serde_json::to_value(other)
                    .ok()
                    .and_then(|v| v.get("event").and_then(Value::as_str).map(str::to_string))
                    .unwrap_or_else(|| "other".into())
            }
        };
        let slot = counts.entry(name).or_insert(json!(0));
        *slot = json!(slot.as_u64().unwrap_or(0) + 1);
    }
    json!({
        "scenario": trace.meta.scenario,
        "seed": trace.meta.seed,
        "complete": trace.meta.complete,
        "events": trace.events.len(),
        "counts": counts,
        "first_attack_detected_ms": first_detect,
        "first_rejection_ms": first_reject,
        "first_allocation_failure_ms": first_fail,
    })
}
