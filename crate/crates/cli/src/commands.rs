//! Subcommand bodies, kept out of `main` so tests can drive them.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;
use tokio::net::TcpListener;
use wsn_twin::clock::parse_iso;
use wsn_twin::report::summarize_journal;
use wsn_twin::scenario::ScenarioError;
use wsn_twin::sim::{spot_check, SpotCheck};
use wsn_twin::telemetry::{export_csv, read_journal, ExportFilter, RecordKind, StoreError};
use wsn_twin::{RunSummary, Scenario, SimError, Simulation, TelemetryStore};

use crate::config::{ConfigError, Settings};
use crate::transport::HttpTransport;
use crate::{api, runner};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

pub const JOURNAL_FILE: &str = "journal.ndjson";
pub const SUMMARY_FILE: &str = "summary.json";

/// Field values logged by hand at 10:28 on the reference day.
pub const REFERENCE_1028: (i8, u8, u16) = (33, 70, 293);

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no journal at {0} (run a scenario first)")]
    NoJournal(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invariant violations:\n  - {}", .0.join("\n  - "))]
    Violations(Vec<String>),
    #[error("replay differs from the reference:\n  - {}", .0.join("\n  - "))]
    Mismatch(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(_) | CliError::Config(_) | CliError::NoJournal(_) | CliError::Usage(_) => {
                EXIT_USAGE
            }
            _ => EXIT_VIOLATION,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pace {
    Fast,
    /// Simulated seconds per wall-clock second.
    Paced(f64),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub pace: Pace,
    pub port: Option<u16>,
    pub out: PathBuf,
    /// Keep serving after the scenario ends, until interrupted.
    pub linger: bool,
    pub settings: Settings,
}

/// Applies key and endpoint overrides from the settings.
pub fn prepare_scenario(scenario: Scenario, settings: &Settings) -> Result<Scenario, ScenarioError> {
    if settings.api_key.is_none() && settings.uplink_url.is_none() {
        return Ok(scenario);
    }
    let mut file = scenario.file;
    if let Some(key) = &settings.api_key {
        file.gateway.api_key = key.clone();
    }
    if let Some(url) = &settings.uplink_url {
        file.gateway.uplink_base = url.clone();
    }
    Scenario::from_file(file)
}

/// A simulation journaling to `<out>/journal.ndjson`.
pub fn build_sim(scenario: Scenario, out: &Path, settings: &Settings) -> Result<Simulation, CliError> {
    std::fs::create_dir_all(out).map_err(io(out))?;
    let scenario = prepare_scenario(scenario, settings)?;
    let store = TelemetryStore::create(&out.join(JOURNAL_FILE), scenario.clock)?;
    let mut sim = Simulation::new(scenario, store)?;
    if settings.uplink_url.is_some() {
        let transport = HttpTransport::new(Duration::from_secs(5))
            .map_err(|e| CliError::Usage(format!("cannot build HTTP client: {e}")))?;
        sim.set_transport(Box::new(transport));
    }
    Ok(sim)
}

fn finish(mut sim: Simulation, out: &Path) -> Result<RunSummary, CliError> {
    sim.journal_link_stats()?;
    let summary = sim.summary();
    let path = out.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&path, text + "\n").map_err(io(&path))?;
    if !summary.violations.is_empty() {
        return Err(CliError::Violations(summary.violations));
    }
    Ok(summary)
}

pub fn run(scenario: Scenario, opts: RunOptions) -> Result<RunSummary, CliError> {
    let mut sim = build_sim(scenario, &opts.out, &opts.settings)?;
    match opts.pace {
        Pace::Fast => {
            sim.run_to_end()?;
            if let Some(port) = opts.port {
                sim = serve_blocking(sim, 1.0, port, true, &opts.settings)?;
            }
        }
        Pace::Paced(speedup) => {
            let port = opts.port.unwrap_or(opts.settings.port);
            sim = serve_blocking(sim, speedup, port, opts.linger, &opts.settings)?;
        }
    }
    finish(sim, &opts.out)
}

/// Runs [`serve`] on a fresh runtime. The simulation, and any blocking HTTP
/// client inside it, is only ever dropped outside that runtime.
pub fn serve_blocking(
    sim: Simulation,
    speedup: f64,
    port: u16,
    linger: bool,
    settings: &Settings,
) -> Result<Simulation, CliError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start runtime: {e}")))?;
    let done = rt.block_on(serve(sim, speedup, port, linger, settings))?;
    drop(rt);
    match done.error {
        Some(e) => Err(e.into()),
        None => Ok(done.sim),
    }
}

/// Serves the API while the owner thread advances the simulation. Returns
/// when the run finishes (unless `linger`) or on Ctrl-C.
pub async fn serve(
    sim: Simulation,
    speedup: f64,
    port: u16,
    linger: bool,
    settings: &Settings,
) -> Result<runner::Finished, CliError> {
    let tick = Duration::from_millis(settings.tick_ms.max(1));
    let listener = TcpListener::bind(("0.0.0.0", port))
        .await
        .map_err(|e| CliError::Usage(format!("cannot listen on port {port}: {e}")))?;
    let (handle, thread) = runner::spawn(sim, speedup, tick);
    let app = api::router(handle.clone(), settings.static_dir.clone());
    tracing::info!(
        "listening on http://{}",
        listener.local_addr().map(|a| a.to_string()).unwrap_or_default()
    );
    let mut view = handle.watch();
    let stop = async move {
        let finished = async {
            if linger {
                std::future::pending::<()>().await;
            }
            let _ = view.wait_for(|v| v.snapshot.finished).await;
        };
        tokio::select! {
            _ = tokio::signal::ctrl_c() => tracing::info!("interrupted"),
            _ = finished => tracing::info!("scenario finished"),
        }
    };
    let served = axum::serve(listener, app).with_graceful_shutdown(stop).await;
    handle.shutdown();
    let done = tokio::task::spawn_blocking(move || thread.join())
        .await
        .expect("join task")
        .expect("simulation thread panicked");
    if let Err(e) = served {
        tracing::error!("server error: {e}");
    }
    Ok(done)
}

#[derive(Debug, Clone)]
pub struct FlameSample {
    pub time: String,
    pub adc: i64,
    pub in_window: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub spot: SpotCheck,
    pub flame: Vec<FlameSample>,
    pub soil_min: Option<(String, i64)>,
    pub summary: RunSummary,
    pub runtime: Duration,
}

impl ReplayReport {
    pub fn mismatches(&self) -> Vec<String> {
        let (t, h, s) = REFERENCE_1028;
        let mut out = Vec::new();
        if (self.spot.temp_c, self.spot.humidity_pct, self.spot.soil_adc) != (t, h, s) {
            out.push(format!(
                "10:28 spot check {}/{}/{} differs from {t}/{h}/{s}",
                self.spot.temp_c, self.spot.humidity_pct, self.spot.soil_adc
            ));
        }
        for f in &self.flame {
            if (f.adc > 0) != f.in_window {
                out.push(format!("flame {} at {} (window: {})", f.adc, f.time, f.in_window));
            }
        }
        if self.soil_min.as_ref().map(|(t, _)| t.as_str()) != Some("13:00") {
            out.push(format!("soil minimum at {:?}, expected 13:00", self.soil_min));
        }
        out
    }

    pub fn render(&self) -> String {
        let (t, h, s) = REFERENCE_1028;
        let yes = |ok: bool| if ok { "yes" } else { "NO" };
        let mut o = String::new();
        o += &format!(
            "{} (seed {}), {} samples per sensor node, {} records\n\n",
            self.summary.scenario,
            self.summary.seed,
            self.summary.grid.len(),
            self.summary.records
        );
        o += &format!("{:<22}{:>10}{:>11}{:>7}\n", format!("spot check {}", self.spot.time), "reference", "simulated", "match");
        o += &format!("{:<22}{:>10}{:>11}{:>7}\n", "  temperature (C)", t, self.spot.temp_c, yes(t == self.spot.temp_c));
        o += &format!("{:<22}{:>10}{:>11}{:>7}\n", "  humidity (%)", h, self.spot.humidity_pct, yes(h == self.spot.humidity_pct));
        o += &format!("{:<22}{:>10}{:>11}{:>7}\n\n", "  soil ADC", s, self.spot.soil_adc, yes(s == self.spot.soil_adc));
        o += "flame ADC per sample\n";
        for f in &self.flame {
            let mark = if f.in_window { "  flame window" } else { "" };
            o += &format!("  {}  {:>4}{mark}\n", f.time, f.adc);
        }
        if let Some((time, adc)) = &self.soil_min {
            o += &format!("\nsoil minimum: {adc} at {time}\n");
        }
        o += &format!("alarm events: {}\n", self.summary.alarm_events.len());
        for e in &self.summary.alarm_events {
            o += &format!("  {} {} {}={}\n", e.timestamp, e.rule_id, e.field, e.value);
        }
        o += &format!(
            "transmissions: {} delivered of {}, airtime {} us, energy {} mA*us\n",
            self.summary.medium.delivered,
            self.summary.medium.submitted,
            self.summary.medium.airtime_us_total,
            self.summary.medium.energy_maus_total
        );
        o += &format!("runtime: {:.3} s\n", self.runtime.as_secs_f64());
        o += "(profile values away from the 10:28 anchor are interpolated, not measured)\n";
        o
    }
}

/// Runs the embedded reference-day scenario in fast mode.
pub fn replay_paper(out: &Path, settings: &Settings) -> Result<ReplayReport, CliError> {
    let started = Instant::now();
    let scenario = Scenario::paper();
    let mut sim = build_sim(scenario, out, settings)?;
    sim.run_to_end()?;
    let runtime = started.elapsed();
    let scenario = sim.scenario().clone();
    let at = scenario.at_clock("10:28").expect("10:28 is inside the run window");
    let spot = spot_check(&scenario, at).map_err(SimError::from)?;

    let records = sim.store().records();
    let interval = scenario.profile.sample_interval;
    let flame = scenario
        .grid()
        .into_iter()
        .map(|t| {
            let adc = records
                .iter()
                .find(|r| r.kind == RecordKind::Flame && r.at_us >= t && r.at_us < t + interval)
                .and_then(|r| r.values.get("adc").copied())
                .unwrap_or(-1);
            FlameSample {
                time: scenario.clock.console_time(t),
                adc,
                in_window: scenario.profile.flame_windows.iter().any(|w| w.contains(t)),
            }
        })
        .collect();
    let soil_min = records
        .iter()
        .filter(|r| r.kind == RecordKind::Soil)
        .filter_map(|r| r.values.get("adc").map(|v| (*v, r.at_us)))
        .min()
        .map(|(v, at)| (scenario.clock.console_time(at), v));
    let summary = finish(sim, out)?;
    Ok(ReplayReport {
        spot,
        flame,
        soil_min,
        summary,
        runtime,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Summary,
}

#[derive(Debug, Clone, Default)]
pub struct ExportOptions {
    pub nodes: Vec<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    /// Include commands, alarms, uplinks and link totals, not just readings.
    pub all_kinds: bool,
}

/// Renders a journal as CSV rows or a JSON summary.
pub fn export(journal: &Path, format: ExportFormat, opts: &ExportOptions) -> Result<String, CliError> {
    if !journal.is_file() {
        return Err(CliError::NoJournal(journal.to_path_buf()));
    }
    let records = read_journal(journal)?;
    if records.is_empty() {
        return Err(CliError::NoJournal(journal.to_path_buf()));
    }
    let bound = |s: &Option<String>, name: &str| {
        s.as_deref()
            .map(parse_iso)
            .transpose()
            .map_err(|e| CliError::Usage(format!("--{name}: {e}")))
    };
    let filter = ExportFilter {
        nodes: (!opts.nodes.is_empty()).then(|| opts.nodes.clone()),
        kinds: (!opts.all_kinds)
            .then(|| RecordKind::ALL.into_iter().filter(|k| k.is_reading()).collect()),
        from: bound(&opts.from, "from")?,
        to: bound(&opts.to, "to")?,
    };
    match format {
        ExportFormat::Csv => Ok(export_csv(&records, &filter)?),
        ExportFormat::Summary => {
            let s = summarize_journal(&records);
            Ok(serde_json::to_string_pretty(&s).expect("summary serializes") + "\n")
        }
    }
}

/// Loads and validates a scenario, returning it with every default written out.
pub fn validate(path: &Path) -> Result<String, CliError> {
    let scenario = Scenario::load(path)?;
    Ok(serde_json::to_string_pretty(&scenario.file).expect("scenario serializes") + "\n")
}
