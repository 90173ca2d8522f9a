use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;
use wsn_twin::Scenario;
use wsn_twin_cli::commands::{self, CliError, ExportFormat, ExportOptions, Pace, RunOptions, EXIT_USAGE};
use wsn_twin_cli::config::Settings;

#[derive(Parser)]
#[command(name = "wsn-twin", version, about = "Digital twin of a small farm sensor network")]
struct Cli {
    /// TOML settings file (port, api_key, uplink_url, static_dir, tick_ms).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Channel key for uplinks and the local ingest.
    #[arg(long, global = true)]
    api_key: Option<String>,
    /// Send uplinks to this ThingSpeak-style base URL instead of in-process.
    #[arg(long, global = true)]
    uplink_url: Option<String>,
    /// Serve these files next to the API.
    #[arg(long, global = true)]
    static_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        pace: PaceArgs,
        /// Serve the control API on this port.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Keep serving after the scenario ends.
        #[arg(long)]
        linger: bool,
    },
    /// Run the built-in reference day and compare against the field log.
    ReplayPaper {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Afterwards, serve the finished run on this port until Ctrl-C.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Export a journal as CSV or as a JSON summary.
    Export {
        #[arg(long, default_value = "out/journal.ndjson")]
        journal: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to these nodes (repeatable).
        #[arg(long = "node")]
        nodes: Vec<String>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        /// Include commands, alarms, uplinks and link totals.
        #[arg(long)]
        all_kinds: bool,
    },
    /// Check a scenario file and print it with defaults filled in.
    Validate { scenario: PathBuf },
}

#[derive(Args)]
#[group(multiple = false)]
struct PaceArgs {
    /// Run as fast as possible (default).
    #[arg(long)]
    fast: bool,
    /// Run at N simulated seconds per wall second and serve the API.
    #[arg(long, value_name = "N")]
    paced: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Summary,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    settings.api_key = cli.api_key.or(settings.api_key);
    settings.uplink_url = cli.uplink_url.or(settings.uplink_url);
    settings.static_dir = cli.static_dir.or(settings.static_dir);
    match cli.command {
        Command::Run {
            scenario,
            pace,
            port,
            out,
            linger,
        } => {
            let pace = match pace.paced {
                Some(n) if !(n.is_finite() && n > 0.0) => {
                    return Err(CliError::Usage(format!("--paced {n}: must be a positive number")))
                }
                Some(n) => Pace::Paced(n),
                None => Pace::Fast,
            };
            let scenario = Scenario::load(&scenario)?;
            let summary = commands::run(
                scenario,
                RunOptions {
                    pace,
                    port,
                    out: out.clone(),
                    linger,
                    settings,
                },
            )?;
            let ratio = format!("{:.2}%", summary.delivery_ratio * 100.0);
            println!(
                "{}: {} records, delivery {ratio}, {} alarm events, journal in {}",
                summary.scenario,
                summary.records,
                summary.alarm_events.len(),
                out.display()
            );
            Ok(())
        }
        Command::ReplayPaper { out, port } => {
            let report = commands::replay_paper(&out, &settings)?;
            print!("{}", report.render());
            let mismatches = report.mismatches();
            if let Some(port) = port {
                let mut sim = commands::build_sim(Scenario::paper(), &out.join("serve"), &settings)?;
                sim.run_to_end()?;
                commands::serve_blocking(sim, 1.0, port, true, &settings)?;
            }
            if mismatches.is_empty() {
                Ok(())
            } else {
                Err(CliError::Mismatch(mismatches))
            }
        }
        Command::Export {
            journal,
            format,
            out,
            nodes,
            from,
            to,
            all_kinds,
        } => {
            let format = match format {
                Format::Csv => ExportFormat::Csv,
                Format::Summary => ExportFormat::Summary,
            };
            let text = commands::export(
                &journal,
                format,
                &ExportOptions {
                    nodes,
                    from,
                    to,
                    all_kinds,
                },
            )?;
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|source| CliError::Io { path, source }),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Validate { scenario } => {
            print!("{}", commands::validate(&scenario)?);
            Ok(())
        }
    }
}
