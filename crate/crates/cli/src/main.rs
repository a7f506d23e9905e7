use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration as StdDuration;

use carepath_core::dsl;
use carepath_core::eventlog::{Durability, EventLog};
use carepath_core::guideline::validate;
use carepath_core::ids::CaseId;
use carepath_core::runtime::{export_entries, ExportFormat, Runtime, RuntimeConfig};
use carepath_core::scenario::{run_scenario, Scenario, ScenarioReport};
use carepath_core::scheduler::ClockMode;
use carepath_core::time::Instant;
use carepath_server::AppState;
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_MISMATCH: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "carepath", version, about = "Clinical guideline tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a guideline document.
    Validate {
        file: PathBuf,
        /// Print the document in canonical form when it is valid.
        #[arg(long)]
        canonical: bool,
    },
    /// Run a scenario in virtual time and compare its trace.
    RunScenario {
        file: PathBuf,
        /// Guideline document; overrides the scenario's `guideline` field.
        #[arg(long)]
        guideline: Option<PathBuf>,
        /// Print every event, not only the expected kinds.
        #[arg(long)]
        full: bool,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Export one case from an event log file.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        case: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Event log file; in memory when absent.
        #[arg(long)]
        store_path: Option<PathBuf>,
        /// Enable `/v1/test/*` endpoints.
        #[arg(long)]
        test_mode: bool,
        /// Run virtual time at this multiple of wall time instead of
        /// advancing it only on request.
        #[arg(long)]
        time_scale: Option<f64>,
        /// Guideline documents to deploy at startup.
        #[arg(long = "guideline")]
        guidelines: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Xes,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Xes => ExportFormat::Xes,
            Format::Json => ExportFormat::Json,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { file, canonical } => validate_cmd(&file, canonical),
        Command::RunScenario { file, guideline, full, json } => run_scenario_cmd(&file, guideline.as_deref(), full, json),
        Command::Export { store, case, format, out } => export_cmd(&store, &case, format.into(), out.as_deref()),
        Command::Serve {
            port,
            bind,
            store_path,
            test_mode,
            time_scale,
            guidelines,
        } => serve_cmd(&bind, port, store_path.as_deref(), test_mode, time_scale, &guidelines),
    }
}

fn usage_error(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_USAGE)
}

fn read(path: &Path) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| usage_error(format!("cannot read {}: {e}", path.display())))
}

fn validate_cmd(file: &Path, canonical: bool) -> ExitCode {
    let text = match read(file) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let def = match dsl::parse(&text) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            return ExitCode::from(EXIT_MISMATCH);
        }
    };
    let report = validate(&def);
    if !report.findings.is_empty() {
        eprintln!("{report}");
    }
    if !report.is_deployable() {
        eprintln!(
            "{}: {} error(s), {} warning(s)",
            file.display(),
            report.error_count(),
            report.warning_count()
        );
        return ExitCode::from(EXIT_MISMATCH);
    }
    if canonical {
        print!("{}", dsl::serialize(&def));
    } else {
        println!("{}: ok ({} warning(s))", file.display(), report.warning_count());
    }
    ExitCode::SUCCESS
}

fn run_scenario_cmd(file: &Path, guideline: Option<&Path>, full: bool, json: bool) -> ExitCode {
    let text = match read(file) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let scenario: Scenario = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => return usage_error(format!("{}: {e}", file.display())),
    };
    let guideline_path = match (guideline, &scenario.guideline) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(rel)) => file.parent().unwrap_or(Path::new(".")).join(rel),
        (None, None) => return usage_error("the scenario names no guideline; pass --guideline"),
    };
    let doc = match read(&guideline_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let def = match dsl::parse(&doc) {
        Ok(d) => d,
        Err(e) => return usage_error(format!("{}: {e}", guideline_path.display())),
    };
    let report = match run_scenario(&def, &scenario) {
        Ok(r) => r,
        Err(e) => return usage_error(e),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print_report(&report, full);
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_MISMATCH)
    }
}

fn print_report(report: &ScenarioReport, full: bool) {
    let lines = if full { &report.full_trace } else { &report.trace };
    for line in lines {
        println!("{line}");
    }
    if let Some(d) = &report.divergence {
        println!("divergence at line {}:", d.index + 1);
        println!("  expected: {}", d.expected.as_deref().unwrap_or("<end of trace>"));
        println!("  actual:   {}", d.actual.as_deref().unwrap_or("<end of trace>"));
    }
    for f in &report.failures {
        println!("failure: {f}");
    }
    println!("{}: {}", report.name, if report.passed() { "PASS" } else { "FAIL" });
}

fn export_cmd(store: &Path, case: &str, format: ExportFormat, out: Option<&Path>) -> ExitCode {
    let log = match EventLog::open_with(store, Durability::Buffered) {
        Ok(l) => l,
        Err(e) => return usage_error(format!("{}: {e}", store.display())),
    };
    let entries = log.case_entries(&CaseId::new(case));
    if entries.is_empty() {
        return usage_error(format!("no events for case `{case}` in {}", store.display()));
    }
    let text = export_entries(entries, format);
    match out {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                return usage_error(format!("cannot write {}: {e}", path.display()));
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}

fn serve_cmd(
    bind: &str,
    port: u16,
    store: Option<&Path>,
    test_mode: bool,
    time_scale: Option<f64>,
    guidelines: &[PathBuf],
) -> ExitCode {
    let addr: SocketAddr = match format!("{bind}:{port}").parse() {
        Ok(a) => a,
        Err(e) => return usage_error(format!("bad address {bind}:{port}: {e}")),
    };
    let clock = match time_scale {
        Some(scale) if scale.is_finite() && scale > 0.0 => ClockMode::Wall { scale },
        Some(scale) => return usage_error(format!("time scale must be positive, got {scale}")),
        None => ClockMode::Virtual,
    };
    let mut config = RuntimeConfig::virtual_at(Instant::now());
    config.clock = clock;
    if let Some(path) = store {
        config.log = match EventLog::open(path) {
            Ok(l) => l,
            Err(e) => return usage_error(format!("{}: {e}", path.display())),
        };
    }
    let rt = Arc::new(Runtime::new(config));
    for path in guidelines {
        let text = match read(path) {
            Ok(t) => t,
            Err(code) => return code,
        };
        match rt.deploy_text(&text) {
            Ok(d) => eprintln!("deployed {} revision {}", d.id, d.revision),
            Err(e) => return usage_error(format!("{}: {e}", path.display())),
        }
    }

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return usage_error(format!("cannot start async runtime: {e}")),
    };
    runtime.block_on(async move {
        let listener = match tokio::net::TcpListener::bind(addr).await {
            Ok(l) => l,
            Err(e) => return usage_error(format!("cannot bind {addr}: {e}")),
        };
        if let ClockMode::Wall { .. } = clock {
            carepath_server::spawn_wall_clock(rt.clone(), StdDuration::from_secs(1));
        }
        eprintln!("listening on http://{addr}/v1 (test mode {})", if test_mode { "on" } else { "off" });
        match carepath_server::serve(listener, AppState::new(rt, test_mode)).await {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => usage_error(format!("server stopped: {e}")),
        }
    })
}
