use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use xcosw_cli::service::{router, ServiceConfig};
use xcosw_cli::{load_diagram, write_diagram, DiagramFormat, OptionOverrides};
use xcosw_core::{compile, export_csv, export_json, palette, simulate, validate, Diagnostic};

/// Block-diagram simulation workbench for Xcos-style diagrams.
#[derive(Parser)]
#[command(name = "xcosw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResultFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check a diagram and print its diagnostics
    Validate { file: PathBuf },
    /// Simulate a diagram and write the probe series
    Simulate {
        file: PathBuf,
        #[command(flatten)]
        options: OptionOverrides,
        /// Output file; standard output when absent
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: ResultFormat,
    },
    /// Re-encode a diagram as Xcos XML or interchange JSON
    Convert {
        file: PathBuf,
        #[arg(long, value_enum)]
        to: DiagramFormat,
        /// Output file; standard output when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the block palette as JSON
    Blocks,
    /// Run the HTTP simulation service
    Serve {
        #[arg(long, env = "XCOSW_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
        /// Simulations run at once; defaults to the CPU count
        #[arg(long)]
        jobs: Option<usize>,
        /// Wall-clock budget per simulation, seconds
        #[arg(long, default_value_t = 30.0)]
        budget: f64,
        /// Directory with the editor bundle, served at /
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

/// Exit status for bad input or failed I/O.
const EXIT_ERROR: u8 = 2;
/// Exit status when the diagram has error diagnostics.
const EXIT_INVALID: u8 = 1;

fn fail(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("xcosw: {message}");
    ExitCode::from(EXIT_ERROR)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| format!("stdout: {e}")),
    }
}

fn print_diagnostics(diags: &[Diagnostic], to_stderr: bool) {
    for d in diags {
        if to_stderr {
            eprintln!("{d}");
        } else {
            println!("{d}");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { file } => {
            let d = match load_diagram(&file) {
                Ok(d) => d,
                Err(e) => return fail(e),
            };
            let diags = validate(&d);
            print_diagnostics(&diags, false);
            if diags.iter().any(Diagnostic::is_error) {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Simulate {
            file,
            options,
            out,
            format,
        } => {
            let d = match load_diagram(&file) {
                Ok(d) => d,
                Err(e) => return fail(e),
            };
            let opts = options.apply(&d.settings);
            if let Err(e) = opts.validate() {
                return fail(e);
            }
            let diags = validate(&d);
            if diags.iter().any(Diagnostic::is_error) {
                print_diagnostics(&diags, true);
                eprintln!("xcosw: simulation refused");
                return ExitCode::from(EXIT_INVALID);
            }
            let result = match compile(&d)
                .map_err(|e| e.to_string())
                .and_then(|sys| simulate(&sys, &opts).map_err(|e| e.to_string()))
            {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            let bytes = match format {
                ResultFormat::Csv => export_csv(&result),
                ResultFormat::Json => export_json(&result),
            };
            match emit(out.as_deref(), &bytes) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Convert { file, to, out } => {
            let d = match load_diagram(&file) {
                Ok(d) => d,
                Err(e) => return fail(e),
            };
            match emit(out.as_deref(), &write_diagram(&d, to)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Blocks => {
            let mut text = serde_json::to_string_pretty(&palette()).expect("palette serializes");
            text.push('\n');
            match emit(None, text.as_bytes()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Serve {
            port,
            host,
            jobs,
            budget,
            static_dir,
        } => {
            if !(budget > 0.0 && budget.is_finite()) {
                return fail(format!("--budget must be positive, got {budget}"));
            }
            let mut config = ServiceConfig {
                budget: Duration::from_secs_f64(budget),
                static_dir,
                ..ServiceConfig::default()
            };
            if let Some(j) = jobs {
                config.jobs = j.max(1);
            }
            match serve(&host, port, config) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}

fn serve(host: &str, port: u16, config: ServiceConfig) -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        tracing::info!(
            addr = %listener.local_addr()?,
            jobs = config.jobs,
            "listening"
        );
        axum::serve(listener, router(config))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}
