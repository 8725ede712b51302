//! `casegen`: scaffold, compile, validate and simulate case workbooks, and
//! serve sessions.
//!
//! Exit status: 0 success, 1 error diagnostics or a failed run, 2 usage
//! error (bad arguments, unreadable input, unusable store).

use std::cell::Cell;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use casegen_core::bundle::{read_bundle, write_bundle_dir};

use casegen_core::compiler::{ScaffoldError, Severity};
use casegen_core::engine::script::simulate;
use casegen_core::engine::Timing;
use casegen_core::{
    compile_workbook, lint_workbook, scaffold_workbook, Diagnostic, DomainSkin, Engine,
    FeedbackPolicy, Timestamp,
};
use casegen_service::library::zip_dir;
use casegen_service::{serve, system_clock, Service};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "casegen",
    version,
    about = "Build, check, simulate and serve case-study learning games"
)]
struct Cli {
    /// Output format. With `json`, stdout carries exactly one JSON document.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Skin {
    Generic,
    MedicalEmergency,
    GeneralPractitioner,
    Law,
    Mechanics,
}

impl From<Skin> for DomainSkin {
    fn from(s: Skin) -> Self {
        match s {
            Skin::Generic => DomainSkin::Generic,
            Skin::MedicalEmergency => DomainSkin::MedicalEmergency,
            Skin::GeneralPractitioner => DomainSkin::GeneralPractitioner,
            Skin::Law => DomainSkin::Law,
            Skin::Mechanics => DomainSkin::Mechanics,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum When {
    Immediate,
    End,
}

impl From<When> for Timing {
    fn from(w: When) -> Self {
        match w {
            When::Immediate => Timing::Immediate,
            When::End => Timing::End,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a starter workbook for a teaching domain.
    Scaffold {
        /// Target directory; must not exist or be empty.
        target: PathBuf,
        #[arg(long, value_enum, default_value_t = Skin::Generic)]
        skin: Skin,
    },
    /// Compile a workbook into a bundle. Nothing is written when there are errors.
    Compile {
        workbook: PathBuf,
        /// Bundle directory, or a `.zip` file to upload to a server.
        output: PathBuf,
    },
    /// Check a workbook and print its diagnostics.
    Validate {
        workbook: PathBuf,
        /// Treat warnings as errors.
        #[arg(long)]
        strict: bool,
    },
    /// Run a trace script against a bundle and print the report as JSON.
    Simulate {
        /// Bundle directory or its case.json.
        bundle: PathBuf,
        /// Script: `perform`, `answer`, `hint`, `note`, `tick`, `diagnose` lines.
        script: PathBuf,
        /// When answer correctness is revealed.
        #[arg(long, value_enum, default_value_t = When::End)]
        answers: When,
        /// When score impacts are revealed.
        #[arg(long, value_enum, default_value_t = When::End)]
        scores: When,
        /// Start time in milliseconds; `tick` lines advance from here.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the HTTP API (and an optional web player) from a store directory.
    Serve {
        #[arg(long, env = "CASEGEN_STORE")]
        store: PathBuf,
        #[arg(long, env = "CASEGEN_PORT", default_value_t = 8080)]
        port: u16,
        /// Static files served outside `/api/`.
        #[arg(long, env = "CASEGEN_UI")]
        ui: Option<PathBuf>,
    },
}

/// A failed command: exit status plus a message for stderr.
struct Failure {
    status: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        status: 2,
        message: message.into(),
    }
}

fn failed(message: impl Into<String>) -> Failure {
    Failure {
        status: 1,
        message: message.into(),
    }
}

struct Out {
    format: Format,
    emitted: Cell<bool>,
}

impl Out {
    /// Prints the command's result: `json` in JSON mode, `text` otherwise.
    fn emit(&self, json: Value, text: impl FnOnce() -> String) {
        self.emitted.set(true);
        let mut stdout = io::stdout().lock();
        let _ = match self.format {
            Format::Json => writeln!(stdout, "{json}"),
            Format::Text => {
                let t = text();
                if t.is_empty() {
                    Ok(())
                } else {
                    writeln!(stdout, "{t}")
                }
            }
        };
    }
}

fn print_diagnostics(diagnostics: &[Diagnostic]) {
    let mut stderr = io::stderr().lock();
    for d in diagnostics {
        let _ = writeln!(stderr, "{d}");
    }
}

fn count(diagnostics: &[Diagnostic], severity: Severity) -> usize {
    diagnostics
        .iter()
        .filter(|d| d.severity == severity)
        .count()
}

fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{} is not a directory", path.display())))
    }
}

fn scaffold(out: &Out, target: &Path, skin: Skin) -> Result<(), Failure> {
    let skin = DomainSkin::from(skin);
    scaffold_workbook(target, skin).map_err(|e| match e {
        ScaffoldError::PathCollision(_) => usage(e.to_string()),
        other => failed(other.to_string()),
    })?;
    out.emit(json!({ "created": target, "skin": skin.as_str() }), || {
        format!("created {} workbook in {}", skin.as_str(), target.display())
    });
    Ok(())
}

fn compile(out: &Out, workbook: &Path, output: &Path) -> Result<(), Failure> {
    require_dir(workbook)?;
    let diagnostics = lint_workbook(workbook);
    print_diagnostics(&diagnostics);
    let errors = count(&diagnostics, Severity::Error);
    let warnings = count(&diagnostics, Severity::Warning);
    let case = match compile_workbook(workbook).case {
        Some(case) if errors == 0 => case,
        _ => {
            out.emit(
                json!({ "ok": false, "output": null, "errors": errors, "warnings": warnings, "diagnostics": diagnostics }),
                String::new,
            );
            return Err(failed(format!("{errors} error(s); nothing written")));
        }
    };
    let is_zip = output
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("zip"));
    let write = || -> io::Result<()> {
        if is_zip {
            let staging = output.with_extension("zip.staging");
            let _ = fs::remove_dir_all(&staging);
            write_bundle_dir(&case, &staging, Some(workbook))?;
            let bytes = zip_dir(&staging);
            fs::remove_dir_all(&staging)?;
            fs::write(output, bytes?)
        } else {
            write_bundle_dir(&case, output, Some(workbook))
        }
    };
    write().map_err(|e| failed(format!("writing {}: {e}", output.display())))?;
    out.emit(
        json!({ "ok": true, "output": output, "case_id": case.id, "errors": 0, "warnings": warnings, "diagnostics": diagnostics }),
        || format!("wrote {} ({} warning(s))", output.display(), warnings),
    );
    Ok(())
}

fn validate(out: &Out, workbook: &Path, strict: bool) -> Result<(), Failure> {
    require_dir(workbook)?;
    let diagnostics = lint_workbook(workbook);
    print_diagnostics(&diagnostics);
    let errors = count(&diagnostics, Severity::Error);
    let warnings = count(&diagnostics, Severity::Warning);
    let ok = errors == 0 && !(strict && warnings > 0);
    out.emit(
        json!({ "ok": ok, "strict": strict, "errors": errors, "warnings": warnings, "diagnostics": diagnostics }),
        || format!("{errors} error(s), {warnings} warning(s)"),
    );
    if ok {
        Ok(())
    } else if errors == 0 {
        Err(failed("warnings are errors under --strict"))
    } else {
        Err(failed(format!("{errors} error(s)")))
    }
}

fn run_simulation(
    out: &Out,
    bundle: &Path,
    script: &Path,
    policy: FeedbackPolicy,
    start: u64,
) -> Result<(), Failure> {
    let case = read_bundle(bundle).map_err(|e| match e {
        casegen_core::BundleError::Io(_) => usage(format!("{}: {e}", bundle.display())),
        other => failed(format!("{}: {other}", bundle.display())),
    })?;
    let text =
        fs::read_to_string(script).map_err(|e| usage(format!("{}: {e}", script.display())))?;
    let engine = Engine::new(Arc::new(case), policy).map_err(|e| failed(e.to_string()))?;
    let report = simulate(&engine, &text, Timestamp(start))
        .map_err(|e| failed(format!("{}: {e}", script.display())))?;
    let value = serde_json::to_value(&report).expect("reports serialize");
    out.emit(value.clone(), || {
        serde_json::to_string_pretty(&value).unwrap()
    });
    Ok(())
}

fn run_server(out: &Out, store: &Path, port: u16, ui: Option<PathBuf>) -> Result<(), Failure> {
    if store.exists() && !store.is_dir() {
        return Err(usage(format!(
            "store {} is not a directory",
            store.display()
        )));
    }
    if let Some(ui) = &ui {
        require_dir(ui)?;
    }
    let service = Service::open(store, system_clock())
        .map_err(|e| usage(format!("cannot open store {}: {e}", store.display())))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| failed(e.to_string()))?;
    let format = out.format;
    runtime
        .block_on(serve(Arc::new(service), port, ui, |addr| {
            let ready = Out {
                format,
                emitted: Cell::new(false),
            };
            ready.emit(
                json!({ "listening": addr.to_string(), "port": addr.port() }),
                || format!("listening on http://{addr}"),
            );
        }))
        .map_err(|e| failed(format!("server: {e}")))
}

/// Whether the raw arguments ask for JSON, for errors raised before parsing
/// completes.
fn json_requested() -> bool {
    let args: Vec<String> = std::env::args().collect();
    args.iter().any(|a| a == "--format=json")
        || args
            .windows(2)
            .any(|w| w[0] == "--format" && w[1] == "json")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let status = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            if status == 2 && json_requested() {
                println!("{}", json!({ "ok": false, "error": e.kind().to_string() }));
            }
            return ExitCode::from(status);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let out = Out {
        format: cli.format,
        emitted: Cell::new(false),
    };
    let result = match cli.command {
        Command::Scaffold { target, skin } => scaffold(&out, &target, skin),
        Command::Compile { workbook, output } => compile(&out, &workbook, &output),
        Command::Validate { workbook, strict } => validate(&out, &workbook, strict),
        Command::Simulate {
            bundle,
            script,
            answers,
            scores,
            seed,
        } => {
            let policy = FeedbackPolicy {
                answers: answers.into(),
                scores: scores.into(),
            };
            run_simulation(&out, &bundle, &script, policy, seed)
        }
        Command::Serve { store, port, ui } => run_server(&out, &store, port, ui),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("casegen: {}", f.message);
            if out.format == Format::Json && !out.emitted.get() {
                println!("{}", json!({ "ok": false, "error": f.message }));
            }
            ExitCode::from(f.status)
        }
    }
}
