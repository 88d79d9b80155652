use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rtrace::instrument::{self, InstrumentError};
use rtrace::manifest;
use rtrace::orchestrator::{self, Expectation, TraceError, TraceFailure, TraceRequest};
use rtrace::workspace::{self, Classification, InitOptions, RunOptions, Workspace, WorkspaceError};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUN_FAILED: u8 = 3;
const EXIT_INSTRUMENT: u8 = 4;
const EXIT_CLEANUP: u8 = 5;
const EXIT_INTERRUPTED: u8 = 130;

#[derive(Parser)]
#[command(
    name = "rtrace",
    version,
    about = "Trace function calls of a Rust crate while running a reproduction test"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manage an isolated reproduction workspace.
    #[command(subcommand)]
    Workspace(WorkspaceCommand),
    /// Instrument functions, run a command from the workspace, write a
    /// trace report, and restore the target.
    Trace(TraceArgs),
    /// Restore a target left instrumented by an interrupted run.
    Restore {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum WorkspaceCommand {
    /// Create a workspace package that depends on the target by path.
    Init {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        workspace: PathBuf,
        /// Member to link when the target is a virtual workspace.
        #[arg(long)]
        member: Option<PathBuf>,
        #[arg(long, default_value = workspace::DEFAULT_PACKAGE_NAME)]
        name: String,
        /// Build once to check that the target compiles.
        #[arg(long)]
        check_build: bool,
        #[arg(long)]
        json: bool,
    },
    /// Copy a test source file into the workspace.
    AddTest {
        #[arg(long)]
        workspace: PathBuf,
        /// Destination relative to the workspace root, e.g. tests/repro.rs.
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run a command from the workspace and classify the outcome.
    RunTest {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, default_value = "cargo test")]
        cmd: String,
        #[arg(long, default_value_t = workspace::DEFAULT_TIMEOUT.as_secs())]
        timeout: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct TraceArgs {
    /// Function to instrument: a short name or a qualified path.
    #[arg(long = "fn", required = true)]
    functions: Vec<String>,
    #[arg(long, default_value = "cargo test")]
    cmd: String,
    #[arg(long)]
    workspace: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = workspace::DEFAULT_TIMEOUT.as_secs())]
    timeout: u64,
    #[arg(long, default_value_t = rtrace_rt::DEFAULT_VALUE_CAP)]
    value_cap: usize,
    #[arg(long)]
    member: Option<PathBuf>,
    /// Also report whether the run reproduced the expected outcome.
    #[arg(long, value_enum)]
    expect: Option<Expect>,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Expect {
    Failure,
    Pass,
}

#[derive(Serialize, Default)]
struct Envelope {
    status: &'static str,
    exit_code: u8,
    report_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classification: Option<Classification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reproduction: Option<orchestrator::Reproduction>,
    diagnostics: Vec<EnvelopeDiagnostic>,
}

#[derive(Serialize)]
struct EnvelopeDiagnostic {
    kind: String,
    message: String,
}

impl Envelope {
    fn new(status: &'static str, exit_code: u8) -> Self {
        Envelope {
            status,
            exit_code,
            ..Envelope::default()
        }
    }

    fn diag(mut self, kind: &str, message: impl Into<String>) -> Self {
        self.diagnostics.push(EnvelopeDiagnostic {
            kind: kind.to_owned(),
            message: message.into(),
        });
        self
    }

    fn emit(self, json: bool) -> ExitCode {
        if json {
            println!("{}", serde_json::to_string_pretty(&self).expect("envelope serializes"));
        } else {
            for d in &self.diagnostics {
                eprintln!("rtrace: {}: {}", d.kind, d.message);
            }
            if let Some(p) = &self.report_path {
                println!("report: {}", p.display());
            }
            if let Some(c) = self.classification {
                println!("run: {}", serde_json::to_value(c).unwrap().as_str().unwrap_or_default());
            }
            if let Some(r) = self.reproduction {
                println!(
                    "reproduction: {}",
                    serde_json::to_value(r).unwrap().as_str().unwrap_or_default()
                );
            }
        }
        ExitCode::from(self.exit_code)
    }
}

fn main() -> ExitCode {
    let json = std::env::args().any(|a| a == "--json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if json => {
            return Envelope::new("usage_error", EXIT_USAGE)
                .diag("usage", e.to_string().trim_end())
                .emit(true)
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match cli.command {
        Command::Workspace(cmd) => workspace_command(cmd),
        Command::Trace(args) => trace_command(args),
        Command::Restore { target, json } => restore_command(&target, json),
    }
}

fn split_command(cmd: &str) -> Option<Vec<String>> {
    shlex::split(cmd).filter(|v| !v.is_empty())
}

fn workspace_error(e: &WorkspaceError) -> Envelope {
    let (status, code) = match e {
        WorkspaceError::Manifest(_)
        | WorkspaceError::RootNotEmpty(_)
        | WorkspaceError::Overlap { .. }
        | WorkspaceError::PathEscape(_)
        | WorkspaceError::MemberRequired { .. }
        | WorkspaceError::NotAWorkspace(_) => ("usage_error", EXIT_USAGE),
        WorkspaceError::Interrupted => ("interrupted", EXIT_INTERRUPTED),
        _ => ("error", EXIT_ERROR),
    };
    Envelope::new(status, code).diag("workspace", e.to_string())
}

fn workspace_command(cmd: WorkspaceCommand) -> ExitCode {
    match cmd {
        WorkspaceCommand::Init {
            target,
            workspace: root,
            member,
            name,
            check_build,
            json,
        } => {
            let model = match manifest::parse_manifest(&target.join(manifest::MANIFEST_FILE)) {
                Ok(m) => m,
                Err(e) => {
                    return Envelope::new("usage_error", EXIT_USAGE)
                        .diag("manifest", e.to_string())
                        .emit(json)
                }
            };
            let opts = InitOptions {
                package_name: name,
                check_build,
                ..InitOptions::default()
            };
            match workspace::init_workspace(&model, &root, member.as_deref(), &opts) {
                Ok(ws) => Envelope::new("ok", EXIT_OK)
                    .diag(
                        "info",
                        format!("workspace {} links {}", ws.root.display(), ws.link_name),
                    )
                    .emit(json),
                Err(e) => workspace_error(&e).emit(json),
            }
        }
        WorkspaceCommand::AddTest {
            workspace: root,
            path,
            from,
            json,
        } => {
            let text = match std::fs::read_to_string(&from) {
                Ok(t) => t,
                Err(e) => {
                    return Envelope::new("usage_error", EXIT_USAGE)
                        .diag("io", format!("{}: {e}", from.display()))
                        .emit(json)
                }
            };
            let result = Workspace::open(&root).and_then(|mut ws| workspace::write_test(&mut ws, &path, &text));
            match result {
                Ok(()) => Envelope::new("ok", EXIT_OK).emit(json),
                Err(e) => workspace_error(&e).emit(json),
            }
        }
        WorkspaceCommand::RunTest {
            workspace: root,
            cmd,
            timeout,
            json,
        } => {
            let Some(command) = split_command(&cmd) else {
                return Envelope::new("usage_error", EXIT_USAGE)
                    .diag("usage", "empty --cmd")
                    .emit(json);
            };
            let interrupt = install_signal_flag();
            let opts = RunOptions {
                timeout: Duration::from_secs(timeout),
                interrupt: Some(interrupt),
                ..RunOptions::default()
            };
            let result = Workspace::open(&root).and_then(|ws| workspace::run_and_classify(&ws, &command, &opts));
            match result {
                Ok(outcome) => {
                    if json {
                        println!(
                            "{}",
                            serde_json::to_string_pretty(&outcome).expect("outcome serializes")
                        );
                    } else {
                        print!("{}", outcome.stdout);
                        eprint!("{}", outcome.stderr);
                        println!("run: {:?}", outcome.classification);
                    }
                    ExitCode::from(if outcome.classification == Classification::Pass {
                        EXIT_OK
                    } else {
                        EXIT_RUN_FAILED
                    })
                }
                Err(e) => workspace_error(&e).emit(json),
            }
        }
    }
}

fn install_signal_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
        let _ = signal_hook::flag::register(sig, Arc::clone(&flag));
    }
    flag
}

fn trace_command(args: TraceArgs) -> ExitCode {
    let json = args.json;
    let Some(command) = split_command(&args.cmd) else {
        return Envelope::new("usage_error", EXIT_USAGE)
            .diag("usage", "empty --cmd")
            .emit(json);
    };
    let req = TraceRequest {
        functions: args.functions,
        command,
        workspace_path: args.workspace,
        target_path: args.target,
        out_path: args.out.clone(),
        timeout: Duration::from_secs(args.timeout),
        value_cap: args.value_cap,
        member: args.member,
    };
    let expectation = args.expect.map(|e| match e {
        Expect::Failure => Expectation::ExpectFailure,
        Expect::Pass => Expectation::ExpectPass,
    });
    let interrupt = install_signal_flag();
    match orchestrator::trace(&req, Some(interrupt)) {
        Ok(report) => {
            let classification = report.run.as_ref().map(|r| r.classification);
            let passed = classification == Some(Classification::Pass);
            let mut env = if passed {
                Envelope::new("ok", EXIT_OK)
            } else {
                Envelope::new("run_failed", EXIT_RUN_FAILED)
            };
            env.report_path = Some(args.out);
            env.classification = classification;
            env.reproduction = expectation.map(|e| orchestrator::classify_reproduction(&report, e));
            for d in &report.diagnostics {
                env = env.diag(
                    serde_json::to_value(d.kind).unwrap().as_str().unwrap_or_default(),
                    d.message.clone(),
                );
            }
            env.emit(json)
        }
        Err(failure) => failure_envelope(failure, &args.out).emit(json),
    }
}

fn failure_envelope(failure: TraceFailure, out: &Path) -> Envelope {
    let (status, code, kind) = match &failure.error {
        _ if failure.cleanup_failed() => ("cleanup_failed", EXIT_CLEANUP, "cleanup"),
        TraceError::Usage(_) => ("usage_error", EXIT_USAGE, "usage"),
        TraceError::Unresolved { .. } => ("instrumentation_error", EXIT_INSTRUMENT, "unresolved"),
        TraceError::NoFunctionsInstrumented { .. } => {
            ("instrumentation_error", EXIT_INSTRUMENT, "no_functions_instrumented")
        }
        TraceError::Instrument(_) | TraceError::Manifest(_) => {
            ("instrumentation_error", EXIT_INSTRUMENT, "instrumentation")
        }
        TraceError::Workspace(WorkspaceError::Interrupted) | TraceError::Interrupted => {
            ("interrupted", EXIT_INTERRUPTED, "interrupted")
        }
        TraceError::Workspace(_) => ("error", EXIT_ERROR, "workspace"),
        TraceError::Collect(_) => ("error", EXIT_ERROR, "collect"),
        TraceError::CleanupFailed(_) => ("cleanup_failed", EXIT_CLEANUP, "cleanup"),
    };
    let mut env = Envelope::new(status, code).diag(kind, failure.error.to_string());
    if let Some(c) = &failure.cleanup {
        env = env.diag("cleanup", c.to_string());
    }
    let (unresolved, exclusions) = match &failure.error {
        TraceError::Unresolved { unresolved, exclusions } => (&unresolved[..], &exclusions[..]),
        TraceError::NoFunctionsInstrumented { exclusions } => (&[][..], &exclusions[..]),
        _ => (&[][..], &[][..]),
    };
    for u in unresolved {
        let message = match u.candidates.is_empty() {
            true => format!("{}: no match", u.requested),
            false => format!("{}: ambiguous, candidates {}", u.requested, u.candidates.join(", ")),
        };
        env = env.diag("unresolved_name", message);
    }
    for e in exclusions {
        let reason = serde_json::to_value(e.reason).unwrap();
        env = env.diag(
            "excluded",
            format!(
                "{} ({}): {}",
                e.requested,
                e.qualified_path,
                reason.as_str().unwrap_or_default()
            ),
        );
    }
    if failure.report.is_some() {
        env.report_path = Some(out.to_owned());
    }
    env
}

fn restore_command(target: &Path, json: bool) -> ExitCode {
    match instrument::restore_target(target) {
        Ok(true) => Envelope::new("ok", EXIT_OK).diag("info", "target restored").emit(json),
        Ok(false) => Envelope::new("ok", EXIT_OK)
            .diag("info", "nothing to restore")
            .emit(json),
        Err(e @ InstrumentError::Busy { .. }) => Envelope::new("error", EXIT_ERROR)
            .diag("busy", e.to_string())
            .emit(json),
        Err(e) => Envelope::new("cleanup_failed", EXIT_CLEANUP)
            .diag("cleanup", e.to_string())
            .emit(json),
    }
}
