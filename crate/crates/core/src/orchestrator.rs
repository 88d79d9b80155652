//! The `trace` pipeline: set up dependencies, instrument, run the
//! reproduction command, collect the report, and restore every modified
//! file whatever happened in between.

// A failed trace happens once per process; boxing the error buys nothing.
#![allow(clippy::result_large_err)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::collector::{self, Diagnostic, DiagnosticKind, NodeStatus, ReportMeta, TraceReport};
use crate::fsutil;
use crate::instrument::{
    self, BackupSession, Exclusion, InstrumentError, InstrumentationPlan, SourcePackage, Unresolved,
};
use crate::manifest::{self, DependencyEdge, ManifestError};
use crate::workspace::{self, Classification, InitOptions, RunOptions, Workspace, WorkspaceError};

/// Environment variable overriding where the runtime crate is found.
pub const RUNTIME_PATH_ENV: &str = "RTRACE_RUNTIME_PATH";
pub const RUNTIME_PACKAGE: &str = "rtrace-rt";

/// Directories left out of the target digest.
const DIGEST_SKIP: &[&str] = &["target", ".git"];

#[derive(Debug, Clone)]
pub struct TraceRequest {
    pub functions: Vec<String>,
    pub command: Vec<String>,
    pub workspace_path: PathBuf,
    pub target_path: PathBuf,
    pub out_path: PathBuf,
    pub timeout: Duration,
    pub value_cap: usize,
    /// Member to link when the target is a virtual workspace.
    pub member: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("invalid request: {0}")]
    Usage(String),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error("unresolved function name(s): {}", describe_unresolved(.unresolved))]
    Unresolved {
        unresolved: Vec<Unresolved>,
        exclusions: Vec<Exclusion>,
    },
    #[error("no function could be instrumented: {}", describe_exclusions(.exclusions))]
    NoFunctionsInstrumented { exclusions: Vec<Exclusion> },
    #[error("collecting the trace failed: {0}")]
    Collect(std::io::Error),
    #[error("interrupted")]
    Interrupted,
    #[error("cleanup failed: {0}")]
    CleanupFailed(InstrumentError),
}

fn describe_unresolved(u: &[Unresolved]) -> String {
    u.iter()
        .map(|u| {
            if u.candidates.is_empty() {
                format!("{} (not found)", u.requested)
            } else {
                format!("{} (ambiguous: {})", u.requested, u.candidates.join(", "))
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn describe_exclusions(e: &[Exclusion]) -> String {
    e.iter()
        .map(|e| format!("{} ({:?})", e.qualified_path, e.reason))
        .collect::<Vec<_>>()
        .join(", ")
}

/// A failed trace. When restoring also failed, `cleanup` carries that error
/// next to the original one; a report that was produced before the failure
/// is kept.
#[derive(Debug)]
pub struct TraceFailure {
    pub error: TraceError,
    pub cleanup: Option<InstrumentError>,
    pub report: Option<Box<TraceReport>>,
}

impl TraceFailure {
    fn new(error: TraceError) -> Self {
        TraceFailure {
            error,
            cleanup: None,
            report: None,
        }
    }

    pub fn cleanup_failed(&self) -> bool {
        self.cleanup.is_some() || matches!(self.error, TraceError::CleanupFailed(_))
    }
}

impl<E: Into<TraceError>> From<E> for TraceFailure {
    fn from(e: E) -> Self {
        TraceFailure::new(e.into())
    }
}

/// Location of the runtime crate injected into traced manifests.
pub fn runtime_path() -> PathBuf {
    match std::env::var_os(RUNTIME_PATH_ENV) {
        Some(p) => PathBuf::from(p),
        None => fsutil::resolve(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../runtime")),
    }
}

/// Run the full pipeline. `interrupt`, when given, is polled between stages
/// and while the command runs; setting it stops the run and restores.
pub fn trace(req: &TraceRequest, interrupt: Option<Arc<AtomicBool>>) -> Result<TraceReport, TraceFailure> {
    validate(req)?;
    let target_root = fsutil::resolve(&req.target_path);
    let target = manifest::parse_manifest(&target_root.join(manifest::MANIFEST_FILE))?;
    let ws = open_or_init_workspace(req, &target)?;
    let mut meta = ReportMeta {
        target_digest: Some(
            fsutil::tree_digest(&target_root, DIGEST_SKIP).map_err(|e| InstrumentError::Io {
                path: target_root.clone(),
                source: e,
            })?,
        ),
        command: req.command.clone(),
        ..ReportMeta::default()
    };

    let ws_crate = manifest::parse_manifest(&ws.manifest_path())?
        .crate_ident()
        .unwrap_or_else(|| workspace::DEFAULT_PACKAGE_NAME.to_owned());
    let mut packages = instrument::discover_packages(&target_root);
    packages.push(SourcePackage {
        crate_name: ws_crate,
        dir: ws.root.clone(),
    });
    let index = instrument::index_packages(&packages).map_err(|e| InstrumentError::Io {
        path: target_root.clone(),
        source: e,
    })?;
    let plan = instrument::plan_instrumentation(&req.functions, &index);
    if !plan.unresolved.is_empty() {
        return Err(TraceError::Unresolved {
            unresolved: plan.unresolved,
            exclusions: plan.excluded,
        }
        .into());
    }
    if plan.resolved.is_empty() {
        return Err(TraceError::NoFunctionsInstrumented {
            exclusions: plan.excluded,
        }
        .into());
    }
    meta.plan_digest = Some(plan.digest());
    meta.instrumented = plan.resolved.iter().map(|r| r.locator.qualified_path.clone()).collect();
    meta.exclusions = plan.excluded.clone();
    let mut diagnostics: Vec<Diagnostic> = index
        .diagnostics
        .iter()
        .map(|d| {
            Diagnostic::new(
                DiagnosticKind::SourceParse,
                format!("{}: {}", d.file.display(), d.message),
            )
        })
        .collect();
    diagnostics.extend(
        plan.notes
            .iter()
            .map(|n| Diagnostic::new(DiagnosticKind::PlanNote, n.clone())),
    );

    let mut session = BackupSession::begin(&target_root)?;
    let result = instrumented_run(req, &ws, &plan, &packages, &mut session, meta, diagnostics, interrupt);
    let cleanup = session.restore().err();
    match (result, cleanup) {
        (Ok(report), None) => Ok(report),
        (Ok(report), Some(c)) => Err(TraceFailure {
            error: TraceError::CleanupFailed(c),
            cleanup: None,
            report: Some(Box::new(report)),
        }),
        (Err(mut f), c) => {
            f.cleanup = c;
            Err(f)
        }
    }
}

fn validate(req: &TraceRequest) -> Result<(), TraceError> {
    if req.functions.is_empty() {
        return Err(TraceError::Usage("at least one function name is required".into()));
    }
    if req.command.is_empty() {
        return Err(TraceError::Usage("the command is empty".into()));
    }
    let ws = fsutil::resolve(&req.workspace_path);
    let target = fsutil::resolve(&req.target_path);
    if ws.starts_with(&target) || target.starts_with(&ws) {
        return Err(TraceError::Usage(format!(
            "workspace {} and target {} overlap",
            ws.display(),
            target.display()
        )));
    }
    if !target.join(manifest::MANIFEST_FILE).is_file() {
        return Err(TraceError::Usage(format!("{} has no Cargo.toml", target.display())));
    }
    Ok(())
}

fn open_or_init_workspace(req: &TraceRequest, target: &manifest::ManifestModel) -> Result<Workspace, TraceError> {
    if let Ok(ws) = Workspace::open(&req.workspace_path) {
        return Ok(ws);
    }
    let opts = InitOptions::default();
    Ok(workspace::init_workspace(
        target,
        &req.workspace_path,
        req.member.as_deref(),
        &opts,
    )?)
}

#[allow(clippy::too_many_arguments)]
fn instrumented_run(
    req: &TraceRequest,
    ws: &Workspace,
    plan: &InstrumentationPlan,
    packages: &[SourcePackage],
    session: &mut BackupSession,
    meta: ReportMeta,
    mut diagnostics: Vec<Diagnostic>,
    interrupt: Option<Arc<AtomicBool>>,
) -> Result<TraceReport, TraceFailure> {
    let interrupted = || interrupt.as_ref().is_some_and(|f| f.load(Ordering::SeqCst));

    inject_runtime(ws, plan, packages, session)?;
    if interrupted() {
        return Err(TraceError::Interrupted.into());
    }
    instrument::apply_in_session(session, plan, rtrace_rt::SINK_ENV)?;
    if interrupted() {
        return Err(TraceError::Interrupted.into());
    }

    let sink = tempfile::Builder::new()
        .prefix("rtrace-sink-")
        .suffix(".jsonl")
        .tempfile()
        .map_err(TraceError::Collect)?;
    let opts = RunOptions {
        timeout: req.timeout,
        env: vec![
            (
                rtrace_rt::SINK_ENV.to_owned(),
                sink.path().to_string_lossy().into_owned(),
            ),
            (rtrace_rt::VALUE_CAP_ENV.to_owned(), req.value_cap.to_string()),
        ],
        interrupt: interrupt.clone(),
    };
    let outcome = workspace::run_and_classify(ws, &req.command, &opts).map_err(|e| match e {
        WorkspaceError::Interrupted => TraceError::Interrupted,
        other => TraceError::Workspace(other),
    })?;

    let mut report = collector::collect(sink.path(), meta, Some(outcome)).map_err(TraceError::Collect)?;
    diagnostics.append(&mut report.diagnostics);
    report.diagnostics = diagnostics;
    collector::render_report(&report, &req.out_path).map_err(TraceError::Collect)?;
    Ok(report)
}

/// Add the runtime as a path dependency of the workspace and of every
/// package that has an instrumented function. Each edited manifest, and
/// the workspace lock file, goes into the backup set.
fn inject_runtime(
    ws: &Workspace,
    plan: &InstrumentationPlan,
    packages: &[SourcePackage],
    session: &mut BackupSession,
) -> Result<(), TraceFailure> {
    let dep = DependencyEdge::path(RUNTIME_PACKAGE, runtime_path());
    let mut manifests = vec![ws.manifest_path()];
    for pkg in packages {
        let owns = plan.resolved.iter().any(|r| {
            r.locator.file.starts_with(&pkg.dir)
                && !packages.iter().any(|other| {
                    other.dir != pkg.dir && other.dir.starts_with(&pkg.dir) && r.locator.file.starts_with(&other.dir)
                })
        });
        let path = pkg.dir.join(manifest::MANIFEST_FILE);
        if owns && !manifests.contains(&path) {
            manifests.push(path);
        }
    }
    for path in manifests {
        let text = fs::read_to_string(&path).map_err(|e| InstrumentError::Io {
            path: path.clone(),
            source: e,
        })?;
        if let Some(edited) = manifest::add_dependency(&text, &dep)? {
            session.write(&path, edited.as_bytes())?;
        }
    }
    session.protect(&ws.root.join("Cargo.lock"))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    ExpectFailure,
    ExpectPass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reproduction {
    Reproduced,
    NotReproduced,
}

/// Whether the traced run behaved as the reproduction expected. A run that
/// did not compile never reproduces anything.
pub fn classify_reproduction(report: &TraceReport, expectation: Expectation) -> Reproduction {
    let Some(run) = &report.run else {
        return Reproduction::NotReproduced;
    };
    let root_unwound = report
        .threads
        .values()
        .flatten()
        .any(|n| n.exit_status == NodeStatus::Unwound);
    let hit = match (expectation, run.classification) {
        (_, Classification::CompileError) => false,
        (Expectation::ExpectFailure, Classification::TestFailure) => true,
        (Expectation::ExpectFailure, _) => root_unwound,
        (Expectation::ExpectPass, Classification::Pass) => !root_unwound,
        (Expectation::ExpectPass, _) => false,
    };
    if hit {
        Reproduction::Reproduced
    } else {
        Reproduction::NotReproduced
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collector::CallNode;
    use crate::workspace::RunOutcome;

    fn report(classification: Classification, root: NodeStatus) -> TraceReport {
        let mut r = TraceReport {
            run: Some(RunOutcome {
                classification,
                exit_code: Some(if classification == Classification::Pass { 0 } else { 101 }),
                stdout: String::new(),
                stderr: String::new(),
                duration: 0.0,
                failing_tests: Vec::new(),
            }),
            ..TraceReport::default()
        };
        r.threads.insert(
            "1:0".into(),
            vec![CallNode {
                function: "toy::main".into(),
                call_id: "1:0#0".into(),
                args: vec![],
                return_value: None,
                exit_status: root,
                duration_ns: None,
                children: vec![],
            }],
        );
        r
    }

    #[test]
    fn reproduction_table() {
        use Expectation::*;
        use Reproduction::*;
        let cases = [
            (
                Classification::TestFailure,
                NodeStatus::Normal,
                ExpectFailure,
                Reproduced,
            ),
            (
                Classification::CompileError,
                NodeStatus::Normal,
                ExpectFailure,
                NotReproduced,
            ),
            (Classification::Pass, NodeStatus::Normal, ExpectFailure, NotReproduced),
            (Classification::Pass, NodeStatus::Unwound, ExpectFailure, Reproduced),
            (Classification::Pass, NodeStatus::Normal, ExpectPass, Reproduced),
            (
                Classification::TestFailure,
                NodeStatus::Normal,
                ExpectPass,
                NotReproduced,
            ),
            (
                Classification::Timeout,
                NodeStatus::MissingExit,
                ExpectFailure,
                NotReproduced,
            ),
        ];
        for (c, root, e, want) in cases {
            assert_eq!(classify_reproduction(&report(c, root), e), want, "{c:?} {root:?} {e:?}");
        }
        assert_eq!(
            classify_reproduction(&TraceReport::default(), Expectation::ExpectFailure),
            Reproduction::NotReproduced
        );
    }

    #[test]
    fn request_validation() {
        let dir = tempfile::tempdir().unwrap();
        let req = TraceRequest {
            functions: vec!["add".into()],
            command: vec!["cargo".into(), "test".into()],
            workspace_path: dir.path().join("t/ws"),
            target_path: dir.path().join("t"),
            out_path: dir.path().join("r.json"),
            timeout: Duration::from_secs(1),
            value_cap: 4096,
            member: None,
        };
        assert!(matches!(validate(&req), Err(TraceError::Usage(_))));
        let req = TraceRequest {
            functions: vec![],
            ..req
        };
        assert!(matches!(validate(&req), Err(TraceError::Usage(_))));
    }

    #[test]
    fn runtime_crate_is_found() {
        assert!(runtime_path().join("Cargo.toml").is_file());
    }
}
