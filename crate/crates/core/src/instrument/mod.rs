//! Locating functions in a source tree, rewriting them to emit trace events,
//! and undoing the rewrite.

mod backup;
mod index;
mod plan;
mod rewrite;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub use backup::{load_backup, restore, restore_target, BackupEntry, BackupManifest, BackupSession, STATE_DIR};
pub use index::{
    discover_packages, index_functions, index_packages, ExcludedFunction, ExclusionReason, FunctionIndex, FunctionKind,
    FunctionLocator, ParseDiagnostic, SourcePackage,
};
pub use plan::{plan_instrumentation, Exclusion, InstrumentationPlan, ResolvedFunction, Unresolved};
pub use rewrite::{guard_marker, has_guard, rewrite_source, RewriteError, GUARD_PREFIX};

#[derive(Debug, thiserror::Error)]
pub enum InstrumentError {
    #[error("{} is already instrumented: {detail}", path.display())]
    AlreadyInstrumented { path: PathBuf, detail: String },
    #[error("instrumenting {} produced unparsable source: {message}", file.display())]
    RewriteParseFailure { file: PathBuf, message: String },
    #[error("{} changed since it was indexed: {function} is no longer at its recorded span", file.display())]
    StaleLocator { file: PathBuf, function: String },
    #[error("restore incomplete; {} file(s) could not be restored: {}", failed.len(), failed.iter().map(|(p, m)| format!("{} ({m})", p.display())).collect::<Vec<_>>().join(", "))]
    RestoreIncomplete { failed: Vec<(PathBuf, String)> },
    #[error("another process holds {}", lock.display())]
    Busy { lock: PathBuf },
    #[error("backup manifest {} is unreadable: {message}", path.display())]
    CorruptBackup { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl InstrumentError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        InstrumentError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// Rewrite every function in `plan` within an open session. All rewrites
/// are computed and checked before the first file is written.
pub fn apply_in_session(
    session: &mut BackupSession,
    plan: &InstrumentationPlan,
    sink_var: &str,
) -> Result<(), InstrumentError> {
    let digest = plan.digest();
    let mut rewritten = Vec::new();
    for (file, targets) in plan.by_file() {
        let text = fs::read_to_string(file).map_err(|e| InstrumentError::io(file, e))?;
        let out = rewrite_source(&text, &targets, sink_var, &digest).map_err(|e| match e {
            RewriteError::AlreadyInstrumented => InstrumentError::AlreadyInstrumented {
                path: file.to_owned(),
                detail: "the file carries a guard marker".to_owned(),
            },
            RewriteError::StaleLocator(function) => InstrumentError::StaleLocator {
                file: file.to_owned(),
                function,
            },
            RewriteError::Parse(message) | RewriteError::Reparse(message) => InstrumentError::RewriteParseFailure {
                file: file.to_owned(),
                message,
            },
        })?;
        rewritten.push((file.to_owned(), out));
    }
    session.set_plan_digest(digest)?;
    for (file, out) in rewritten {
        session.write(&file, out.as_bytes())?;
    }
    Ok(())
}

/// Instrument the functions in `plan`, backing up each modified file under
/// `target_root`. A plan with no resolved functions touches nothing. On
/// failure every file already written is restored.
pub fn apply_instrumentation(
    plan: &InstrumentationPlan,
    sink_var: &str,
    target_root: &Path,
) -> Result<BackupManifest, InstrumentError> {
    if plan.resolved.is_empty() {
        return Ok(BackupManifest::empty(target_root));
    }
    let mut session = BackupSession::begin(target_root)?;
    match apply_in_session(&mut session, plan, sink_var) {
        Ok(()) => Ok(session.detach()),
        Err(e) => {
            session.restore()?;
            Err(e)
        }
    }
}
