//! Isolated reproduction workspaces.
//!
//! A workspace is a fresh Cargo package outside the target tree that
//! imports the target by path. Reproduction tests live in it and are run
//! from it, so the target's own build configuration never gets involved.

use std::fs;
use std::io::{self, Read};
use std::path::{Component, Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::{self, FileLock};
use crate::manifest::{self, DependencyEdge, ManifestError, ManifestModel};

/// Overrides the shared build-artifact directory used for workspace runs.
pub const TARGET_DIR_ENV: &str = "RTRACE_TARGET_DIR";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);
pub const DEFAULT_PACKAGE_NAME: &str = "test_workspace";

/// Tool state kept inside a workspace or target root.
pub const STATE_DIR: &str = ".rtrace";
const DESCRIPTOR_FILE: &str = "workspace.json";
const RUN_LOCK_FILE: &str = "run.lock";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("target does not build:\n{stderr}")]
    TargetNotBuildable { stderr: String },
    #[error("{0} exposes no library target")]
    NoLibraryTarget(String),
    #[error("target is a virtual workspace; choose one of: {}", .candidates.join(", "))]
    MemberRequired { candidates: Vec<String> },
    #[error("workspace root {0} exists and is not empty")]
    RootNotEmpty(PathBuf),
    #[error("workspace root {root} and target {target} overlap")]
    Overlap { root: PathBuf, target: PathBuf },
    #[error("{0} escapes the workspace")]
    PathEscape(PathBuf),
    #[error("{0} is not an rtrace workspace")]
    NotAWorkspace(PathBuf),
    #[error("harness error: {0}")]
    HarnessError(String),
    #[error("interrupted")]
    Interrupted,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    pub root: PathBuf,
    pub target_path: PathBuf,
    /// Path of the linked package; differs from `target_path` when a
    /// workspace member was chosen.
    pub link_path: PathBuf,
    pub link_name: String,
    pub test_files: Vec<PathBuf>,
    pub created_at: DateTime<Utc>,
}

impl Workspace {
    /// Load the descriptor of a workspace created by [`init_workspace`].
    pub fn open(root: &Path) -> Result<Workspace, WorkspaceError> {
        let path = root.join(STATE_DIR).join(DESCRIPTOR_FILE);
        let text = fs::read_to_string(&path).map_err(|_| WorkspaceError::NotAWorkspace(root.to_owned()))?;
        serde_json::from_str(&text).map_err(|_| WorkspaceError::NotAWorkspace(root.to_owned()))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(manifest::MANIFEST_FILE)
    }

    fn save(&self) -> Result<(), WorkspaceError> {
        let dir = self.root.join(STATE_DIR);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(DESCRIPTOR_FILE);
        let text = serde_json::to_vec_pretty(self).expect("workspace descriptor serializes");
        fsutil::atomic_write(&path, &text).map_err(io_err(&path))
    }
}

#[derive(Debug, Clone)]
pub struct InitOptions {
    pub package_name: String,
    pub extra_deps: Vec<DependencyEdge>,
    /// Build the empty workspace once so an unbuildable target is reported
    /// up front.
    pub check_build: bool,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            package_name: DEFAULT_PACKAGE_NAME.to_owned(),
            extra_deps: Vec::new(),
            check_build: false,
        }
    }
}

/// Create a workspace package at `workspace_root` linking `target` by path.
///
/// For a virtual workspace target `link_member` must name a member with a
/// library target.
pub fn init_workspace(
    target: &ManifestModel,
    workspace_root: &Path,
    link_member: Option<&Path>,
    opts: &InitOptions,
) -> Result<Workspace, WorkspaceError> {
    if workspace_root.exists() {
        let mut entries = fs::read_dir(workspace_root).map_err(io_err(workspace_root))?;
        if entries.next().is_some() {
            return Err(WorkspaceError::RootNotEmpty(workspace_root.to_owned()));
        }
    }
    let target_path = fsutil::resolve(&target.package_path);
    let root = fsutil::resolve(workspace_root);
    if root.starts_with(&target_path) || target_path.starts_with(&root) {
        return Err(WorkspaceError::Overlap {
            root,
            target: target_path,
        });
    }

    let linked = match link_member {
        Some(member) => {
            let mut m = manifest::parse_manifest(&target_path.join(member).join(manifest::MANIFEST_FILE))?;
            m.package_path = fsutil::resolve(&m.package_path);
            m
        }
        None if target.is_virtual() => {
            return Err(WorkspaceError::MemberRequired {
                candidates: library_members(&target_path, target),
            })
        }
        None => {
            let mut m = target.clone();
            m.package_path = target_path.clone();
            m
        }
    };
    let link_name = linked.package_name.clone().unwrap_or_default();
    if !linked.lib_target_present {
        return Err(WorkspaceError::NoLibraryTarget(link_name));
    }

    let text = manifest::render_workspace_manifest(&linked, &opts.package_name, &opts.extra_deps)?;
    let src = root.join("src");
    fs::create_dir_all(&src).map_err(io_err(&src))?;
    let manifest_path = root.join(manifest::MANIFEST_FILE);
    fsutil::atomic_write(&manifest_path, text.as_bytes()).map_err(io_err(&manifest_path))?;
    let main = src.join("main.rs");
    fsutil::atomic_write(&main, b"fn main() {}\n").map_err(io_err(&main))?;

    let ws = Workspace {
        root,
        target_path,
        link_path: linked.package_path.clone(),
        link_name,
        test_files: Vec::new(),
        created_at: Utc::now(),
    };
    ws.save()?;

    if opts.check_build {
        let cmd = ["cargo".to_owned(), "build".to_owned()];
        let outcome = run_and_classify(&ws, &cmd, &RunOptions::default())?;
        if outcome.classification != Classification::Pass {
            let _ = fs::remove_dir_all(&ws.root);
            return Err(WorkspaceError::TargetNotBuildable { stderr: outcome.stderr });
        }
    }
    Ok(ws)
}

fn library_members(root: &Path, target: &ManifestModel) -> Vec<String> {
    target
        .members
        .iter()
        .filter(|m| {
            manifest::parse_manifest(&root.join(m).join(manifest::MANIFEST_FILE))
                .map(|mm| mm.lib_target_present)
                .unwrap_or(false)
        })
        .map(|m| m.to_string_lossy().into_owned())
        .collect()
}

/// Write a test source file inside the workspace. Overwrites are allowed;
/// the file is listed once.
pub fn write_test(ws: &mut Workspace, relative_path: &Path, source_text: &str) -> Result<(), WorkspaceError> {
    let escapes = relative_path.as_os_str().is_empty()
        || relative_path
            .components()
            .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
        || relative_path.starts_with(STATE_DIR);
    if escapes {
        return Err(WorkspaceError::PathEscape(relative_path.to_owned()));
    }
    let full = ws.root.join(relative_path);
    if let Some(parent) = full.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        if !fsutil::is_within(parent, &ws.root) {
            return Err(WorkspaceError::PathEscape(relative_path.to_owned()));
        }
    }
    fsutil::atomic_write(&full, source_text.as_bytes()).map_err(io_err(&full))?;
    let normalized: PathBuf = relative_path
        .components()
        .filter(|c| matches!(c, Component::Normal(_)))
        .collect();
    if !ws.test_files.contains(&normalized) {
        ws.test_files.push(normalized);
    }
    ws.save()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Pass,
    TestFailure,
    CompileError,
    Timeout,
    HarnessError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub classification: Classification,
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    /// Wall-clock seconds.
    pub duration: f64,
    pub failing_tests: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub timeout: Duration,
    pub env: Vec<(String, String)>,
    /// Checked while the child runs; when set the child is killed and the
    /// run returns [`WorkspaceError::Interrupted`].
    pub interrupt: Option<Arc<AtomicBool>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            timeout: DEFAULT_TIMEOUT,
            env: Vec::new(),
            interrupt: None,
        }
    }
}

/// Build-artifact directory shared by every run against the same target.
pub fn shared_target_dir(target_path: &Path) -> PathBuf {
    if let Some(dir) = std::env::var_os(TARGET_DIR_ENV) {
        return PathBuf::from(dir);
    }
    let key = fsutil::digest_bytes(fsutil::resolve(target_path).to_string_lossy().as_bytes());
    std::env::temp_dir().join("rtrace-target").join(&key[..16])
}

/// Run `command` from the workspace root and classify the result.
///
/// A run that exceeds the timeout is killed together with its process
/// group and classified as `timeout`; only failure to start the process,
/// a busy workspace and interruption are errors.
pub fn run_and_classify(ws: &Workspace, command: &[String], opts: &RunOptions) -> Result<RunOutcome, WorkspaceError> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| WorkspaceError::HarnessError("empty command".into()))?;
    let state = ws.root.join(STATE_DIR);
    fs::create_dir_all(&state).map_err(io_err(&state))?;
    let _lock = FileLock::try_acquire(&state.join(RUN_LOCK_FILE))
        .map_err(io_err(&state))?
        .ok_or_else(|| WorkspaceError::HarnessError("another run is active in this workspace".into()))?;

    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(&ws.root)
        .env("CARGO_TARGET_DIR", shared_target_dir(&ws.target_path))
        .envs(opts.env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let started = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| WorkspaceError::HarnessError(format!("cannot start `{program}`: {e}")))?;
    let stdout = drain(child.stdout.take());
    let stderr = drain(child.stderr.take());

    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {}
            Err(e) => return Err(WorkspaceError::HarnessError(e.to_string())),
        }
        let interrupted = opts.interrupt.as_ref().is_some_and(|f| f.load(Ordering::SeqCst));
        if interrupted || started.elapsed() >= opts.timeout {
            kill_group(&mut child);
            let _ = child.wait();
            if interrupted {
                return Err(WorkspaceError::Interrupted);
            }
            timed_out = true;
            break None;
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    let duration = started.elapsed().as_secs_f64();
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    let exit_code = status.and_then(|s| s.code());
    let (classification, failing_tests) = classify(exit_code, timed_out, &stdout, &stderr);
    Ok(RunOutcome {
        classification,
        exit_code,
        stdout,
        stderr,
        duration,
        failing_tests,
    })
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn kill_group(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // SAFETY: plain syscall on the group we created for this child.
        unsafe { libc::kill(-(child.id() as i32), libc::SIGKILL) };
    }
    let _ = child.kill();
}

fn compile_error_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^error\[E\d{4}\]: ").unwrap())
}

fn failed_test_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^test (\S+)(?: - should panic)? \.\.\. FAILED").unwrap())
}

/// True when `stderr` carries a compiler error diagnostic.
pub fn has_compile_error(stderr: &str) -> bool {
    compile_error_re().is_match(stderr)
        || (stderr.contains("could not compile") && stderr.lines().any(|l| l.starts_with("error")))
}

/// Map a finished run onto a [`Classification`], with the names of failed
/// tests when the test runner listed any.
pub fn classify(exit_code: Option<i32>, timed_out: bool, stdout: &str, stderr: &str) -> (Classification, Vec<String>) {
    if timed_out {
        return (Classification::Timeout, Vec::new());
    }
    if exit_code == Some(0) {
        return (Classification::Pass, Vec::new());
    }
    if has_compile_error(stderr) {
        return (Classification::CompileError, Vec::new());
    }
    let mut names: Vec<String> = [stdout, stderr]
        .iter()
        .flat_map(|s| failed_test_re().captures_iter(s))
        .map(|c| c[1].to_owned())
        .collect();
    names.sort();
    names.dedup();
    (Classification::TestFailure, names)
}

/// Remove the workspace directory. Removing an already removed workspace
/// succeeds; the target tree is never touched.
pub fn teardown(ws: &Workspace) -> Result<(), WorkspaceError> {
    if !ws.root.exists() {
        return Ok(());
    }
    if !ws.root.join(STATE_DIR).join(DESCRIPTOR_FILE).is_file() {
        return Err(WorkspaceError::NotAWorkspace(ws.root.clone()));
    }
    fs::remove_dir_all(&ws.root).map_err(io_err(&ws.root))
}
