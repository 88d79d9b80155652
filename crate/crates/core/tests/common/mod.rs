#![allow(dead_code)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Once, OnceLock};

use regex::Regex;
use rtrace::instrument::{self, BackupManifest, BackupSession, InstrumentationPlan};
use rtrace::manifest::{self, DependencyEdge};
use rtrace::orchestrator;

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Copy a fixture into `parent`, returning the copy's root.
pub fn copy_fixture(name: &str, parent: &Path) -> PathBuf {
    let src = fixture_dir(name);
    let dest = parent.join(name);
    for entry in walkdir::WalkDir::new(&src).sort_by_file_name() {
        let entry = entry.unwrap();
        let rel = entry.path().strip_prefix(&src).unwrap();
        if rel.starts_with("target") || rel == Path::new("Cargo.lock") {
            continue;
        }
        let to = dest.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&to).unwrap();
        } else {
            fs::copy(entry.path(), &to).unwrap();
        }
    }
    dest
}

/// One build directory for every fixture build in the test run, so the
/// runtime and registry crates compile once.
pub fn build_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("fixture-build")
}

pub fn init_env() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        std::env::set_var(rtrace::workspace::TARGET_DIR_ENV, build_dir());
        std::env::remove_var(rtrace_rt::SINK_ENV);
    });
}

pub fn cargo(dir: &Path, args: &[&str]) -> Output {
    Command::new("cargo")
        .args(args)
        .current_dir(dir)
        .env("CARGO_TARGET_DIR", build_dir())
        .env_remove(rtrace_rt::SINK_ENV)
        .env_remove("RUST_BACKTRACE")
        .output()
        .expect("cargo runs")
}

pub fn rtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtrace"))
        .args(args)
        .env(rtrace::workspace::TARGET_DIR_ENV, build_dir())
        .env_remove(rtrace_rt::SINK_ENV)
        .output()
        .expect("rtrace runs")
}

/// Drop cargo's progress lines and libtest's timings, which differ between
/// any two builds; everything else is program output.
pub fn normalize(text: &str) -> String {
    static STATUS: OnceLock<Regex> = OnceLock::new();
    static TIMING: OnceLock<Regex> = OnceLock::new();
    static THREAD: OnceLock<Regex> = OnceLock::new();
    let status = STATUS.get_or_init(|| {
        Regex::new(r"^\s*(Compiling|Finished|Running|Blocking|Fresh|Locking|Adding|Updating|Downloaded|Downloading|Doc-tests|Checking)\b").unwrap()
    });
    let timing = TIMING.get_or_init(|| Regex::new(r"finished in \d+(\.\d+)?s").unwrap());
    let thread = THREAD.get_or_init(|| Regex::new(r"^thread '([^']*)' \(\d+\)").unwrap());
    text.lines()
        .filter(|l| !status.is_match(l))
        .map(|l| timing.replace_all(l, "finished in Xs").into_owned())
        .map(|l| thread.replace(&l, "thread '$1'").into_owned())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Plan every instrumentable function in the tree.
pub fn plan_everything(root: &Path) -> InstrumentationPlan {
    let index = instrument::index_functions(root).unwrap();
    let names: Vec<String> = index.functions.iter().map(|f| f.qualified_path.clone()).collect();
    let mut plan = instrument::plan_instrumentation(&names, &index);
    plan.unresolved.clear();
    plan
}

/// Instrument every function in the tree and make each package depend on
/// the runtime. The backup is left on disk.
pub fn instrument_everything(root: &Path) -> (InstrumentationPlan, BackupManifest) {
    let plan = plan_everything(root);
    let mut session = BackupSession::begin(root).unwrap();
    let dep = DependencyEdge::path(orchestrator::RUNTIME_PACKAGE, orchestrator::runtime_path());
    for pkg in instrument::discover_packages(root) {
        let path = pkg.dir.join(manifest::MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap();
        if let Some(edited) = manifest::add_dependency(&text, &dep).unwrap() {
            session.write(&path, edited.as_bytes()).unwrap();
        }
    }
    session.protect(&root.join("Cargo.lock")).unwrap();
    instrument::apply_in_session(&mut session, &plan, rtrace_rt::SINK_ENV).unwrap();
    (plan, session.detach())
}

/// Print a result line that bypasses libtest's output capture.
pub fn report(label: &str, pass: bool, detail: &str) {
    emit(if pass { "PASS" } else { "FAIL" }, label, detail);
}

/// Writes to fd 2 directly; libtest captures `io::stderr()` as well.
pub fn emit(status: &str, label: &str, detail: &str) {
    let line = format!("[{status}] {label}: {detail}\n");
    let mut out = std::mem::ManuallyDrop::new(unsafe { <std::fs::File as std::os::fd::FromRawFd>::from_raw_fd(2) });
    let _ = out.write_all(line.as_bytes());
}

pub fn digest(root: &Path) -> String {
    rtrace::fsutil::tree_digest(root, &["target"]).unwrap()
}
