use std::cell::Cell;
use std::fs::{File, OpenOptions};
use std::io::{self, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use crate::event::{CapturedValue, EventKind, ExitStatus, TraceEvent};

pub const DEFAULT_VALUE_CAP: usize = 4096;

/// Environment variable naming the sink file.
pub const SINK_ENV: &str = "RTRACE_SINK";
/// Environment variable overriding the per-value byte cap.
pub const VALUE_CAP_ENV: &str = "RTRACE_VALUE_CAP";

static NEXT_THREAD: AtomicU64 = AtomicU64::new(1);

struct ThreadSlot {
    id: String,
    next_call: Cell<u64>,
}

thread_local! {
    static SLOT: ThreadSlot = ThreadSlot {
        id: format!("{}:{}", std::process::id(), NEXT_THREAD.fetch_add(1, Ordering::Relaxed)),
        next_call: Cell::new(0),
    };
}

fn epoch() -> Instant {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    *EPOCH.get_or_init(Instant::now)
}

fn now_ns() -> u64 {
    epoch().elapsed().as_nanos() as u64
}

/// Append-only line-delimited JSON event sink.
pub struct Tracer {
    sink: Option<Mutex<File>>,
    value_cap: usize,
    warned: AtomicBool,
}

impl Tracer {
    /// A tracer that records nothing.
    pub fn disabled() -> Self {
        Tracer {
            sink: None,
            value_cap: DEFAULT_VALUE_CAP,
            warned: AtomicBool::new(false),
        }
    }

    pub fn open(path: impl AsRef<Path>, value_cap: usize) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Tracer {
            sink: Some(Mutex::new(file)),
            value_cap,
            warned: AtomicBool::new(false),
        })
    }

    /// Build a tracer from the environment. An unset sink variable yields a
    /// disabled tracer; an unopenable sink warns once and disables.
    pub fn from_env(sink_var: &str) -> Self {
        let cap = std::env::var(VALUE_CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_VALUE_CAP);
        match std::env::var_os(sink_var) {
            None => Tracer::disabled(),
            Some(path) => Tracer::open(&path, cap).unwrap_or_else(|err| {
                eprintln!("rtrace: cannot open sink {}: {err}", Path::new(&path).display());
                Tracer::disabled()
            }),
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.sink.is_some()
    }

    pub fn value_cap(&self) -> usize {
        self.value_cap
    }

    /// Record entry into `function`. `args` runs only when tracing is
    /// enabled and receives the value cap.
    pub fn enter<F>(&self, function: &'static str, args: F) -> CallGuard<'_>
    where
        F: FnOnce(usize) -> Vec<CapturedValue>,
    {
        if !self.is_enabled() {
            return CallGuard {
                tracer: self,
                open: None,
            };
        }
        let timestamp = now_ns();
        let values = args(self.value_cap);
        let (thread_id, call_id) = SLOT
            .try_with(|slot| {
                let n = slot.next_call.get();
                slot.next_call.set(n + 1);
                (slot.id.clone(), format!("{}#{n}", slot.id))
            })
            .unwrap_or_else(|_| {
                let id = format!("{}:exiting", std::process::id());
                let n = NEXT_THREAD.fetch_add(1, Ordering::Relaxed);
                (id.clone(), format!("{id}#{n}"))
            });
        let open = OpenCall {
            call_id,
            thread_id,
            function,
        };
        self.emit(open.event(EventKind::Enter, timestamp, values, None));
        CallGuard {
            tracer: self,
            open: Some(open),
        }
    }

    /// Append one event as a single line. Failures are reported once on
    /// stderr and otherwise ignored.
    pub fn emit(&self, mut event: TraceEvent) {
        let Some(sink) = &self.sink else { return };
        let file = match sink.lock() {
            Ok(f) => f,
            Err(poisoned) => poisoned.into_inner(),
        };
        let result = with_file_lock(&file, |f| {
            let mut f: &File = f;
            event.seq = f.seek(SeekFrom::End(0))?;
            let mut line = serde_json::to_vec(&event)?;
            line.push(b'\n');
            f.write_all(&line)
        });
        if let Err(err) = result {
            if !self.warned.swap(true, Ordering::Relaxed) {
                eprintln!("rtrace: trace sink write failed: {err}");
            }
        }
    }
}

#[cfg(unix)]
fn with_file_lock<T>(file: &File, f: impl FnOnce(&File) -> io::Result<T>) -> io::Result<T> {
    use std::os::unix::io::AsRawFd;
    let fd = file.as_raw_fd();
    // SAFETY: fd is owned by `file`, which outlives both calls.
    unsafe { libc::flock(fd, libc::LOCK_EX) };
    let out = f(file);
    unsafe { libc::flock(fd, libc::LOCK_UN) };
    out
}

#[cfg(not(unix))]
fn with_file_lock<T>(file: &File, f: impl FnOnce(&File) -> io::Result<T>) -> io::Result<T> {
    f(file)
}

struct OpenCall {
    call_id: String,
    thread_id: String,
    function: &'static str,
}

impl OpenCall {
    fn event(
        &self,
        kind: EventKind,
        timestamp: u64,
        values: Vec<CapturedValue>,
        exit_status: Option<ExitStatus>,
    ) -> TraceEvent {
        TraceEvent {
            kind,
            call_id: self.call_id.clone(),
            thread_id: self.thread_id.clone(),
            seq: 0,
            function: self.function.to_owned(),
            timestamp,
            values,
            exit_status,
        }
    }
}

/// Pending exit of one traced call.
///
/// Dropping the guard without calling [`CallGuard::exit`] records an exit
/// with status `unwound`, which is what happens while a panic unwinds
/// through the traced function.
#[must_use]
pub struct CallGuard<'t> {
    tracer: &'t Tracer,
    open: Option<OpenCall>,
}

impl CallGuard<'_> {
    pub fn exit<F>(mut self, ret: F)
    where
        F: FnOnce(usize) -> CapturedValue,
    {
        if let Some(open) = self.open.take() {
            let timestamp = now_ns();
            let value = ret(self.tracer.value_cap);
            self.tracer
                .emit(open.event(EventKind::Exit, timestamp, vec![value], Some(ExitStatus::Normal)));
        }
    }
}

impl Drop for CallGuard<'_> {
    fn drop(&mut self) {
        if let Some(open) = self.open.take() {
            self.tracer
                .emit(open.event(EventKind::Exit, now_ns(), Vec::new(), Some(ExitStatus::Unwound)));
        }
    }
}

/// Process-wide tracer, configured from `sink_var` on first use.
pub fn global(sink_var: &str) -> &'static Tracer {
    static GLOBAL: OnceLock<Tracer> = OnceLock::new();
    GLOBAL.get_or_init(|| Tracer::from_env(sink_var))
}
