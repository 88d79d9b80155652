//! Runtime support for functions instrumented by `rtrace`.
//!
//! Instrumented code calls [`enter`] on function entry, runs the original
//! body through [`call_once`], and reports the return value through
//! [`CallGuard::exit`]. Events go to the file named by an environment
//! variable ([`SINK_ENV`] unless the instrumentor chose another), one JSON
//! object per line. With the variable unset nothing is captured or written.

mod capture;
mod event;
mod sink;

pub use capture::capture_serializable;
pub use event::{CaptureMode, CapturedValue, EventKind, ExitStatus, TraceEvent};
pub use sink::{global, CallGuard, Tracer, DEFAULT_VALUE_CAP, SINK_ENV, VALUE_CAP_ENV};

#[doc(hidden)]
pub mod __private {
    pub use crate::capture::{CaptureAsJson, CaptureAsPlaceholder, Probe};
    pub use std::vec;
}

/// Record entry into `function` on the process-wide tracer.
#[inline]
pub fn enter<F>(sink_var: &'static str, function: &'static str, args: F) -> CallGuard<'static>
where
    F: FnOnce(usize) -> Vec<CapturedValue>,
{
    global(sink_var).enter(function, args)
}

/// Run an instrumented body. Taking the body as `FnOnce` lets it move out
/// of, or hand out borrows derived from, the parameters it captured.
#[inline(always)]
pub fn call_once<R, F: FnOnce() -> R>(body: F) -> R {
    body()
}
