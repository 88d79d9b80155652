//! Hybrid value capture.
//!
//! `capture!` resolves at compile time of the instrumented crate: when the
//! captured type implements `Serialize` the by-value method on [`Probe`] is
//! selected, otherwise method lookup autorefs and lands on the placeholder
//! impl for `&Probe`. Neither path requires anything of the target type, so
//! instrumented code compiles for every parameter type.

use std::io;

use serde::Serialize;
use serde_json::Value;

use crate::event::CapturedValue;

#[doc(hidden)]
pub struct Probe<'a, T: ?Sized>(pub &'a T);

#[doc(hidden)]
pub trait CaptureAsJson {
    fn __rtrace_capture(&self, cap: usize) -> CapturedValue;
}

#[doc(hidden)]
pub trait CaptureAsPlaceholder {
    fn __rtrace_capture(&self, cap: usize) -> CapturedValue;
}

impl<T: ?Sized + Serialize> CaptureAsJson for Probe<'_, T> {
    fn __rtrace_capture(&self, cap: usize) -> CapturedValue {
        capture_serializable(self.0, cap)
    }
}

impl<T: ?Sized> CaptureAsPlaceholder for &Probe<'_, T> {
    fn __rtrace_capture(&self, _cap: usize) -> CapturedValue {
        CapturedValue::placeholder(std::any::type_name::<T>())
    }
}

/// Capture a value by shared reference, as JSON when its type is
/// serializable and as a type-name placeholder otherwise.
///
/// The second argument is the byte cap on the serialized form.
#[macro_export]
macro_rules! capture {
    ($value:expr, $cap:expr) => {{
        #[allow(unused_imports)]
        use $crate::__private::{CaptureAsJson as _, CaptureAsPlaceholder as _};
        (&$crate::__private::Probe(&$value)).__rtrace_capture($cap)
    }};
}

struct CappedWriter {
    buf: Vec<u8>,
    cap: usize,
    overflowed: bool,
}

impl io::Write for CappedWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let room = self.cap - self.buf.len();
        if data.len() > room {
            self.buf.extend_from_slice(&data[..room]);
            self.overflowed = true;
            return Err(io::Error::new(io::ErrorKind::WriteZero, "value cap reached"));
        }
        self.buf.extend_from_slice(data);
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Serialize `value` with its JSON rendering bounded by `cap` bytes.
///
/// A value whose rendering exceeds the cap is recorded as a JSON string
/// holding a prefix of the rendering, with `truncated` set. The prefix is
/// chosen so the string's own JSON encoding also fits the cap.
pub fn capture_serializable<T: ?Sized + Serialize>(value: &T, cap: usize) -> CapturedValue {
    let type_name = std::any::type_name::<T>();
    let mut writer = CappedWriter {
        buf: Vec::new(),
        cap,
        overflowed: false,
    };
    match serde_json::to_writer(&mut writer, value) {
        Ok(()) => match serde_json::from_slice::<Value>(&writer.buf) {
            Ok(json) => CapturedValue::json(json, type_name, false),
            Err(err) => failed(type_name, &err.to_string()),
        },
        Err(_) if writer.overflowed => {
            CapturedValue::json(Value::String(fit_prefix(&writer.buf, cap)), type_name, true)
        }
        Err(err) => failed(type_name, &err.to_string()),
    }
}

fn failed(type_name: &str, note: &str) -> CapturedValue {
    CapturedValue::placeholder(format!("{type_name} (serialization failed: {note})"))
}

fn fit_prefix(bytes: &[u8], cap: usize) -> String {
    let mut end = bytes.len();
    let mut prefix = loop {
        match std::str::from_utf8(&bytes[..end]) {
            Ok(s) => break s.to_owned(),
            Err(e) => end = e.valid_up_to(),
        }
    };
    loop {
        let encoded = serde_json::to_string(&prefix).map(|s| s.len()).unwrap_or(usize::MAX);
        if encoded <= cap || prefix.is_empty() {
            return prefix;
        }
        let excess = (encoded - cap).max(1);
        let mut cut = prefix.len().saturating_sub(excess);
        while !prefix.is_char_boundary(cut) {
            cut -= 1;
        }
        prefix.truncate(cut);
    }
}
