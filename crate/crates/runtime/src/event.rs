use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Enter,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Normal,
    Unwound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureMode {
    Json,
    Placeholder,
}

/// A parameter or return value as recorded by instrumented code.
///
/// `json_value` is present exactly when `mode` is [`CaptureMode::Json`]. A
/// captured unit value is recorded as JSON `null` with type name `()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapturedValue {
    pub mode: CaptureMode,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "present_value")]
    pub json_value: Option<Value>,
    pub type_name: String,
    pub truncated: bool,
}

// A present `null` must stay `Some(Null)`; only a missing key is `None`.
fn present_value<'de, D: Deserializer<'de>>(de: D) -> Result<Option<Value>, D::Error> {
    Value::deserialize(de).map(Some)
}

impl CapturedValue {
    pub fn json(value: Value, type_name: impl Into<String>, truncated: bool) -> Self {
        CapturedValue {
            mode: CaptureMode::Json,
            json_value: Some(value),
            type_name: type_name.into(),
            truncated,
        }
    }

    pub fn placeholder(type_name: impl Into<String>) -> Self {
        CapturedValue {
            mode: CaptureMode::Placeholder,
            json_value: None,
            type_name: type_name.into(),
            truncated: false,
        }
    }

    pub fn is_unit(&self) -> bool {
        self.type_name == "()" && self.json_value == Some(Value::Null)
    }
}

/// One line of the sink file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub call_id: String,
    pub thread_id: String,
    /// Byte offset of this line in the sink, so it increases in file order
    /// even when several processes share one sink.
    pub seq: u64,
    pub function: String,
    /// Monotonic nanoseconds since the emitting process first traced.
    pub timestamp: u64,
    pub values: Vec<CapturedValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_status: Option<ExitStatus>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_json_value_survives_round_trip() {
        let unit = CapturedValue::json(Value::Null, "()", false);
        let text = serde_json::to_string(&unit).unwrap();
        assert!(text.contains("\"json_value\":null"));
        let back: CapturedValue = serde_json::from_str(&text).unwrap();
        assert_eq!(back, unit);
        assert!(back.is_unit());
    }

    #[test]
    fn placeholder_omits_json_value() {
        let p = CapturedValue::placeholder("std::fs::File");
        let text = serde_json::to_string(&p).unwrap();
        assert!(!text.contains("json_value"));
        let back: CapturedValue = serde_json::from_str(&text).unwrap();
        assert_eq!(back.json_value, None);
    }
}
