//! Turning a raw event log into a trace report of per-thread call trees.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use rtrace_rt::{CapturedValue, EventKind, ExitStatus, TraceEvent};
use serde::{Deserialize, Serialize};

use crate::fsutil;
use crate::instrument::{Exclusion, Unresolved};
use crate::workspace::RunOutcome;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Normal,
    Unwound,
    MissingExit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallNode {
    pub function: String,
    pub call_id: String,
    pub args: Vec<CapturedValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_value: Option<CapturedValue>,
    pub exit_status: NodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ns: Option<u64>,
    pub children: Vec<CallNode>,
}

impl CallNode {
    /// Depth-first iteration over this node and its descendants.
    pub fn walk(&self) -> Vec<&CallNode> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            let node = out[i];
            out.extend(node.children.iter());
            i += 1;
        }
        out
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(CallNode::count).sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    MalformedLine,
    MismatchedExit,
    OrphanExit,
    SourceParse,
    PlanNote,
    CleanupFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub target_digest: Option<String>,
    pub plan_digest: Option<String>,
    pub wall_clock_start: DateTime<Utc>,
    pub tool_version: String,
    #[serde(default)]
    pub command: Vec<String>,
    /// Qualified paths of the instrumented functions.
    #[serde(default)]
    pub instrumented: Vec<String>,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
    #[serde(default)]
    pub unresolved: Vec<Unresolved>,
}

impl Default for ReportMeta {
    fn default() -> Self {
        ReportMeta {
            target_digest: None,
            plan_digest: None,
            wall_clock_start: Utc::now(),
            tool_version: TOOL_VERSION.to_owned(),
            command: Vec::new(),
            instrumented: Vec::new(),
            exclusions: Vec::new(),
            unresolved: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceReport {
    pub threads: BTreeMap<String, Vec<CallNode>>,
    pub run: Option<RunOutcome>,
    pub meta: ReportMeta,
    pub event_count: usize,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl TraceReport {
    pub fn nodes(&self) -> impl Iterator<Item = &CallNode> {
        self.threads.values().flatten().flat_map(CallNode::walk)
    }

    /// All nodes for `function`, matched by qualified path or its last
    /// segments.
    pub fn find(&self, function: &str) -> Vec<&CallNode> {
        self.nodes()
            .filter(|n| n.function == function || n.function.ends_with(&format!("::{function}")))
            .collect()
    }
}

/// Parse the sink file in order. Lines that are not valid events, such as
/// a last line cut short by a crash, become diagnostics.
pub fn load_events(sink_path: &Path) -> io::Result<(Vec<TraceEvent>, Vec<Diagnostic>)> {
    let bytes = fs::read(sink_path)?;
    let mut events = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice::<TraceEvent>(line) {
            Ok(e) => events.push(e),
            Err(e) => diagnostics.push(Diagnostic::new(
                DiagnosticKind::MalformedLine,
                format!("line {}: {e}", i + 1),
            )),
        }
    }
    Ok((events, diagnostics))
}

struct Open {
    node: CallNode,
    enter_ts: u64,
}

/// Rebuild per-thread call forests by matching enters and exits on a stack
/// per thread, in `seq` order.
///
/// An exit that is not for the innermost open call closes every call
/// opened after its own as `missing_exit`; an exit matching no open call is
/// dropped. Both are reported. Calls still open at the end are closed as
/// `missing_exit`.
pub fn build_forest(events: &[TraceEvent]) -> (BTreeMap<String, Vec<CallNode>>, Vec<Diagnostic>) {
    let mut ordered: Vec<&TraceEvent> = events.iter().collect();
    ordered.sort_by_key(|e| e.seq);
    let mut stacks: BTreeMap<&str, Vec<Open>> = BTreeMap::new();
    let mut roots: BTreeMap<String, Vec<CallNode>> = BTreeMap::new();
    let mut diagnostics = Vec::new();

    for e in ordered {
        let stack = stacks.entry(e.thread_id.as_str()).or_default();
        match e.kind {
            EventKind::Enter => stack.push(Open {
                node: CallNode {
                    function: e.function.clone(),
                    call_id: e.call_id.clone(),
                    args: e.values.clone(),
                    return_value: None,
                    exit_status: NodeStatus::MissingExit,
                    duration_ns: None,
                    children: Vec::new(),
                },
                enter_ts: e.timestamp,
            }),
            EventKind::Exit => {
                let Some(pos) = stack.iter().rposition(|o| o.node.call_id == e.call_id) else {
                    diagnostics.push(Diagnostic::new(
                        DiagnosticKind::OrphanExit,
                        format!("exit seq {} for {} ({}) has no open call", e.seq, e.function, e.call_id),
                    ));
                    continue;
                };
                if pos + 1 != stack.len() {
                    let skipped: Vec<&str> = stack[pos + 1..].iter().map(|o| o.node.call_id.as_str()).collect();
                    diagnostics.push(Diagnostic::new(
                        DiagnosticKind::MismatchedExit,
                        format!(
                            "exit seq {} for {} closes {} open inner call(s): {}",
                            e.seq,
                            e.call_id,
                            skipped.len(),
                            skipped.join(", ")
                        ),
                    ));
                    while stack.len() > pos + 1 {
                        close_top(stack, &mut roots, &e.thread_id);
                    }
                }
                let top = stack.last_mut().expect("matched call is on the stack");
                top.node.exit_status = match e.exit_status {
                    Some(ExitStatus::Unwound) => NodeStatus::Unwound,
                    _ => NodeStatus::Normal,
                };
                top.node.return_value = match top.node.exit_status {
                    NodeStatus::Normal => e.values.first().cloned(),
                    _ => None,
                };
                top.node.duration_ns = Some(e.timestamp.saturating_sub(top.enter_ts));
                close_top(stack, &mut roots, &e.thread_id);
            }
        }
    }
    for (thread, mut stack) in stacks {
        while !stack.is_empty() {
            close_top(&mut stack, &mut roots, thread);
        }
    }
    (roots, diagnostics)
}

fn close_top(stack: &mut Vec<Open>, roots: &mut BTreeMap<String, Vec<CallNode>>, thread: &str) {
    let open = stack.pop().expect("non-empty stack");
    match stack.last_mut() {
        Some(parent) => parent.node.children.push(open.node),
        None => roots.entry(thread.to_owned()).or_default().push(open.node),
    }
}

/// Load the sink and assemble a report around it.
pub fn collect(sink_path: &Path, meta: ReportMeta, run: Option<RunOutcome>) -> io::Result<TraceReport> {
    let (events, mut diagnostics) = if sink_path.exists() {
        load_events(sink_path)?
    } else {
        (Vec::new(), Vec::new())
    };
    let (threads, forest_diags) = build_forest(&events);
    diagnostics.extend(forest_diags);
    Ok(TraceReport {
        threads,
        run,
        meta,
        event_count: events.len(),
        diagnostics,
    })
}

/// Write the report as one JSON document, atomically.
pub fn render_report(report: &TraceReport, out_path: &Path) -> io::Result<()> {
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let json = serde_json::to_vec_pretty(report).map_err(io::Error::other)?;
    fsutil::atomic_write(out_path, &json)
}

pub fn load_report(path: &Path) -> io::Result<TraceReport> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, thread: &str, id: &str, seq: u64, ts: u64) -> TraceEvent {
        TraceEvent {
            kind,
            call_id: id.to_owned(),
            thread_id: thread.to_owned(),
            seq,
            function: format!("f{id}"),
            timestamp: ts,
            values: vec![CapturedValue::json(serde_json::json!(seq), "u64", false)],
            exit_status: (kind == EventKind::Exit).then_some(ExitStatus::Normal),
        }
    }

    #[test]
    fn nested_calls() {
        let events = vec![
            ev(EventKind::Enter, "t", "a", 1, 10),
            ev(EventKind::Enter, "t", "b", 2, 20),
            ev(EventKind::Exit, "t", "b", 3, 25),
            ev(EventKind::Exit, "t", "a", 4, 40),
        ];
        let (forest, diags) = build_forest(&events);
        assert!(diags.is_empty());
        let a = &forest["t"][0];
        assert_eq!(a.call_id, "a");
        assert_eq!(a.duration_ns, Some(30));
        assert_eq!(a.children.len(), 1);
        assert_eq!(a.children[0].call_id, "b");
        assert_eq!(a.children[0].duration_ns, Some(5));
        assert_eq!(a.return_value.as_ref().unwrap().json_value, Some(serde_json::json!(4)));
    }

    #[test]
    fn missing_exit() {
        let (forest, _) = build_forest(&[ev(EventKind::Enter, "t", "a", 1, 1)]);
        let a = &forest["t"][0];
        assert_eq!(a.exit_status, NodeStatus::MissingExit);
        assert!(a.return_value.is_none());
        assert!(a.duration_ns.is_none());
    }

    #[test]
    fn mismatched_exit_pops_until_match() {
        let events = vec![
            ev(EventKind::Enter, "t", "a", 1, 1),
            ev(EventKind::Enter, "t", "b", 2, 2),
            ev(EventKind::Exit, "t", "a", 3, 3),
            ev(EventKind::Exit, "t", "z", 4, 4),
        ];
        let (forest, diags) = build_forest(&events);
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].kind, DiagnosticKind::MismatchedExit);
        assert_eq!(diags[1].kind, DiagnosticKind::OrphanExit);
        let a = &forest["t"][0];
        assert_eq!(a.exit_status, NodeStatus::Normal);
        assert_eq!(a.children[0].exit_status, NodeStatus::MissingExit);
    }

    #[test]
    fn truncated_last_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sink");
        let mut text = String::new();
        for e in [
            ev(EventKind::Enter, "t", "a", 1, 1),
            ev(EventKind::Exit, "t", "a", 2, 2),
        ] {
            text.push_str(&serde_json::to_string(&e).unwrap());
            text.push('\n');
        }
        let full = text.len();
        text.push_str(&serde_json::to_string(&ev(EventKind::Enter, "t", "b", 3, 3)).unwrap());
        fs::write(&path, &text.as_bytes()[..full + 17]).unwrap();
        let (events, diags) = load_events(&path).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::MalformedLine);
    }

    #[test]
    fn empty_sink_and_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sink = dir.path().join("sink");
        fs::write(&sink, "").unwrap();
        let report = collect(&sink, ReportMeta::default(), None).unwrap();
        assert_eq!(report.event_count, 0);
        let out = dir.path().join("out/report.json");
        render_report(&report, &out).unwrap();
        assert_eq!(load_report(&out).unwrap(), report);
    }
}
