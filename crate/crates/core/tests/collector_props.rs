use std::collections::BTreeMap;

use proptest::prelude::*;
use rtrace::collector::{build_forest, CallNode, NodeStatus};
use rtrace_rt::{CapturedValue, EventKind, ExitStatus, TraceEvent};
use serde_json::json;

#[derive(Debug, Clone)]
struct Tree {
    name: u8,
    unwound: bool,
    children: Vec<Tree>,
}

fn tree() -> impl Strategy<Value = Tree> {
    let leaf = (0u8..16, any::<bool>()).prop_map(|(name, unwound)| Tree {
        name,
        unwound,
        children: vec![],
    });
    leaf.prop_recursive(6, 64, 5, |inner| {
        (0u8..16, any::<bool>(), proptest::collection::vec(inner, 0..5)).prop_map(|(name, unwound, children)| Tree {
            name,
            unwound,
            children,
        })
    })
}

fn event(kind: EventKind, thread: &str, call: usize, name: u8, exit: Option<ExitStatus>) -> TraceEvent {
    TraceEvent {
        kind,
        call_id: format!("{thread}#{call}"),
        thread_id: thread.to_owned(),
        seq: 0,
        function: format!("m::f{name}"),
        timestamp: 0,
        values: match (kind, exit) {
            (EventKind::Enter, _) => vec![CapturedValue::json(json!(call), "usize", false)],
            (_, Some(ExitStatus::Normal)) => vec![CapturedValue::json(json!(name), "u8", false)],
            _ => vec![],
        },
        exit_status: exit,
    }
}

/// Events of one thread in program order, and the node the collector must
/// rebuild for each root.
fn emit(t: &Tree, thread: &str, next: &mut usize, out: &mut Vec<TraceEvent>) -> CallNode {
    let call = *next;
    *next += 1;
    out.push(event(EventKind::Enter, thread, call, t.name, None));
    let children = t.children.iter().map(|c| emit(c, thread, next, out)).collect();
    let status = if t.unwound {
        ExitStatus::Unwound
    } else {
        ExitStatus::Normal
    };
    out.push(event(EventKind::Exit, thread, call, t.name, Some(status)));
    CallNode {
        function: format!("m::f{}", t.name),
        call_id: format!("{thread}#{call}"),
        args: vec![CapturedValue::json(json!(call), "usize", false)],
        return_value: (!t.unwound).then(|| CapturedValue::json(json!(t.name), "u8", false)),
        exit_status: if t.unwound {
            NodeStatus::Unwound
        } else {
            NodeStatus::Normal
        },
        duration_ns: Some(0),
        children,
    }
}

/// Interleave per-thread streams, keeping each thread's order, and number
/// the result in file order.
fn interleave(mut streams: Vec<Vec<TraceEvent>>, picks: &[usize]) -> Vec<TraceEvent> {
    for s in &mut streams {
        s.reverse();
    }
    let mut merged = Vec::new();
    let mut i = 0;
    while streams.iter().any(|s| !s.is_empty()) {
        let live: Vec<usize> = (0..streams.len()).filter(|&k| !streams[k].is_empty()).collect();
        let k = live[picks.get(i).copied().unwrap_or(0) % live.len()];
        i += 1;
        let mut e = streams[k].pop().unwrap();
        e.seq = merged.len() as u64 * 100;
        merged.push(e);
    }
    merged
}

fn strip_durations(n: &mut CallNode) {
    n.duration_ns = n.duration_ns.map(|_| 0);
    n.children.iter_mut().for_each(strip_durations);
}

proptest! {
    #[test]
    fn interleaved_threads_rebuild_their_forests(
        forests in proptest::collection::vec(proptest::collection::vec(tree(), 1..4), 1..4),
        picks in proptest::collection::vec(any::<usize>(), 0..400),
        shuffle_seed in any::<u64>(),
    ) {
        let mut expected = BTreeMap::new();
        let mut streams = Vec::new();
        for (t, roots) in forests.iter().enumerate() {
            let thread = format!("7:{t}");
            let mut next = 0;
            let mut events = Vec::new();
            let nodes: Vec<CallNode> = roots.iter().map(|r| emit(r, &thread, &mut next, &mut events)).collect();
            expected.insert(thread, nodes);
            streams.push(events);
        }
        let mut events = interleave(streams, &picks);
        // Input order is irrelevant; seq decides.
        let len = events.len();
        for i in 0..len {
            events.swap(i, (shuffle_seed as usize).wrapping_mul(i + 31) % len);
        }
        let (mut forest, diagnostics) = build_forest(&events);
        forest.values_mut().flatten().for_each(strip_durations);
        prop_assert!(diagnostics.is_empty());
        prop_assert_eq!(forest, expected);
    }

    #[test]
    fn a_cut_stream_leaves_open_calls_missing_exit(roots in proptest::collection::vec(tree(), 1..3), cut in any::<prop::sample::Index>()) {
        let mut next = 0;
        let mut events = Vec::new();
        for r in &roots {
            emit(r, "1:0", &mut next, &mut events);
        }
        for (i, e) in events.iter_mut().enumerate() {
            e.seq = i as u64;
        }
        let k = cut.index(events.len() + 1);
        let kept = &events[..k];
        let mut open = Vec::new();
        for e in kept {
            match e.kind {
                EventKind::Enter => open.push(e.call_id.clone()),
                EventKind::Exit => { open.pop(); }
            }
        }
        let (forest, diagnostics) = build_forest(kept);
        prop_assert!(diagnostics.is_empty());
        let nodes: Vec<&CallNode> = forest.values().flatten().flat_map(|n| n.walk()).collect();
        prop_assert_eq!(nodes.len(), kept.iter().filter(|e| e.kind == EventKind::Enter).count());
        let mut missing: Vec<String> = nodes
            .iter()
            .filter(|n| n.exit_status == NodeStatus::MissingExit)
            .map(|n| n.call_id.clone())
            .collect();
        missing.sort();
        open.sort();
        prop_assert_eq!(missing, open);
    }
}
