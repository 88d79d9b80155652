use proptest::prelude::*;
use rtrace_rt::{capture_serializable, CaptureMode, EventKind, Tracer};
use serde_json::Value;

proptest! {
    #[test]
    fn small_values_round_trip(v in proptest::collection::vec(any::<i64>(), 0..20), s in ".{0,40}") {
        let pair = (v.clone(), s.clone());
        let captured = capture_serializable(&pair, 1 << 16);
        prop_assert_eq!(captured.mode, CaptureMode::Json);
        prop_assert!(!captured.truncated);
        prop_assert_eq!(captured.json_value, Some(serde_json::to_value(&pair).unwrap()));
    }

    #[test]
    fn oversized_values_respect_the_cap(s in ".{0,300}", cap in 2usize..200) {
        let full = serde_json::to_string(&s).unwrap();
        let captured = capture_serializable(&s, cap);
        let json = captured.json_value.clone().unwrap();
        if full.len() <= cap {
            prop_assert!(!captured.truncated);
            prop_assert_eq!(json, Value::String(s));
        } else {
            prop_assert!(captured.truncated);
            let Value::String(prefix) = json else { panic!("truncated capture is a string") };
            prop_assert!(serde_json::to_string(&prefix).unwrap().len() <= cap);
            prop_assert!(full.starts_with(&prefix));
        }
    }
}

#[test]
fn seq_is_the_byte_offset_of_each_line() {
    let dir = tempfile::tempdir().unwrap();
    let sink = dir.path().join("events.jsonl");
    let tracer = Tracer::open(&sink, 64).unwrap();
    let outer = tracer.enter("t::outer", |cap| vec![capture_serializable("x", cap)]);
    tracer
        .enter("t::inner", |_| vec![])
        .exit(|cap| capture_serializable(&1u8, cap));
    drop(outer);

    let text = std::fs::read_to_string(&sink).unwrap();
    let mut offset = 0u64;
    let mut kinds = Vec::new();
    for line in text.split_inclusive('\n') {
        let event: rtrace_rt::TraceEvent = serde_json::from_str(line).unwrap();
        assert_eq!(event.seq, offset);
        offset += line.len() as u64;
        kinds.push((event.kind, event.function, event.exit_status));
    }
    use rtrace_rt::ExitStatus::*;
    assert_eq!(
        kinds,
        vec![
            (EventKind::Enter, "t::outer".into(), None),
            (EventKind::Enter, "t::inner".into(), None),
            (EventKind::Exit, "t::inner".into(), Some(Normal)),
            (EventKind::Exit, "t::outer".into(), Some(Unwound)),
        ]
    );
}
