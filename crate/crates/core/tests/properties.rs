//! Property tests over the wire formats, context propagation, assembly and
//! skew adjustment.

use std::collections::BTreeMap;

use proptest::prelude::*;

use spanforge_core::collector::{adjust_clock_skew, assemble, Anomaly, RawTrace};
use spanforge_core::context::{extract, inject, Extraction, TraceContext};
use spanforge_core::wire::{
    decode_line, decode_log, decode_metric, decode_span, encode_log, encode_metric, encode_span,
    LogLevel, LogRecord, MetricKind, MetricSample, Span, SpanId, SpanStatus, TagSet, TraceId,
};

fn field_string() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-zA-Z0-9_.%, =\\n\\t-]{0,12}").unwrap()
}

fn identifier() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-z][a-z0-9_]{0,10}").unwrap()
}

fn tag_map() -> impl Strategy<Value = BTreeMap<String, String>> {
    proptest::collection::btree_map(
        proptest::string::string_regex("[a-z][a-z0-9_.]{0,6}").unwrap(),
        field_string(),
        0..4,
    )
}

prop_compose! {
    fn arb_span()(
        trace in 1u128..,
        span in 1u64..,
        parent in proptest::option::of(1u64..),
        service in identifier(),
        operation in identifier(),
        start in -2_000_000_000_000i64..2_000_000_000_000,
        duration in 0u64..10_000_000_000,
        error in any::<bool>(),
        tags in tag_map(),
    ) -> Span {
        let span_id = SpanId::new(span).unwrap();
        let parent_span_id = parent
            .map(|p| SpanId::new(p).unwrap())
            .filter(|p| *p != span_id);
        Span {
            trace_id: TraceId::new(trace).unwrap(),
            span_id,
            parent_span_id,
            service,
            operation,
            start_us: start,
            duration_us: duration,
            status: if error { SpanStatus::Error } else { SpanStatus::Ok },
            tags,
        }
    }
}

prop_compose! {
    fn arb_metric()(
        name in proptest::string::string_regex("[a-z][a-z0-9_.]{0,12}").unwrap(),
        kind in prop_oneof![
            Just(MetricKind::Counter),
            Just(MetricKind::Gauge),
            Just(MetricKind::HistogramObservation),
        ],
        // Finite values only: NaN breaks equality, infinities are excluded
        // from valid samples.
        value in proptest::num::f64::NORMAL | proptest::num::f64::ZERO,
        ts in -2_000_000_000_000i64..2_000_000_000_000,
        tags in proptest::collection::vec((identifier(), field_string()), 0..4),
    ) -> MetricSample {
        MetricSample {
            name,
            kind,
            value,
            timestamp_ms: ts,
            tags: TagSet::from_pairs(tags),
        }
    }
}

prop_compose! {
    fn arb_log()(
        trace in 1u128..,
        span in 1u64..,
        ts in -2_000_000_000_000i64..2_000_000_000_000,
        level in prop_oneof![
            Just(LogLevel::Debug),
            Just(LogLevel::Info),
            Just(LogLevel::Warn),
            Just(LogLevel::Error),
        ],
        message in field_string(),
    ) -> LogRecord {
        LogRecord {
            trace_id: TraceId::new(trace).unwrap(),
            span_id: SpanId::new(span).unwrap(),
            timestamp_us: ts,
            level,
            message,
        }
    }
}

proptest! {
    #[test]
    fn span_round_trip(span in arb_span()) {
        let line = encode_span(&span);
        prop_assert_eq!(decode_span(&line).unwrap(), span);
    }

    #[test]
    fn metric_round_trip(sample in arb_metric()) {
        let line = encode_metric(&sample);
        prop_assert_eq!(decode_metric(&line).unwrap(), sample);
    }

    #[test]
    fn log_round_trip(rec in arb_log()) {
        let line = encode_log(&rec);
        prop_assert_eq!(decode_log(&line).unwrap(), rec);
    }

    /// Mutated lines must decode to Malformed or a valid value; never panic.
    #[test]
    fn mutated_lines_never_panic(
        span in arb_span(),
        cut in 0usize..120,
        insert in 0usize..120,
        junk in "[ -~]{0,6}",
    ) {
        let mut line = encode_span(&span);
        if cut < line.len() && line.is_char_boundary(cut) {
            line.truncate(cut);
        }
        let at = insert.min(line.len());
        if line.is_char_boundary(at) {
            line.insert_str(at, &junk);
        }
        let _ = decode_line(&line);
    }

    #[test]
    fn arbitrary_garbage_never_panics(line in "[ -~]{0,200}") {
        let _ = decode_line(&line);
    }

    #[test]
    fn context_injection_round_trip(trace in 1u128.., span in 1u64.., sampled in any::<bool>()) {
        let ctx = TraceContext {
            trace_id: TraceId::new(trace).unwrap(),
            parent_span_id: SpanId::new(span).unwrap(),
            sampled,
        };
        let mut carrier = BTreeMap::new();
        inject(&ctx, &mut carrier);
        prop_assert_eq!(extract(&carrier), Extraction::Context(ctx));
    }

    /// Assembly yields identical trees under any permutation of the span set.
    #[test]
    fn assembly_permutation_invariant(
        spans in well_nested_spans(),
        seed in any::<u64>(),
    ) {
        let trace_id = spans[0].trace_id;
        let base = assemble(RawTrace {
            trace_id,
            spans: spans.clone(),
            logs: vec![],
            flags: Default::default(),
        }).unwrap();
        let mut shuffled = spans;
        // Cheap deterministic shuffle.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state as usize) % (i + 1));
        }
        let reassembled = assemble(RawTrace {
            trace_id,
            spans: shuffled,
            logs: vec![],
            flags: Default::default(),
        }).unwrap();
        prop_assert_eq!(base, reassembled);
    }

    /// After adjustment every boundary-crossing edge with nonnegative slack
    /// is properly nested, and trees that were already nested are untouched.
    #[test]
    fn skew_adjustment_restores_nesting(
        spans in well_nested_spans(),
        offset in -400_000i64..400_000,
        skew_service in 0usize..4,
    ) {
        let trace_id = spans[0].trace_id;
        let clean = assemble(RawTrace {
            trace_id,
            spans: spans.clone(),
            logs: vec![],
            flags: Default::default(),
        }).unwrap();
        let mut clean_adjusted = clean.clone();
        adjust_clock_skew(&mut clean_adjusted);
        prop_assert_eq!(&clean, &clean_adjusted, "identity on nested trees");

        // Skew one service's recorded clocks.
        let service = format!("svc{skew_service}");
        let skewed: Vec<Span> = spans
            .iter()
            .cloned()
            .map(|mut s| {
                if s.service == service {
                    s.start_us += offset;
                }
                s
            })
            .collect();
        let mut tree = assemble(RawTrace {
            trace_id,
            spans: skewed,
            logs: vec![],
            flags: Default::default(),
        }).unwrap();
        adjust_clock_skew(&mut tree);
        for (i, node) in tree.nodes.iter().enumerate() {
            for &c in &node.children {
                let child = &tree.nodes[c];
                let slack = node.span.duration_us as i64 - child.span.duration_us as i64;
                if slack >= 0 {
                    prop_assert!(
                        child.adjusted_start_us >= node.adjusted_start_us
                            && child.adjusted_end_us() <= node.adjusted_end_us(),
                        "edge {i}->{c} not nested after adjustment: {tree:?}"
                    );
                }
            }
        }
        if !tree.anomalies.contains(&Anomaly::ClockAdjusted) {
            // Nothing crossed a boundary un-nested; recorded times must
            // stand exactly.
            for node in &tree.nodes {
                prop_assert_eq!(node.adjusted_start_us, node.span.start_us);
            }
        }
    }
}

/// Well-nested random trees in the simulator's shape: every child interval
/// sits inside its parent, services assigned round-robin.
fn well_nested_spans() -> impl Strategy<Value = Vec<Span>> {
    (1usize..24, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = spanforge_core::rng::SplitMix64::new(seed);
        let mut spans: Vec<Span> = Vec::with_capacity(n);
        build_nested(&mut rng, &mut spans, None, 0, n, &mut 1);
        spans
    })
}

fn build_nested(
    rng: &mut spanforge_core::rng::SplitMix64,
    spans: &mut Vec<Span>,
    parent: Option<u64>,
    start: i64,
    budget: usize,
    next_id: &mut u64,
) -> u64 {
    let id = *next_id;
    *next_id += 1;
    let own = 20 + rng.next_u64() % 200;
    let lead = own / 2;
    let mut cursor = start + lead as i64;
    let mut child_total = 0u64;
    let n_children = if budget <= 1 {
        0
    } else {
        (rng.next_u64() % 3) as usize
    };
    for _ in 0..n_children {
        let sub = (budget - 1) / 2;
        let d = build_nested(rng, spans, Some(id), cursor, sub, next_id);
        cursor += d as i64;
        child_total += d;
    }
    let total = own + child_total;
    spans.push(Span {
        trace_id: TraceId::new(7).unwrap(),
        span_id: SpanId::new(id).unwrap(),
        parent_span_id: parent.map(|p| SpanId::new(p).unwrap()),
        service: format!("svc{}", id % 4),
        operation: format!("op{id}"),
        start_us: start,
        duration_us: total,
        status: SpanStatus::Ok,
        tags: BTreeMap::new(),
    });
    total
}
