//! End-to-end runs of the simulator through the collector pipeline, checked
//! against the simulator's ground truth.

use std::collections::{BTreeMap, HashMap};

use spanforge_core::collector::{Anomaly, TraceFilter, TraceTree};
use spanforge_core::pipeline::process_lines;
use spanforge_core::sampling::SamplingPolicy;
use spanforge_core::sim::{
    inject_skew, run, tiny_topology, CallSpec, LatencyDist, ServiceSpec, TopologyConfig,
    TrueRequest, WorkloadSpec,
};
use spanforge_core::wire::SpanId;

/// The five-service diamond used across the integration tests.
fn five_service_dag(requests: u64, seed: u64, error_probability: f64) -> TopologyConfig {
    let svc = |name: &str, node: &str| ServiceSpec {
        name: name.into(),
        version: "1.0.0".into(),
        node_label: node.into(),
        clock_offset_us: 0,
    };
    let call = |caller: &str, callee: &str, op: &str, p: f64| CallSpec {
        caller: caller.into(),
        callee: callee.into(),
        operation: op.into(),
        latency: LatencyDist::Triangular {
            min: 300,
            mode: 900,
            max: 3000,
        },
        error_probability: p,
    };
    TopologyConfig {
        services: vec![
            svc("frontend", "node-a"),
            svc("catalog", "node-a"),
            svc("payments", "node-b"),
            svc("inventory", "node-b"),
            svc("shipping", "node-c"),
        ],
        calls: vec![
            call("frontend", "catalog", "list_items", 0.0),
            call("catalog", "inventory", "lookup", 0.0),
            call("frontend", "payments", "charge", 0.0),
            call("payments", "inventory", "reserve", error_probability),
            call("frontend", "shipping", "quote", 0.0),
            call("shipping", "inventory", "eta", 0.0),
        ],
        workload: WorkloadSpec {
            requests,
            arrival_rate_per_s: 200.0,
            ingress: "frontend".into(),
            ingress_operation: "place_order".into(),
            root_latency: LatencyDist::Triangular {
                min: 1000,
                mode: 2000,
                max: 5000,
            },
            seed,
            user_ids: 100,
        },
    }
}

/// Structural equality of a stored tree against the true request: same span
/// set, same parent edges, and (in the zero-skew case) identical times.
fn assert_isomorphic(tree: &TraceTree, truth: &TrueRequest, check_times: bool) {
    assert_eq!(tree.trace_id, truth.trace_id);
    assert_eq!(tree.span_count(), truth.spans.len(), "span sets differ");
    let truth_by_id: HashMap<SpanId, &spanforge_core::sim::TrueSpan> =
        truth.spans.iter().map(|s| (s.span_id, s)).collect();
    for node in &tree.nodes {
        if node.synthetic {
            panic!("synthetic root in zero-loss run: {tree:?}");
        }
        let t = truth_by_id
            .get(&node.span.span_id)
            .unwrap_or_else(|| panic!("unknown span {}", node.span.span_id));
        assert_eq!(node.span.service, t.service);
        assert_eq!(node.span.operation, t.operation);
        assert_eq!(node.span.parent_span_id, t.parent, "parent edge differs");
        assert_eq!(node.span.duration_us, t.duration_us);
        if check_times {
            assert_eq!(node.adjusted_start_us, t.start_us);
            assert_eq!(node.span.start_us, t.start_us);
        }
    }
}

#[test]
fn zero_skew_trees_isomorphic_to_truth() {
    let corpus = run(&five_service_dag(100, 41, 0.0), &SamplingPolicy::keep_all()).unwrap();
    let out = process_lines(
        corpus.lines.iter().map(String::as_str),
        &SamplingPolicy::keep_all(),
    );
    assert_eq!(out.traces.len(), 100);
    for truth in &corpus.truth.requests {
        let tree = out
            .traces
            .get(truth.trace_id)
            .unwrap_or_else(|| panic!("trace {} missing", truth.trace_id));
        assert_isomorphic(tree, truth, true);
        assert!(tree.anomalies.is_empty(), "{:?}", tree.anomalies);
    }
}

#[test]
fn skewed_service_violates_nesting_then_adjustment_restores_it() {
    let config = inject_skew(&five_service_dag(50, 43, 0.0), "payments", 250_000).unwrap();
    let corpus = run(&config, &SamplingPolicy::keep_all()).unwrap();

    // Before adjustment: raw recorded times must violate containment
    // somewhere (the +250ms service starts after its parent ends).
    let mut raw_violations = 0u64;
    let out = process_lines(
        corpus.lines.iter().map(String::as_str),
        &SamplingPolicy::keep_all(),
    );
    let mut checked_edges = 0u64;
    let mut nested_edges = 0u64;
    for tree in out.traces.iter() {
        for node in &tree.nodes {
            for &c in &node.children {
                let child = &tree.nodes[c];
                // Raw times.
                if child.span.start_us < node.span.start_us
                    || child.span.end_us() > node.span.end_us()
                {
                    raw_violations += 1;
                }
                // Adjusted times over boundary edges.
                if child.span.service != node.span.service {
                    checked_edges += 1;
                    if child.adjusted_start_us >= node.adjusted_start_us
                        && child.adjusted_end_us() <= node.adjusted_end_us()
                    {
                        nested_edges += 1;
                    }
                }
            }
        }
        assert!(tree.anomalies.contains(&Anomaly::ClockAdjusted));
    }
    assert!(raw_violations > 0, "skew must break raw containment");
    assert_eq!(nested_edges, checked_edges, "every adjusted edge nests");
    // Structure still matches the truth even though times moved.
    for truth in &corpus.truth.requests {
        assert_isomorphic(out.traces.get(truth.trace_id).unwrap(), truth, false);
    }
}

#[test]
fn error_filter_matches_linear_scan_oracle() {
    let corpus = run(
        &five_service_dag(400, 47, 0.02),
        &SamplingPolicy::keep_all(),
    )
    .unwrap();
    let out = process_lines(
        corpus.lines.iter().map(String::as_str),
        &SamplingPolicy::keep_all(),
    );
    let expected = corpus.truth.error_trace_ids();
    assert!(!expected.is_empty(), "seed should inject some errors");
    let got: std::collections::HashSet<_> = out
        .traces
        .query(&TraceFilter {
            error: Some(true),
            ..Default::default()
        })
        .into_iter()
        .map(|s| s.trace_id)
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn user_tag_search_finds_exactly_tagged_requests() {
    // 300 requests, user ids cycling mod 100: ids 0..99 appear 3 times each.
    let mut config = five_service_dag(300, 53, 0.0);
    config.workload.user_ids = 100;
    let corpus = run(&config, &SamplingPolicy::keep_all()).unwrap();
    let out = process_lines(
        corpus.lines.iter().map(String::as_str),
        &SamplingPolicy::keep_all(),
    );
    let rows = out.traces.query(&TraceFilter {
        tag: Some(("user.id".into(), "42".into())),
        ..Default::default()
    });
    assert_eq!(rows.len(), 3);
}

#[test]
fn metric_totals_conserved_through_push_pipeline() {
    let corpus = run(
        &five_service_dag(200, 59, 0.01),
        &SamplingPolicy::keep_all(),
    )
    .unwrap();
    let out = process_lines(
        corpus.lines.iter().map(String::as_str),
        &SamplingPolicy::keep_all(),
    );
    let per_service_truth = corpus.truth.requests_per_service();
    let rows = out
        .metrics
        .store
        .query_range(&spanforge_core::metrics::RangeQuery {
            name: "requests_total".into(),
            tag_filter: vec![],
            start_ms: 0,
            end_ms: i64::MAX,
            aggregate: spanforge_core::metrics::Aggregate::Sum,
            group_by: vec!["service".into()],
        })
        .unwrap();
    let got: BTreeMap<String, f64> = rows
        .into_iter()
        .map(|r| (r.group[0].1.clone(), r.value))
        .collect();
    for (service, count) in per_service_truth {
        assert_eq!(got.get(&service).copied(), Some(count as f64), "{service}");
    }
}

#[test]
fn head_and_tail_compose() {
    // Head keeps everything from "web"; tail keeps only errors.
    let mut policy = SamplingPolicy::keep_all();
    policy.baseline_keep = 0.0;
    policy.tail_rules = vec![spanforge_core::sampling::TailRule {
        predicate: spanforge_core::sampling::TailPredicate::AnyError,
        action: spanforge_core::sampling::SampleAction::Keep,
    }];
    let corpus = run(&tiny_topology(300, 61, 0.05), &policy).unwrap();
    let out = process_lines(corpus.lines.iter().map(String::as_str), &policy);
    let expected = corpus.truth.error_trace_ids();
    let got: std::collections::HashSet<_> = out.traces.iter().map(|t| t.trace_id).collect();
    assert_eq!(got, expected, "only error traces survive the tail");
    assert_eq!(
        out.sampling.kept_by_reason.get("any_error").copied(),
        Some(expected.len() as u64)
    );
}
