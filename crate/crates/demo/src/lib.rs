//! Browser demo: drives the simulator, collector pipeline and metric views
//! from a single static page. The exported surface is three interactive
//! operations — run a simulated workload (with adjustable skew, error rate
//! and head sampling), explore the resulting traces as waterfalls and
//! critical paths, and replay tail-sampling policies against the corpus.
//!
//! Everything here is plain deterministic Rust; `wasm_bindgen` only wraps
//! it, so the same methods are unit-tested on the host.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use spanforge_core::analysis::{render_critical_path, render_view, render_waterfall, OutputFormat};
use spanforge_core::collector::TraceTree;
use spanforge_core::metrics::View;
use spanforge_core::pipeline::{process_lines, PipelineOutput};
use spanforge_core::sampling::{apply, SampleAction, SamplingPolicy, TailPredicate, TailRule};
use spanforge_core::sim::{
    inject_skew, run, CallSpec, LatencyDist, ServiceSpec, TelemetryCorpus, TopologyConfig,
    WorkloadSpec,
};

#[derive(Serialize)]
struct RunSummary {
    requests: u64,
    span_lines: usize,
    log_lines: usize,
    metric_lines: usize,
    traces_stored: usize,
    error_traces: usize,
    clock_adjusted_traces: usize,
    services: Vec<String>,
}

#[derive(Serialize)]
struct TraceRow {
    index: usize,
    trace_id: String,
    start_us: i64,
    duration_us: u64,
    spans: usize,
    error: bool,
    adjusted: bool,
}

#[derive(Serialize)]
struct SamplingReport {
    evaluated: u64,
    kept: u64,
    dropped: u64,
    kept_by_reason: Vec<(String, u64)>,
    kept_trace_indexes: Vec<usize>,
}

/// The order-processing topology from the shipped demo config, with the
/// error probability and one service's clock offset adjustable.
fn demo_topology(requests: u64, seed: u64, error_probability: f64) -> TopologyConfig {
    let svc = |name: &str, version: &str, node: &str| ServiceSpec {
        name: name.into(),
        version: version.into(),
        node_label: node.into(),
        clock_offset_us: 0,
    };
    let call =
        |caller: &str, callee: &str, op: &str, min: u64, mode: u64, max: u64, p: f64| CallSpec {
            caller: caller.into(),
            callee: callee.into(),
            operation: op.into(),
            latency: LatencyDist::Triangular { min, mode, max },
            error_probability: p,
        };
    TopologyConfig {
        services: vec![
            svc("frontend", "1.4.2", "node-a"),
            svc("catalog", "2.1.0", "node-a"),
            svc("payments", "3.0.1", "node-b"),
            svc("inventory", "1.9.0", "node-b"),
            svc("shipping", "0.7.3", "node-c"),
        ],
        calls: vec![
            call("frontend", "catalog", "list_items", 800, 1500, 4000, 0.0),
            call("catalog", "inventory", "lookup", 300, 600, 1500, 0.0),
            call("frontend", "payments", "charge", 2000, 5000, 12000, 0.0),
            call(
                "payments",
                "inventory",
                "reserve",
                400,
                900,
                2500,
                error_probability,
            ),
            call("frontend", "shipping", "quote", 600, 1200, 3000, 0.0),
            call("shipping", "inventory", "eta", 450, 450, 450, 0.0),
        ],
        workload: WorkloadSpec {
            requests,
            arrival_rate_per_s: 50.0,
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

/// One simulated corpus plus its processed stores, held across calls so the
/// page can explore without re-running.
#[wasm_bindgen]
pub struct DemoPipeline {
    corpus: Option<TelemetryCorpus>,
    output: Option<PipelineOutput>,
    trace_order: Vec<spanforge_core::wire::TraceId>,
}

impl Default for DemoPipeline {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl DemoPipeline {
    #[wasm_bindgen(constructor)]
    pub fn new() -> DemoPipeline {
        DemoPipeline {
            corpus: None,
            output: None,
            trace_order: Vec::new(),
        }
    }

    /// Operation 1: simulate a workload and rebuild the pipeline.
    ///
    /// `skew_ms` shifts the payments service's clock; `head_rate` in
    /// `[0, 1]` is the head-sampling probability at the ingress. Returns a
    /// JSON run summary.
    pub fn run_workload(
        &mut self,
        seed: u64,
        requests: u32,
        error_probability: f64,
        skew_ms: i64,
        head_rate: f64,
    ) -> Result<String, JsError> {
        let base = demo_topology(
            requests.max(1) as u64,
            seed,
            error_probability.clamp(0.0, 1.0),
        );
        let config = inject_skew(&base, "payments", skew_ms * 1000)
            .map_err(|e| JsError::new(&e.to_string()))?;
        let mut policy = SamplingPolicy::keep_all();
        policy.head.default_rate = head_rate.clamp(0.0, 1.0);
        let corpus = run(&config, &policy).map_err(|e| JsError::new(&e.to_string()))?;
        let output = process_lines(
            corpus.lines.iter().map(String::as_str),
            &SamplingPolicy::keep_all(),
        );
        let mut order: Vec<_> = output
            .traces
            .iter()
            .map(|t| (t.root().adjusted_start_us, t.trace_id))
            .collect();
        order.sort();
        self.trace_order = order.into_iter().map(|(_, id)| id).collect();

        let summary = RunSummary {
            requests: corpus.truth.requests.len() as u64,
            span_lines: corpus.span_lines().count(),
            log_lines: corpus.log_lines().count(),
            metric_lines: corpus.metric_lines().count(),
            traces_stored: output.traces.len(),
            error_traces: output.traces.iter().filter(|t| t.has_error()).count(),
            clock_adjusted_traces: output
                .traces
                .iter()
                .filter(|t| {
                    t.anomalies
                        .contains(&spanforge_core::collector::Anomaly::ClockAdjusted)
                })
                .count(),
            services: config.services.iter().map(|s| s.name.clone()).collect(),
        };
        self.corpus = Some(corpus);
        self.output = Some(output);
        serde_json::to_string(&summary).map_err(|e| JsError::new(&e.to_string()))
    }

    /// JSON rows of the stored traces, oldest first, capped at `limit`.
    pub fn trace_rows(&self, limit: usize) -> Result<String, JsError> {
        let output = self.output()?;
        let rows: Vec<TraceRow> = self
            .trace_order
            .iter()
            .take(limit)
            .enumerate()
            .filter_map(|(index, id)| output.traces.get(*id).map(|t| (index, t)))
            .map(|(index, tree)| TraceRow {
                index,
                trace_id: tree.trace_id.to_hex(),
                start_us: tree.root().adjusted_start_us,
                duration_us: tree.duration_us(),
                spans: tree.span_count(),
                error: tree.has_error(),
                adjusted: tree
                    .anomalies
                    .contains(&spanforge_core::collector::Anomaly::ClockAdjusted),
            })
            .collect();
        serde_json::to_string(&rows).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn trace_count(&self) -> usize {
        self.trace_order.len()
    }

    /// Operation 2a: the waterfall for one stored trace, with raw recorded
    /// timestamps or skew-adjusted ones.
    pub fn waterfall(&self, index: usize, adjusted: bool) -> Result<String, JsError> {
        Ok(render_waterfall(self.tree_at(index)?, adjusted))
    }

    /// Operation 2b: the critical-path report for one stored trace.
    pub fn critical_path(&self, index: usize) -> Result<String, JsError> {
        Ok(render_critical_path(
            self.tree_at(index)?,
            OutputFormat::Plain,
        ))
    }

    /// Operation 3: replay a tail-sampling policy over the stored traces.
    /// Returns a JSON tally plus which trace indexes survive.
    pub fn sample(
        &self,
        keep_errors: bool,
        slow_threshold_ms: f64,
        baseline_keep: f64,
    ) -> Result<String, JsError> {
        let output = self.output()?;
        let mut policy = SamplingPolicy::keep_all();
        policy.baseline_keep = baseline_keep.clamp(0.0, 1.0);
        if keep_errors {
            policy.tail_rules.push(TailRule {
                predicate: TailPredicate::AnyError,
                action: SampleAction::Keep,
            });
        }
        if slow_threshold_ms > 0.0 {
            policy.tail_rules.push(TailRule {
                predicate: TailPredicate::RootDurationOver {
                    threshold_us: (slow_threshold_ms * 1000.0) as u64,
                    operation: None,
                },
                action: SampleAction::Keep,
            });
        }
        let trees: Vec<TraceTree> = self
            .trace_order
            .iter()
            .filter_map(|id| output.traces.get(*id).cloned())
            .collect();
        let (kept, stats) = apply(&policy, trees);
        let kept_ids: std::collections::HashSet<_> = kept.iter().map(|t| t.trace_id).collect();
        let report = SamplingReport {
            evaluated: stats.evaluated,
            kept: stats.kept(),
            dropped: stats.dropped,
            kept_by_reason: stats.kept_by_reason.into_iter().collect(),
            kept_trace_indexes: self
                .trace_order
                .iter()
                .enumerate()
                .filter(|(_, id)| kept_ids.contains(id))
                .map(|(i, _)| i)
                .collect(),
        };
        serde_json::to_string(&report).map_err(|e| JsError::new(&e.to_string()))
    }

    /// RED table for one service over the corpus tail, rendered as text.
    pub fn red_view(&self, service: String) -> Result<String, JsError> {
        let output = self.output()?;
        let end = self.max_metric_ts()? + 1;
        let table = output
            .metrics
            .store
            .derived_view(&View::Red { service }, end - 60_000, end)
            .map_err(|e| JsError::new(&e.to_string()))?;
        Ok(render_view(&table, OutputFormat::Plain))
    }
}

impl DemoPipeline {
    fn output(&self) -> Result<&PipelineOutput, JsError> {
        self.output
            .as_ref()
            .ok_or_else(|| JsError::new("run a workload first"))
    }

    fn tree_at(&self, index: usize) -> Result<&TraceTree, JsError> {
        let output = self.output()?;
        self.trace_order
            .get(index)
            .and_then(|id| output.traces.get(*id))
            .ok_or_else(|| JsError::new(&format!("no trace at index {index}")))
    }

    fn max_metric_ts(&self) -> Result<i64, JsError> {
        let corpus = self
            .corpus
            .as_ref()
            .ok_or_else(|| JsError::new("run a workload first"))?;
        let mut max = 0;
        for line in corpus.metric_lines() {
            if let Ok(spanforge_core::wire::WireLine::Metric(m)) =
                spanforge_core::wire::decode_line(line)
            {
                max = max.max(m.timestamp_ms);
            }
        }
        Ok(max)
    }
}
