//! Deterministic multi-service workload simulator. A configured service
//! topology is driven through the instrumentation SDK with a virtual clock:
//! every latency draw, error draw and identifier comes from seeded streams,
//! so `(config, policy)` maps to a byte-identical telemetry corpus, and a
//! ground-truth record of every request enables exact oracles downstream.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::clock::ManualClock;
use crate::context::{extract, inject, Extraction, TraceContext};
use crate::rng::SplitMix64;
use crate::sampling::SamplingPolicy;
use crate::sdk::{ExportMode, RedInstruments, Sdk, SdkConfig};
use crate::wire::{IdSource, LogLevel, SpanId, SpanStatus, TraceId};

/// Base of the virtual timeline, microseconds since the epoch.
pub const SIM_BASE_US: i64 = 1_700_000_000_000_000;

const METRIC_SNAPSHOT_INTERVAL_US: i64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSpec {
    pub name: String,
    pub version: String,
    pub node_label: String,
    /// Recorded timestamps of this service are shifted by this offset.
    pub clock_offset_us: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatencyDist {
    Fixed(u64),
    Triangular { min: u64, mode: u64, max: u64 },
}

impl LatencyDist {
    fn draw(&self, rng: &mut SplitMix64) -> u64 {
        match self {
            LatencyDist::Fixed(us) => *us,
            LatencyDist::Triangular { min, mode, max } => rng.next_triangular(*min, *mode, *max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallSpec {
    pub caller: String,
    pub callee: String,
    pub operation: String,
    /// The callee's own processing time for this call.
    pub latency: LatencyDist,
    pub error_probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub requests: u64,
    pub arrival_rate_per_s: f64,
    pub ingress: String,
    pub ingress_operation: String,
    pub root_latency: LatencyDist,
    pub seed: u64,
    /// When nonzero, root spans carry `user.id = <index % user_ids>`.
    pub user_ids: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub services: Vec<ServiceSpec>,
    pub calls: Vec<CallSpec>,
    pub workload: WorkloadSpec,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("topology parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// What really happened for one span, before any clock offset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueSpan {
    pub span_id: SpanId,
    pub parent: Option<SpanId>,
    pub service: String,
    pub operation: String,
    pub start_us: i64,
    pub duration_us: u64,
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueRequest {
    pub trace_id: TraceId,
    pub index: u64,
    pub ingress: String,
    pub sampled: bool,
    /// Depth-first order, root first.
    pub spans: Vec<TrueSpan>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub requests: Vec<TrueRequest>,
}

impl GroundTruth {
    pub fn error_span_count(&self) -> u64 {
        self.requests
            .iter()
            .flat_map(|r| r.spans.iter())
            .filter(|s| s.error)
            .count() as u64
    }

    pub fn error_trace_ids(&self) -> HashSet<TraceId> {
        self.requests
            .iter()
            .filter(|r| r.spans.iter().any(|s| s.error))
            .map(|r| r.trace_id)
            .collect()
    }

    pub fn requests_per_service(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for r in &self.requests {
            for s in &r.spans {
                *out.entry(s.service.clone()).or_insert(0) += 1;
            }
        }
        out
    }
}

/// Everything one simulation run produced: the mixed wire lines in emission
/// order plus the ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TelemetryCorpus {
    pub lines: Vec<String>,
    pub truth: GroundTruth,
}

impl TelemetryCorpus {
    pub fn span_lines(&self) -> impl Iterator<Item = &str> {
        self.lines
            .iter()
            .map(String::as_str)
            .filter(|l| l.starts_with("SPAN "))
    }

    pub fn log_lines(&self) -> impl Iterator<Item = &str> {
        self.lines
            .iter()
            .map(String::as_str)
            .filter(|l| l.starts_with("LOG "))
    }

    pub fn metric_lines(&self) -> impl Iterator<Item = &str> {
        self.lines
            .iter()
            .map(String::as_str)
            .filter(|l| l.starts_with("METRIC "))
    }
}

// ---------------------------------------------------------------------------
// Validation and skew injection
// ---------------------------------------------------------------------------

pub fn validate(config: &TopologyConfig) -> Result<(), SimError> {
    let names: HashSet<&str> = config.services.iter().map(|s| s.name.as_str()).collect();
    if names.len() != config.services.len() {
        return Err(SimError::InvalidTopology("duplicate service name".into()));
    }
    for call in &config.calls {
        for endpoint in [&call.caller, &call.callee] {
            if !names.contains(endpoint.as_str()) {
                return Err(SimError::UnknownService(endpoint.clone()));
            }
        }
        if !(0.0..=1.0).contains(&call.error_probability) {
            return Err(SimError::InvalidTopology(format!(
                "error probability {} outside [0, 1]",
                call.error_probability
            )));
        }
    }
    if !names.contains(config.workload.ingress.as_str()) {
        return Err(SimError::UnknownService(config.workload.ingress.clone()));
    }
    if config.workload.requests == 0 || config.workload.arrival_rate_per_s <= 0.0 {
        return Err(SimError::InvalidTopology(
            "workload needs requests > 0 and arrival_rate > 0".into(),
        ));
    }
    // The call graph must be a DAG from the ingress.
    let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for call in &config.calls {
        edges
            .entry(call.caller.as_str())
            .or_default()
            .push(call.callee.as_str());
    }
    let mut in_progress = HashSet::new();
    let mut done = HashSet::new();
    fn visit<'a>(
        node: &'a str,
        edges: &BTreeMap<&'a str, Vec<&'a str>>,
        in_progress: &mut HashSet<&'a str>,
        done: &mut HashSet<&'a str>,
    ) -> Result<(), SimError> {
        if done.contains(node) {
            return Ok(());
        }
        if !in_progress.insert(node) {
            return Err(SimError::InvalidTopology(format!("cycle through {node:?}")));
        }
        for next in edges.get(node).into_iter().flatten() {
            visit(next, edges, in_progress, done)?;
        }
        in_progress.remove(node);
        done.insert(node);
        Ok(())
    }
    visit(
        config.workload.ingress.as_str(),
        &edges,
        &mut in_progress,
        &mut done,
    )?;
    Ok(())
}

/// Returns a copy of the config with the service's clock offset set; ground
/// truth always keeps true times.
pub fn inject_skew(
    config: &TopologyConfig,
    service: &str,
    offset_us: i64,
) -> Result<TopologyConfig, SimError> {
    let mut out = config.clone();
    let spec = out
        .services
        .iter_mut()
        .find(|s| s.name == service)
        .ok_or_else(|| SimError::UnknownService(service.to_string()))?;
    spec.clock_offset_us = offset_us;
    Ok(out)
}

// ---------------------------------------------------------------------------
// The simulation loop
// ---------------------------------------------------------------------------

struct SimService {
    sdk: Sdk,
    red: RedInstruments,
    offset_us: i64,
}

/// Runs the configured workload once. Requests traverse the call DAG
/// depth-first; each hop passes context through inject/extract exactly like
/// a real RPC boundary; spans, logs and metrics flow through each service's
/// SDK with that service's (possibly skewed) clock.
pub fn run(config: &TopologyConfig, policy: &SamplingPolicy) -> Result<TelemetryCorpus, SimError> {
    validate(config)?;
    let clock = ManualClock::new(SIM_BASE_US);
    let mut services: BTreeMap<String, SimService> = BTreeMap::new();
    let seed_root = SplitMix64::new(config.workload.seed);
    for (i, spec) in config.services.iter().enumerate() {
        let mut sdk_config = SdkConfig::new(spec.name.clone());
        sdk_config.service_version = spec.version.clone();
        sdk_config.instance_id = format!("{}-{}", spec.name, i);
        sdk_config.node_label = spec.node_label.clone();
        sdk_config.export_mode = ExportMode::Push;
        let ids = IdSource::seeded(seed_root.fork(&format!("ids:{}", spec.name)).next_u64());
        let sdk = Sdk::new(sdk_config, policy.clone(), ids);
        let red = sdk.red_instruments().expect("fresh registry");
        services.insert(
            spec.name.clone(),
            SimService {
                sdk,
                red,
                offset_us: spec.clock_offset_us,
            },
        );
    }
    let mut edges_by_caller: BTreeMap<&str, Vec<&CallSpec>> = BTreeMap::new();
    for call in &config.calls {
        edges_by_caller
            .entry(call.caller.as_str())
            .or_default()
            .push(call);
    }

    let mut rng = seed_root.fork("draws");
    let mut corpus = TelemetryCorpus::default();
    let mut next_snapshot_us = SIM_BASE_US + METRIC_SNAPSHOT_INTERVAL_US;
    let mut last_end_us = SIM_BASE_US;

    for index in 0..config.workload.requests {
        let arrival_us = SIM_BASE_US
            + ((index as f64) * 1_000_000.0 / config.workload.arrival_rate_per_s).round() as i64;
        while arrival_us >= next_snapshot_us {
            snapshot_all(&services, &clock, next_snapshot_us, &mut corpus.lines);
            next_snapshot_us += METRIC_SNAPSHOT_INTERVAL_US;
        }
        let mut spans = Vec::new();
        let root = simulate_call(
            CallInput {
                services: &services,
                edges_by_caller: &edges_by_caller,
                clock: &clock,
                rng: &mut rng,
                service: &config.workload.ingress,
                operation: &config.workload.ingress_operation,
                latency: config.workload.root_latency,
                error_probability: 0.0,
                true_start_us: arrival_us,
                parent: None,
                root_user_tag: user_tag(&config.workload, index),
            },
            &mut spans,
        );
        last_end_us = last_end_us.max(arrival_us + root.1 as i64);
        corpus.truth.requests.push(TrueRequest {
            trace_id: root.0,
            index,
            ingress: config.workload.ingress.clone(),
            sampled: root.2,
            spans,
        });
        // Spans finish bottom-up inside each service buffer; drain in
        // deterministic service order after every request.
        for service in services.values() {
            corpus.lines.extend(service.sdk.buffer().drain());
        }
    }
    snapshot_all(
        &services,
        &clock,
        last_end_us.max(next_snapshot_us - 1) + 1,
        &mut corpus.lines,
    );
    Ok(corpus)
}

fn user_tag(workload: &WorkloadSpec, index: u64) -> Option<String> {
    (workload.user_ids > 0).then(|| (index % workload.user_ids).to_string())
}

fn snapshot_all(
    services: &BTreeMap<String, SimService>,
    clock: &ManualClock,
    at_us: i64,
    lines: &mut Vec<String>,
) {
    for service in services.values() {
        clock.set_us(at_us + service.offset_us);
        service.sdk.snapshot_metrics(clock);
        lines.extend(service.sdk.buffer().drain());
    }
}

struct CallInput<'a> {
    services: &'a BTreeMap<String, SimService>,
    edges_by_caller: &'a BTreeMap<&'a str, Vec<&'a CallSpec>>,
    clock: &'a ManualClock,
    rng: &'a mut SplitMix64,
    service: &'a str,
    operation: &'a str,
    latency: LatencyDist,
    error_probability: f64,
    true_start_us: i64,
    parent: Option<TraceContext>,
    root_user_tag: Option<String>,
}

/// Simulates one operation on one service: own work split around the
/// sequential downstream calls, error drawn from the edge probability.
/// Returns (trace id, total duration, sampled flag).
fn simulate_call(input: CallInput<'_>, truth_out: &mut Vec<TrueSpan>) -> (TraceId, u64, bool) {
    let CallInput {
        services,
        edges_by_caller,
        clock,
        rng,
        service,
        operation,
        latency,
        error_probability,
        true_start_us,
        parent,
        root_user_tag,
    } = input;
    let sim_service = services.get(service).expect("validated");
    let own_us = latency.draw(rng);
    let is_error = error_probability > 0.0 && rng.next_f64() < error_probability;

    clock.set_us(true_start_us + sim_service.offset_us);
    let (mut span, downstream) = sim_service.sdk.start_span(parent, operation, clock);
    if parent.is_none() {
        if let Some(user) = &root_user_tag {
            span.set_tag("user.id", user.clone());
        }
        sim_service
            .sdk
            .log(&span, LogLevel::Info, "request received", clock);
    }

    // Reserve this span's slot in DFS order before recursing.
    let truth_index = truth_out.len();
    truth_out.push(TrueSpan {
        span_id: span.span_id(),
        parent: parent.map(|ctx| ctx.parent_span_id),
        service: service.to_string(),
        operation: operation.to_string(),
        start_us: true_start_us,
        duration_us: 0,
        error: is_error,
    });

    let lead_us = own_us / 2;
    let mut cursor_us = true_start_us + lead_us as i64;
    for edge in edges_by_caller.get(service).into_iter().flatten() {
        // Context crosses the boundary through a carrier map, as a real RPC
        // metadata map would.
        let mut carrier = std::collections::BTreeMap::new();
        inject(&downstream, &mut carrier);
        let child_parent = match extract(&carrier) {
            Extraction::Context(ctx) => Some(ctx),
            _ => None,
        };
        let (_, child_duration, _) = simulate_call(
            CallInput {
                services,
                edges_by_caller,
                clock,
                rng,
                service: &edge.callee,
                operation: &edge.operation,
                latency: edge.latency,
                error_probability: edge.error_probability,
                true_start_us: cursor_us,
                parent: child_parent,
                root_user_tag: None,
            },
            truth_out,
        );
        cursor_us += child_duration as i64;
    }
    let total_us = (cursor_us - true_start_us) as u64 + (own_us - lead_us);

    if is_error {
        sim_service
            .sdk
            .log(&span, LogLevel::Error, "operation failed", clock);
    }
    clock.set_us(true_start_us + total_us as i64 + sim_service.offset_us);
    let status = if is_error {
        SpanStatus::Error
    } else {
        SpanStatus::Ok
    };
    let finished = sim_service.sdk.finish_span(span, status, clock);
    sim_service
        .sdk
        .record_red(
            &sim_service.red,
            operation,
            status,
            finished.duration_us,
            clock,
        )
        .expect("red instruments registered");

    truth_out[truth_index].duration_us = total_us;
    (finished.trace_id, total_us, downstream.sampled)
}

// ---------------------------------------------------------------------------
// Topology file format
// ---------------------------------------------------------------------------

/// Parses the plain-text topology format: repeated `[service]` and `[call]`
/// sections plus one `[workload]`, each holding `key = value` lines.
pub fn parse_topology(text: &str) -> Result<TopologyConfig, SimError> {
    #[derive(Default)]
    struct Pending {
        kind: String,
        values: BTreeMap<String, String>,
        line: usize,
    }
    let mut services = Vec::new();
    let mut calls = Vec::new();
    let mut workload: Option<WorkloadSpec> = None;
    let mut pending: Option<Pending> = None;

    fn flush(
        pending: Option<Pending>,
        services: &mut Vec<ServiceSpec>,
        calls: &mut Vec<CallSpec>,
        workload: &mut Option<WorkloadSpec>,
    ) -> Result<(), SimError> {
        let Some(p) = pending else { return Ok(()) };
        let err = |reason: String| SimError::Parse {
            line: p.line,
            reason,
        };
        let get = |key: &str| p.values.get(key).map(String::as_str);
        let require = |key: &str| {
            get(key).ok_or_else(|| SimError::Parse {
                line: p.line,
                reason: format!("[{}] missing key {key:?}", p.kind),
            })
        };
        match p.kind.as_str() {
            "service" => services.push(ServiceSpec {
                name: require("name")?.to_string(),
                version: get("version").unwrap_or("0.0.0").to_string(),
                node_label: get("node").unwrap_or("node-0").to_string(),
                clock_offset_us: match get("clock_offset_us") {
                    Some(v) => v
                        .parse()
                        .map_err(|_| err("bad clock_offset_us".to_string()))?,
                    None => 0,
                },
            }),
            "call" => calls.push(CallSpec {
                caller: require("caller")?.to_string(),
                callee: require("callee")?.to_string(),
                operation: require("operation")?.to_string(),
                latency: parse_latency(require("latency_us")?).map_err(&err)?,
                error_probability: match get("error_probability") {
                    Some(v) => {
                        let p: f64 = v
                            .parse()
                            .map_err(|_| err("bad error_probability".to_string()))?;
                        p
                    }
                    None => 0.0,
                },
            }),
            "workload" => {
                *workload = Some(WorkloadSpec {
                    requests: require("requests")?
                        .parse()
                        .map_err(|_| err("bad requests".to_string()))?,
                    arrival_rate_per_s: require("arrival_rate")?
                        .parse()
                        .map_err(|_| err("bad arrival_rate".to_string()))?,
                    ingress: require("ingress")?.to_string(),
                    ingress_operation: get("ingress_operation").unwrap_or("request").to_string(),
                    root_latency: match get("root_latency_us") {
                        Some(v) => parse_latency(v).map_err(&err)?,
                        None => LatencyDist::Fixed(1000),
                    },
                    seed: require("seed")?
                        .parse()
                        .map_err(|_| err("bad seed".to_string()))?,
                    user_ids: match get("user_ids") {
                        Some(v) => v.parse().map_err(|_| err("bad user_ids".to_string()))?,
                        None => 0,
                    },
                });
            }
            other => return Err(err(format!("unknown section [{other}]"))),
        }
        Ok(())
    }

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            flush(pending.take(), &mut services, &mut calls, &mut workload)?;
            pending = Some(Pending {
                kind: name.to_string(),
                values: BTreeMap::new(),
                line: lineno,
            });
            continue;
        }
        let Some(p) = pending.as_mut() else {
            return Err(SimError::Parse {
                line: lineno,
                reason: "key outside any section".to_string(),
            });
        };
        let (key, value) = line.split_once('=').ok_or_else(|| SimError::Parse {
            line: lineno,
            reason: "expected key = value".to_string(),
        })?;
        p.values
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    flush(pending.take(), &mut services, &mut calls, &mut workload)?;

    let workload = workload.ok_or_else(|| SimError::Parse {
        line: 0,
        reason: "missing [workload] section".to_string(),
    })?;
    let config = TopologyConfig {
        services,
        calls,
        workload,
    };
    validate(&config)?;
    Ok(config)
}

fn parse_latency(s: &str) -> Result<LatencyDist, String> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    match parts.as_slice() {
        [v] => Ok(LatencyDist::Fixed(
            v.parse().map_err(|_| format!("bad latency {s:?}"))?,
        )),
        ["fixed", v] => Ok(LatencyDist::Fixed(
            v.parse().map_err(|_| format!("bad latency {s:?}"))?,
        )),
        ["tri", min, mode, max] => {
            let min: u64 = min.parse().map_err(|_| format!("bad latency {s:?}"))?;
            let mode: u64 = mode.parse().map_err(|_| format!("bad latency {s:?}"))?;
            let max: u64 = max.parse().map_err(|_| format!("bad latency {s:?}"))?;
            if !(min <= mode && mode <= max) {
                return Err(format!("triangular needs min <= mode <= max in {s:?}"));
            }
            Ok(LatencyDist::Triangular { min, mode, max })
        }
        _ => Err(format!("bad latency spec {s:?}")),
    }
}

// ---------------------------------------------------------------------------
// Corpus files
// ---------------------------------------------------------------------------

/// Truth sidecar line for one request:
/// `TRUTH <trace_id> <index> <ingress> <0|1 sampled> <spanrec>[;spanrec...]`
/// where spanrec is `span_id,parent|-,service,operation,start,duration,0|1`.
pub fn encode_truth(request: &TrueRequest) -> String {
    let spans = request
        .spans
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{},{},{}",
                s.span_id.to_hex(),
                s.parent.map(|p| p.to_hex()).unwrap_or_else(|| "-".into()),
                s.service,
                s.operation,
                s.start_us,
                s.duration_us,
                u8::from(s.error),
            )
        })
        .collect::<Vec<_>>()
        .join(";");
    format!(
        "TRUTH {} {} {} {} {}",
        request.trace_id.to_hex(),
        request.index,
        request.ingress,
        u8::from(request.sampled),
        spans,
    )
}

pub fn decode_truth(line: &str) -> Result<TrueRequest, SimError> {
    let err = |reason: &str| SimError::Parse {
        line: 0,
        reason: format!("{reason} in truth line {line:?}"),
    };
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 6 || fields[0] != "TRUTH" {
        return Err(err("expected 6 fields"));
    }
    let trace_id = TraceId::from_hex(fields[1]).map_err(|e| err(&e.to_string()))?;
    let index: u64 = fields[2].parse().map_err(|_| err("bad index"))?;
    let sampled = match fields[4] {
        "1" => true,
        "0" => false,
        _ => return Err(err("bad sampled flag")),
    };
    let mut spans = Vec::new();
    for rec in fields[5].split(';') {
        let parts: Vec<&str> = rec.split(',').collect();
        if parts.len() != 7 {
            return Err(err("span record needs 7 parts"));
        }
        spans.push(TrueSpan {
            span_id: SpanId::from_hex(parts[0]).map_err(|e| err(&e.to_string()))?,
            parent: if parts[1] == "-" {
                None
            } else {
                Some(SpanId::from_hex(parts[1]).map_err(|e| err(&e.to_string()))?)
            },
            service: parts[2].to_string(),
            operation: parts[3].to_string(),
            start_us: parts[4].parse().map_err(|_| err("bad start"))?,
            duration_us: parts[5].parse().map_err(|_| err("bad duration"))?,
            error: parts[6] == "1",
        });
    }
    Ok(TrueRequest {
        trace_id,
        index,
        ingress: fields[3].to_string(),
        sampled,
        spans,
    })
}

/// Writes `telemetry.lines` (mixed SPAN/LOG/METRIC records in emission
/// order) and `truth.lines` into the directory.
#[cfg(not(target_arch = "wasm32"))]
pub fn write_corpus(corpus: &TelemetryCorpus, dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut telemetry = String::new();
    for line in &corpus.lines {
        telemetry.push_str(line);
        telemetry.push('\n');
    }
    std::fs::write(dir.join("telemetry.lines"), telemetry)?;
    let mut truth = String::new();
    for request in &corpus.truth.requests {
        truth.push_str(&encode_truth(request));
        truth.push('\n');
    }
    std::fs::write(dir.join("truth.lines"), truth)?;
    Ok(())
}

#[cfg(not(target_arch = "wasm32"))]
pub fn load_corpus(dir: &std::path::Path) -> std::io::Result<TelemetryCorpus> {
    let telemetry = std::fs::read_to_string(dir.join("telemetry.lines"))?;
    let lines: Vec<String> = telemetry.lines().map(str::to_string).collect();
    let mut truth = GroundTruth::default();
    let truth_path = dir.join("truth.lines");
    if truth_path.exists() {
        for line in std::fs::read_to_string(truth_path)?.lines() {
            truth.requests.push(decode_truth(line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
            })?);
        }
    }
    Ok(TelemetryCorpus { lines, truth })
}

// ---------------------------------------------------------------------------

/// A small two-service topology used by unit tests and doc examples.
pub fn tiny_topology(requests: u64, seed: u64, error_probability: f64) -> TopologyConfig {
    TopologyConfig {
        services: vec![
            ServiceSpec {
                name: "web".into(),
                version: "1.0.0".into(),
                node_label: "node-a".into(),
                clock_offset_us: 0,
            },
            ServiceSpec {
                name: "db".into(),
                version: "2.0.0".into(),
                node_label: "node-b".into(),
                clock_offset_us: 0,
            },
        ],
        calls: vec![CallSpec {
            caller: "web".into(),
            callee: "db".into(),
            operation: "query".into(),
            latency: LatencyDist::Triangular {
                min: 500,
                mode: 1000,
                max: 3000,
            },
            error_probability,
        }],
        workload: WorkloadSpec {
            requests,
            arrival_rate_per_s: 100.0,
            ingress: "web".into(),
            ingress_operation: "handle".into(),
            root_latency: LatencyDist::Fixed(2000),
            seed,
            user_ids: 0,
        },
    }
}
