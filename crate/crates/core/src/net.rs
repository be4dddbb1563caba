//! Plain TCP transport for the line protocol plus the tiny text query
//! protocol the CLI speaks to running servers. One request or record per
//! line; responses end with an `END` line; errors come back as `ERR <msg>`.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::analysis::{render_query_rows, render_summaries, render_view, OutputFormat};
use crate::clock::Clock;
use crate::collector::{adjust_clock_skew, assemble, Anomaly, Collector, TraceFilter, TraceStore};
use crate::metrics::{Aggregate, MetricsService, RangeQuery, ScrapeTransport, View};
use crate::sampling::{apply, SamplingPolicy, SamplingStats};
use crate::sdk::{LineSink, Sdk, SinkUnavailable};
use crate::wire::{decode_field, encode_field, encode_log, encode_span, TraceId};

const IO_TIMEOUT: Duration = Duration::from_secs(10);

fn connect(addr: &str) -> std::io::Result<TcpStream> {
    let mut last = None;
    for resolved in addr.to_socket_addrs()? {
        match TcpStream::connect_timeout(&resolved, IO_TIMEOUT) {
            Ok(stream) => {
                stream.set_read_timeout(Some(IO_TIMEOUT))?;
                stream.set_write_timeout(Some(IO_TIMEOUT))?;
                return Ok(stream);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "address resolved to nothing",
        )
    }))
}

/// Fire-and-forget push of raw lines to a listener.
pub fn push_lines(addr: &str, lines: &[String]) -> std::io::Result<()> {
    let mut stream = connect(addr)?;
    let mut body = String::new();
    for line in lines {
        body.push_str(line);
        body.push('\n');
    }
    stream.write_all(body.as_bytes())
}

/// `LineSink` over TCP, reconnecting per batch.
pub struct TcpSink {
    pub addr: String,
}

impl LineSink for TcpSink {
    fn send_lines(&mut self, lines: &[String]) -> Result<(), SinkUnavailable> {
        push_lines(&self.addr, lines).map_err(|e| SinkUnavailable(e.to_string()))
    }
}

/// Scrape client side of the SCRAPE/END protocol.
pub struct TcpScrapeTarget {
    pub addr: String,
}

impl ScrapeTransport for TcpScrapeTarget {
    fn fetch(&mut self) -> Result<String, String> {
        let run = || -> std::io::Result<String> {
            let mut stream = connect(&self.addr)?;
            stream.write_all(b"SCRAPE\n")?;
            let mut reader = BufReader::new(stream);
            let mut body = String::new();
            let mut line = String::new();
            loop {
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::UnexpectedEof,
                        "scrape body not terminated",
                    ));
                }
                if line.trim_end() == "END" {
                    return Ok(body);
                }
                body.push_str(&line);
            }
        };
        run().map_err(|e| e.to_string())
    }
}

/// Serves the SDK's exposition over the SCRAPE/END protocol. Blocks on the
/// listener; run it on its own thread.
pub fn serve_scrape(listener: TcpListener, sdk: Arc<Sdk>, clock: Arc<dyn Clock>) {
    for stream in listener.incoming() {
        let Ok(stream) = stream else { continue };
        let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
        let sdk = Arc::clone(&sdk);
        let clock = Arc::clone(&clock);
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            if reader.read_line(&mut line).is_ok() && line.trim_end() == "SCRAPE" {
                let body = sdk.expose_scrape(clock.as_ref());
                let mut stream = reader.into_inner();
                let _ = stream.write_all(body.as_bytes());
                let _ = stream.write_all(b"END\n");
            }
        });
    }
}

// ---------------------------------------------------------------------------
// Server state
// ---------------------------------------------------------------------------

/// Shared state behind the collector and metrics listeners.
pub struct ServerState {
    pub collector: Mutex<Collector>,
    pub traces: Mutex<TraceStore>,
    pub metrics: Mutex<MetricsService>,
    pub policy: SamplingPolicy,
    pub sampling: Mutex<SamplingStats>,
    /// Retained traces are also appended here when set.
    pub trace_log: Mutex<Option<std::fs::File>>,
}

impl ServerState {
    pub fn new(collector: Collector, metrics: MetricsService, policy: SamplingPolicy) -> Self {
        Self {
            collector: Mutex::new(collector),
            traces: Mutex::new(TraceStore::new()),
            metrics: Mutex::new(metrics),
            policy,
            sampling: Mutex::new(SamplingStats::default()),
            trace_log: Mutex::new(None),
        }
    }

    /// Loads previously persisted traces and appends new ones to `path`.
    pub fn with_trace_log(self, path: &std::path::Path) -> std::io::Result<Self> {
        let restored = crate::collector::persist::load_store(path)?;
        *self.traces.lock().unwrap() = restored;
        *self.trace_log.lock().unwrap() = Some(crate::collector::persist::open_log(path)?);
        Ok(self)
    }
}

/// One pipeline tick: releases pending traces that hit their timeout,
/// assembles and skew-adjusts them, runs tail sampling, stores what
/// survives. Call it periodically from a pump thread.
pub fn pump_collector(state: &ServerState, now_us: i64) {
    let raws = state.collector.lock().unwrap().complete_pending(now_us);
    if raws.is_empty() {
        return;
    }
    let mut trees = Vec::new();
    for raw in raws {
        if let Ok(mut tree) = assemble(raw) {
            adjust_clock_skew(&mut tree);
            trees.push(tree);
        }
    }
    let (kept, stats) = apply(&state.policy, trees);
    {
        let mut traces = state.traces.lock().unwrap();
        let mut log = state.trace_log.lock().unwrap();
        for tree in kept {
            if let Some(file) = log.as_mut() {
                // Persistence is best-effort; serving keeps going on error.
                let _ = crate::collector::persist::append_trace(file, &tree);
            }
            traces.store(tree);
        }
    }
    let mut sampling = state.sampling.lock().unwrap();
    sampling.evaluated += stats.evaluated;
    sampling.dropped += stats.dropped;
    for (reason, count) in stats.kept_by_reason {
        *sampling.kept_by_reason.entry(reason).or_insert(0) += count;
    }
}

/// Collector listener: SPAN/LOG lines are ingested fire-and-forget; `GET`
/// and `SEARCH` queries get replies. Blocks; run on its own thread.
pub fn serve_collector(listener: TcpListener, state: Arc<ServerState>, clock: Arc<dyn Clock>) {
    for stream in listener.incoming() {
        let Ok(stream) = stream else { continue };
        let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
        let state = Arc::clone(&state);
        let clock = Arc::clone(&clock);
        std::thread::spawn(move || handle_collector_conn(stream, &state, clock.as_ref()));
    }
}

fn handle_collector_conn(stream: TcpStream, state: &ServerState, clock: &dyn Clock) {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with("SPAN ") || trimmed.starts_with("LOG ") {
            state
                .collector
                .lock()
                .unwrap()
                .ingest(trimmed, clock.now_us());
            continue;
        }
        let reply = collector_request(trimmed, state);
        let stream = reader.get_mut();
        if stream.write_all(reply.as_bytes()).is_err() || stream.write_all(b"END\n").is_err() {
            return;
        }
    }
}

fn collector_request(request: &str, state: &ServerState) -> String {
    let mut tokens = request.split(' ');
    match tokens.next() {
        Some("GET") => {
            let Some(id) = tokens.next() else {
                return "ERR GET needs a trace id\n".to_string();
            };
            match TraceId::from_hex(id) {
                Ok(trace_id) => match state.traces.lock().unwrap().get(trace_id) {
                    Some(tree) => {
                        let mut out = String::new();
                        for node in &tree.nodes {
                            if !node.synthetic {
                                out.push_str(&encode_span(&node.span));
                                out.push('\n');
                            }
                            for log in &node.logs {
                                out.push_str(&encode_log(log));
                                out.push('\n');
                            }
                        }
                        let names: Vec<&str> = tree.anomalies.iter().map(|a| a.as_str()).collect();
                        out.push_str(&format!("ANOMALIES {}\n", names.join(",")));
                        out
                    }
                    None => "ERR trace not found\n".to_string(),
                },
                Err(e) => format!("ERR {e}\n"),
            }
        }
        Some("SEARCH") => match parse_search_filter(tokens) {
            Ok(filter) => {
                let rows = state.traces.lock().unwrap().query(&filter);
                render_summaries(&rows, OutputFormat::Tsv)
            }
            Err(e) => format!("ERR {e}\n"),
        },
        _ => "ERR unknown request\n".to_string(),
    }
}

/// Filter tokens as used on the wire: `service=`, `operation=`, `status=`,
/// `min_duration_us=`, `from_us=`, `to_us=`, `tag=key=value` (key and value
/// percent-encoded).
pub fn parse_search_filter<'a>(
    tokens: impl Iterator<Item = &'a str>,
) -> Result<TraceFilter, String> {
    let mut filter = TraceFilter::default();
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| format!("bad filter token {token:?}"))?;
        match key {
            "service" => filter.service = Some(value.to_string()),
            "operation" => filter.operation = Some(value.to_string()),
            "status" => {
                filter.error = Some(match value {
                    "ERROR" => true,
                    "OK" => false,
                    _ => return Err(format!("status must be OK or ERROR, got {value:?}")),
                })
            }
            "min_duration_us" => {
                filter.min_duration_us = Some(
                    value
                        .parse()
                        .map_err(|_| "bad min_duration_us".to_string())?,
                )
            }
            "from_us" => {
                filter.from_us = Some(value.parse().map_err(|_| "bad from_us".to_string())?)
            }
            "to_us" => filter.to_us = Some(value.parse().map_err(|_| "bad to_us".to_string())?),
            "tag" => {
                let (k, v) = value
                    .split_once('=')
                    .ok_or_else(|| "tag filter needs key=value".to_string())?;
                filter.tag = Some((
                    decode_field(k).map_err(|e| e.to_string())?,
                    decode_field(v).map_err(|e| e.to_string())?,
                ));
            }
            _ => return Err(format!("unknown filter {key:?}")),
        }
    }
    Ok(filter)
}

pub fn encode_search_filter(filter: &TraceFilter) -> String {
    let mut tokens = Vec::new();
    if let Some(v) = &filter.service {
        tokens.push(format!("service={v}"));
    }
    if let Some(v) = &filter.operation {
        tokens.push(format!("operation={v}"));
    }
    if let Some(v) = filter.error {
        tokens.push(format!("status={}", if v { "ERROR" } else { "OK" }));
    }
    if let Some(v) = filter.min_duration_us {
        tokens.push(format!("min_duration_us={v}"));
    }
    if let Some((k, v)) = &filter.tag {
        tokens.push(format!("tag={}={}", encode_field(k), encode_field(v)));
    }
    if let Some(v) = filter.from_us {
        tokens.push(format!("from_us={v}"));
    }
    if let Some(v) = filter.to_us {
        tokens.push(format!("to_us={v}"));
    }
    tokens.join(" ")
}

/// Metrics listener: METRIC lines are ingested; `QUERY` and `VIEW` requests
/// get TSV replies. Blocks; run on its own thread.
pub fn serve_metrics(listener: TcpListener, state: Arc<ServerState>) {
    for stream in listener.incoming() {
        let Ok(stream) = stream else { continue };
        let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
        let state = Arc::clone(&state);
        std::thread::spawn(move || handle_metrics_conn(stream, &state));
    }
}

fn handle_metrics_conn(stream: TcpStream, state: &ServerState) {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with("METRIC ") {
            state.metrics.lock().unwrap().ingest_line(trimmed);
            continue;
        }
        let reply = metrics_request(trimmed, state);
        let stream = reader.get_mut();
        if stream.write_all(reply.as_bytes()).is_err() || stream.write_all(b"END\n").is_err() {
            return;
        }
    }
}

fn metrics_request(request: &str, state: &ServerState) -> String {
    let tokens: Vec<&str> = request.split(' ').collect();
    match tokens.first() {
        Some(&"QUERY") => match parse_query_request(&tokens[1..]) {
            Ok(query) => match state.metrics.lock().unwrap().store.query_range(&query) {
                Ok(rows) => render_query_rows(&rows, OutputFormat::Tsv),
                Err(e) => format!("ERR {e}\n"),
            },
            Err(e) => format!("ERR {e}\n"),
        },
        Some(&"VIEW") => match parse_view_request(&tokens[1..]) {
            Ok((view, start_ms, end_ms)) => {
                match state
                    .metrics
                    .lock()
                    .unwrap()
                    .store
                    .derived_view(&view, start_ms, end_ms)
                {
                    Ok(table) => render_view(&table, OutputFormat::Tsv),
                    Err(e) => format!("ERR {e}\n"),
                }
            }
            Err(e) => format!("ERR {e}\n"),
        },
        _ => "ERR unknown request\n".to_string(),
    }
}

/// `QUERY <name> <agg> <start_ms> <end_ms> [group=k1,k2] [tag=k=v]...`
pub fn parse_query_request(tokens: &[&str]) -> Result<RangeQuery, String> {
    if tokens.len() < 4 {
        return Err("QUERY needs name, aggregate, start_ms, end_ms".to_string());
    }
    let aggregate = parse_aggregate(tokens[1])?;
    let start_ms: i64 = tokens[2].parse().map_err(|_| "bad start_ms".to_string())?;
    let end_ms: i64 = tokens[3].parse().map_err(|_| "bad end_ms".to_string())?;
    let mut query = RangeQuery {
        name: tokens[0].to_string(),
        tag_filter: vec![],
        start_ms,
        end_ms,
        aggregate,
        group_by: vec![],
    };
    for token in &tokens[4..] {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| format!("bad option {token:?}"))?;
        match key {
            "group" => {
                query.group_by = value.split(',').map(str::to_string).collect();
            }
            "tag" => {
                let (k, v) = value
                    .split_once('=')
                    .ok_or_else(|| "tag needs key=value".to_string())?;
                query.tag_filter.push((
                    decode_field(k).map_err(|e| e.to_string())?,
                    decode_field(v).map_err(|e| e.to_string())?,
                ));
            }
            _ => return Err(format!("unknown option {key:?}")),
        }
    }
    Ok(query)
}

pub fn parse_aggregate(s: &str) -> Result<Aggregate, String> {
    match s {
        "avg" => Ok(Aggregate::Avg),
        "sum" => Ok(Aggregate::Sum),
        "min" => Ok(Aggregate::Min),
        "max" => Ok(Aggregate::Max),
        "count" => Ok(Aggregate::Count),
        other => match other.strip_prefix('p') {
            Some(p) => Ok(Aggregate::Pct(
                p.parse().map_err(|_| format!("bad percentile {other:?}"))?,
            )),
            None => Err(format!("unknown aggregate {other:?}")),
        },
    }
}

/// `VIEW <red|golden|use> <target|-> <start_ms> <end_ms>`
pub fn parse_view_request(tokens: &[&str]) -> Result<(View, i64, i64), String> {
    if tokens.len() != 4 {
        return Err("VIEW needs kind, target, start_ms, end_ms".to_string());
    }
    let view = match tokens[0] {
        "red" => View::Red {
            service: tokens[1].to_string(),
        },
        "golden" => View::Golden {
            service: tokens[1].to_string(),
        },
        "use" => View::Use {
            resource: (tokens[1] != "-").then(|| tokens[1].to_string()),
        },
        other => return Err(format!("unknown view {other:?}")),
    };
    let start_ms: i64 = tokens[2].parse().map_err(|_| "bad start_ms".to_string())?;
    let end_ms: i64 = tokens[3].parse().map_err(|_| "bad end_ms".to_string())?;
    Ok((view, start_ms, end_ms))
}

// ---------------------------------------------------------------------------
// Client helpers
// ---------------------------------------------------------------------------

/// Sends one request line and collects the reply up to `END`.
pub fn request_reply(addr: &str, request: &str) -> std::io::Result<String> {
    let mut stream = connect(addr)?;
    stream.write_all(request.as_bytes())?;
    stream.write_all(b"\n")?;
    let mut reader = BufReader::new(stream);
    let mut reply = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "reply not terminated",
            ));
        }
        if line.trim_end() == "END" {
            return Ok(reply);
        }
        reply.push_str(&line);
    }
}

/// Reply to a `GET`: the trace's raw lines plus the server-side anomalies.
pub struct FetchedTrace {
    pub lines: Vec<String>,
    pub anomalies: BTreeSet<Anomaly>,
}

/// Fetches one trace's raw lines from a collector server; `Ok(None)` when
/// the server does not have it.
pub fn fetch_trace(addr: &str, trace_id: TraceId) -> std::io::Result<Option<FetchedTrace>> {
    let reply = request_reply(addr, &format!("GET {}", trace_id.to_hex()))?;
    if reply.starts_with("ERR trace not found") {
        return Ok(None);
    }
    if let Some(msg) = reply.strip_prefix("ERR ") {
        return Err(std::io::Error::other(msg.trim_end().to_string()));
    }
    let mut lines = Vec::new();
    let mut anomalies = BTreeSet::new();
    for line in reply.lines() {
        if let Some(list) = line.strip_prefix("ANOMALIES ") {
            for name in list.split(',').filter(|s| !s.is_empty()) {
                if let Some(a) = anomaly_from_str(name) {
                    anomalies.insert(a);
                }
            }
        } else {
            lines.push(line.to_string());
        }
    }
    Ok(Some(FetchedTrace { lines, anomalies }))
}

fn anomaly_from_str(s: &str) -> Option<Anomaly> {
    match s {
        "orphaned_spans" => Some(Anomaly::OrphanedSpans),
        "child_longer_than_parent" => Some(Anomaly::ChildLongerThanParent),
        "clock_adjusted" => Some(Anomaly::ClockAdjusted),
        "duplicate_span_id" => Some(Anomaly::DuplicateSpanId),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::collector::CollectorConfig;
    use crate::sampling::SamplingPolicy;
    use crate::sim::{run, tiny_topology};

    fn spawn_state() -> (Arc<ServerState>, Arc<ManualClock>) {
        let state = Arc::new(ServerState::new(
            Collector::new(CollectorConfig::default()),
            MetricsService::with_defaults(),
            SamplingPolicy::keep_all(),
        ));
        (state, Arc::new(ManualClock::new(0)))
    }

    #[test]
    fn end_to_end_over_tcp() {
        let (state, clock) = spawn_state();
        let collector_listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let collector_addr = collector_listener.local_addr().unwrap().to_string();
        let metrics_listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let metrics_addr = metrics_listener.local_addr().unwrap().to_string();
        {
            let state = Arc::clone(&state);
            let clock: Arc<dyn Clock> = clock.clone();
            std::thread::spawn(move || serve_collector(collector_listener, state, clock));
        }
        {
            let state = Arc::clone(&state);
            std::thread::spawn(move || serve_metrics(metrics_listener, state));
        }

        let corpus = run(&tiny_topology(10, 3, 0.0), &SamplingPolicy::keep_all()).unwrap();
        let trace_lines: Vec<String> = corpus
            .span_lines()
            .chain(corpus.log_lines())
            .map(str::to_string)
            .collect();
        push_lines(&collector_addr, &trace_lines).unwrap();
        let metric_lines: Vec<String> = corpus.metric_lines().map(str::to_string).collect();
        push_lines(&metrics_addr, &metric_lines).unwrap();

        // Wait for ingestion, then force completion.
        let expect_spans = corpus.span_lines().count() as u64;
        let deadline = std::time::Instant::now() + Duration::from_secs(5);
        loop {
            let done = {
                let c = state.collector.lock().unwrap();
                c.stats.spans_accepted >= expect_spans
            };
            if done || std::time::Instant::now() > deadline {
                break;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        pump_collector(&state, i64::MAX);
        assert_eq!(state.traces.lock().unwrap().len(), 10);

        // Remote search.
        let reply = request_reply(&collector_addr, "SEARCH service=web").unwrap();
        assert_eq!(reply.lines().count(), 11, "{reply}");

        // Remote get round-trips the spans.
        let trace_id = corpus.truth.requests[0].trace_id;
        let fetched = fetch_trace(&collector_addr, trace_id).unwrap().unwrap();
        assert_eq!(
            fetched
                .lines
                .iter()
                .filter(|l| l.starts_with("SPAN "))
                .count(),
            2
        );
        assert!(fetch_trace(&collector_addr, TraceId::new(0xdead).unwrap())
            .unwrap()
            .is_none());

        // Metrics query over the wire.
        let reply = request_reply(
            &metrics_addr,
            "QUERY requests_total sum 0 99999999999999 group=service",
        )
        .unwrap();
        assert!(reply.contains("service=web\t"), "{reply}");
        let reply = request_reply(&metrics_addr, "QUERY nope avg 0 1").unwrap();
        assert!(reply.starts_with("ERR unknown metric"), "{reply}");
    }

    #[test]
    fn scrape_serving_over_tcp() {
        use crate::sdk::{ExportMode, SdkConfig};
        use crate::wire::{IdSource, TagSet};
        let mut config = SdkConfig::new("svc");
        config.export_mode = ExportMode::Pull;
        let sdk = Arc::new(Sdk::new(
            config,
            SamplingPolicy::keep_all(),
            IdSource::seeded(1),
        ));
        let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(42_000_000));
        let counter = sdk.register_counter("hits_total", TagSet::empty()).unwrap();
        sdk.counter_add(&counter, 5.0, &TagSet::empty(), clock.as_ref())
            .unwrap();

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        {
            let sdk = Arc::clone(&sdk);
            let clock = Arc::clone(&clock);
            std::thread::spawn(move || serve_scrape(listener, sdk, clock));
        }
        let mut target = TcpScrapeTarget { addr };
        let body = target.fetch().unwrap();
        assert_eq!(body, "hits_total 5 42000\n");
    }

    #[test]
    fn filter_wire_round_trip() {
        let filter = TraceFilter {
            service: Some("web".into()),
            operation: Some("op".into()),
            error: Some(true),
            min_duration_us: Some(1000),
            tag: Some(("user.id".into(), "4 2".into())),
            from_us: Some(5),
            to_us: Some(9),
        };
        let encoded = encode_search_filter(&filter);
        let parsed = parse_search_filter(encoded.split(' ')).unwrap();
        assert_eq!(parsed.service, filter.service);
        assert_eq!(parsed.tag, filter.tag);
        assert_eq!(parsed.error, filter.error);
        assert_eq!(parsed.from_us, filter.from_us);
    }

    #[test]
    fn aggregate_parsing() {
        assert_eq!(parse_aggregate("avg").unwrap(), Aggregate::Avg);
        assert_eq!(parse_aggregate("p99").unwrap(), Aggregate::Pct(99.0));
        assert_eq!(parse_aggregate("p99.9").unwrap(), Aggregate::Pct(99.9));
        assert!(parse_aggregate("median").is_err());
    }
}
