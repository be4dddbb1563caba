//! In-service instrumentation library: starts and finishes spans, emits
//! correlated logs, hosts counter/gauge/histogram instruments, and forwards
//! telemetry through a bounded export buffer.
//!
//! Instrumentation never blocks or fails the caller: every overload or sink
//! failure degrades to a counted drop.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use thiserror::Error;

use crate::clock::Clock;
use crate::context::{new_root_context_deciding, TraceContext};
use crate::sampling::{head_decide, SamplingPolicy};
use crate::wire::{
    encode_log, encode_metric, encode_span, format_value, IdSource, LogLevel, LogRecord,
    MetricKind, MetricSample, Span, SpanId, SpanStatus, TagSet, TraceId,
};

/// Default histogram bucket upper bounds, in milliseconds. `+inf` is implicit.
pub const DEFAULT_HISTOGRAM_BOUNDS_MS: [f64; 10] = [
    5.0, 10.0, 25.0, 50.0, 100.0, 250.0, 500.0, 1000.0, 2500.0, 5000.0,
];

pub const DEFAULT_BUFFER_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportMode {
    /// Instruments are pushed as METRIC lines through the export buffer.
    Push,
    /// Instruments are served to a scraping metrics service; only spans and
    /// logs go through the buffer.
    Pull,
}

/// Per-service SDK configuration. The resource keys end up as span tags
/// (`service.version`, `instance.id`, `node.label`) and prefab metric tags.
#[derive(Debug, Clone)]
pub struct SdkConfig {
    pub service_name: String,
    pub service_version: String,
    pub instance_id: String,
    pub node_label: String,
    pub export_mode: ExportMode,
    pub buffer_capacity: usize,
    pub histogram_bounds_ms: Vec<f64>,
}

impl SdkConfig {
    pub fn new(service_name: impl Into<String>) -> Self {
        Self {
            service_name: service_name.into(),
            service_version: String::new(),
            instance_id: String::new(),
            node_label: String::new(),
            export_mode: ExportMode::Push,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            histogram_bounds_ms: DEFAULT_HISTOGRAM_BOUNDS_MS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SdkError {
    #[error("instrument {0:?} already registered with a different kind")]
    KindMismatch(String),
    #[error("counter delta must be >= 0")]
    NegativeCounterDelta,
    #[error("instrument {0:?} is not registered")]
    UnknownInstrument(String),
}

// ---------------------------------------------------------------------------
// Spans
// ---------------------------------------------------------------------------

/// A span in progress, owned by one logical task. Finishing consumes it, so a
/// double finish is unrepresentable.
#[derive(Debug)]
pub struct ActiveSpan {
    trace_id: TraceId,
    span_id: SpanId,
    parent_span_id: Option<SpanId>,
    sampled: bool,
    operation: String,
    start_us: i64,
    tags: BTreeMap<String, String>,
}

impl ActiveSpan {
    pub fn trace_id(&self) -> TraceId {
        self.trace_id
    }

    pub fn span_id(&self) -> SpanId {
        self.span_id
    }

    pub fn sampled(&self) -> bool {
        self.sampled
    }

    pub fn set_tag(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.tags.insert(key.into(), value.into());
    }
}

// ---------------------------------------------------------------------------
// Instruments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstrumentKind {
    Counter,
    Gauge,
    Histogram,
}

/// Handle to a registered instrument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instrument {
    pub name: String,
    pub kind: InstrumentKind,
    pub static_tags: TagSet,
}

#[derive(Debug, Clone)]
struct HistogramSeries {
    bucket_counts: Vec<u64>,
    sum: f64,
    count: u64,
}

#[derive(Debug)]
enum InstrumentData {
    Counter(BTreeMap<TagSet, f64>),
    Gauge(BTreeMap<TagSet, f64>),
    Histogram {
        bounds_ms: Vec<f64>,
        series: BTreeMap<TagSet, HistogramSeries>,
    },
}

#[derive(Debug)]
struct RegisteredInstrument {
    static_tags: TagSet,
    data: InstrumentData,
}

#[derive(Debug, Default)]
struct Registry {
    instruments: BTreeMap<String, RegisteredInstrument>,
}

// ---------------------------------------------------------------------------
// Export buffer
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct BufferInner {
    queue: VecDeque<(String, bool)>,
    dropped: u64,
}

/// Bounded queue of encoded lines. Enqueueing never blocks; overflow drops
/// the new line and counts it.
#[derive(Debug)]
pub struct ExportBuffer {
    capacity: usize,
    inner: Mutex<BufferInner>,
}

impl ExportBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            inner: Mutex::new(BufferInner {
                queue: VecDeque::new(),
                dropped: 0,
            }),
        }
    }

    pub fn enqueue(&self, line: String) {
        let mut inner = self.inner.lock().unwrap();
        if inner.queue.len() >= self.capacity {
            inner.dropped += 1;
        } else {
            inner.queue.push_back((line, false));
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.inner.lock().unwrap().dropped
    }

    /// Takes every queued line out, in FIFO order.
    pub fn drain(&self) -> Vec<String> {
        let mut inner = self.inner.lock().unwrap();
        inner.queue.drain(..).map(|(line, _)| line).collect()
    }
}

/// Destination for pushed lines.
pub trait LineSink {
    fn send_lines(&mut self, lines: &[String]) -> Result<(), SinkUnavailable>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sink unavailable: {0}")]
pub struct SinkUnavailable(pub String);

/// Collects pushed lines in memory; the simulator's sink.
#[derive(Debug, Default)]
pub struct VecSink(pub Vec<String>);

impl LineSink for VecSink {
    fn send_lines(&mut self, lines: &[String]) -> Result<(), SinkUnavailable> {
        self.0.extend_from_slice(lines);
        Ok(())
    }
}

/// Drains up to `batch_size` lines into the sink in FIFO order. On failure
/// lines are re-queued once; a line that fails twice is dropped and counted.
/// The caller is never blocked.
pub fn flush_push(
    buffer: &ExportBuffer,
    sink: &mut dyn LineSink,
    batch_size: usize,
) -> Result<usize, SinkUnavailable> {
    let batch: Vec<(String, bool)> = {
        let mut inner = buffer.inner.lock().unwrap();
        let n = batch_size.min(inner.queue.len());
        inner.queue.drain(..n).collect()
    };
    if batch.is_empty() {
        return Ok(0);
    }
    let lines: Vec<String> = batch.iter().map(|(l, _)| l.clone()).collect();
    match sink.send_lines(&lines) {
        Ok(()) => Ok(lines.len()),
        Err(e) => {
            let mut inner = buffer.inner.lock().unwrap();
            for (line, retried) in batch.into_iter().rev() {
                if retried {
                    inner.dropped += 1;
                } else {
                    inner.queue.push_front((line, true));
                }
            }
            Err(e)
        }
    }
}

// ---------------------------------------------------------------------------
// The SDK
// ---------------------------------------------------------------------------

/// One per service instance. Internally synchronized: spans, logs and metric
/// updates may come from many tasks at once.
pub struct Sdk {
    config: SdkConfig,
    policy: SamplingPolicy,
    ids: Mutex<IdSource>,
    registry: Mutex<Registry>,
    buffer: ExportBuffer,
}

impl Sdk {
    pub fn new(config: SdkConfig, policy: SamplingPolicy, ids: IdSource) -> Self {
        let capacity = config.buffer_capacity;
        Self {
            config,
            policy,
            ids: Mutex::new(ids),
            registry: Mutex::new(Registry::default()),
            buffer: ExportBuffer::new(capacity),
        }
    }

    pub fn config(&self) -> &SdkConfig {
        &self.config
    }

    pub fn buffer(&self) -> &ExportBuffer {
        &self.buffer
    }

    /// Starts a span. An absent parent starts a new root trace, making the
    /// head-sampling decision for it; a present parent is continued and its
    /// sampled flag inherited. Returns the active span and the context to
    /// inject into downstream calls.
    pub fn start_span(
        &self,
        parent: Option<TraceContext>,
        operation: &str,
        clock: &dyn Clock,
    ) -> (ActiveSpan, TraceContext) {
        debug_assert!(!operation.is_empty());
        let mut ids = self.ids.lock().unwrap();
        let (trace_id, span_id, parent_span_id, sampled) = match parent {
            Some(ctx) => {
                let span_id = ids.span_id();
                (ctx.trace_id, span_id, Some(ctx.parent_span_id), ctx.sampled)
            }
            None => {
                let ctx = new_root_context_deciding(&mut ids, |tid| {
                    head_decide(&self.policy, &self.config.service_name, tid)
                });
                (ctx.trace_id, ctx.parent_span_id, None, ctx.sampled)
            }
        };
        drop(ids);
        let span = ActiveSpan {
            trace_id,
            span_id,
            parent_span_id,
            sampled,
            operation: operation.to_string(),
            start_us: clock.now_us(),
            tags: BTreeMap::new(),
        };
        let downstream = TraceContext {
            trace_id,
            parent_span_id: span_id,
            sampled,
        };
        (span, downstream)
    }

    /// Finishes a span: clamps the duration at zero if the clock went
    /// backwards (tagging `clock.anomaly=true`), merges the configured
    /// resource tags, and enqueues the encoded line when the trace is
    /// head-sampled.
    pub fn finish_span(&self, span: ActiveSpan, status: SpanStatus, clock: &dyn Clock) -> Span {
        let now = clock.now_us();
        let mut tags = span.tags;
        let duration_us = if now < span.start_us {
            tags.insert("clock.anomaly".to_string(), "true".to_string());
            0
        } else {
            (now - span.start_us) as u64
        };
        for (key, value) in [
            ("service.version", &self.config.service_version),
            ("instance.id", &self.config.instance_id),
            ("node.label", &self.config.node_label),
        ] {
            if !value.is_empty() {
                tags.entry(key.to_string()).or_insert_with(|| value.clone());
            }
        }
        let finished = Span {
            trace_id: span.trace_id,
            span_id: span.span_id,
            parent_span_id: span.parent_span_id,
            service: self.config.service_name.clone(),
            operation: span.operation,
            start_us: span.start_us,
            duration_us,
            status,
            tags,
        };
        if span.sampled {
            self.buffer.enqueue(encode_span(&finished));
        }
        finished
    }

    /// Emits a log correlated to the span; follows the span's sampled flag.
    pub fn log(&self, span: &ActiveSpan, level: LogLevel, message: &str, clock: &dyn Clock) {
        if !span.sampled {
            return;
        }
        let rec = LogRecord {
            trace_id: span.trace_id,
            span_id: span.span_id,
            timestamp_us: clock.now_us(),
            level,
            message: message.to_string(),
        };
        self.buffer.enqueue(encode_log(&rec));
    }

    // -- instruments --------------------------------------------------------

    pub fn register_counter(
        &self,
        name: &str,
        static_tags: TagSet,
    ) -> Result<Instrument, SdkError> {
        self.register(name, InstrumentKind::Counter, static_tags)
    }

    pub fn register_gauge(&self, name: &str, static_tags: TagSet) -> Result<Instrument, SdkError> {
        self.register(name, InstrumentKind::Gauge, static_tags)
    }

    pub fn register_histogram(
        &self,
        name: &str,
        static_tags: TagSet,
    ) -> Result<Instrument, SdkError> {
        self.register(name, InstrumentKind::Histogram, static_tags)
    }

    fn register(
        &self,
        name: &str,
        kind: InstrumentKind,
        static_tags: TagSet,
    ) -> Result<Instrument, SdkError> {
        let mut registry = self.registry.lock().unwrap();
        if let Some(existing) = registry.instruments.get(name) {
            let same_kind = matches!(
                (&existing.data, kind),
                (InstrumentData::Counter(_), InstrumentKind::Counter)
                    | (InstrumentData::Gauge(_), InstrumentKind::Gauge)
                    | (InstrumentData::Histogram { .. }, InstrumentKind::Histogram)
            );
            if !same_kind {
                return Err(SdkError::KindMismatch(name.to_string()));
            }
            return Ok(Instrument {
                name: name.to_string(),
                kind,
                static_tags: existing.static_tags.clone(),
            });
        }
        let data = match kind {
            InstrumentKind::Counter => InstrumentData::Counter(BTreeMap::new()),
            InstrumentKind::Gauge => InstrumentData::Gauge(BTreeMap::new()),
            InstrumentKind::Histogram => InstrumentData::Histogram {
                bounds_ms: self.config.histogram_bounds_ms.clone(),
                series: BTreeMap::new(),
            },
        };
        registry.instruments.insert(
            name.to_string(),
            RegisteredInstrument {
                static_tags: static_tags.clone(),
                data,
            },
        );
        Ok(Instrument {
            name: name.to_string(),
            kind,
            static_tags,
        })
    }

    /// Adds to a cumulative counter; the delta must be non-negative.
    pub fn counter_add(
        &self,
        instr: &Instrument,
        delta: f64,
        tags: &TagSet,
        _clock: &dyn Clock,
    ) -> Result<(), SdkError> {
        if delta < 0.0 {
            return Err(SdkError::NegativeCounterDelta);
        }
        let mut registry = self.registry.lock().unwrap();
        let reg = registry
            .instruments
            .get_mut(&instr.name)
            .ok_or_else(|| SdkError::UnknownInstrument(instr.name.clone()))?;
        let full = reg.static_tags.merged_with(tags);
        match &mut reg.data {
            InstrumentData::Counter(values) => {
                *values.entry(full).or_insert(0.0) += delta;
                Ok(())
            }
            _ => Err(SdkError::KindMismatch(instr.name.clone())),
        }
    }

    /// Stores the last value of a gauge.
    pub fn gauge_set(
        &self,
        instr: &Instrument,
        value: f64,
        tags: &TagSet,
        _clock: &dyn Clock,
    ) -> Result<(), SdkError> {
        let mut registry = self.registry.lock().unwrap();
        let reg = registry
            .instruments
            .get_mut(&instr.name)
            .ok_or_else(|| SdkError::UnknownInstrument(instr.name.clone()))?;
        let full = reg.static_tags.merged_with(tags);
        match &mut reg.data {
            InstrumentData::Gauge(values) => {
                values.insert(full, value);
                Ok(())
            }
            _ => Err(SdkError::KindMismatch(instr.name.clone())),
        }
    }

    /// Records one observation: increments the matching bucket and the
    /// cumulative sum/count. In push mode the raw observation is also
    /// enqueued as an `H` metric line.
    pub fn histogram_observe(
        &self,
        instr: &Instrument,
        value: f64,
        tags: &TagSet,
        clock: &dyn Clock,
    ) -> Result<(), SdkError> {
        let mut registry = self.registry.lock().unwrap();
        let reg = registry
            .instruments
            .get_mut(&instr.name)
            .ok_or_else(|| SdkError::UnknownInstrument(instr.name.clone()))?;
        let full = reg.static_tags.merged_with(tags);
        match &mut reg.data {
            InstrumentData::Histogram { bounds_ms, series } => {
                let n_buckets = bounds_ms.len() + 1;
                let entry = series
                    .entry(full.clone())
                    .or_insert_with(|| HistogramSeries {
                        bucket_counts: vec![0; n_buckets],
                        sum: 0.0,
                        count: 0,
                    });
                let idx = bounds_ms
                    .iter()
                    .position(|b| value <= *b)
                    .unwrap_or(bounds_ms.len());
                entry.bucket_counts[idx] += 1;
                entry.sum += value;
                entry.count += 1;
            }
            _ => return Err(SdkError::KindMismatch(instr.name.clone())),
        }
        drop(registry);
        if self.config.export_mode == ExportMode::Push {
            let sample = MetricSample {
                name: instr.name.clone(),
                kind: MetricKind::HistogramObservation,
                value,
                timestamp_ms: clock.now_ms(),
                tags: instr.static_tags.merged_with(tags),
            };
            self.buffer.enqueue(encode_metric(&sample));
        }
        Ok(())
    }

    /// Deterministic exposition body for the pull model: one line per series,
    /// `name{k="v",...} value timestamp`, sorted by (name, tags). Counters
    /// render cumulative values; histograms render `_bucket` series with an
    /// `le` tag plus `_sum` and `_count`.
    pub fn expose_scrape(&self, clock: &dyn Clock) -> String {
        let registry = self.registry.lock().unwrap();
        let ts = clock.now_ms();
        let mut lines: Vec<String> = Vec::new();
        for (name, reg) in &registry.instruments {
            match &reg.data {
                InstrumentData::Counter(values) | InstrumentData::Gauge(values) => {
                    for (tags, value) in values {
                        lines.push(exposition_line(name, tags, *value, ts));
                    }
                }
                InstrumentData::Histogram { bounds_ms, series } => {
                    for (tags, h) in series {
                        let mut cumulative = 0u64;
                        for (i, count) in h.bucket_counts.iter().enumerate() {
                            cumulative += count;
                            let le = if i < bounds_ms.len() {
                                format_value(bounds_ms[i])
                            } else {
                                "+inf".to_string()
                            };
                            let mut with_le = tags.clone();
                            with_le.insert("le", le);
                            lines.push(exposition_line(
                                &format!("{name}_bucket"),
                                &with_le,
                                cumulative as f64,
                                ts,
                            ));
                        }
                        lines.push(exposition_line(&format!("{name}_sum"), tags, h.sum, ts));
                        lines.push(exposition_line(
                            &format!("{name}_count"),
                            tags,
                            h.count as f64,
                            ts,
                        ));
                    }
                }
            }
        }
        let mut body = lines.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        body
    }

    /// Current cumulative value of a counter series, if any (test hook and
    /// conservation checks).
    pub fn counter_value(&self, name: &str, tags: &TagSet) -> Option<f64> {
        let registry = self.registry.lock().unwrap();
        match &registry.instruments.get(name)?.data {
            InstrumentData::Counter(values) => values.get(tags).copied(),
            _ => None,
        }
    }

    /// Enqueues one cumulative METRIC line per counter/gauge series, used by
    /// the push model's periodic exporter tick. Histogram observations are
    /// already pushed at observe time.
    pub fn snapshot_metrics(&self, clock: &dyn Clock) {
        if self.config.export_mode != ExportMode::Push {
            return;
        }
        let registry = self.registry.lock().unwrap();
        let ts = clock.now_ms();
        let mut samples: Vec<MetricSample> = Vec::new();
        for (name, reg) in &registry.instruments {
            match &reg.data {
                InstrumentData::Counter(values) => {
                    for (tags, value) in values {
                        samples.push(MetricSample {
                            name: name.clone(),
                            kind: MetricKind::Counter,
                            value: *value,
                            timestamp_ms: ts,
                            tags: tags.clone(),
                        });
                    }
                }
                InstrumentData::Gauge(values) => {
                    for (tags, value) in values {
                        samples.push(MetricSample {
                            name: name.clone(),
                            kind: MetricKind::Gauge,
                            value: *value,
                            timestamp_ms: ts,
                            tags: tags.clone(),
                        });
                    }
                }
                InstrumentData::Histogram { .. } => {}
            }
        }
        drop(registry);
        for sample in samples {
            self.buffer.enqueue(encode_metric(&sample));
        }
    }
}

fn exposition_line(name: &str, tags: &TagSet, value: f64, ts_ms: i64) -> String {
    let mut line = String::from(name);
    if !tags.is_empty() {
        line.push('{');
        let mut first = true;
        for (k, v) in tags.iter() {
            if !first {
                line.push(',');
            }
            first = false;
            line.push_str(k);
            line.push_str("=\"");
            line.push_str(
                &v.replace('\\', "\\\\")
                    .replace('"', "\\\"")
                    .replace('\n', "\\n"),
            );
            line.push('"');
        }
        line.push('}');
    }
    line.push(' ');
    line.push_str(&format_value(value));
    line.push(' ');
    line.push_str(&ts_ms.to_string());
    line
}

// ---------------------------------------------------------------------------
// RED prefab
// ---------------------------------------------------------------------------

/// The recommended per-service signal bundle: request counter, error counter
/// and a duration histogram, all tagged with the service and node. One call
/// per finished operation keeps the three in lockstep.
pub struct RedInstruments {
    pub requests: Instrument,
    pub errors: Instrument,
    pub duration_ms: Instrument,
}

impl Sdk {
    pub fn red_instruments(&self) -> Result<RedInstruments, SdkError> {
        let mut static_tags = TagSet::from_pairs([("service", self.config.service_name.clone())]);
        if !self.config.node_label.is_empty() {
            static_tags.insert("node.label", self.config.node_label.clone());
        }
        Ok(RedInstruments {
            requests: self.register_counter("requests_total", static_tags.clone())?,
            errors: self.register_counter("errors_total", static_tags.clone())?,
            duration_ms: self.register_histogram("request_duration_ms", static_tags)?,
        })
    }

    /// Records one finished operation into the RED bundle.
    pub fn record_red(
        &self,
        red: &RedInstruments,
        operation: &str,
        status: SpanStatus,
        duration_us: u64,
        clock: &dyn Clock,
    ) -> Result<(), SdkError> {
        let tags = TagSet::from_pairs([("operation", operation)]);
        self.counter_add(&red.requests, 1.0, &tags, clock)?;
        if status == SpanStatus::Error {
            self.counter_add(&red.errors, 1.0, &tags, clock)?;
        }
        self.histogram_observe(&red.duration_ms, duration_us as f64 / 1000.0, &tags, clock)?;
        Ok(())
    }
}
