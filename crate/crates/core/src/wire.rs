//! Telemetry value types and their textual wire encodings.
//!
//! Three single-line, space-delimited, UTF-8 record formats are the canonical
//! on-disk and on-wire representation everywhere in this project:
//!
//! ```text
//! SPAN <trace_id> <span_id> <parent|-> <service> <operation> <start_us> <duration_us> <OK|ERROR> <tags>
//! LOG <trace_id> <span_id> <timestamp_us> <LEVEL> <message>
//! METRIC <name> <C|G|H> <value> <timestamp_ms> <tags>
//! ```
//!
//! Tags are comma-joined `key=value` pairs sorted by key, or `-` when empty.
//! The bytes `% , = space \n \t` are percent-encoded inside any field that can
//! carry free text. Decoding is the exact inverse of encoding on its image and
//! rejects anything encoding could not have produced, except that float values
//! are parsed permissively.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::rng::SplitMix64;

/// A line that could not be decoded; carries the reason for drop accounting.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed line: {0}")]
pub struct MalformedLine(pub String);

fn malformed(reason: impl Into<String>) -> MalformedLine {
    MalformedLine(reason.into())
}

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

/// 128-bit trace identifier, canonically 32 lowercase hex characters. Never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceId(u128);

impl TraceId {
    pub fn new(value: u128) -> Option<Self> {
        (value != 0).then_some(Self(value))
    }

    pub fn value(&self) -> u128 {
        self.0
    }

    pub fn to_hex(&self) -> String {
        format!("{:032x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, MalformedLine> {
        let v = parse_hex_exact(s, 32)?;
        TraceId::new(v).ok_or_else(|| malformed("trace id must not be zero"))
    }
}

impl fmt::Display for TraceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// 64-bit span identifier, canonically 16 lowercase hex characters. Never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpanId(u64);

impl SpanId {
    pub fn new(value: u64) -> Option<Self> {
        (value != 0).then_some(Self(value))
    }

    pub fn value(&self) -> u64 {
        self.0
    }

    pub fn to_hex(&self) -> String {
        format!("{:016x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, MalformedLine> {
        let v = parse_hex_exact(s, 16)?;
        SpanId::new(v as u64).ok_or_else(|| malformed("span id must not be zero"))
    }
}

impl fmt::Display for SpanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

fn parse_hex_exact(s: &str, width: usize) -> Result<u128, MalformedLine> {
    if s.len() != width {
        return Err(malformed(format!(
            "expected {width} hex chars, got {:?}",
            s
        )));
    }
    let mut v: u128 = 0;
    for b in s.bytes() {
        let nibble = match b {
            b'0'..=b'9' => b - b'0',
            b'a'..=b'f' => b - b'a' + 10,
            _ => return Err(malformed(format!("bad hex in {:?}", s))),
        };
        v = (v << 4) | u128::from(nibble);
    }
    Ok(v)
}

/// Generates fresh trace and span ids, either seeded (tests, simulator) or
/// from ambient entropy (servers).
#[derive(Debug, Clone)]
pub struct IdSource {
    rng: SplitMix64,
}

impl IdSource {
    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: SplitMix64::new(seed),
        }
    }

    /// Entropy-backed source for production paths. Mixes hasher randomness
    /// with a process-wide counter so two sources never collide.
    pub fn from_entropy() -> Self {
        use std::collections::hash_map::RandomState;
        use std::hash::{BuildHasher, Hasher};
        use std::sync::atomic::{AtomicU64, Ordering};
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let mut h = RandomState::new().build_hasher();
        h.write_u64(COUNTER.fetch_add(1, Ordering::Relaxed));
        Self::seeded(h.finish())
    }

    pub fn trace_id(&mut self) -> TraceId {
        loop {
            let hi = self.rng.next_u64();
            let lo = self.rng.next_u64();
            let v = (u128::from(hi) << 64) | u128::from(lo);
            if let Some(id) = TraceId::new(v) {
                return id;
            }
        }
    }

    pub fn span_id(&mut self) -> SpanId {
        loop {
            if let Some(id) = SpanId::new(self.rng.next_u64()) {
                return id;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Tag sets
// ---------------------------------------------------------------------------

/// Ordered set of `(key, value)` pairs, sorted lexicographically by key with
/// unique keys, so equal content always encodes to identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TagSet(Vec<(String, String)>);

impl TagSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Builds a canonical tag set; a repeated key keeps the last value.
    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let map: BTreeMap<String, String> = pairs
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        Self(map.into_iter().collect())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .binary_search_by(|(k, _)| k.as_str().cmp(key))
            .ok()
            .map(|i| self.0[i].1.as_str())
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.0.binary_search_by(|(k, _)| k.as_str().cmp(&key)) {
            Ok(i) => self.0[i].1 = value,
            Err(i) => self.0.insert(i, (key, value)),
        }
    }

    pub fn merged_with(&self, other: &TagSet) -> TagSet {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.insert(k, v);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Record types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpanStatus {
    Ok,
    Error,
}

impl SpanStatus {
    fn as_wire(&self) -> &'static str {
        match self {
            SpanStatus::Ok => "OK",
            SpanStatus::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LogLevel {
    Debug,
    Info,
    Warn,
    Error,
}

impl LogLevel {
    fn as_wire(&self) -> &'static str {
        match self {
            LogLevel::Debug => "DEBUG",
            LogLevel::Info => "INFO",
            LogLevel::Warn => "WARN",
            LogLevel::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Counter,
    Gauge,
    HistogramObservation,
}

impl MetricKind {
    fn as_wire(&self) -> &'static str {
        match self {
            MetricKind::Counter => "C",
            MetricKind::Gauge => "G",
            MetricKind::HistogramObservation => "H",
        }
    }
}

/// One timed operation in one service.
#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub trace_id: TraceId,
    pub span_id: SpanId,
    /// Absent for the root span of a trace.
    pub parent_span_id: Option<SpanId>,
    pub service: String,
    pub operation: String,
    /// Microseconds since the Unix epoch, as recorded by the emitting process.
    pub start_us: i64,
    pub duration_us: u64,
    pub status: SpanStatus,
    pub tags: BTreeMap<String, String>,
}

impl Span {
    pub fn end_us(&self) -> i64 {
        self.start_us + self.duration_us as i64
    }
}

/// A log record; trace correlation ids are mandatory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub trace_id: TraceId,
    pub span_id: SpanId,
    pub timestamp_us: i64,
    pub level: LogLevel,
    pub message: String,
}

/// One metric data point. Counter values are cumulative per tag set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub name: String,
    pub kind: MetricKind,
    pub value: f64,
    pub timestamp_ms: i64,
    pub tags: TagSet,
}

/// Any decoded wire record; lines are self-describing via their first token.
#[derive(Debug, Clone, PartialEq)]
pub enum WireLine {
    Span(Span),
    Log(LogRecord),
    Metric(MetricSample),
}

// ---------------------------------------------------------------------------
// Percent encoding
// ---------------------------------------------------------------------------

const RESERVED: &[u8] = b"%,= \n\t";

/// Percent-encodes the minimal reserved set `% , = space \n \t`.
pub fn encode_field(s: &str) -> String {
    const HEX: &[u8; 16] = b"0123456789ABCDEF";
    let mut out = Vec::with_capacity(s.len());
    for &b in s.as_bytes() {
        if RESERVED.contains(&b) {
            out.push(b'%');
            out.push(HEX[(b >> 4) as usize]);
            out.push(HEX[(b & 0xf) as usize]);
        } else {
            out.push(b);
        }
    }
    // Only ASCII was inserted, so the bytes remain valid UTF-8.
    String::from_utf8(out).expect("escaping preserves utf-8")
}

/// Inverse of [`encode_field`]; accepts any `%XX` escape.
pub fn decode_field(s: &str) -> Result<String, MalformedLine> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            if i + 2 >= bytes.len() {
                return Err(malformed("truncated percent escape"));
            }
            let hi = hex_val(bytes[i + 1]).ok_or_else(|| malformed("bad percent escape"))?;
            let lo = hex_val(bytes[i + 2]).ok_or_else(|| malformed("bad percent escape"))?;
            out.push((hi << 4) | lo);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| malformed("percent escape produced invalid utf-8"))
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

fn encode_tags_sorted<'a>(pairs: impl Iterator<Item = (&'a str, &'a str)>) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        if !out.is_empty() {
            out.push(',');
        }
        out.push_str(&encode_field(k));
        out.push('=');
        out.push_str(&encode_field(v));
    }
    if out.is_empty() {
        out.push('-');
    }
    out
}

fn decode_tag_field(field: &str) -> Result<Vec<(String, String)>, MalformedLine> {
    if field == "-" {
        return Ok(Vec::new());
    }
    let mut pairs = Vec::new();
    for piece in field.split(',') {
        let (k, v) = piece
            .split_once('=')
            .ok_or_else(|| malformed(format!("tag without '=': {piece:?}")))?;
        let key = decode_field(k)?;
        let value = decode_field(v)?;
        if key.is_empty() {
            return Err(malformed("empty tag key"));
        }
        if let Some((prev, _)) = pairs.last() {
            if *prev >= key {
                return Err(malformed("tag keys must be strictly sorted"));
            }
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

/// Strict unsigned integer: ASCII digits only (no `+`, no leading junk).
fn parse_u64_strict(s: &str) -> Result<u64, MalformedLine> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(format!("bad unsigned integer {s:?}")));
    }
    s.parse::<u64>()
        .map_err(|_| malformed(format!("unsigned integer out of range {s:?}")))
}

/// Strict signed integer: optional leading `-`, then digits.
fn parse_i64_strict(s: &str) -> Result<i64, MalformedLine> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(format!("bad integer {s:?}")));
    }
    s.parse::<i64>()
        .map_err(|_| malformed(format!("integer out of range {s:?}")))
}

// ---------------------------------------------------------------------------
// Span lines
// ---------------------------------------------------------------------------

pub fn encode_span(span: &Span) -> String {
    let parent = match &span.parent_span_id {
        Some(p) => p.to_hex(),
        None => "-".to_string(),
    };
    format!(
        "SPAN {} {} {} {} {} {} {} {} {}",
        span.trace_id.to_hex(),
        span.span_id.to_hex(),
        parent,
        encode_field(&span.service),
        encode_field(&span.operation),
        span.start_us,
        span.duration_us,
        span.status.as_wire(),
        encode_tags_sorted(span.tags.iter().map(|(k, v)| (k.as_str(), v.as_str()))),
    )
}

pub fn decode_span(line: &str) -> Result<Span, MalformedLine> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 10 {
        return Err(malformed(format!(
            "SPAN needs 10 fields, got {}",
            fields.len()
        )));
    }
    if fields[0] != "SPAN" {
        return Err(malformed("not a SPAN line"));
    }
    let trace_id = TraceId::from_hex(fields[1])?;
    let span_id = SpanId::from_hex(fields[2])?;
    let parent_span_id = if fields[3] == "-" {
        None
    } else {
        Some(SpanId::from_hex(fields[3])?)
    };
    if parent_span_id == Some(span_id) {
        return Err(malformed("span cannot be its own parent"));
    }
    let service = decode_field(fields[4])?;
    let operation = decode_field(fields[5])?;
    if service.is_empty() || operation.is_empty() {
        return Err(malformed("empty service or operation"));
    }
    let start_us = parse_i64_strict(fields[6])?;
    let duration_us = parse_u64_strict(fields[7])?;
    let status = match fields[8] {
        "OK" => SpanStatus::Ok,
        "ERROR" => SpanStatus::Error,
        other => return Err(malformed(format!("unknown status {other:?}"))),
    };
    let tags: BTreeMap<String, String> = decode_tag_field(fields[9])?.into_iter().collect();
    Ok(Span {
        trace_id,
        span_id,
        parent_span_id,
        service,
        operation,
        start_us,
        duration_us,
        status,
        tags,
    })
}

// ---------------------------------------------------------------------------
// Log lines
// ---------------------------------------------------------------------------

pub fn encode_log(rec: &LogRecord) -> String {
    format!(
        "LOG {} {} {} {} {}",
        rec.trace_id.to_hex(),
        rec.span_id.to_hex(),
        rec.timestamp_us,
        rec.level.as_wire(),
        encode_field(&rec.message),
    )
}

pub fn decode_log(line: &str) -> Result<LogRecord, MalformedLine> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 6 {
        return Err(malformed(format!(
            "LOG needs 6 fields, got {}",
            fields.len()
        )));
    }
    if fields[0] != "LOG" {
        return Err(malformed("not a LOG line"));
    }
    let trace_id = TraceId::from_hex(fields[1])?;
    let span_id = SpanId::from_hex(fields[2])?;
    let timestamp_us = parse_i64_strict(fields[3])?;
    let level = match fields[4] {
        "DEBUG" => LogLevel::Debug,
        "INFO" => LogLevel::Info,
        "WARN" => LogLevel::Warn,
        "ERROR" => LogLevel::Error,
        other => return Err(malformed(format!("unknown level {other:?}"))),
    };
    let message = decode_field(fields[5])?;
    Ok(LogRecord {
        trace_id,
        span_id,
        timestamp_us,
        level,
        message,
    })
}

// ---------------------------------------------------------------------------
// Metric lines
// ---------------------------------------------------------------------------

/// Metric names match `[a-z][a-z0-9_.]*`.
pub fn valid_metric_name(name: &str) -> bool {
    let mut bytes = name.bytes();
    match bytes.next() {
        Some(b'a'..=b'z') => {}
        _ => return false,
    }
    bytes.all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_' | b'.'))
}

/// Renders an `f64` as the shortest decimal that parses back to an equal
/// value; negative zero prints as `0`.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v}")
}

pub fn encode_metric(sample: &MetricSample) -> String {
    format!(
        "METRIC {} {} {} {} {}",
        sample.name,
        sample.kind.as_wire(),
        format_value(sample.value),
        sample.timestamp_ms,
        encode_tags_sorted(sample.tags.iter()),
    )
}

pub fn decode_metric(line: &str) -> Result<MetricSample, MalformedLine> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 6 {
        return Err(malformed(format!(
            "METRIC needs 6 fields, got {}",
            fields.len()
        )));
    }
    if fields[0] != "METRIC" {
        return Err(malformed("not a METRIC line"));
    }
    let name = fields[1].to_string();
    if !valid_metric_name(&name) {
        return Err(malformed(format!("bad metric name {name:?}")));
    }
    let kind = match fields[2] {
        "C" => MetricKind::Counter,
        "G" => MetricKind::Gauge,
        "H" => MetricKind::HistogramObservation,
        other => return Err(malformed(format!("unknown metric kind {other:?}"))),
    };
    let value: f64 = fields[3]
        .parse()
        .map_err(|_| malformed(format!("bad value {:?}", fields[3])))?;
    let timestamp_ms = parse_i64_strict(fields[4])?;
    let pairs = decode_tag_field(fields[5])?;
    for (k, _) in &pairs {
        if k.starts_with("__") && k != "__overflow" {
            return Err(malformed(format!("reserved tag key {k:?}")));
        }
    }
    Ok(MetricSample {
        name,
        kind,
        value,
        timestamp_ms,
        tags: TagSet::from_pairs(pairs),
    })
}

/// Decodes any of the three record kinds by its leading token.
pub fn decode_line(line: &str) -> Result<WireLine, MalformedLine> {
    match line.split(' ').next() {
        Some("SPAN") => decode_span(line).map(WireLine::Span),
        Some("LOG") => decode_log(line).map(WireLine::Log),
        Some("METRIC") => decode_metric(line).map(WireLine::Metric),
        _ => Err(malformed("unknown record type")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_span() -> Span {
        Span {
            trace_id: TraceId::new(0xabc1).unwrap(),
            span_id: SpanId::new(0x17).unwrap(),
            parent_span_id: None,
            service: "checkout".into(),
            operation: "place_order".into(),
            start_us: 1_700_000_000_000_000,
            duration_us: 1500,
            status: SpanStatus::Ok,
            tags: BTreeMap::new(),
        }
    }

    #[test]
    fn root_span_encoding_shape() {
        let line = encode_span(&sample_span());
        assert_eq!(
            line,
            "SPAN 0000000000000000000000000000abc1 0000000000000017 - checkout place_order 1700000000000000 1500 OK -"
        );
    }

    #[test]
    fn tag_value_with_space_is_escaped() {
        let mut span = sample_span();
        span.tags.insert("k".into(), "a b".into());
        let line = encode_span(&span);
        assert!(line.ends_with("OK k=a%20b"), "{line}");
        assert_eq!(decode_span(&line).unwrap(), span);
    }

    #[test]
    fn span_round_trip_seeded_corpus() {
        let mut rng = SplitMix64::new(2024);
        let mut ids = IdSource::seeded(11);
        for i in 0..1000 {
            let mut tags = BTreeMap::new();
            for t in 0..(i % 4) {
                tags.insert(
                    format!("key{t}"),
                    format!("v{} sp,=%\n{}", rng.next_u64() % 100, t),
                );
            }
            let span = Span {
                trace_id: ids.trace_id(),
                span_id: ids.span_id(),
                parent_span_id: (i % 3 == 0).then(|| ids.span_id()),
                service: format!("svc{}", i % 5),
                operation: format!("op{}", i % 7),
                start_us: rng.next_u64() as i64 % 2_000_000_000_000,
                duration_us: rng.next_u64() % 10_000_000,
                status: if i % 10 == 0 {
                    SpanStatus::Error
                } else {
                    SpanStatus::Ok
                },
                tags,
            };
            let line = encode_span(&span);
            assert_eq!(decode_span(&line).unwrap(), span, "line: {line}");
        }
    }

    #[test]
    fn bad_hex_rejected() {
        let line = "SPAN xyz 0000000000000017 - checkout place_order 1 1 OK -";
        assert!(decode_span(line).is_err());
    }

    #[test]
    fn negative_duration_rejected() {
        let line = encode_span(&sample_span()).replace(" 1500 ", " -5 ");
        assert!(decode_span(&line).is_err());
    }

    #[test]
    fn plus_prefixed_duration_rejected() {
        let line = encode_span(&sample_span()).replace(" 1500 ", " +5 ");
        assert!(decode_span(&line).is_err());
    }

    #[test]
    fn zero_trace_id_rejected() {
        let line = format!("SPAN {} 0000000000000017 - a b 0 1 OK -", "0".repeat(32));
        assert!(decode_span(&line).is_err());
    }

    #[test]
    fn uppercase_hex_rejected() {
        let line = encode_span(&sample_span());
        let upper = line.replacen("abc1", "ABC1", 1);
        assert!(decode_span(&upper).is_err());
    }

    #[test]
    fn self_parent_rejected() {
        let line = "SPAN 000000000000000000000000000000000000000000000000000000000000abc1 \
                    0000000000000017 0000000000000017 a b 0 1 OK -";
        assert!(decode_span(line).is_err());
    }

    #[test]
    fn unsorted_tags_rejected() {
        let line = "SPAN 000000000000000000000000000000000000000000000000000000000000abc1 \
                    0000000000000017 - a b 0 1 OK b=1,a=2";
        assert!(decode_span(line).is_err());
    }

    #[test]
    fn metric_counter_example() {
        let sample = MetricSample {
            name: "http_requests_total".into(),
            kind: MetricKind::Counter,
            value: 3.0,
            timestamp_ms: 1_700_000_000_000,
            tags: TagSet::from_pairs([("service", "checkout")]),
        };
        assert_eq!(
            encode_metric(&sample),
            "METRIC http_requests_total C 3 1700000000000 service=checkout"
        );
        assert_eq!(decode_metric(&encode_metric(&sample)).unwrap(), sample);
    }

    #[test]
    fn metric_round_trip_seeded_corpus() {
        let mut rng = SplitMix64::new(77);
        for i in 0..1000 {
            let value = match i % 4 {
                0 => rng.next_u64() as f64,
                1 => rng.next_f64() * 1e9 - 5e8,
                2 => -(rng.next_f64()) * 1e-6,
                _ => (rng.next_u64() % 100) as f64 / 8.0,
            };
            let sample = MetricSample {
                name: format!("metric_{}.x", i % 9),
                kind: match i % 3 {
                    0 => MetricKind::Counter,
                    1 => MetricKind::Gauge,
                    _ => MetricKind::HistogramObservation,
                },
                value,
                timestamp_ms: rng.next_u64() as i64 % 2_000_000_000_000,
                tags: TagSet::from_pairs([("service", format!("s{}", i % 3))]),
            };
            let line = encode_metric(&sample);
            assert_eq!(decode_metric(&line).unwrap(), sample, "line: {line}");
        }
    }

    #[test]
    fn unknown_kind_letter_rejected() {
        assert!(decode_metric("METRIC a X 1 0 -").is_err());
    }

    #[test]
    fn reserved_tag_prefix_rejected_except_overflow() {
        assert!(decode_metric("METRIC a C 1 0 __internal=x").is_err());
        assert!(decode_metric("METRIC a C 1 0 __overflow=true").is_ok());
    }

    #[test]
    fn log_round_trip_with_newline() {
        let rec = LogRecord {
            trace_id: TraceId::new(5).unwrap(),
            span_id: SpanId::new(6).unwrap(),
            timestamp_us: 1_700_000_000_000_123,
            level: LogLevel::Warn,
            message: "first line\nsecond line".into(),
        };
        let line = encode_log(&rec);
        assert!(line.contains("%0A"), "{line}");
        assert_eq!(decode_log(&line).unwrap(), rec);
    }

    #[test]
    fn log_missing_field_rejected() {
        assert!(decode_log("LOG 00000000000000000000000000000005 1700 INFO hi").is_err());
    }

    #[test]
    fn tagset_canonical_ordering() {
        let a = TagSet::from_pairs([("b", "2"), ("a", "1")]);
        let b = TagSet::from_pairs([("a", "1"), ("b", "2")]);
        assert_eq!(a, b);
        assert_eq!(encode_tags_sorted(a.iter()), encode_tags_sorted(b.iter()));
    }

    #[test]
    fn decode_line_routes_by_prefix() {
        let span_line = encode_span(&sample_span());
        assert!(matches!(decode_line(&span_line), Ok(WireLine::Span(_))));
        assert!(decode_line("BOGUS x").is_err());
        assert!(decode_line("").is_err());
    }
}
