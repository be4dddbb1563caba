//! Trace context creation and propagation across service boundaries.
//!
//! The context travels in a plain string map ("carrier") under three keys:
//! `trace-id` (32 hex), `parent-span-id` (16 hex) and `sampled` (`0`|`1`).
//! A carrier with none of the keys means "start a new root"; a carrier with
//! some-but-not-all keys, or unparsable values, is malformed and the caller
//! falls back to a new root — monitoring must never fail the business path.

use std::collections::BTreeMap;

use crate::wire::{IdSource, SpanId, TraceId};

pub const TRACE_ID_KEY: &str = "trace-id";
pub const PARENT_SPAN_ID_KEY: &str = "parent-span-id";
pub const SAMPLED_KEY: &str = "sampled";

/// Immutable trace context. `parent_span_id` is the caller's current span;
/// `sampled` is the head-sampling decision, sticky once false.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceContext {
    pub trace_id: TraceId,
    pub parent_span_id: SpanId,
    pub sampled: bool,
}

/// Starts a fresh trace: new trace id, a fresh root span id, and the given
/// head decision.
pub fn new_root_context(ids: &mut IdSource, head_decision: bool) -> TraceContext {
    TraceContext {
        trace_id: ids.trace_id(),
        parent_span_id: ids.span_id(),
        sampled: head_decision,
    }
}

/// Like [`new_root_context`] but the head decision may depend on the freshly
/// generated trace id (hash-based head sampling needs the id first).
pub fn new_root_context_deciding(
    ids: &mut IdSource,
    decide: impl FnOnce(&TraceId) -> bool,
) -> TraceContext {
    let trace_id = ids.trace_id();
    let sampled = decide(&trace_id);
    TraceContext {
        trace_id,
        parent_span_id: ids.span_id(),
        sampled,
    }
}

/// Writes the three context keys into the carrier, leaving other keys alone.
pub fn inject(ctx: &TraceContext, carrier: &mut BTreeMap<String, String>) {
    carrier.insert(TRACE_ID_KEY.to_string(), ctx.trace_id.to_hex());
    carrier.insert(PARENT_SPAN_ID_KEY.to_string(), ctx.parent_span_id.to_hex());
    carrier.insert(
        SAMPLED_KEY.to_string(),
        if ctx.sampled { "1" } else { "0" }.to_string(),
    );
}

/// Result of reading a carrier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extraction {
    /// All three keys present and valid.
    Context(TraceContext),
    /// No context keys at all: the caller is the first service and must start
    /// a new root.
    Absent,
    /// Keys partially present or unparsable; the caller should log the reason
    /// and start a new root.
    Malformed(String),
}

pub fn extract(carrier: &BTreeMap<String, String>) -> Extraction {
    let trace = carrier.get(TRACE_ID_KEY);
    let parent = carrier.get(PARENT_SPAN_ID_KEY);
    let sampled = carrier.get(SAMPLED_KEY);
    match (trace, parent, sampled) {
        (None, None, None) => Extraction::Absent,
        (Some(t), Some(p), Some(s)) => {
            let trace_id = match TraceId::from_hex(t) {
                Ok(id) => id,
                Err(e) => return Extraction::Malformed(format!("trace-id: {e}")),
            };
            let parent_span_id = match SpanId::from_hex(p) {
                Ok(id) => id,
                Err(e) => return Extraction::Malformed(format!("parent-span-id: {e}")),
            };
            let sampled = match s.as_str() {
                "1" => true,
                "0" => false,
                other => {
                    return Extraction::Malformed(format!("sampled must be 0 or 1, got {other:?}"))
                }
            };
            Extraction::Context(TraceContext {
                trace_id,
                parent_span_id,
                sampled,
            })
        }
        _ => Extraction::Malformed("context keys partially present".to_string()),
    }
}
