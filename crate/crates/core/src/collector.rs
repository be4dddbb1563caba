//! The central tracing service: ingests span/log lines, groups them by trace
//! id, assembles execution trace trees, corrects clock skew using parent
//! links, and stores completed traces for querying.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::wire::{decode_line, LogRecord, Span, SpanId, SpanStatus, TraceId, WireLine};

/// Completion policy: a pending trace is released once it has been idle for
/// `idle_timeout_us` or alive for `max_wait_us`, whichever comes first.
#[derive(Debug, Clone)]
pub struct CollectorConfig {
    pub idle_timeout_us: i64,
    pub max_wait_us: i64,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        Self {
            idle_timeout_us: 5_000_000,
            max_wait_us: 30_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingest {
    Accepted,
    Dropped(DropReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Malformed,
    DuplicateSpan,
    /// METRIC and other non-trace records do not belong here.
    NotTraceData,
}

/// Counters kept by the collector; drops are counted, never silent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub spans_accepted: u64,
    pub logs_accepted: u64,
    pub malformed: u64,
    pub duplicates: u64,
    pub not_trace_data: u64,
}

#[derive(Debug)]
struct PendingTrace {
    spans: Vec<Span>,
    span_ids: HashSet<SpanId>,
    logs: Vec<LogRecord>,
    flags: BTreeSet<Anomaly>,
    created_us: i64,
    last_arrival_us: i64,
}

/// Raw material for one trace, released by the completion policy.
#[derive(Debug)]
pub struct RawTrace {
    pub trace_id: TraceId,
    pub spans: Vec<Span>,
    pub logs: Vec<LogRecord>,
    pub flags: BTreeSet<Anomaly>,
}

/// Groups incoming lines into pending traces.
#[derive(Debug, Default)]
pub struct Collector {
    config: CollectorConfig,
    pending: HashMap<TraceId, PendingTrace>,
    pub stats: IngestStats,
}

impl Collector {
    pub fn new(config: CollectorConfig) -> Self {
        Self {
            config,
            pending: HashMap::new(),
            stats: IngestStats::default(),
        }
    }

    /// Routes one wire line to its pending trace. Fire-and-forget: the sender
    /// never sees an error, but every drop is counted.
    pub fn ingest(&mut self, line: &str, arrival_us: i64) -> Ingest {
        match decode_line(line) {
            Ok(WireLine::Span(span)) => {
                let entry = self
                    .pending
                    .entry(span.trace_id)
                    .or_insert_with(|| PendingTrace {
                        spans: Vec::new(),
                        span_ids: HashSet::new(),
                        logs: Vec::new(),
                        flags: BTreeSet::new(),
                        created_us: arrival_us,
                        last_arrival_us: arrival_us,
                    });
                entry.last_arrival_us = arrival_us;
                if !entry.span_ids.insert(span.span_id) {
                    entry.flags.insert(Anomaly::DuplicateSpanId);
                    self.stats.duplicates += 1;
                    return Ingest::Dropped(DropReason::DuplicateSpan);
                }
                entry.spans.push(span);
                self.stats.spans_accepted += 1;
                Ingest::Accepted
            }
            Ok(WireLine::Log(log)) => {
                let entry = self
                    .pending
                    .entry(log.trace_id)
                    .or_insert_with(|| PendingTrace {
                        spans: Vec::new(),
                        span_ids: HashSet::new(),
                        logs: Vec::new(),
                        flags: BTreeSet::new(),
                        created_us: arrival_us,
                        last_arrival_us: arrival_us,
                    });
                entry.last_arrival_us = arrival_us;
                entry.logs.push(log);
                self.stats.logs_accepted += 1;
                Ingest::Accepted
            }
            Ok(WireLine::Metric(_)) => {
                self.stats.not_trace_data += 1;
                Ingest::Dropped(DropReason::NotTraceData)
            }
            Err(_) => {
                self.stats.malformed += 1;
                Ingest::Dropped(DropReason::Malformed)
            }
        }
    }

    /// Releases traces that are idle or too old. Released traces leave the
    /// pending table.
    pub fn complete_pending(&mut self, now_us: i64) -> Vec<RawTrace> {
        let mut ready: Vec<TraceId> = self
            .pending
            .iter()
            .filter(|(_, p)| {
                now_us - p.last_arrival_us >= self.config.idle_timeout_us
                    || now_us - p.created_us >= self.config.max_wait_us
            })
            .map(|(id, _)| *id)
            .collect();
        ready.sort();
        ready
            .into_iter()
            .map(|id| {
                let p = self.pending.remove(&id).expect("selected above");
                RawTrace {
                    trace_id: id,
                    spans: p.spans,
                    logs: p.logs,
                    flags: p.flags,
                }
            })
            .collect()
    }

    /// Forces everything out regardless of timeouts (file import mode).
    pub fn drain_all(&mut self) -> Vec<RawTrace> {
        self.complete_pending(i64::MAX)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }
}

// ---------------------------------------------------------------------------
// Trace trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Anomaly {
    OrphanedSpans,
    ChildLongerThanParent,
    ClockAdjusted,
    DuplicateSpanId,
}

impl Anomaly {
    pub fn as_str(&self) -> &'static str {
        match self {
            Anomaly::OrphanedSpans => "orphaned_spans",
            Anomaly::ChildLongerThanParent => "child_longer_than_parent",
            Anomaly::ClockAdjusted => "clock_adjusted",
            Anomaly::DuplicateSpanId => "duplicate_span_id",
        }
    }
}

/// One node of an assembled trace tree. `adjusted_start_us` equals the
/// recorded start unless skew adjustment shifted it; the recorded value stays
/// available in `span.start_us`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceNode {
    pub span: Span,
    pub adjusted_start_us: i64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub logs: Vec<LogRecord>,
    /// True for a fabricated root covering orphaned spans.
    pub synthetic: bool,
}

impl TraceNode {
    pub fn adjusted_end_us(&self) -> i64 {
        self.adjusted_start_us + self.span.duration_us as i64
    }
}

/// A reconstructed execution trace: a rooted tree of spans plus correlated
/// logs and any anomalies noticed along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTree {
    pub trace_id: TraceId,
    /// Index 0 is always the root.
    pub nodes: Vec<TraceNode>,
    pub anomalies: BTreeSet<Anomaly>,
    /// Logs whose span id did not resolve; they were attached to the root.
    pub orphan_logs: u64,
}

impl TraceTree {
    pub fn root(&self) -> &TraceNode {
        &self.nodes[0]
    }

    pub fn span_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.synthetic).count()
    }

    pub fn has_error(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| n.span.status == SpanStatus::Error)
    }

    /// Total duration of the trace as rendered (root node's interval).
    pub fn duration_us(&self) -> u64 {
        self.root().span.duration_us
    }

    pub fn find_node(&self, span_id: SpanId) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| !n.synthetic && n.span.span_id == span_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssembleError {
    #[error("trace has no spans")]
    EmptyTrace,
}

/// Builds the tree from parent links. Spans whose parent never arrived hang
/// under a synthetic root spanning the whole envelope; this sets the
/// `orphaned_spans` anomaly. Logs attach to their span, or to the root (and
/// are counted) when the span id is unknown. Assembly is deterministic under
/// any permutation of the same span set.
pub fn assemble(raw: RawTrace) -> Result<TraceTree, AssembleError> {
    let RawTrace {
        trace_id,
        mut spans,
        logs,
        mut flags,
    } = raw;
    if spans.is_empty() {
        return Err(AssembleError::EmptyTrace);
    }
    // Canonical input order regardless of arrival order.
    spans.sort_by_key(|s| s.span_id);
    spans.dedup_by_key(|s| s.span_id);

    let index_of: HashMap<SpanId, usize> = spans
        .iter()
        .enumerate()
        .map(|(i, s)| (s.span_id, i))
        .collect();

    // Top-level spans: natural roots plus spans whose parent is missing.
    let mut top_level: Vec<usize> = Vec::new();
    let mut orphans = 0usize;
    for (i, s) in spans.iter().enumerate() {
        match s.parent_span_id {
            None => top_level.push(i),
            Some(p) if !index_of.contains_key(&p) => {
                top_level.push(i);
                orphans += 1;
            }
            Some(_) => {}
        }
    }

    // Break parent-link cycles: every span must be reachable from a top-level
    // span. Unreachable ones get promoted to top level (they are orphans of a
    // cycle) until everything is covered.
    let mut reachable = vec![false; spans.len()];
    let mut stack: Vec<usize> = top_level.clone();
    let children_of =
        |spans: &[Span], _index_of: &HashMap<SpanId, usize>, i: usize| -> Vec<usize> {
            let id = spans[i].span_id;
            spans
                .iter()
                .enumerate()
                .filter(|(_, s)| s.parent_span_id == Some(id))
                .map(|(j, _)| j)
                .filter(|j| *j != i)
                .collect()
        };
    while let Some(i) = stack.pop() {
        if reachable[i] {
            continue;
        }
        reachable[i] = true;
        stack.extend(children_of(&spans, &index_of, i));
    }
    for i in 0..spans.len() {
        if !reachable[i] {
            // Lowest-id member of the cycle becomes a top-level orphan.
            top_level.push(i);
            orphans += 1;
            let mut stack = vec![i];
            while let Some(j) = stack.pop() {
                if reachable[j] {
                    continue;
                }
                reachable[j] = true;
                stack.extend(children_of(&spans, &index_of, j));
            }
        }
    }
    top_level.sort_unstable();
    top_level.dedup();

    if orphans > 0 || top_level.len() > 1 {
        flags.insert(Anomaly::OrphanedSpans);
    }

    let needs_synthetic_root = top_level.len() != 1;
    let mut nodes: Vec<TraceNode> = Vec::with_capacity(spans.len() + 1);

    if needs_synthetic_root {
        let min_start = spans.iter().map(|s| s.start_us).min().unwrap();
        let max_end = spans.iter().map(Span::end_us).max().unwrap();
        // Pick a span id that is not taken by any real span.
        let taken: HashSet<u64> = spans.iter().map(|s| s.span_id.value()).collect();
        let mut candidate = u64::MAX;
        while taken.contains(&candidate) {
            candidate -= 1;
        }
        nodes.push(TraceNode {
            span: Span {
                trace_id,
                span_id: SpanId::new(candidate).expect("nonzero"),
                parent_span_id: None,
                service: "synthetic".to_string(),
                operation: "root".to_string(),
                start_us: min_start,
                duration_us: (max_end - min_start).max(0) as u64,
                status: SpanStatus::Ok,
                tags: Default::default(),
            },
            adjusted_start_us: min_start,
            parent: None,
            children: Vec::new(),
            logs: Vec::new(),
            synthetic: true,
        });
    }

    // Root-first layout: real nodes in canonical (span id) order after the
    // root. node_index maps span index -> node index.
    let mut node_index = vec![usize::MAX; spans.len()];
    let root_span_idx = if needs_synthetic_root {
        None
    } else {
        Some(top_level[0])
    };
    if let Some(r) = root_span_idx {
        node_index[r] = 0;
        nodes.push(TraceNode {
            span: spans[r].clone(),
            adjusted_start_us: spans[r].start_us,
            parent: None,
            children: Vec::new(),
            logs: Vec::new(),
            synthetic: false,
        });
    }
    for (i, s) in spans.iter().enumerate() {
        if Some(i) == root_span_idx {
            continue;
        }
        node_index[i] = nodes.len();
        nodes.push(TraceNode {
            span: s.clone(),
            adjusted_start_us: s.start_us,
            parent: None,
            children: Vec::new(),
            logs: Vec::new(),
            synthetic: false,
        });
    }

    // Wire up parent/child links.
    for (i, s) in spans.iter().enumerate() {
        let ni = node_index[i];
        if ni == 0 && !needs_synthetic_root {
            continue;
        }
        let parent_node = if top_level.contains(&i) {
            if needs_synthetic_root {
                Some(0)
            } else {
                None
            }
        } else {
            s.parent_span_id
                .and_then(|p| index_of.get(&p))
                .map(|pi| node_index[*pi])
        };
        if let Some(p) = parent_node {
            nodes[ni].parent = Some(p);
            nodes[p].children.push(ni);
        }
    }

    // Children ordered by (start, span id) for deterministic traversal.
    let order_key =
        |nodes: &[TraceNode], i: usize| (nodes[i].adjusted_start_us, nodes[i].span.span_id);
    for i in 0..nodes.len() {
        let mut kids = std::mem::take(&mut nodes[i].children);
        kids.sort_by_key(|k| order_key(&nodes, *k));
        nodes[i].children = kids;
    }

    // Attach logs, deterministically ordered.
    let mut orphan_logs = 0u64;
    let mut sorted_logs = logs;
    sorted_logs.sort_by_key(|l| (l.timestamp_us, l.span_id, l.level, l.message.clone()));
    let log_target: HashMap<SpanId, usize> = spans
        .iter()
        .enumerate()
        .map(|(i, s)| (s.span_id, node_index[i]))
        .collect();
    for log in sorted_logs {
        match log_target.get(&log.span_id) {
            Some(ni) => nodes[*ni].logs.push(log),
            None => {
                orphan_logs += 1;
                nodes[0].logs.push(log);
            }
        }
    }

    Ok(TraceTree {
        trace_id,
        nodes,
        anomalies: flags,
        orphan_logs,
    })
}

/// Clock skew correction. For each parent→child edge that crosses a service
/// boundary and where the child interval is not contained in the parent's
/// (adjusted) interval: with `slack = parent.duration - child.duration >= 0`
/// the child is centered inside the parent — it shifts by
/// `(parent.start + slack/2) - child.start` together with every descendant
/// recorded by the same service, and `clock_adjusted` is flagged. Negative
/// slack flags `child_longer_than_parent` and shifts nothing. Recorded
/// timestamps stay available next to the adjusted ones.
pub fn adjust_clock_skew(tree: &mut TraceTree) {
    let mut queue = vec![0usize];
    while let Some(pi) = queue.pop() {
        let parent_start = tree.nodes[pi].adjusted_start_us;
        let parent_end = tree.nodes[pi].adjusted_end_us();
        let parent_dur = tree.nodes[pi].span.duration_us as i64;
        let kids = tree.nodes[pi].children.clone();
        for ci in kids {
            queue.push(ci);
            let crosses_boundary = tree.nodes[pi].span.service != tree.nodes[ci].span.service;
            if !crosses_boundary {
                continue;
            }
            let child_start = tree.nodes[ci].adjusted_start_us;
            let child_end = tree.nodes[ci].adjusted_end_us();
            let contained = child_start >= parent_start && child_end <= parent_end;
            if contained {
                continue;
            }
            let child_dur = tree.nodes[ci].span.duration_us as i64;
            let slack = parent_dur - child_dur;
            if slack < 0 {
                tree.anomalies.insert(Anomaly::ChildLongerThanParent);
                continue;
            }
            let delta = (parent_start + slack / 2) - child_start;
            shift_same_service_subtree(tree, ci, delta);
            tree.anomalies.insert(Anomaly::ClockAdjusted);
        }
    }
    // Re-order children by adjusted start after shifting.
    for i in 0..tree.nodes.len() {
        let mut kids = std::mem::take(&mut tree.nodes[i].children);
        kids.sort_by_key(|k| {
            (
                tree.nodes[*k].adjusted_start_us,
                tree.nodes[*k].span.span_id,
            )
        });
        tree.nodes[i].children = kids;
    }
}

/// Shifts `start` plus every descendant recorded by the same (misbehaving)
/// service clock; descendants belonging to other services keep their own
/// recorded time and are evaluated on their own edges.
fn shift_same_service_subtree(tree: &mut TraceTree, start: usize, delta: i64) {
    let service = tree.nodes[start].span.service.clone();
    let mut stack = vec![start];
    while let Some(i) = stack.pop() {
        if tree.nodes[i].span.service == service {
            tree.nodes[i].adjusted_start_us += delta;
        }
        stack.extend(tree.nodes[i].children.iter().copied());
    }
}

// ---------------------------------------------------------------------------
// Trace store
// ---------------------------------------------------------------------------

/// Summary row for search results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSummary {
    pub trace_id: TraceId,
    pub root_service: String,
    pub root_operation: String,
    pub start_us: i64,
    pub duration_us: u64,
    pub span_count: usize,
    pub has_error: bool,
}

/// Conjunctive filters over stored traces.
#[derive(Debug, Clone, Default)]
pub struct TraceFilter {
    /// Any span belongs to this service.
    pub service: Option<String>,
    /// Any span carries this operation.
    pub operation: Option<String>,
    /// `true` selects only traces containing an ERROR span, `false` only
    /// all-OK traces.
    pub error: Option<bool>,
    /// Root duration at least this long.
    pub min_duration_us: Option<u64>,
    /// Any span carries this exact tag.
    pub tag: Option<(String, String)>,
    /// Root start within `[from, to)`.
    pub from_us: Option<i64>,
    pub to_us: Option<i64>,
}

impl TraceFilter {
    pub fn matches(&self, tree: &TraceTree) -> bool {
        let root = tree.root();
        if let Some(s) = &self.service {
            if !tree
                .nodes
                .iter()
                .any(|n| !n.synthetic && &n.span.service == s)
            {
                return false;
            }
        }
        if let Some(op) = &self.operation {
            if !tree
                .nodes
                .iter()
                .any(|n| !n.synthetic && &n.span.operation == op)
            {
                return false;
            }
        }
        if let Some(err) = self.error {
            if tree.has_error() != err {
                return false;
            }
        }
        if let Some(min) = self.min_duration_us {
            if root.span.duration_us < min {
                return false;
            }
        }
        if let Some((k, v)) = &self.tag {
            if !tree
                .nodes
                .iter()
                .any(|n| n.span.tags.get(k).map(String::as_str) == Some(v.as_str()))
            {
                return false;
            }
        }
        if let Some(from) = self.from_us {
            if root.adjusted_start_us < from {
                return false;
            }
        }
        if let Some(to) = self.to_us {
            if root.adjusted_start_us >= to {
                return false;
            }
        }
        true
    }
}

/// In-memory index of completed traces; one writer, many readers.
#[derive(Debug, Default)]
pub struct TraceStore {
    trees: Vec<TraceTree>,
    by_id: HashMap<TraceId, usize>,
}

impl TraceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, tree: TraceTree) {
        match self.by_id.get(&tree.trace_id) {
            Some(i) => self.trees[*i] = tree,
            None => {
                self.by_id.insert(tree.trace_id, self.trees.len());
                self.trees.push(tree);
            }
        }
    }

    pub fn get(&self, trace_id: TraceId) -> Option<&TraceTree> {
        self.by_id.get(&trace_id).map(|i| &self.trees[*i])
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceTree> {
        self.trees.iter()
    }

    /// Matching summaries ordered by root start descending (newest first),
    /// trace id as the tiebreak.
    pub fn query(&self, filter: &TraceFilter) -> Vec<TraceSummary> {
        let mut rows: Vec<TraceSummary> = self
            .trees
            .iter()
            .filter(|t| filter.matches(t))
            .map(|t| {
                let root = t.root();
                TraceSummary {
                    trace_id: t.trace_id,
                    root_service: root.span.service.clone(),
                    root_operation: root.span.operation.clone(),
                    start_us: root.adjusted_start_us,
                    duration_us: root.span.duration_us,
                    span_count: t.span_count(),
                    has_error: t.has_error(),
                }
            })
            .collect();
        rows.sort_by(|a, b| {
            b.start_us
                .cmp(&a.start_us)
                .then_with(|| b.trace_id.cmp(&a.trace_id))
        });
        rows
    }
}

/// Append-only persistence for completed traces: one record batch per trace
/// (`TRACE <id> <anomalies|->` header, then the encoded span and log lines,
/// then a blank line). Reloading re-assembles and re-adjusts each batch,
/// which reproduces the stored trees exactly since both passes are
/// deterministic.
#[cfg(not(target_arch = "wasm32"))]
pub mod persist {
    use std::io::{BufRead, BufReader, Write};
    use std::path::Path;

    use super::{adjust_clock_skew, Anomaly, Collector, CollectorConfig, TraceStore, TraceTree};
    use crate::wire::{encode_log, encode_span};

    /// Opens (or creates) the append-only trace log.
    pub fn open_log(path: &Path) -> std::io::Result<std::fs::File> {
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
    }

    pub fn append_trace(w: &mut impl Write, tree: &TraceTree) -> std::io::Result<()> {
        let anomalies = if tree.anomalies.is_empty() {
            "-".to_string()
        } else {
            tree.anomalies
                .iter()
                .map(|a| a.as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut batch = format!("TRACE {} {}\n", tree.trace_id.to_hex(), anomalies);
        for node in &tree.nodes {
            if !node.synthetic {
                batch.push_str(&encode_span(&node.span));
                batch.push('\n');
            }
            for log in &node.logs {
                batch.push_str(&encode_log(log));
                batch.push('\n');
            }
        }
        batch.push('\n');
        w.write_all(batch.as_bytes())
    }

    /// Rebuilds a store from an append-only log. Later batches for the same
    /// trace id win, matching the in-memory store's overwrite semantics.
    pub fn load_store(path: &Path) -> std::io::Result<TraceStore> {
        let mut store = TraceStore::new();
        if !path.exists() {
            return Ok(store);
        }
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut collector = Collector::new(CollectorConfig::default());
        let mut flags: std::collections::BTreeSet<Anomaly> = Default::default();
        let mut in_batch = false;
        let flush = |collector: &mut Collector,
                         flags: &mut std::collections::BTreeSet<Anomaly>,
                         store: &mut TraceStore| {
            for mut raw in collector.drain_all() {
                raw.flags.extend(flags.iter().copied());
                if let Ok(mut tree) = super::assemble(raw) {
                    adjust_clock_skew(&mut tree);
                    store.store(tree);
                }
            }
            flags.clear();
        };
        for line in reader.lines() {
            let line = line?;
            if let Some(header) = line.strip_prefix("TRACE ") {
                flush(&mut collector, &mut flags, &mut store);
                in_batch = true;
                if let Some((_, anomalies)) = header.split_once(' ') {
                    for name in anomalies.split(',') {
                        match name {
                            "orphaned_spans" => flags.insert(Anomaly::OrphanedSpans),
                            "child_longer_than_parent" => {
                                flags.insert(Anomaly::ChildLongerThanParent)
                            }
                            "clock_adjusted" => flags.insert(Anomaly::ClockAdjusted),
                            "duplicate_span_id" => flags.insert(Anomaly::DuplicateSpanId),
                            _ => false,
                        };
                    }
                }
            } else if in_batch && !line.is_empty() {
                collector.ingest(&line, 0);
            }
        }
        flush(&mut collector, &mut flags, &mut store);
        Ok(store)
    }
}
