//! Read-side analysis over assembled traces: text waterfalls, critical-path
//! attribution and the fixed-width/TSV tables the CLI prints. Every renderer
//! is a pure function of its inputs, so outputs are byte-stable.

use crate::collector::{TraceSummary, TraceTree};
use crate::metrics::{QueryRow, ViewTable};
use crate::wire::SpanStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Plain,
    Tsv,
}

// ---------------------------------------------------------------------------
// Critical path
// ---------------------------------------------------------------------------

/// One hop of the critical path: the node, the uncovered time attributed to
/// it, and its total duration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathEntry {
    pub node: usize,
    pub self_time_us: u64,
    pub total_us: u64,
}

/// Walks from the root, repeatedly descending into the child whose end time
/// is latest among children ending at or before the cursor; time no child
/// covers is the current span's self-time. Self-times over the returned path
/// always sum exactly to the root duration.
pub fn critical_path(tree: &TraceTree) -> Vec<PathEntry> {
    let mut path = Vec::new();
    let root_end = tree.nodes[0].adjusted_end_us();
    descend(tree, 0, root_end, &mut path);
    path
}

fn descend(tree: &TraceTree, node: usize, cursor_end: i64, path: &mut Vec<PathEntry>) {
    let start = tree.nodes[node].adjusted_start_us;
    let entry_index = path.len();
    path.push(PathEntry {
        node,
        self_time_us: 0,
        total_us: tree.nodes[node].span.duration_us,
    });
    let mut cursor = cursor_end
        .min(tree.nodes[node].adjusted_end_us())
        .max(start);
    let mut self_time = 0u64;
    loop {
        // Latest-ending child at or before the cursor (clamped into the
        // parent's window); ties broken by later start, then span id.
        let mut best: Option<(i64, i64, u64, usize)> = None;
        for &child in &tree.nodes[node].children {
            let c = &tree.nodes[child];
            let effective_end = c.adjusted_end_us().min(cursor);
            let effective_start = c.adjusted_start_us.max(start);
            if effective_start >= cursor {
                continue;
            }
            let key = (
                effective_end,
                c.adjusted_start_us,
                c.span.span_id.value(),
                child,
            );
            if best.is_none_or(|b| (b.0, b.1, b.2) < (key.0, key.1, key.2)) {
                best = Some(key);
            }
        }
        let Some((effective_end, _, _, child)) = best else {
            break;
        };
        self_time += (cursor - effective_end) as u64;
        descend(tree, child, effective_end, path);
        cursor = tree.nodes[child].adjusted_start_us.max(start);
    }
    self_time += (cursor - start) as u64;
    path[entry_index].self_time_us = self_time;
}

// ---------------------------------------------------------------------------
// Waterfall
// ---------------------------------------------------------------------------

const BAR_CELLS: i64 = 40;

/// Integer round-half-up of `numerator * BAR_CELLS / denominator`.
fn bar_cell(numerator: i64, denominator: i64) -> i64 {
    if denominator <= 0 {
        return 0;
    }
    let scaled = numerator as i128 * BAR_CELLS as i128;
    let den = denominator as i128;
    (((2 * scaled + den).div_euclid(2 * den)) as i64).clamp(0, BAR_CELLS)
}

/// Deterministic fixed-width waterfall: one row per span, indented by depth,
/// with the start offset relative to the root, the duration, a status
/// marker, and a 40-cell bar scaled to the root duration. `adjusted` selects
/// skew-corrected timestamps; raw shows them as recorded.
pub fn render_waterfall(tree: &TraceTree, adjusted: bool) -> String {
    let start_of = |i: usize| {
        if adjusted {
            tree.nodes[i].adjusted_start_us
        } else {
            tree.nodes[i].span.start_us
        }
    };
    let root_start = start_of(0);
    let root_dur = tree.nodes[0].span.duration_us as i64;

    let mut out = String::new();
    out.push_str(&format!(
        "trace {}  spans {}  duration {}us  status {}\n",
        tree.trace_id.to_hex(),
        tree.span_count(),
        tree.nodes[0].span.duration_us,
        if tree.has_error() { "ERROR" } else { "OK" },
    ));
    if !tree.anomalies.is_empty() {
        let names: Vec<&str> = tree.anomalies.iter().map(|a| a.as_str()).collect();
        out.push_str(&format!("anomalies: {}\n", names.join(", ")));
    }

    // Rows in tree order; labels padded to the widest.
    let mut rows: Vec<(usize, usize)> = Vec::new(); // (node, depth)
    let mut stack = vec![(0usize, 0usize)];
    while let Some((node, depth)) = stack.pop() {
        rows.push((node, depth));
        for &child in tree.nodes[node].children.iter().rev() {
            stack.push((child, depth + 1));
        }
    }
    let label_of = |node: usize, depth: usize| {
        let n = &tree.nodes[node];
        let marker = if n.synthetic { "~" } else { "" };
        format!(
            "{}{}{}/{}",
            "  ".repeat(depth),
            marker,
            n.span.service,
            n.span.operation
        )
    };
    let label_width = rows
        .iter()
        .map(|(n, d)| label_of(*n, *d).len())
        .max()
        .unwrap_or(0)
        .max("span".len());

    out.push_str(&format!(
        "{:>12}  {:>12}  {:<4}  {:<label_width$}  {}\n",
        "offset_us", "duration_us", "st", "span", "timeline",
    ));
    for (node, depth) in rows {
        let n = &tree.nodes[node];
        let offset = start_of(node) - root_start;
        let status = match n.span.status {
            SpanStatus::Ok => "OK",
            SpanStatus::Error => "ERR",
        };
        let from = bar_cell(offset, root_dur);
        let to = bar_cell(offset + n.span.duration_us as i64, root_dur)
            .max(from + 1)
            .min(BAR_CELLS);
        let from = from.min(to - 1);
        let mut bar = String::with_capacity(BAR_CELLS as usize + 2);
        bar.push('|');
        for cell in 0..BAR_CELLS {
            bar.push(if cell >= from && cell < to { '#' } else { '.' });
        }
        bar.push('|');
        out.push_str(&format!(
            "{:>12}  {:>12}  {:<4}  {:<label_width$}  {}\n",
            offset,
            n.span.duration_us,
            status,
            label_of(node, depth),
            bar,
        ));
        for log in &n.logs {
            out.push_str(&format!(
                "{:>12}  {:>12}  {:<4}  {:<label_width$}  ~ {:?}\n",
                log.timestamp_us - root_start,
                "",
                "log",
                "",
                log.message,
            ));
        }
    }
    out
}

/// Critical-path report: one row per path hop with self and total time,
/// ending with the conservation line.
pub fn render_critical_path(tree: &TraceTree, format: OutputFormat) -> String {
    let path = critical_path(tree);
    let mut rows: Vec<Vec<String>> = vec![vec![
        "self_us".to_string(),
        "total_us".to_string(),
        "span".to_string(),
    ]];
    for entry in &path {
        let n = &tree.nodes[entry.node];
        rows.push(vec![
            entry.self_time_us.to_string(),
            entry.total_us.to_string(),
            format!("{}/{}", n.span.service, n.span.operation),
        ]);
    }
    let total: u64 = path.iter().map(|e| e.self_time_us).sum();
    let mut out = render_rows(&rows, format);
    out.push_str(&format!(
        "critical path: {} spans, self times sum {}us of root {}us\n",
        path.len(),
        total,
        tree.nodes[0].span.duration_us,
    ));
    out
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

fn render_rows(rows: &[Vec<String>], format: OutputFormat) -> String {
    let mut out = String::new();
    match format {
        OutputFormat::Tsv => {
            for row in rows {
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
        }
        OutputFormat::Plain => {
            let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
            let mut widths = vec![0usize; columns];
            for row in rows {
                for (i, cell) in row.iter().enumerate() {
                    widths[i] = widths[i].max(cell.len());
                }
            }
            for row in rows {
                let mut line = String::new();
                for (i, cell) in row.iter().enumerate() {
                    if i > 0 {
                        line.push_str("  ");
                    }
                    line.push_str(&format!("{:<width$}", cell, width = widths[i]));
                }
                out.push_str(line.trim_end());
                out.push('\n');
            }
        }
    }
    out
}

pub fn render_summaries(summaries: &[TraceSummary], format: OutputFormat) -> String {
    let mut rows: Vec<Vec<String>> = vec![vec![
        "trace_id".to_string(),
        "start_us".to_string(),
        "duration_us".to_string(),
        "spans".to_string(),
        "status".to_string(),
        "root".to_string(),
    ]];
    for s in summaries {
        rows.push(vec![
            s.trace_id.to_hex(),
            s.start_us.to_string(),
            s.duration_us.to_string(),
            s.span_count.to_string(),
            if s.has_error { "ERROR" } else { "OK" }.to_string(),
            format!("{}/{}", s.root_service, s.root_operation),
        ]);
    }
    render_rows(&rows, format)
}

pub fn render_query_rows(rows: &[QueryRow], format: OutputFormat) -> String {
    let mut table: Vec<Vec<String>> = vec![vec![
        "group".to_string(),
        "ts_ms".to_string(),
        "value".to_string(),
    ]];
    for row in rows {
        let group = if row.group.is_empty() {
            "*".to_string()
        } else {
            row.group
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        table.push(vec![
            group,
            row.ts_ms.to_string(),
            crate::wire::format_value(row.value),
        ]);
    }
    render_rows(&table, format)
}

pub fn render_view(view: &ViewTable, format: OutputFormat) -> String {
    let mut rows: Vec<Vec<String>> = vec![view.columns.clone()];
    rows.extend(view.rows.iter().cloned());
    match format {
        OutputFormat::Tsv => render_rows(&rows, format),
        OutputFormat::Plain => {
            let mut out = format!("[{}]\n", view.title);
            out.push_str(&render_rows(&rows, format));
            out
        }
    }
}
