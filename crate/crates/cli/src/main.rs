//! Operator CLI: runs the simulator, queries traces and metrics from a
//! corpus directory or from running servers, and hosts the serve mode that
//! binds the collector and metrics listeners.
//!
//! Exit codes: 0 success (including empty results), 1 not-found / unknown
//! name, 2 usage errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spanforge_core::analysis::{
    render_critical_path, render_query_rows, render_summaries, render_view, render_waterfall,
    OutputFormat,
};
use spanforge_core::clock::{Clock, SystemClock};
use spanforge_core::collector::{
    adjust_clock_skew, assemble, Collector, CollectorConfig, RawTrace, TraceFilter, TraceTree,
};
use spanforge_core::metrics::{MetricsService, RangeQuery, View};
use spanforge_core::net;
use spanforge_core::pipeline::process_lines;
use spanforge_core::sampling::{parse_policy, SamplingPolicy};
use spanforge_core::sim;
use spanforge_core::wire::{decode_line, TraceId, WireLine};

#[derive(Parser)]
#[command(
    name = "spanforge",
    version,
    about = "Desk-scale tracing and metrics stack"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Plain,
    Tsv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Plain => OutputFormat::Plain,
            Format::Tsv => OutputFormat::Tsv,
        }
    }
}

/// Where query commands read from: an on-disk corpus or running servers.
#[derive(Debug, Args)]
struct Source {
    /// Corpus directory produced by `simulate` (offline mode).
    #[arg(long, global = true, env = "SPANFORGE_FILE")]
    file: Option<PathBuf>,
    /// Collector server address (host:port).
    #[arg(long, global = true, env = "SPANFORGE_COLLECTOR")]
    collector: Option<String>,
    /// Metrics server address (host:port).
    #[arg(long, global = true, env = "SPANFORGE_METRICS")]
    metrics: Option<String>,
    /// Tail sampling policy applied when loading a corpus.
    #[arg(long, global = true, env = "SPANFORGE_POLICY")]
    policy: Option<PathBuf>,
    #[arg(
        long,
        global = true,
        env = "SPANFORGE_FORMAT",
        value_enum,
        default_value = "plain"
    )]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run the deterministic workload simulator and write a corpus.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sampling policy (head rates apply at the simulated SDKs).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Resource load profile; adds USE metrics for every node.
        #[arg(long)]
        infra: Option<PathBuf>,
    },
    /// Trace lookup, search and analysis.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
        #[command(flatten)]
        source: Source,
    },
    /// Metric range queries.
    Metrics {
        #[command(subcommand)]
        command: MetricsCommand,
        #[command(flatten)]
        source: Source,
    },
    /// RED / golden-signal / USE views.
    View {
        #[arg(value_enum)]
        kind: ViewKind,
        /// Service name for red/golden; resource for use (optional).
        target: Option<String>,
        /// Window length ending at the newest data (or now, for servers).
        #[arg(long, default_value_t = 60)]
        window_s: u64,
        /// Explicit window end, milliseconds since the epoch.
        #[arg(long)]
        end_ms: Option<i64>,
        #[command(flatten)]
        source: Source,
    },
    /// Run the collector and metrics listeners.
    Serve {
        #[arg(long, default_value = "127.0.0.1:4317")]
        collector_listen: String,
        #[arg(long, default_value = "127.0.0.1:4318")]
        metrics_listen: String,
        /// Tail sampling policy file.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Pull targets to scrape periodically (repeatable).
        #[arg(long = "scrape-target")]
        scrape_targets: Vec<String>,
        #[arg(long, default_value_t = 10)]
        scrape_interval_s: u64,
        #[arg(long, default_value_t = 5)]
        idle_timeout_s: u64,
        #[arg(long, default_value_t = 30)]
        max_wait_s: u64,
        /// Resolution tier `step_s:retention_s:avg|sum|min|max|last`
        /// (repeatable, ordered by increasing step).
        #[arg(long = "tier")]
        tiers: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        cardinality_limit: usize,
        /// Append-only file the retained traces persist to (reloaded on
        /// startup).
        #[arg(long)]
        trace_log: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Render one trace as a text waterfall.
    Get {
        trace_id: String,
        /// Show recorded timestamps instead of skew-adjusted ones.
        #[arg(long)]
        raw: bool,
    },
    /// List traces matching conjunctive filters, newest first.
    Search {
        #[arg(long)]
        service: Option<String>,
        #[arg(long)]
        operation: Option<String>,
        /// OK or ERROR.
        #[arg(long)]
        status: Option<String>,
        #[arg(long)]
        min_duration_us: Option<u64>,
        /// key=value matched against any span's tags.
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        from_us: Option<i64>,
        #[arg(long)]
        to_us: Option<i64>,
    },
    /// Bottleneck report: the chain of spans covering the root duration.
    CriticalPath { trace_id: String },
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Aggregate one metric over a time range.
    Query {
        name: String,
        /// avg | sum | min | max | count | p<percentile>
        #[arg(long, default_value = "avg")]
        agg: String,
        /// Defaults to the beginning of time.
        #[arg(long)]
        start_ms: Option<i64>,
        /// Defaults to just past the newest sample (offline) or now (servers).
        #[arg(long)]
        end_ms: Option<i64>,
        /// Comma-separated tag keys to group by.
        #[arg(long)]
        group_by: Option<String>,
        /// key=value series filter (repeatable).
        #[arg(long = "tag")]
        tags: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ViewKind {
    Red,
    Golden,
    Use,
}

/// Writes to stdout, exiting quietly when the downstream consumer closed
/// the pipe (e.g. `spanforge trace search | head`).
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out.write_all(text.as_bytes()).is_err() || out.flush().is_err() {
        std::process::exit(0);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            policy,
            infra,
        } => cmd_simulate(&config, &out, policy.as_deref(), infra.as_deref()),
        Command::Trace { command, source } => match command {
            TraceCommand::Get { trace_id, raw } => cmd_trace_get(&source, &trace_id, raw),
            TraceCommand::Search {
                service,
                operation,
                status,
                min_duration_us,
                tag,
                from_us,
                to_us,
            } => {
                let error = match status.as_deref() {
                    None => None,
                    Some("OK") => Some(false),
                    Some("ERROR") => Some(true),
                    Some(other) => {
                        return Err(format!("status must be OK or ERROR, got {other:?}"))
                    }
                };
                let tag = match tag {
                    None => None,
                    Some(t) => Some(
                        t.split_once('=')
                            .map(|(k, v)| (k.to_string(), v.to_string()))
                            .ok_or_else(|| "tag filter needs key=value".to_string())?,
                    ),
                };
                cmd_trace_search(
                    &source,
                    TraceFilter {
                        service,
                        operation,
                        error,
                        min_duration_us,
                        tag,
                        from_us,
                        to_us,
                    },
                )
            }
            TraceCommand::CriticalPath { trace_id } => cmd_critical_path(&source, &trace_id),
        },
        Command::Metrics { command, source } => match command {
            MetricsCommand::Query {
                name,
                agg,
                start_ms,
                end_ms,
                group_by,
                tags,
            } => cmd_metrics_query(&source, &name, &agg, start_ms, end_ms, group_by, tags),
        },
        Command::View {
            kind,
            target,
            window_s,
            end_ms,
            source,
        } => cmd_view(&source, kind, target.as_deref(), window_s, end_ms),
        Command::Serve {
            collector_listen,
            metrics_listen,
            policy,
            scrape_targets,
            scrape_interval_s,
            idle_timeout_s,
            max_wait_s,
            tiers,
            cardinality_limit,
            trace_log,
        } => cmd_serve(ServeOptions {
            collector_listen,
            metrics_listen,
            policy,
            scrape_targets,
            scrape_interval_s,
            idle_timeout_s,
            max_wait_s,
            tiers,
            cardinality_limit,
            trace_log,
        }),
    }
}

fn load_policy(path: Option<&std::path::Path>) -> Result<SamplingPolicy, String> {
    match path {
        None => Ok(SamplingPolicy::keep_all()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read policy {}: {e}", p.display()))?;
            parse_policy(&text).map_err(|e| e.to_string())
        }
    }
}

fn cmd_simulate(
    config_path: &std::path::Path,
    out_dir: &std::path::Path,
    policy_path: Option<&std::path::Path>,
    infra_path: Option<&std::path::Path>,
) -> Result<ExitCode, String> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| format!("cannot read config {}: {e}", config_path.display()))?;
    let config = sim::parse_topology(&text).map_err(|e| e.to_string())?;
    let policy = load_policy(policy_path)?;
    let mut corpus = sim::run(&config, &policy).map_err(|e| e.to_string())?;
    if let Some(infra) = infra_path {
        let profile_text = std::fs::read_to_string(infra)
            .map_err(|e| format!("cannot read profile {}: {e}", infra.display()))?;
        corpus.lines.extend(simulate_infra(&config, &profile_text)?);
    }
    sim::write_corpus(&corpus, out_dir).map_err(|e| e.to_string())?;
    println!(
        "wrote {} lines ({} spans, {} logs, {} metrics) and {} truth records to {}",
        corpus.lines.len(),
        corpus.span_lines().count(),
        corpus.log_lines().count(),
        corpus.metric_lines().count(),
        corpus.truth.requests.len(),
        out_dir.display(),
    );
    Ok(ExitCode::SUCCESS)
}

/// Drives one simulated resource sampler per node label across the
/// workload's virtual time span, emitting USE metric lines.
fn simulate_infra(config: &sim::TopologyConfig, profile_text: &str) -> Result<Vec<String>, String> {
    use spanforge_core::infra::{parse_profiles, to_use_metrics, SimulatedSampler};
    use spanforge_core::rng::SplitMix64;
    use spanforge_core::wire::{encode_metric, MetricKind, MetricSample, TagSet};

    let profiles = parse_profiles(profile_text).map_err(|e| e.to_string())?;
    let mut nodes: Vec<String> = config
        .services
        .iter()
        .map(|s| s.node_label.clone())
        .collect();
    nodes.sort();
    nodes.dedup();
    let base_ms = sim::SIM_BASE_US / 1000;
    let duration_ms =
        (config.workload.requests as f64 / config.workload.arrival_rate_per_s * 1000.0) as i64;
    let interval_ms = 10_000i64;
    let steps = duration_ms / interval_ms + 2;
    let seed_root = SplitMix64::new(config.workload.seed);

    let mut lines = Vec::new();
    for (n, node) in nodes.iter().enumerate() {
        let tags = TagSet::from_pairs([
            ("node.label", node.clone()),
            ("instance.id", format!("{node}-host")),
        ]);
        let mut sampler = SimulatedSampler::new(
            profiles.clone(),
            tags.clone(),
            base_ms,
            interval_ms as u64,
            seed_root.fork(&format!("infra:{node}")).next_u64(),
        );
        let mut probe_errors = vec![0u64; profiles.len()];
        for step in 0..steps {
            let now_ms = base_ms + step * interval_ms;
            for (i, result) in sampler.sample(now_ms).into_iter().enumerate() {
                match result {
                    Ok(snapshot) => {
                        for sample in to_use_metrics(&snapshot, now_ms) {
                            lines.push(encode_metric(&sample));
                        }
                    }
                    Err(_) => {
                        probe_errors[i] += 1;
                        let mut err_tags = tags.clone();
                        err_tags.insert("resource", profiles[i].resource.as_str());
                        lines.push(encode_metric(&MetricSample {
                            name: "probe_errors_total".to_string(),
                            kind: MetricKind::Counter,
                            value: probe_errors[i] as f64,
                            timestamp_ms: now_ms,
                            tags: err_tags,
                        }));
                    }
                }
            }
        }
        let _ = n;
    }
    Ok(lines)
}

/// Offline stores built from a corpus directory.
struct FileStores {
    out: spanforge_core::pipeline::PipelineOutput,
    max_metric_ts_ms: i64,
}

fn load_file_stores(source: &Source) -> Result<FileStores, String> {
    let dir = source
        .file
        .as_ref()
        .ok_or_else(|| "no data source: pass --file, --collector or --metrics".to_string())?;
    let corpus = sim::load_corpus(dir).map_err(|e| format!("cannot load corpus: {e}"))?;
    let policy = load_policy(source.policy.as_deref())?;
    let mut max_metric_ts_ms = 0;
    for line in &corpus.lines {
        if let Ok(WireLine::Metric(m)) = decode_line(line) {
            max_metric_ts_ms = max_metric_ts_ms.max(m.timestamp_ms);
        }
    }
    Ok(FileStores {
        out: process_lines(corpus.lines.iter().map(String::as_str), &policy),
        max_metric_ts_ms,
    })
}

fn parse_trace_id(s: &str) -> Result<TraceId, String> {
    TraceId::from_hex(s).map_err(|e| e.to_string())
}

/// Fetch one assembled tree from whichever source is configured.
fn load_tree(source: &Source, trace_id: TraceId) -> Result<Option<TraceTree>, String> {
    if let Some(addr) = &source.collector {
        let fetched = net::fetch_trace(addr, trace_id).map_err(|e| e.to_string())?;
        let Some(fetched) = fetched else {
            return Ok(None);
        };
        // Reassemble client-side from the raw lines; merge the server's
        // ingest-time anomalies (duplicates are only visible there).
        let mut collector = Collector::new(CollectorConfig::default());
        for line in &fetched.lines {
            collector.ingest(line, 0);
        }
        let mut raws = collector.drain_all();
        let Some(position) = raws.iter().position(|r| r.trace_id == trace_id) else {
            return Ok(None);
        };
        let mut raw: RawTrace = raws.swap_remove(position);
        raw.flags.extend(fetched.anomalies.iter().copied());
        let mut tree = assemble(raw).map_err(|e| e.to_string())?;
        adjust_clock_skew(&mut tree);
        Ok(Some(tree))
    } else {
        let stores = load_file_stores(source)?;
        Ok(stores.out.traces.get(trace_id).cloned())
    }
}

fn cmd_trace_get(source: &Source, trace_id: &str, raw: bool) -> Result<ExitCode, String> {
    let trace_id = parse_trace_id(trace_id)?;
    match load_tree(source, trace_id)? {
        Some(tree) => {
            emit(&render_waterfall(&tree, !raw));
            Ok(ExitCode::SUCCESS)
        }
        None => {
            eprintln!("error: trace not found");
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_critical_path(source: &Source, trace_id: &str) -> Result<ExitCode, String> {
    let trace_id = parse_trace_id(trace_id)?;
    match load_tree(source, trace_id)? {
        Some(tree) => {
            emit(&render_critical_path(&tree, source.format.into()));
            Ok(ExitCode::SUCCESS)
        }
        None => {
            eprintln!("error: trace not found");
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_trace_search(source: &Source, filter: TraceFilter) -> Result<ExitCode, String> {
    if let Some(addr) = &source.collector {
        let request = format!("SEARCH {}", net::encode_search_filter(&filter));
        let reply = net::request_reply(addr, request.trim_end()).map_err(|e| e.to_string())?;
        if let Some(msg) = reply.strip_prefix("ERR ") {
            return Err(msg.trim_end().to_string());
        }
        print_tsv_reply(&reply, source.format);
        return Ok(ExitCode::SUCCESS);
    }
    let stores = load_file_stores(source)?;
    let rows = stores.out.traces.query(&filter);
    emit(&render_summaries(&rows, source.format.into()));
    Ok(ExitCode::SUCCESS)
}

fn cmd_metrics_query(
    source: &Source,
    name: &str,
    agg: &str,
    start_ms: Option<i64>,
    end_ms: Option<i64>,
    group_by: Option<String>,
    tags: Vec<String>,
) -> Result<ExitCode, String> {
    let aggregate = net::parse_aggregate(agg)?;
    let mut tag_filter = Vec::new();
    for t in &tags {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| "tag filter needs key=value".to_string())?;
        tag_filter.push((k.to_string(), v.to_string()));
    }
    let mut query = RangeQuery {
        name: name.to_string(),
        tag_filter,
        start_ms: start_ms.unwrap_or(0),
        end_ms: end_ms.unwrap_or(0),
        aggregate,
        group_by: group_by
            .map(|g| g.split(',').map(str::to_string).collect())
            .unwrap_or_default(),
    };
    if let Some(addr) = &source.metrics {
        if end_ms.is_none() {
            query.end_ms = SystemClock.now_ms();
        }
        let mut request = format!(
            "QUERY {} {} {} {}",
            query.name, agg, query.start_ms, query.end_ms
        );
        if !query.group_by.is_empty() {
            request.push_str(&format!(" group={}", query.group_by.join(",")));
        }
        for (k, v) in &query.tag_filter {
            request.push_str(&format!(
                " tag={}={}",
                spanforge_core::wire::encode_field(k),
                spanforge_core::wire::encode_field(v)
            ));
        }
        let reply = net::request_reply(addr, &request).map_err(|e| e.to_string())?;
        if let Some(msg) = reply.strip_prefix("ERR ") {
            eprintln!("error: {}", msg.trim_end());
            return Ok(ExitCode::from(1));
        }
        print_tsv_reply(&reply, source.format);
        return Ok(ExitCode::SUCCESS);
    }
    let stores = load_file_stores(source)?;
    if end_ms.is_none() {
        query.end_ms = stores.max_metric_ts_ms + 1;
    }
    match stores.out.metrics.store.query_range(&query) {
        Ok(rows) => {
            emit(&render_query_rows(&rows, source.format.into()));
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ spanforge_core::metrics::MetricsError::UnknownMetric(_)) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e.to_string()),
    }
}

fn cmd_view(
    source: &Source,
    kind: ViewKind,
    target: Option<&str>,
    window_s: u64,
    end_ms: Option<i64>,
) -> Result<ExitCode, String> {
    let view = match kind {
        ViewKind::Red => View::Red {
            service: target
                .ok_or_else(|| "red view needs a service".to_string())?
                .to_string(),
        },
        ViewKind::Golden => View::Golden {
            service: target
                .ok_or_else(|| "golden view needs a service".to_string())?
                .to_string(),
        },
        ViewKind::Use => View::Use {
            resource: target.map(str::to_string),
        },
    };
    if let Some(addr) = &source.metrics {
        let end = end_ms.unwrap_or_else(|| SystemClock.now_ms());
        let start = end - (window_s as i64) * 1000;
        let (kind_str, target_str) = match &view {
            View::Red { service } => ("red", service.clone()),
            View::Golden { service } => ("golden", service.clone()),
            View::Use { resource } => ("use", resource.clone().unwrap_or_else(|| "-".into())),
        };
        let reply =
            net::request_reply(addr, &format!("VIEW {kind_str} {target_str} {start} {end}"))
                .map_err(|e| e.to_string())?;
        if let Some(msg) = reply.strip_prefix("ERR ") {
            eprintln!("error: {}", msg.trim_end());
            return Ok(ExitCode::from(1));
        }
        print_tsv_reply(&reply, source.format);
        return Ok(ExitCode::SUCCESS);
    }
    let stores = load_file_stores(source)?;
    // Offline windows end just past the newest sample, so a fixed corpus
    // renders identically on every run.
    let end = end_ms.unwrap_or(stores.max_metric_ts_ms + 1);
    let start = end - (window_s as i64) * 1000;
    match stores.out.metrics.store.derived_view(&view, start, end) {
        Ok(table) => {
            emit(&render_view(&table, source.format.into()));
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ spanforge_core::metrics::MetricsError::MissingInstrument(_))
        | Err(e @ spanforge_core::metrics::MetricsError::UnknownMetric(_)) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e.to_string()),
    }
}

/// TSV replies print verbatim in tsv mode and re-align into a plain table
/// otherwise.
fn print_tsv_reply(reply: &str, format: Format) {
    match format {
        Format::Tsv => emit(reply),
        Format::Plain => {
            let rows: Vec<Vec<String>> = reply
                .lines()
                .map(|l| l.split('\t').map(str::to_string).collect())
                .collect();
            if rows.is_empty() {
                return;
            }
            let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
            let mut widths = vec![0usize; columns];
            for row in &rows {
                for (i, cell) in row.iter().enumerate() {
                    widths[i] = widths[i].max(cell.len());
                }
            }
            for row in &rows {
                let mut line = String::new();
                for (i, cell) in row.iter().enumerate() {
                    if i > 0 {
                        line.push_str("  ");
                    }
                    line.push_str(&format!("{:<width$}", cell, width = widths[i]));
                }
                emit(&format!("{}\n", line.trim_end()));
            }
        }
    }
}

struct ServeOptions {
    collector_listen: String,
    metrics_listen: String,
    policy: Option<PathBuf>,
    scrape_targets: Vec<String>,
    scrape_interval_s: u64,
    idle_timeout_s: u64,
    max_wait_s: u64,
    tiers: Vec<String>,
    cardinality_limit: usize,
    trace_log: Option<PathBuf>,
}

/// `step_s:retention_s:agg` into a tier config.
fn parse_tier(s: &str) -> Result<spanforge_core::metrics::TierConfig, String> {
    use spanforge_core::metrics::TierAggregate;
    let parts: Vec<&str> = s.split(':').collect();
    let [step, retention, agg] = parts.as_slice() else {
        return Err(format!("tier must be step_s:retention_s:agg, got {s:?}"));
    };
    let step_s: i64 = step
        .parse()
        .map_err(|_| format!("bad tier step {step:?}"))?;
    let retention_s: i64 = retention
        .parse()
        .map_err(|_| format!("bad tier retention {retention:?}"))?;
    let aggregate = match *agg {
        "avg" => TierAggregate::Avg,
        "sum" => TierAggregate::Sum,
        "min" => TierAggregate::Min,
        "max" => TierAggregate::Max,
        "last" => TierAggregate::Last,
        other => return Err(format!("unknown tier aggregate {other:?}")),
    };
    Ok(spanforge_core::metrics::TierConfig {
        step_ms: step_s * 1000,
        retention_ms: retention_s * 1000,
        aggregate,
    })
}

fn cmd_serve(options: ServeOptions) -> Result<ExitCode, String> {
    let ServeOptions {
        collector_listen,
        metrics_listen,
        policy,
        scrape_targets,
        scrape_interval_s,
        idle_timeout_s,
        max_wait_s,
        tiers,
        cardinality_limit,
        trace_log,
    } = options;
    let (collector_listen, metrics_listen) = (collector_listen.as_str(), metrics_listen.as_str());
    let policy = match policy.as_deref() {
        None => SamplingPolicy::default_policy(),
        Some(p) => load_policy(Some(p))?,
    };
    let collector = Collector::new(CollectorConfig {
        idle_timeout_us: idle_timeout_s as i64 * 1_000_000,
        max_wait_us: max_wait_s as i64 * 1_000_000,
    });
    let tier_configs = if tiers.is_empty() {
        spanforge_core::metrics::default_tiers()
    } else {
        tiers
            .iter()
            .map(|t| parse_tier(t))
            .collect::<Result<Vec<_>, _>>()?
    };
    let store = spanforge_core::metrics::SeriesStore::new(tier_configs, cardinality_limit)
        .map_err(|e| e.to_string())?;
    let mut server_state = net::ServerState::new(collector, MetricsService::new(store), policy);
    if let Some(path) = &trace_log {
        server_state = server_state
            .with_trace_log(path)
            .map_err(|e| format!("trace log {}: {e}", path.display()))?;
    }
    let state = Arc::new(server_state);
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);

    let collector_listener = std::net::TcpListener::bind(collector_listen)
        .map_err(|e| format!("bind {collector_listen}: {e}"))?;
    let metrics_listener = std::net::TcpListener::bind(metrics_listen)
        .map_err(|e| format!("bind {metrics_listen}: {e}"))?;
    println!("collector listening on {collector_listen}");
    println!("metrics listening on {metrics_listen}");

    {
        let state = Arc::clone(&state);
        let clock = Arc::clone(&clock);
        std::thread::spawn(move || net::serve_collector(collector_listener, state, clock));
    }
    {
        let state = Arc::clone(&state);
        std::thread::spawn(move || net::serve_metrics(metrics_listener, state));
    }

    let mut last_scrape = std::time::Instant::now();
    let mut last_downsample = std::time::Instant::now();
    loop {
        std::thread::sleep(std::time::Duration::from_millis(500));
        net::pump_collector(&state, clock.now_us());
        if last_scrape.elapsed().as_secs() >= scrape_interval_s && !scrape_targets.is_empty() {
            last_scrape = std::time::Instant::now();
            let now_ms = clock.now_ms();
            let mut metrics = state.metrics.lock().unwrap();
            for target in &scrape_targets {
                let mut transport = net::TcpScrapeTarget {
                    addr: target.clone(),
                };
                metrics.scrape_target(target, &mut transport, now_ms);
            }
        }
        if last_downsample.elapsed().as_secs() >= 60 {
            last_downsample = std::time::Instant::now();
            state
                .metrics
                .lock()
                .unwrap()
                .store
                .downsample(clock.now_ms());
        }
    }
}
